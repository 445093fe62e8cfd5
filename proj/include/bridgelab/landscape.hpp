// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Loss-landscape diagnostics: 2D cross-sections along the training direction,
// finite-difference Hessian-vector products, Hutchinson trace, Lanczos Ritz
// spectra and scalar curvature metrics derived from them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/data.hpp"
#include "bridgelab/model.hpp"

namespace bridgelab {

using Vec = std::vector<double>;
using LossFn = std::function<double(const Vec&)>;
using GradFn = std::function<Vec(const Vec&)>;
using HvpFn = std::function<Vec(const Vec&)>;

inline constexpr const char* kLandscapeDefinitionsVersion = "bridgelab-landscape-v1";

// ---------------------------------------------------------------------------
// Directions and surfaces

struct Directions {
    ParamSet<double> d1;
    ParamSet<double> d2;
    // cos(d1, d2) after Gram-Schmidt and before any per-tensor rescaling.
    double cosine_before_rescale = 0.0;
    bool normalized = true;
};

// d1 = thetaT - theta0; d2 = seeded Gaussian orthogonalized against d1. With
// `normalize`, each direction is rescaled per named tensor to the norm of
// theta0's tensor (tensors where the direction is zero stay zero). Without it,
// d1 is left raw and d2 is scaled to ||d1||, so (1, 0) lands on thetaT.
// Throws ContractViolation on shape mismatch or thetaT == theta0.
Directions make_directions(const ParamSet<double>& theta0, const ParamSet<double>& thetaT, std::uint64_t seed,
                           bool normalize = true);

struct SurfaceResult {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<std::vector<double>> loss;  // loss[i][j] at (alphas[i], betas[j])

    // First row "alpha\beta,b0,b1,...", then one row per alpha.
    std::string csv() const;
};

inline constexpr std::size_t kMaxGridSide = 201;

// Evaluates loss(theta0 + a d1 + b d2) elementwise in that order. Grid points
// are independent and run on `threads` workers (0 = configured). Throws
// ContractViolation when a grid lacks 0 or exceeds kMaxGridSide.
SurfaceResult surface_grid(const std::function<double(const ParamSet<double>&)>& loss, const ParamSet<double>& theta0,
                           const Directions& dirs, const std::vector<double>& alphas, const std::vector<double>& betas,
                           std::size_t threads = 0);

// n points evenly spaced over [lo, hi]; 0 is inserted if missing.
std::vector<double> grid_axis(double lo, double hi, std::size_t n);

// ---------------------------------------------------------------------------
// Curvature

inline constexpr double kHvpStep = 1e-3;

// (g(theta + h v/|v|) - g(theta - h v/|v|)) |v| / (2h). Throws on v = 0.
Vec hvp(const GradFn& grad, const Vec& theta, const Vec& v, double h = kHvpStep);

struct TraceEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    std::size_t probes = 0;
    std::vector<double> samples;
};

// Mean of v^T H v over Rademacher probes; each probe draws from its own substream.
TraceEstimate hutchinson_trace(const HvpFn& hv, std::size_t dim, std::size_t probes, std::uint64_t seed,
                               std::size_t threads = 0);

struct LanczosResult {
    std::vector<std::vector<double>> ritz;  // per start, descending
    std::vector<std::size_t> steps;         // iterations completed per start

    std::vector<double> pooled() const;     // all starts, descending
};

// m-step Lanczos with full reorthogonalization from p seeded Gaussian starts.
// Stops early on breakdown (beta below 1e-10 times the running scale).
LanczosResult lanczos_spectrum(const HvpFn& hv, std::size_t dim, std::size_t m, std::size_t p, std::uint64_t seed,
                               std::size_t threads = 0);

// ---------------------------------------------------------------------------
// Metrics

// Least-squares slope of log(lambda_i) against log(i) over the top `top`
// positive values. Empty when fewer than three are positive.
std::optional<double> eigenvalue_decay_rate(std::vector<double> values, std::size_t top = 20);
// (sum |l|)^2 / (m sum l^2); 0 for an all-zero input.
double participation_ratio(const std::vector<double>& values);
// Fraction below -eps_rel * |lambda_max|.
double negative_ratio(const std::vector<double>& values, double eps_rel = 1e-6);
// lambda_1 - lambda_2 of the sorted values (0 for fewer than two).
double spectral_gap(std::vector<double> values);

struct NoiseConfig {
    std::vector<double> sigmas;  // default: 7 log-spaced points over [1e-3, 1e-1]
    std::size_t probes = 8;
    static NoiseConfig standard();
};

struct NoiseCurve {
    std::vector<double> sigmas;
    std::vector<double> excess;  // E[L(theta + s xi)] - L(theta)
    double auc = 0.0;            // trapezoid over log10(sigma)
};

NoiseCurve noise_sensitivity(const LossFn& loss, const Vec& theta, const NoiseConfig& cfg, std::uint64_t seed,
                             std::size_t threads = 0);

// Full-batch gradient-descent window theta_0 .. theta_steps at fixed lr.
std::vector<Vec> gradient_window(const GradFn& grad, const Vec& theta, std::size_t steps, double lr);

// Pearson correlation between g_t . (theta_{t+1} - theta_t) and
// L(theta_{t+1}) - L(theta_t) along the window.
double gradient_predictiveness(const LossFn& loss, const GradFn& grad, const std::vector<Vec>& window);

struct SpectrumConfig {
    std::size_t lanczos_steps = 32;
    std::size_t lanczos_starts = 8;
    std::size_t trace_probes = 64;
    double negative_eps = 1e-6;
    std::size_t decay_top = 20;
    NoiseConfig noise = NoiseConfig::standard();
    std::size_t window_steps = 32;
    double window_lr = 1e-2;
    std::uint64_t seed = 0;
    std::size_t threads = 0;

    nlohmann::json to_json() const;
};

struct SpectrumReport {
    LanczosResult lanczos;
    TraceEstimate trace;
    std::optional<double> decay_rate;
    double eigenvalue_kurtosis = 0.0;
    double spectral_gap = 0.0;        // mean over starts of lambda_1 - lambda_2
    double participation_ratio = 0.0; // mean over starts
    double negative_ratio = 0.0;      // pooled over starts
    NoiseCurve noise;
    std::optional<double> gradient_predictiveness;
    double max_parameter_sensitivity = 0.0;  // max |dL/dtheta_j| at theta
    std::vector<std::string> flags;
    SpectrumConfig config;

    nlohmann::json to_json() const;
};

// Computes every metric at `theta`. The gradient window is run only when
// `with_window` is set.
SpectrumReport landscape_metrics(const LossFn& loss, const GradFn& grad, const Vec& theta, const SpectrumConfig& cfg,
                                 bool with_window = true);

// Metrics from precomputed Ritz values and a trace (no model access).
void spectrum_metrics(const LanczosResult& lanczos, SpectrumReport& report, std::size_t decay_top = 20,
                      double negative_eps = 1e-6);

// ---------------------------------------------------------------------------
// Model objectives

// Full-batch mean cross-entropy of a classifier over `data` with `labels`, in
// 64-bit, as a function of the flattened parameters (canonical order).
class ClassifierObjective {
public:
    ClassifierObjective(const Model& model, const Dataset& data, std::vector<int> labels);

    double loss(const ParamSet<double>& params) const;
    double loss(const Vec& flat) const;
    Vec grad(const Vec& flat) const;
    const ParamSet<double>& layout() const { return layout_; }
    std::size_t dim() const { return layout_.numel(); }

private:
    ModelSpec spec_;
    ParamSet<double> layout_;
    TensorD inputs_;
    std::vector<int> labels_;
};

}  // namespace bridgelab

// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bridgelab/format.hpp"
#include "bridgelab/linalg.hpp"
#include "bridgelab/parallel.hpp"
#include "bridgelab/stats.hpp"

namespace bridgelab {

using nlohmann::json;

namespace {

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double tensor_norm(const TensorD& t) {
    double s = 0.0;
    for (const double v : t.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

void rescale_per_tensor(ParamSet<double>& dir, const ParamSet<double>& reference) {
    for (std::size_t i = 0; i < dir.count(); ++i) {
        TensorD& t = dir.tensor(i);
        const double n = tensor_norm(t);
        if (n == 0.0) {
            continue;
        }
        const double factor = tensor_norm(reference.tensor(i)) / n;
        for (double& v : t.data()) {
            v *= factor;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Directions and surfaces

Directions make_directions(const ParamSet<double>& theta0, const ParamSet<double>& thetaT, std::uint64_t seed,
                           bool normalize) {
    if (theta0.count() != thetaT.count()) {
        throw ContractViolation("make_directions: snapshots hold different tensor counts");
    }
    for (std::size_t i = 0; i < theta0.count(); ++i) {
        if (theta0.name(i) != thetaT.name(i) || theta0.tensor(i).shape() != thetaT.tensor(i).shape()) {
            throw ContractViolation("make_directions: snapshots differ at tensor '" + theta0.name(i) + "'");
        }
    }
    const Vec a = theta0.flatten();
    const Vec b = thetaT.flatten();
    Vec d1(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d1[i] = b[i] - a[i];
    }
    const double n1 = norm(d1);
    if (n1 == 0.0) {
        throw ContractViolation("make_directions: degenerate training direction (thetaT equals theta0)");
    }
    RngStream rng(seed, hash_string("landscape.d2"));
    Vec d2(a.size());
    for (double& v : d2) {
        v = rng.normal();
    }
    // Two Gram-Schmidt passes keep the residual cosine at rounding level.
    for (int pass = 0; pass < 2; ++pass) {
        const double c = dot(d2, d1) / (n1 * n1);
        for (std::size_t i = 0; i < d2.size(); ++i) {
            d2[i] -= c * d1[i];
        }
    }
    Directions dirs;
    dirs.normalized = normalize;
    dirs.cosine_before_rescale = dot(d1, d2) / (n1 * norm(d2));
    if (!normalize) {
        const double scale = n1 / norm(d2);
        for (double& v : d2) {
            v *= scale;
        }
    }
    dirs.d1 = theta0.zeros_like();
    dirs.d2 = theta0.zeros_like();
    dirs.d1.assign_flat(d1);
    dirs.d2.assign_flat(d2);
    if (normalize) {
        rescale_per_tensor(dirs.d1, theta0);
        rescale_per_tensor(dirs.d2, theta0);
    }
    return dirs;
}

std::vector<double> grid_axis(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) {
        throw ContractViolation("grid_axis: need n >= 2 and hi > lo");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    for (double& v : out) {
        if (std::abs(v) < 1e-12 * (hi - lo)) {
            v = 0.0;
        }
    }
    if (std::find(out.begin(), out.end(), 0.0) == out.end() && lo < 0.0 && hi > 0.0) {
        out.insert(std::upper_bound(out.begin(), out.end(), 0.0), 0.0);
    }
    return out;
}

std::string SurfaceResult::csv() const {
    std::vector<std::string> header{"alpha\\beta"};
    for (const double b : betas) {
        header.push_back(format_double(b));
    }
    CsvWriter out(header);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        std::vector<std::string> row{format_double(alphas[i])};
        for (const double v : loss[i]) {
            row.push_back(format_double(v));
        }
        out.row(row);
    }
    return out.str();
}

SurfaceResult surface_grid(const std::function<double(const ParamSet<double>&)>& loss, const ParamSet<double>& theta0,
                           const Directions& dirs, const std::vector<double>& alphas, const std::vector<double>& betas,
                           std::size_t threads) {
    auto has_zero = [](const std::vector<double>& g) { return std::find(g.begin(), g.end(), 0.0) != g.end(); };
    if (!has_zero(alphas) || !has_zero(betas)) {
        throw ContractViolation("surface_grid: both grids must contain 0");
    }
    if (alphas.size() > kMaxGridSide || betas.size() > kMaxGridSide) {
        throw ContractViolation("surface_grid: grid side exceeds " + std::to_string(kMaxGridSide));
    }
    SurfaceResult r;
    r.alphas = alphas;
    r.betas = betas;
    r.loss.assign(alphas.size(), std::vector<double>(betas.size(), 0.0));
    parallel_for(
        alphas.size() * betas.size(),
        [&](std::size_t unit) {
            const std::size_t i = unit / betas.size();
            const std::size_t j = unit % betas.size();
            ParamSet<double> p = theta0;
            for (std::size_t t = 0; t < p.count(); ++t) {
                TensorD& x = p.tensor(t);
                const TensorD& u = dirs.d1.tensor(t);
                const TensorD& v = dirs.d2.tensor(t);
                for (std::size_t k = 0; k < x.size(); ++k) {
                    x[k] = x[k] + alphas[i] * u[k] + betas[j] * v[k];
                }
            }
            r.loss[i][j] = loss(p);
        },
        threads);
    return r;
}

// ---------------------------------------------------------------------------
// Curvature

Vec hvp(const GradFn& grad, const Vec& theta, const Vec& v, double h) {
    if (v.size() != theta.size()) {
        throw ContractViolation("hvp: direction has " + std::to_string(v.size()) + " entries, parameters " +
                                std::to_string(theta.size()));
    }
    const double nv = norm(v);
    if (nv == 0.0) {
        throw ContractViolation("hvp: zero direction");
    }
    Vec plus = theta;
    Vec minus = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] += h * v[i] / nv;
        minus[i] -= h * v[i] / nv;
    }
    const Vec gp = grad(plus);
    const Vec gm = grad(minus);
    Vec out(theta.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (gp[i] - gm[i]) * nv / (2.0 * h);
    }
    return out;
}

TraceEstimate hutchinson_trace(const HvpFn& hv, std::size_t dim, std::size_t probes, std::uint64_t seed,
                               std::size_t threads) {
    if (probes == 0 || dim == 0) {
        throw ContractViolation("hutchinson_trace: need at least one probe and a non-empty space");
    }
    const RngStream root(seed, hash_string("landscape.hutchinson"));
    TraceEstimate t;
    t.probes = probes;
    t.samples.assign(probes, 0.0);
    parallel_for(
        probes,
        [&](std::size_t k) {
            RngStream rng = root.split(k);
            Vec v(dim);
            for (double& x : v) {
                x = rng.bernoulli(0.5) ? 1.0 : -1.0;
            }
            t.samples[k] = dot(v, hv(v));
        },
        threads);
    t.estimate = mean(t.samples);
    t.stderr_ = probes > 1 ? std::sqrt(variance(t.samples) * static_cast<double>(probes) /
                                       static_cast<double>(probes - 1) / static_cast<double>(probes))
                           : 0.0;
    return t;
}

std::vector<double> LanczosResult::pooled() const {
    std::vector<double> out;
    for (const auto& r : ritz) {
        out.insert(out.end(), r.begin(), r.end());
    }
    std::sort(out.rbegin(), out.rend());
    return out;
}

LanczosResult lanczos_spectrum(const HvpFn& hv, std::size_t dim, std::size_t m, std::size_t p, std::uint64_t seed,
                               std::size_t threads) {
    if (m < 2 || p == 0 || dim == 0) {
        throw ContractViolation("lanczos_spectrum: need m >= 2, p >= 1 and a non-empty space");
    }
    const std::size_t steps = std::min(m, dim);
    const RngStream root(seed, hash_string("landscape.lanczos"));
    LanczosResult result;
    result.ritz.resize(p);
    result.steps.resize(p);
    parallel_for(
        p,
        [&](std::size_t s) {
            RngStream rng = root.split(s);
            Vec q(dim);
            for (double& x : q) {
                x = rng.normal();
            }
            const double n0 = norm(q);
            for (double& x : q) {
                x /= n0;
            }
            std::vector<Vec> basis{q};
            std::vector<double> alpha;
            std::vector<double> beta;
            double scale = 0.0;
            for (std::size_t j = 0; j < steps; ++j) {
                Vec w = hv(basis[j]);
                const double a = dot(w, basis[j]);
                alpha.push_back(a);
                scale = std::max(scale, std::abs(a));
                // Full reorthogonalization against every stored vector, twice.
                for (int pass = 0; pass < 2; ++pass) {
                    for (const Vec& b : basis) {
                        const double c = dot(w, b);
                        for (std::size_t i = 0; i < dim; ++i) {
                            w[i] -= c * b[i];
                        }
                    }
                }
                if (j + 1 == steps) {
                    break;
                }
                const double bnorm = norm(w);
                scale = std::max(scale, bnorm);
                if (bnorm <= 1e-10 * std::max(scale, 1e-300)) {
                    break;
                }
                beta.push_back(bnorm);
                for (double& x : w) {
                    x /= bnorm;
                }
                basis.push_back(std::move(w));
            }
            const std::size_t k = alpha.size();
            TensorD t({k, k});
            for (std::size_t i = 0; i < k; ++i) {
                t(i, i) = alpha[i];
                if (i + 1 < k) {
                    t(i, i + 1) = beta[i];
                    t(i + 1, i) = beta[i];
                }
            }
            result.ritz[s] = eig_sym(t).values;
            result.steps[s] = k;
        },
        threads);
    return result;
}

// ---------------------------------------------------------------------------
// Metrics

std::optional<double> eigenvalue_decay_rate(std::vector<double> values, std::size_t top) {
    std::sort(values.rbegin(), values.rend());
    std::vector<double> x;
    std::vector<double> y;
    for (const double v : values) {
        if (v <= 0.0 || x.size() == top) {
            break;
        }
        x.push_back(std::log(static_cast<double>(x.size() + 1)));
        y.push_back(std::log(v));
    }
    if (x.size() < 3) {
        return std::nullopt;
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

double participation_ratio(const std::vector<double>& values) {
    double s1 = 0.0;
    double s2 = 0.0;
    for (const double v : values) {
        s1 += std::abs(v);
        s2 += v * v;
    }
    if (s2 == 0.0) {
        return 0.0;
    }
    return s1 * s1 / (static_cast<double>(values.size()) * s2);
}

double negative_ratio(const std::vector<double>& values, double eps_rel) {
    if (values.empty()) {
        return 0.0;
    }
    const double top = std::abs(*std::max_element(values.begin(), values.end()));
    const double eps = eps_rel * top;
    const auto neg = std::count_if(values.begin(), values.end(), [&](double v) { return v < -eps; });
    return static_cast<double>(neg) / static_cast<double>(values.size());
}

double spectral_gap(std::vector<double> values) {
    if (values.size() < 2) {
        return 0.0;
    }
    std::sort(values.rbegin(), values.rend());
    return values[0] - values[1];
}

NoiseConfig NoiseConfig::standard() {
    NoiseConfig c;
    for (int i = 0; i < 7; ++i) {
        c.sigmas.push_back(std::pow(10.0, -3.0 + 2.0 * i / 6.0));
    }
    return c;
}

NoiseCurve noise_sensitivity(const LossFn& loss, const Vec& theta, const NoiseConfig& cfg, std::uint64_t seed,
                             std::size_t threads) {
    if (cfg.sigmas.empty() || cfg.probes == 0) {
        throw ContractViolation("noise_sensitivity: empty sigma grid or zero probes");
    }
    const double base = loss(theta);
    const RngStream root(seed, hash_string("landscape.noise"));
    NoiseCurve c;
    c.sigmas = cfg.sigmas;
    std::vector<double> samples(cfg.sigmas.size() * cfg.probes);
    parallel_for(
        samples.size(),
        [&](std::size_t unit) {
            const std::size_t si = unit / cfg.probes;
            RngStream rng = root.split(unit);
            Vec x = theta;
            for (double& v : x) {
                v += cfg.sigmas[si] * rng.normal();
            }
            samples[unit] = loss(x);
        },
        threads);
    for (std::size_t si = 0; si < cfg.sigmas.size(); ++si) {
        double s = 0.0;
        for (std::size_t k = 0; k < cfg.probes; ++k) {
            s += samples[si * cfg.probes + k];
        }
        c.excess.push_back(s / static_cast<double>(cfg.probes) - base);
    }
    for (std::size_t i = 1; i < c.sigmas.size(); ++i) {
        const double dx = std::log10(c.sigmas[i]) - std::log10(c.sigmas[i - 1]);
        c.auc += 0.5 * dx * (c.excess[i] + c.excess[i - 1]);
    }
    return c;
}

std::vector<Vec> gradient_window(const GradFn& grad, const Vec& theta, std::size_t steps, double lr) {
    std::vector<Vec> window{theta};
    for (std::size_t t = 0; t < steps; ++t) {
        const Vec g = grad(window.back());
        Vec next = window.back();
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] -= lr * g[i];
        }
        window.push_back(std::move(next));
    }
    return window;
}

double gradient_predictiveness(const LossFn& loss, const GradFn& grad, const std::vector<Vec>& window) {
    if (window.size() < 3) {
        throw ContractViolation("gradient_predictiveness: need at least two steps");
    }
    std::vector<double> predicted;
    std::vector<double> realized;
    double prev = loss(window[0]);
    for (std::size_t t = 0; t + 1 < window.size(); ++t) {
        const Vec g = grad(window[t]);
        double p = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            p += g[i] * (window[t + 1][i] - window[t][i]);
        }
        const double next = loss(window[t + 1]);
        predicted.push_back(p);
        realized.push_back(next - prev);
        prev = next;
    }
    return pearson(predicted, realized);
}

json SpectrumConfig::to_json() const {
    return {{"lanczos_steps", lanczos_steps}, {"lanczos_starts", lanczos_starts}, {"trace_probes", trace_probes},
            {"negative_eps", negative_eps},   {"decay_top", decay_top},           {"noise_sigmas", noise.sigmas},
            {"noise_probes", noise.probes},   {"window_steps", window_steps},     {"window_lr", window_lr},
            {"hvp_step", kHvpStep},           {"seed", seed}};
}

void spectrum_metrics(const LanczosResult& lanczos, SpectrumReport& report, std::size_t decay_top,
                      double negative_eps) {
    double gap = 0.0;
    double pr = 0.0;
    double decay = 0.0;
    std::size_t decay_count = 0;
    for (const auto& r : lanczos.ritz) {
        gap += spectral_gap(r);
        pr += participation_ratio(r);
        if (const auto d = eigenvalue_decay_rate(r, decay_top)) {
            decay += *d;
            ++decay_count;
        }
    }
    const auto starts = static_cast<double>(lanczos.ritz.size());
    report.spectral_gap = gap / starts;
    report.participation_ratio = pr / starts;
    if (decay_count > 0) {
        report.decay_rate = decay / static_cast<double>(decay_count);
    } else {
        report.flags.push_back("decay_rate omitted: fewer than three positive Ritz values");
    }
    const std::vector<double> pooled = lanczos.pooled();
    report.negative_ratio = negative_ratio(pooled, negative_eps);
    if (pooled.size() >= 2) {
        const double m = mean(pooled);
        double m2 = 0.0;
        double m4 = 0.0;
        for (const double v : pooled) {
            m2 += (v - m) * (v - m);
            m4 += std::pow(v - m, 4);
        }
        m2 /= static_cast<double>(pooled.size());
        m4 /= static_cast<double>(pooled.size());
        report.eigenvalue_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    }
}

SpectrumReport landscape_metrics(const LossFn& loss, const GradFn& grad, const Vec& theta, const SpectrumConfig& cfg,
                                 bool with_window) {
    SpectrumReport report;
    report.config = cfg;
    const HvpFn hv = [&](const Vec& v) { return hvp(grad, theta, v); };
    report.lanczos = lanczos_spectrum(hv, theta.size(), cfg.lanczos_steps, cfg.lanczos_starts, cfg.seed, cfg.threads);
    report.trace = hutchinson_trace(hv, theta.size(), cfg.trace_probes, cfg.seed, cfg.threads);
    spectrum_metrics(report.lanczos, report, cfg.decay_top, cfg.negative_eps);
    report.noise = noise_sensitivity(loss, theta, cfg.noise, cfg.seed, cfg.threads);
    if (with_window) {
        report.gradient_predictiveness =
            gradient_predictiveness(loss, grad, gradient_window(grad, theta, cfg.window_steps, cfg.window_lr));
    }
    const Vec g = grad(theta);
    for (const double v : g) {
        report.max_parameter_sensitivity = std::max(report.max_parameter_sensitivity, std::abs(v));
    }
    return report;
}

json SpectrumReport::to_json() const {
    json ritz = json::array();
    for (const auto& r : lanczos.ritz) {
        ritz.push_back(r);
    }
    return {{"definitions_version", kLandscapeDefinitionsVersion},
            {"config", config.to_json()},
            {"ritz", ritz},
            {"lanczos_steps_completed", lanczos.steps},
            {"trace", {{"estimate", trace.estimate}, {"stderr", trace.stderr_}, {"probes", trace.probes}}},
            {"metrics",
             {{"eigenvalue_decay_rate", decay_rate ? json(*decay_rate) : json(nullptr)},
              {"eigenvalue_kurtosis", eigenvalue_kurtosis},
              {"hessian_trace", trace.estimate},
              {"spectral_gap", spectral_gap},
              {"participation_ratio", participation_ratio},
              {"noise_sensitivity_auc", noise.auc},
              {"gradient_predictiveness",
               gradient_predictiveness ? json(*gradient_predictiveness) : json(nullptr)},
              {"max_parameter_sensitivity", max_parameter_sensitivity},
              {"negative_eigenvalue_ratio", negative_ratio}}},
            {"noise_curve", {{"sigma", noise.sigmas}, {"excess_loss", noise.excess}}},
            {"flags", flags}};
}

// ---------------------------------------------------------------------------
// Model objectives

ClassifierObjective::ClassifierObjective(const Model& model, const Dataset& data, std::vector<int> labels)
    : spec_(model.spec), layout_(model.params.cast<double>()), inputs_(data.inputs.cast<double>()),
      labels_(std::move(labels)) {
    if (labels_.size() != data.size()) {
        throw ContractViolation("ClassifierObjective: label count differs from dataset size");
    }
}

double ClassifierObjective::loss(const ParamSet<double>& params) const {
    Graph<double> g;
    const BoundParams bound = bind_params(g, params, {});
    const Var l = g.cross_entropy(classifier_graph(g, spec_, bound, inputs_).logits, labels_);
    return g.value(l)[0];
}

double ClassifierObjective::loss(const Vec& flat) const {
    ParamSet<double> p = layout_;
    p.assign_flat(flat);
    return loss(p);
}

Vec ClassifierObjective::grad(const Vec& flat) const {
    ParamSet<double> p = layout_;
    p.assign_flat(flat);
    Graph<double> g;
    const BoundParams bound = bind_params(g, p, std::vector<bool>(p.count(), true));
    const Var l = g.cross_entropy(classifier_graph(g, spec_, bound, inputs_).logits, labels_);
    g.backward(l);
    Vec out;
    out.reserve(flat.size());
    for (std::size_t i = 0; i < p.count(); ++i) {
        const TensorD* gv = g.grad(bound.vars[i]);
        if (gv == nullptr) {
            out.insert(out.end(), p.tensor(i).size(), 0.0);
        } else {
            out.insert(out.end(), gv->data().begin(), gv->data().end());
        }
    }
    return out;
}

}  // namespace bridgelab

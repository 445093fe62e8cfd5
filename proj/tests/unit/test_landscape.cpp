// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "bridgelab/landscape.hpp"
#include "bridgelab/linalg.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Dense symmetric matrix stored row-major, used as an explicit oracle.
struct Quadratic {
    std::size_t n;
    std::vector<double> a;

    Vec mul(const Vec& v) const {
        Vec out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out[i] += a[i * n + j] * v[j];
            }
        }
        return out;
    }
    double loss(const Vec& x) const {
        const Vec ax = mul(x);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += x[i] * ax[i];
        }
        return 0.5 * s;
    }
    GradFn grad() const {
        return [this](const Vec& x) { return mul(x); };
    }
    HvpFn exact() const {
        return [this](const Vec& v) { return mul(v); };
    }
};

Quadratic diagonal(const std::vector<double>& d) {
    Quadratic q{d.size(), std::vector<double>(d.size() * d.size(), 0.0)};
    for (std::size_t i = 0; i < d.size(); ++i) {
        q.a[i * d.size() + i] = d[i];
    }
    return q;
}

// Q diag(d) Q^T with a seeded Haar rotation Q.
Quadratic rotated(const std::vector<double>& d, std::uint64_t seed) {
    const std::size_t n = d.size();
    const TensorD q = random_orthogonal(n, RngStream(seed, 5));
    Quadratic out{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += q(i, k) * d[k] * q(j, k);
            }
            out.a[i * n + j] = s;
        }
    }
    return out;
}

Quadratic random_symmetric(std::size_t n, std::uint64_t seed) {
    Quadratic q{n, std::vector<double>(n * n)};
    RngStream rng(seed, 6);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = rng.normal();
            q.a[i * n + j] = v;
            q.a[j * n + i] = v;
        }
    }
    return q;
}

Vec random_vec(std::size_t n, std::uint64_t seed) {
    Vec v(n);
    RngStream rng(seed, 7);
    for (double& x : v) {
        x = rng.normal();
    }
    return v;
}

ParamSet<double> two_tensor_set(double a, double b) {
    ParamSet<double> p;
    p.add("h.0.w", TensorD({2, 3}, {a, 2 * a, -a, 0.5, 1, a}));
    p.add("h.0.b", TensorD({2}, {b, -b}));
    return p;
}

double set_norm(const TensorD& t) {
    double s = 0.0;
    for (const double v : t.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("directions: orthogonal, per-tensor normalized, seeded", "[landscape]") {
    const ParamSet<double> t0 = two_tensor_set(1.0, 0.3);
    const ParamSet<double> tT = two_tensor_set(1.4, -0.2);
    const Directions d = make_directions(t0, tT, 9);
    CHECK(std::abs(d.cosine_before_rescale) < 1e-10);
    for (std::size_t i = 0; i < t0.count(); ++i) {
        CHECK_THAT(set_norm(d.d2.tensor(i)), WithinRel(set_norm(t0.tensor(i)), 1e-10));
        CHECK_THAT(set_norm(d.d1.tensor(i)), WithinRel(set_norm(t0.tensor(i)), 1e-10));
    }
    CHECK(make_directions(t0, tT, 9).d2.flatten() == d.d2.flatten());
    CHECK(make_directions(t0, tT, 10).d2.flatten() != d.d2.flatten());
    CHECK_THROWS_AS(make_directions(t0, t0, 9), ContractViolation);

    ParamSet<double> other;
    other.add("h.0.w", TensorD({3, 2}));
    other.add("h.0.b", TensorD({2}));
    CHECK_THROWS_AS(make_directions(t0, other, 9), ContractViolation);
}

TEST_CASE("surface grid: identity point, raw training direction, paraboloid", "[landscape]") {
    const ParamSet<double> t0 = two_tensor_set(0.7, 0.1);
    const ParamSet<double> tT = two_tensor_set(-0.4, 0.9);
    // Quadratic toy loss L(theta) = sum_k c_k theta_k^2.
    const std::vector<double> c{1.0, 0.5, 2.0, 0.1, 3.0, 1.5, 0.25, 4.0};
    auto loss = [&](const ParamSet<double>& p) {
        const Vec x = p.flatten();
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            s += c[k] * x[k] * x[k];
        }
        return s;
    };
    const auto alphas = grid_axis(-1.0, 1.0, 9);
    const auto betas = grid_axis(-0.5, 1.5, 5);
    REQUIRE(std::find(betas.begin(), betas.end(), 0.0) != betas.end());

    const Directions dn = make_directions(t0, tT, 3);
    const SurfaceResult s = surface_grid(loss, t0, dn, alphas, betas, 2);
    const auto ia = static_cast<std::size_t>(std::find(alphas.begin(), alphas.end(), 0.0) - alphas.begin());
    const auto ib = static_cast<std::size_t>(std::find(betas.begin(), betas.end(), 0.0) - betas.begin());
    CHECK(s.loss[ia][ib] == loss(t0));

    // Closed form: sum_k c_k (x_k + a u_k + b v_k)^2 expanded as a quadratic in (a, b).
    const Vec x = t0.flatten();
    const Vec u = dn.d1.flatten();
    const Vec v = dn.d2.flatten();
    double l0 = 0, la = 0, lb = 0, laa = 0, lbb = 0, lab = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        l0 += c[k] * x[k] * x[k];
        la += 2 * c[k] * x[k] * u[k];
        lb += 2 * c[k] * x[k] * v[k];
        laa += c[k] * u[k] * u[k];
        lbb += c[k] * v[k] * v[k];
        lab += 2 * c[k] * u[k] * v[k];
    }
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        for (std::size_t j = 0; j < betas.size(); ++j) {
            const double a = alphas[i];
            const double b = betas[j];
            CHECK_THAT(s.loss[i][j], WithinAbs(l0 + la * a + lb * b + laa * a * a + lbb * b * b + lab * a * b, 1e-10));
        }
    }

    const Directions raw = make_directions(t0, tT, 3, false);
    const SurfaceResult r = surface_grid(loss, t0, raw, {0.0, 1.0}, {0.0}, 1);
    CHECK_THAT(r.loss[1][0], WithinAbs(loss(tT), 1e-12));

    // Thread count does not change any entry.
    CHECK(surface_grid(loss, t0, dn, alphas, betas, 1).loss == s.loss);

    const std::string csv = s.csv();
    CHECK(csv.rfind("alpha\\beta,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(alphas.size() + 1));

    CHECK_THROWS_AS(surface_grid(loss, t0, dn, {0.5, 1.0}, betas), ContractViolation);
    CHECK_THROWS_AS(surface_grid(loss, t0, dn, grid_axis(-1, 1, 203), betas), ContractViolation);
}

TEST_CASE("hvp against explicit matrices", "[landscape]") {
    // L = |theta|^2 has Hessian 2I.
    const GradFn sq = [](const Vec& x) {
        Vec g(x);
        for (double& v : g) {
            v *= 2.0;
        }
        return g;
    };
    const Vec theta = random_vec(12, 1);
    const Vec v = random_vec(12, 2);
    const Vec hv = hvp(sq, theta, v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK_THAT(hv[i], WithinAbs(2.0 * v[i], 1e-8));
    }

    const Quadratic q = random_symmetric(20, 3);
    const Vec t = random_vec(20, 4);
    const Vec v1 = random_vec(20, 5);
    const Vec v2 = random_vec(20, 6);
    const Vec av = q.mul(v1);
    const Vec h1 = hvp(q.grad(), t, v1);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK_THAT(h1[i], WithinAbs(av[i], 1e-6));
    }
    Vec sum(20);
    for (std::size_t i = 0; i < 20; ++i) {
        sum[i] = v1[i] + v2[i];
    }
    const Vec h2 = hvp(q.grad(), t, v2);
    const Vec hs = hvp(q.grad(), t, sum);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK_THAT(hs[i], WithinAbs(h1[i] + h2[i], 1e-5));
    }

    CHECK_THROWS_AS(hvp(sq, theta, Vec(12, 0.0)), ContractViolation);
    CHECK_THROWS_AS(hvp(sq, theta, Vec(11, 1.0)), ContractViolation);
}

TEST_CASE("hutchinson trace", "[landscape]") {
    const HvpFn two = [](const Vec& v) {
        Vec out(v);
        for (double& x : out) {
            x *= 2.0;
        }
        return out;
    };
    const TraceEstimate e = hutchinson_trace(two, 16, 10, 1);
    CHECK(e.estimate == 32.0);
    CHECK(e.stderr_ == 0.0);
    for (const double s : e.samples) {
        CHECK(s == 32.0);
    }

    std::vector<double> d(64);
    for (std::size_t i = 0; i < 64; ++i) {
        d[i] = static_cast<double>(i + 1);
    }
    const Quadratic q = rotated(d, 11);
    const TraceEstimate r = hutchinson_trace(q.exact(), 64, 256, 2);
    CHECK_THAT(r.estimate, WithinRel(2080.0, 0.05));
    CHECK(hutchinson_trace(q.exact(), 64, 256, 2, 1).samples == r.samples);

    // Unbiased: the mean over 50 seeds lies within 2 standard errors of the exact trace.
    std::vector<double> estimates;
    for (std::uint64_t seed = 100; seed < 150; ++seed) {
        estimates.push_back(hutchinson_trace(q.exact(), 64, 16, seed).estimate);
    }
    double m = 0.0;
    for (const double v : estimates) {
        m += v;
    }
    m /= 50.0;
    double var = 0.0;
    for (const double v : estimates) {
        var += (v - m) * (v - m);
    }
    const double se = std::sqrt(var / 49.0 / 50.0);
    CHECK(std::abs(m - 2080.0) <= 2.0 * se);
}

TEST_CASE("lanczos spectra", "[landscape]") {
    const Quadratic d3 = diagonal({5.0, 2.0, 1.0});
    const LanczosResult l = lanczos_spectrum(d3.exact(), 3, 3, 2, 4);
    for (const auto& r : l.ritz) {
        REQUIRE(r.size() == 3);
        CHECK_THAT(r[0], WithinAbs(5.0, 1e-8));
        CHECK_THAT(r[1], WithinAbs(2.0, 1e-8));
        CHECK_THAT(r[2], WithinAbs(1.0, 1e-8));
    }
    SpectrumReport rep;
    spectrum_metrics(l, rep);
    CHECK_THAT(rep.spectral_gap, WithinAbs(3.0, 1e-8));
    CHECK(rep.negative_ratio == 0.0);

    const LanczosResult ind = lanczos_spectrum(diagonal({3.0, -1.0}).exact(), 2, 2, 1, 1);
    CHECK_THAT(ind.ritz[0][1], WithinAbs(-1.0, 1e-10));
    CHECK(negative_ratio(ind.ritz[0]) == 0.5);

    // SPD fixture: top Ritz value against power iteration on the explicit matrix.
    Quadratic g = random_symmetric(128, 8);
    Quadratic spd{128, std::vector<double>(128 * 128, 0.0)};
    for (std::size_t i = 0; i < 128; ++i) {
        for (std::size_t j = 0; j < 128; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 128; ++k) {
                s += g.a[i * 128 + k] * g.a[j * 128 + k];
            }
            spd.a[i * 128 + j] = s / 128.0 + (i == j ? 0.1 : 0.0);
        }
    }
    Vec b = random_vec(128, 9);
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
        Vec nb = spd.mul(b);
        double n = 0.0;
        for (const double v : nb) {
            n += v * v;
        }
        n = std::sqrt(n);
        for (double& v : nb) {
            v /= n;
        }
        b = nb;
        const Vec ab = spd.mul(b);
        double next = 0.0;
        for (std::size_t i = 0; i < 128; ++i) {
            next += b[i] * ab[i];
        }
        if (it > 100 && std::abs(next - lambda) < 1e-15 * next) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    const LanczosResult big = lanczos_spectrum(spd.exact(), 128, 64, 3, 2);
    TensorD dense({128, 128});
    std::copy(spd.a.begin(), spd.a.end(), dense.data().begin());
    const auto eig = eig_sym(dense).values;
    const double lo = *std::min_element(eig.begin(), eig.end());
    const double hi = *std::max_element(eig.begin(), eig.end());
    for (const auto& r : big.ritz) {
        CHECK_THAT(r.front(), WithinRel(lambda, 1e-6));
        for (const double v : r) {
            CHECK(v >= lo - 1e-9 * hi);
            CHECK(v <= hi + 1e-9 * hi);
        }
    }
    SpectrumReport spd_rep;
    spectrum_metrics(big, spd_rep);
    CHECK(spd_rep.negative_ratio == 0.0);

    // Breakdown: a rank-one operator stops after the Krylov space is exhausted.
    const Quadratic one = diagonal({4.0, 0.0, 0.0, 0.0, 0.0});
    const LanczosResult early = lanczos_spectrum(one.exact(), 5, 5, 1, 3);
    CHECK(early.steps[0] < 5);
    CHECK_THAT(early.ritz[0].front(), WithinAbs(4.0, 1e-10));

    CHECK(lanczos_spectrum(spd.exact(), 128, 16, 3, 2, 1).ritz == lanczos_spectrum(spd.exact(), 128, 16, 3, 2, 3).ritz);
    CHECK_THROWS_AS(lanczos_spectrum(d3.exact(), 3, 1, 1, 1), ContractViolation);
}

TEST_CASE("scalar metric closed forms", "[landscape]") {
    const std::vector<double> equal(6, 2.5);
    CHECK_THAT(participation_ratio(equal), WithinAbs(1.0, 1e-15));
    CHECK(spectral_gap(equal) == 0.0);

    std::vector<double> inv_sq;
    for (int i = 1; i <= 25; ++i) {
        inv_sq.push_back(1.0 / (i * i));
    }
    std::reverse(inv_sq.begin(), inv_sq.end());
    CHECK_THAT(*eigenvalue_decay_rate(inv_sq), WithinAbs(-2.0, 1e-6));
    CHECK_FALSE(eigenvalue_decay_rate({3.0, 1.0, -1.0, -2.0}).has_value());

    LanczosResult few;
    few.ritz = {{3.0, 1.0, -1.0}};
    SpectrumReport rep;
    spectrum_metrics(few, rep);
    CHECK_FALSE(rep.decay_rate.has_value());
    CHECK(rep.flags.size() == 1);
    CHECK_THAT(rep.negative_ratio, WithinAbs(1.0 / 3.0, 1e-15));

    // One dominant value: PR = 1/m.
    CHECK_THAT(participation_ratio({7.0, 0.0, 0.0, 0.0}), WithinAbs(0.25, 1e-15));
    const double nr = negative_ratio({1.0, -1e-8, -0.5, 2.0});
    CHECK(nr == 0.25);
}

TEST_CASE("noise sensitivity and gradient predictiveness on a quadratic", "[landscape]") {
    const Quadratic q = diagonal({1.0, 2.0, 3.0, 4.0});
    const LossFn loss = [&](const Vec& x) { return q.loss(x); };
    const Vec theta{0.5, -0.5, 0.2, 0.1};

    // At the minimum E[L(s xi)] - L(0) = s^2 tr(A) / 2 = 5 s^2; per-probe
    // spread is s^2 sqrt(sum a^2 / 2), so 20000 probes sit well inside 5%.
    NoiseConfig many = NoiseConfig::standard();
    many.probes = 20000;
    const NoiseCurve c = noise_sensitivity(loss, Vec(4, 0.0), many, 3);
    REQUIRE(c.sigmas.size() == 7);
    CHECK_THAT(c.sigmas.front(), WithinRel(1e-3, 1e-12));
    CHECK_THAT(c.sigmas.back(), WithinRel(1e-1, 1e-12));
    for (std::size_t i = 0; i < c.sigmas.size(); ++i) {
        const double s = c.sigmas[i];
        CHECK_THAT(c.excess[i], WithinRel(5.0 * s * s, 0.05));
    }
    CHECK(noise_sensitivity(loss, theta, NoiseConfig::standard(), 3).auc ==
          noise_sensitivity(loss, theta, NoiseConfig::standard(), 3, 1).auc);

    const auto window = gradient_window(q.grad(), theta, 32, 0.05);
    CHECK(window.size() == 33);
    const double gp = gradient_predictiveness(loss, q.grad(), window);
    CHECK(gp > 0.99);
    CHECK(gp <= 1.0 + 1e-12);
}

TEST_CASE("landscape metrics on a quadratic are reproducible and complete", "[landscape]") {
    std::vector<double> d;
    for (int i = 1; i <= 40; ++i) {
        d.push_back(i % 7 == 0 ? -0.5 : 10.0 / i);
    }
    const Quadratic q = rotated(d, 5);
    const LossFn loss = [&](const Vec& x) { return q.loss(x); };
    const Vec theta = random_vec(40, 12);
    SpectrumConfig cfg;
    cfg.trace_probes = 32;
    const SpectrumReport a = landscape_metrics(loss, q.grad(), theta, cfg);
    const SpectrumReport b = landscape_metrics(loss, q.grad(), theta, cfg);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.negative_ratio > 0.0);
    CHECK(a.negative_ratio <= 1.0);
    CHECK(a.spectral_gap >= 0.0);
    REQUIRE(a.decay_rate.has_value());
    CHECK(*a.decay_rate < 0.0);
    double tr = 0.0;
    for (const double v : d) {
        tr += v;
    }
    CHECK(std::abs(a.trace.estimate - tr) <= 4.0 * a.trace.stderr_ + 1e-6);
    const Vec g = q.mul(theta);
    double gmax = 0.0;
    for (const double v : g) {
        gmax = std::max(gmax, std::abs(v));
    }
    CHECK_THAT(a.max_parameter_sensitivity, WithinAbs(gmax, 1e-12));

    const auto j = a.to_json();
    CHECK(j.at("definitions_version") == kLandscapeDefinitionsVersion);
    CHECK(j.at("config").at("lanczos_steps") == 32);
    CHECK(j.at("config").at("lanczos_starts") == 8);
    CHECK(j.at("config").at("negative_eps") == 1e-6);
    CHECK(j.at("config").at("noise_sigmas").size() == 7);
    CHECK(j.at("metrics").size() == 9);

    const SpectrumReport nw = landscape_metrics(loss, q.grad(), theta, cfg, false);
    CHECK_FALSE(nw.gradient_predictiveness.has_value());
    CHECK(nw.to_json().at("metrics").at("gradient_predictiveness").is_null());
}

TEST_CASE("classifier objective gradient matches finite differences", "[landscape]") {
    ModelSpec spec;
    spec.n_layers = 1;
    spec.d_model = 8;
    spec.n_heads = 2;
    const Model m = build_classifier(spec, RngStream(1, 1));
    const Dataset data = synthetic_images(6, 10, 8, 2);
    const ClassifierObjective obj(m, data, data.labels);
    const Vec theta = obj.layout().flatten();
    CHECK(obj.dim() == theta.size());
    const Vec g = obj.grad(theta);
    RngStream rng(4, 4);
    for (int k = 0; k < 10; ++k) {
        const std::size_t i = rng.uniform_index(theta.size());
        Vec p = theta;
        Vec mnus = theta;
        p[i] += 1e-5;
        mnus[i] -= 1e-5;
        const double fd = (obj.loss(p) - obj.loss(mnus)) / 2e-5;
        CHECK_THAT(g[i], WithinAbs(fd, 1e-6 + 1e-4 * std::abs(fd)));
    }
    CHECK(obj.loss(obj.layout()) == obj.loss(theta));
}

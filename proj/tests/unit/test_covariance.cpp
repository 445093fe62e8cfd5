// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bridgelab/covariance.hpp"
#include "bridgelab/data.hpp"
#include "bridgelab/stats.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SymmetricEigen diagonal_system(const std::vector<double>& values) {
    SymmetricEigen e;
    e.values = values;
    e.vectors = identity(values.size());
    return e;
}

}  // namespace

TEST_CASE("weight second moment examples", "[covariance]") {
    const TensorD eye = identity(4);
    const TensorD s = weight_second_moment(eye);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(s(i, j) == (i == j ? 0.25 : 0.0));
        }
    }

    const std::vector<double> r{1.0, -2.0, 0.5};
    TensorD rep({5, 3});
    for (std::size_t k = 0; k < 5; ++k) {
        for (std::size_t j = 0; j < 3; ++j) {
            rep(k, j) = r[j];
        }
    }
    const TensorD rr = weight_second_moment(rep);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK_THAT(rr(i, j), WithinAbs(r[i] * r[j], 1e-15));
        }
    }

    std::vector<std::string> warnings;
    weight_second_moment(TensorD({2, 3}, {1, 0, 0, 0, 1, 0}), &warnings);
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(weight_second_moment(TensorD({3})), ContractViolation);
}

TEST_CASE("gaussian weight rows give v * I", "[covariance]") {
    const double v = 0.3;
    TensorD w({100000, 8});
    RngStream rng(17, 2);
    for (double& x : w.data()) {
        x = rng.normal(0.0, std::sqrt(v));
    }
    const TensorD s = weight_second_moment(w);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK_THAT(s(i, i), WithinRel(v, 0.03));
        for (std::size_t j = 0; j < 8; ++j) {
            if (i != j) {
                CHECK(std::abs(s(i, j)) < 0.03 * v);
            }
        }
    }
}

TEST_CASE("second moment is positive semidefinite", "[covariance]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TensorD w({3, 6});  // rank deficient on purpose
        RngStream rng(seed, 3);
        for (double& x : w.data()) {
            x = rng.normal();
        }
        const auto e = eig_sym(weight_second_moment(w));
        CHECK(e.values.back() >= -1e-10);
    }
}

TEST_CASE("subspace alignment bounds and invariances", "[covariance]") {
    const TensorD q = random_orthogonal(8, RngStream(4, 4));
    const TensorD top = leading_columns(q, 3);
    CHECK_THAT(subspace_alignment(top, top), WithinAbs(1.0, 1e-12));

    TensorD complement({8, 3});
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            complement(i, j) = q(i, 5 + j);
        }
    }
    CHECK_THAT(subspace_alignment(top, complement), WithinAbs(0.0, 1e-12));

    // Mixing the columns of one frame by a k x k rotation leaves the score unchanged.
    const TensorD mix = random_orthogonal(3, RngStream(4, 5));
    const TensorD other = leading_columns(random_orthogonal(8, RngStream(4, 6)), 3);
    CHECK_THAT(subspace_alignment(top, matmul(other, mix)), WithinAbs(subspace_alignment(top, other), 1e-12));

    TensorD skew = top;
    skew(0, 0) += 1e-3;
    CHECK_THROWS_AS(subspace_alignment(skew, top), ContractViolation);
    CHECK_THROWS_AS(subspace_alignment(top, leading_columns(q, 2)), ContractViolation);
}

TEST_CASE("random frame baseline averages k/d", "[covariance]") {
    const TensorD ref = leading_columns(identity(8), 4);
    const BaselineSummary b = random_alignment_baseline(ref, 1000, 3);
    CHECK(b.draws == 1000);
    // Haar-random 4-frames in R^8: mean 1/2, sd about 0.09, so the 1000-draw
    // mean has standard error below 0.003.
    CHECK_THAT(b.mean, WithinAbs(0.5, 0.015));
    CHECK(b.p05 < b.mean);
    CHECK(b.p95 > b.mean);

    const TensorD ref2 = leading_columns(identity(10), 2);
    CHECK_THAT(random_alignment_baseline(ref2, 1000, 4).mean, WithinAbs(0.2, 0.015));
}

TEST_CASE("hungarian assignment matches brute force", "[covariance]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed, 9);
        TensorD score({6, 6});
        for (double& x : score.data()) {
            x = rng.uniform();
        }
        std::vector<std::size_t> perm(6);
        std::iota(perm.begin(), perm.end(), 0);
        double best = -1.0;
        do {
            double s = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                s += score(i, perm[i]);
            }
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        const auto a = max_weight_assignment(score);
        double got = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            got += score(i, a[i]);
        }
        CHECK_THAT(got, WithinAbs(best, 1e-12));
        std::vector<std::size_t> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    }
}

TEST_CASE("spearman with ties", "[covariance]") {
    const std::vector<double> x{1, 2, 2, 3};
    CHECK(average_ranks(x) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    const std::vector<double> y{10, 20, 30, 40};
    // Pearson of (1, 2.5, 2.5, 4) with (1, 2, 3, 4): 4.5 / sqrt(4.5 * 5).
    CHECK_THAT(spearman(x, y), WithinAbs(4.5 / std::sqrt(4.5 * 5.0), 1e-15));
    const std::vector<double> flat{1, 1, 1, 1};
    CHECK(spearman(flat, y) == 0.0);
}

TEST_CASE("transfer curve pairing", "[covariance]") {
    const std::vector<double> sigma{9, 4, 2, 1};
    SymmetricEigen w;
    w.values = {18, 8, 4, 2};
    w.vectors = identity(4);
    const TransferCurve up = transfer_curve(diagonal_system(sigma), w);
    CHECK(up.spearman == 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(up.pairs[i].tau2 == 2 * sigma[i]);
        CHECK(up.pairs[i].overlap == 1.0);
    }

    // Weight eigenvectors in reverse order: the largest tau sits on the
    // smallest-sigma axis.
    SymmetricEigen rev;
    rev.values = {4, 3, 2, 1};
    rev.vectors = TensorD({4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
        rev.vectors(i, 3 - i) = 1.0;
    }
    const TransferCurve down = transfer_curve(diagonal_system(sigma), rev);
    CHECK(down.spearman == -1.0);
    CHECK(down.pairs[0].weight_index == 3);

    const std::string csv = up.csv();
    CHECK(csv.rfind("sigma,tau\n3,", 0) == 0);
}

TEST_CASE("degenerate blocks sort matched tau values", "[covariance]") {
    CHECK(degenerate_blocks({5, 5, 3, 1, 1, 1}) ==
          std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {2, 3}, {3, 6}});
    SymmetricEigen w;
    w.values = {4, 3, 2, 1};
    w.vectors = TensorD({4, 4});
    // sigma block {1, 1} at indices 2, 3 matched to tau 2 and 4 in the wrong order.
    w.vectors(0, 1) = 1.0;
    w.vectors(1, 3) = 1.0;
    w.vectors(2, 2) = 1.0;
    w.vectors(3, 0) = 1.0;
    const TransferCurve c = transfer_curve(diagonal_system({5, 2, 1, 1}), w);
    CHECK(c.pairs[2].tau2 == 4.0);
    CHECK(c.pairs[3].tau2 == 2.0);
}

TEST_CASE("covariance-preserving rotation", "[covariance]") {
    const std::vector<double> ev{16, 8, 4, 2, 1, 1, 1, 1};
    const GaussianSource src = gaussian_source(ev, 1, 4, 0);
    const TensorD g = covariance_preserving_rotation(src.rotation, ev, 7);
    CHECK(orthonormality_error(g) < 1e-12);
    const TensorD back = matmul(matmul(transpose(g), src.covariance), g);
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK_THAT(back[i], WithinAbs(src.covariance[i], 1e-12));
    }
    CHECK(frobenius_norm(g) > 0.0);
    bool differs_from_identity = false;
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            differs_from_identity |= std::abs(g(i, j) - (i == j ? 1.0 : 0.0)) > 1e-3;
        }
    }
    CHECK(differs_from_identity);
}

TEST_CASE("theorem check: small run is deterministic; isotropic is flagged", "[covariance]") {
    TheoremConfig cfg;
    cfg.samples = 256;
    cfg.hidden = 32;
    cfg.train.epochs = 3;
    cfg.baseline_draws = 50;
    const auto a = run_theorem_check(cfg);
    const auto b = run_theorem_check(cfg);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK_FALSE(a.degenerate);
    CHECK(a.alignment_after.size() == 7);
    REQUIRE(a.rotated_alignment.has_value());
    for (const double s : a.alignment_after) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    CHECK(std::is_sorted(a.sigma2.rbegin(), a.sigma2.rend()));
    CHECK(std::is_sorted(a.tau2_after.rbegin(), a.tau2_after.rend()));

    TheoremConfig iso = cfg;
    iso.eigenvalues.assign(8, 1.0);
    iso.rotation_check = false;
    const auto r = run_theorem_check(iso);
    CHECK(r.degenerate);
    CHECK_FALSE(r.warnings.empty());
    CHECK_FALSE(r.to_json().contains("top_k_after"));

    TheoremConfig bad = cfg;
    bad.k = 8;
    CHECK_THROWS_AS(run_theorem_check(bad), SpecError);
}

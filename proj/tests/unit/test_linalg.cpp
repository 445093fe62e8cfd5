// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>

#include "bridgelab/linalg.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;

namespace {

TensorD random_symmetric(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed, 0);
    TensorD a({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            a(i, j) = a(j, i) = rng.normal();
        }
    }
    return a;
}

TensorD diag_conjugate(const TensorD& q, const std::vector<double>& d) {
    TensorD dm({d.size(), d.size()});
    for (std::size_t i = 0; i < d.size(); ++i) {
        dm(i, i) = d[i];
    }
    return matmul(matmul(q, dm), transpose(q));
}

}  // namespace

TEST_CASE("diagonal matrix decomposes onto axes", "[linalg]") {
    TensorD a({3, 3});
    a(0, 0) = 2.0;
    a(1, 1) = 5.0;
    a(2, 2) = 1.0;
    const auto e = eig_sym(a);
    CHECK(e.values == std::vector<double>{5.0, 2.0, 1.0});
    CHECK(e.vectors(1, 0) == 1.0);
    CHECK(e.vectors(0, 1) == 1.0);
    CHECK(e.vectors(2, 2) == 1.0);
    CHECK_FALSE(e.degenerate);
}

TEST_CASE("construct-then-decompose recovers the spectrum", "[linalg]") {
    const TensorD q = random_orthogonal(2, RngStream(17, 0));
    const auto e = eig_sym(diag_conjugate(q, {3.0, 1.0}));
    CHECK_THAT(e.values[0], WithinAbs(3.0, 1e-10));
    CHECK_THAT(e.values[1], WithinAbs(1.0, 1e-10));
    const double cosine = std::abs(e.vectors(0, 0) * q(0, 0) + e.vectors(1, 0) * q(1, 0));
    CHECK_THAT(cosine, WithinAbs(1.0, 1e-10));
}

TEST_CASE("identity is flagged degenerate", "[linalg]") {
    const auto e = eig_sym(identity(4));
    for (double v : e.values) {
        CHECK(v == 1.0);
    }
    CHECK(e.degenerate);
    CHECK(orthonormality_error(e.vectors) < 1e-12);
}

TEST_CASE("asymmetric input is rejected", "[linalg]") {
    TensorD a = identity(3);
    a(0, 2) = 1e-6;
    CHECK_THROWS_AS(eig_sym(a), ContractViolation);
    a(0, 2) = 1e-10;
    CHECK_NOTHROW(eig_sym(a));
    CHECK_THROWS_AS(eig_sym(TensorD({2, 3})), ContractViolation);
}

TEST_CASE("jacobi agrees with Eigen's self-adjoint solver", "[linalg]") {
    for (std::size_t n : {1, 2, 5, 8, 16, 33}) {
        const TensorD a = random_symmetric(n, n);
        const auto mine = eig_sym(a);
        Eigen::MatrixXd m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
            }
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(m);
        const double norm = frobenius_norm(a);
        for (std::size_t j = 0; j < n; ++j) {
            // Eigen sorts ascending.
            const double ref = oracle.eigenvalues()(static_cast<Eigen::Index>(n - 1 - j));
            CHECK_THAT(mine.values[j], WithinAbs(ref, 1e-11 * std::max(norm, 1.0)));
        }
        CHECK(mine.max_residual <= 1e-10 * norm);
        CHECK(orthonormality_error(mine.vectors) < 1e-12);
        for (std::size_t j = 0; j + 1 < n; ++j) {
            CHECK(mine.values[j] >= mine.values[j + 1]);
        }
    }
}

TEST_CASE("random orthogonal matrices", "[linalg]") {
    const TensorD q = random_orthogonal(12, RngStream(3, 3));
    CHECK(orthonormality_error(q) < 1e-13);
    CHECK(random_orthogonal(12, RngStream(3, 3)) == q);
    CHECK_FALSE(random_orthogonal(12, RngStream(4, 3)) == q);
    // Haar check: the mean of Q(0,0) over many draws is ~0 and E[Q00^2] = 1/n.
    double s = 0;
    double s2 = 0;
    constexpr int draws = 4000;
    for (int i = 0; i < draws; ++i) {
        const TensorD r = random_orthogonal(4, RngStream(100, static_cast<std::uint64_t>(i)));
        s += r(0, 0);
        s2 += r(0, 0) * r(0, 0);
    }
    CHECK(std::abs(s / draws) < 5.0 * std::sqrt(0.25 / draws));
    CHECK_THAT(s2 / draws, WithinAbs(0.25, 0.02));
}

TEST_CASE("matmul, transpose and leading columns", "[linalg]") {
    const TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
    const TensorD b = transpose(a);
    const TensorD c = matmul(a, b);
    CHECK(c == TensorD({2, 2}, {14, 32, 32, 77}));
    CHECK(leading_columns(a, 2) == TensorD({2, 2}, {1, 2, 4, 5}));
    CHECK_THROWS_AS(matmul(a, a), ContractViolation);
}

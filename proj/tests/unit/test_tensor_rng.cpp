// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "bridgelab/rng.hpp"
#include "bridgelab/tensor.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;

TEST_CASE("tensor element count must match shape", "[tensor]") {
    CHECK_THROWS_AS(TensorF({2, 3}, std::vector<float>(5)), ContractViolation);
    CHECK_THROWS_AS(TensorF({2, 0}), ContractViolation);
    const TensorF t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6.0F);
}

TEST_CASE("tensor reshape and cast preserve values", "[tensor]") {
    const TensorD t({2, 3}, {1, 2, 3, 4, 5, 6});
    const TensorD r = t.reshaped({3, 2});
    CHECK(r(2, 1) == 6.0);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ContractViolation);
    const TensorF f = t.cast<float>();
    CHECK(f[4] == 5.0F);
}

TEST_CASE("rng replays are bit-identical", "[rng]") {
    RngStream a(42, 7);
    RngStream b(42, 7);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    RngStream c(42, 7, 0);
    RngStream d(42, 7, 0);
    CHECK(c.normal() == d.normal());
}

TEST_CASE("rng draw depends only on seed, stream and counter", "[rng]") {
    RngStream a(1, 2);
    for (int i = 0; i < 5; ++i) {
        a.next_u32();
    }
    // Other streams advancing cannot perturb this one.
    RngStream other(1, 3);
    for (int i = 0; i < 100; ++i) {
        other.next_u64();
    }
    RngStream b(1, 2);
    for (int i = 0; i < 5; ++i) {
        b.next_u32();
    }
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("split streams differ and are uncorrelated", "[rng]") {
    const RngStream root(9, 0);
    RngStream s1 = root.split("alpha");
    RngStream s2 = root.split("beta");
    CHECK(s1.stream_id() != s2.stream_id());
    constexpr int n = 100000;
    double sxy = 0;
    double sx = 0;
    double sy = 0;
    double sxx = 0;
    double syy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = s1.uniform();
        const double y = s2.uniform();
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double corr = cov / std::sqrt((sxx / n - (sx / n) * (sx / n)) * (syy / n - (sy / n) * (sy / n)));
    // 5 standard errors of a correlation estimate with n draws.
    CHECK(std::abs(corr) < 5.0 / std::sqrt(n));
}

TEST_CASE("uniform and normal moments", "[rng]") {
    RngStream r(123, 1);
    constexpr int n = 200000;
    double su = 0;
    double sn = 0;
    double sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK_THAT(su / n, WithinAbs(0.5, 5.0 * std::sqrt(1.0 / 12.0 / n)));
    CHECK_THAT(sn / n, WithinAbs(0.0, 5.0 / std::sqrt(n)));
    CHECK_THAT(sn2 / n, WithinAbs(1.0, 5.0 * std::sqrt(2.0 / n)));
}

TEST_CASE("uniform_index covers range without bias", "[rng]") {
    RngStream r(5, 5);
    std::vector<int> counts(7, 0);
    constexpr int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto k = r.uniform_index(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (const int c : counts) {
        CHECK(std::abs(c - n / 7) < 5 * std::sqrt(n / 7.0));
    }
}

TEST_CASE("permutation is a permutation", "[rng]") {
    RngStream r(77, 0);
    const auto p = r.permutation(50);
    const std::set<std::size_t> s(p.begin(), p.end());
    CHECK(s.size() == 50);
    CHECK(*s.rbegin() == 49);
}

TEST_CASE("philox known-answer vector", "[rng]") {
    // Random123 reference: philox4x32-10 with zero counter and zero key.
    const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x6627e8d5U);
    CHECK(out[1] == 0xe169c58dU);
    CHECK(out[2] == 0xbc57ac4cU);
    CHECK(out[3] == 0x9b00dbd8U);
}

// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "bridgelab/embedding.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;

namespace {

// Two isotropic blobs in `d` dimensions with centers +/- sep on the first axis.
TensorD two_blobs(std::size_t per, std::size_t d, double sep, std::uint64_t seed, std::vector<int>& truth) {
    TensorD out({2 * per, d});
    RngStream rng(seed, 3);
    truth.clear();
    for (std::size_t i = 0; i < 2 * per; ++i) {
        const int blob = i < per ? 0 : 1;
        truth.push_back(blob);
        for (std::size_t j = 0; j < d; ++j) {
            out(i, j) = rng.normal() + (j == 0 ? (blob == 0 ? -sep : sep) : 0.0);
        }
    }
    return out;
}

// Adjusted Rand index by explicit enumeration of sample pairs.
double ari_by_pairs(const std::vector<int>& a, const std::vector<int>& b) {
    double both = 0, in_a = 0, in_b = 0, pairs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            both += static_cast<double>(sa && sb);
            in_a += static_cast<double>(sa);
            in_b += static_cast<double>(sb);
            pairs += 1;
        }
    }
    const double expected = in_a * in_b / pairs;
    return (both - expected) / (0.5 * (in_a + in_b) - expected);
}

}  // namespace

TEST_CASE("extract_hidden shape, duplicates and permutation", "[embedding]") {
    ModelSpec spec;
    spec.n_layers = 2;
    spec.d_model = 16;
    spec.n_heads = 2;
    const Model m = build_classifier(spec, RngStream(4, 1));
    const Dataset d = synthetic_images(6, 10, 8, 1);
    const TensorD h = extract_hidden(m, d.inputs);
    REQUIRE(h.shape() == Shape{6, 16});

    const std::size_t per = d.inputs.size() / 6;
    TensorF shuffled(d.inputs.shape());
    const std::vector<std::size_t> order{3, 3, 0, 5, 1, 2};
    for (std::size_t i = 0; i < 6; ++i) {
        std::copy_n(d.inputs.ptr() + order[i] * per, per, shuffled.ptr() + i * per);
    }
    const TensorD hs = extract_hidden(m, shuffled, 4);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 16; ++j) {
            CHECK(hs(i, j) == h(order[i], j));
        }
    }
    for (std::size_t j = 0; j < 16; ++j) {
        CHECK(hs(0, j) == hs(1, j));
    }
}

TEST_CASE("pca projection", "[embedding]") {
    // Collinear points: one direction carries everything.
    TensorD line({10, 3});
    for (std::size_t i = 0; i < 10; ++i) {
        const double t = static_cast<double>(i) - 4.5;
        line(i, 0) = 2 * t;
        line(i, 1) = -t;
        line(i, 2) = 0.5 * t + 1.0;
    }
    const Projection2D pl = reduce2d(line);
    CHECK(pl.rank_deficient);
    CHECK_THAT(pl.explained[0], WithinAbs(1.0, 1e-12));
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(pl.coords(i, 1) == 0.0);
    }
    // First loading is (2, -1, 0.5)/|.|; the largest entry is positive.
    CHECK(pl.components[0] > 0.0);
    CHECK_THAT(pl.components[0], WithinAbs(2.0 / std::sqrt(5.25), 1e-10));

    // Isotropic cloud: the top two components share about 2/d of the variance.
    const std::size_t d = 8;
    TensorD cloud({20000, d});
    RngStream rng(7, 7);
    for (double& v : cloud.data()) {
        v = rng.normal();
    }
    const Projection2D pc = reduce2d(cloud);
    CHECK_FALSE(pc.rank_deficient);
    CHECK_THAT(pc.explained[0] + pc.explained[1], WithinAbs(2.0 / d, 0.02));
    CHECK(pc.explained[0] >= pc.explained[1]);

    // Coordinates are uncorrelated, and their variances match the shares.
    double c01 = 0, v0 = 0, total = 0;
    for (std::size_t i = 0; i < 20000; ++i) {
        c01 += pc.coords(i, 0) * pc.coords(i, 1);
        v0 += pc.coords(i, 0) * pc.coords(i, 0);
    }
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < 20000; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += cloud(i, j) / 20000.0;
        }
    }
    for (std::size_t i = 0; i < 20000; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            total += (cloud(i, j) - mean[j]) * (cloud(i, j) - mean[j]);
        }
    }
    CHECK(std::abs(c01) < 1e-8 * v0);
    CHECK_THAT(v0 / total, WithinAbs(pc.explained[0], 1e-10));

    const Projection2D again = reduce2d(cloud);
    CHECK(std::ranges::equal(again.coords.data(), pc.coords.data()));
    CHECK_THROWS_AS(reduce2d(TensorD({2, 3})), ContractViolation);
}

TEST_CASE("kmeans closed forms and contracts", "[embedding]") {
    TensorD pts({5, 2}, {0, 0, 2, 0, 4, 2, 1, 1, 3, 7});
    const ClusterResult one = kmeans(pts, 1, 3);
    CHECK_THAT(one.centroids(0, 0), WithinAbs(2.0, 1e-15));
    CHECK_THAT(one.centroids(0, 1), WithinAbs(2.0, 1e-15));
    // Population variance per axis: x (4+0+4+1+1)/5 = 2, y (4+4+0+1+25)/5 = 6.8.
    CHECK_THAT(one.inertia, WithinAbs(5.0 * (2.0 + 6.8), 1e-12));
    CHECK(one.converged);

    const TensorD same({4, 2}, std::vector<double>(8, 1.5));
    const ClusterResult tie = kmeans(same, 2, 1);
    CHECK(tie.assignments == std::vector<int>(4, 0));

    CHECK_THROWS_AS(kmeans(pts, 6, 1), ContractViolation);
    CHECK_THROWS_AS(kmeans(pts, 0, 1), ContractViolation);
}

TEST_CASE("kmeans recovers separated blobs and replays", "[embedding]") {
    std::vector<int> truth;
    const TensorD pts = two_blobs(200, 5, 4.0, 11, truth);
    const ClusterResult r = kmeans(pts, 2, 5);
    CHECK(adjusted_rand_index(r.assignments, truth) >= 0.95);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
        CHECK(r.inertia_history[i] <= r.inertia_history[i - 1]);
    }
    CHECK(r.inertia <= r.inertia_history.front());
    const ClusterResult again = kmeans(pts, 2, 5);
    CHECK(again.assignments == r.assignments);
    CHECK(std::ranges::equal(again.centroids.data(), r.centroids.data()));

    // Several clusters on a harder cloud: still monotone.
    std::vector<int> t2;
    const TensorD noisy = two_blobs(300, 3, 0.5, 12, t2);
    const ClusterResult r5 = kmeans(noisy, 5, 9);
    for (std::size_t i = 1; i < r5.inertia_history.size(); ++i) {
        CHECK(r5.inertia_history[i] <= r5.inertia_history[i - 1]);
    }
    for (const int a : r5.assignments) {
        CHECK(a >= 0);
        CHECK(a < 5);
    }
}

TEST_CASE("adjusted rand index", "[embedding]") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2, 2};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9, 9};
    CHECK(adjusted_rand_index(a, relabeled) == 1.0);

    const std::vector<int> b{0, 1, 1, 1, 0, 2, 2};
    CHECK_THAT(adjusted_rand_index(a, b), WithinAbs(ari_by_pairs(a, b), 1e-12));
    CHECK(adjusted_rand_index(a, b) == adjusted_rand_index(b, a));
    CHECK_THAT(adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 2}), WithinAbs(ari_by_pairs({0, 0, 1, 1}, {0, 0, 1, 2}), 1e-12));

    RngStream rng(2, 2);
    std::vector<int> x(5000);
    std::vector<int> y(5000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<int>(rng.uniform_index(10));
        y[i] = static_cast<int>(rng.uniform_index(10));
    }
    CHECK(std::abs(adjusted_rand_index(x, y)) < 0.01);
    CHECK_THROWS_AS(adjusted_rand_index({0, 1}, {0}), ContractViolation);
}

TEST_CASE("silhouette", "[embedding]") {
    // Clusters {0, 1} and {10, 11} on a line.
    const TensorD line({4, 1}, {0, 1, 10, 11});
    const std::vector<int> split{0, 0, 1, 1};
    // s(0) = 1 - 1/10.5, s(1) = 1 - 1/9.5, symmetric for the other pair.
    const double expect = 0.5 * ((1 - 1 / 10.5) + (1 - 1 / 9.5));
    CHECK_THAT(*silhouette(line, split), WithinAbs(expect, 1e-14));

    // Coincident clusters: every sample is equidistant from both.
    std::vector<int> truth;
    const TensorD pts = two_blobs(200, 2, 0.0, 4, truth);
    std::vector<int> alternating(pts.dim(0));
    for (std::size_t i = 0; i < alternating.size(); ++i) {
        alternating[i] = static_cast<int>(i % 2);
    }
    CHECK(std::abs(*silhouette(pts, alternating)) < 0.02);

    CHECK_FALSE(silhouette(line, {1, 1, 1, 1}).has_value());
    ClusterResult single;
    single.assignments = {0, 0, 0, 0};
    const ClusterQuality q = cluster_quality(line, single, split);
    CHECK_FALSE(q.silhouette.has_value());
    CHECK(q.flags.size() == 1);
    CHECK(q.ari == 0.0);
}

TEST_CASE("embedding report covers both spaces", "[embedding]") {
    std::vector<int> truth;
    const TensorD pts = two_blobs(60, 6, 5.0, 21, truth);
    const EmbeddingReport r = embedding_report(pts, truth, 0, 3);
    CHECK(r.k == 2);
    CHECK(r.raw_quality.ari == 1.0);
    CHECK(r.pca_quality.ari == 1.0);
    const auto j = r.to_json();
    CHECK(j.at("raw").at("quality").at("ari") == 1.0);
    CHECK(j.at("explained_variance").size() == 2);
    const std::string csv = r.coords_csv();
    CHECK(csv.rfind("index,x,y,label,cluster_pca,cluster_raw\n0,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 121);
    CHECK(embedding_report(pts, truth, 0, 3).to_json() == j);
}

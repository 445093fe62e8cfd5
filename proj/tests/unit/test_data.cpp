// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <map>

#include "bridgelab/data.hpp"
#include "bridgelab/linalg.hpp"

using namespace bridgelab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

TEST_CASE("isotropic gaussian source has identity covariance", "[data]") {
    const std::vector<double> ones(5, 1.0);
    const auto src = gaussian_source(ones, 3, 10, 4);
    CHECK(src.covariance == identity(5));
}

TEST_CASE("gaussian source covariance is Q diag Q^T", "[data]") {
    const std::vector<double> ev{16, 8, 4, 2, 1, 1, 1, 1};
    const auto src = gaussian_source(ev, 11, 4, 1);
    CHECK(orthonormality_error(src.rotation) < 1e-13);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 8; ++k) {
                s += src.rotation(i, k) * ev[k] * src.rotation(j, k);
            }
            REQUIRE_THAT(src.covariance(i, j), WithinAbs(s, 1e-12));
        }
    }
    const std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(gaussian_source(bad, 1, 4, 1), ContractViolation);
}

TEST_CASE("gaussian source sample covariance concentrates", "[data]") {
    const std::vector<double> ev{4.0, 1.0};
    const auto src = gaussian_source(ev, 5, 100000, 6);
    TensorD cov({2, 2});
    for (std::size_t r = 0; r < src.samples.dim(0); ++r) {
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                cov(i, j) += src.samples(r, i) * src.samples(r, j);
            }
        }
    }
    for (double& v : cov.data()) {
        v /= static_cast<double>(src.samples.dim(0));
    }
    const auto e = eig_sym(cov, 1e-6);
    CHECK_THAT(e.values[0], WithinRel(4.0, 0.05));
    CHECK_THAT(e.values[1], WithinRel(1.0, 0.05));
    CHECK(gaussian_source(ev, 5, 100, 6).samples == gaussian_source(ev, 5, 100, 6).samples);
}

TEST_CASE("synthetic images are stratified and deterministic", "[data]") {
    const Dataset d = synthetic_images(100, 10, 8, 3);
    std::map<int, int> counts;
    for (int y : d.labels) {
        ++counts[y];
    }
    REQUIRE(counts.size() == 10);
    for (const auto& [label, count] : counts) {
        CHECK(count == 10);
    }
    CHECK(d.inputs.shape() == Shape{100, 3, 8, 8});
    const Dataset again = synthetic_images(100, 10, 8, 3);
    CHECK(again.inputs == d.inputs);
    CHECK(again.labels == d.labels);
    CHECK_THROWS_AS(synthetic_images(10, 10, 6, 3), ContractViolation);
}

TEST_CASE("noise-free synthetic images differ only by phase", "[data]") {
    const Dataset d = synthetic_images(40, 4, 8, 9, 0.0);
    // For a noise-free grating, each channel is 0.5 + a * cos(k.x + phase):
    // the per-channel amplitude a (half the range) is a class constant.
    std::map<int, std::vector<double>> amp;
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::vector<double> a;
        for (std::size_t c = 0; c < 3; ++c) {
            const float* p = d.inputs.ptr() + (i * 3 + c) * 64;
            double sum_sq = 0;
            for (int k = 0; k < 64; ++k) {
                sum_sq += (p[k] - 0.5) * (p[k] - 0.5);
            }
            a.push_back(std::sqrt(sum_sq / 64.0));
        }
        const auto [it, inserted] = amp.emplace(d.labels[i], a);
        if (!inserted) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK_THAT(a[c], WithinAbs(it->second[c], 1e-5));
            }
        }
    }
}

TEST_CASE("synthetic image classes are not linearly separable", "[data]") {
    // Least-squares one-vs-rest linear fit in raw pixel space: the random
    // phase makes class-conditional means nearly equal, so a linear readout
    // trained on the data cannot fit it well.
    const Dataset d = synthetic_images(600, 10, 8, 21);
    const auto n = static_cast<Eigen::Index>(d.size());
    const Eigen::Index p = 3 * 64 + 1;
    Eigen::MatrixXd x(n, p);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 10);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < p - 1; ++k) {
            x(i, k) = d.inputs[static_cast<std::size_t>(i * (p - 1) + k)];
        }
        x(i, p - 1) = 1.0;
        y(i, d.labels[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Eigen::MatrixXd w = (x.transpose() * x + 1e-3 * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(x.transpose() * y);
    const Eigen::MatrixXd scores = x * w;
    int correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        scores.row(i).maxCoeff(&arg);
        correct += static_cast<int>(arg == d.labels[static_cast<std::size_t>(i)]);
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(n) < 0.9);
}

TEST_CASE("cifar binary records", "[data]") {
    std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes, 0);
    CHECK(kCifarRecordBytes == 3073);
    bytes[0] = 3;
    bytes[1] = 255;
    bytes[kCifarRecordBytes] = 9;
    bytes[kCifarRecordBytes + 1 + 1024] = 51;
    const Dataset d = cifar_parse(bytes, CifarNormalization::identity());
    CHECK(d.labels == std::vector<int>{3, 9});
    CHECK(d.inputs.shape() == Shape{2, 3, 32, 32});
    CHECK(d.inputs[0] == 1.0F);
    CHECK_THAT(d.inputs[3072 + 1024], WithinAbs(0.2, 1e-7));

    const CifarNormalization norm;
    const Dataset n = cifar_parse(bytes, norm);
    CHECK_THAT(n.inputs[0], WithinAbs((1.0 - 0.4914) / 0.2470, 1e-6));

    std::vector<std::uint8_t> odd(3074, 0);
    CHECK_THROWS_AS(cifar_parse(odd), DataFormatError);
    bytes[0] = 10;
    CHECK_THROWS_AS(cifar_parse(bytes), DataFormatError);
}

TEST_CASE("random labels: identity and counting contracts", "[data]") {
    std::vector<int> truth(100);
    for (int i = 0; i < 100; ++i) {
        truth[static_cast<std::size_t>(i)] = i % 10;
    }
    const auto clean = assign_random_labels(truth, 0.0, 10, 1);
    CHECK(clean.effective == truth);
    CHECK(clean.corrupted.empty());

    const auto t30 = assign_random_labels(truth, 0.3, 10, 1);
    CHECK(t30.corrupted.size() == 30);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!std::binary_search(t30.corrupted.begin(), t30.corrupted.end(), i)) {
            CHECK(t30.effective[i] == truth[i]);
        }
    }
    CHECK(assign_random_labels(truth, 0.3, 10, 1) == t30);
    CHECK_THROWS_AS(assign_random_labels(truth, 1.5, 10, 1), ContractViolation);

    const auto wrong = assign_random_labels(truth, 1.0, 10, 2, true);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(wrong.effective[i] != truth[i]);
    }
}

TEST_CASE("full random labels agree with truth at rate 1/C and are independent", "[data]") {
    constexpr std::size_t n = 10000;
    std::vector<int> truth(n);
    RngStream rng(8, 8);
    for (int& y : truth) {
        y = static_cast<int>(rng.uniform_index(10));
    }
    const auto t = assign_random_labels(truth, 1.0, 10, 77);
    std::size_t agree = 0;
    std::vector<std::vector<double>> table(10, std::vector<double>(10, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(t.effective[i] >= 0);
        REQUIRE(t.effective[i] < 10);
        agree += static_cast<std::size_t>(t.effective[i] == truth[i]);
        table[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(t.effective[i])] += 1.0;
    }
    CHECK_THAT(static_cast<double>(agree) / n, WithinAbs(0.10, 0.01));

    // Pearson chi-square independence test, 81 degrees of freedom; the 0.99
    // quantile of chi2(81) is 113.51.
    std::vector<double> rows(10, 0.0);
    std::vector<double> cols(10, 0.0);
    for (std::size_t a = 0; a < 10; ++a) {
        for (std::size_t b = 0; b < 10; ++b) {
            rows[a] += table[a][b];
            cols[b] += table[a][b];
        }
    }
    double chi2 = 0;
    for (std::size_t a = 0; a < 10; ++a) {
        for (std::size_t b = 0; b < 10; ++b) {
            const double expected = rows[a] * cols[b] / n;
            chi2 += (table[a][b] - expected) * (table[a][b] - expected) / expected;
        }
    }
    CHECK(chi2 < 113.51);
}

TEST_CASE("dataset persistence round trip", "[data]") {
    const fs::path dir = fs::temp_directory_path() / ("bridgelab_data_" + std::to_string(::getpid()));
    const Dataset d = synthetic_images(30, 3, 8, 4);
    const auto labels = assign_random_labels(d.labels, 0.5, 3, 9);
    save_dataset(d, &labels, dir);
    const StoredDataset s = load_dataset(dir);
    CHECK(s.data.inputs == d.inputs);
    CHECK(s.data.labels == d.labels);
    REQUIRE(s.labels.has_value());
    CHECK(*s.labels == labels);
    CHECK(s.data.spec.to_json() == d.spec.to_json());
    fs::remove_all(dir);
}

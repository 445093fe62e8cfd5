// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight-distribution statistics: per-tensor moments, z-score outliers, tail
// fractions and fixed-grid histograms, aggregated per transformer block.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bridgelab/model.hpp"

namespace bridgelab {

struct TensorStats {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // population
    // m4 / m2^2 - 3 with population moments; empty when n < 4 or std < 1e-12.
    std::optional<double> excess_kurtosis;
    double max_abs = 0.0;
};

// Two-pass moments in 64-bit. Throws ContractViolation on an empty tensor.
TensorStats tensor_stats(std::span<const float> w);
TensorStats tensor_stats(std::span<const double> w);

struct OutlierResult {
    std::size_t count = 0;
    std::vector<std::size_t> indices;  // first `cap` outliers in index order
};

// Elements with |w - mean| > z * std; zero when std < 1e-12.
OutlierResult outlier_count(std::span<const float> w, double z = 6.0, std::size_t cap = 64);

// Fraction of elements with |w - mean| > k * std for k = 3, 6, 9.
std::array<double, 3> tail_fractions(std::span<const float> w);

struct Histogram {
    double limit = 0.0;  // bins cover [-limit, limit]
    std::vector<std::size_t> counts;

    static constexpr std::size_t kBins = 201;
    double bin_left(std::size_t i) const;
    double bin_right(std::size_t i) const;
};

// kBins equal bins over [-max|w|, max|w|]; a zero tensor lands in the centre bin.
Histogram symmetric_histogram(std::span<const float> w);

// Block index from common naming schemes: "h.N.", "layers.N.", "blocks.N."
// at the start or after a '.'.
std::optional<std::size_t> forensic_layer(std::string_view name);

struct TensorReport {
    std::string name;
    std::optional<std::size_t> layer;
    TensorStats stats;
    std::size_t outliers = 0;
    std::array<double, 3> tails{};
    Histogram histogram;
};

struct LayerAggregate {
    std::size_t layer = 0;
    std::size_t tensors = 0;
    std::size_t n = 0;
    std::size_t outliers = 0;
    double max_abs = 0.0;
    // Mean over member tensors with defined kurtosis; empty if none.
    std::optional<double> mean_excess_kurtosis;
};

struct OutlierReport {
    double z = 6.0;
    std::vector<TensorReport> tensors;
    std::vector<LayerAggregate> layers;
    std::vector<std::string> unassigned;  // tensors outside any block

    // Mean of the per-layer kurtosis means.
    std::optional<double> mean_block_kurtosis() const;
    nlohmann::json to_json() const;
    // tensor,bin_left,bin_right,count
    std::string histogram_csv() const;
};

OutlierReport layer_report(const ParamSet<float>& params, double z = 6.0);

}  // namespace bridgelab

// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Neuron activation ratio: per layer, the fraction of (image, neuron) pairs
// whose token-averaged post-GELU MLP response is strictly positive.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/model.hpp"

namespace bridgelab {

// a: [T, d_mlp] for one image -> per-neuron token mean.
std::vector<double> token_average(const TensorF& a);

// Number of strictly positive entries.
std::size_t count_active(std::span<const double> averaged);

// averaged: one token-averaged vector per image, all of equal length.
double activation_ratio(const std::vector<std::vector<double>>& averaged);

struct ActivationReport {
    std::string tag;  // init | post-bridge-random | post-bridge-correct | free text
    std::size_t images = 0;
    std::size_t tokens = 0;
    std::size_t d_mlp = 0;
    std::vector<std::size_t> active;  // per layer, out of images * d_mlp
    std::vector<double> ratio;        // per layer

    nlohmann::json to_json() const;
};

// Evaluation-mode forward passes over `images` [N, C, H, W] in batches.
ActivationReport activation_report(const Model& model, const TensorF& images, std::string tag,
                                   std::size_t batch_size = 64);

// Pools the counts of two reports over disjoint image sets.
ActivationReport merge_reports(const ActivationReport& a, const ActivationReport& b);

struct ActivationComparison {
    std::vector<double> before;
    std::vector<double> after;
    std::vector<double> delta;
    std::size_t layers_increased = 0;

    nlohmann::json to_json() const;
    // layer,r_before,r_after,delta (1-based layers)
    std::string csv() const;
};

// Throws ContractViolation when the reports differ in layer count, image
// count, token count or MLP width.
ActivationComparison compare_snapshots(const ActivationReport& before, const ActivationReport& after);

}  // namespace bridgelab

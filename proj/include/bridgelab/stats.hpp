// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small descriptive statistics shared by the analysis modules.

#pragma once

#include <span>
#include <vector>

namespace bridgelab {

double mean(std::span<const double> x);
// Population variance (divides by n).
double variance(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
// 1-based ranks; ties receive the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);
// Pearson correlation of average ranks. Returns 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);
// Linear-interpolated quantile of a sample, q in [0, 1].
double quantile(std::vector<double> x, double q);

}  // namespace bridgelab

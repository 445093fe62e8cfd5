// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bridgelab/rng.hpp"

namespace bridgelab {

// A scalar function of a flat parameter vector together with its reverse-mode
// gradient. Both are evaluated in 64-bit.
struct DifferentiableFunction {
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates_checked = 0;
};

// Per-coordinate error is |g - fd| / max(|g|, |fd|, floor); the floor keeps
// coordinates whose true derivative is ~0 from reporting pure rounding noise.
inline constexpr double kGradCheckFloor = 1e-6;

// Compares the reverse-mode gradient with central differences
// (f(θ+h·e_i) − f(θ−h·e_i)) / 2h. `coordinates` restricts the check to a
// subset; empty means every coordinate.
GradCheckResult grad_check(const DifferentiableFunction& fn, std::span<const double> theta, double h,
                           std::span<const std::size_t> coordinates = {});

// `count` distinct coordinates out of [0, n), sorted.
std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count, RngStream rng);

}  // namespace bridgelab

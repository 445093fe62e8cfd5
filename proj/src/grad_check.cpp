// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

GradCheckResult grad_check(const DifferentiableFunction& fn, std::span<const double> theta, double h,
                           std::span<const std::size_t> coordinates) {
    if (!(h > 0.0)) {
        throw ContractViolation("grad_check: step must be positive");
    }
    const std::vector<double> analytic = fn.gradient(theta);
    if (analytic.size() != theta.size()) {
        throw ContractViolation("grad_check: gradient length differs from parameter length");
    }
    std::vector<double> point(theta.begin(), theta.end());
    std::vector<std::size_t> all;
    if (coordinates.empty()) {
        all.resize(theta.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = i;
        }
        coordinates = all;
    }
    GradCheckResult result;
    for (const std::size_t i : coordinates) {
        const double saved = point[i];
        point[i] = saved + h;
        const double plus = fn.value(point);
        point[i] = saved - h;
        const double minus = fn.value(point);
        point[i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (err > result.max_relative_error || result.coordinates_checked == 0) {
            result.max_relative_error = err;
            result.worst_index = i;
            result.worst_analytic = analytic[i];
            result.worst_numeric = numeric;
        }
        ++result.coordinates_checked;
    }
    return result;
}

std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count, RngStream rng) {
    if (count >= n) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) {
            all[i] = i;
        }
        return all;
    }
    std::vector<std::size_t> perm = rng.permutation(n);
    perm.resize(count);
    std::sort(perm.begin(), perm.end());
    return perm;
}

}  // namespace bridgelab

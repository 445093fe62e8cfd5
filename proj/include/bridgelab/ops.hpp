// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stateless forward kernels shared by the autodiff graph and by callers that
// just want a value.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

inline constexpr double kGeluCubic = 0.044715;

// tanh-approximated GELU (GPT-2 form).
template <typename T>
inline T gelu_scalar(T x) noexcept {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const T inner = c * (x + static_cast<T>(kGeluCubic) * x * x * x);
    return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(inner));
}

template <typename T>
inline T gelu_derivative(T x) noexcept {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const T inner = c * (x + static_cast<T>(kGeluCubic) * x * x * x);
    const T t = std::tanh(inner);
    const T dinner = c * (static_cast<T>(1) + static_cast<T>(3.0 * kGeluCubic) * x * x);
    return static_cast<T>(0.5) * (static_cast<T>(1) + t) + static_cast<T>(0.5) * x * (static_cast<T>(1) - t * t) * dinner;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = gelu_scalar(x[i]);
    }
    return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each row (last axis) to zero mean / unit variance, then applies
// gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = static_cast<T>(kLayerNormEps)) {
    const std::size_t width = x.cols();
    if (gain.size() != width || bias.size() != width) {
        throw ContractViolation("layer_norm: gain/bias extent must equal last axis " + std::to_string(width));
    }
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const T* row = x.ptr() + r * width;
        T mean = 0;
        for (std::size_t c = 0; c < width; ++c) {
            mean += row[c];
        }
        mean /= static_cast<T>(width);
        T var = 0;
        for (std::size_t c = 0; c < width; ++c) {
            var += (row[c] - mean) * (row[c] - mean);
        }
        var /= static_cast<T>(width);
        const T inv = static_cast<T>(1) / std::sqrt(var + eps);
        for (std::size_t c = 0; c < width; ++c) {
            out[r * width + c] = (row[c] - mean) * inv * gain[c] + bias[c];
        }
    }
    return out;
}

template <typename T>
struct CrossEntropyResult {
    T loss;
    std::vector<T> grad;  // d loss / d logits = softmax - onehot
};

// -log softmax(logits)[label], evaluated with max subtraction.
template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label) {
    if (label >= logits.size()) {
        throw ContractViolation("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(logits.size()) + " classes");
    }
    T max_logit = logits[0];
    for (const T v : logits) {
        max_logit = std::max(max_logit, v);
    }
    CrossEntropyResult<T> result{0, std::vector<T>(logits.size())};
    T denom = 0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        result.grad[c] = std::exp(logits[c] - max_logit);
        denom += result.grad[c];
    }
    for (auto& g : result.grad) {
        g /= denom;
    }
    result.loss = std::log(denom) - (logits[label] - max_logit);
    result.grad[label] -= static_cast<T>(1);
    return result;
}

}  // namespace bridgelab

// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation. A Graph is rebuilt for every
// batch: each operation appends a node holding its output and a closure that
// pushes the node's gradient into its inputs. Nodes are stored in creation
// order, which is a valid topological order.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

struct Var {
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::size_t id = kNone;
    bool valid() const noexcept { return id != kNone; }
};

// Layout of the multi-head views used by attention.
struct HeadLayout {
    std::size_t batch;
    std::size_t tokens;
    std::size_t heads;
};

template <typename T>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) noexcept = default;
    Graph& operator=(Graph&&) noexcept = default;

    // Leaves.
    Var input(Tensor<T> value);
    Var param(Tensor<T> value, bool requires_grad = true);

    // Linear algebra. Rank-2 operands are [rows, cols]; higher ranks are viewed
    // as [numel / last, last].
    Var matmul(Var a, Var b);
    Var add_bias(Var x, Var bias);
    Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, T factor);
    Var sum(Var x);

    // Nonlinearities and normalization.
    Var gelu(Var x);
    Var relu(Var x);
    Var layer_norm(Var x, Var gain, Var bias, T eps);

    // Attention plumbing. Hidden states are [batch * tokens, width].
    Var slice_cols(Var x, std::size_t begin, std::size_t count);
    Var split_heads(Var x, HeadLayout layout);   // -> {batch*heads, tokens, width/heads}
    Var merge_heads(Var x, HeadLayout layout);   // inverse of split_heads
    Var batched_matmul(Var a, Var b, bool transpose_b);  // {G,n,k} x {G,k,m} (or {G,m,k} when transposed)
    Var causal_mask(Var scores);                 // {G,T,T}: entries above the diagonal -> -inf
    Var softmax(Var x);                          // over the last axis

    // Token bookkeeping.
    Var add_positional(Var x, Var positional, std::size_t tokens);
    Var mean_tokens(Var x, std::size_t batch, std::size_t tokens);
    Var row_scale(Var x, std::span<const T> per_sample, std::size_t tokens);
    Var embedding(Var table, std::span<const int> ids);

    // Mean softmax cross-entropy over rows of [N, C] logits.
    Var cross_entropy(Var logits, std::span<const int> labels);

    // Reverse sweep from a scalar node. Throws ContractViolation when the node
    // has more than one element.
    void backward(Var loss);

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    // Gradient accumulated at `v`, or nullptr when none reached it.
    const Tensor<T>* grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Graph&, std::size_t)> backward;
    };

    Var push(Tensor<T> value, bool needs_grad, std::function<void(Graph&, std::size_t)> backward);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }
    Tensor<T>& grad_buffer(std::size_t id);
    const Tensor<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }
    const Tensor<T>& val(std::size_t id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace bridgelab

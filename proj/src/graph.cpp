// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/graph.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

#include "bridgelab/ops.hpp"

namespace bridgelab {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
ConstMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return ConstMap<T>(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MutMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return MutMap<T>(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ContractViolation(what);
    }
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad, std::function<void(Graph&, std::size_t)> backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) {
        node.grad = Tensor<T>(node.value.shape());
    }
    return node.grad;
}

template <typename T>
const Tensor<T>* Graph<T>::grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.grad.empty() ? nullptr : &node.grad;
}

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
    return push(std::move(value), false, nullptr);
}

template <typename T>
Var Graph<T>::param(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad, [](Graph&, std::size_t) {});
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    const std::size_t n = av.rows();
    const std::size_t k = av.cols();
    require(bv.rank() == 2 && bv.dim(0) == k,
            "matmul: inner extents differ (" + shape_to_string(av.shape()) + " x " + shape_to_string(bv.shape()) + ")");
    const std::size_t m = bv.dim(1);
    Tensor<T> out({n, m});
    as_matrix(out, n, m).noalias() = as_matrix(av, n, k) * as_matrix(bv, k, m);
    return push(std::move(out), needs(a) || needs(b), [a, b, n, k, m](Graph& g, std::size_t self) {
        const auto dout = as_matrix(g.grad_of(self), n, m);
        if (g.needs(a)) {
            as_matrix(g.grad_buffer(a.id), n, k).noalias() += dout * as_matrix(g.val(b.id), k, m).transpose();
        }
        if (g.needs(b)) {
            as_matrix(g.grad_buffer(b.id), k, m).noalias() += as_matrix(g.val(a.id), n, k).transpose() * dout;
        }
    });
}

template <typename T>
Var Graph<T>::add_bias(Var x, Var bias) {
    const Tensor<T>& xv = val(x.id);
    const Tensor<T>& bv = val(bias.id);
    const std::size_t n = xv.rows();
    const std::size_t m = xv.cols();
    require(bv.size() == m, "add_bias: bias extent " + std::to_string(bv.size()) + " != " + std::to_string(m));
    Tensor<T> out = xv;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            out[r * m + c] += bv[c];
        }
    }
    return push(std::move(out), needs(x) || needs(bias), [x, bias, n, m](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        if (g.needs(x)) {
            Tensor<T>& dx = g.grad_buffer(x.id);
            for (std::size_t i = 0; i < dout.size(); ++i) {
                dx[i] += dout[i];
            }
        }
        if (g.needs(bias)) {
            Tensor<T>& db = g.grad_buffer(bias.id);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < m; ++c) {
                    db[c] += dout[r * m + c];
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require(av.size() == bv.size(), "add: shape mismatch " + shape_to_string(av.shape()) + " vs " +
                                        shape_to_string(bv.shape()));
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        for (const Var v : {a, b}) {
            if (g.needs(v)) {
                Tensor<T>& dv = g.grad_buffer(v.id);
                for (std::size_t i = 0; i < dout.size(); ++i) {
                    dv[i] += dout[i];
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require(av.size() == bv.size(), "mul: shape mismatch");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i];
    }
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        if (g.needs(a)) {
            Tensor<T>& da = g.grad_buffer(a.id);
            const Tensor<T>& bv = g.val(b.id);
            for (std::size_t i = 0; i < dout.size(); ++i) {
                da[i] += dout[i] * bv[i];
            }
        }
        if (g.needs(b)) {
            Tensor<T>& db = g.grad_buffer(b.id);
            const Tensor<T>& av = g.val(a.id);
            for (std::size_t i = 0; i < dout.size(); ++i) {
                db[i] += dout[i] * av[i];
            }
        }
    });
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
    Tensor<T> out = val(x.id);
    for (auto& v : out.data()) {
        v *= factor;
    }
    return push(std::move(out), needs(x), [x, factor](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t i = 0; i < dout.size(); ++i) {
            dx[i] += dout[i] * factor;
        }
    });
}

template <typename T>
Var Graph<T>::sum(Var x) {
    T total = 0;
    for (const T v : val(x.id).data()) {
        total += v;
    }
    return push(Tensor<T>({1}, {total}), needs(x), [x](Graph& g, std::size_t self) {
        const T d = g.grad_of(self)[0];
        for (auto& v : g.grad_buffer(x.id).data()) {
            v += d;
        }
    });
}

template <typename T>
Var Graph<T>::gelu(Var x) {
    return push(bridgelab::gelu(val(x.id)), needs(x), [x](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        const Tensor<T>& xv = g.val(x.id);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t i = 0; i < dout.size(); ++i) {
            dx[i] += dout[i] * gelu_derivative(xv[i]);
        }
    });
}

template <typename T>
Var Graph<T>::relu(Var x) {
    Tensor<T> out = val(x.id);
    for (auto& v : out.data()) {
        v = v > 0 ? v : T{0};
    }
    return push(std::move(out), needs(x), [x](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        const Tensor<T>& xv = g.val(x.id);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t i = 0; i < dout.size(); ++i) {
            if (xv[i] > 0) {
                dx[i] += dout[i];
            }
        }
    });
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
    const Tensor<T>& xv = val(x.id);
    Tensor<T> out = bridgelab::layer_norm(xv, val(gain.id), val(bias.id), eps);
    const bool any = needs(x) || needs(gain) || needs(bias);
    return push(std::move(out), any, [x, gain, bias, eps](Graph& g, std::size_t self) {
        const Tensor<T>& xv = g.val(x.id);
        const Tensor<T>& gv = g.val(gain.id);
        const Tensor<T>& dout = g.grad_of(self);
        const std::size_t width = xv.cols();
        std::vector<T> xhat(width);
        std::vector<T> dxhat(width);
        Tensor<T>* dx = g.needs(x) ? &g.grad_buffer(x.id) : nullptr;
        Tensor<T>* dg = g.needs(gain) ? &g.grad_buffer(gain.id) : nullptr;
        Tensor<T>* db = g.needs(bias) ? &g.grad_buffer(bias.id) : nullptr;
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            const T* row = xv.ptr() + r * width;
            const T* drow = dout.ptr() + r * width;
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
            T mean_dxhat = 0;
            T mean_dxhat_xhat = 0;
            for (std::size_t c = 0; c < width; ++c) {
                xhat[c] = (row[c] - mean) * inv;
                dxhat[c] = drow[c] * gv[c];
                mean_dxhat += dxhat[c];
                mean_dxhat_xhat += dxhat[c] * xhat[c];
                if (dg != nullptr) {
                    (*dg)[c] += drow[c] * xhat[c];
                }
                if (db != nullptr) {
                    (*db)[c] += drow[c];
                }
            }
            if (dx != nullptr) {
                mean_dxhat /= static_cast<T>(width);
                mean_dxhat_xhat /= static_cast<T>(width);
                for (std::size_t c = 0; c < width; ++c) {
                    (*dx)[r * width + c] += inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Tensor<T>& xv = val(x.id);
    const std::size_t n = xv.rows();
    const std::size_t m = xv.cols();
    require(begin + count <= m && count > 0, "slice_cols: range out of bounds");
    Tensor<T> out({n, count});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(xv.ptr() + r * m + begin, count, out.ptr() + r * count);
    }
    return push(std::move(out), needs(x), [x, begin, count, n, m](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                dx[r * m + begin + c] += dout[r * count + c];
            }
        }
    });
}

namespace {

// Index of element (token t, head h, lane e) of sample b in the merged
// [B*T, H*dh] layout and in the split {B*H, T, dh} layout.
struct HeadIndex {
    HeadLayout layout;
    std::size_t head_dim;
    std::size_t merged(std::size_t b, std::size_t t, std::size_t h, std::size_t e) const {
        return (b * layout.tokens + t) * (layout.heads * head_dim) + h * head_dim + e;
    }
    std::size_t split(std::size_t b, std::size_t t, std::size_t h, std::size_t e) const {
        return ((b * layout.heads + h) * layout.tokens + t) * head_dim + e;
    }
};

}  // namespace

template <typename T>
Var Graph<T>::split_heads(Var x, HeadLayout layout) {
    const Tensor<T>& xv = val(x.id);
    const std::size_t width = xv.cols();
    require(xv.rows() == layout.batch * layout.tokens && width % layout.heads == 0,
            "split_heads: layout does not match " + shape_to_string(xv.shape()));
    const HeadIndex index{layout, width / layout.heads};
    Tensor<T> out({layout.batch * layout.heads, layout.tokens, index.head_dim});
    for (std::size_t b = 0; b < layout.batch; ++b) {
        for (std::size_t t = 0; t < layout.tokens; ++t) {
            for (std::size_t h = 0; h < layout.heads; ++h) {
                for (std::size_t e = 0; e < index.head_dim; ++e) {
                    out[index.split(b, t, h, e)] = xv[index.merged(b, t, h, e)];
                }
            }
        }
    }
    return push(std::move(out), needs(x), [x, index](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        const HeadLayout& l = index.layout;
        for (std::size_t b = 0; b < l.batch; ++b) {
            for (std::size_t t = 0; t < l.tokens; ++t) {
                for (std::size_t h = 0; h < l.heads; ++h) {
                    for (std::size_t e = 0; e < index.head_dim; ++e) {
                        dx[index.merged(b, t, h, e)] += dout[index.split(b, t, h, e)];
                    }
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::merge_heads(Var x, HeadLayout layout) {
    const Tensor<T>& xv = val(x.id);
    require(xv.rank() == 3 && xv.dim(0) == layout.batch * layout.heads && xv.dim(1) == layout.tokens,
            "merge_heads: layout does not match " + shape_to_string(xv.shape()));
    const HeadIndex index{layout, xv.dim(2)};
    Tensor<T> out({layout.batch * layout.tokens, layout.heads * index.head_dim});
    for (std::size_t b = 0; b < layout.batch; ++b) {
        for (std::size_t t = 0; t < layout.tokens; ++t) {
            for (std::size_t h = 0; h < layout.heads; ++h) {
                for (std::size_t e = 0; e < index.head_dim; ++e) {
                    out[index.merged(b, t, h, e)] = xv[index.split(b, t, h, e)];
                }
            }
        }
    }
    return push(std::move(out), needs(x), [x, index](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        const HeadLayout& l = index.layout;
        for (std::size_t b = 0; b < l.batch; ++b) {
            for (std::size_t t = 0; t < l.tokens; ++t) {
                for (std::size_t h = 0; h < l.heads; ++h) {
                    for (std::size_t e = 0; e < index.head_dim; ++e) {
                        dx[index.split(b, t, h, e)] += dout[index.merged(b, t, h, e)];
                    }
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::batched_matmul(Var a, Var b, bool transpose_b) {
    const Tensor<T>& av = val(a.id);
    const Tensor<T>& bv = val(b.id);
    require(av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0), "batched_matmul: rank-3 operands required");
    const std::size_t groups = av.dim(0);
    const std::size_t n = av.dim(1);
    const std::size_t k = av.dim(2);
    require((transpose_b ? bv.dim(2) : bv.dim(1)) == k, "batched_matmul: inner extents differ");
    const std::size_t m = transpose_b ? bv.dim(1) : bv.dim(2);
    Tensor<T> out({groups, n, m});
    for (std::size_t g = 0; g < groups; ++g) {
        auto c = as_matrix(out, n, m, g * n * m);
        const auto am = as_matrix(av, n, k, g * n * k);
        if (transpose_b) {
            c.noalias() = am * as_matrix(bv, m, k, g * m * k).transpose();
        } else {
            c.noalias() = am * as_matrix(bv, k, m, g * k * m);
        }
    }
    return push(std::move(out), needs(a) || needs(b),
                [a, b, transpose_b, groups, n, k, m](Graph& gr, std::size_t self) {
                    const Tensor<T>& dout = gr.grad_of(self);
                    const Tensor<T>& av = gr.val(a.id);
                    const Tensor<T>& bv = gr.val(b.id);
                    Tensor<T>* da = gr.needs(a) ? &gr.grad_buffer(a.id) : nullptr;
                    Tensor<T>* db = gr.needs(b) ? &gr.grad_buffer(b.id) : nullptr;
                    for (std::size_t g = 0; g < groups; ++g) {
                        const auto dc = as_matrix(dout, n, m, g * n * m);
                        const auto am = as_matrix(av, n, k, g * n * k);
                        if (transpose_b) {
                            const auto bm = as_matrix(bv, m, k, g * m * k);
                            if (da != nullptr) {
                                as_matrix(*da, n, k, g * n * k).noalias() += dc * bm;
                            }
                            if (db != nullptr) {
                                as_matrix(*db, m, k, g * m * k).noalias() += dc.transpose() * am;
                            }
                        } else {
                            const auto bm = as_matrix(bv, k, m, g * k * m);
                            if (da != nullptr) {
                                as_matrix(*da, n, k, g * n * k).noalias() += dc * bm.transpose();
                            }
                            if (db != nullptr) {
                                as_matrix(*db, k, m, g * k * m).noalias() += am.transpose() * dc;
                            }
                        }
                    }
                });
}

template <typename T>
Var Graph<T>::causal_mask(Var scores) {
    const Tensor<T>& sv = val(scores.id);
    require(sv.rank() == 3 && sv.dim(1) == sv.dim(2), "causal_mask: scores must be {G,T,T}");
    const std::size_t tokens = sv.dim(1);
    Tensor<T> out = sv;
    for (std::size_t g = 0; g < sv.dim(0); ++g) {
        for (std::size_t i = 0; i < tokens; ++i) {
            for (std::size_t j = i + 1; j < tokens; ++j) {
                out[(g * tokens + i) * tokens + j] = -std::numeric_limits<T>::infinity();
            }
        }
    }
    return push(std::move(out), needs(scores), [scores, tokens](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(scores.id);
        const std::size_t groups = dout.size() / (tokens * tokens);
        for (std::size_t gi = 0; gi < groups; ++gi) {
            for (std::size_t i = 0; i < tokens; ++i) {
                for (std::size_t j = 0; j <= i; ++j) {
                    const std::size_t idx = (gi * tokens + i) * tokens + j;
                    dx[idx] += dout[idx];
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::softmax(Var x) {
    const Tensor<T>& xv = val(x.id);
    const std::size_t width = xv.cols();
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        const T* row = xv.ptr() + r * width;
        T* orow = out.ptr() + r * width;
        T max_v = row[0];
        for (std::size_t c = 1; c < width; ++c) {
            max_v = std::max(max_v, row[c]);
        }
        T denom = 0;
        for (std::size_t c = 0; c < width; ++c) {
            orow[c] = std::exp(row[c] - max_v);
            denom += orow[c];
        }
        for (std::size_t c = 0; c < width; ++c) {
            orow[c] /= denom;
        }
    }
    return push(std::move(out), needs(x), [x, width](Graph& g, std::size_t self) {
        const Tensor<T>& y = g.val(self);
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            T dot = 0;
            for (std::size_t c = 0; c < width; ++c) {
                dot += dout[r * width + c] * y[r * width + c];
            }
            for (std::size_t c = 0; c < width; ++c) {
                dx[r * width + c] += y[r * width + c] * (dout[r * width + c] - dot);
            }
        }
    });
}

template <typename T>
Var Graph<T>::add_positional(Var x, Var positional, std::size_t tokens) {
    const Tensor<T>& xv = val(x.id);
    const Tensor<T>& pv = val(positional.id);
    const std::size_t width = xv.cols();
    require(xv.rows() % tokens == 0 && pv.cols() == width && pv.rows() >= tokens,
            "add_positional: positional table " + shape_to_string(pv.shape()) + " does not cover " +
                std::to_string(tokens) + " tokens of width " + std::to_string(width));
    Tensor<T> out = xv;
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        const std::size_t t = r % tokens;
        for (std::size_t c = 0; c < width; ++c) {
            out[r * width + c] += pv[t * width + c];
        }
    }
    return push(std::move(out), needs(x) || needs(positional), [x, positional, tokens, width](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        if (g.needs(x)) {
            Tensor<T>& dx = g.grad_buffer(x.id);
            for (std::size_t i = 0; i < dout.size(); ++i) {
                dx[i] += dout[i];
            }
        }
        if (g.needs(positional)) {
            Tensor<T>& dp = g.grad_buffer(positional.id);
            for (std::size_t r = 0; r < dout.rows(); ++r) {
                const std::size_t t = r % tokens;
                for (std::size_t c = 0; c < width; ++c) {
                    dp[t * width + c] += dout[r * width + c];
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::mean_tokens(Var x, std::size_t batch, std::size_t tokens) {
    const Tensor<T>& xv = val(x.id);
    const std::size_t width = xv.cols();
    require(xv.rows() == batch * tokens, "mean_tokens: expected " + std::to_string(batch * tokens) + " rows");
    Tensor<T> out({batch, width});
    const T inv = static_cast<T>(1) / static_cast<T>(tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < tokens; ++t) {
            for (std::size_t c = 0; c < width; ++c) {
                out[b * width + c] += xv[(b * tokens + t) * width + c];
            }
        }
        for (std::size_t c = 0; c < width; ++c) {
            out[b * width + c] *= inv;
        }
    }
    return push(std::move(out), needs(x), [x, batch, tokens, width, inv](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < tokens; ++t) {
                for (std::size_t c = 0; c < width; ++c) {
                    dx[(b * tokens + t) * width + c] += dout[b * width + c] * inv;
                }
            }
        }
    });
}

template <typename T>
Var Graph<T>::row_scale(Var x, std::span<const T> per_sample, std::size_t tokens) {
    const Tensor<T>& xv = val(x.id);
    const std::size_t width = xv.cols();
    require(xv.rows() == per_sample.size() * tokens, "row_scale: factor count does not match batch");
    std::vector<T> factors(per_sample.begin(), per_sample.end());
    Tensor<T> out = xv;
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            out[r * width + c] *= factors[r / tokens];
        }
    }
    return push(std::move(out), needs(x), [x, factors = std::move(factors), tokens, width](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dx = g.grad_buffer(x.id);
        for (std::size_t r = 0; r < dout.rows(); ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                dx[r * width + c] += dout[r * width + c] * factors[r / tokens];
            }
        }
    });
}

template <typename T>
Var Graph<T>::embedding(Var table, std::span<const int> ids) {
    const Tensor<T>& tv = val(table.id);
    const std::size_t width = tv.cols();
    Tensor<T> out({ids.size(), width});
    std::vector<int> idx(ids.begin(), ids.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < tv.rows(), "embedding: id out of range");
        std::copy_n(tv.ptr() + static_cast<std::size_t>(idx[i]) * width, width, out.ptr() + i * width);
    }
    return push(std::move(out), needs(table), [table, idx = std::move(idx), width](Graph& g, std::size_t self) {
        const Tensor<T>& dout = g.grad_of(self);
        Tensor<T>& dt = g.grad_buffer(table.id);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const std::size_t row = static_cast<std::size_t>(idx[i]);
            for (std::size_t c = 0; c < width; ++c) {
                dt[row * width + c] += dout[i * width + c];
            }
        }
    });
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor<T>& lv = val(logits.id);
    const std::size_t n = lv.rows();
    const std::size_t classes = lv.cols();
    require(labels.size() == n, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(n) + " rows");
    Tensor<T> dlogits({n, classes});
    T total = 0;
    for (std::size_t r = 0; r < n; ++r) {
        require(labels[r] >= 0, "cross_entropy: negative label");
        auto ce = softmax_cross_entropy<T>(std::span<const T>(lv.ptr() + r * classes, classes),
                                           static_cast<std::size_t>(labels[r]));
        total += ce.loss;
        std::copy(ce.grad.begin(), ce.grad.end(), dlogits.ptr() + r * classes);
    }
    const T inv_n = static_cast<T>(1) / static_cast<T>(n);
    return push(Tensor<T>({1}, {total * inv_n}), needs(logits),
                [logits, dlogits = std::move(dlogits), inv_n](Graph& g, std::size_t self) {
                    const T d = g.grad_of(self)[0] * inv_n;
                    Tensor<T>& dx = g.grad_buffer(logits.id);
                    for (std::size_t i = 0; i < dlogits.size(); ++i) {
                        dx[i] += d * dlogits[i];
                    }
                });
}

template <typename T>
void Graph<T>::backward(Var loss) {
    require(loss.valid() && loss.id < nodes_.size(), "backward: unknown node");
    if (nodes_[loss.id].value.size() != 1) {
        throw ContractViolation("backward: loss must be scalar, got shape " +
                                shape_to_string(nodes_[loss.id].value.shape()));
    }
    if (!nodes_[loss.id].needs_grad) {
        return;
    }
    grad_buffer(loss.id)[0] = static_cast<T>(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.needs_grad && !node.grad.empty() && node.backward) {
            node.backward(*this, i);
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace bridgelab

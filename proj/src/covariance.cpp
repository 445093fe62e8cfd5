// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bridgelab/data.hpp"
#include "bridgelab/format.hpp"
#include "bridgelab/graph.hpp"
#include "bridgelab/stats.hpp"

namespace bridgelab {

using nlohmann::json;

TensorD weight_second_moment(const TensorD& w, std::vector<std::string>* warnings) {
    if (w.rank() != 2 || w.dim(0) == 0) {
        throw ContractViolation("weight_second_moment: expected a non-empty [m, d] matrix, got " +
                                shape_to_string(w.shape()));
    }
    const std::size_t m = w.dim(0);
    const std::size_t d = w.dim(1);
    if (m < d && warnings != nullptr) {
        warnings->push_back("weight_second_moment: " + std::to_string(m) + " rows in dimension " +
                            std::to_string(d) + " give a rank-deficient estimate");
    }
    TensorD s({d, d});
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            const double wi = w(r, i);
            for (std::size_t j = i; j < d; ++j) {
                s(i, j) += wi * w(r, j);
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            s(i, j) /= static_cast<double>(m);
            s(j, i) = s(i, j);
        }
    }
    return s;
}

double subspace_alignment(const TensorD& a, const TensorD& b) {
    if (a.rank() != 2 || a.shape() != b.shape() || a.dim(1) == 0 || a.dim(1) > a.dim(0)) {
        throw ContractViolation("subspace_alignment: frames " + shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()) + " are not matching d x k frames");
    }
    if (orthonormality_error(a) > 1e-6 || orthonormality_error(b) > 1e-6) {
        throw ContractViolation("subspace_alignment: frame columns are not orthonormal");
    }
    const TensorD c = matmul(transpose(a), b);
    const double f = frobenius_norm(c);
    return std::clamp(f * f / static_cast<double>(a.dim(1)), 0.0, 1.0);
}

std::vector<std::size_t> max_weight_assignment(const TensorD& score) {
    if (score.rank() != 2 || score.dim(0) != score.dim(1)) {
        throw ContractViolation("max_weight_assignment: expected a square matrix");
    }
    // Kuhn-Munkres with potentials on the cost -score, 1-based internally.
    const std::size_t n = score.dim(0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) {
        assignment[p[j] - 1] = j - 1;
    }
    return assignment;
}

std::vector<std::pair<std::size_t, std::size_t>> degenerate_blocks(const std::vector<double>& values,
                                                                   double rel_tol) {
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= values.size(); ++i) {
        const bool split = i == values.size() ||
                           std::abs(values[i] - values[i - 1]) >
                               rel_tol * std::max(std::abs(values[i]), std::abs(values[i - 1]));
        if (split) {
            blocks.emplace_back(begin, i);
            begin = i;
        }
    }
    return blocks;
}

std::string TransferCurve::csv() const {
    CsvWriter out({"sigma", "tau"});
    for (const auto& p : pairs) {
        out.row({format_double(std::sqrt(p.sigma2)), format_double(std::sqrt(std::max(p.tau2, 0.0)))});
    }
    return out.str();
}

TransferCurve transfer_curve(const SymmetricEigen& data, const SymmetricEigen& weights, double rel_tol) {
    const std::size_t d = data.values.size();
    if (weights.values.size() != d || data.vectors.shape() != weights.vectors.shape()) {
        throw ContractViolation("transfer_curve: eigensystems of different dimension");
    }
    TensorD score({d, d});
    const TensorD overlap = matmul(transpose(data.vectors), weights.vectors);
    for (std::size_t i = 0; i < d * d; ++i) {
        score[i] = overlap[i] * overlap[i];
    }
    const auto assignment = max_weight_assignment(score);
    TransferCurve curve;
    curve.pairs.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        curve.pairs[i] = {i, assignment[i], data.values[i], weights.values[assignment[i]],
                          std::abs(overlap(i, assignment[i]))};
    }
    for (const auto& [b, e] : degenerate_blocks(data.values, rel_tol)) {
        std::vector<TransferPair> block(curve.pairs.begin() + static_cast<std::ptrdiff_t>(b),
                                        curve.pairs.begin() + static_cast<std::ptrdiff_t>(e));
        std::stable_sort(block.begin(), block.end(),
                         [](const TransferPair& x, const TransferPair& y) { return x.tau2 > y.tau2; });
        for (std::size_t i = b; i < e; ++i) {
            curve.pairs[i].weight_index = block[i - b].weight_index;
            curve.pairs[i].tau2 = block[i - b].tau2;
            curve.pairs[i].overlap = block[i - b].overlap;
        }
    }
    std::vector<double> s(d);
    std::vector<double> t(d);
    for (std::size_t i = 0; i < d; ++i) {
        s[i] = curve.pairs[i].sigma2;
        t[i] = curve.pairs[i].tau2;
    }
    curve.spearman = d >= 2 ? spearman(s, t) : 0.0;
    return curve;
}

BaselineSummary random_alignment_baseline(const TensorD& reference, std::size_t draws, std::uint64_t seed) {
    if (draws == 0) {
        throw ContractViolation("random_alignment_baseline: draws must be positive");
    }
    const std::size_t d = reference.dim(0);
    const std::size_t k = reference.dim(1);
    const RngStream root(seed, hash_string("covariance.baseline"));
    std::vector<double> scores(draws);
    for (std::size_t i = 0; i < draws; ++i) {
        scores[i] = subspace_alignment(reference, leading_columns(random_orthogonal(d, root.split(i)), k));
    }
    BaselineSummary s;
    s.draws = draws;
    s.mean = mean(scores);
    s.stddev = std::sqrt(variance(scores));
    s.p05 = quantile(scores, 0.05);
    s.p95 = quantile(scores, 0.95);
    return s;
}

// ---------------------------------------------------------------------------
// Theorem fixture

TrainConfig TheoremConfig::default_train() {
    TrainConfig t;
    t.optimizer = OptimizerKind::sgd;
    t.lr = 5e-4;
    t.weight_decay = 0.0;
    t.momentum = 0.0;
    t.cosine = false;
    t.epochs = 200;
    t.batch_size = 64;
    t.clip_norm = std::numeric_limits<double>::infinity();
    return t;
}

void TheoremConfig::validate() const {
    const std::size_t d = eigenvalues.size();
    if (d < 2 || k < 1 || k >= d) {
        throw SpecError("theorem check: need d >= 2 and 1 <= k < d");
    }
    if (hidden == 0 || samples == 0 || num_classes < 2) {
        throw SpecError("theorem check: hidden, samples must be positive and classes >= 2");
    }
    if (init_std < 0.0) {
        throw SpecError("theorem check: init_std must be non-negative");
    }
    train.validate();
}

json TheoremConfig::to_json() const {
    return {{"eigenvalues", eigenvalues},   {"hidden", hidden},
            {"samples", samples},           {"num_classes", num_classes},
            {"k", k},                       {"init_std", init_std}, {"activation", relu ? "relu" : "gelu"},
            {"seed", seed},                 {"rotation_seed", rotation_seed},
            {"rotation_check", rotation_check}, {"baseline_draws", baseline_draws},
            {"train", train.to_json()}};
}

json CovarianceReport::to_json() const {
    json curve = json::array();
    for (const auto& p : transfer.pairs) {
        curve.push_back({{"data_index", p.data_index},
                         {"weight_index", p.weight_index},
                         {"sigma2", p.sigma2},
                         {"tau2", p.tau2},
                         {"overlap", p.overlap}});
    }
    json j = {{"k", k},
              {"sigma2", sigma2},
              {"tau2_before", tau2_before},
              {"tau2_after", tau2_after},
              {"alignment_before", alignment_before},
              {"alignment_after", alignment_after},
              {"degenerate", degenerate},
              {"transfer", curve},
              {"spearman", transfer.spearman},
              {"baseline",
               {{"draws", baseline.draws},
                {"mean", baseline.mean},
                {"stddev", baseline.stddev},
                {"p05", baseline.p05},
                {"p95", baseline.p95}}},
              {"final_train_acc", final_train_acc},
              {"warnings", warnings}};
    if (!degenerate) {
        j["top_k_before"] = top_k_before();
        j["top_k_after"] = top_k_after();
    }
    j["rotated_alignment"] = rotated_alignment ? json(*rotated_alignment) : json(nullptr);
    return j;
}

TensorD covariance_preserving_rotation(const TensorD& q, const std::vector<double>& eigenvalues,
                                       std::uint64_t seed) {
    const std::size_t d = eigenvalues.size();
    if (q.shape() != Shape{d, d}) {
        throw ContractViolation("covariance_preserving_rotation: basis shape mismatch");
    }
    const RngStream root(seed, hash_string("covariance.invariance"));
    RngStream signs = root.split("signs");
    TensorD inner({d, d});
    for (const auto& [b, e] : degenerate_blocks(eigenvalues)) {
        const std::size_t n = e - b;
        if (n == 1) {
            inner(b, b) = signs.bernoulli(0.5) ? -1.0 : 1.0;
            continue;
        }
        const TensorD r = random_orthogonal(n, root.split(b));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                inner(b + i, b + j) = r(i, j);
            }
        }
    }
    return matmul(matmul(q, inner), transpose(q));
}

namespace {

struct NetResult {
    TensorD w_before;  // [m, d]
    TensorD w_after;
    double train_acc = 0.0;
};

TensorD first_layer_rows(const TensorF& weight) {
    // Graph layout is [d, m]; rows of the returned matrix are neurons.
    TensorD out({weight.dim(1), weight.dim(0)});
    for (std::size_t i = 0; i < weight.dim(0); ++i) {
        for (std::size_t j = 0; j < weight.dim(1); ++j) {
            out(j, i) = weight(i, j);
        }
    }
    return out;
}

NetResult train_one_hidden(const TheoremConfig& cfg, const TensorF& x, std::span<const int> labels) {
    const std::size_t n = x.dim(0);
    const std::size_t d = x.dim(1);
    const std::size_t m = cfg.hidden;
    const std::size_t c = cfg.num_classes;
    const RngStream init(cfg.seed, hash_string("covariance.init"));
    RngStream w1_rng = init.split("fc1");
    RngStream w2_rng = init.split("fc2");
    const double std1 = cfg.init_std > 0.0 ? cfg.init_std : 1.0 / std::sqrt(static_cast<double>(d));
    const double std2 = 1.0 / std::sqrt(static_cast<double>(m));
    ParamSet<float> params;
    TensorF w1({d, m});
    for (float& v : w1.data()) {
        v = static_cast<float>(w1_rng.normal(0.0, std1));
    }
    TensorF w2({m, c});
    for (float& v : w2.data()) {
        v = static_cast<float>(w2_rng.normal(0.0, std2));
    }
    params.add("fc1.weight", std::move(w1));
    params.add("fc1.bias", TensorF({m}));
    params.add("fc2.weight", std::move(w2));
    params.add("fc2.bias", TensorF({c}));

    NetResult out;
    out.w_before = first_layer_rows(params.at("fc1.weight"));
    const TrainConfig& tc = cfg.train;
    const std::vector<bool> all(params.count(), true);
    Optimizer opt(tc, params, all);
    const RngStream order_root(cfg.seed, hash_string("covariance.order"));
    const std::size_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
    const std::size_t total = steps_per_epoch * tc.epochs;
    std::size_t step = 0;
    std::vector<TensorF> grads(params.count());
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto order = order_root.split(epoch).permutation(n);
        for (std::size_t start = 0; start < n; start += tc.batch_size) {
            const std::size_t count = std::min(tc.batch_size, n - start);
            TensorF xb({count, d});
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::copy_n(x.ptr() + order[start + i] * d, d, xb.ptr() + i * d);
                yb[i] = labels[order[start + i]];
            }
            Graph<float> g;
            const BoundParams bound = bind_params(g, params, all);
            const Var z = g.linear(g.input(std::move(xb)), bound["fc1.weight"], bound["fc1.bias"]);
            const Var h = cfg.relu ? g.relu(z) : g.gelu(z);
            const Var logits = g.linear(h, bound["fc2.weight"], bound["fc2.bias"]);
            g.backward(g.cross_entropy(logits, yb));
            for (std::size_t i = 0; i < params.count(); ++i) {
                grads[i] = *g.grad(bound.vars[i]);
            }
            if (std::isfinite(tc.clip_norm)) {
                clip_global_norm<float>(grads, tc.clip_norm);
            }
            opt.step(params, grads, tc.cosine ? cosine_lr(step, total, tc.lr) : tc.lr);
            ++step;
        }
    }
    Graph<float> g;
    const BoundParams bound = bind_params(g, params, {});
    const Var z = g.linear(g.input(x), bound["fc1.weight"], bound["fc1.bias"]);
    const Var h = cfg.relu ? g.relu(z) : g.gelu(z);
    const TensorF& logits = g.value(g.linear(h, bound["fc2.weight"], bound["fc2.bias"]));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.ptr() + i * c;
        correct += static_cast<std::size_t>(std::max_element(row, row + c) - row == labels[i]);
    }
    out.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    out.w_after = first_layer_rows(params.at("fc1.weight"));
    return out;
}

std::vector<double> alignment_profile(const TensorD& data_vectors, const TensorD& weight_vectors) {
    const std::size_t d = data_vectors.dim(0);
    std::vector<double> out;
    for (std::size_t k = 1; k < d; ++k) {
        out.push_back(subspace_alignment(leading_columns(data_vectors, k), leading_columns(weight_vectors, k)));
    }
    return out;
}

TensorF to_float_rows(const TensorD& x) {
    TensorF out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(x[i]);
    }
    return out;
}

}  // namespace

CovarianceReport run_theorem_check(const TheoremConfig& cfg) {
    cfg.validate();
    const GaussianSource src = gaussian_source(cfg.eigenvalues, cfg.rotation_seed, cfg.samples, cfg.seed);
    const std::vector<int> zeros(cfg.samples, 0);
    const LabelTable labels = assign_random_labels(zeros, 1.0, cfg.num_classes, cfg.seed);

    CovarianceReport report;
    report.k = cfg.k;
    const SymmetricEigen data = eig_sym(src.covariance);
    report.sigma2 = data.values;
    report.data_vectors = data.vectors;
    const auto blocks = degenerate_blocks(data.values);
    report.degenerate = std::any_of(blocks.begin(), blocks.end(), [&](const auto& b) {
        return b.first < cfg.k && b.second > cfg.k;
    });
    if (report.degenerate) {
        report.warnings.push_back("top-" + std::to_string(cfg.k) +
                                  " data subspace is not unique (repeated eigenvalue); alignment is not meaningful");
    }

    const NetResult net = train_one_hidden(cfg, to_float_rows(src.samples), labels.effective);
    report.final_train_acc = net.train_acc;
    const SymmetricEigen before = eig_sym(weight_second_moment(net.w_before, &report.warnings));
    const SymmetricEigen after = eig_sym(weight_second_moment(net.w_after));
    report.tau2_before = before.values;
    report.tau2_after = after.values;
    report.weight_vectors = after.vectors;
    report.alignment_before = alignment_profile(data.vectors, before.vectors);
    report.alignment_after = alignment_profile(data.vectors, after.vectors);
    report.transfer = transfer_curve(data, after);
    report.baseline =
        random_alignment_baseline(leading_columns(data.vectors, cfg.k), cfg.baseline_draws, cfg.seed);

    if (cfg.rotation_check) {
        // x -> G x with G^T S G = S: same data distribution, same init and labels.
        const TensorD g = covariance_preserving_rotation(src.rotation, cfg.eigenvalues, cfg.rotation_seed);
        const TensorD rotated = matmul(src.samples, transpose(g));
        const NetResult paired = train_one_hidden(cfg, to_float_rows(rotated), labels.effective);
        const SymmetricEigen rot = eig_sym(weight_second_moment(paired.w_after));
        report.rotated_alignment =
            subspace_alignment(leading_columns(data.vectors, cfg.k), leading_columns(rot.vectors, cfg.k));
    }
    return report;
}

}  // namespace bridgelab

// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/activation.hpp"

#include <algorithm>

#include "bridgelab/format.hpp"

namespace bridgelab {

using nlohmann::json;

std::vector<double> token_average(const TensorF& a) {
    if (a.rank() != 2 || a.dim(0) == 0) {
        throw ContractViolation("token_average: expected [T, d_mlp], got " + shape_to_string(a.shape()));
    }
    const std::size_t t = a.dim(0);
    const std::size_t d = a.dim(1);
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            out[k] += static_cast<double>(a(i, k));
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(t);
    }
    return out;
}

std::size_t count_active(std::span<const double> averaged) {
    return static_cast<std::size_t>(std::count_if(averaged.begin(), averaged.end(), [](double v) { return v > 0.0; }));
}

double activation_ratio(const std::vector<std::vector<double>>& averaged) {
    if (averaged.empty() || averaged.front().empty()) {
        throw ContractViolation("activation_ratio: no activations");
    }
    const std::size_t d = averaged.front().size();
    std::size_t active = 0;
    for (const auto& row : averaged) {
        if (row.size() != d) {
            throw ContractViolation("activation_ratio: ragged neuron counts");
        }
        active += count_active(row);
    }
    return static_cast<double>(active) / static_cast<double>(averaged.size() * d);
}

json ActivationReport::to_json() const {
    return {{"tag", tag}, {"images", images}, {"tokens", tokens}, {"d_mlp", d_mlp}, {"active", active}, {"ratio", ratio}};
}

ActivationReport activation_report(const Model& model, const TensorF& images, std::string tag,
                                   std::size_t batch_size) {
    if (images.rank() != 4 || images.dim(0) == 0) {
        throw ContractViolation("activation_report: expected a non-empty [N, C, H, W] batch");
    }
    const std::size_t n = images.dim(0);
    const std::size_t per_image = images.size() / n;
    ActivationReport r;
    r.tag = std::move(tag);
    r.images = n;
    r.tokens = model.spec.tokens();
    r.d_mlp = model.spec.mlp_width();
    r.active.assign(model.spec.n_layers, 0);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        Shape shape = images.shape();
        shape[0] = count;
        TensorF batch(shape);
        std::copy_n(images.ptr() + start * per_image, count * per_image, batch.ptr());
        const ForwardCollect fc = forward_collect(model, batch);
        for (std::size_t layer = 0; layer < fc.activations.size(); ++layer) {
            const TensorF& a = fc.activations[layer];  // {B, T, d_mlp}
            for (std::size_t i = 0; i < count; ++i) {
                TensorF one({r.tokens, r.d_mlp});
                std::copy_n(a.ptr() + i * r.tokens * r.d_mlp, r.tokens * r.d_mlp, one.ptr());
                r.active[layer] += count_active(token_average(one));
            }
        }
    }
    for (const std::size_t a : r.active) {
        r.ratio.push_back(static_cast<double>(a) / static_cast<double>(n * r.d_mlp));
    }
    return r;
}

ActivationReport merge_reports(const ActivationReport& a, const ActivationReport& b) {
    if (a.active.size() != b.active.size() || a.d_mlp != b.d_mlp || a.tokens != b.tokens) {
        throw ContractViolation("merge_reports: reports describe different models");
    }
    ActivationReport m = a;
    m.images = a.images + b.images;
    for (std::size_t l = 0; l < m.active.size(); ++l) {
        m.active[l] += b.active[l];
        m.ratio[l] = static_cast<double>(m.active[l]) / static_cast<double>(m.images * m.d_mlp);
    }
    return m;
}

ActivationComparison compare_snapshots(const ActivationReport& before, const ActivationReport& after) {
    if (before.ratio.size() != after.ratio.size() || before.images != after.images ||
        before.tokens != after.tokens || before.d_mlp != after.d_mlp) {
        throw ContractViolation("compare_snapshots: snapshots differ in model spec or probe set (" +
                                std::to_string(before.ratio.size()) + " vs " + std::to_string(after.ratio.size()) +
                                " layers, " + std::to_string(before.images) + " vs " + std::to_string(after.images) +
                                " images)");
    }
    ActivationComparison c;
    c.before = before.ratio;
    c.after = after.ratio;
    for (std::size_t l = 0; l < before.ratio.size(); ++l) {
        c.delta.push_back(after.ratio[l] - before.ratio[l]);
        c.layers_increased += static_cast<std::size_t>(c.delta.back() > 0.0);
    }
    return c;
}

json ActivationComparison::to_json() const {
    return {{"r_before", before}, {"r_after", after}, {"delta", delta}, {"layers_increased", layers_increased}};
}

std::string ActivationComparison::csv() const {
    CsvWriter out({"layer", "r_before", "r_after", "delta"});
    for (std::size_t l = 0; l < delta.size(); ++l) {
        out.row({std::to_string(l + 1), format_double(before[l]), format_double(after[l]), format_double(delta[l])});
    }
    return out.str();
}

}  // namespace bridgelab

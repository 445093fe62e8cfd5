// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// GPT-2 style pre-norm transformer blocks, assembled either as a patch-based
// image classifier or as a small causal language model.
//
// Parameter naming follows GPT-2:
//   h.{i}.ln_1.{weight,bias}          h.{i}.attn.c_attn.{weight,bias}
//   h.{i}.attn.c_proj.{weight,bias}   h.{i}.ln_2.{weight,bias}
//   h.{i}.mlp.c_fc.{weight,bias}      h.{i}.mlp.c_proj.{weight,bias}
//   ln_f.{weight,bias}
// Classifier:  patch_embed.{weight,bias}, pos_embed, head.{weight,bias}
// Language model: wte, wpe, lm_head.weight
// Linear weights are stored [in, out].

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bridgelab/graph.hpp"
#include "bridgelab/rng.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab {

// Ordered set of named tensors. Insertion order is the canonical order used for
// flattening, checkpoints and reports.
template <typename T>
class ParamSet {
public:
    void add(std::string name, Tensor<T> value);

    bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }
    Tensor<T>& at(std::string_view name);
    const Tensor<T>& at(std::string_view name) const;

    std::size_t count() const noexcept { return entries_.size(); }
    std::size_t numel() const noexcept;
    const std::string& name(std::size_t i) const { return entries_.at(i).first; }
    Tensor<T>& tensor(std::size_t i) { return entries_.at(i).second; }
    const Tensor<T>& tensor(std::size_t i) const { return entries_.at(i).second; }
    std::vector<std::string> names() const;

    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> flat);

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& [n, t] : entries_) {
            out.add(n, t.template cast<U>());
        }
        return out;
    }

    // Same names with zero-filled tensors of the same shapes.
    ParamSet zeros_like() const;

    bool operator==(const ParamSet& other) const { return entries_ == other.entries_; }

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

enum class TaskHead { classifier, language_model };

struct ModelSpec {
    std::size_t n_layers = 2;
    std::size_t d_model = 32;
    std::size_t n_heads = 2;
    std::size_t d_mlp = 0;        // 0 means 4 * d_model
    std::size_t max_tokens = 16;  // positional table length
    TaskHead head = TaskHead::classifier;
    std::size_t num_classes = 10;
    std::size_t vocab = 256;
    std::size_t image_extent = 8;
    std::size_t channels = 3;
    std::size_t patch_size = 4;
    bool causal_patches = false;  // classifier only; the LM is always causal

    std::size_t mlp_width() const noexcept { return d_mlp == 0 ? 4 * d_model : d_mlp; }
    std::size_t grid() const noexcept { return patch_size == 0 ? 0 : image_extent / patch_size; }
    std::size_t tokens() const noexcept { return grid() * grid(); }
    std::size_t patch_dim() const noexcept { return channels * patch_size * patch_size; }

    // Throws SpecError describing the first violated invariant.
    void validate() const;
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
// Missing keys keep their defaults; throws SpecError on malformed values.
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Closed-form parameter count:
//   block   = 2d (ln_1) + d·3d + 3d (c_attn) + d·d + d (c_proj) + 2d (ln_2)
//             + d·m + m (c_fc) + m·d + d (mlp c_proj)
//   body    = L·block + 2d (ln_f)
//   classifier += P·d + d (patch_embed) + T_max·d (pos_embed) + d·C + C (head)
//   LM         += V·d (wte) + T_max·d (wpe) + d·V (lm_head)
std::size_t expected_parameter_count(const ModelSpec& spec);

struct FreezeSelector {
    enum class Mode { all, none, first, last };
    Mode mode = Mode::all;
    std::size_t k = 0;

    static FreezeSelector all() { return {}; }
    static FreezeSelector none() { return {Mode::none, 0}; }
    static FreezeSelector first(std::size_t k) { return {Mode::first, k}; }
    static FreezeSelector last(std::size_t k) { return {Mode::last, k}; }
    // "all", "none", "first:K", "last:K"
    static FreezeSelector parse(std::string_view text);
    std::string to_string() const;
};

struct Model {
    ModelSpec spec;
    ParamSet<float> params;
    std::vector<bool> block_trainable;

    // Block tensors follow their block's flag; everything else (embeddings,
    // ln_f, heads) is always trainable.
    bool is_trainable(std::string_view name) const;
};

// Block index encoded in a parameter name ("h.3.mlp..." -> 3).
std::optional<std::size_t> block_index(std::string_view name);

Model build_classifier(const ModelSpec& spec, const RngStream& init);
Model build_toy_lm(const ModelSpec& spec, const RngStream& init);

// Copies every block tensor and ln_f from `src` into `dst` bit-exactly. Throws
// TransplantError naming offending tensors when architectures differ.
class TransplantError : public Error {
public:
    using Error::Error;
};
Model transplant_blocks(const Model& src, const Model& dst);

Model apply_freeze(const Model& model, const FreezeSelector& selector);

// ---------------------------------------------------------------------------
// Graph construction

struct BoundParams {
    std::vector<Var> vars;               // parallel to the ParamSet entries
    std::map<std::string, Var, std::less<>> by_name;
    Var operator[](std::string_view name) const;
};

template <typename T>
BoundParams bind_params(Graph<T>& graph, const ParamSet<T>& params, const std::vector<bool>& requires_grad);

struct DropPath {
    double rate = 0.0;
    RngStream* rng = nullptr;  // null or rate 0 disables
};

struct ForwardVars {
    Var logits;
    Var features;                 // classifier: pooled final states [B, d]
    std::vector<Var> hidden;      // output of each block, [B*T, d]
    std::vector<Var> mlp_act;     // post-GELU MLP activations, [B*T, d_mlp]
};

// images: [B, C, H, W]
template <typename T>
ForwardVars classifier_graph(Graph<T>& graph, const ModelSpec& spec, const BoundParams& params,
                             const Tensor<T>& images, DropPath drop = {});

// ids: [B * T] token ids, row-major by sample.
template <typename T>
ForwardVars lm_graph(Graph<T>& graph, const ModelSpec& spec, const BoundParams& params, std::span<const int> ids,
                     std::size_t batch, std::size_t seq_len);

// Patch rows [B*T, C*p*p] in token-major order (row-major over the patch grid).
template <typename T>
Tensor<T> patchify(const ModelSpec& spec, const Tensor<T>& images);

struct ForwardCollect {
    TensorF logits;                    // [B, C]
    TensorF features;                  // [B, d]
    std::vector<TensorF> hidden;       // {B, T, d} per block
    std::vector<TensorF> activations;  // {B, T, d_mlp} per block
};

// Evaluation-mode forward pass (no drop-path) exposing intermediate states.
ForwardCollect forward_collect(const Model& model, const TensorF& images);

}  // namespace bridgelab

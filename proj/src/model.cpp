// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/model.hpp"

#include <charconv>
#include <cmath>

namespace bridgelab {

// ---------------------------------------------------------------------------
// ParamSet

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> value) {
    if (name.empty()) {
        throw ContractViolation("ParamSet: empty tensor name");
    }
    if (index_.count(name) != 0) {
        throw ContractViolation("ParamSet: duplicate tensor name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
Tensor<T>& ParamSet<T>::at(std::string_view name) {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw ContractViolation("ParamSet: no tensor named '" + std::string(name) + "'");
    }
    return entries_[it->second].second;
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(std::string_view name) const {
    return const_cast<ParamSet*>(this)->at(name);
}

template <typename T>
std::size_t ParamSet<T>::numel() const noexcept {
    std::size_t n = 0;
    for (const auto& entry : entries_) {
        n += entry.second.size();
    }
    return n;
}

template <typename T>
std::vector<std::string> ParamSet<T>::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& entry : entries_) {
        out.push_back(entry.first);
    }
    return out;
}

template <typename T>
std::vector<double> ParamSet<T>::flatten() const {
    std::vector<double> flat;
    flat.reserve(numel());
    for (const auto& entry : entries_) {
        for (const T v : entry.second.data()) {
            flat.push_back(static_cast<double>(v));
        }
    }
    return flat;
}

template <typename T>
void ParamSet<T>::assign_flat(std::span<const double> flat) {
    if (flat.size() != numel()) {
        throw ContractViolation("ParamSet::assign_flat: length " + std::to_string(flat.size()) + " != " +
                                std::to_string(numel()));
    }
    std::size_t pos = 0;
    for (auto& entry : entries_) {
        for (T& v : entry.second.data()) {
            v = static_cast<T>(flat[pos++]);
        }
    }
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    for (const auto& [n, t] : entries_) {
        out.add(n, Tensor<T>(t.shape()));
    }
    return out;
}

template class ParamSet<float>;
template class ParamSet<double>;

// ---------------------------------------------------------------------------
// Specs and selectors

void ModelSpec::validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0) {
        throw SpecError("model spec: n_layers, d_model and n_heads must be positive");
    }
    if (d_model % n_heads != 0) {
        throw SpecError("model spec: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                        std::to_string(n_heads));
    }
    if (head == TaskHead::classifier) {
        if (num_classes < 2) {
            throw SpecError("model spec: classifier needs at least 2 classes");
        }
        if (patch_size == 0 || channels == 0 || image_extent % patch_size != 0 || image_extent < patch_size) {
            throw SpecError("model spec: patch size " + std::to_string(patch_size) + " does not tile image extent " +
                            std::to_string(image_extent));
        }
        if (max_tokens < tokens()) {
            throw SpecError("model spec: max_tokens " + std::to_string(max_tokens) + " < patch count " +
                            std::to_string(tokens()));
        }
    } else {
        if (vocab < 2) {
            throw SpecError("model spec: language model needs a vocabulary of at least 2");
        }
        if (max_tokens < 2) {
            throw SpecError("model spec: language model needs max_tokens >= 2");
        }
    }
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
    return {{"n_layers", spec.n_layers},
            {"d_model", spec.d_model},
            {"n_heads", spec.n_heads},
            {"d_mlp", spec.mlp_width()},
            {"max_tokens", spec.max_tokens},
            {"head", spec.head == TaskHead::classifier ? "classifier" : "language_model"},
            {"num_classes", spec.num_classes},
            {"vocab", spec.vocab},
            {"image_extent", spec.image_extent},
            {"channels", spec.channels},
            {"patch_size", spec.patch_size},
            {"causal_patches", spec.causal_patches}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    try {
        s.n_layers = j.value("n_layers", s.n_layers);
        s.d_model = j.value("d_model", s.d_model);
        s.n_heads = j.value("n_heads", s.n_heads);
        s.d_mlp = j.value("d_mlp", s.d_mlp);
        s.max_tokens = j.value("max_tokens", s.max_tokens);
        const std::string head = j.value("head", std::string("classifier"));
        if (head == "classifier") {
            s.head = TaskHead::classifier;
        } else if (head == "language_model") {
            s.head = TaskHead::language_model;
        } else {
            throw SpecError("model spec: unknown head '" + head + "'");
        }
        s.num_classes = j.value("num_classes", s.num_classes);
        s.vocab = j.value("vocab", s.vocab);
        s.image_extent = j.value("image_extent", s.image_extent);
        s.channels = j.value("channels", s.channels);
        s.patch_size = j.value("patch_size", s.patch_size);
        s.causal_patches = j.value("causal_patches", s.causal_patches);
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("model spec: ") + e.what());
    }
    return s;
}

std::size_t expected_parameter_count(const ModelSpec& spec) {
    const std::size_t d = spec.d_model;
    const std::size_t m = spec.mlp_width();
    const std::size_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * m + m) + (m * d + d);
    std::size_t total = spec.n_layers * block + 2 * d;
    if (spec.head == TaskHead::classifier) {
        total += spec.patch_dim() * d + d + spec.max_tokens * d + d * spec.num_classes + spec.num_classes;
    } else {
        total += spec.vocab * d + spec.max_tokens * d + d * spec.vocab;
    }
    return total;
}

FreezeSelector FreezeSelector::parse(std::string_view text) {
    if (text == "all") {
        return all();
    }
    if (text == "none") {
        return none();
    }
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw SpecError("freeze selector: expected all, none, first:K or last:K, got '" + std::string(text) + "'");
    }
    const std::string_view mode = text.substr(0, colon);
    const std::string_view count = text.substr(colon + 1);
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), k);
    if (ec != std::errc{} || ptr != count.data() + count.size()) {
        throw SpecError("freeze selector: bad layer count in '" + std::string(text) + "'");
    }
    if (mode == "first") {
        return first(k);
    }
    if (mode == "last") {
        return last(k);
    }
    throw SpecError("freeze selector: unknown mode '" + std::string(mode) + "'");
}

std::string FreezeSelector::to_string() const {
    switch (mode) {
        case Mode::all:
            return "all";
        case Mode::none:
            return "none";
        case Mode::first:
            return "first:" + std::to_string(k);
        case Mode::last:
            return "last:" + std::to_string(k);
    }
    return "all";
}

std::optional<std::size_t> block_index(std::string_view name) {
    if (name.substr(0, 2) != "h.") {
        return std::nullopt;
    }
    const std::string_view rest = name.substr(2);
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), index);
    if (ec != std::errc{} || ptr == rest.data() || ptr == rest.data() + rest.size() || *ptr != '.') {
        return std::nullopt;
    }
    return index;
}

bool Model::is_trainable(std::string_view name) const {
    const auto block = block_index(name);
    if (!block) {
        return true;
    }
    return *block < block_trainable.size() && block_trainable[*block];
}

// ---------------------------------------------------------------------------
// Construction

namespace {

constexpr double kInitStd = 0.02;

TensorF normal_tensor(Shape shape, const RngStream& init, const std::string& name) {
    RngStream rng = init.split(name);
    TensorF t(std::move(shape));
    for (float& v : t.data()) {
        v = static_cast<float>(rng.normal(0.0, kInitStd));
    }
    return t;
}

void add_blocks(ParamSet<float>& params, const ModelSpec& spec, const RngStream& init) {
    const std::size_t d = spec.d_model;
    const std::size_t m = spec.mlp_width();
    for (std::size_t i = 0; i < spec.n_layers; ++i) {
        const std::string p = "h." + std::to_string(i) + ".";
        params.add(p + "ln_1.weight", TensorF::full({d}, 1.0F));
        params.add(p + "ln_1.bias", TensorF({d}));
        params.add(p + "attn.c_attn.weight", normal_tensor({d, 3 * d}, init, p + "attn.c_attn.weight"));
        params.add(p + "attn.c_attn.bias", TensorF({3 * d}));
        params.add(p + "attn.c_proj.weight", normal_tensor({d, d}, init, p + "attn.c_proj.weight"));
        params.add(p + "attn.c_proj.bias", TensorF({d}));
        params.add(p + "ln_2.weight", TensorF::full({d}, 1.0F));
        params.add(p + "ln_2.bias", TensorF({d}));
        params.add(p + "mlp.c_fc.weight", normal_tensor({d, m}, init, p + "mlp.c_fc.weight"));
        params.add(p + "mlp.c_fc.bias", TensorF({m}));
        params.add(p + "mlp.c_proj.weight", normal_tensor({m, d}, init, p + "mlp.c_proj.weight"));
        params.add(p + "mlp.c_proj.bias", TensorF({d}));
    }
    params.add("ln_f.weight", TensorF::full({d}, 1.0F));
    params.add("ln_f.bias", TensorF({d}));
}

}  // namespace

Model build_classifier(const ModelSpec& spec_in, const RngStream& init) {
    ModelSpec spec = spec_in;
    spec.head = TaskHead::classifier;
    spec.validate();
    const std::size_t d = spec.d_model;
    Model model;
    model.spec = spec;
    model.params.add("patch_embed.weight", normal_tensor({spec.patch_dim(), d}, init, "patch_embed.weight"));
    model.params.add("patch_embed.bias", TensorF({d}));
    model.params.add("pos_embed", normal_tensor({spec.max_tokens, d}, init, "pos_embed"));
    add_blocks(model.params, spec, init);
    model.params.add("head.weight", normal_tensor({d, spec.num_classes}, init, "head.weight"));
    model.params.add("head.bias", TensorF({spec.num_classes}));
    model.block_trainable.assign(spec.n_layers, true);
    return model;
}

Model build_toy_lm(const ModelSpec& spec_in, const RngStream& init) {
    ModelSpec spec = spec_in;
    spec.head = TaskHead::language_model;
    spec.validate();
    const std::size_t d = spec.d_model;
    Model model;
    model.spec = spec;
    model.params.add("wte", normal_tensor({spec.vocab, d}, init, "wte"));
    model.params.add("wpe", normal_tensor({spec.max_tokens, d}, init, "wpe"));
    add_blocks(model.params, spec, init);
    model.params.add("lm_head.weight", normal_tensor({d, spec.vocab}, init, "lm_head.weight"));
    model.block_trainable.assign(spec.n_layers, true);
    return model;
}

namespace {

bool transplanted(std::string_view name) {
    return block_index(name).has_value() || name.substr(0, 5) == "ln_f.";
}

}  // namespace

Model transplant_blocks(const Model& src, const Model& dst) {
    const ModelSpec& s = src.spec;
    const ModelSpec& t = dst.spec;
    if (s.d_model != t.d_model || s.n_heads != t.n_heads || s.mlp_width() != t.mlp_width()) {
        throw TransplantError("transplant: block geometry differs (d_model " + std::to_string(s.d_model) + "/" +
                              std::to_string(t.d_model) + ", heads " + std::to_string(s.n_heads) + "/" +
                              std::to_string(t.n_heads) + ", d_mlp " + std::to_string(s.mlp_width()) + "/" +
                              std::to_string(t.mlp_width()) + ")");
    }
    Model out = dst;
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < dst.params.count(); ++i) {
        const std::string& name = dst.params.name(i);
        if (!transplanted(name)) {
            continue;
        }
        if (!src.params.contains(name)) {
            problems.push_back(name + " (absent in source)");
            continue;
        }
        const TensorF& from = src.params.at(name);
        if (from.shape() != dst.params.tensor(i).shape()) {
            problems.push_back(name + " (shape " + shape_to_string(from.shape()) + " vs " +
                               shape_to_string(dst.params.tensor(i).shape()) + ")");
            continue;
        }
        out.params.tensor(i) = from;
    }
    for (std::size_t i = 0; i < src.params.count(); ++i) {
        const std::string& name = src.params.name(i);
        if (transplanted(name) && !dst.params.contains(name)) {
            problems.push_back(name + " (absent in destination)");
        }
    }
    if (!problems.empty()) {
        std::string msg = "transplant: incompatible tensors:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw TransplantError(msg);
    }
    return out;
}

Model apply_freeze(const Model& model, const FreezeSelector& selector) {
    const std::size_t layers = model.spec.n_layers;
    const bool counted = selector.mode == FreezeSelector::Mode::first || selector.mode == FreezeSelector::Mode::last;
    if (counted && (selector.k < 1 || selector.k > layers)) {
        throw SpecError("freeze selector " + selector.to_string() + " invalid for " + std::to_string(layers) +
                        " layers");
    }
    Model out = model;
    for (std::size_t i = 0; i < layers; ++i) {
        switch (selector.mode) {
            case FreezeSelector::Mode::all:
                out.block_trainable[i] = true;
                break;
            case FreezeSelector::Mode::none:
                out.block_trainable[i] = false;
                break;
            case FreezeSelector::Mode::first:
                out.block_trainable[i] = i < selector.k;
                break;
            case FreezeSelector::Mode::last:
                out.block_trainable[i] = i >= layers - selector.k;
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph construction

Var BoundParams::operator[](std::string_view name) const {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
        throw ContractViolation("model graph: missing parameter '" + std::string(name) + "'");
    }
    return it->second;
}

template <typename T>
BoundParams bind_params(Graph<T>& graph, const ParamSet<T>& params, const std::vector<bool>& requires_grad) {
    BoundParams bound;
    bound.vars.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        const bool grad = i < requires_grad.size() ? static_cast<bool>(requires_grad[i]) : false;
        const Var v = graph.param(params.tensor(i), grad);
        bound.vars.push_back(v);
        bound.by_name.emplace(params.name(i), v);
    }
    return bound;
}

template <typename T>
Tensor<T> patchify(const ModelSpec& spec, const Tensor<T>& images) {
    const std::size_t c = spec.channels;
    const std::size_t e = spec.image_extent;
    const std::size_t p = spec.patch_size;
    const std::size_t g = spec.grid();
    if (images.rank() != 4 || images.dim(1) != c || images.dim(2) != e || images.dim(3) != e) {
        throw ContractViolation("patchify: expected images [B, " + std::to_string(c) + ", " + std::to_string(e) +
                                ", " + std::to_string(e) + "], got " + shape_to_string(images.shape()));
    }
    const std::size_t batch = images.dim(0);
    const std::size_t tokens = g * g;
    const std::size_t pd = spec.patch_dim();
    Tensor<T> out({batch * tokens, pd});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t gy = 0; gy < g; ++gy) {
            for (std::size_t gx = 0; gx < g; ++gx) {
                T* row = out.ptr() + (b * tokens + gy * g + gx) * pd;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t py = 0; py < p; ++py) {
                        for (std::size_t px = 0; px < p; ++px) {
                            row[(ch * p + py) * p + px] =
                                images[((b * c + ch) * e + gy * p + py) * e + gx * p + px];
                        }
                    }
                }
            }
        }
    }
    return out;
}

namespace {

template <typename T>
std::vector<T> drop_path_factors(std::size_t batch, DropPath drop) {
    std::vector<T> factors(batch, static_cast<T>(1));
    if (drop.rng == nullptr || drop.rate <= 0.0) {
        return factors;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - drop.rate));
    for (auto& f : factors) {
        f = drop.rng->bernoulli(drop.rate) ? T{0} : keep_scale;
    }
    return factors;
}

template <typename T>
Var transformer_block(Graph<T>& g, const ModelSpec& spec, const BoundParams& params, std::size_t layer, Var x,
                      HeadLayout layout, bool causal, DropPath drop, ForwardVars& out) {
    const std::string p = "h." + std::to_string(layer) + ".";
    const std::size_t d = spec.d_model;
    const T eps = static_cast<T>(1e-5);
    const bool dropping = drop.rng != nullptr && drop.rate > 0.0;
    const std::vector<T> factors = dropping ? drop_path_factors<T>(layout.batch, drop) : std::vector<T>{};

    const Var h = g.layer_norm(x, params[p + "ln_1.weight"], params[p + "ln_1.bias"], eps);
    const Var qkv = g.linear(h, params[p + "attn.c_attn.weight"], params[p + "attn.c_attn.bias"]);
    const Var q = g.split_heads(g.slice_cols(qkv, 0, d), layout);
    const Var k = g.split_heads(g.slice_cols(qkv, d, d), layout);
    const Var v = g.split_heads(g.slice_cols(qkv, 2 * d, d), layout);
    Var scores = g.scale(g.batched_matmul(q, k, true), static_cast<T>(1.0 / std::sqrt(double(d / layout.heads))));
    if (causal) {
        scores = g.causal_mask(scores);
    }
    const Var ctx = g.merge_heads(g.batched_matmul(g.softmax(scores), v, false), layout);
    Var attn = g.linear(ctx, params[p + "attn.c_proj.weight"], params[p + "attn.c_proj.bias"]);
    if (dropping) {
        attn = g.row_scale(attn, factors, layout.tokens);
    }
    x = g.add(x, attn);

    const Var h2 = g.layer_norm(x, params[p + "ln_2.weight"], params[p + "ln_2.bias"], eps);
    const Var act = g.gelu(g.linear(h2, params[p + "mlp.c_fc.weight"], params[p + "mlp.c_fc.bias"]));
    out.mlp_act.push_back(act);
    Var mlp = g.linear(act, params[p + "mlp.c_proj.weight"], params[p + "mlp.c_proj.bias"]);
    if (dropping) {
        mlp = g.row_scale(mlp, factors, layout.tokens);
    }
    x = g.add(x, mlp);
    out.hidden.push_back(x);
    return x;
}

}  // namespace

template <typename T>
ForwardVars classifier_graph(Graph<T>& g, const ModelSpec& spec, const BoundParams& params, const Tensor<T>& images,
                             DropPath drop) {
    const std::size_t batch = images.dim(0);
    const std::size_t tokens = spec.tokens();
    const HeadLayout layout{batch, tokens, spec.n_heads};
    ForwardVars out;
    const Var patches = g.input(patchify(spec, images));
    Var x = g.linear(patches, params["patch_embed.weight"], params["patch_embed.bias"]);
    x = g.add_positional(x, params["pos_embed"], tokens);
    for (std::size_t layer = 0; layer < spec.n_layers; ++layer) {
        x = transformer_block(g, spec, params, layer, x, layout, spec.causal_patches, drop, out);
    }
    x = g.layer_norm(x, params["ln_f.weight"], params["ln_f.bias"], static_cast<T>(1e-5));
    out.features = g.mean_tokens(x, batch, tokens);
    out.logits = g.linear(out.features, params["head.weight"], params["head.bias"]);
    return out;
}

template <typename T>
ForwardVars lm_graph(Graph<T>& g, const ModelSpec& spec, const BoundParams& params, std::span<const int> ids,
                     std::size_t batch, std::size_t seq_len) {
    if (ids.size() != batch * seq_len || seq_len > spec.max_tokens) {
        throw ContractViolation("lm_graph: " + std::to_string(ids.size()) + " ids for batch " +
                                std::to_string(batch) + " x " + std::to_string(seq_len));
    }
    const HeadLayout layout{batch, seq_len, spec.n_heads};
    ForwardVars out;
    Var x = g.embedding(params["wte"], ids);
    x = g.add_positional(x, params["wpe"], seq_len);
    for (std::size_t layer = 0; layer < spec.n_layers; ++layer) {
        x = transformer_block(g, spec, params, layer, x, layout, true, DropPath{}, out);
    }
    x = g.layer_norm(x, params["ln_f.weight"], params["ln_f.bias"], static_cast<T>(1e-5));
    out.features = x;
    out.logits = g.matmul(x, params["lm_head.weight"]);
    return out;
}

ForwardCollect forward_collect(const Model& model, const TensorF& images) {
    const ModelSpec& spec = model.spec;
    if (spec.head != TaskHead::classifier) {
        throw ContractViolation("forward_collect: classifier model required");
    }
    Graph<float> g;
    const BoundParams bound = bind_params(g, model.params, std::vector<bool>(model.params.count(), false));
    const ForwardVars vars = classifier_graph(g, spec, bound, images);
    const std::size_t batch = images.dim(0);
    const std::size_t tokens = spec.tokens();
    ForwardCollect out;
    out.logits = g.value(vars.logits);
    out.features = g.value(vars.features);
    for (const Var h : vars.hidden) {
        out.hidden.push_back(g.value(h).reshaped({batch, tokens, spec.d_model}));
    }
    for (const Var a : vars.mlp_act) {
        out.activations.push_back(g.value(a).reshaped({batch, tokens, spec.mlp_width()}));
    }
    return out;
}

template BoundParams bind_params<float>(Graph<float>&, const ParamSet<float>&, const std::vector<bool>&);
template BoundParams bind_params<double>(Graph<double>&, const ParamSet<double>&, const std::vector<bool>&);
template TensorF patchify<float>(const ModelSpec&, const TensorF&);
template TensorD patchify<double>(const ModelSpec&, const TensorD&);
template ForwardVars classifier_graph<float>(Graph<float>&, const ModelSpec&, const BoundParams&, const TensorF&,
                                             DropPath);
template ForwardVars classifier_graph<double>(Graph<double>&, const ModelSpec&, const BoundParams&, const TensorD&,
                                              DropPath);
template ForwardVars lm_graph<float>(Graph<float>&, const ModelSpec&, const BoundParams&, std::span<const int>,
                                     std::size_t, std::size_t);
template ForwardVars lm_graph<double>(Graph<double>&, const ModelSpec&, const BoundParams&, std::span<const int>,
                                      std::size_t, std::size_t);

}  // namespace bridgelab

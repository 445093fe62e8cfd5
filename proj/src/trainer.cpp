// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "bridgelab/checkpoint.hpp"
#include "bridgelab/format.hpp"
#include "bridgelab/parallel.hpp"
#include "bridgelab/rng.hpp"

namespace bridgelab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

std::string optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

std::string stage_name(Stage stage) {
    switch (stage) {
        case Stage::bridge:
            return "bridge";
        case Stage::adapt:
            return "adapt";
        case Stage::linear_probe:
            return "linear-probe";
    }
    return "bridge";
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw SpecError("train config: lr must be positive");
    }
    if (!(clip_norm > 0.0)) {
        throw SpecError("train config: clip_norm must be positive");
    }
    if (epochs < 1) {
        throw SpecError("train config: epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw SpecError("train config: batch_size must be at least 1");
    }
    if (!(weight_decay >= 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
        throw SpecError("train config: weight_decay must be >= 0 and momentum in [0, 1)");
    }
    if (!(drop_path >= 0.0 && drop_path < 1.0)) {
        throw SpecError("train config: drop_path must lie in [0, 1)");
    }
}

json TrainConfig::to_json() const {
    return {{"optimizer", optimizer_name(optimizer)},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"momentum", momentum},
            {"cosine", cosine},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"clip_norm", std::isinf(clip_norm) ? json("inf") : json(clip_norm)},
            {"drop_path", drop_path},
            {"seed", seed},
            {"stage", stage_name(stage)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    static const std::set<std::string> known{"optimizer", "lr",        "weight_decay", "momentum",
                                             "cosine",    "epochs",    "batch_size",   "clip_norm",
                                             "drop_path", "seed",      "stage"};
    if (!j.is_object()) {
        throw SpecError("train config: expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (known.count(key) == 0) {
            throw SpecError("train config: unknown key '" + key + "'");
        }
    }
    TrainConfig c;
    try {
        if (j.contains("optimizer")) {
            const auto name = j.at("optimizer").get<std::string>();
            if (name == "sgd") {
                c.optimizer = OptimizerKind::sgd;
            } else if (name == "adam") {
                c.optimizer = OptimizerKind::adam;
            } else {
                throw SpecError("train config: unknown optimizer '" + name + "'");
            }
        }
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.momentum = j.value("momentum", c.momentum);
        c.cosine = j.value("cosine", c.cosine);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("clip_norm")) {
            const json& clip = j.at("clip_norm");
            c.clip_norm = clip.is_string() && clip.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                             : clip.get<double>();
        }
        c.drop_path = j.value("drop_path", c.drop_path);
        c.seed = j.value("seed", c.seed);
        if (j.contains("stage")) {
            const auto name = j.at("stage").get<std::string>();
            if (name == "bridge") {
                c.stage = Stage::bridge;
            } else if (name == "adapt") {
                c.stage = Stage::adapt;
            } else if (name == "linear-probe") {
                c.stage = Stage::linear_probe;
            } else {
                throw SpecError("train config: unknown stage '" + name + "'");
            }
        }
    } catch (const json::exception& e) {
        throw SpecError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

double cosine_lr(std::size_t step, std::size_t total, double lr0) {
    if (step > total) {
        throw ContractViolation("cosine_lr: step " + std::to_string(step) + " beyond total " + std::to_string(total));
    }
    if (total == 0) {
        return lr0;
    }
    if (step == total) {
        return 0.0;
    }
    if (2 * step == total) {
        return lr0 / 2.0;
    }
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return lr0 * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

// ---------------------------------------------------------------------------
// Optimizer

bool is_layer_norm_param(std::string_view name) {
    return name.find("ln_") != std::string_view::npos;
}

Optimizer::Optimizer(const TrainConfig& cfg, const ParamSet<float>& params, std::vector<bool> trainable)
    : kind_(cfg.optimizer), weight_decay_(cfg.weight_decay), momentum_(cfg.momentum), trainable_(std::move(trainable)) {
    if (trainable_.size() != params.count()) {
        throw ContractViolation("optimizer: trainable mask size differs from parameter count");
    }
    decays_.resize(params.count());
    m_.resize(params.count());
    v_.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        decays_[i] = !is_layer_norm_param(params.name(i));
        if (!trainable_[i]) {
            continue;
        }
        if (kind_ == OptimizerKind::adam || momentum_ > 0.0) {
            m_[i].assign(params.tensor(i).size(), 0.0);
        }
        if (kind_ == OptimizerKind::adam) {
            v_[i].assign(params.tensor(i).size(), 0.0);
        }
    }
}

void Optimizer::step(ParamSet<float>& params, std::span<const TensorF> grads, double lr) {
    if (grads.size() != params.count()) {
        throw ContractViolation("optimizer: gradient count differs from parameter count");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.count(); ++i) {
        if (!trainable_[i]) {
            continue;
        }
        TensorF& p = params.tensor(i);
        const TensorF& g = grads[i];
        if (g.size() != p.size()) {
            throw ContractViolation("optimizer: gradient shape mismatch for " + params.name(i));
        }
        const double wd = decays_[i] ? weight_decay_ : 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k];
            double update = 0.0;
            if (kind_ == OptimizerKind::adam) {
                m_[i][k] = kBeta1 * m_[i][k] + (1.0 - kBeta1) * gk;
                v_[i][k] = kBeta2 * v_[i][k] + (1.0 - kBeta2) * gk * gk;
                update = (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + kEps);
            } else if (momentum_ > 0.0) {
                m_[i][k] = momentum_ * m_[i][k] + gk;
                update = m_[i][k];
            } else {
                update = gk;
            }
            const double pk = p[k];
            p[k] = static_cast<float>(pk - lr * (wd * pk + update));
        }
    }
}

// ---------------------------------------------------------------------------
// History

std::optional<std::size_t> TrainHistory::epochs_to_reach(double threshold) const {
    for (const auto& e : epochs) {
        if (e.train_acc >= threshold) {
            return e.epoch;
        }
    }
    return std::nullopt;
}

std::string TrainHistory::to_csv() const {
    CsvWriter csv({"epoch", "lr", "train_loss", "train_acc", "eval_acc"});
    for (const auto& e : epochs) {
        csv.row({std::to_string(e.epoch), format_double(e.lr), format_double(e.train_loss), format_double(e.train_acc),
                 e.eval_acc ? format_double(*e.eval_acc) : std::string()});
    }
    return csv.str();
}

// ---------------------------------------------------------------------------
// Generic mini-batch loop

namespace {

std::size_t argmax_row(const float* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c) {
        if (row[c] > row[best]) {
            best = c;
        }
    }
    return best;
}

TensorF gather_rows(const TensorF& src, std::span<const std::size_t> idx) {
    const std::size_t row = src.size() / src.dim(0);
    Shape shape = src.shape();
    shape[0] = idx.size();
    TensorF out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(src.ptr() + idx[i] * row, row, out.ptr() + i * row);
    }
    return out;
}

// Builds the logits for one batch. `drop` is null in evaluation mode.
using BatchForward = std::function<Var(Graph<float>&, const BoundParams&, std::span<const std::size_t>, RngStream*)>;

struct LoopInputs {
    std::size_t n = 0;
    std::span<const int> labels;
    std::function<std::optional<double>()> eval;
};

TrainHistory train_loop(ParamSet<float>& params, const std::vector<bool>& trainable, const TrainConfig& cfg,
                        const LoopInputs& in, const BatchForward& forward) {
    cfg.validate();
    if (in.labels.size() != in.n || in.n == 0) {
        throw ContractViolation("train: " + std::to_string(in.labels.size()) + " labels for " +
                                std::to_string(in.n) + " samples");
    }
    const auto started = std::chrono::steady_clock::now();
    Optimizer opt(cfg, params, trainable);
    const RngStream order_root(cfg.seed, hash_string("train.order"));
    RngStream drop_rng(cfg.seed, hash_string("train.droppath"));
    const std::size_t steps_per_epoch = (in.n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    std::size_t step = 0;
    TrainHistory history;
    std::vector<TensorF> grads(params.count());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = order_root.split(epoch).permutation(in.n);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = cfg.cosine ? cosine_lr(step, total_steps, cfg.lr) : cfg.lr;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < in.n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, in.n - start);
            const std::span<const std::size_t> idx(order.data() + start, count);
            std::vector<int> batch_labels(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch_labels[i] = in.labels[idx[i]];
            }
            Graph<float> g;
            const BoundParams bound = bind_params(g, params, trainable);
            const Var logits = forward(g, bound, idx, cfg.drop_path > 0.0 ? &drop_rng : nullptr);
            const Var loss = g.cross_entropy(logits, batch_labels);
            g.backward(loss);
            loss_sum += static_cast<double>(g.value(loss)[0]) * static_cast<double>(count);
            const TensorF& lv = g.value(logits);
            for (std::size_t i = 0; i < count; ++i) {
                correct += static_cast<std::size_t>(argmax_row(lv.ptr() + i * lv.cols(), lv.cols()) ==
                                                    static_cast<std::size_t>(batch_labels[i]));
            }
            for (std::size_t i = 0; i < params.count(); ++i) {
                const TensorF* gv = trainable[i] ? g.grad(bound.vars[i]) : nullptr;
                grads[i] = gv != nullptr ? *gv : TensorF(params.tensor(i).shape());
            }
            if (std::isfinite(cfg.clip_norm)) {
                clip_global_norm<float>(grads, cfg.clip_norm);
            }
            const double lr = cfg.cosine ? cosine_lr(step, total_steps, cfg.lr) : cfg.lr;
            opt.step(params, grads, lr);
            ++step;
        }
        rec.train_loss = loss_sum / static_cast<double>(in.n);
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(in.n);
        if (in.eval) {
            rec.eval_acc = in.eval();
        }
        history.epochs.push_back(rec);
    }
    history.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return history;
}

std::vector<bool> trainable_mask(const Model& model) {
    std::vector<bool> mask(model.params.count());
    for (std::size_t i = 0; i < model.params.count(); ++i) {
        mask[i] = model.is_trainable(model.params.name(i));
    }
    return mask;
}

void check_dataset(const Model& model, const Dataset& data) {
    const ModelSpec& s = model.spec;
    const TensorF& x = data.inputs;
    if (x.rank() != 4 || x.dim(1) != s.channels || x.dim(2) != s.image_extent || x.dim(3) != s.image_extent) {
        throw ContractViolation("dataset inputs " + shape_to_string(x.shape()) + " do not match the model's [N, " +
                                std::to_string(s.channels) + ", " + std::to_string(s.image_extent) + ", " +
                                std::to_string(s.image_extent) + "] images");
    }
    if (x.dim(0) != data.labels.size()) {
        throw ContractViolation("dataset has " + std::to_string(x.dim(0)) + " inputs but " +
                                std::to_string(data.labels.size()) + " labels");
    }
}

}  // namespace

double evaluate_loss(const Model& model, const Dataset& data, std::span<const int> labels, std::size_t batch_size) {
    check_dataset(model, data);
    if (labels.size() != data.size()) {
        throw ContractViolation("evaluate_loss: label count mismatch");
    }
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, data.size() - start);
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) {
            idx[i] = start + i;
        }
        Graph<float> g;
        const BoundParams bound = bind_params(g, model.params, {});
        const Var logits = classifier_graph(g, model.spec, bound, gather_rows(data.inputs, idx)).logits;
        const Var loss = g.cross_entropy(logits, labels.subspan(start, count));
        total += static_cast<double>(g.value(loss)[0]) * static_cast<double>(count);
    }
    return total / static_cast<double>(data.size());
}

double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t batch_size) {
    check_dataset(model, data);
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, data.size() - start);
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) {
            idx[i] = start + i;
        }
        Graph<float> g;
        const BoundParams bound = bind_params(g, model.params, {});
        const TensorF& lv = g.value(classifier_graph(g, model.spec, bound, gather_rows(data.inputs, idx)).logits);
        for (std::size_t i = 0; i < count; ++i) {
            correct += static_cast<std::size_t>(argmax_row(lv.ptr() + i * lv.cols(), lv.cols()) ==
                                                static_cast<std::size_t>(data.labels[start + i]));
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TensorF extract_features(const Model& model, const TensorF& images, std::size_t batch_size) {
    const std::size_t n = images.dim(0);
    TensorF out({n, model.spec.d_model});
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) {
            idx[i] = start + i;
        }
        Graph<float> g;
        const BoundParams bound = bind_params(g, model.params, {});
        const TensorF& f = g.value(classifier_graph(g, model.spec, bound, gather_rows(images, idx)).features);
        std::copy_n(f.ptr(), f.size(), out.ptr() + start * model.spec.d_model);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 1

TrainResult bridge_train(const Model& model_in, const Dataset& data, const LabelTable& labels, const TrainConfig& cfg,
                         const FreezeSelector& freeze, const TrainOptions& options) {
    check_dataset(model_in, data);
    if (labels.effective.size() != data.size()) {
        throw ContractViolation("bridge_train: " + std::to_string(labels.effective.size()) + " labels for " +
                                std::to_string(data.size()) + " samples");
    }
    TrainResult result;
    result.model = apply_freeze(model_in, freeze);
    result.theta0 = result.model.params;
    const std::vector<bool> mask = trainable_mask(result.model);
    const Model& live = result.model;
    LoopInputs in;
    in.n = data.size();
    in.labels = labels.effective;
    if (options.eval != nullptr) {
        in.eval = [&live, &options] { return evaluate_accuracy(live, *options.eval); };
    }
    // Drop-path rate is read from cfg inside the forward closure.
    const BatchForward forward = [&live, &data, &cfg](Graph<float>& g, const BoundParams& bound,
                                                      std::span<const std::size_t> idx, RngStream* drop) {
        const TensorF batch = gather_rows(data.inputs, idx);
        return classifier_graph(g, live.spec, bound, batch, DropPath{drop != nullptr ? cfg.drop_path : 0.0, drop})
            .logits;
    };
    result.history = train_loop(result.model.params, mask, cfg, in, forward);

    if (options.run_dir) {
        const auto& dir = *options.run_dir;
        std::filesystem::create_directories(dir);
        json config = {{"train", cfg.to_json()},
                       {"dataset", data.spec.to_json()},
                       {"labels", labels.metadata()},
                       {"freeze", freeze.to_string()},
                       {"model_spec", model_spec_to_json(result.model.spec)}};
        for (const auto& [k, v] : options.extra_config.items()) {
            config[k] = v;
        }
        write_json(dir / "config.json", config);
        write_text(dir / "history.csv", result.history.to_csv());
        Model start = result.model;
        start.params = result.theta0;
        save_model(start, dir / "theta0.brlb", {{"snapshot", "theta0"}});
        save_model(result.model, dir / "thetaT.brlb", {{"snapshot", "thetaT"}});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

ParamSet<float> fresh_head(const Model& model, std::uint64_t seed) {
    const std::size_t d = model.spec.d_model;
    const std::size_t c = model.spec.num_classes;
    RngStream rng = RngStream(seed, hash_string("adapt.head"));
    TensorF w({d, c});
    for (float& v : w.data()) {
        v = static_cast<float>(rng.normal(0.0, 0.02));
    }
    ParamSet<float> head;
    head.add("head.weight", std::move(w));
    head.add("head.bias", TensorF({c}));
    return head;
}

double probe_accuracy(const TensorF& features, std::span<const int> labels, const TensorF& w, const TensorF& b) {
    Graph<float> g;
    const TensorF& out = g.value(g.linear(g.input(features), g.input(w), g.input(b)));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += static_cast<std::size_t>(argmax_row(out.ptr() + i * out.cols(), out.cols()) ==
                                            static_cast<std::size_t>(labels[i]));
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

ProbeResult linear_probe(const Model& backbone, const Dataset& train, const Dataset* test, const TrainConfig& cfg) {
    check_dataset(backbone, train);
    const TensorF features = extract_features(backbone, train.inputs);
    ParamSet<float> head = fresh_head(backbone, cfg.seed);
    LoopInputs in;
    in.n = train.size();
    in.labels = train.labels;
    const BatchForward forward = [&features](Graph<float>& g, const BoundParams& bound,
                                             std::span<const std::size_t> idx, RngStream*) {
        return g.linear(g.input(gather_rows(features, idx)), bound["head.weight"], bound["head.bias"]);
    };
    ProbeResult result;
    result.history = train_loop(head, {true, true}, cfg, in, forward);
    result.weight = head.at("head.weight");
    result.bias = head.at("head.bias");
    result.train_acc = probe_accuracy(features, train.labels, result.weight, result.bias);
    if (test != nullptr) {
        check_dataset(backbone, *test);
        const TensorF test_features = extract_features(backbone, test->inputs);
        result.test_acc = probe_accuracy(test_features, test->labels, result.weight, result.bias);
    }
    return result;
}

AdaptResult adapt(const Model& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg,
                  bool finetune) {
    check_dataset(model, train);
    AdaptResult result;
    result.model = model;
    if (!finetune) {
        ProbeResult probe = linear_probe(model, train, test, cfg);
        result.model = apply_freeze(model, FreezeSelector::none());
        result.model.params.at("head.weight") = probe.weight;
        result.model.params.at("head.bias") = probe.bias;
        result.history = std::move(probe.history);
        result.train_acc = probe.train_acc;
        result.test_acc = probe.test_acc;
        return result;
    }
    const ParamSet<float> head = fresh_head(model, cfg.seed);
    result.model = apply_freeze(model, FreezeSelector::all());
    result.model.params.at("head.weight") = head.at("head.weight");
    result.model.params.at("head.bias") = head.at("head.bias");
    const Model& live = result.model;
    LoopInputs in;
    in.n = train.size();
    in.labels = train.labels;
    const BatchForward forward = [&live, &train, &cfg](Graph<float>& g, const BoundParams& bound,
                                                       std::span<const std::size_t> idx, RngStream* drop) {
        return classifier_graph(g, live.spec, bound, gather_rows(train.inputs, idx),
                                DropPath{drop != nullptr ? cfg.drop_path : 0.0, drop})
            .logits;
    };
    result.history = train_loop(result.model.params, trainable_mask(result.model), cfg, in, forward);
    result.train_acc = evaluate_accuracy(result.model, train);
    if (test != nullptr) {
        result.test_acc = evaluate_accuracy(result.model, *test);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Toy LM pretraining

std::vector<int> zipf_markov_corpus(const CorpusSpec& spec) {
    if (spec.vocab < 2 || spec.seq_len < 2 || spec.sequences == 0 || !(spec.zipf_exponent > 0.0)) {
        throw ContractViolation("zipf_markov_corpus: need vocab >= 2, seq_len >= 2, sequences > 0, exponent > 0");
    }
    const std::size_t v = spec.vocab;
    std::vector<double> cdf(v);
    double acc = 0.0;
    for (std::size_t r = 0; r < v; ++r) {
        acc += std::pow(static_cast<double>(r + 1), -spec.zipf_exponent);
        cdf[r] = acc;
    }
    for (double& c : cdf) {
        c /= acc;
    }
    // Transition tables are part of the "language", fixed by the corpus seed.
    const RngStream design(spec.seed, hash_string("corpus.design"));
    std::vector<std::vector<std::size_t>> next(v);
    for (std::size_t a = 0; a < v; ++a) {
        next[a] = design.split(a).permutation(v);
    }
    const std::vector<std::size_t> start = design.split("start").permutation(v);
    RngStream rng(spec.seed, hash_string("corpus.samples"));
    auto zipf_rank = [&] {
        const double u = rng.uniform();
        return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) % v;
    };
    std::vector<int> ids(spec.sequences * spec.seq_len);
    for (std::size_t s = 0; s < spec.sequences; ++s) {
        std::size_t tok = start[zipf_rank()];
        for (std::size_t t = 0; t < spec.seq_len; ++t) {
            ids[s * spec.seq_len + t] = static_cast<int>(tok);
            tok = next[tok][zipf_rank()];
        }
    }
    return ids;
}

PretrainResult pretrain_lm(const ModelSpec& spec_in, const CorpusSpec& corpus, const TrainConfig& cfg) {
    ModelSpec spec = spec_in;
    spec.head = TaskHead::language_model;
    spec.vocab = corpus.vocab;
    if (corpus.seq_len > spec.max_tokens + 1) {
        throw SpecError("pretrain_lm: sequence length exceeds the positional table");
    }
    PretrainResult result;
    result.model = build_toy_lm(spec, RngStream(cfg.seed, hash_string("pretrain.init")));
    const std::vector<int> ids = zipf_markov_corpus(corpus);
    const std::size_t span_len = corpus.seq_len - 1;

    cfg.validate();
    Optimizer opt(cfg, result.model.params, std::vector<bool>(result.model.params.count(), true));
    const RngStream order_root(cfg.seed, hash_string("pretrain.order"));
    const std::size_t steps_per_epoch = (corpus.sequences + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = steps_per_epoch * cfg.epochs;
    std::size_t step = 0;
    std::vector<TensorF> grads(result.model.params.count());
    const std::vector<bool> all(result.model.params.count(), true);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = order_root.split(epoch).permutation(corpus.sequences);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < corpus.sequences; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, corpus.sequences - start);
            std::vector<int> x(count * span_len);
            std::vector<int> y(count * span_len);
            for (std::size_t i = 0; i < count; ++i) {
                const int* seq = ids.data() + order[start + i] * corpus.seq_len;
                std::copy_n(seq, span_len, x.data() + i * span_len);
                std::copy_n(seq + 1, span_len, y.data() + i * span_len);
            }
            Graph<float> g;
            const BoundParams bound = bind_params(g, result.model.params, all);
            const Var logits = lm_graph(g, spec, bound, x, count, span_len).logits;
            const Var loss = g.cross_entropy(logits, y);
            g.backward(loss);
            loss_sum += static_cast<double>(g.value(loss)[0]) * static_cast<double>(count);
            for (std::size_t i = 0; i < grads.size(); ++i) {
                const TensorF* gv = g.grad(bound.vars[i]);
                grads[i] = gv != nullptr ? *gv : TensorF(result.model.params.tensor(i).shape());
            }
            if (std::isfinite(cfg.clip_norm)) {
                clip_global_norm<float>(grads, cfg.clip_norm);
            }
            opt.step(result.model.params, grads, cfg.cosine ? cosine_lr(step, total, cfg.lr) : cfg.lr);
            ++step;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(corpus.sequences));
    }
    return result;
}

Model pretrained_classifier(const Model& lm, const ModelSpec& classifier_spec, const RngStream& init) {
    return transplant_blocks(lm, build_classifier(classifier_spec, init));
}

// ---------------------------------------------------------------------------
// Sweep

std::uint64_t sweep_cell_seed(std::uint64_t base_seed, double lr, double wd) {
    return mix64(base_seed, mix64(std::bit_cast<std::uint64_t>(lr), std::bit_cast<std::uint64_t>(wd)));
}

std::vector<SweepCell> hparam_sweep(std::span<const double> lrs, std::span<const double> wds,
                                    const SweepPipeline& pipeline, std::uint64_t base_seed, std::size_t threads) {
    if (lrs.empty() || wds.empty()) {
        throw ContractViolation("hparam_sweep: learning-rate and weight-decay grids must be non-empty");
    }
    std::vector<SweepCell> cells;
    for (const double lr : lrs) {
        for (const double wd : wds) {
            SweepCell cell;
            cell.lr = lr;
            cell.weight_decay = wd;
            cell.seed = sweep_cell_seed(base_seed, lr, wd);
            cells.push_back(cell);
        }
    }
    // Each unit writes only its own slot: one arm of one cell.
    parallel_for(
        2 * cells.size(),
        [&](std::size_t unit) {
            SweepCell& cell = cells[unit / 2];
            const bool with = unit % 2 == 0;
            const double acc = pipeline(cell.lr, cell.weight_decay, with, cell.seed);
            (with ? cell.with_lbbt : cell.without_lbbt) = acc;
        },
        threads);
    return cells;
}

}  // namespace bridgelab

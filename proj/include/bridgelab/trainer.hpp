// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: random-label bridge training of a classifier, then
// downstream adaptation or linear probing on true labels. Also hosts the toy
// language-model pretraining used to manufacture "pretrained" blocks and the
// learning-rate x weight-decay sweep harness.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/data.hpp"
#include "bridgelab/model.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab {

enum class OptimizerKind { sgd, adam };
enum class Stage { bridge, adapt, linear_probe };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    double weight_decay = 0.05;  // decoupled
    double momentum = 0.0;       // sgd only
    bool cosine = true;          // cosine annealing to 0 over all steps
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    double clip_norm = 1.0;      // infinity disables clipping
    double drop_path = 0.0;
    std::uint64_t seed = 0;
    Stage stage = Stage::bridge;

    // Throws SpecError.
    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys keep defaults; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j);
};

std::string optimizer_name(OptimizerKind kind);
std::string stage_name(Stage stage);

// lr0 * (1 + cos(pi t / T)) / 2. Throws ContractViolation when t > T.
double cosine_lr(std::size_t step, std::size_t total, double lr0);

// Scales every gradient by max_norm / g when the global l2 norm g exceeds
// max_norm. Returns g (before clipping).
template <typename T>
double clip_global_norm(std::span<Tensor<T>> grads, double max_norm) {
    if (!(max_norm > 0.0)) {
        throw ContractViolation("clip_global_norm: max_norm must be positive");
    }
    double sq = 0.0;
    for (const auto& g : grads) {
        for (const T v : g.data()) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& g : grads) {
            for (T& v : g.data()) {
                v = static_cast<T>(static_cast<double>(v) * factor);
            }
        }
    }
    return norm;
}

// SGD (optionally with momentum) or bias-corrected Adam (0.9, 0.999, 1e-8),
// with decoupled weight decay p <- p - lr * (wd * p + update). Layer-norm
// tensors are exempt from decay. Optimizer state is kept in 64-bit.
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ParamSet<float>& params, std::vector<bool> trainable);

    // Updates trainable tensors in place; frozen tensors are never written.
    void step(ParamSet<float>& params, std::span<const TensorF> grads, double lr);
    std::size_t steps_taken() const noexcept { return t_; }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

private:
    OptimizerKind kind_;
    double weight_decay_;
    double momentum_;
    std::vector<bool> trainable_;
    std::vector<bool> decays_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

// Tensors exempt from weight decay (layer-norm gains and biases).
bool is_layer_norm_param(std::string_view name);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;        // at the epoch's first step
    double train_loss = 0.0;
    double train_acc = 0.0;  // running top-1 over the epoch's batches
    std::optional<double> eval_acc;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;  // informational; never written to reports

    // First epoch (1-based) whose train accuracy reaches `threshold`.
    std::optional<std::size_t> epochs_to_reach(double threshold) const;
    double final_train_acc() const { return epochs.empty() ? 0.0 : epochs.back().train_acc; }
    std::string to_csv() const;
};

struct TrainOptions {
    const Dataset* eval = nullptr;  // held-out set scored with its true labels
    std::optional<std::filesystem::path> run_dir;
    nlohmann::json extra_config = nlohmann::json::object();  // merged into config.json
};

struct TrainResult {
    Model model;
    TrainHistory history;
    ParamSet<float> theta0;
};

// Minimizes cross-entropy against labels.effective with only the blocks the
// selector leaves trainable. Writes config.json, history.csv, theta0.brlb and
// thetaT.brlb when options.run_dir is set.
TrainResult bridge_train(const Model& model, const Dataset& data, const LabelTable& labels, const TrainConfig& cfg,
                         const FreezeSelector& freeze, const TrainOptions& options = {});

// Top-1 accuracy in evaluation mode.
double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 256);
double evaluate_loss(const Model& model, const Dataset& data, std::span<const int> labels,
                     std::size_t batch_size = 256);

// Mean-pooled final features in evaluation mode, [N, d_model].
TensorF extract_features(const Model& model, const TensorF& images, std::size_t batch_size = 256);

struct ProbeResult {
    double train_acc = 0.0;
    double test_acc = 0.0;
    TrainHistory history;
    TensorF weight;  // [d, C]
    TensorF bias;    // [C]
};

// Single linear layer on frozen, evaluation-mode features, trained with the
// configured optimizer recipe on true labels. `test` may be null.
ProbeResult linear_probe(const Model& backbone, const Dataset& train, const Dataset* test, const TrainConfig& cfg);

struct AdaptResult {
    Model model;
    TrainHistory history;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

// Re-initializes the classification head (seeded from cfg.seed) and trains
// on true labels. With finetune=false the backbone stays frozen, which is
// exactly a linear probe; with finetune=true every tensor is trainable.
AdaptResult adapt(const Model& model, const Dataset& train, const Dataset* test, const TrainConfig& cfg,
                  bool finetune);

// ---------------------------------------------------------------------------
// Toy language-model pretraining

struct CorpusSpec {
    std::size_t vocab = 256;
    std::size_t sequences = 2048;
    std::size_t seq_len = 16;
    double zipf_exponent = 1.1;
    std::uint64_t seed = 0;
};

// Sequences whose first token is Zipf-distributed and whose transitions follow
// a Markov bigram: from token a, the next token is perm_a[r] with Zipf rank r.
// Returns ids row-major, [sequences * seq_len].
std::vector<int> zipf_markov_corpus(const CorpusSpec& spec);

struct PretrainResult {
    Model model;
    std::vector<double> epoch_loss;
};

PretrainResult pretrain_lm(const ModelSpec& spec, const CorpusSpec& corpus, const TrainConfig& cfg);

// Classifier whose blocks and ln_f come from `lm` and whose patch embedding,
// positional table and head are freshly initialized from `init`.
Model pretrained_classifier(const Model& lm, const ModelSpec& classifier_spec, const RngStream& init);

// ---------------------------------------------------------------------------
// Hyperparameter sweep

struct SweepCell {
    double lr = 0.0;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    double with_lbbt = 0.0;
    double without_lbbt = 0.0;
    double delta() const { return with_lbbt - without_lbbt; }
};

// pipeline(lr, wd, with_lbbt, seed) -> accuracy. Both arms of a cell share
// one seed derived from (base_seed, lr, wd) only, so cells are independent of
// execution order. Cells run on `threads` workers (0 = configured).
using SweepPipeline = std::function<double(double lr, double wd, bool with_lbbt, std::uint64_t seed)>;
std::vector<SweepCell> hparam_sweep(std::span<const double> lrs, std::span<const double> wds,
                                    const SweepPipeline& pipeline, std::uint64_t base_seed, std::size_t threads = 0);
std::uint64_t sweep_cell_seed(std::uint64_t base_seed, double lr, double wd);

}  // namespace bridgelab

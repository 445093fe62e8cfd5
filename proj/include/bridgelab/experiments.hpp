// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment pipelines built from a Recipe. The seed plan for run seed s:
//   bridge images    dataset.seed + s
//   random labels    labels.seed + s
//   test images      probes.seed + s
//   probe images     probes.seed + 100 + s   (activation and cluster sets)
//   probe-train set  probes.seed + 200 + s
//   classifier init  RngStream(s, 9), shared by pretrained and scratch arms
//   trainer seed     train.seed + s
// Every held-out image set uses the bridge set's class count, geometry and noise.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/activation.hpp"
#include "bridgelab/embedding.hpp"
#include "bridgelab/forensics.hpp"
#include "bridgelab/landscape.hpp"
#include "bridgelab/recipe.hpp"
#include "bridgelab/trainer.hpp"

namespace bridgelab {

inline constexpr std::uint64_t kInitStream = 9;
inline constexpr double kReachThreshold = 0.9;

class Pipeline {
public:
    explicit Pipeline(Recipe recipe);

    const Recipe& recipe() const { return recipe_; }

    // Pretrains on first use unless a model was supplied.
    const Model& language_model();
    void set_language_model(Model lm);
    const std::vector<double>& lm_epoch_loss() const { return lm_loss_; }

    Dataset bridge_set(std::uint64_t s) const;
    LabelTable bridge_labels(const Dataset& data, std::uint64_t s, double ratio) const;
    LabelTable bridge_labels(const Dataset& data, std::uint64_t s) const;
    Dataset test_set(std::uint64_t s) const;
    Dataset probe_train_set(std::uint64_t s) const;
    Dataset cluster_set(std::uint64_t s) const;
    Dataset activation_set(std::uint64_t s) const;

    Model initial_model(std::uint64_t s, bool pretrained);
    TrainConfig bridge_config(std::uint64_t s) const;
    TrainConfig probe_config(std::uint64_t s) const;
    TrainConfig adapt_config(std::uint64_t s) const;

private:
    Dataset images(std::size_t n, std::uint64_t seed) const;

    Recipe recipe_;
    std::optional<Model> lm_;
    std::vector<double> lm_loss_;
};

// Report envelope shared by every command.
nlohmann::json run_report(const Recipe& recipe, const std::string& command, nlohmann::json stages);

// Per-epoch curves: "seed,arm,epoch,lr,train_loss,train_acc,eval_acc".
struct CurveRun {
    std::uint64_t seed = 0;
    std::string arm;
    TrainHistory history;
};
std::string curves_csv(const std::vector<CurveRun>& runs);

struct MemorizationRow {
    std::uint64_t seed = 0;
    std::optional<std::size_t> pretrained_epochs;  // to reach the threshold
    std::optional<std::size_t> scratch_epochs;
    double pretrained_final = 0.0;
    double scratch_final = 0.0;
    std::size_t capacity_budget = 0;               // 0 when not run
    std::optional<std::size_t> capacity_epochs;    // scratch with the larger budget
};

struct MemorizationResult {
    double threshold = kReachThreshold;
    std::vector<MemorizationRow> rows;
    std::vector<CurveRun> curves;

    // Seeds where pretrained reaches the threshold strictly sooner.
    std::size_t wins() const;
    std::size_t capacity_reached() const;
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

// Paired pretrained and scratch bridge runs; with `capacity_factor` > 0 a
// further scratch run gets that multiple of the epoch budget.
MemorizationResult memorization_experiment(Pipeline& p, std::size_t capacity_factor = 0);

struct RatioResult {
    std::vector<double> ratios;
    std::vector<double> run_ratio;  // parallel to curves
    std::vector<CurveRun> curves;   // arm "pretrained" | "scratch", eval on the test set

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

RatioResult ratio_experiment(Pipeline& p, const std::vector<double>& ratios);

struct PartialResult {
    std::vector<std::string> selectors;
    std::vector<bool> run_random;   // parallel to curves
    std::vector<CurveRun> curves;   // arm = selector text

    std::optional<double> final_acc(std::uint64_t seed, bool random, const std::string& selector) const;
    // Random-label seeds with first:5 >= first:2 >= first:1.
    std::size_t ordered_seeds() const;
    // Random-label seeds with first:5 no more than `points` below all layers.
    std::size_t near_full_seeds(double points = 2.0) const;
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

PartialResult partial_experiment(Pipeline& p, const std::vector<std::string>& selectors, bool correct_labels,
                                 bool with_eval);

struct ProbeArm {
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct RepresentationRow {
    std::uint64_t seed = 0;
    ProbeArm lbbt;             // pretrained init, bridged
    ProbeArm pretrained;       // pretrained init, not bridged
    ProbeArm scratch;          // scratch init, not bridged
    ProbeArm scratch_bridged;  // scratch init, bridged
    ClusterQuality cluster_pretrained;  // raw hidden space after bridging
    ClusterQuality cluster_scratch;
    double pca_ari_pretrained = 0.0;
    double pca_ari_scratch = 0.0;
};

struct RepresentationResult {
    std::vector<RepresentationRow> rows;
    std::optional<EmbeddingReport> first_pretrained;  // first seed, for plotting
    std::optional<EmbeddingReport> first_scratch;

    // Seeds with lbbt > pretrained > scratch on held-out probe accuracy.
    std::size_t ordered_seeds() const;
    // Seeds with raw-space ARI higher for the pretrained arm.
    std::size_t ari_wins() const;
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

RepresentationResult representation_experiment(Pipeline& p, bool with_probes = true);

struct ActivationRow {
    std::uint64_t seed = 0;
    ActivationReport init;
    ActivationReport random;
    std::optional<ActivationReport> correct;
    ActivationComparison random_vs_init;
    std::optional<ActivationComparison> correct_vs_init;
};

struct ActivationResult {
    std::vector<ActivationRow> rows;

    nlohmann::json to_json() const;
    // "seed,layer,init,random,correct"
    std::string csv() const;
    void write(const std::filesystem::path& dir) const;
};

ActivationResult activation_experiment(Pipeline& p, bool with_correct);

struct WeightsResult {
    std::uint64_t seed = 0;
    OutlierReport pretrained;  // language-pretrained blocks in the classifier
    OutlierReport fresh;       // seeded fresh initialization

    nlohmann::json to_json() const;
    // "source,layer,tensors,n,outliers,max_abs,mean_excess_kurtosis"
    std::string layers_csv() const;
    void write(const std::filesystem::path& dir) const;
};

WeightsResult weights_experiment(Pipeline& p);

struct LandscapeArm {
    std::string arm;
    double loss_theta0 = 0.0;
    double loss_thetaT = 0.0;
    double direction_cosine = 0.0;
    SurfaceResult surface;  // centered on thetaT
    SpectrumReport spectrum;  // at theta0
};

struct LandscapeResult {
    std::uint64_t seed = 0;
    std::vector<LandscapeArm> arms;

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;
};

// Loss surface around a checkpoint pair on `data` with `labels`; the grid is
// centered on thetaT so its (0, 0) entry equals the returned final loss.
struct SurfaceScan {
    double loss_theta0 = 0.0;
    double loss_thetaT = 0.0;
    double direction_cosine = 0.0;
    SurfaceResult surface;
};
SurfaceScan scan_surface(const Model& theta0, const Model& thetaT, const Dataset& data, const std::vector<int>& labels,
                         std::size_t grid_alpha, std::size_t grid_beta, double span, bool normalize,
                         std::uint64_t seed);

LandscapeResult landscape_experiment(Pipeline& p, bool with_spectrum = true);

// Test accuracy in percent after bridging (pretrained or scratch init) and
// adaptation on the probe-train set.
double sweep_pipeline_score(Pipeline& p, double lr, double wd, bool with_lbbt, std::uint64_t seed);

std::vector<std::string> figure_ids();
// Runs one canned figure recipe and writes its CSV/JSON artifacts, report.json
// and notes.md under `dir`. Throws SpecError for unknown ids.
nlohmann::json run_figure(const std::string& id, bool smoke, const std::filesystem::path& dir,
                          const Model* lm = nullptr);
Recipe figure_recipe(const std::string& id, bool smoke);

}  // namespace bridgelab

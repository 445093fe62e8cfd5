// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment recipes: one JSON document describing data, labels, model,
// pretraining, bridge and adaptation stages, probes, outputs and seeds.
// Every section is schema-checked; unknown keys are rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/data.hpp"
#include "bridgelab/model.hpp"
#include "bridgelab/trainer.hpp"

namespace bridgelab {

inline constexpr const char* kToolVersion = "bridgelab 1.0.0";

struct LabelsSection {
    double ratio = 1.0;
    std::uint64_t seed = 200;  // per-run seed is added
    bool exclude_true_class = false;
};

struct PretrainSection {
    bool enabled = true;
    CorpusSpec corpus;
    TrainConfig train = default_train();

    static TrainConfig default_train();
};

struct BridgeSection {
    bool pretrained_init = true;
    std::string freeze = "all";
    TrainConfig train;
};

struct AdaptSection {
    bool finetune = false;
    TrainConfig train = default_train();

    static TrainConfig default_train();
};

struct SpectrumSection {
    std::size_t lanczos_steps = 32;
    std::size_t lanczos_starts = 8;
    std::size_t trace_probes = 64;
    std::size_t noise_probes = 8;
    std::size_t window_steps = 32;
    double window_lr = 1e-2;
};

// Held-out image sets are drawn with seed offsets from `seed`: test set at +0,
// activation and cluster probes at +100, probe-train set at +200, each plus
// the per-run seed.
struct ProbesSection {
    std::uint64_t seed = 300;
    std::size_t train_images = 2048;
    std::size_t test_images = 1024;
    std::size_t cluster_images = 1024;
    std::size_t activation_images = 256;
    std::size_t landscape_images = 256;
    double z = 6.0;
    std::size_t grid = 21;
    double grid_span = 1.0;
    bool normalize_directions = true;
    TrainConfig linear = default_linear();
    SpectrumSection spectrum;

    static TrainConfig default_linear();
};

struct Recipe {
    std::string name = "custom";
    DatasetSpec dataset = default_dataset();
    LabelsSection labels;
    ModelSpec model = default_model();
    PretrainSection pretrain;
    BridgeSection bridge;
    AdaptSection adapt;
    ProbesSection probes;
    std::string output = "runs";
    std::vector<std::uint64_t> seeds{0};

    static DatasetSpec default_dataset();
    static ModelSpec default_model();

    void validate() const;
    nlohmann::json to_json() const;
    // Throws SpecError naming the offending section and key.
    static Recipe from_json(const nlohmann::json& j);
    // 16 hex digits of FNV-1a over the canonical dump of to_json().
    std::string hash() const;

    // Language model matching the classifier's block geometry.
    ModelSpec lm_spec() const;
};

Recipe load_recipe(const std::string& path);

std::vector<std::string> preset_names();
// memorization | representation | partial. Throws SpecError for unknown names.
Recipe preset(const std::string& name);

// Shrinks sizes and epoch counts so a full pipeline runs in seconds while
// keeping the layer count and every seed offset.
Recipe smoke_scale(Recipe r);

std::string fnv1a_hex(const std::string& text);

}  // namespace bridgelab

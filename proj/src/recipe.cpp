// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/recipe.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace bridgelab {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& section) {
    if (!j.is_object()) {
        throw SpecError("recipe: section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (known.count(key) == 0) {
            throw SpecError("recipe: unknown key '" + key + "' in section '" + section + "'");
        }
        // Counts, sizes and seeds are unsigned; a negative integer would wrap.
        if (value.is_number_integer() && !value.is_number_unsigned() && value.get<std::int64_t>() < 0) {
            throw SpecError("recipe: negative value for '" + section + "." + key + "'");
        }
    }
}

TrainConfig train_from(const json& j, const std::string& section, Stage stage) {
    json copy = j;
    if (copy.is_object()) {
        for (const auto& [key, value] : copy.items()) {
            if (value.is_number_integer() && !value.is_number_unsigned() && value.get<std::int64_t>() < 0) {
                throw SpecError("recipe: negative value for '" + section + "." + key + "'");
            }
        }
    }
    if (copy.is_object() && !copy.contains("stage")) {
        copy["stage"] = stage_name(stage);
    }
    try {
        return TrainConfig::from_json(copy);
    } catch (const SpecError& e) {
        throw SpecError("recipe: " + section + ": " + e.what());
    }
}

json corpus_to_json(const CorpusSpec& c) {
    return {{"vocab", c.vocab},
            {"sequences", c.sequences},
            {"seq_len", c.seq_len},
            {"zipf_exponent", c.zipf_exponent},
            {"seed", c.seed}};
}

CorpusSpec corpus_from_json(const json& j) {
    check_keys(j, {"vocab", "sequences", "seq_len", "zipf_exponent", "seed"}, "pretrain.corpus");
    CorpusSpec c;
    c.vocab = j.value("vocab", c.vocab);
    c.sequences = j.value("sequences", c.sequences);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
    c.seed = j.value("seed", c.seed);
    return c;
}

json spectrum_to_json(const SpectrumSection& s) {
    return {{"lanczos_steps", s.lanczos_steps}, {"lanczos_starts", s.lanczos_starts},
            {"trace_probes", s.trace_probes},   {"noise_probes", s.noise_probes},
            {"window_steps", s.window_steps},   {"window_lr", s.window_lr}};
}

SpectrumSection spectrum_from_json(const json& j) {
    check_keys(j, {"lanczos_steps", "lanczos_starts", "trace_probes", "noise_probes", "window_steps", "window_lr"},
               "probes.spectrum");
    SpectrumSection s;
    s.lanczos_steps = j.value("lanczos_steps", s.lanczos_steps);
    s.lanczos_starts = j.value("lanczos_starts", s.lanczos_starts);
    s.trace_probes = j.value("trace_probes", s.trace_probes);
    s.noise_probes = j.value("noise_probes", s.noise_probes);
    s.window_steps = j.value("window_steps", s.window_steps);
    s.window_lr = j.value("window_lr", s.window_lr);
    return s;
}

}  // namespace

TrainConfig PretrainSection::default_train() {
    TrainConfig c;
    c.lr = 3e-3;
    c.epochs = 30;
    return c;
}

TrainConfig AdaptSection::default_train() {
    TrainConfig c;
    c.epochs = 20;
    c.stage = Stage::adapt;
    return c;
}

TrainConfig ProbesSection::default_linear() {
    TrainConfig c;
    c.lr = 1e-2;
    c.weight_decay = 0.0;
    c.epochs = 100;
    c.batch_size = 128;
    c.stage = Stage::linear_probe;
    return c;
}

DatasetSpec Recipe::default_dataset() {
    DatasetSpec d;
    d.kind = DataKind::synthetic_images;
    d.n = 512;
    d.seed = 100;
    return d;
}

ModelSpec Recipe::default_model() {
    ModelSpec m;
    m.n_layers = 4;
    return m;
}

void Recipe::validate() const {
    dataset.validate();
    model.validate();
    if (model.head != TaskHead::classifier) {
        throw SpecError("recipe: model.head must be classifier");
    }
    if (dataset.kind == DataKind::gaussian) {
        throw SpecError("recipe: gaussian datasets are only used by the covariance fixture");
    }
    if (dataset.num_classes != model.num_classes) {
        throw SpecError("recipe: dataset.num_classes must equal model.num_classes");
    }
    if (dataset.kind == DataKind::synthetic_images &&
        (dataset.extent != model.image_extent || dataset.channels != model.channels)) {
        throw SpecError("recipe: dataset image geometry must match the model");
    }
    if (!(labels.ratio >= 0.0 && labels.ratio <= 1.0)) {
        throw SpecError("recipe: labels.ratio must lie in [0, 1]");
    }
    const FreezeSelector sel = FreezeSelector::parse(bridge.freeze);
    if ((sel.mode == FreezeSelector::Mode::first || sel.mode == FreezeSelector::Mode::last) &&
        sel.k > model.n_layers) {
        throw SpecError("recipe: bridge.freeze selects more blocks than the model has");
    }
    pretrain.train.validate();
    bridge.train.validate();
    adapt.train.validate();
    probes.linear.validate();
    if (probes.test_images == 0 || probes.train_images == 0 || probes.cluster_images < 3 ||
        probes.activation_images == 0 || probes.landscape_images == 0) {
        throw SpecError("recipe: probe set sizes must be positive (cluster set needs at least 3)");
    }
    if (probes.landscape_images > dataset.n) {
        throw SpecError("recipe: probes.landscape_images exceeds dataset.n");
    }
    if (!(probes.z > 0.0)) {
        throw SpecError("recipe: probes.z must be positive");
    }
    if (probes.grid < 3 || probes.grid % 2 == 0 || probes.grid > 201) {
        throw SpecError("recipe: probes.grid must be odd and in [3, 201]");
    }
    if (!(probes.grid_span > 0.0)) {
        throw SpecError("recipe: probes.grid_span must be positive");
    }
    const SpectrumSection& s = probes.spectrum;
    if (s.lanczos_steps < 2 || s.lanczos_starts == 0 || s.trace_probes < 2 || s.noise_probes == 0 ||
        s.window_steps < 2 || !(s.window_lr > 0.0)) {
        throw SpecError("recipe: probes.spectrum needs >= 2 Lanczos steps, >= 2 trace probes, >= 2 window steps");
    }
    if (pretrain.enabled && (pretrain.corpus.vocab != model.vocab || pretrain.corpus.sequences == 0 ||
                             pretrain.corpus.seq_len < 2)) {
        throw SpecError("recipe: pretrain.corpus must match model.vocab and hold sequences of length >= 2");
    }
    if (seeds.empty()) {
        throw SpecError("recipe: seeds must not be empty");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw SpecError("recipe: seeds must be distinct");
    }
    if (output.empty()) {
        throw SpecError("recipe: output must not be empty");
    }
}

json Recipe::to_json() const {
    return {{"name", name},
            {"dataset", dataset.to_json()},
            {"labels", {{"ratio", labels.ratio}, {"seed", labels.seed}, {"exclude_true_class", labels.exclude_true_class}}},
            {"model", model_spec_to_json(model)},
            {"pretrain", {{"enabled", pretrain.enabled}, {"corpus", corpus_to_json(pretrain.corpus)},
                          {"train", pretrain.train.to_json()}}},
            {"bridge", {{"init", bridge.pretrained_init ? "pretrained" : "scratch"},
                        {"freeze", bridge.freeze},
                        {"train", bridge.train.to_json()}}},
            {"adapt", {{"finetune", adapt.finetune}, {"train", adapt.train.to_json()}}},
            {"probes", {{"seed", probes.seed},
                        {"train_images", probes.train_images},
                        {"test_images", probes.test_images},
                        {"cluster_images", probes.cluster_images},
                        {"activation_images", probes.activation_images},
                        {"landscape_images", probes.landscape_images},
                        {"z", probes.z},
                        {"grid", probes.grid},
                        {"grid_span", probes.grid_span},
                        {"normalize_directions", probes.normalize_directions},
                        {"linear", probes.linear.to_json()},
                        {"spectrum", spectrum_to_json(probes.spectrum)}}},
            {"output", output},
            {"seeds", seeds}};
}

Recipe Recipe::from_json(const json& j) {
    check_keys(j, {"name", "dataset", "labels", "model", "pretrain", "bridge", "adapt", "probes", "output", "seeds"},
               "root");
    Recipe r;
    try {
        r.name = j.value("name", r.name);
        if (j.contains("dataset")) {
            const json& d = j.at("dataset");
            check_keys(d, {"kind", "n", "num_classes", "extent", "dim", "channels", "seed", "noise", "path"},
                       "dataset");
            json merged = r.dataset.to_json();
            merged.update(d);
            r.dataset = DatasetSpec::from_json(merged);
        }
        if (j.contains("labels")) {
            const json& l = j.at("labels");
            check_keys(l, {"ratio", "seed", "exclude_true_class"}, "labels");
            r.labels.ratio = l.value("ratio", r.labels.ratio);
            r.labels.seed = l.value("seed", r.labels.seed);
            r.labels.exclude_true_class = l.value("exclude_true_class", r.labels.exclude_true_class);
        }
        if (j.contains("model")) {
            const json& m = j.at("model");
            check_keys(m, {"n_layers", "d_model", "n_heads", "d_mlp", "max_tokens", "head", "num_classes", "vocab",
                           "image_extent", "channels", "patch_size", "causal_patches"},
                       "model");
            json merged = model_spec_to_json(r.model);
            merged.update(m);
            r.model = model_spec_from_json(merged);
        }
        if (j.contains("pretrain")) {
            const json& p = j.at("pretrain");
            check_keys(p, {"enabled", "corpus", "train"}, "pretrain");
            r.pretrain.enabled = p.value("enabled", r.pretrain.enabled);
            if (p.contains("corpus")) {
                r.pretrain.corpus = corpus_from_json(p.at("corpus"));
            }
            if (p.contains("train")) {
                r.pretrain.train = train_from(p.at("train"), "pretrain.train", Stage::bridge);
            }
        }
        if (j.contains("bridge")) {
            const json& b = j.at("bridge");
            check_keys(b, {"init", "freeze", "train"}, "bridge");
            const std::string init = b.value("init", std::string("pretrained"));
            if (init != "pretrained" && init != "scratch") {
                throw SpecError("recipe: bridge.init must be 'pretrained' or 'scratch'");
            }
            r.bridge.pretrained_init = init == "pretrained";
            r.bridge.freeze = b.value("freeze", r.bridge.freeze);
            if (b.contains("train")) {
                r.bridge.train = train_from(b.at("train"), "bridge.train", Stage::bridge);
            }
        }
        if (j.contains("adapt")) {
            const json& a = j.at("adapt");
            check_keys(a, {"finetune", "train"}, "adapt");
            r.adapt.finetune = a.value("finetune", r.adapt.finetune);
            if (a.contains("train")) {
                r.adapt.train = train_from(a.at("train"), "adapt.train", Stage::adapt);
            }
        }
        if (j.contains("probes")) {
            const json& p = j.at("probes");
            check_keys(p, {"seed", "train_images", "test_images", "cluster_images", "activation_images",
                           "landscape_images", "z", "grid", "grid_span", "normalize_directions", "linear",
                           "spectrum"},
                       "probes");
            ProbesSection& s = r.probes;
            s.seed = p.value("seed", s.seed);
            s.train_images = p.value("train_images", s.train_images);
            s.test_images = p.value("test_images", s.test_images);
            s.cluster_images = p.value("cluster_images", s.cluster_images);
            s.activation_images = p.value("activation_images", s.activation_images);
            s.landscape_images = p.value("landscape_images", s.landscape_images);
            s.z = p.value("z", s.z);
            s.grid = p.value("grid", s.grid);
            s.grid_span = p.value("grid_span", s.grid_span);
            s.normalize_directions = p.value("normalize_directions", s.normalize_directions);
            if (p.contains("linear")) {
                s.linear = train_from(p.at("linear"), "probes.linear", Stage::linear_probe);
            }
            if (p.contains("spectrum")) {
                s.spectrum = spectrum_from_json(p.at("spectrum"));
            }
        }
        r.output = j.value("output", r.output);
        if (j.contains("seeds")) {
            r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        }
    } catch (const json::exception& e) {
        throw SpecError(std::string("recipe: ") + e.what());
    }
    r.validate();
    return r;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string Recipe::hash() const { return fnv1a_hex(to_json().dump()); }

ModelSpec Recipe::lm_spec() const {
    ModelSpec s = model;
    s.head = TaskHead::language_model;
    s.max_tokens = std::max(model.max_tokens, pretrain.corpus.seq_len);
    s.causal_patches = false;
    return s;
}

Recipe load_recipe(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw SpecError("recipe: cannot open '" + path + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SpecError("recipe: '" + path + "' is not valid JSON: " + e.what());
    }
    return Recipe::from_json(j);
}

std::vector<std::string> preset_names() { return {"memorization", "partial", "representation"}; }

Recipe preset(const std::string& name) {
    Recipe r;
    r.name = name;
    r.seeds = {0, 1, 2, 3, 4};
    if (name == "memorization") {
        r.dataset.noise = 0.5;
        r.bridge.train.lr = 3e-3;
        r.bridge.train.epochs = 100;
    } else if (name == "partial") {
        r.model.n_layers = 8;
        r.dataset.noise = 0.5;
        r.bridge.train.lr = 2e-3;
        r.bridge.train.epochs = 100;
    } else if (name == "representation") {
        r.dataset.noise = 0.05;
        r.bridge.train.lr = 1e-3;
        r.bridge.train.epochs = 60;
    } else {
        std::string valid;
        for (const auto& n : preset_names()) {
            valid += (valid.empty() ? "" : ", ") + n;
        }
        throw SpecError("unknown preset '" + name + "' (valid: " + valid + ")");
    }
    r.output = "runs/" + name;
    r.validate();
    return r;
}

Recipe smoke_scale(Recipe r) {
    r.name += "-smoke";
    r.dataset.n = 64;
    r.pretrain.corpus.sequences = 64;
    r.pretrain.train.epochs = 1;
    r.bridge.train.epochs = 3;
    r.adapt.train.epochs = 10;
    r.probes.linear.epochs = 10;
    r.probes.train_images = 64;
    r.probes.test_images = 64;
    r.probes.cluster_images = 64;
    r.probes.activation_images = 32;
    r.probes.landscape_images = 32;
    r.probes.grid = 5;
    r.probes.spectrum = {6, 2, 4, 2, 4, 1e-2};
    r.seeds = {r.seeds.front()};
    r.validate();
    return r;
}

}  // namespace bridgelab

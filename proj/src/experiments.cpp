// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/experiments.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "bridgelab/format.hpp"
#include "bridgelab/parallel.hpp"

namespace bridgelab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(Recipe recipe) : recipe_(std::move(recipe)) { recipe_.validate(); }

const Model& Pipeline::language_model() {
    if (!lm_) {
        if (!recipe_.pretrain.enabled) {
            throw SpecError("pipeline: pretrained init requested but pretrain.enabled is false");
        }
        PretrainResult r = pretrain_lm(recipe_.lm_spec(), recipe_.pretrain.corpus, recipe_.pretrain.train);
        lm_ = std::move(r.model);
        lm_loss_ = std::move(r.epoch_loss);
    }
    return *lm_;
}

void Pipeline::set_language_model(Model lm) {
    if (lm.spec.head != TaskHead::language_model) {
        throw SpecError("pipeline: supplied model is not a language model");
    }
    lm_ = std::move(lm);
    lm_loss_.clear();
}

Dataset Pipeline::images(std::size_t n, std::uint64_t seed) const {
    const DatasetSpec& d = recipe_.dataset;
    if (d.kind != DataKind::synthetic_images) {
        throw SpecError("pipeline: held-out probe sets need a synthetic_images dataset");
    }
    return synthetic_images(n, d.num_classes, d.extent, seed, d.noise, d.channels);
}

Dataset Pipeline::bridge_set(std::uint64_t s) const {
    const DatasetSpec& d = recipe_.dataset;
    if (d.kind == DataKind::cifar_binary) {
        Dataset data = cifar_import(d.path);
        if (d.n > 0 && d.n < data.size()) {
            std::vector<std::size_t> idx(d.n);
            for (std::size_t i = 0; i < d.n; ++i) {
                idx[i] = i;
            }
            data = subset(data, idx);
        }
        return data;
    }
    return images(d.n, d.seed + s);
}

LabelTable Pipeline::bridge_labels(const Dataset& data, std::uint64_t s, double ratio) const {
    return assign_random_labels(data.labels, ratio, recipe_.dataset.num_classes, recipe_.labels.seed + s,
                                recipe_.labels.exclude_true_class);
}

LabelTable Pipeline::bridge_labels(const Dataset& data, std::uint64_t s) const {
    return bridge_labels(data, s, recipe_.labels.ratio);
}

Dataset Pipeline::test_set(std::uint64_t s) const { return images(recipe_.probes.test_images, recipe_.probes.seed + s); }

Dataset Pipeline::probe_train_set(std::uint64_t s) const {
    return images(recipe_.probes.train_images, recipe_.probes.seed + 200 + s);
}

Dataset Pipeline::cluster_set(std::uint64_t s) const {
    return images(recipe_.probes.cluster_images, recipe_.probes.seed + 100 + s);
}

Dataset Pipeline::activation_set(std::uint64_t s) const {
    return images(recipe_.probes.activation_images, recipe_.probes.seed + 100 + s);
}

Model Pipeline::initial_model(std::uint64_t s, bool pretrained) {
    const RngStream init(s, kInitStream);
    if (pretrained) {
        return pretrained_classifier(language_model(), recipe_.model, init);
    }
    return build_classifier(recipe_.model, init);
}

TrainConfig Pipeline::bridge_config(std::uint64_t s) const {
    TrainConfig c = recipe_.bridge.train;
    c.seed += s;
    c.stage = Stage::bridge;
    return c;
}

TrainConfig Pipeline::probe_config(std::uint64_t s) const {
    TrainConfig c = recipe_.probes.linear;
    c.seed += s;
    c.stage = Stage::linear_probe;
    return c;
}

TrainConfig Pipeline::adapt_config(std::uint64_t s) const {
    TrainConfig c = recipe_.adapt.train;
    c.seed += s;
    c.stage = Stage::adapt;
    return c;
}

json run_report(const Recipe& recipe, const std::string& command, json stages) {
    return {{"tool_version", kToolVersion},
            {"definitions_version", kLandscapeDefinitionsVersion},
            {"command", command},
            {"recipe_hash", recipe.hash()},
            {"recipe", recipe.to_json()},
            {"stages", std::move(stages)}};
}

std::string curves_csv(const std::vector<CurveRun>& runs) {
    CsvWriter csv({"seed", "arm", "epoch", "lr", "train_loss", "train_acc", "eval_acc"});
    for (const auto& r : runs) {
        for (const auto& e : r.history.epochs) {
            csv.row({std::to_string(r.seed), r.arm, std::to_string(e.epoch), format_double(e.lr),
                     format_double(e.train_loss), format_double(e.train_acc),
                     e.eval_acc ? format_double(*e.eval_acc) : std::string()});
        }
    }
    return csv.str();
}

namespace {

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

json history_summary(const TrainHistory& h) {
    json j = {{"epochs", h.epochs.size()},
              {"final_train_acc", h.final_train_acc()},
              {"final_train_loss", h.epochs.empty() ? 0.0 : h.epochs.back().train_loss},
              {"epochs_to_90", optional_json(h.epochs_to_reach(kReachThreshold))}};
    if (!h.epochs.empty() && h.epochs.back().eval_acc) {
        j["final_eval_acc"] = *h.epochs.back().eval_acc;
    }
    return j;
}

// Pretrained strictly sooner; a scratch arm that never reaches counts as slower.
bool reaches_sooner(const std::optional<std::size_t>& a, const std::optional<std::size_t>& b) {
    return a && (!b || *a < *b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Memorization

std::size_t MemorizationResult::wins() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MemorizationRow& r) {
        return reaches_sooner(r.pretrained_epochs, r.scratch_epochs);
    }));
}

std::size_t MemorizationResult::capacity_reached() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MemorizationRow& r) {
        return r.capacity_budget > 0 && r.capacity_epochs.has_value();
    }));
}

json MemorizationResult::to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
        json row = {{"seed", r.seed},
                    {"pretrained_epochs_to_threshold", optional_json(r.pretrained_epochs)},
                    {"scratch_epochs_to_threshold", optional_json(r.scratch_epochs)},
                    {"pretrained_final_train_acc", r.pretrained_final},
                    {"scratch_final_train_acc", r.scratch_final}};
        if (r.capacity_budget > 0) {
            row["capacity_budget"] = r.capacity_budget;
            row["capacity_epochs_to_threshold"] = optional_json(r.capacity_epochs);
        }
        rs.push_back(row);
    }
    return {{"threshold", threshold}, {"rows", rs}, {"pretrained_wins", wins()}, {"seeds", rows.size()},
            {"capacity_reached", capacity_reached()}};
}

void MemorizationResult::write(const fs::path& dir) const {
    write_text(dir / "curves.csv", curves_csv(curves));
    CsvWriter csv({"seed", "pretrained_epochs", "scratch_epochs", "pretrained_final", "scratch_final"});
    for (const auto& r : rows) {
        csv.row({std::to_string(r.seed), r.pretrained_epochs ? std::to_string(*r.pretrained_epochs) : "",
                 r.scratch_epochs ? std::to_string(*r.scratch_epochs) : "", format_double(r.pretrained_final),
                 format_double(r.scratch_final)});
    }
    csv.save(dir / "summary.csv");
}

MemorizationResult memorization_experiment(Pipeline& p, std::size_t capacity_factor) {
    MemorizationResult out;
    const FreezeSelector freeze = FreezeSelector::parse(p.recipe().bridge.freeze);
    for (const std::uint64_t s : p.recipe().seeds) {
        const Dataset data = p.bridge_set(s);
        const LabelTable labels = p.bridge_labels(data, s);
        const TrainConfig cfg = p.bridge_config(s);
        const TrainResult pre = bridge_train(p.initial_model(s, true), data, labels, cfg, freeze);
        const TrainResult scr = bridge_train(p.initial_model(s, false), data, labels, cfg, freeze);
        MemorizationRow row;
        row.seed = s;
        row.pretrained_epochs = pre.history.epochs_to_reach(out.threshold);
        row.scratch_epochs = scr.history.epochs_to_reach(out.threshold);
        row.pretrained_final = pre.history.final_train_acc();
        row.scratch_final = scr.history.final_train_acc();
        out.curves.push_back({s, "pretrained", pre.history});
        out.curves.push_back({s, "scratch", scr.history});
        if (capacity_factor > 0) {
            TrainConfig longer = cfg;
            longer.epochs = cfg.epochs * capacity_factor;
            const TrainResult cap = bridge_train(p.initial_model(s, false), data, labels, longer, freeze);
            row.capacity_budget = longer.epochs;
            row.capacity_epochs = cap.history.epochs_to_reach(out.threshold);
            out.curves.push_back({s, "scratch-x" + std::to_string(capacity_factor), cap.history});
        }
        out.rows.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random-label ratios

json RatioResult::to_json() const {
    json runs = json::array();
    for (std::size_t i = 0; i < curves.size(); ++i) {
        json j = history_summary(curves[i].history);
        j["seed"] = curves[i].seed;
        j["init"] = curves[i].arm;
        j["ratio"] = run_ratio[i];
        runs.push_back(j);
    }
    return {{"ratios", ratios}, {"runs", runs}};
}

void RatioResult::write(const fs::path& dir) const {
    CsvWriter csv({"seed", "ratio", "init", "epoch", "lr", "train_loss", "train_acc", "test_acc"});
    for (std::size_t i = 0; i < curves.size(); ++i) {
        for (const auto& e : curves[i].history.epochs) {
            csv.row({std::to_string(curves[i].seed), format_double(run_ratio[i]), curves[i].arm, std::to_string(e.epoch),
                     format_double(e.lr), format_double(e.train_loss), format_double(e.train_acc),
                     e.eval_acc ? format_double(*e.eval_acc) : std::string()});
        }
    }
    csv.save(dir / "curves.csv");
}

RatioResult ratio_experiment(Pipeline& p, const std::vector<double>& ratios) {
    RatioResult out;
    out.ratios = ratios;
    const FreezeSelector freeze = FreezeSelector::parse(p.recipe().bridge.freeze);
    for (const std::uint64_t s : p.recipe().seeds) {
        const Dataset data = p.bridge_set(s);
        const Dataset test = p.test_set(s);
        TrainOptions opts;
        opts.eval = &test;
        for (const double ratio : ratios) {
            const LabelTable labels = p.bridge_labels(data, s, ratio);
            for (const bool pretrained : {true, false}) {
                const TrainResult r =
                    bridge_train(p.initial_model(s, pretrained), data, labels, p.bridge_config(s), freeze, opts);
                out.curves.push_back({s, pretrained ? "pretrained" : "scratch", r.history});
                out.run_ratio.push_back(ratio);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partial bridge training

std::optional<double> PartialResult::final_acc(std::uint64_t seed, bool random, const std::string& selector) const {
    for (std::size_t i = 0; i < curves.size(); ++i) {
        if (curves[i].seed == seed && run_random[i] == random && curves[i].arm == selector) {
            return curves[i].history.final_train_acc();
        }
    }
    return std::nullopt;
}

namespace {

std::set<std::uint64_t> partial_seeds(const PartialResult& r) {
    std::set<std::uint64_t> seeds;
    for (const auto& c : r.curves) {
        seeds.insert(c.seed);
    }
    return seeds;
}

}  // namespace

std::size_t PartialResult::ordered_seeds() const {
    std::size_t n = 0;
    for (const std::uint64_t s : partial_seeds(*this)) {
        const auto f1 = final_acc(s, true, "first:1");
        const auto f2 = final_acc(s, true, "first:2");
        const auto f5 = final_acc(s, true, "first:5");
        n += static_cast<std::size_t>(f1 && f2 && f5 && *f5 >= *f2 && *f2 >= *f1);
    }
    return n;
}

std::size_t PartialResult::near_full_seeds(double points) const {
    std::size_t n = 0;
    for (const std::uint64_t s : partial_seeds(*this)) {
        const auto f5 = final_acc(s, true, "first:5");
        const auto all = final_acc(s, true, "all");
        n += static_cast<std::size_t>(f5 && all && 100.0 * (*all - *f5) <= points);
    }
    return n;
}

json PartialResult::to_json() const {
    json runs = json::array();
    for (std::size_t i = 0; i < curves.size(); ++i) {
        json j = history_summary(curves[i].history);
        j["seed"] = curves[i].seed;
        j["labels"] = run_random[i] ? "random" : "correct";
        j["trainable"] = curves[i].arm;
        runs.push_back(j);
    }
    return {{"selectors", selectors},
            {"runs", runs},
            {"ordered_seeds", ordered_seeds()},
            {"first5_within_2_points_seeds", near_full_seeds()}};
}

void PartialResult::write(const fs::path& dir) const {
    CsvWriter csv({"seed", "labels", "trainable", "epoch", "lr", "train_loss", "train_acc", "test_acc"});
    CsvWriter fin({"seed", "labels", "trainable", "final_train_acc", "final_test_acc"});
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const std::string labels = run_random[i] ? "random" : "correct";
        for (const auto& e : curves[i].history.epochs) {
            csv.row({std::to_string(curves[i].seed), labels, curves[i].arm, std::to_string(e.epoch),
                     format_double(e.lr), format_double(e.train_loss), format_double(e.train_acc),
                     e.eval_acc ? format_double(*e.eval_acc) : std::string()});
        }
        const auto& last = curves[i].history.epochs.back();
        fin.row({std::to_string(curves[i].seed), labels, curves[i].arm, format_double(last.train_acc),
                 last.eval_acc ? format_double(*last.eval_acc) : std::string()});
    }
    csv.save(dir / "curves.csv");
    fin.save(dir / "final.csv");
}

PartialResult partial_experiment(Pipeline& p, const std::vector<std::string>& selectors, bool correct_labels,
                                 bool with_eval) {
    PartialResult out;
    out.selectors = selectors;
    for (const std::uint64_t s : p.recipe().seeds) {
        const Dataset data = p.bridge_set(s);
        std::optional<Dataset> test;
        TrainOptions opts;
        if (with_eval) {
            test = p.test_set(s);
            opts.eval = &*test;
        }
        std::vector<std::pair<bool, LabelTable>> settings{{true, p.bridge_labels(data, s, 1.0)}};
        if (correct_labels) {
            settings.emplace_back(false, clean_labels(data.labels, p.recipe().dataset.num_classes));
        }
        const Model init = p.initial_model(s, true);
        for (const auto& [random, labels] : settings) {
            for (const auto& sel : selectors) {
                const TrainResult r =
                    bridge_train(init, data, labels, p.bridge_config(s), FreezeSelector::parse(sel), opts);
                out.curves.push_back({s, sel, r.history});
                out.run_random.push_back(random);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Representation quality

namespace {

json probe_json(const ProbeArm& a) { return {{"train_acc", a.train_acc}, {"test_acc", a.test_acc}}; }

}  // namespace

std::size_t RepresentationResult::ordered_seeds() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const RepresentationRow& r) {
        return r.lbbt.test_acc > r.pretrained.test_acc && r.pretrained.test_acc > r.scratch.test_acc;
    }));
}

std::size_t RepresentationResult::ari_wins() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const RepresentationRow& r) {
        return r.cluster_pretrained.ari > r.cluster_scratch.ari;
    }));
}

json RepresentationResult::to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
        rs.push_back({{"seed", r.seed},
                      {"linear_probe",
                       {{"lbbt", probe_json(r.lbbt)},
                        {"pretrained_unbridged", probe_json(r.pretrained)},
                        {"scratch", probe_json(r.scratch)},
                        {"scratch_bridged", probe_json(r.scratch_bridged)}}},
                      {"cluster_raw", {{"pretrained", r.cluster_pretrained.to_json()},
                                       {"scratch", r.cluster_scratch.to_json()}}},
                      {"cluster_pca_ari", {{"pretrained", r.pca_ari_pretrained}, {"scratch", r.pca_ari_scratch}}}});
    }
    json j = {{"rows", rs}, {"probe_ordered_seeds", ordered_seeds()}, {"ari_pretrained_wins", ari_wins()},
              {"seeds", rows.size()}};
    if (first_pretrained) {
        j["embedding_pretrained"] = first_pretrained->to_json();
    }
    if (first_scratch) {
        j["embedding_scratch"] = first_scratch->to_json();
    }
    return j;
}

void RepresentationResult::write(const fs::path& dir) const {
    CsvWriter csv({"seed", "arm", "train_acc", "test_acc"});
    CsvWriter ari({"seed", "init", "ari_raw", "silhouette_raw", "ari_pca"});
    for (const auto& r : rows) {
        const std::vector<std::pair<std::string, ProbeArm>> arms{
            {"lbbt", r.lbbt}, {"pretrained", r.pretrained}, {"scratch", r.scratch}, {"scratch_bridged", r.scratch_bridged}};
        for (const auto& [name, a] : arms) {
            csv.row({std::to_string(r.seed), name, format_double(a.train_acc), format_double(a.test_acc)});
        }
        const auto sil = [](const ClusterQuality& q) {
            return q.silhouette ? format_double(*q.silhouette) : std::string();
        };
        ari.row({std::to_string(r.seed), "pretrained", format_double(r.cluster_pretrained.ari),
                 sil(r.cluster_pretrained), format_double(r.pca_ari_pretrained)});
        ari.row({std::to_string(r.seed), "scratch", format_double(r.cluster_scratch.ari), sil(r.cluster_scratch),
                 format_double(r.pca_ari_scratch)});
    }
    csv.save(dir / "linear_probe.csv");
    ari.save(dir / "clusters.csv");
    if (first_pretrained) {
        write_text(dir / "coords_pretrained.csv", first_pretrained->coords_csv());
    }
    if (first_scratch) {
        write_text(dir / "coords_scratch.csv", first_scratch->coords_csv());
    }
}

RepresentationResult representation_experiment(Pipeline& p, bool with_probes) {
    RepresentationResult out;
    const FreezeSelector freeze = FreezeSelector::parse(p.recipe().bridge.freeze);
    const std::size_t k = p.recipe().dataset.num_classes;
    for (const std::uint64_t s : p.recipe().seeds) {
        const Dataset data = p.bridge_set(s);
        const LabelTable labels = p.bridge_labels(data, s);
        const TrainConfig cfg = p.bridge_config(s);
        const Model pre = p.initial_model(s, true);
        const Model scr = p.initial_model(s, false);
        const Model pre_bridged = bridge_train(pre, data, labels, cfg, freeze).model;
        const Model scr_bridged = bridge_train(scr, data, labels, cfg, freeze).model;

        RepresentationRow row;
        row.seed = s;
        if (with_probes) {
            const Dataset train = p.probe_train_set(s);
            const Dataset test = p.test_set(s);
            const TrainConfig pc = p.probe_config(s);
            const auto probe = [&](const Model& m) {
                const ProbeResult r = linear_probe(m, train, &test, pc);
                return ProbeArm{r.train_acc, r.test_acc};
            };
            row.lbbt = probe(pre_bridged);
            row.pretrained = probe(pre);
            row.scratch = probe(scr);
            row.scratch_bridged = probe(scr_bridged);
        }
        const Dataset cl = p.cluster_set(s);
        EmbeddingReport ep = embedding_report(pre_bridged, cl.inputs, cl.labels, k, s);
        EmbeddingReport es = embedding_report(scr_bridged, cl.inputs, cl.labels, k, s);
        row.cluster_pretrained = ep.raw_quality;
        row.cluster_scratch = es.raw_quality;
        row.pca_ari_pretrained = ep.pca_quality.ari;
        row.pca_ari_scratch = es.pca_quality.ari;
        if (!out.first_pretrained) {
            out.first_pretrained = std::move(ep);
            out.first_scratch = std::move(es);
        }
        out.rows.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activation ratios

json ActivationResult::to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
        json j = {{"seed", r.seed},
                  {"init", r.init.to_json()},
                  {"post_bridge_random", r.random.to_json()},
                  {"random_vs_init", r.random_vs_init.to_json()}};
        if (r.correct) {
            j["post_bridge_correct"] = r.correct->to_json();
            j["correct_vs_init"] = r.correct_vs_init->to_json();
        }
        rs.push_back(j);
    }
    return {{"rows", rs}};
}

std::string ActivationResult::csv() const {
    CsvWriter out({"seed", "layer", "init", "random", "correct"});
    for (const auto& r : rows) {
        for (std::size_t l = 0; l < r.init.ratio.size(); ++l) {
            out.row({std::to_string(r.seed), std::to_string(l + 1), format_double(r.init.ratio[l]),
                     format_double(r.random.ratio[l]), r.correct ? format_double(r.correct->ratio[l]) : std::string()});
        }
    }
    return out.str();
}

void ActivationResult::write(const fs::path& dir) const { write_text(dir / "activation_ratio.csv", csv()); }

ActivationResult activation_experiment(Pipeline& p, bool with_correct) {
    ActivationResult out;
    const FreezeSelector freeze = FreezeSelector::parse(p.recipe().bridge.freeze);
    for (const std::uint64_t s : p.recipe().seeds) {
        const Dataset data = p.bridge_set(s);
        const Dataset probe = p.activation_set(s);
        const TrainConfig cfg = p.bridge_config(s);
        const Model init = p.initial_model(s, true);
        ActivationRow row;
        row.seed = s;
        row.init = activation_report(init, probe.inputs, "init");
        const Model random = bridge_train(init, data, p.bridge_labels(data, s), cfg, freeze).model;
        row.random = activation_report(random, probe.inputs, "post-bridge-random");
        row.random_vs_init = compare_snapshots(row.init, row.random);
        if (with_correct) {
            const LabelTable clean = clean_labels(data.labels, p.recipe().dataset.num_classes);
            const Model correct = bridge_train(init, data, clean, cfg, freeze).model;
            row.correct = activation_report(correct, probe.inputs, "post-bridge-correct");
            row.correct_vs_init = compare_snapshots(row.init, *row.correct);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weight statistics

json WeightsResult::to_json() const {
    const auto mk = [](const OutlierReport& r) {
        const auto m = r.mean_block_kurtosis();
        return m ? json(*m) : json(nullptr);
    };
    return {{"seed", seed},
            {"pretrained", pretrained.to_json()},
            {"fresh", fresh.to_json()},
            {"mean_block_kurtosis", {{"pretrained", mk(pretrained)}, {"fresh", mk(fresh)}}}};
}

std::string WeightsResult::layers_csv() const {
    CsvWriter csv({"source", "layer", "tensors", "n", "outliers", "max_abs", "mean_excess_kurtosis"});
    for (const auto& [name, report] : {std::pair{"pretrained", &pretrained}, std::pair{"fresh", &fresh}}) {
        for (const auto& l : report->layers) {
            csv.row({name, std::to_string(l.layer), std::to_string(l.tensors), std::to_string(l.n),
                     std::to_string(l.outliers), format_double(l.max_abs),
                     l.mean_excess_kurtosis ? format_double(*l.mean_excess_kurtosis) : std::string()});
        }
    }
    return csv.str();
}

void WeightsResult::write(const fs::path& dir) const {
    write_text(dir / "layers.csv", layers_csv());
    write_text(dir / "histogram_pretrained.csv", pretrained.histogram_csv());
    write_text(dir / "histogram_fresh.csv", fresh.histogram_csv());
}

WeightsResult weights_experiment(Pipeline& p) {
    WeightsResult out;
    out.seed = p.recipe().seeds.front();
    out.pretrained = layer_report(p.initial_model(out.seed, true).params, p.recipe().probes.z);
    out.fresh = layer_report(p.initial_model(out.seed, false).params, p.recipe().probes.z);
    return out;
}

// ---------------------------------------------------------------------------
// Loss landscape

SurfaceScan scan_surface(const Model& theta0, const Model& thetaT, const Dataset& data, const std::vector<int>& labels,
                         std::size_t grid_alpha, std::size_t grid_beta, double span, bool normalize,
                         std::uint64_t seed) {
    if (grid_alpha % 2 == 0 || grid_beta % 2 == 0) {
        throw SpecError("landscape: grid sides must be odd so the center is a grid point");
    }
    const ClassifierObjective objective(thetaT, data, labels);
    const ParamSet<double> p0 = theta0.params.cast<double>();
    const ParamSet<double> pT = thetaT.params.cast<double>();
    const Directions dirs = make_directions(p0, pT, seed, normalize);
    const auto loss = [&](const ParamSet<double>& x) { return objective.loss(x); };
    SurfaceScan out;
    out.loss_theta0 = objective.loss(p0);
    out.loss_thetaT = objective.loss(pT);
    out.direction_cosine = dirs.cosine_before_rescale;
    out.surface = surface_grid(loss, pT, dirs, grid_axis(-span, span, grid_alpha), grid_axis(-span, span, grid_beta));
    return out;
}

json LandscapeResult::to_json() const {
    json as = json::array();
    for (const auto& a : arms) {
        json j = {{"init", a.arm},
                  {"loss_theta0", a.loss_theta0},
                  {"loss_thetaT", a.loss_thetaT},
                  {"direction_cosine_before_rescale", a.direction_cosine},
                  {"grid", {a.surface.alphas.size(), a.surface.betas.size()}}};
        if (!a.spectrum.lanczos.ritz.empty()) {
            j["spectrum_at_theta0"] = a.spectrum.to_json();
        }
        as.push_back(j);
    }
    return {{"seed", seed}, {"arms", as}};
}

void LandscapeResult::write(const fs::path& dir) const {
    for (const auto& a : arms) {
        write_text(dir / ("surface_" + a.arm + ".csv"), a.surface.csv());
    }
}

LandscapeResult landscape_experiment(Pipeline& p, bool with_spectrum) {
    const Recipe& r = p.recipe();
    LandscapeResult out;
    const std::uint64_t s = r.seeds.front();
    out.seed = s;
    const Dataset data = p.bridge_set(s);
    const LabelTable labels = p.bridge_labels(data, s);
    std::vector<std::size_t> idx(r.probes.landscape_images);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    const Dataset probe = subset(data, idx);
    const std::vector<int> probe_labels(labels.effective.begin(),
                                        labels.effective.begin() + static_cast<std::ptrdiff_t>(idx.size()));
    const FreezeSelector freeze = FreezeSelector::parse(r.bridge.freeze);
    for (const bool pretrained : {true, false}) {
        LandscapeArm arm;
        arm.arm = pretrained ? "pretrained" : "scratch";
        const Model init = p.initial_model(s, pretrained);
        const Model trained = bridge_train(init, data, labels, p.bridge_config(s), freeze).model;
        const SurfaceScan scan = scan_surface(init, trained, probe, probe_labels, r.probes.grid, r.probes.grid,
                                              r.probes.grid_span, r.probes.normalize_directions, s);
        arm.loss_theta0 = scan.loss_theta0;
        arm.loss_thetaT = scan.loss_thetaT;
        arm.direction_cosine = scan.direction_cosine;
        arm.surface = scan.surface;
        if (with_spectrum) {
            const ClassifierObjective objective(init, probe, probe_labels);
            SpectrumConfig cfg;
            const SpectrumSection& sp = r.probes.spectrum;
            cfg.lanczos_steps = sp.lanczos_steps;
            cfg.lanczos_starts = sp.lanczos_starts;
            cfg.trace_probes = sp.trace_probes;
            cfg.noise.probes = sp.noise_probes;
            cfg.window_steps = sp.window_steps;
            cfg.window_lr = sp.window_lr;
            cfg.seed = s;
            const auto loss = [&](const Vec& x) { return objective.loss(x); };
            const auto grad = [&](const Vec& x) { return objective.grad(x); };
            arm.spectrum = landscape_metrics(loss, grad, init.params.cast<double>().flatten(), cfg);
        }
        out.arms.push_back(std::move(arm));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep

double sweep_pipeline_score(Pipeline& p, double lr, double wd, bool with_lbbt, std::uint64_t seed) {
    const Dataset data = p.bridge_set(seed);
    const LabelTable labels = p.bridge_labels(data, seed);
    TrainConfig cfg = p.bridge_config(seed);
    cfg.lr = lr;
    cfg.weight_decay = wd;
    const Model bridged = bridge_train(p.initial_model(seed, with_lbbt), data, labels, cfg,
                                       FreezeSelector::parse(p.recipe().bridge.freeze))
                              .model;
    const Dataset train = p.probe_train_set(seed);
    const Dataset test = p.test_set(seed);
    const AdaptResult r = adapt(bridged, train, &test, p.adapt_config(seed), p.recipe().adapt.finetune);
    return 100.0 * r.test_acc;
}

// ---------------------------------------------------------------------------
// Canned figures

std::vector<std::string> figure_ids() { return {"fig1", "fig3", "fig4", "fig5", "fig6", "fig7"}; }

Recipe figure_recipe(const std::string& id, bool smoke) {
    const auto ids = figure_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        std::string valid;
        for (const auto& i : ids) {
            valid += (valid.empty() ? "" : ", ") + i;
        }
        throw SpecError("unknown figure id '" + id + "' (valid: " + valid + ")");
    }
    Recipe r = preset(id == "fig5" ? "representation" : id == "fig7" ? "partial" : "memorization");
    r.name = "repro-" + id;
    r.output = "runs/" + id;
    if (id == "fig4") {
        r.seeds = {0};
    }
    return smoke ? smoke_scale(r) : r;
}

namespace {

const std::map<std::string, std::string>& figure_notes() {
    static const std::map<std::string, std::string> notes{
        {"fig1",
         "Weight magnitude statistics of language-pretrained blocks against a fresh initialization.\n"
         "Directional only: the toy language model is far smaller than GPT-2 or LLaMA, so only the sign of the\n"
         "kurtosis and outlier differences is comparable, not their magnitude.\n"},
        {"fig3",
         "Train and test accuracy curves under random-label ratios 0, 0.15, 0.30 and 1.0 for pretrained and\n"
         "scratch initializations on synthetic images.\n"
         "Directional only: absolute accuracies and the size of the pretrained advantage are desk-scale values;\n"
         "the paper's CIFAR/ImageNet numbers are not reproducible here.\n"},
        {"fig4",
         "Loss cross-sections around the bridge-trained weights along the training direction and a seeded\n"
         "orthogonal direction, plus Hessian spectrum metrics at initialization.\n"
         "Directional only: the paper's trace, gap and decay magnitudes belong to GPT-2 scale models; metric\n"
         "definitions follow the recorded definitions_version.\n"},
        {"fig5",
         "Linear-probe accuracy of bridged and unbridged backbones and k-means structure of final hidden states.\n"
         "Directional only: 2D coordinates come from PCA rather than t-SNE; separability is scored by adjusted\n"
         "Rand index in the raw hidden space.\n"},
        {"fig6",
         "Per-layer activation ratio at initialization, after random-label bridge training and after\n"
         "correct-label bridge training.\n"
         "Directional only: the paper reports increases for GPT-2; toy-scale ratios may move either way and are\n"
         "reported as measured.\n"},
        {"fig7",
         "Training curves with all blocks or only the first 1, 2 or 5 blocks trainable, under random and\n"
         "correct labels.\n"
         "Directional only: the ordering among trainable prefixes is the comparable quantity, not the\n"
         "absolute accuracy.\n"},
    };
    return notes;
}

}  // namespace

json run_figure(const std::string& id, bool smoke, const fs::path& dir, const Model* lm) {
    const Recipe recipe = figure_recipe(id, smoke);
    Pipeline p(recipe);
    if (lm != nullptr) {
        p.set_language_model(*lm);
    }
    fs::create_directories(dir);
    json stages;
    if (id == "fig1") {
        const WeightsResult r = weights_experiment(p);
        r.write(dir);
        stages = r.to_json();
    } else if (id == "fig3") {
        const RatioResult r = ratio_experiment(p, {0.0, 0.15, 0.30, 1.0});
        r.write(dir);
        stages = r.to_json();
    } else if (id == "fig4") {
        const LandscapeResult r = landscape_experiment(p);
        r.write(dir);
        stages = r.to_json();
    } else if (id == "fig5") {
        const RepresentationResult r = representation_experiment(p);
        r.write(dir);
        stages = r.to_json();
    } else if (id == "fig6") {
        const ActivationResult r = activation_experiment(p, true);
        r.write(dir);
        stages = r.to_json();
    } else {
        const PartialResult r = partial_experiment(p, {"all", "first:1", "first:2", "first:5"}, true, true);
        r.write(dir);
        stages = r.to_json();
    }
    if (!p.lm_epoch_loss().empty()) {
        stages["pretrain_epoch_loss"] = p.lm_epoch_loss();
    }
    const json report = run_report(recipe, "repro " + id, stages);
    write_json(dir / "report.json", report);
    write_text(dir / "notes.md", "# " + id + (smoke ? " (smoke scale)" : "") + "\n\n" + figure_notes().at(id));
    return report;
}

}  // namespace bridgelab

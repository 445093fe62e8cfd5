// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage or recipe error (bad flag, schema violation, missing input).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bridgelab/checkpoint.hpp"
#include "bridgelab/covariance.hpp"
#include "bridgelab/experiments.hpp"
#include "bridgelab/format.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bridgelab;

namespace {

class MissingInput : public SpecError {
public:
    using SpecError::SpecError;
};

struct RecipeOptions {
    std::string config;
    std::string preset;
    bool smoke = false;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string lm;
};

void add_recipe_options(CLI::App* cmd, RecipeOptions& o) {
    cmd->add_option("--config", o.config, "Recipe JSON file");
    cmd->add_option("--preset", o.preset, "Built-in recipe: memorization, partial or representation");
    cmd->add_flag("--smoke", o.smoke, "Shrink the recipe to smoke scale");
    cmd->add_option("--out", o.out, "Output directory (default: recipe output)");
    cmd->add_option("--seed", o.seed, "Run seed (default: first recipe seed)");
    cmd->add_option("--lm", o.lm, "Pretrained language model checkpoint to reuse");
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw MissingInput("missing " + what + ": no path given");
    }
    if (!fs::is_regular_file(path)) {
        throw MissingInput("missing " + what + ": " + path);
    }
}

Recipe resolve_recipe(const RecipeOptions& o) {
    if (!o.config.empty() && !o.preset.empty()) {
        throw SpecError("--config and --preset are mutually exclusive");
    }
    Recipe r;
    if (!o.config.empty()) {
        require_file(o.config, "recipe");
        r = load_recipe(o.config);
    } else {
        r = preset(o.preset.empty() ? "memorization" : o.preset);
    }
    if (o.smoke) {
        r = smoke_scale(r);
    }
    if (!o.out.empty()) {
        r.output = o.out;
    }
    r.validate();
    return r;
}

std::uint64_t run_seed(const Recipe& r, const RecipeOptions& o) { return o.seed.value_or(r.seeds.front()); }

Pipeline make_pipeline(const Recipe& r, const RecipeOptions& o) {
    Pipeline p(r);
    if (!o.lm.empty()) {
        require_file(o.lm, "language model checkpoint");
        p.set_language_model(load_model(o.lm));
    }
    return p;
}

fs::path out_dir(const Recipe& r) {
    fs::create_directories(r.output);
    return r.output;
}

Model load_snapshot(const std::string& path, const std::string& what) {
    require_file(path, what);
    return load_model(path);
}

json lm_stage(const Pipeline& p) {
    return p.lm_epoch_loss().empty() ? json(nullptr) : json(p.lm_epoch_loss());
}

// ---------------------------------------------------------------------------
// Training stages

int cmd_pretrain(const RecipeOptions& o) {
    const Recipe r = resolve_recipe(o);
    Pipeline p(r);
    const Model& lm = p.language_model();
    const fs::path dir = out_dir(r);
    save_model(lm, dir / "lm.brlb", {{"snapshot", "lm"}, {"recipe_hash", r.hash()}});
    CsvWriter csv({"epoch", "loss"});
    for (std::size_t i = 0; i < p.lm_epoch_loss().size(); ++i) {
        csv.row({std::to_string(i + 1), format_double(p.lm_epoch_loss()[i])});
    }
    csv.save(dir / "pretrain_loss.csv");
    write_json(dir / "pretrain_report.json",
               run_report(r, "pretrain-lm", {{"pretrain", {{"epoch_loss", p.lm_epoch_loss()},
                                                           {"lm_spec", model_spec_to_json(lm.spec)}}}}));
    return 0;
}

struct BridgeFlags {
    std::string init;
    std::string freeze;
    std::optional<double> ratio;
    bool exclude_true_class = false;
    bool causal_patches = false;
};

int cmd_bridge(const RecipeOptions& o, const BridgeFlags& f) {
    Recipe r = resolve_recipe(o);
    if (!f.init.empty()) {
        if (f.init != "pretrained" && f.init != "scratch") {
            throw SpecError("--init must be pretrained or scratch");
        }
        r.bridge.pretrained_init = f.init == "pretrained";
    }
    if (!f.freeze.empty()) {
        r.bridge.freeze = f.freeze;
    }
    if (f.ratio) {
        r.labels.ratio = *f.ratio;
    }
    r.labels.exclude_true_class = r.labels.exclude_true_class || f.exclude_true_class;
    r.model.causal_patches = r.model.causal_patches || f.causal_patches;
    r.validate();
    Pipeline p = make_pipeline(r, o);
    const std::uint64_t s = run_seed(r, o);
    const Dataset data = p.bridge_set(s);
    const LabelTable labels = p.bridge_labels(data, s);
    const fs::path dir = out_dir(r);
    TrainOptions opts;
    opts.run_dir = dir;
    opts.extra_config = {{"recipe_hash", r.hash()}, {"seed", s}};
    const TrainResult res = bridge_train(p.initial_model(s, r.bridge.pretrained_init), data, labels,
                                         p.bridge_config(s), FreezeSelector::parse(r.bridge.freeze), opts);
    json stage = {{"seed", s},
                  {"init", r.bridge.pretrained_init ? "pretrained" : "scratch"},
                  {"freeze", r.bridge.freeze},
                  {"labels", labels.metadata()},
                  {"epochs", res.history.epochs.size()},
                  {"final_train_acc", res.history.final_train_acc()},
                  {"final_train_loss", res.history.epochs.back().train_loss},
                  {"epochs_to_90", res.history.epochs_to_reach(kReachThreshold)
                                       ? json(*res.history.epochs_to_reach(kReachThreshold))
                                       : json(nullptr)},
                  {"files", {"history.csv", "theta0.brlb", "thetaT.brlb", "config.json"}}};
    write_json(dir / "bridge_report.json", run_report(r, "bridge-train", {{"bridge", stage}, {"pretrain", lm_stage(p)}}));
    return 0;
}

int cmd_adapt(const RecipeOptions& o, std::string snapshot, bool finetune) {
    Recipe r = resolve_recipe(o);
    r.adapt.finetune = r.adapt.finetune || finetune;
    const fs::path dir = out_dir(r);
    if (snapshot.empty()) {
        snapshot = (dir / "thetaT.brlb").string();
    }
    const Model backbone = load_snapshot(snapshot, "bridge snapshot");
    Pipeline p(r);
    const std::uint64_t s = run_seed(r, o);
    const Dataset train = p.probe_train_set(s);
    const Dataset test = p.test_set(s);
    const AdaptResult res = adapt(backbone, train, &test, p.adapt_config(s), r.adapt.finetune);
    save_model(res.model, dir / "adapted.brlb", {{"snapshot", "adapted"}, {"recipe_hash", r.hash()}});
    write_text(dir / "adapt_history.csv", res.history.to_csv());
    write_json(dir / "adapt_report.json",
               run_report(r, "adapt", {{"adapt", {{"seed", s}, {"snapshot", snapshot}, {"finetune", r.adapt.finetune},
                                                  {"train_acc", res.train_acc}, {"test_acc", res.test_acc}}}}));
    return 0;
}

int cmd_linear_probe(const RecipeOptions& o, std::string snapshot) {
    const Recipe r = resolve_recipe(o);
    const fs::path dir = out_dir(r);
    if (snapshot.empty()) {
        snapshot = (dir / "thetaT.brlb").string();
    }
    const Model backbone = load_snapshot(snapshot, "backbone snapshot");
    Pipeline p(r);
    const std::uint64_t s = run_seed(r, o);
    const Dataset train = p.probe_train_set(s);
    const Dataset test = p.test_set(s);
    const ProbeResult res = linear_probe(backbone, train, &test, p.probe_config(s));
    write_text(dir / "probe_history.csv", res.history.to_csv());
    write_json(dir / "probe_report.json",
               run_report(r, "linear-probe", {{"linear_probe", {{"seed", s}, {"snapshot", snapshot},
                                                                {"train_acc", res.train_acc},
                                                                {"test_acc", res.test_acc}}}}));
    return 0;
}

int cmd_sweep(const RecipeOptions& o, const std::vector<double>& lrs, const std::vector<double>& wds) {
    const Recipe r = resolve_recipe(o);
    Pipeline p = make_pipeline(r, o);
    p.language_model();
    const SweepPipeline fn = [&p](double lr, double wd, bool with_lbbt, std::uint64_t seed) {
        return sweep_pipeline_score(p, lr, wd, with_lbbt, seed);
    };
    const std::vector<SweepCell> cells = hparam_sweep(lrs, wds, fn, run_seed(r, o), 1);
    const fs::path dir = out_dir(r);
    CsvWriter csv({"lr", "weight_decay", "seed", "with_lbbt", "without_lbbt", "delta"});
    json rows = json::array();
    for (const auto& c : cells) {
        csv.row({format_double(c.lr), format_double(c.weight_decay), std::to_string(c.seed),
                 format_double(c.with_lbbt), format_double(c.without_lbbt), format_double(c.delta())});
        rows.push_back({{"lr", c.lr}, {"weight_decay", c.weight_decay}, {"seed", c.seed},
                        {"with_lbbt", c.with_lbbt}, {"without_lbbt", c.without_lbbt}, {"delta", c.delta()}});
    }
    csv.save(dir / "sweep.csv");
    write_json(dir / "sweep_report.json",
               run_report(r, "sweep", {{"sweep", {{"metric", "test accuracy percent"}, {"cells", rows}}},
                                       {"pretrain", lm_stage(p)}}));
    return 0;
}

// ---------------------------------------------------------------------------
// Analysis

int cmd_weights(const RecipeOptions& o, const std::string& ckpt, double z) {
    Recipe r = resolve_recipe(o);
    r.probes.z = z;
    r.validate();
    const Model m = load_snapshot(ckpt, "checkpoint");
    const OutlierReport rep = layer_report(m.params, z);
    const fs::path dir = out_dir(r);
    write_text(dir / "weights_histogram.csv", rep.histogram_csv());
    CsvWriter csv({"layer", "tensors", "n", "outliers", "max_abs", "mean_excess_kurtosis"});
    for (const auto& l : rep.layers) {
        csv.row({std::to_string(l.layer), std::to_string(l.tensors), std::to_string(l.n), std::to_string(l.outliers),
                 format_double(l.max_abs),
                 l.mean_excess_kurtosis ? format_double(*l.mean_excess_kurtosis) : std::string()});
    }
    csv.save(dir / "weights_layers.csv");
    write_json(dir / "weights_report.json", run_report(r, "analyze weights", {{"checkpoint", ckpt}, {"weights", rep.to_json()}}));
    return 0;
}

int cmd_activations(const RecipeOptions& o, const std::string& ckpt, const std::string& before) {
    const Recipe r = resolve_recipe(o);
    const Model m = load_snapshot(ckpt, "checkpoint");
    Pipeline p(r);
    const std::uint64_t s = run_seed(r, o);
    const Dataset probe = p.activation_set(s);
    const ActivationReport after = activation_report(m, probe.inputs, "after");
    json stage = {{"checkpoint", ckpt}, {"seed", s}, {"report", after.to_json()}};
    const fs::path dir = out_dir(r);
    if (!before.empty()) {
        const Model b = load_snapshot(before, "baseline checkpoint");
        const ActivationReport base = activation_report(b, probe.inputs, "before");
        const ActivationComparison cmp = compare_snapshots(base, after);
        stage["baseline"] = base.to_json();
        stage["comparison"] = cmp.to_json();
        write_text(dir / "activations.csv", cmp.csv());
    } else {
        CsvWriter csv({"layer", "ratio"});
        for (std::size_t l = 0; l < after.ratio.size(); ++l) {
            csv.row({std::to_string(l + 1), format_double(after.ratio[l])});
        }
        csv.save(dir / "activations.csv");
    }
    write_json(dir / "activations_report.json", run_report(r, "analyze activations", {{"activations", stage}}));
    return 0;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) {
            throw std::invalid_argument(text);
        }
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        const std::string a = text.substr(0, x);
        const std::string b = text.substr(x + 1);
        const unsigned long na = std::stoul(a, &used_a);
        const unsigned long nb = std::stoul(b, &used_b);
        if (used_a != a.size() || used_b != b.size()) {
            throw std::invalid_argument(text);
        }
        return {na, nb};
    } catch (const std::logic_error&) {
        throw SpecError("--grid expects AxB, e.g. 41x41, got '" + text + "'");
    }
}

int cmd_landscape(const RecipeOptions& o, const std::string& t0, const std::string& tT, const std::string& grid,
                  double span, bool raw, bool spectrum) {
    const Recipe r = resolve_recipe(o);
    const auto [ga, gb] = parse_grid(grid);
    if (ga < 3 || gb < 3 || ga > kMaxGridSide || gb > kMaxGridSide) {
        throw SpecError("--grid sides must lie in [3, " + std::to_string(kMaxGridSide) + "]");
    }
    const Model theta0 = load_snapshot(t0, "theta0 checkpoint");
    const Model thetaT = load_snapshot(tT, "thetaT checkpoint");
    Pipeline p(r);
    const std::uint64_t s = run_seed(r, o);
    const Dataset data = p.bridge_set(s);
    const LabelTable labels = p.bridge_labels(data, s);
    const std::size_t n = std::min(r.probes.landscape_images, data.size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    const Dataset probe = subset(data, idx);
    const std::vector<int> probe_labels(labels.effective.begin(), labels.effective.begin() + static_cast<long>(n));
    const SurfaceScan scan = scan_surface(theta0, thetaT, probe, probe_labels, ga, gb, span, !raw, s);
    const fs::path dir = out_dir(r);
    write_text(dir / "landscape_surface.csv", scan.surface.csv());
    json stage = {{"theta0", t0},
                  {"thetaT", tT},
                  {"seed", s},
                  {"images", n},
                  {"grid", {ga, gb}},
                  {"span", span},
                  {"normalized_directions", !raw},
                  {"center", "thetaT"},
                  {"final_loss", scan.loss_thetaT},
                  {"initial_loss", scan.loss_theta0},
                  {"direction_cosine_before_rescale", scan.direction_cosine}};
    if (spectrum) {
        const ClassifierObjective objective(thetaT, probe, probe_labels);
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
        stage["spectrum_at_thetaT"] = landscape_metrics(loss, grad, thetaT.params.cast<double>().flatten(), cfg).to_json();
    }
    write_json(dir / "landscape_report.json", run_report(r, "analyze landscape", {{"landscape", stage}}));
    return 0;
}

int cmd_align(const RecipeOptions& o, const std::string& preset_name, std::optional<std::uint64_t> seed) {
    if (preset_name != "theorem-fixture") {
        throw SpecError("analyze align: unknown preset '" + preset_name + "' (valid: theorem-fixture)");
    }
    TheoremConfig cfg;
    if (seed) {
        cfg.seed = *seed;
    }
    const CovarianceReport rep = run_theorem_check(cfg);
    const fs::path dir = o.out.empty() ? fs::path("runs/align") : fs::path(o.out);
    fs::create_directories(dir);
    write_text(dir / "align_transfer.csv", rep.transfer.csv());
    const json config = cfg.to_json();
    write_json(dir / "align_report.json", {{"tool_version", kToolVersion},
                                           {"command", "analyze align"},
                                           {"preset", preset_name},
                                           {"config_hash", fnv1a_hex(config.dump())},
                                           {"config", config},
                                           {"stages", {{"covariance", rep.to_json()}}}});
    return 0;
}

int cmd_cluster(const RecipeOptions& o, const std::string& ckpt, std::size_t k) {
    const Recipe r = resolve_recipe(o);
    const Model m = load_snapshot(ckpt, "checkpoint");
    Pipeline p(r);
    const std::uint64_t s = run_seed(r, o);
    const Dataset cl = p.cluster_set(s);
    const EmbeddingReport rep = embedding_report(m, cl.inputs, cl.labels, k, s);
    const fs::path dir = out_dir(r);
    write_text(dir / "cluster_coords.csv", rep.coords_csv());
    write_json(dir / "cluster_report.json",
               run_report(r, "analyze cluster", {{"cluster", {{"checkpoint", ckpt}, {"seed", s}, {"embedding", rep.to_json()}}}}));
    return 0;
}

int cmd_repro(const std::string& id, const std::string& scale, const std::string& out, const std::string& lm) {
    if (scale != "smoke" && scale != "full") {
        throw SpecError("--scale must be smoke or full");
    }
    const Recipe r = figure_recipe(id, scale == "smoke");
    std::optional<Model> model;
    if (!lm.empty()) {
        require_file(lm, "language model checkpoint");
        model = load_model(lm);
    }
    run_figure(id, scale == "smoke", out.empty() ? fs::path(r.output) : fs::path(out), model ? &*model : nullptr);
    return 0;
}

int cmd_recipe(const RecipeOptions& o) {
    const Recipe r = resolve_recipe(o);
    std::cout << json({{"recipe_hash", r.hash()}, {"recipe", r.to_json()}}).dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bridgelab: language-to-vision bridge training experiments"};
    app.require_subcommand(1);
    std::optional<std::size_t> threads;
    app.add_option("--threads", threads, "Worker threads (0 = auto, 1 = reference deterministic mode)");

    RecipeOptions ro;
    BridgeFlags bf;
    std::string snapshot;
    bool finetune = false;
    std::vector<double> lrs{1e-3, 3e-3};
    std::vector<double> wds{0.0, 0.05};
    std::string ckpt;
    std::string before;
    double z = 6.0;
    std::string theta0;
    std::string thetaT;
    std::string grid = "41x41";
    double span = 1.0;
    bool raw = false;
    bool spectrum = false;
    std::string align_preset;
    std::optional<std::uint64_t> align_seed;
    std::size_t k = 0;
    std::string figure;
    std::string scale = "smoke";

    auto* pre = app.add_subcommand("pretrain-lm", "Pretrain the toy language model");
    add_recipe_options(pre, ro);

    auto* bridge = app.add_subcommand("bridge-train", "Random-label bridge training");
    add_recipe_options(bridge, ro);
    bridge->add_option("--init", bf.init, "pretrained or scratch");
    bridge->add_option("--freeze", bf.freeze, "Trainable blocks: all, none, first:K or last:K");
    bridge->add_option("--ratio", bf.ratio, "Random-label ratio");
    bridge->add_flag("--exclude-true-class", bf.exclude_true_class, "Never resample a label to its true class");
    bridge->add_flag("--causal-patches", bf.causal_patches, "Causal attention mask over patches");

    auto* ad = app.add_subcommand("adapt", "Downstream adaptation from a bridge snapshot");
    add_recipe_options(ad, ro);
    ad->add_option("--snapshot", snapshot, "Bridge snapshot (default: OUT/thetaT.brlb)");
    ad->add_flag("--finetune", finetune, "Train the whole network instead of the head");

    auto* lp = app.add_subcommand("linear-probe", "Linear probe on frozen backbone features");
    add_recipe_options(lp, ro);
    lp->add_option("--snapshot", snapshot, "Backbone snapshot (default: OUT/thetaT.brlb)");

    auto* sw = app.add_subcommand("sweep", "Learning rate x weight decay sweep, with and without LBBT");
    add_recipe_options(sw, ro);
    sw->add_option("--lr", lrs, "Learning rates")->delimiter(',');
    sw->add_option("--wd", wds, "Weight decays")->delimiter(',');

    auto* an = app.add_subcommand("analyze", "Probes on snapshots");
    an->require_subcommand(1);
    auto* aw = an->add_subcommand("weights", "Weight statistics and outliers");
    add_recipe_options(aw, ro);
    aw->add_option("--ckpt", ckpt, "Model checkpoint")->required();
    aw->add_option("--z", z, "Outlier z-score threshold");
    auto* aa = an->add_subcommand("activations", "Per-layer activation ratio");
    add_recipe_options(aa, ro);
    aa->add_option("--ckpt", ckpt, "Model checkpoint")->required();
    aa->add_option("--before", before, "Baseline checkpoint to compare against");
    auto* al = an->add_subcommand("landscape", "Loss surface and Hessian spectrum");
    add_recipe_options(al, ro);
    al->add_option("--theta0", theta0, "Initial snapshot")->required();
    al->add_option("--thetaT", thetaT, "Final snapshot")->required();
    al->add_option("--grid", grid, "Grid size AxB");
    al->add_option("--span", span, "Half-width of each axis");
    al->add_flag("--raw-directions", raw, "Skip per-tensor direction normalization");
    al->add_flag("--spectrum", spectrum, "Also compute Hessian spectrum metrics at thetaT");
    auto* ag = an->add_subcommand("align", "Covariance alignment fixture");
    ag->add_option("--preset", align_preset, "theorem-fixture")->required();
    ag->add_option("--seed", align_seed, "Fixture seed");
    ag->add_option("--out", ro.out, "Output directory");
    auto* ac = an->add_subcommand("cluster", "Hidden-state clustering");
    add_recipe_options(ac, ro);
    ac->add_option("--ckpt", ckpt, "Model checkpoint")->required();
    ac->add_option("--k", k, "Clusters (0 = number of classes)");

    auto* rp = app.add_subcommand("repro", "Run a canned figure recipe");
    rp->add_option("figure", figure, "Figure id: fig1, fig3, fig4, fig5, fig6 or fig7")->required();
    rp->add_option("--scale", scale, "smoke or full");
    rp->add_option("--out", ro.out, "Output directory");
    rp->add_option("--lm", ro.lm, "Pretrained language model checkpoint to reuse");

    auto* rc = app.add_subcommand("recipe", "Print the resolved recipe and its hash");
    add_recipe_options(rc, ro);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (threads) {
        setenv("BRIDGELAB_THREADS", std::to_string(*threads).c_str(), 1);
    }

    try {
        if (*pre) return cmd_pretrain(ro);
        if (*bridge) return cmd_bridge(ro, bf);
        if (*ad) return cmd_adapt(ro, snapshot, finetune);
        if (*lp) return cmd_linear_probe(ro, snapshot);
        if (*sw) return cmd_sweep(ro, lrs, wds);
        if (*aw) return cmd_weights(ro, ckpt, z);
        if (*aa) return cmd_activations(ro, ckpt, before);
        if (*al) return cmd_landscape(ro, theta0, thetaT, grid, span, raw, spectrum);
        if (*ag) return cmd_align(ro, align_preset, align_seed);
        if (*ac) return cmd_cluster(ro, ckpt, k);
        if (*rp) return cmd_repro(figure, scale, ro.out, ro.lm);
        if (*rc) return cmd_recipe(ro);
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

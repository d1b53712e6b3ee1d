// cga: train / evaluate / ablate / analyze / gen-data for the CGA U-Net toolkit.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "cga/checkpoint.hpp"
#include "cga/config.hpp"
#include "cga/costing.hpp"
#include "cga/error.hpp"
#include "cga/trainer.hpp"

namespace fs = std::filesystem;
using namespace cga;

namespace {

// exit codes: 0 ok, 1 unexpected, 2 config, 3 data, 4 numeric
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> sets; // raw key=value overrides
    std::optional<uint64_t> seed;
    std::optional<int> epochs;
    std::optional<std::string> out;
    std::optional<std::string> data;
    std::optional<std::string> sam_residual;
    std::optional<std::string> sam_intra;
    std::optional<std::string> inter_sign;
    std::optional<double> inter_weight;
    std::optional<int> switch_epoch;
    std::optional<int> scale;
    std::optional<int> folds;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_file, "flat key=value config file");
    cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
    cmd->add_option("--seed", o.seed, "master RNG seed");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--data", o.data, "dataset directory (manifest.json inside)");
    cmd->add_option("--sam.residual", o.sam_residual, "true/false residual add after the update");
    cmd->add_option("--sam.intra-classes", o.sam_intra, "all | none | label list like 1,2,4");
    cmd->add_option("--inter.sign", o.inter_sign, "maximize | minimize");
    cmd->add_option("--loss.inter-weight", o.inter_weight, "weight of the inter-class loss");
    cmd->add_option("--switch-epoch", o.switch_epoch, "epoch at which L_I joins the total");
    cmd->add_option("--scale", o.scale, "channel-width divisor (1 = full width)");
    cmd->add_option("--folds", o.folds, "cross-validation fold count");
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_file.empty()) cfg = parse_config_file(o.config_file);
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set needs key=value, got '" + kv + "'");
        apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.out) cfg.out_dir = *o.out;
    if (o.data) cfg.data_dir = *o.data;
    if (o.sam_residual) apply_config_kv(cfg, "sam.residual", *o.sam_residual);
    if (o.sam_intra) cfg.sam_intra_classes = *o.sam_intra;
    if (o.inter_sign) cfg.inter_sign = *o.inter_sign;
    if (o.inter_weight) cfg.w_inter = *o.inter_weight;
    if (o.switch_epoch) cfg.switch_epoch = *o.switch_epoch;
    if (o.scale) cfg.scale_div = *o.scale;
    if (o.folds) cfg.folds = *o.folds;
    return cfg;
}

void write_run_manifest(const std::string& out_dir, const RunConfig& cfg,
                        const std::vector<std::string>& artifacts) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["config"] = serialize_config(cfg);
    j["seed"] = cfg.seed;
    nlohmann::json hashes;
    for (const auto& a : artifacts) {
        const auto p = fs::path(out_dir) / a;
        if (fs::exists(p)) {
            char h[32];
            std::snprintf(h, sizeof(h), "%016llx", (unsigned long long)fnv1a64_file(p.string()));
            hashes[a] = h;
        }
    }
    j["artifact_fnv1a64"] = hashes;
    std::ofstream(fs::path(out_dir) / "run.json") << j.dump(2) << "\n";
}

int cmd_train(const CommonOpts& o) {
    RunConfig cfg = resolve_config(o);
    cfg.validate();
    auto cases = build_dataset(cfg);
    auto split = holdout_split(cases.size(), cfg.data_val_holdout);
    auto result = train_model(cfg, cases, split, &std::cout, cfg.out_dir);
    std::cout << "final checkpoint: " << result.checkpoint_path << "\n";
    return 0;
}

int cmd_gen_data(const CommonOpts& o, int cases, int extent, double noise) {
    RunConfig cfg = resolve_config(o);
    if (extent > 0) cfg.phantom_extent = extent;
    if (noise >= 0) cfg.phantom_noise = noise;
    if (cases > 0) cfg.data_cases = cases;
    PhantomSpec spec;
    spec.extent = cfg.phantom_extent;
    spec.seed = cfg.seed * 0x9e3779b97f4a7c15ull + 1;
    spec.tumor_count = cfg.phantom_tumors;
    spec.edema_radius_min = cfg.phantom_edema_rmin;
    spec.edema_radius_max = cfg.phantom_edema_rmax;
    spec.core_frac = cfg.phantom_core_frac;
    spec.enhancing_frac = cfg.phantom_enh_frac;
    spec.center_jitter = cfg.phantom_jitter;
    spec.noise_sigma = cfg.phantom_noise;
    write_phantom_dataset(cfg.out_dir, spec, cfg.data_cases, cfg.folds);
    write_run_manifest(cfg.out_dir, cfg, {"manifest.json"});
    std::cout << "wrote " << cfg.data_cases << " cases to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint, bool dump_heatmaps) {
    RunConfig cfg = resolve_config(o);
    cfg.validate();
    auto spec = NetworkSpec::desk_scale(cfg.scale_div, cfg.crop);
    spec.dropout = cfg.dropout;
    CgaUnet<float> model(spec, cfg.seed, cfg.sam_enabled, cfg.sam_attention_softmax);
    auto meta = load_checkpoint(checkpoint, model, nullptr);
    auto cases = build_dataset(cfg);
    std::vector<size_t> all;
    for (size_t i = 0; i < cases.size(); ++i) all.push_back(i);

    EvalOptions eopts;
    eopts.dump_heatmaps = dump_heatmaps;
    eopts.heatmap_dir = (fs::path(cfg.out_dir) / "heatmaps").string();
    auto ev = evaluate_model(model, cases, all, cfg, eopts);

    fs::create_directories(cfg.out_dir);
    std::ofstream txt(fs::path(cfg.out_dir) / "metrics.txt");
    std::ofstream kvf(fs::path(cfg.out_dir) / "metrics.kv");
    char line[512];
    std::snprintf(line, sizeof(line), "checkpoint epoch %u seed %llu, %zu cases\n", meta.epoch,
                  (unsigned long long)meta.seed, cases.size());
    txt << line;
    std::snprintf(line, sizeof(line), "%-8s %10s %10s %10s %12s %12s %12s\n", "case", "dice.et",
                  "dice.wt", "dice.tc", "hd95.et", "hd95.wt", "hd95.tc");
    txt << line;
    for (size_t i = 0; i < ev.per_case.size(); ++i) {
        const auto& s = ev.per_case[i];
        std::snprintf(line, sizeof(line), "%-8zu %10.4f %10.4f %10.4f %12.4f %12.4f %12.4f\n", i,
                      s.dice[0], s.dice[1], s.dice[2], s.hd95[0], s.hd95[1], s.hd95[2]);
        txt << line;
        for (const auto& [k, v] : scores_as_kv(s))
            kvf << "case." << i << "." << k << " = " << v << "\n";
    }
    std::snprintf(line, sizeof(line),
                  "mean dice et/wt/tc = %.4f / %.4f / %.4f (fg mean %.4f), hd failures %d\n",
                  ev.mean.dice[0], ev.mean.dice[1], ev.mean.dice[2],
                  ev.mean.mean_foreground_dice(), ev.hausdorff_failures);
    txt << line;
    std::cout << line;
    std::snprintf(line, sizeof(line), "confidence bins [0,.1) [.1,.5) [.5,.9) [.9,1] = %.4f %.4f %.4f %.4f\n",
                  ev.confidence[0], ev.confidence[1], ev.confidence[2], ev.confidence[3]);
    txt << line;
    std::cout << line;
    for (const auto& [k, v] : scores_as_kv(ev.mean)) kvf << "mean." << k << " = " << v << "\n";
    for (int b = 0; b < 4; ++b) kvf << "confidence.bin" << b << " = " << ev.confidence[size_t(b)] << "\n";
    txt.close();
    kvf.close();
    write_run_manifest(cfg.out_dir, cfg, {"metrics.txt", "metrics.kv"});
    return 0;
}

int cmd_ablate(const CommonOpts& o) {
    RunConfig cfg = resolve_config(o);
    if (cfg.data_dir.empty()) throw ConfigError("ablate needs --data with a fold manifest");
    auto table = run_ablation(cfg, cfg.data_dir, &std::cerr);
    const std::string text = format_ablation(table);
    std::cout << text;
    fs::create_directories(cfg.out_dir);
    std::ofstream(fs::path(cfg.out_dir) / "ablation.txt") << text;
    write_run_manifest(cfg.out_dir, cfg, {"ablation.txt"});
    return 0;
}

int cmd_analyze(const std::string& target, const std::string& mode_str,
                const std::string& out_file) {
    CountMode mode;
    if (mode_str == "fma")
        mode = CountMode::fma;
    else if (mode_str == "flop")
        mode = CountMode::flop;
    else
        throw ConfigError("--count-mode must be fma or flop, got '" + mode_str + "'");
    Graph g = fs::exists(target) ? parse_graph_file(target) : preset_by_name(target);
    auto report = analyze(g, mode);
    const std::string text = format_report(report);
    std::cout << text;
    if (!out_file.empty()) {
        std::ofstream f(out_file);
        f << "graph = " << report.graph << "\n";
        for (const auto& n : report.per_node)
            f << "node." << n.name << ".flops = " << n.flops << "\n"
              << "node." << n.name << ".params = " << n.params << "\n";
        f << "total.flops = " << report.total_flops << "\n";
        f << "total.params = " << report.total_params << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Category guided attention U-Net toolkit"};
    app.require_subcommand(1);

    CommonOpts train_opts, gen_opts, eval_opts, ablate_opts;

    auto* train = app.add_subcommand("train", "train on phantom or dataset volumes");
    add_common(train, train_opts);

    auto* gen = app.add_subcommand("gen-data", "generate a phantom dataset with fold manifest");
    add_common(gen, gen_opts);
    int gen_cases = 0, gen_extent = 0;
    double gen_noise = -1;
    gen->add_option("--cases", gen_cases, "number of cases");
    gen->add_option("--extent", gen_extent, "phantom cube extent");
    gen->add_option("--noise", gen_noise, "phantom noise sigma");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, emit metrics reports");
    add_common(eval, eval_opts);
    std::string eval_checkpoint;
    bool eval_dump = false;
    eval->add_option("--checkpoint", eval_checkpoint, "CGAC checkpoint path")->required();
    eval->add_flag("--dump-heatmaps", eval_dump, "write attention / bottleneck volumes");

    auto* ablate = app.add_subcommand("ablate", "cross-validated ablation table");
    add_common(ablate, ablate_opts);

    auto* analyze_cmd = app.add_subcommand("analyze", "static FLOPs/parameter report");
    std::string analyze_target, analyze_mode = "fma", analyze_out;
    analyze_cmd->add_option("target", analyze_target, "preset name or graph file")->required();
    analyze_cmd->add_option("--count-mode", analyze_mode, "fma (default) or flop");
    analyze_cmd->add_option("--out", analyze_out, "key-value report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : 0;
    }

    try {
        if (*train) return cmd_train(train_opts);
        if (*gen) return cmd_gen_data(gen_opts, gen_cases, gen_extent, gen_noise);
        if (*eval) return cmd_eval(eval_opts, eval_checkpoint, eval_dump);
        if (*ablate) return cmd_ablate(ablate_opts);
        if (*analyze_cmd) return cmd_analyze(analyze_target, analyze_mode, analyze_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

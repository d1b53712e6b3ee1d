#include "cga/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "cga/augment.hpp"
#include "cga/checkpoint.hpp"
#include "cga/error.hpp"
#include "cga/losses.hpp"

namespace fs = std::filesystem;

namespace cga {

std::vector<TrainCase> build_dataset(const RunConfig& cfg) {
    std::vector<TrainCase> cases;
    if (!cfg.data_dir.empty()) {
        auto idx = read_manifest(cfg.data_dir);
        for (const auto& c : idx.cases) {
            auto pc = load_case(cfg.data_dir, c);
            cases.push_back({std::move(pc.image), std::move(pc.labels)});
        }
        return cases;
    }
    PhantomSpec base;
    base.extent = cfg.phantom_extent;
    base.seed = cfg.seed * 0x9e3779b97f4a7c15ull + 1;
    base.tumor_count = cfg.phantom_tumors;
    base.edema_radius_min = cfg.phantom_edema_rmin;
    base.edema_radius_max = cfg.phantom_edema_rmax;
    base.core_frac = cfg.phantom_core_frac;
    base.enhancing_frac = cfg.phantom_enh_frac;
    base.center_jitter = cfg.phantom_jitter;
    base.noise_sigma = cfg.phantom_noise;
    for (int i = 0; i < cfg.data_cases; ++i) {
        PhantomSpec spec = base;
        spec.seed = base.seed + uint64_t(i) * 0x9e3779b9ull;
        auto pc = generate_phantom(spec);
        cases.push_back({std::move(pc.image), std::move(pc.labels)});
    }
    return cases;
}

SplitIndices holdout_split(size_t n_cases, int holdout) {
    if (holdout < 0 || size_t(holdout) >= n_cases)
        throw ConfigError("holdout_split: holdout must leave at least one training case");
    SplitIndices s;
    for (size_t i = 0; i < n_cases - size_t(holdout); ++i) s.train.push_back(i);
    for (size_t i = n_cases - size_t(holdout); i < n_cases; ++i) s.val.push_back(i);
    return s;
}

SplitIndices fold_split(const DatasetIndex& idx, int fold) {
    SplitIndices s;
    for (size_t i = 0; i < idx.cases.size(); ++i) {
        if (idx.cases[i].fold == fold)
            s.val.push_back(i);
        else
            s.train.push_back(i);
    }
    if (s.train.empty() || s.val.empty())
        throw ConfigError("fold_split: fold " + std::to_string(fold) + " leaves an empty side");
    return s;
}

std::string format_epoch_log(const EpochLog& e) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "epoch=%d l_main=%.9g l_att=%.9g l_inter=%.9g total=%.9g "
                  "val_et=%.9g val_wt=%.9g val_tc=%.9g val_fg=%.9g",
                  e.epoch, e.l_main, e.l_att, e.l_inter, e.total, e.val_et, e.val_wt, e.val_tc,
                  e.val_fg);
    return buf;
}

namespace {

struct BatchTensors {
    Tensor<float> image;      // (B,4,s,s,s)
    Tensor<float> gt_onehot;  // (B,4,s,s,s)
    Tensor<float> guided_map; // (B,4,s/8,s/8,s/8)
};

BatchTensors assemble_batch(const std::vector<Augmented>& samples) {
    const int64_t b = int64_t(samples.size());
    const auto& s0 = samples[0].image.shape();
    const int64_t sp = s0[1] * s0[2] * s0[3];
    BatchTensors out;
    out.image = Tensor<float>({b, s0[0], s0[1], s0[2], s0[3]});
    out.gt_onehot = Tensor<float>({b, 4, s0[1], s0[2], s0[3]});
    const int64_t gs = s0[1] / 8;
    out.guided_map = Tensor<float>({b, 4, gs, gs, gs});
    for (int64_t i = 0; i < b; ++i) {
        std::copy(samples[size_t(i)].image.data(), samples[size_t(i)].image.data() + 4 * sp,
                  out.image.data() + i * 4 * sp);
        auto oh = onehot_encode<float>(samples[size_t(i)].labels);
        std::copy(oh.data(), oh.data() + oh.numel(), out.gt_onehot.data() + i * oh.numel());
        auto g = make_category_guided_map<float>(samples[size_t(i)].labels, 8);
        std::copy(g.data(), g.data() + g.numel(), out.guided_map.data() + i * g.numel());
    }
    return out;
}

LabelVolume predict_labels(CgaUnet<float>& model, const Tensor<float>& image,
                           const RunConfig& cfg, Tensor<float>* probs_out,
                           ForwardOutput<float>* fw_out) {
    Tape<float> tp;
    SamOptions opts;
    opts.residual = cfg.sam_residual;
    opts.hard_masks = cfg.sam_hard_masks;
    opts.intra_classes = cfg.intra_class_channels();
    Shape batched = {1, image.dim(0), image.dim(1), image.dim(2), image.dim(3)};
    auto out = model.forward(tp, reshape(image, batched), /*train=*/false, nullptr, opts,
                             cfg.inter_ordered_pairs, fw_out != nullptr);
    Tensor<float> probs = reshape(out.pred.value(), {image.dim(0), image.dim(1), image.dim(2), image.dim(3)});
    if (probs_out) *probs_out = probs;
    if (fw_out) *fw_out = out;
    return labels_from_channel_argmax(probs);
}

} // namespace

TrainResult train_model(const RunConfig& cfg, const std::vector<TrainCase>& cases,
                        const SplitIndices& split, std::ostream* log_stream,
                        const std::string& out_dir) {
    cfg.validate();
    if (split.train.empty()) throw ConfigError("train: no training cases");

    auto spec = NetworkSpec::desk_scale(cfg.scale_div, cfg.crop);
    spec.dropout = cfg.dropout;
    TrainResult result;
    result.model = std::make_shared<CgaUnet<float>>(spec, cfg.seed, cfg.sam_enabled,
                                                    cfg.sam_attention_softmax);
    CgaUnet<float>& model = *result.model;

    Adam<float>::Hyper hyper;
    hyper.lr = float(cfg.lr);
    hyper.weight_decay = float(cfg.weight_decay);
    Adam<float> opt(hyper);

    Rng master(cfg.seed);
    Rng shuffle_rng = master.split(1);
    Rng augment_rng = master.split(2);
    Rng dropout_rng = master.split(3);

    SamOptions sam_opts;
    sam_opts.residual = cfg.sam_residual;
    sam_opts.hard_masks = cfg.sam_hard_masks;
    sam_opts.intra_classes = cfg.intra_class_channels();

    AugmentConfig aug;
    aug.crop = cfg.crop;

    std::ofstream log_file, att_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        log_file.open(fs::path(out_dir) / "epoch.log");
        att_file.open(fs::path(out_dir) / "att_curve.txt");
    }

    const int crops = std::max(1, cfg.crops_per_case);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // polynomial decay from the initial rate
        opt.hyper().lr = float(cfg.lr * std::pow(1.0 - double(epoch) / double(cfg.epochs),
                                                 cfg.lr_poly_power));
        std::vector<size_t> order;
        for (int c = 0; c < crops; ++c)
            order.insert(order.end(), split.train.begin(), split.train.end());
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(shuffle_rng.below(uint64_t(i)))]);

        double sum_main = 0, sum_att = 0, sum_inter = 0, sum_total = 0;
        int64_t n_samples = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch));
            std::vector<Augmented> samples;
            for (size_t i = start; i < stop; ++i) {
                const auto& tc = cases[order[i]];
                samples.push_back(augment(tc.image, tc.labels, aug, augment_rng));
            }
            auto batch = assemble_batch(samples);

            Tape<float> tp;
            auto out = model.forward(tp, batch.image, /*train=*/true, &dropout_rng, sam_opts,
                                     cfg.inter_ordered_pairs);
            LossBundle<float> bundle;
            bundle.main = softmax_dice_loss(tp, out.pred, batch.gt_onehot);
            if (cfg.sam_enabled) {
                bundle.att = attention_supervision_loss(tp, out.att_map, batch.guided_map);
                bundle.inter = cfg.inter_enabled
                                   ? inter_class_loss(tp, out.inter_distance, cfg.inter_sign_enum())
                                   : constant(Tensor<float>::scalar(0.f));
            } else {
                bundle.att = constant(Tensor<float>::scalar(0.f));
                bundle.inter = constant(Tensor<float>::scalar(0.f));
            }
            bundle.epoch = epoch;
            bundle.switch_epoch = cfg.switch_epoch;
            bundle.weights = LossWeights{cfg.w_main, cfg.w_att, cfg.w_inter};
            auto total = schedule_total(tp, bundle);

            if (std::isnan(total.value()[0])) {
                auto nan_node = tp.first_nan_node();
                throw NumericError("training aborted: NaN loss at epoch " + std::to_string(epoch) +
                                   ", first NaN tensor from op '" +
                                   (nan_node ? *nan_node : std::string("<unknown>")) + "'");
            }

            opt.zero_grad(model.parameters());
            tp.backward(total);
            opt.step(model.parameters());

            const auto b = double(stop - start);
            sum_main += double(bundle.main.value()[0]) * b;
            sum_att += double(bundle.att.value()[0]) * b;
            sum_inter += double(bundle.inter.value()[0]) * b;
            sum_total += double(total.value()[0]) * b;
            n_samples += int64_t(b);
        }

        EpochLog e;
        e.epoch = epoch;
        e.l_main = sum_main / double(n_samples);
        e.l_att = sum_att / double(n_samples);
        e.l_inter = sum_inter / double(n_samples);
        e.total = sum_total / double(n_samples);

        if (!split.val.empty()) {
            auto ev = evaluate_model(model, cases, split.val, cfg);
            e.val_et = ev.mean.dice[0];
            e.val_wt = ev.mean.dice[1];
            e.val_tc = ev.mean.dice[2];
            e.val_fg = ev.mean.mean_foreground_dice();
        }
        result.log.push_back(e);
        const std::string line = format_epoch_log(e);
        if (log_stream) (*log_stream) << line << "\n";
        if (log_file) log_file << line << "\n";
        if (att_file) att_file << e.epoch << " " << e.l_att << "\n";

        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            const auto p = fs::path(out_dir) / ("checkpoint_" + std::to_string(epoch + 1) + ".cgac");
            save_checkpoint(p.string(), model, &opt, {uint32_t(epoch + 1), cfg.seed});
        }
    }

    if (!result.log.empty()) result.final_val_fg = result.log.back().val_fg;
    if (!out_dir.empty()) {
        const auto p = fs::path(out_dir) / "checkpoint_final.cgac";
        save_checkpoint(p.string(), model, &opt, {uint32_t(cfg.epochs), cfg.seed});
        result.checkpoint_path = p.string();

        // run manifest: config snapshot, seed and artifact hashes
        nlohmann::json manifest;
        manifest["config"] = serialize_config(cfg);
        manifest["seed"] = cfg.seed;
        nlohmann::json hashes;
        for (const auto& name : {"epoch.log", "att_curve.txt", "checkpoint_final.cgac"}) {
            const auto fp = fs::path(out_dir) / name;
            if (fs::exists(fp)) {
                char h[32];
                std::snprintf(h, sizeof(h), "%016llx", (unsigned long long)fnv1a64_file(fp.string()));
                hashes[name] = h;
            }
        }
        manifest["artifact_fnv1a64"] = hashes;
        log_file.close();
        att_file.close();
        std::ofstream(fs::path(out_dir) / "run.json") << manifest.dump(2) << "\n";
    }
    return result;
}

EvalResult evaluate_model(CgaUnet<float>& model, const std::vector<TrainCase>& cases,
                          const std::vector<size_t>& indices, const RunConfig& cfg,
                          const EvalOptions& opts) {
    EvalResult res;
    std::array<double, 4> conf_acc{0, 0, 0, 0};
    std::array<double, 3> dice_acc{0, 0, 0};
    std::array<double, 3> hd95_acc{0, 0, 0}, hd100_acc{0, 0, 0};
    std::array<int, 3> hd95_n{0, 0, 0}, hd100_n{0, 0, 0};
    int dumped = 0;
    for (size_t ci : indices) {
        const auto& tc = cases[ci];
        Augmented view{tc.image, tc.labels};
        if (tc.image.dim(1) != cfg.crop) view = center_crop(tc.image, tc.labels, cfg.crop);

        Tensor<float> probs;
        ForwardOutput<float> fw;
        const bool want_dump = opts.dump_heatmaps && dumped < opts.max_heatmap_cases;
        LabelVolume pred = predict_labels(model, view.image, cfg, &probs, want_dump ? &fw : nullptr);

        auto scores = score_case(pred, view.labels);
        res.per_case.push_back(scores);
        auto bins = confidence_histogram(probs);
        for (int b = 0; b < 4; ++b) conf_acc[size_t(b)] += bins[size_t(b)];
        for (int r = 0; r < 3; ++r) {
            dice_acc[size_t(r)] += scores.dice[size_t(r)];
            if (std::isinf(scores.hd95[size_t(r)]))
                ++res.hausdorff_failures;
            else {
                hd95_acc[size_t(r)] += scores.hd95[size_t(r)];
                ++hd95_n[size_t(r)];
            }
            if (!std::isinf(scores.hd100[size_t(r)])) {
                hd100_acc[size_t(r)] += scores.hd100[size_t(r)];
                ++hd100_n[size_t(r)];
            }
        }

        if (want_dump && fw.has_snapshots) {
            fs::create_directories(opts.heatmap_dir);
            const std::string base = (fs::path(opts.heatmap_dir) / ("case_" + std::to_string(ci))).string();
            write_volume(base + "_attention.cgav", fw.att_snapshot);
            write_volume(base + "_bottleneck_before.cgav", fw.bottleneck_before);
            write_volume(base + "_bottleneck_after.cgav", fw.bottleneck_after);
            ++dumped;
        }
    }
    const double n = double(indices.size());
    for (int r = 0; r < 3; ++r) {
        res.mean.dice[size_t(r)] = dice_acc[size_t(r)] / n;
        res.mean.hd95[size_t(r)] = hd95_n[size_t(r)] ? hd95_acc[size_t(r)] / hd95_n[size_t(r)]
                                                     : std::numeric_limits<double>::infinity();
        res.mean.hd100[size_t(r)] = hd100_n[size_t(r)] ? hd100_acc[size_t(r)] / hd100_n[size_t(r)]
                                                       : std::numeric_limits<double>::infinity();
    }
    for (int b = 0; b < 4; ++b) res.confidence[size_t(b)] = conf_acc[size_t(b)] / n;
    return res;
}

std::vector<std::pair<std::string, RunConfig>> ablation_rows(const RunConfig& base) {
    std::vector<std::pair<std::string, RunConfig>> rows;
    auto push = [&](const std::string& name, auto mutate) {
        RunConfig cfg = base;
        mutate(cfg);
        rows.push_back({name, cfg});
    };
    push("Baseline", [](RunConfig& c) { c.sam_enabled = false; });
    push("Baseline + Intra", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "all";
        c.inter_enabled = false;
    });
    push("Baseline + Intra (class1)", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "1";
        c.inter_enabled = false;
    });
    push("Baseline + Intra (class2)", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "2";
        c.inter_enabled = false;
    });
    push("Baseline + Intra (class4)", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "4";
        c.inter_enabled = false;
    });
    push("Baseline + Inter", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "none";
        c.inter_enabled = true;
        c.inter_sign = "maximize";
    });
    push("Baseline - Inter", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "none";
        c.inter_enabled = true;
        c.inter_sign = "minimize";
    });
    push("Baseline + Intra + Inter", [](RunConfig& c) {
        c.sam_enabled = true;
        c.sam_intra_classes = "all";
        c.inter_enabled = true;
        c.inter_sign = "maximize";
    });
    return rows;
}

AblationTable run_ablation(const RunConfig& base, const std::string& data_dir,
                           std::ostream* progress) {
    auto idx = read_manifest(data_dir);
    RunConfig cfg0 = base;
    cfg0.data_dir = data_dir;
    auto cases = build_dataset(cfg0);
    int max_fold = 0;
    for (const auto& c : idx.cases) max_fold = std::max(max_fold, c.fold);
    const int n_folds = max_fold + 1;
    if (n_folds < 2) throw ConfigError("ablation: need at least 2 folds in the manifest");

    AblationTable table;
    for (const auto& [name, row_cfg] : ablation_rows(cfg0)) {
        std::vector<std::map<std::string, double>> fold_scores;
        for (int fold = 0; fold < n_folds; ++fold) {
            auto split = fold_split(idx, fold);
            if (progress)
                (*progress) << "ablate: " << name << " fold " << fold << "/" << n_folds << "\n";
            RunConfig cfg = row_cfg;
            cfg.seed = base.seed + uint64_t(fold);
            TrainResult tr = train_model(cfg, cases, split);
            auto ev = evaluate_model(*tr.model, cases, split.val, cfg);
            std::map<std::string, double> kv;
            kv["dice.et"] = ev.mean.dice[0];
            kv["dice.wt"] = ev.mean.dice[1];
            kv["dice.tc"] = ev.mean.dice[2];
            kv["hd100.et"] = ev.mean.hd100[0];
            kv["hd100.wt"] = ev.mean.hd100[1];
            kv["hd100.tc"] = ev.mean.hd100[2];
            fold_scores.push_back(std::move(kv));
        }
        auto agg = cross_val_aggregate(fold_scores);
        table.row_names.push_back(name);
        std::array<AblationCell, 6> cells;
        const char* keys[6] = {"dice.et", "dice.wt", "dice.tc", "hd100.et", "hd100.wt", "hd100.tc"};
        for (int i = 0; i < 6; ++i)
            cells[size_t(i)] = {agg[keys[i]].mean, agg[keys[i]].stddev};
        table.cells.push_back(cells);
    }
    return table;
}

std::string format_ablation(const AblationTable& t) {
    std::string out;
    char line[512];
    std::snprintf(line, sizeof(line), "%-28s %9s %9s %9s %11s %11s %11s\n", "method", "dice.et",
                  "dice.wt", "dice.tc", "hd100.et", "hd100.wt", "hd100.tc");
    out += line;
    for (size_t r = 0; r < t.row_names.size(); ++r) {
        const auto& c = t.cells[r];
        std::snprintf(line, sizeof(line), "%-28s %9.4f %9.4f %9.4f %11.4f %11.4f %11.4f\n",
                      t.row_names[r].c_str(), c[0].mean, c[1].mean, c[2].mean, c[3].mean, c[4].mean,
                      c[5].mean);
        out += line;
    }
    out += "stddev (population, over folds):\n";
    for (size_t r = 0; r < t.row_names.size(); ++r) {
        const auto& c = t.cells[r];
        std::snprintf(line, sizeof(line), "%-28s %9.4f %9.4f %9.4f %11.4f %11.4f %11.4f\n",
                      t.row_names[r].c_str(), c[0].stddev, c[1].stddev, c[2].stddev, c[3].stddev,
                      c[4].stddev, c[5].stddev);
        out += line;
    }
    return out;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot hash missing file");
    uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= uint64_t(uint8_t(buf[i]));
            h *= 1099511628211ull;
        }
        if (f.eof()) break;
    }
    return h;
}

} // namespace cga

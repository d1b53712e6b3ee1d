#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cga/config.hpp"
#include "cga/metrics.hpp"
#include "cga/network.hpp"
#include "cga/phantom.hpp"

namespace cga {

struct TrainCase {
    Tensor<float> image; // (4,S,S,S)
    LabelVolume labels;
};

// Cases either loaded from cfg.data_dir (manifest order) or generated from
// the phantom settings (deterministic in cfg.seed).
std::vector<TrainCase> build_dataset(const RunConfig& cfg);

struct SplitIndices {
    std::vector<size_t> train, val;
};

// Last `holdout` cases become validation.
SplitIndices holdout_split(size_t n_cases, int holdout);
// Manifest-driven: cases in `fold` validate, the rest train.
SplitIndices fold_split(const DatasetIndex& idx, int fold);

struct EpochLog {
    int epoch = 0;
    double l_main = 0, l_att = 0, l_inter = 0, total = 0;
    double val_et = 0, val_wt = 0, val_tc = 0, val_fg = 0;
};

std::string format_epoch_log(const EpochLog& e);

struct TrainResult {
    std::vector<EpochLog> log;
    std::string checkpoint_path; // final; empty when out_dir was empty
    double final_val_fg = 0;
    std::shared_ptr<CgaUnet<float>> model; // the trained network
};

// Deterministic end-to-end training per (config, dataset, split). When
// out_dir is non-empty, writes epoch.log, att_curve.txt, checkpoints and
// run.json there. log_stream (when given) receives one line per epoch.
TrainResult train_model(const RunConfig& cfg, const std::vector<TrainCase>& cases,
                        const SplitIndices& split, std::ostream* log_stream = nullptr,
                        const std::string& out_dir = {});

struct EvalOptions {
    bool dump_heatmaps = false;
    std::string heatmap_dir;
    int max_heatmap_cases = 2;
};

struct EvalResult {
    std::vector<RegionScores> per_case;
    RegionScores mean;                 // per-region means; hausdorff means skip +inf failures
    std::array<double, 4> confidence{}; // pooled over all cases
    int hausdorff_failures = 0;
};

EvalResult evaluate_model(CgaUnet<float>& model, const std::vector<TrainCase>& cases,
                          const std::vector<size_t>& indices, const RunConfig& cfg,
                          const EvalOptions& opts = {});

// The eight ablation configurations (baseline, intra variants, inter
// variants, both), derived from a base config.
std::vector<std::pair<std::string, RunConfig>> ablation_rows(const RunConfig& base);

struct AblationCell {
    double mean = 0, stddev = 0;
};
struct AblationTable {
    std::vector<std::string> row_names;
    // per row: dice.et, dice.wt, dice.tc, hd100.et, hd100.wt, hd100.tc
    std::vector<std::array<AblationCell, 6>> cells;
};

// Cross-validated Table-4/Table-6 style ablation over the manifest folds.
AblationTable run_ablation(const RunConfig& base, const std::string& data_dir,
                           std::ostream* progress);

std::string format_ablation(const AblationTable& t);

// FNV-1a 64 content hash, for the run manifest.
uint64_t fnv1a64_file(const std::string& path);

} // namespace cga

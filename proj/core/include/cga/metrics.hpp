#pragma once

#include <array>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cga/tensor.hpp"
#include "cga/volume.hpp"

namespace cga {

// BraTS evaluation regions. Composition follows the dataset convention:
// ET = {4}, WT = {1,2,4}, TC = {1,4}.
enum class Region { ET, WT, TC };
inline constexpr std::array<Region, 3> kRegions{Region::ET, Region::WT, Region::TC};
const char* region_name(Region r);
bool in_region(uint8_t label, Region r);

using Mask3 = std::vector<uint8_t>; // 0/1 per voxel, row-major (D,H,W)

Mask3 region_mask(const LabelVolume& labels, Region r);

// Region Dice = 2|P ∩ G| / (|P| + |G|); both-empty gives 1.0 by convention.
double region_dice(const LabelVolume& pred, const LabelVolume& gt, Region r);
double mask_dice(const Mask3& p, const Mask3& g);

// Percentile-truncated symmetric surface distance. Surfaces are 6-connectivity
// boundary voxels (volume border counts as outside). percentile in {95, 100};
// nearest-rank percentile per directed set, then max of the two directions.
// An empty mask on either side returns +infinity (per-case failure sentinel).
double hausdorff(const LabelVolume& pred, const LabelVolume& gt, Region r, int percentile,
                 const std::array<double, 3>& spacing_mm = {1.0, 1.0, 1.0});
double mask_hausdorff(const Mask3& p, const Mask3& g, int64_t d, int64_t h, int64_t w,
                      int percentile, const std::array<double, 3>& spacing_mm);

// Fig.-7-style confidence bins: [0,0.1), [0.1,0.5), [0.5,0.9), [0.9,1.0].
// Every element of the tensor contributes; values outside [0,1] are an error.
template <typename T>
std::array<double, 4> confidence_histogram(const Tensor<T>& probs);

struct RegionScores {
    // [region] -> value; hausdorff entries may be +inf (empty-mask failures)
    std::array<double, 3> dice{};
    std::array<double, 3> hd95{};
    std::array<double, 3> hd100{};
    double mean_foreground_dice() const { return (dice[0] + dice[1] + dice[2]) / 3.0; }
};

RegionScores score_case(const LabelVolume& pred, const LabelVolume& gt,
                        const std::array<double, 3>& spacing_mm = {1.0, 1.0, 1.0});

struct AggregateStat {
    double mean = 0;
    double stddev = 0; // population (divisor n)
    int failures = 0;  // +inf entries excluded from mean/std, counted here
};

AggregateStat aggregate(const std::vector<double>& values);

// Cross-validation table: per metric name, mean and population std-dev over
// folds. All folds must carry the same metric set.
std::map<std::string, AggregateStat>
cross_val_aggregate(const std::vector<std::map<std::string, double>>& per_fold);

// Flat key-value form of the scores for machine-readable reports.
std::map<std::string, double> scores_as_kv(const RegionScores& s);

} // namespace cga

#pragma once

#include <string>
#include <vector>

#include "cga/rng.hpp"
#include "cga/tensor.hpp"
#include "cga/volume.hpp"

namespace cga {

// Synthetic nested-tumor phantom: a label-4 enhancing core inside a label-1
// core shell inside a label-2 edema sphere, on a label-0 background. Four
// image channels carry class-dependent intensity signatures plus Gaussian
// noise, then per-channel z-score normalization.
struct PhantomSpec {
    int extent = 48;
    uint64_t seed = 1;
    int tumor_count = 1;
    double edema_radius_min = 10.0;
    double edema_radius_max = 13.0;
    double core_frac = 0.7;       // label-1 radius as a fraction of edema radius
    double enhancing_frac = 0.5;  // label-4 radius as a fraction of core radius
    double center_jitter = 0.05;  // uniform center offset, fraction of extent
    double noise_sigma = 0.3;
    bool normalize = true;
};

struct PhantomCase {
    Tensor<float> image; // (4, S, S, S)
    LabelVolume labels;  // (S, S, S), alphabet {0,1,2,4}
};

// Pure function of spec (seed included). Draw order: per tumor system the
// center (3 uniforms) then edema radius (1 uniform); then one normal per
// voxel per channel for noise.
PhantomCase generate_phantom(const PhantomSpec& spec);

// Per-(label, channel) mean intensities before noise; exposed for tests.
float phantom_signature(uint8_t label, int channel);

// ---- dataset directory ----
// Layout: <dir>/case_<id>/image.cgav + labels.cgav, plus manifest.json listing
// cases and their cross-validation fold assignment (round-robin).
struct DatasetCase {
    int id = 0;
    std::string dir; // relative to the dataset root
    int fold = 0;
};

struct DatasetIndex {
    std::vector<DatasetCase> cases;
};

void write_phantom_dataset(const std::string& root, const PhantomSpec& base, int n_cases,
                           int folds);
DatasetIndex read_manifest(const std::string& root);
PhantomCase load_case(const std::string& root, const DatasetCase& c);

} // namespace cga

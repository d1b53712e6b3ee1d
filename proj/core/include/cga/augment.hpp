#pragma once

#include "cga/rng.hpp"
#include "cga/tensor.hpp"
#include "cga/volume.hpp"

namespace cga {

struct AugmentConfig {
    int crop = 32;             // cubic crop extent; must fit the input
    double flip_prob = 0.5;    // per axis, applied to image and labels together
    double shift_range = 0.1;  // additive per-channel intensity shift, image only
    double scale_lo = 0.9;     // multiplicative per-channel scale, image only
    double scale_hi = 1.1;
};

struct Augmented {
    Tensor<float> image;
    LabelVolume labels;
};

// Draw order per call: 3 crop offsets, 3 flip coins, then per channel one
// shift and one scale. Crop corner is uniform over valid positions.
Augmented augment(const Tensor<float>& image, const LabelVolume& labels,
                  const AugmentConfig& cfg, Rng& rng);

// Deterministic center crop (no RNG), used for evaluation when extents differ.
Augmented center_crop(const Tensor<float>& image, const LabelVolume& labels, int crop);

} // namespace cga

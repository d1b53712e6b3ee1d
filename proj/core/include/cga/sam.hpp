#pragma once

#include <optional>
#include <vector>

#include "cga/autodiff.hpp"
#include "cga/tensor.hpp"
#include "cga/volume.hpp"

namespace cga {

// Nearest-neighbor (corner sample) label downsampling by an integer factor.
LabelVolume downsample_labels(const LabelVolume& gt, int factor);

// One-hot category guided map G (C_l, d, h, w) from downsampled ground truth.
template <typename T>
Tensor<T> make_category_guided_map(const LabelVolume& gt, int factor);

// MSE between the attention map and its guidance target; differentiable in S.
template <typename T>
Var<T> attention_supervision_loss(Tape<T>& tp, const Var<T>& S, const Tensor<T>& G);

// Eq.-style masked average pooling of one class mask: feature map X (C,d,h,w)
// against mask M (d,h,w), weighted mean over voxels. A mask with zero total
// weight yields the zero vector and present=false (never divides by zero).
template <typename T>
struct PooledPrototype {
    Var<T> p; // (C)
    bool present = false;
    T weight_sum = T(0);
};
template <typename T>
PooledPrototype<T> masked_average_pool(Tape<T>& tp, const Var<T>& X, const Var<T>& M);

// All classes at once: X (C,d,h,w), S (C_l,d,h,w) -> prototypes (C_l, C).
// Absent classes (zero mask weight) get a zero row and present=false.
template <typename T>
struct PrototypeSet {
    Var<T> p; // (C_l, C)
    std::vector<char> present;
    std::vector<T> weight_sums;
};
template <typename T>
PrototypeSet<T> pool_prototypes(Tape<T>& tp, const Var<T>& X, const Var<T>& S);

// Class-wise reconstruction: voxels of classes in `classes` are rebuilt from
// their prototype weighted by the mask; voxels of excluded classes pass X
// through weighted by their mask. The full class set is the plain intra-class
// update. Differentiable in X, S and the prototypes.
template <typename T>
Var<T> prototype_map(Tape<T>& tp, const Var<T>& protos, const Var<T>& S, const Var<T>& X,
                     const std::vector<int>& classes);

struct SamOptions {
    bool residual = true;          // caller adds Y + X when true (Fig. 1 wiring)
    bool hard_masks = false;       // argmax one-hot of S instead of soft channels
    std::vector<int> intra_classes{0, 1, 2, 3}; // channels to reconstruct
};

template <typename T>
struct SamResult {
    Var<T> updated;       // (C,d,h,w) reconstruction (no residual applied)
    PrototypeSet<T> prototypes;
    bool warned_empty_subset = false;
};

// The intra-class update (pool + map) for one sample.
template <typename T>
SamResult<T> intra_class_update(Tape<T>& tp, const Var<T>& X, const Var<T>& S,
                                const SamOptions& opts);

// Sum of pairwise Euclidean distances between present prototypes. Fewer than
// two present prototypes gives D = 0 and sets `warned`. With ordered_pairs the
// sum runs over ordered pairs (exactly doubling D).
template <typename T>
Var<T> inter_class_distance(Tape<T>& tp, const PrototypeSet<T>& protos, bool ordered_pairs,
                            bool* warned = nullptr);

enum class InterSign { maximize, minimize };

// maximize: log(1/(1+D)) = -log(1+D); minimize flips the sign (the ablation
// that actively shrinks the inter-class distance).
template <typename T>
Var<T> inter_class_loss(Tape<T>& tp, const Var<T>& D, InterSign sign);

// Hard one-hot masks from an attention map: argmax over the class axis.
template <typename T>
Tensor<T> hard_masks_from(const Tensor<T>& S); // (C_l,d,h,w) -> one-hot same shape

} // namespace cga

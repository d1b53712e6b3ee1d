#pragma once

#include "cga/autodiff.hpp"
#include "cga/tensor.hpp"

namespace cga {

// Softmax Dice loss over the foreground channels (1..C_l-1). pred must
// already be softmax-normalized over the channel axis; gt is one-hot.
// loss = 1 - mean_c (2 * sum(p g) + eps) / (sum p + sum g + eps), sums over
// batch and space per channel. Plain (non-squared) denominator, eps = 1e-5.
template <typename T>
Var<T> softmax_dice_loss(Tape<T>& tp, const Var<T>& pred, const Tensor<T>& gt_onehot,
                         T eps = T(1e-5));

struct LossWeights {
    double main = 1.0;  // w_M (== w_A by construction)
    double att = 1.0;   // w_A
    double inter = 0.1; // w_I, keeps L_I within an order of magnitude of L_M
};

// The three-loss bundle with its two-stage schedule: before switch_epoch the
// total is w_M L_M + w_A L_A; from switch_epoch on, w_I L_I joins.
template <typename T>
struct LossBundle {
    Var<T> main;
    Var<T> att;
    Var<T> inter;
    int epoch = 0;
    int switch_epoch = 20;
    LossWeights weights;
};

template <typename T>
bool inter_active(const LossBundle<T>& b) {
    return b.epoch >= b.switch_epoch;
}

template <typename T>
Var<T> schedule_total(Tape<T>& tp, const LossBundle<T>& bundle);

} // namespace cga

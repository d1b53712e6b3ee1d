#pragma once

#include <optional>

#include "cga/tensor.hpp"
#include "cga/volume.hpp"

namespace cga {

// Forward-only reference modules used for behavioral comparison and cost
// accounting. Not trainable by design.

// 1x1 projections as (C_out x C_in) matrices applied to the flattened
// feature map (C, N). wv must map C -> C so the residual add typechecks.
template <typename T>
struct SelfAttentionWeights {
    Tensor<T> wq; // (C', C)
    Tensor<T> wk; // (C', C)
    Tensor<T> wv; // (C,  C)
};

template <typename T>
struct SelfAttentionOut {
    Tensor<T> y; // same shape as x
    Tensor<T> s; // (N, N), rows sum to 1
};

// x is (C, spatial...): 2D (C,H,W) or 3D (C,D,H,W). Classic two-multiply
// attention: S = softmax_rows(Q^T K), y = V S^T reshaped, plus the residual.
template <typename T>
SelfAttentionOut<T> self_attention_forward(const Tensor<T>& x, const SelfAttentionWeights<T>& w);

// Binary affinity map A = L L^T over the factor-downsampled ground truth;
// A[i][j] == 1 iff class(i) == class(j). Guarded to N <= 4096.
template <typename T>
Tensor<T> affinity_map(const LabelVolume& gt, int factor);

template <typename T>
struct CpLayerOut {
    Tensor<T> y;                      // updated features, same shape as x
    Tensor<T> p;                      // CP map (N, N)
    std::optional<double> affinity_mse; // filled when gt was supplied
};

// Context-prior layer, single-multiplication reading: the CP map comes from
// one 1x1 conv (conv_w is (N, C)), features update as X P plus the residual.
// When gt is given, the MSE between P and the affinity target is reported.
template <typename T>
CpLayerOut<T> cp_layer_forward(const Tensor<T>& x, const Tensor<T>& conv_w,
                               const LabelVolume* gt = nullptr, int factor = 1);

} // namespace cga

#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cga/nn_ops.hpp"
#include "cga/sam.hpp"

namespace cga {

// Block layout of the CGA U-Net. Channel widths double per level from
// init_width; the attention conv path downsamples the raw input by 8 through
// three stride-2 convolutions.
struct NetworkSpec {
    int in_channels = 4;
    int classes = 4;
    int init_width = 16;
    std::array<int, 4> repeats{1, 2, 2, 4}; // EnBlock1..4
    int att_mid = 16;                       // AttConv1/2 output channels
    double dropout = 0.2;
    int input_extent = 128;

    static NetworkSpec paper_scale() { return NetworkSpec{}; }
    static NetworkSpec desk_scale(int divisor, int extent) {
        NetworkSpec s;
        s.init_width = std::max(2, 16 / divisor);
        s.att_mid = std::max(2, 16 / divisor);
        s.input_extent = extent;
        return s;
    }

    int width(int level) const { return init_width << level; } // levels 0..3

    struct SizeRow {
        std::string name;
        int64_t c, d, h, w;
        bool operator==(const SizeRow&) const = default;
    };
    // Shape inference over the block table; allocates nothing.
    std::vector<SizeRow> infer_sizes() const;
    void validate() const;
};

template <typename T>
struct Conv3dLayer {
    Var<T> weight; // (Co,Ci,K,K,K)
    Var<T> bias;   // (Co); undefined when bias-free
    int stride = 1;
    int pad = 1;

    Var<T> forward(Tape<T>& tp, const Var<T>& x) const {
        return ad::conv3d(tp, x, weight, bias.defined() ? &bias : nullptr, stride, pad);
    }
};

template <typename T>
struct ConvT3dLayer {
    Var<T> weight; // (Ci,Co,K,K,K), kernel 2 stride 2: exact doubling
    Var<T> forward(Tape<T>& tp, const Var<T>& x) const {
        return ad::conv_transpose3d<T>(tp, x, weight, nullptr, 2, 0);
    }
};

template <typename T>
struct BatchNorm3dLayer {
    Var<T> gamma, beta;
    Tensor<T> running_mean, running_var;

    Var<T> forward(Tape<T>& tp, const Var<T>& x, bool train) {
        return ad::batch_norm3d(tp, x, gamma, beta, running_mean, running_var, train);
    }
};

// Pre-activation residual block: BN, ReLU, Conv3, BN, ReLU, Conv3, +
template <typename T>
struct ResBlock {
    BatchNorm3dLayer<T> bn1, bn2;
    Conv3dLayer<T> conv1, conv2;

    Var<T> forward(Tape<T>& tp, const Var<T>& x, bool train) {
        auto h = conv1.forward(tp, ad::relu(tp, bn1.forward(tp, x, train)));
        h = conv2.forward(tp, ad::relu(tp, bn2.forward(tp, h, train)));
        return ad::add(tp, x, h);
    }
};

// DeUp: Conv3 halving channels, ConvT doubling extent, skip concatenation,
// Conv3 back down to the level width.
template <typename T>
struct DeUpBlock {
    Conv3dLayer<T> reduce;   // width(l+1) -> width(l)
    ConvT3dLayer<T> up;      // width(l) -> width(l), x2 extent
    Conv3dLayer<T> fuse;     // 2*width(l) -> width(l) after concat

    Var<T> forward(Tape<T>& tp, const Var<T>& x, const Var<T>& skip) {
        auto h = up.forward(tp, reduce.forward(tp, x));
        auto cat = ad::concat(tp, {h, skip}, 1);
        return fuse.forward(tp, cat);
    }
};

template <typename T>
struct ForwardOutput {
    Var<T> pred;           // (N, classes, S, S, S) softmax probabilities
    Var<T> att_map;        // (N, classes, S/8, S/8, S/8); undefined if SAM off
    Var<T> inter_distance; // scalar, batch mean; undefined if SAM off
    bool inter_warned = false;
    // first-sample snapshots for heatmap dumps (filled on request)
    Tensor<T> bottleneck_before, bottleneck_after, att_snapshot;
    bool has_snapshots = false;
};

// The Category Guided Attention U-Net. Parameters are created in a fixed
// order from the seed, so identical (spec, seed) gives identical weights.
template <typename T>
class CgaUnet {
public:
    CgaUnet(const NetworkSpec& spec, uint64_t seed, bool sam_enabled = true,
            bool attention_softmax = true);

    ForwardOutput<T> forward(Tape<T>& tp, const Tensor<T>& input, bool train, Rng* dropout_rng,
                             const SamOptions& sam_opts, bool ordered_pairs = false,
                             bool collect_snapshots = false);

    std::vector<Var<T>>& parameters() { return params_; }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers();
    const NetworkSpec& spec() const { return spec_; }
    bool sam_enabled() const { return sam_enabled_; }

private:
    Conv3dLayer<T> make_conv(int ci, int co, int k, int stride, int pad, bool bias,
                             const std::string& name, Rng& rng);
    ConvT3dLayer<T> make_convt(int ci, int co, const std::string& name, Rng& rng);
    BatchNorm3dLayer<T> make_bn(int c, const std::string& name);
    ResBlock<T> make_block(int c, const std::string& name, Rng& rng);

    NetworkSpec spec_;
    bool sam_enabled_;
    bool attention_softmax_;

    Conv3dLayer<T> init_conv_;
    std::vector<ResBlock<T>> en1_, en2_, en3_, en4_;
    Conv3dLayer<T> down1_, down2_, down3_;
    DeUpBlock<T> deup3_, deup2_, deup1_;
    ResBlock<T> deblock3_, deblock2_, deblock1_;
    Conv3dLayer<T> end_conv_;
    Conv3dLayer<T> att1_, att2_, att3_;

    std::vector<Var<T>> params_;
    std::vector<std::pair<std::string, BatchNorm3dLayer<T>*>> bn_registry_;
};

} // namespace cga

#include "cga/network.hpp"

#include <cmath>

#include "cga/error.hpp"

namespace cga {

void NetworkSpec::validate() const {
    if (in_channels <= 0 || classes <= 0 || init_width <= 0)
        throw ConfigError("network spec: non-positive channel counts");
    if (input_extent % 8 != 0)
        throw ConfigError("network spec: input extent " + std::to_string(input_extent) +
                          " must be divisible by 8 (three stride-2 stages)");
    for (int r : repeats)
        if (r <= 0) throw ConfigError("network spec: block repeat counts must be positive");
}

std::vector<NetworkSpec::SizeRow> NetworkSpec::infer_sizes() const {
    validate();
    const int64_t s = input_extent;
    std::vector<SizeRow> rows;
    rows.push_back({"Input", in_channels, s, s, s});
    rows.push_back({"InitConv", width(0), s, s, s});
    rows.push_back({"EnBlock1", width(0), s, s, s});
    rows.push_back({"EnDown1", width(1), s / 2, s / 2, s / 2});
    rows.push_back({"EnBlock2", width(1), s / 2, s / 2, s / 2});
    rows.push_back({"EnDown2", width(2), s / 4, s / 4, s / 4});
    rows.push_back({"EnBlock3", width(2), s / 4, s / 4, s / 4});
    rows.push_back({"EnDown3", width(3), s / 8, s / 8, s / 8});
    rows.push_back({"EnBlock4", width(3), s / 8, s / 8, s / 8});
    rows.push_back({"DeUp3", width(2), s / 4, s / 4, s / 4});
    // Table 1 prints DeBlock3 as 16x128^3; shape algebra forces width(2) at s/4
    rows.push_back({"DeBlock3", width(2), s / 4, s / 4, s / 4});
    rows.push_back({"DeUp2", width(1), s / 2, s / 2, s / 2});
    rows.push_back({"DeBlock2", width(1), s / 2, s / 2, s / 2});
    // Table 1 prints the DeUp1 skip as EnBlock2; topology forces EnBlock1
    rows.push_back({"DeUp1", width(0), s, s, s});
    rows.push_back({"DeBlock1", width(0), s, s, s});
    rows.push_back({"EndConv", classes, s, s, s});
    rows.push_back({"Softmax", classes, s, s, s});
    rows.push_back({"AttConv1", att_mid, s / 2, s / 2, s / 2});
    rows.push_back({"AttConv2", att_mid, s / 4, s / 4, s / 4});
    rows.push_back({"AttConv3", classes, s / 8, s / 8, s / 8});
    return rows;
}

template <typename T>
Conv3dLayer<T> CgaUnet<T>::make_conv(int ci, int co, int k, int stride, int pad, bool bias,
                                     const std::string& name, Rng& rng) {
    Conv3dLayer<T> layer;
    layer.stride = stride;
    layer.pad = pad;
    const double fan_in = double(ci) * k * k * k;
    const double std_dev = std::sqrt(2.0 / fan_in);
    Tensor<T> w({co, ci, k, k, k});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal(0.0, std_dev));
    layer.weight = leaf(std::move(w), true, name + ".weight");
    params_.push_back(layer.weight);
    if (bias) {
        layer.bias = leaf(Tensor<T>({co}, T(0)), true, name + ".bias");
        params_.push_back(layer.bias);
    }
    return layer;
}

template <typename T>
ConvT3dLayer<T> CgaUnet<T>::make_convt(int ci, int co, const std::string& name, Rng& rng) {
    ConvT3dLayer<T> layer;
    const double fan_in = double(ci) * 8;
    const double std_dev = std::sqrt(2.0 / fan_in);
    Tensor<T> w({ci, co, 2, 2, 2});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal(0.0, std_dev));
    layer.weight = leaf(std::move(w), true, name + ".weight");
    params_.push_back(layer.weight);
    return layer;
}

template <typename T>
BatchNorm3dLayer<T> CgaUnet<T>::make_bn(int c, const std::string& name) {
    BatchNorm3dLayer<T> bn;
    bn.gamma = leaf(Tensor<T>({c}, T(1)), true, name + ".gamma");
    bn.beta = leaf(Tensor<T>({c}, T(0)), true, name + ".beta");
    bn.running_mean = Tensor<T>({c}, T(0));
    bn.running_var = Tensor<T>({c}, T(1));
    params_.push_back(bn.gamma);
    params_.push_back(bn.beta);
    return bn;
}

template <typename T>
ResBlock<T> CgaUnet<T>::make_block(int c, const std::string& name, Rng& rng) {
    ResBlock<T> b;
    b.bn1 = make_bn(c, name + ".bn1");
    b.conv1 = make_conv(c, c, 3, 1, 1, true, name + ".conv1", rng);
    b.bn2 = make_bn(c, name + ".bn2");
    b.conv2 = make_conv(c, c, 3, 1, 1, true, name + ".conv2", rng);
    return b;
}

template <typename T>
CgaUnet<T>::CgaUnet(const NetworkSpec& spec, uint64_t seed, bool sam_enabled,
                    bool attention_softmax)
    : spec_(spec), sam_enabled_(sam_enabled), attention_softmax_(attention_softmax) {
    spec_.validate();
    Rng rng(seed);
    const int w0 = spec_.width(0), w1 = spec_.width(1), w2 = spec_.width(2), w3 = spec_.width(3);

    init_conv_ = make_conv(spec_.in_channels, w0, 3, 1, 1, true, "encoder.init", rng);
    for (int i = 0; i < spec_.repeats[0]; ++i)
        en1_.push_back(make_block(w0, "encoder.block1." + std::to_string(i), rng));
    down1_ = make_conv(w0, w1, 3, 2, 1, true, "encoder.down1", rng);
    for (int i = 0; i < spec_.repeats[1]; ++i)
        en2_.push_back(make_block(w1, "encoder.block2." + std::to_string(i), rng));
    down2_ = make_conv(w1, w2, 3, 2, 1, true, "encoder.down2", rng);
    for (int i = 0; i < spec_.repeats[2]; ++i)
        en3_.push_back(make_block(w2, "encoder.block3." + std::to_string(i), rng));
    down3_ = make_conv(w2, w3, 3, 2, 1, true, "encoder.down3", rng);
    for (int i = 0; i < spec_.repeats[3]; ++i)
        en4_.push_back(make_block(w3, "encoder.block4." + std::to_string(i), rng));

    deup3_.reduce = make_conv(w3, w2, 3, 1, 1, true, "decoder.deup3.reduce", rng);
    deup3_.up = make_convt(w2, w2, "decoder.deup3.up", rng);
    deup3_.fuse = make_conv(2 * w2, w2, 3, 1, 1, true, "decoder.deup3.fuse", rng);
    deblock3_ = make_block(w2, "decoder.deblock3", rng);
    deup2_.reduce = make_conv(w2, w1, 3, 1, 1, true, "decoder.deup2.reduce", rng);
    deup2_.up = make_convt(w1, w1, "decoder.deup2.up", rng);
    deup2_.fuse = make_conv(2 * w1, w1, 3, 1, 1, true, "decoder.deup2.fuse", rng);
    deblock2_ = make_block(w1, "decoder.deblock2", rng);
    deup1_.reduce = make_conv(w1, w0, 3, 1, 1, true, "decoder.deup1.reduce", rng);
    deup1_.up = make_convt(w0, w0, "decoder.deup1.up", rng);
    deup1_.fuse = make_conv(2 * w0, w0, 3, 1, 1, true, "decoder.deup1.fuse", rng);
    deblock1_ = make_block(w0, "decoder.deblock1", rng);
    end_conv_ = make_conv(w0, spec_.classes, 1, 1, 0, true, "decoder.end", rng);
    // background-prior bias: voxels start near the background class, so the
    // foreground-only dice objective spends no steps carving background back out
    end_conv_.bias.value()[0] = T(2);

    // attention conv path parameters exist even when disabled at runtime, so
    // checkpoints keep one stable schema per spec
    att1_ = make_conv(spec_.in_channels, spec_.att_mid, 3, 2, 1, true, "att.conv1", rng);
    att2_ = make_conv(spec_.att_mid, spec_.att_mid, 3, 2, 1, true, "att.conv2", rng);
    att3_ = make_conv(spec_.att_mid, spec_.classes, 3, 2, 1, true, "att.conv3", rng);

    auto reg_block = [this](const std::string& n, ResBlock<T>& b) {
        bn_registry_.push_back({n + ".bn1", &b.bn1});
        bn_registry_.push_back({n + ".bn2", &b.bn2});
    };
    for (size_t i = 0; i < en1_.size(); ++i) reg_block("encoder.block1." + std::to_string(i), en1_[i]);
    for (size_t i = 0; i < en2_.size(); ++i) reg_block("encoder.block2." + std::to_string(i), en2_[i]);
    for (size_t i = 0; i < en3_.size(); ++i) reg_block("encoder.block3." + std::to_string(i), en3_[i]);
    for (size_t i = 0; i < en4_.size(); ++i) reg_block("encoder.block4." + std::to_string(i), en4_[i]);
    reg_block("decoder.deblock3", deblock3_);
    reg_block("decoder.deblock2", deblock2_);
    reg_block("decoder.deblock1", deblock1_);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> CgaUnet<T>::buffers() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& [name, bn] : bn_registry_) {
        out.push_back({name + ".running_mean", &bn->running_mean});
        out.push_back({name + ".running_var", &bn->running_var});
    }
    return out;
}

template <typename T>
ForwardOutput<T> CgaUnet<T>::forward(Tape<T>& tp, const Tensor<T>& input, bool train,
                                     Rng* dropout_rng, const SamOptions& sam_opts,
                                     bool ordered_pairs, bool collect_snapshots) {
    if (input.rank() != 5)
        throw ShapeError("forward: input must be (N,C,D,H,W), got " + shape_str(input.shape()));
    if (input.dim(1) != spec_.in_channels)
        throw ShapeError("forward: expected " + std::to_string(spec_.in_channels) +
                         " input channels, got " + std::to_string(input.dim(1)));
    const int64_t n_batch = input.dim(0);
    for (int i = 2; i < 5; ++i)
        if (input.dim(i) % 8 != 0)
            throw ShapeError("forward: spatial extent " + std::to_string(input.dim(i)) +
                             " not divisible by 8");

    auto x_in = constant(input);

    // encoder
    auto x = init_conv_.forward(tp, x_in);
    if (train && spec_.dropout > 0) {
        if (!dropout_rng) throw ConfigError("forward: train mode needs a dropout rng");
        x = ad::dropout(tp, x, spec_.dropout, train, *dropout_rng);
    }
    for (auto& b : en1_) x = b.forward(tp, x, train);
    auto e1 = x;
    x = down1_.forward(tp, x);
    for (auto& b : en2_) x = b.forward(tp, x, train);
    auto e2 = x;
    x = down2_.forward(tp, x);
    for (auto& b : en3_) x = b.forward(tp, x, train);
    auto e3 = x;
    x = down3_.forward(tp, x);
    for (auto& b : en4_) x = b.forward(tp, x, train);
    // x is now the bottleneck (N, w3, s/8, s/8, s/8)

    ForwardOutput<T> out;

    if (sam_enabled_) {
        auto s_map = att3_.forward(tp, att2_.forward(tp, att1_.forward(tp, x_in)));
        if (attention_softmax_) s_map = ad::softmax(tp, s_map, 1);
        out.att_map = s_map;

        std::vector<Var<T>> updated;
        std::vector<Var<T>> distances;
        bool any_warn = false;
        for (int64_t n = 0; n < n_batch; ++n) {
            auto xn = ad::select0(tp, x, n);
            auto sn = ad::select0(tp, s_map, n);
            auto res = intra_class_update(tp, xn, sn, sam_opts);
            bool warned = false;
            auto d = inter_class_distance(tp, res.prototypes, ordered_pairs, &warned);
            any_warn = any_warn || warned;
            distances.push_back(d);
            auto yn = sam_opts.residual ? ad::add(tp, xn, res.updated) : res.updated;
            updated.push_back(yn);
            if (collect_snapshots && n == 0) {
                out.bottleneck_before = xn.value();
                out.bottleneck_after = yn.value();
                out.att_snapshot = sn.value();
                out.has_snapshots = true;
            }
        }
        x = ad::stack0(tp, updated);
        out.inter_distance = ad::mean(tp, ad::concat(tp, distances, 0));
        out.inter_warned = any_warn;
    }

    // decoder
    x = deup3_.forward(tp, x, e3);
    x = deblock3_.forward(tp, x, train);
    x = deup2_.forward(tp, x, e2);
    x = deblock2_.forward(tp, x, train);
    x = deup1_.forward(tp, x, e1);
    x = deblock1_.forward(tp, x, train);
    x = end_conv_.forward(tp, x);
    out.pred = ad::softmax(tp, x, 1);
    return out;
}

template class CgaUnet<float>;
template class CgaUnet<double>;

} // namespace cga

#include "cga/attention.hpp"

#include <cmath>

#include "cga/error.hpp"

namespace cga {

namespace {

template <typename T>
int64_t spatial_product(const Tensor<T>& x) {
    int64_t n = 1;
    for (int i = 1; i < x.rank(); ++i) n *= x.dim(i);
    return n;
}

} // namespace

template <typename T>
SelfAttentionOut<T> self_attention_forward(const Tensor<T>& x, const SelfAttentionWeights<T>& w) {
    if (x.rank() < 2) throw ShapeError("self_attention: x must be (C, spatial...)");
    const int64_t c = x.dim(0);
    const int64_t n = spatial_product(x);
    if (w.wq.rank() != 2 || w.wq.dim(1) != c || w.wk.shape() != w.wq.shape())
        throw ShapeError("self_attention: wq/wk must be (C', C)");
    if (w.wv.shape() != Shape{c, c}) throw ShapeError("self_attention: wv must be (C, C)");

    Tensor<T> xf = reshape(x, {c, n});
    Tensor<T> q = matmul(w.wq, xf); // (C', N)
    Tensor<T> k = matmul(w.wk, xf); // (C', N)
    Tensor<T> v = matmul(w.wv, xf); // (C, N)

    Tensor<T> scores = matmul(permute(q, {1, 0}), k); // (N, N)
    Tensor<T> s = softmax(scores, 1);                 // rows sum to 1

    // y_i = sum_j S[i][j] v_j, then residual
    Tensor<T> y_flat = matmul(v, permute(s, {1, 0})); // (C, N)
    Tensor<T> y = reshape(add(y_flat, xf), x.shape());
    return {std::move(y), std::move(s)};
}

template <typename T>
Tensor<T> affinity_map(const LabelVolume& gt, int factor) {
    if (factor <= 0) throw ConfigError("affinity_map: factor must be positive");
    if (gt.d % factor || gt.h % factor || gt.w % factor)
        throw ShapeError("affinity_map: extents not divisible by factor");
    const int64_t n = (gt.d / factor) * (gt.h / factor) * (gt.w / factor);
    if (n > 4096)
        throw ConfigError("affinity_map: N = " + std::to_string(n) +
                          " exceeds the 4096 guard; downsample more or crop the input");
    // L in one-hot (N, C_l); A = L L^T, evaluated directly from class ids
    std::vector<int> cls(static_cast<size_t>(n));
    int64_t idx = 0;
    for (int64_t z = 0; z < gt.d; z += factor)
        for (int64_t y = 0; y < gt.h; y += factor)
            for (int64_t x = 0; x < gt.w; x += factor)
                cls[size_t(idx++)] = label_to_channel(gt.at(z, y, x));
    Tensor<T> a({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            a.at({i, j}) = cls[size_t(i)] == cls[size_t(j)] ? T(1) : T(0);
    return a;
}

template <typename T>
CpLayerOut<T> cp_layer_forward(const Tensor<T>& x, const Tensor<T>& conv_w, const LabelVolume* gt,
                               int factor) {
    const int64_t c = x.dim(0);
    const int64_t n = spatial_product(x);
    if (conv_w.rank() != 2 || conv_w.dim(1) != c || conv_w.dim(0) != n)
        throw ShapeError("cp_layer: conv weight must be (N, C) with N = " + std::to_string(n) +
                         ", got " + shape_str(conv_w.shape()));

    Tensor<T> xf = reshape(x, {c, n});
    Tensor<T> p = matmul(conv_w, xf); // (N, N): channel dim holds the map rows

    Tensor<T> upd = matmul(xf, p); // (C, N)
    CpLayerOut<T> out;
    out.y = reshape(add(upd, xf), x.shape());
    out.p = p;
    if (gt) {
        Tensor<T> a = affinity_map<T>(*gt, factor);
        if (a.shape() != out.p.shape())
            throw ShapeError("cp_layer: affinity target " + shape_str(a.shape()) +
                             " vs CP map " + shape_str(out.p.shape()));
        double mse = 0;
        for (int64_t i = 0; i < a.numel(); ++i) {
            const double d = double(out.p[i]) - double(a[i]);
            mse += d * d;
        }
        out.affinity_mse = mse / double(a.numel());
    }
    return out;
}

#define CGA_ATT_INSTANTIATE(T)                                                                \
    template SelfAttentionOut<T> self_attention_forward(const Tensor<T>&,                     \
                                                        const SelfAttentionWeights<T>&);      \
    template Tensor<T> affinity_map<T>(const LabelVolume&, int);                              \
    template CpLayerOut<T> cp_layer_forward(const Tensor<T>&, const Tensor<T>&,               \
                                            const LabelVolume*, int);

CGA_ATT_INSTANTIATE(float)
CGA_ATT_INSTANTIATE(double)
#undef CGA_ATT_INSTANTIATE

} // namespace cga

#pragma once

#include "cga/autodiff.hpp"
#include "cga/rng.hpp"
#include "cga/tensor.hpp"

namespace cga {

// Output spatial extent of a convolution along one axis.
inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Output spatial extent of a transposed convolution along one axis.
inline int64_t conv_transpose_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// Direct (naive) 3D convolution. x: (N,Ci,D,H,W), w: (Co,Ci,K,K,K), bias: (Co)
// or null. Fixed loop order; zero padding. Parallelism, when enabled, splits
// whole (n, co) output slabs so summation order per element never changes.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                         int stride, int pad);
template <typename T>
Tensor<T> conv3d_backward_input(const Shape& x_shape, const Tensor<T>& w, const Tensor<T>& gout,
                                int stride, int pad);
template <typename T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& x, const Shape& w_shape, const Tensor<T>& gout,
                                 int stride, int pad);

// Transposed 3D convolution (adjoint of conv3d). x: (N,Ci,D,H,W), w: (Ci,Co,K,K,K).
template <typename T>
Tensor<T> conv_transpose3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                                   int stride, int pad);
template <typename T>
Tensor<T> conv_transpose3d_backward_input(const Shape& x_shape, const Tensor<T>& w,
                                          const Tensor<T>& gout, int stride, int pad);
template <typename T>
Tensor<T> conv_transpose3d_backward_weight(const Tensor<T>& x, const Shape& w_shape,
                                           const Tensor<T>& gout, int stride, int pad);

namespace ad {

template <typename T>
Var<T> conv3d(Tape<T>& tp, const Var<T>& x, const Var<T>& w, const Var<T>* bias, int stride,
              int pad);

template <typename T>
Var<T> conv_transpose3d(Tape<T>& tp, const Var<T>& x, const Var<T>& w, const Var<T>* bias,
                        int stride, int pad);

// Per-channel batch norm over (N,D,H,W). Train mode normalizes with batch
// stats and updates running stats in place (momentum on the running buffers);
// eval mode reads the running buffers and records no stats.
template <typename T>
Var<T> batch_norm3d(Tape<T>& tp, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                    T momentum = T(0.1), T eps = T(1e-5));

// Inverted dropout; identity when !train or p == 0.
template <typename T>
Var<T> dropout(Tape<T>& tp, const Var<T>& x, double p, bool train, Rng& rng);

} // namespace ad

// Adam with decoupled-from-nothing classic L2: weight decay is added to the
// gradient before the moment update.
template <typename T>
class Adam {
public:
    struct Hyper {
        T lr = T(1e-3);
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
        T weight_decay = T(1e-5);
    };

    Adam() = default;
    explicit Adam(Hyper h) : h_(h) {}

    void step(std::vector<Var<T>>& params);
    void zero_grad(std::vector<Var<T>>& params) {
        for (auto& p : params) p.zero_grad();
    }

    const Hyper& hyper() const { return h_; }
    Hyper& hyper() { return h_; }
    int64_t step_count() const { return t_; }

    // Checkpoint access: moment buffers in parameter order.
    std::vector<Tensor<T>>& m() { return m_; }
    std::vector<Tensor<T>>& v() { return v_; }
    void set_step_count(int64_t t) { t_ = t; }

private:
    Hyper h_;
    std::vector<Tensor<T>> m_, v_;
    int64_t t_ = 0;
};

} // namespace cga

#include "cga/nn_ops.hpp"

#include <cmath>

namespace cga {

namespace {

struct ConvDims {
    int64_t n, ci, id, ih, iw;
    int64_t co, k;
    int64_t od, oh, ow;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
    if (x.rank() != 5) throw ShapeError("conv3d: input must be (N,C,D,H,W), got " + shape_str(x.shape()));
    if (w.rank() != 5) throw ShapeError("conv3d: weight must be (Co,Ci,K,K,K), got " + shape_str(w.shape()));
    if (w.dim(2) != w.dim(3) || w.dim(2) != w.dim(4)) throw ShapeError("conv3d: cubic kernels only");
    ConvDims d;
    d.n = x.dim(0);
    d.ci = x.dim(1);
    d.id = x.dim(2);
    d.ih = x.dim(3);
    d.iw = x.dim(4);
    d.co = w.dim(0);
    d.k = w.dim(2);
    if (w.dim(1) != d.ci)
        throw ShapeError("conv3d: input has " + std::to_string(d.ci) + " channels, weight expects " +
                         std::to_string(w.dim(1)));
    d.od = conv_out_extent(d.id, d.k, stride, pad);
    d.oh = conv_out_extent(d.ih, d.k, stride, pad);
    d.ow = conv_out_extent(d.iw, d.k, stride, pad);
    if (d.od <= 0 || d.oh <= 0 || d.ow <= 0)
        throw ShapeError("conv3d: kernel " + std::to_string(d.k) + " exceeds padded input " +
                         shape_str(x.shape()));
    return d;
}

// Executed MACs (padding taps skipped), for the runtime op counter.
inline uint64_t conv_executed_macs(const ConvDims& d, int stride, int pad) {
    uint64_t taps = 0;
    for (int64_t oz = 0; oz < d.od; ++oz) {
        const int64_t z0 = oz * stride - pad;
        int64_t tz = 0;
        for (int64_t kz = 0; kz < d.k; ++kz)
            if (z0 + kz >= 0 && z0 + kz < d.id) ++tz;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
            const int64_t y0 = oy * stride - pad;
            int64_t ty = 0;
            for (int64_t ky = 0; ky < d.k; ++ky)
                if (y0 + ky >= 0 && y0 + ky < d.ih) ++ty;
            for (int64_t ox = 0; ox < d.ow; ++ox) {
                const int64_t x0 = ox * stride - pad;
                int64_t tx = 0;
                for (int64_t kx = 0; kx < d.k; ++kx)
                    if (x0 + kx >= 0 && x0 + kx < d.iw) ++tx;
                taps += uint64_t(tz * ty * tx);
            }
        }
    }
    return taps * uint64_t(d.n) * uint64_t(d.ci) * uint64_t(d.co);
}

} // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride,
                         int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (bias && bias->numel() != d.co) throw ShapeError("conv3d: bias size mismatch");
    Tensor<T> out({d.n, d.co, d.od, d.oh, d.ow});
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    const int64_t in_sp = d.id * d.ih * d.iw;
    const int64_t out_sp = d.od * d.oh * d.ow;

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t co = 0; co < d.co; ++co) {
            T* slab = po + (n * d.co + co) * out_sp;
            const T b = bias ? (*bias)[co] : T(0);
            for (int64_t i = 0; i < out_sp; ++i) slab[i] = b;
            for (int64_t ci = 0; ci < d.ci; ++ci) {
                const T* xc = px + (n * d.ci + ci) * in_sp;
                const T* wc = pw + ((co * d.ci + ci) * d.k) * d.k * d.k;
                for (int64_t kz = 0; kz < d.k; ++kz) {
                    for (int64_t ky = 0; ky < d.k; ++ky) {
                        for (int64_t kx = 0; kx < d.k; ++kx) {
                            const T wv = wc[(kz * d.k + ky) * d.k + kx];
                            for (int64_t oz = 0; oz < d.od; ++oz) {
                                const int64_t iz = oz * stride - pad + kz;
                                if (iz < 0 || iz >= d.id) continue;
                                for (int64_t oy = 0; oy < d.oh; ++oy) {
                                    const int64_t iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= d.ih) continue;
                                    const T* xrow = xc + (iz * d.ih + iy) * d.iw;
                                    T* orow = slab + (oz * d.oh + oy) * d.ow;
                                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                                        const int64_t ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= d.iw) continue;
                                        orow[ox] += wv * xrow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if (opcount::enabled()) opcount::add(conv_executed_macs(d, stride, pad));
    return out;
}

template <typename T>
Tensor<T> conv3d_backward_input(const Shape& x_shape, const Tensor<T>& w, const Tensor<T>& gout,
                                int stride, int pad) {
    Tensor<T> gx(x_shape, T(0));
    const int64_t n_ = x_shape[0], ci_ = x_shape[1], id = x_shape[2], ih = x_shape[3],
                  iw = x_shape[4];
    const int64_t co_ = w.dim(0), k = w.dim(2);
    const int64_t od = gout.dim(2), oh = gout.dim(3), ow = gout.dim(4);
    const T* pg = gout.data();
    const T* pw = w.data();
    T* px = gx.data();
    const int64_t in_sp = id * ih * iw;
    const int64_t out_sp = od * oh * ow;

    // gather formulation: each input element sums the output taps that touch it
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < n_; ++n) {
        for (int64_t ci = 0; ci < ci_; ++ci) {
            T* slab = px + (n * ci_ + ci) * in_sp;
            for (int64_t co = 0; co < co_; ++co) {
                const T* gc = pg + (n * co_ + co) * out_sp;
                const T* wc = pw + ((co * ci_ + ci) * k) * k * k;
                for (int64_t kz = 0; kz < k; ++kz) {
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const T wv = wc[(kz * k + ky) * k + kx];
                            for (int64_t oz = 0; oz < od; ++oz) {
                                const int64_t iz = oz * stride - pad + kz;
                                if (iz < 0 || iz >= id) continue;
                                for (int64_t oy = 0; oy < oh; ++oy) {
                                    const int64_t iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= ih) continue;
                                    const T* grow = gc + (oz * oh + oy) * ow;
                                    T* xrow = slab + (iz * ih + iy) * iw;
                                    for (int64_t ox = 0; ox < ow; ++ox) {
                                        const int64_t ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= iw) continue;
                                        xrow[ix] += wv * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& x, const Shape& w_shape, const Tensor<T>& gout,
                                 int stride, int pad) {
    Tensor<T> gw(w_shape, T(0));
    const int64_t co_ = w_shape[0], ci_ = w_shape[1], k = w_shape[2];
    const int64_t n_ = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const int64_t od = gout.dim(2), oh = gout.dim(3), ow = gout.dim(4);
    const T* px = x.data();
    const T* pg = gout.data();
    T* pw = gw.data();
    const int64_t in_sp = id * ih * iw;
    const int64_t out_sp = od * oh * ow;

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t co = 0; co < co_; ++co) {
        for (int64_t ci = 0; ci < ci_; ++ci) {
            T* wc = pw + ((co * ci_ + ci) * k) * k * k;
            for (int64_t n = 0; n < n_; ++n) {
                const T* xc = px + (n * ci_ + ci) * in_sp;
                const T* gc = pg + (n * co_ + co) * out_sp;
                for (int64_t kz = 0; kz < k; ++kz) {
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            T acc = T(0);
                            for (int64_t oz = 0; oz < od; ++oz) {
                                const int64_t iz = oz * stride - pad + kz;
                                if (iz < 0 || iz >= id) continue;
                                for (int64_t oy = 0; oy < oh; ++oy) {
                                    const int64_t iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= ih) continue;
                                    const T* xrow = xc + (iz * ih + iy) * iw;
                                    const T* grow = gc + (oz * oh + oy) * ow;
                                    for (int64_t ox = 0; ox < ow; ++ox) {
                                        const int64_t ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= iw) continue;
                                        acc += xrow[ix] * grow[ox];
                                    }
                                }
                            }
                            wc[(kz * k + ky) * k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    return gw;
}

namespace {

template <typename T>
Tensor<T> bias_grad(const Tensor<T>& gout) {
    const int64_t n_ = gout.dim(0), c_ = gout.dim(1);
    const int64_t sp = gout.dim(2) * gout.dim(3) * gout.dim(4);
    Tensor<T> gb({c_}, T(0));
    const T* pg = gout.data();
    for (int64_t n = 0; n < n_; ++n)
        for (int64_t c = 0; c < c_; ++c) {
            const T* row = pg + (n * c_ + c) * sp;
            T acc = T(0);
            for (int64_t i = 0; i < sp; ++i) acc += row[i];
            gb[c] += acc;
        }
    return gb;
}

template <typename T>
struct TConvDims {
    int64_t n, ci, id, ih, iw, co, k, od, oh, ow;
};

template <typename T>
TConvDims<T> tconv_dims(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
    if (x.rank() != 5 || w.rank() != 5) throw ShapeError("conv_transpose3d: rank-5 inputs required");
    TConvDims<T> d;
    d.n = x.dim(0);
    d.ci = x.dim(1);
    d.id = x.dim(2);
    d.ih = x.dim(3);
    d.iw = x.dim(4);
    if (w.dim(0) != d.ci)
        throw ShapeError("conv_transpose3d: input has " + std::to_string(d.ci) +
                         " channels, weight expects " + std::to_string(w.dim(0)));
    d.co = w.dim(1);
    d.k = w.dim(2);
    d.od = conv_transpose_out_extent(d.id, d.k, stride, pad);
    d.oh = conv_transpose_out_extent(d.ih, d.k, stride, pad);
    d.ow = conv_transpose_out_extent(d.iw, d.k, stride, pad);
    if (d.od <= 0 || d.oh <= 0 || d.ow <= 0) throw ShapeError("conv_transpose3d: empty output");
    return d;
}

} // namespace

template <typename T>
Tensor<T> conv_transpose3d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                                   int stride, int pad) {
    const auto d = tconv_dims(x, w, stride, pad);
    if (bias && bias->numel() != d.co) throw ShapeError("conv_transpose3d: bias size mismatch");
    Tensor<T> out({d.n, d.co, d.od, d.oh, d.ow});
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    const int64_t in_sp = d.id * d.ih * d.iw;
    const int64_t out_sp = d.od * d.oh * d.ow;
    uint64_t macs = 0;

    // gather: out[oz] sums x[iz] where iz*stride - pad + kz == oz
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t co = 0; co < d.co; ++co) {
            T* slab = po + (n * d.co + co) * out_sp;
            const T b = bias ? (*bias)[co] : T(0);
            for (int64_t i = 0; i < out_sp; ++i) slab[i] = b;
            for (int64_t ci = 0; ci < d.ci; ++ci) {
                const T* xc = px + (n * d.ci + ci) * in_sp;
                const T* wc = pw + ((ci * d.co + co) * d.k) * d.k * d.k;
                for (int64_t kz = 0; kz < d.k; ++kz) {
                    for (int64_t ky = 0; ky < d.k; ++ky) {
                        for (int64_t kx = 0; kx < d.k; ++kx) {
                            const T wv = wc[(kz * d.k + ky) * d.k + kx];
                            for (int64_t iz = 0; iz < d.id; ++iz) {
                                const int64_t oz = iz * stride - pad + kz;
                                if (oz < 0 || oz >= d.od) continue;
                                for (int64_t iy = 0; iy < d.ih; ++iy) {
                                    const int64_t oy = iy * stride - pad + ky;
                                    if (oy < 0 || oy >= d.oh) continue;
                                    const T* xrow = xc + (iz * d.ih + iy) * d.iw;
                                    T* orow = slab + (oz * d.oh + oy) * d.ow;
                                    for (int64_t ix = 0; ix < d.iw; ++ix) {
                                        const int64_t ox = ix * stride - pad + kx;
                                        if (ox < 0 || ox >= d.ow) continue;
                                        orow[ox] += wv * xrow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if (opcount::enabled()) {
        macs = uint64_t(d.n) * uint64_t(d.ci) * uint64_t(d.co) * uint64_t(d.k * d.k * d.k) *
               uint64_t(in_sp); // pad=0 taps all land
        opcount::add(macs);
    }
    return out;
}

template <typename T>
Tensor<T> conv_transpose3d_backward_input(const Shape& x_shape, const Tensor<T>& w,
                                          const Tensor<T>& gout, int stride, int pad) {
    // adjoint of the scatter above = strided convolution of gout with w
    Tensor<T> gx(x_shape, T(0));
    const int64_t n_ = x_shape[0], ci_ = x_shape[1], id = x_shape[2], ih = x_shape[3],
                  iw = x_shape[4];
    const int64_t co_ = w.dim(1), k = w.dim(2);
    const int64_t od = gout.dim(2), oh = gout.dim(3), ow = gout.dim(4);
    const T* pg = gout.data();
    const T* pw = w.data();
    T* px = gx.data();
    const int64_t in_sp = id * ih * iw;
    const int64_t out_sp = od * oh * ow;

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < n_; ++n) {
        for (int64_t ci = 0; ci < ci_; ++ci) {
            T* slab = px + (n * ci_ + ci) * in_sp;
            for (int64_t co = 0; co < co_; ++co) {
                const T* gc = pg + (n * co_ + co) * out_sp;
                const T* wc = pw + ((ci * co_ + co) * k) * k * k;
                for (int64_t kz = 0; kz < k; ++kz) {
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const T wv = wc[(kz * k + ky) * k + kx];
                            for (int64_t iz = 0; iz < id; ++iz) {
                                const int64_t oz = iz * stride - pad + kz;
                                if (oz < 0 || oz >= od) continue;
                                for (int64_t iy = 0; iy < ih; ++iy) {
                                    const int64_t oy = iy * stride - pad + ky;
                                    if (oy < 0 || oy >= oh) continue;
                                    T* xrow = slab + (iz * ih + iy) * iw;
                                    const T* grow = gc + (oz * oh + oy) * ow;
                                    for (int64_t ix = 0; ix < iw; ++ix) {
                                        const int64_t ox = ix * stride - pad + kx;
                                        if (ox < 0 || ox >= ow) continue;
                                        xrow[ix] += wv * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

template <typename T>
Tensor<T> conv_transpose3d_backward_weight(const Tensor<T>& x, const Shape& w_shape,
                                           const Tensor<T>& gout, int stride, int pad) {
    Tensor<T> gw(w_shape, T(0));
    const int64_t ci_ = w_shape[0], co_ = w_shape[1], k = w_shape[2];
    const int64_t n_ = x.dim(0), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const int64_t od = gout.dim(2), oh = gout.dim(3), ow = gout.dim(4);
    const T* px = x.data();
    const T* pg = gout.data();
    T* pw = gw.data();
    const int64_t in_sp = id * ih * iw;
    const int64_t out_sp = od * oh * ow;

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t ci = 0; ci < ci_; ++ci) {
        for (int64_t co = 0; co < co_; ++co) {
            T* wc = pw + ((ci * co_ + co) * k) * k * k;
            for (int64_t n = 0; n < n_; ++n) {
                const T* xc = px + (n * ci_ + ci) * in_sp;
                const T* gc = pg + (n * co_ + co) * out_sp;
                for (int64_t kz = 0; kz < k; ++kz) {
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            T acc = T(0);
                            for (int64_t iz = 0; iz < id; ++iz) {
                                const int64_t oz = iz * stride - pad + kz;
                                if (oz < 0 || oz >= od) continue;
                                for (int64_t iy = 0; iy < ih; ++iy) {
                                    const int64_t oy = iy * stride - pad + ky;
                                    if (oy < 0 || oy >= oh) continue;
                                    const T* xrow = xc + (iz * ih + iy) * iw;
                                    const T* grow = gc + (oz * oh + oy) * ow;
                                    for (int64_t ix = 0; ix < iw; ++ix) {
                                        const int64_t ox = ix * stride - pad + kx;
                                        if (ox < 0 || ox >= ow) continue;
                                        acc += xrow[ix] * grow[ox];
                                    }
                                }
                            }
                            wc[(kz * k + ky) * k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    return gw;
}

namespace ad {

template <typename T>
Var<T> conv3d(Tape<T>& tp, const Var<T>& x, const Var<T>& w, const Var<T>* bias, int stride,
              int pad) {
    Tensor<T> out = conv3d_forward(x.value(), w.value(), bias ? &bias->value() : nullptr, stride, pad);
    auto dx = x.d, dw = w.d;
    auto db = bias ? bias->d : nullptr;
    std::vector<Var<T>> inputs{x, w};
    if (bias) inputs.push_back(*bias);
    return tp.record("conv3d", inputs, std::move(out), [dx, dw, db, stride, pad](const Tensor<T>& g) {
        if (dx->requires_grad)
            acc_grad(dx, conv3d_backward_input(dx->value.shape(), dw->value, g, stride, pad));
        if (dw->requires_grad)
            acc_grad(dw, conv3d_backward_weight(dx->value, dw->value.shape(), g, stride, pad));
        if (db && db->requires_grad) acc_grad(db, bias_grad(g));
    });
}

template <typename T>
Var<T> conv_transpose3d(Tape<T>& tp, const Var<T>& x, const Var<T>& w, const Var<T>* bias,
                        int stride, int pad) {
    Tensor<T> out =
        conv_transpose3d_forward(x.value(), w.value(), bias ? &bias->value() : nullptr, stride, pad);
    auto dx = x.d, dw = w.d;
    auto db = bias ? bias->d : nullptr;
    std::vector<Var<T>> inputs{x, w};
    if (bias) inputs.push_back(*bias);
    return tp.record("conv_transpose3d", inputs, std::move(out),
                     [dx, dw, db, stride, pad](const Tensor<T>& g) {
                         if (dx->requires_grad)
                             acc_grad(dx, conv_transpose3d_backward_input(dx->value.shape(),
                                                                          dw->value, g, stride, pad));
                         if (dw->requires_grad)
                             acc_grad(dw, conv_transpose3d_backward_weight(
                                              dx->value, dw->value.shape(), g, stride, pad));
                         if (db && db->requires_grad) acc_grad(db, bias_grad(g));
                     });
}

template <typename T>
Var<T> batch_norm3d(Tape<T>& tp, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum,
                    T eps) {
    const Shape& s = x.value().shape();
    if (s.size() != 5) throw ShapeError("batch_norm3d: input must be (N,C,D,H,W)");
    const int64_t n_ = s[0], c_ = s[1];
    const int64_t sp = s[2] * s[3] * s[4];
    const int64_t m = n_ * sp; // reduction extent per channel
    if (gamma.value().numel() != c_ || beta.value().numel() != c_)
        throw ShapeError("batch_norm3d: gamma/beta must have C elements");
    if (train && m <= 1)
        throw NumericError("batch_norm3d: train mode needs more than one value per channel "
                           "(batch 1 with 1x1x1 spatial has undefined variance)");

    Tensor<T> mean_c({c_}), var_c({c_});
    const T* px = x.value().data();
    if (train) {
        for (int64_t c = 0; c < c_; ++c) {
            T acc = T(0);
            for (int64_t n = 0; n < n_; ++n) {
                const T* row = px + (n * c_ + c) * sp;
                for (int64_t i = 0; i < sp; ++i) acc += row[i];
            }
            const T mu = acc / T(m);
            T vacc = T(0);
            for (int64_t n = 0; n < n_; ++n) {
                const T* row = px + (n * c_ + c) * sp;
                for (int64_t i = 0; i < sp; ++i) {
                    const T dlt = row[i] - mu;
                    vacc += dlt * dlt;
                }
            }
            mean_c[c] = mu;
            var_c[c] = vacc / T(m); // population variance
        }
        for (int64_t c = 0; c < c_; ++c) {
            running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean_c[c];
            running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var_c[c];
        }
    } else {
        mean_c = running_mean;
        var_c = running_var;
    }

    Tensor<T> out(s);
    auto xhat = std::make_shared<Tensor<T>>(s);
    Tensor<T> inv_std({c_});
    for (int64_t c = 0; c < c_; ++c) inv_std[c] = T(1) / std::sqrt(var_c[c] + eps);
    {
        T* po = out.data();
        T* ph = xhat->data();
        const T* pgm = gamma.value().data();
        const T* pbt = beta.value().data();
        for (int64_t n = 0; n < n_; ++n)
            for (int64_t c = 0; c < c_; ++c) {
                const T* row = px + (n * c_ + c) * sp;
                T* orow = po + (n * c_ + c) * sp;
                T* hrow = ph + (n * c_ + c) * sp;
                const T mu = mean_c[c], is = inv_std[c], gm = pgm[c], bt = pbt[c];
                for (int64_t i = 0; i < sp; ++i) {
                    const T h = (row[i] - mu) * is;
                    hrow[i] = h;
                    orow[i] = gm * h + bt;
                }
            }
    }

    auto dx = x.d, dg = gamma.d, db = beta.d;
    auto istd = std::make_shared<Tensor<T>>(inv_std);
    return tp.record(
        "batch_norm3d", {x, gamma, beta}, std::move(out),
        [dx, dg, db, xhat, istd, n_, c_, sp, m, train](const Tensor<T>& g) {
            const T* pg = g.data();
            const T* ph = xhat->data();
            // per-channel sums of g and g*xhat
            Tensor<T> sum_g({c_}, T(0)), sum_gh({c_}, T(0));
            for (int64_t n = 0; n < n_; ++n)
                for (int64_t c = 0; c < c_; ++c) {
                    const T* grow = pg + (n * c_ + c) * sp;
                    const T* hrow = ph + (n * c_ + c) * sp;
                    T a = T(0), b = T(0);
                    for (int64_t i = 0; i < sp; ++i) {
                        a += grow[i];
                        b += grow[i] * hrow[i];
                    }
                    sum_g[c] += a;
                    sum_gh[c] += b;
                }
            if (dg->requires_grad) acc_grad(dg, sum_gh);
            if (db->requires_grad) acc_grad(db, sum_g);
            if (dx->requires_grad) {
                Tensor<T> gx(dx->value.shape());
                T* pxg = gx.data();
                const T* pgm = dg->value.data();
                for (int64_t n = 0; n < n_; ++n)
                    for (int64_t c = 0; c < c_; ++c) {
                        const T* grow = pg + (n * c_ + c) * sp;
                        const T* hrow = ph + (n * c_ + c) * sp;
                        T* xrow = pxg + (n * c_ + c) * sp;
                        const T k = pgm[c] * (*istd)[c];
                        if (train) {
                            const T mg = sum_g[c] / T(m);
                            const T mgh = sum_gh[c] / T(m);
                            for (int64_t i = 0; i < sp; ++i)
                                xrow[i] = k * (grow[i] - mg - hrow[i] * mgh);
                        } else {
                            // eval stats are constants
                            for (int64_t i = 0; i < sp; ++i) xrow[i] = k * grow[i];
                        }
                    }
                acc_grad(dx, gx);
            }
        });
}

template <typename T>
Var<T> dropout(Tape<T>& tp, const Var<T>& x, double p, bool train, Rng& rng) {
    if (!train || p <= 0.0) return x;
    if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
    const T scale = T(1.0 / (1.0 - p));
    auto mask = std::make_shared<Tensor<T>>(x.value().shape());
    Tensor<T> out(x.value().shape());
    const T* px = x.value().data();
    T* pm = mask->data();
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const T m = rng.uniform() < p ? T(0) : scale;
        pm[i] = m;
        po[i] = px[i] * m;
    }
    auto dx = x.d;
    return tp.record("dropout", {x}, std::move(out), [dx, mask](const Tensor<T>& g) {
        if (dx->requires_grad) acc_grad(dx, cga::mul(g, *mask));
    });
}

} // namespace ad

template <typename T>
void Adam<T>::step(std::vector<Var<T>>& params) {
    if (m_.empty()) {
        for (auto& p : params) {
            m_.emplace_back(p.value().shape(), T(0));
            v_.emplace_back(p.value().shape(), T(0));
        }
    }
    if (m_.size() != params.size()) throw Error("adam: parameter list changed size");
    ++t_;
    const T b1t = T(1) - std::pow(h_.beta1, T(t_));
    const T b2t = T(1) - std::pow(h_.beta2, T(t_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        T* w = p.value().data();
        const T* g0 = p.grad().data();
        T* m = m_[pi].data();
        T* v = v_[pi].data();
        const int64_t n = p.value().numel();
        for (int64_t i = 0; i < n; ++i) {
            if (std::isnan(double(g0[i])))
                throw NumericError("adam: NaN gradient in parameter '" + p.name() + "'");
            const T g = g0[i] + h_.weight_decay * w[i]; // L2 before the moment update
            m[i] = h_.beta1 * m[i] + (T(1) - h_.beta1) * g;
            v[i] = h_.beta2 * v[i] + (T(1) - h_.beta2) * g * g;
            const T mhat = m[i] / b1t;
            const T vhat = v[i] / b2t;
            w[i] -= h_.lr * mhat / (std::sqrt(vhat) + h_.eps);
        }
    }
}

#define CGA_NN_INSTANTIATE(T)                                                                      \
    template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int,  \
                                      int);                                                        \
    template Tensor<T> conv3d_backward_input(const Shape&, const Tensor<T>&, const Tensor<T>&,    \
                                             int, int);                                           \
    template Tensor<T> conv3d_backward_weight(const Tensor<T>&, const Shape&, const Tensor<T>&,   \
                                              int, int);                                          \
    template Tensor<T> conv_transpose3d_forward(const Tensor<T>&, const Tensor<T>&,               \
                                                const Tensor<T>*, int, int);                      \
    template Tensor<T> conv_transpose3d_backward_input(const Shape&, const Tensor<T>&,            \
                                                       const Tensor<T>&, int, int);               \
    template Tensor<T> conv_transpose3d_backward_weight(const Tensor<T>&, const Shape&,           \
                                                        const Tensor<T>&, int, int);              \
    template class Adam<T>;                                                                        \
    namespace ad {                                                                                 \
    template Var<T> conv3d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>*, int, int);      \
    template Var<T> conv_transpose3d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>*, int,  \
                                     int);                                                         \
    template Var<T> batch_norm3d(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,           \
                                 Tensor<T>&, Tensor<T>&, bool, T, T);                             \
    template Var<T> dropout(Tape<T>&, const Var<T>&, double, bool, Rng&);                         \
    }

CGA_NN_INSTANTIATE(float)
CGA_NN_INSTANTIATE(double)
#undef CGA_NN_INSTANTIATE

} // namespace cga

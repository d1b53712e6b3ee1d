#include "cga/sam.hpp"

#include <cmath>

#include "cga/error.hpp"

namespace cga {

LabelVolume downsample_labels(const LabelVolume& gt, int factor) {
    if (factor <= 0) throw ConfigError("downsample: factor must be positive");
    if (gt.d % factor || gt.h % factor || gt.w % factor)
        throw ShapeError("downsample: extents (" + std::to_string(gt.d) + "," + std::to_string(gt.h) +
                         "," + std::to_string(gt.w) + ") not divisible by " + std::to_string(factor));
    LabelVolume out(gt.d / factor, gt.h / factor, gt.w / factor);
    for (int64_t z = 0; z < out.d; ++z)
        for (int64_t y = 0; y < out.h; ++y)
            for (int64_t x = 0; x < out.w; ++x)
                out.at(z, y, x) = gt.at(z * factor, y * factor, x * factor);
    return out;
}

template <typename T>
Tensor<T> make_category_guided_map(const LabelVolume& gt, int factor) {
    gt.validate_alphabet();
    return onehot_encode<T>(downsample_labels(gt, factor));
}

template <typename T>
Var<T> attention_supervision_loss(Tape<T>& tp, const Var<T>& S, const Tensor<T>& G) {
    if (S.value().shape() != G.shape())
        throw ShapeError("attention loss: S " + shape_str(S.value().shape()) + " vs G " +
                         shape_str(G.shape()));
    auto diff = ad::sub(tp, S, constant(G));
    return ad::mean(tp, ad::mul(tp, diff, diff));
}

template <typename T>
PooledPrototype<T> masked_average_pool(Tape<T>& tp, const Var<T>& X, const Var<T>& M) {
    const Shape& xs = X.value().shape();
    if (xs.size() != 4) throw ShapeError("masked_average_pool: X must be (C,d,h,w)");
    const int64_t c_ = xs[0];
    const int64_t sp = xs[1] * xs[2] * xs[3];
    if (M.value().numel() != sp)
        throw ShapeError("masked_average_pool: mask has " + std::to_string(M.value().numel()) +
                         " voxels, X has " + std::to_string(sp));

    const T* px = X.value().data();
    const T* pm = M.value().data();
    T wsum = T(0);
    for (int64_t i = 0; i < sp; ++i) wsum += pm[i];

    PooledPrototype<T> out;
    out.weight_sum = wsum;
    out.present = wsum != T(0);
    Tensor<T> p({c_}, T(0));
    if (out.present) {
        for (int64_t c = 0; c < c_; ++c) {
            T acc = T(0);
            const T* row = px + c * sp;
            for (int64_t i = 0; i < sp; ++i) acc += row[i] * pm[i];
            p[c] = acc / wsum;
        }
    }

    auto dx = X.d, dm = M.d;
    auto pv = std::make_shared<Tensor<T>>(p);
    const bool present = out.present;
    out.p = tp.record("masked_average_pool", {X, M}, std::move(p),
                      [dx, dm, pv, wsum, present, c_, sp](const Tensor<T>& g) {
                          if (!present) return;
                          const T* pm2 = dm->value.data();
                          const T* px2 = dx->value.data();
                          if (dx->requires_grad) {
                              T* gx = dx->grad.data();
                              for (int64_t c = 0; c < c_; ++c) {
                                  const T gc = g[c] / wsum;
                                  T* row = gx + c * sp;
                                  for (int64_t i = 0; i < sp; ++i) row[i] += gc * pm2[i];
                              }
                          }
                          if (dm->requires_grad) {
                              T* gm = dm->grad.data();
                              for (int64_t i = 0; i < sp; ++i) {
                                  T acc = T(0);
                                  for (int64_t c = 0; c < c_; ++c)
                                      acc += g[c] * (px2[c * sp + i] - (*pv)[c]);
                                  gm[i] += acc / wsum;
                              }
                          }
                      });
    return out;
}

template <typename T>
PrototypeSet<T> pool_prototypes(Tape<T>& tp, const Var<T>& X, const Var<T>& S) {
    const Shape& xs = X.value().shape();
    const Shape& ss = S.value().shape();
    if (xs.size() != 4 || ss.size() != 4) throw ShapeError("pool_prototypes: rank-4 inputs required");
    if (xs[1] != ss[1] || xs[2] != ss[2] || xs[3] != ss[3])
        throw ShapeError("pool_prototypes: spatial extents differ, X " + shape_str(xs) + " vs S " +
                         shape_str(ss));
    const int64_t c_ = xs[0], cl = ss[0];
    const int64_t sp = xs[1] * xs[2] * xs[3];

    PrototypeSet<T> out;
    out.present.resize(size_t(cl), 0);
    out.weight_sums.resize(size_t(cl), T(0));
    Tensor<T> p({cl, c_}, T(0));
    const T* px = X.value().data();
    const T* ps = S.value().data();
    for (int64_t k = 0; k < cl; ++k) {
        const T* mk = ps + k * sp;
        T wsum = T(0);
        for (int64_t i = 0; i < sp; ++i) wsum += mk[i];
        out.weight_sums[size_t(k)] = wsum;
        if (wsum == T(0)) continue;
        out.present[size_t(k)] = 1;
        for (int64_t c = 0; c < c_; ++c) {
            T acc = T(0);
            const T* row = px + c * sp;
            for (int64_t i = 0; i < sp; ++i) acc += row[i] * mk[i];
            p.at({k, c}) = acc / wsum;
        }
    }

    auto dx = X.d, ds = S.d;
    auto pv = std::make_shared<Tensor<T>>(p);
    auto wsums = out.weight_sums;
    auto pres = out.present;
    out.p = tp.record("pool_prototypes", {X, S}, std::move(p),
                      [dx, ds, pv, wsums, pres, c_, cl, sp](const Tensor<T>& g) {
                          const T* px2 = dx->value.data();
                          const T* ps2 = ds->value.data();
                          for (int64_t k = 0; k < cl; ++k) {
                              if (!pres[size_t(k)]) continue;
                              const T wsum = wsums[size_t(k)];
                              const T* mk = ps2 + k * sp;
                              if (dx->requires_grad) {
                                  T* gx = dx->grad.data();
                                  for (int64_t c = 0; c < c_; ++c) {
                                      const T gc = g.at({k, c}) / wsum;
                                      if (gc == T(0)) continue;
                                      T* row = gx + c * sp;
                                      for (int64_t i = 0; i < sp; ++i) row[i] += gc * mk[i];
                                  }
                              }
                              if (ds->requires_grad) {
                                  T* gs = ds->grad.data() + k * sp;
                                  for (int64_t i = 0; i < sp; ++i) {
                                      T acc = T(0);
                                      for (int64_t c = 0; c < c_; ++c)
                                          acc += g.at({k, c}) * (px2[c * sp + i] - pv->at({k, c}));
                                      gs[i] += acc / wsum;
                                  }
                              }
                          }
                      });
    return out;
}

template <typename T>
Var<T> prototype_map(Tape<T>& tp, const Var<T>& protos, const Var<T>& S, const Var<T>& X,
                     const std::vector<int>& classes) {
    const Shape& xs = X.value().shape();
    const Shape& ss = S.value().shape();
    const int64_t c_ = xs[0], cl = ss[0];
    const int64_t sp = xs[1] * xs[2] * xs[3];
    if (protos.value().shape() != Shape{cl, c_})
        throw ShapeError("prototype_map: prototypes must be (C_l, C) = (" + std::to_string(cl) +
                         "," + std::to_string(c_) + "), got " + shape_str(protos.value().shape()));
    std::vector<char> in_set(size_t(cl), 0);
    for (int k : classes) {
        if (k < 0 || k >= cl)
            throw ShapeError("prototype_map: class " + std::to_string(k) + " out of range");
        in_set[size_t(k)] = 1;
    }

    Tensor<T> y({c_, xs[1], xs[2], xs[3]}, T(0));
    const T* pp = protos.value().data();
    const T* ps = S.value().data();
    const T* px = X.value().data();
    T* py = y.data();
    for (int64_t k = 0; k < cl; ++k) {
        const T* mk = ps + k * sp;
        if (in_set[size_t(k)]) {
            for (int64_t c = 0; c < c_; ++c) {
                const T pkc = pp[k * c_ + c];
                T* row = py + c * sp;
                for (int64_t i = 0; i < sp; ++i) row[i] += pkc * mk[i];
            }
        } else {
            for (int64_t c = 0; c < c_; ++c) {
                const T* xr = px + c * sp;
                T* row = py + c * sp;
                for (int64_t i = 0; i < sp; ++i) row[i] += xr[i] * mk[i];
            }
        }
    }

    auto dp = protos.d, ds = S.d, dx = X.d;
    return tp.record("prototype_map", {protos, S, X}, std::move(y),
                     [dp, ds, dx, in_set, c_, cl, sp](const Tensor<T>& g) {
                         const T* pp2 = dp->value.data();
                         const T* ps2 = ds->value.data();
                         const T* px2 = dx->value.data();
                         const T* pg = g.data();
                         for (int64_t k = 0; k < cl; ++k) {
                             const T* mk = ps2 + k * sp;
                             if (in_set[size_t(k)]) {
                                 if (dp->requires_grad) {
                                     T* gp = dp->grad.data();
                                     for (int64_t c = 0; c < c_; ++c) {
                                         T acc = T(0);
                                         const T* gr = pg + c * sp;
                                         for (int64_t i = 0; i < sp; ++i) acc += gr[i] * mk[i];
                                         gp[k * c_ + c] += acc;
                                     }
                                 }
                                 if (ds->requires_grad) {
                                     T* gs = ds->grad.data() + k * sp;
                                     for (int64_t i = 0; i < sp; ++i) {
                                         T acc = T(0);
                                         for (int64_t c = 0; c < c_; ++c)
                                             acc += pg[c * sp + i] * pp2[k * c_ + c];
                                         gs[i] += acc;
                                     }
                                 }
                             } else {
                                 if (ds->requires_grad) {
                                     T* gs = ds->grad.data() + k * sp;
                                     for (int64_t i = 0; i < sp; ++i) {
                                         T acc = T(0);
                                         for (int64_t c = 0; c < c_; ++c)
                                             acc += pg[c * sp + i] * px2[c * sp + i];
                                         gs[i] += acc;
                                     }
                                 }
                                 if (dx->requires_grad) {
                                     T* gx = dx->grad.data();
                                     for (int64_t c = 0; c < c_; ++c) {
                                         const T* gr = pg + c * sp;
                                         T* xr = gx + c * sp;
                                         for (int64_t i = 0; i < sp; ++i) xr[i] += gr[i] * mk[i];
                                     }
                                 }
                             }
                         }
                     });
}

template <typename T>
Tensor<T> hard_masks_from(const Tensor<T>& S) {
    const Shape& ss = S.shape();
    const int64_t cl = ss[0];
    const int64_t sp = ss[1] * ss[2] * ss[3];
    Tensor<T> out(ss, T(0));
    const T* ps = S.data();
    T* po = out.data();
    for (int64_t i = 0; i < sp; ++i) {
        int64_t best = 0;
        T bv = ps[i];
        for (int64_t k = 1; k < cl; ++k)
            if (ps[k * sp + i] > bv) {
                bv = ps[k * sp + i];
                best = k;
            }
        po[best * sp + i] = T(1);
    }
    return out;
}

template <typename T>
SamResult<T> intra_class_update(Tape<T>& tp, const Var<T>& X, const Var<T>& S,
                                const SamOptions& opts) {
    if (X.value().shape()[1] != S.value().shape()[1] ||
        X.value().shape()[2] != S.value().shape()[2] || X.value().shape()[3] != S.value().shape()[3])
        throw ShapeError("intra_class_update: X " + shape_str(X.value().shape()) + " vs S " +
                         shape_str(S.value().shape()));
    SamResult<T> res;
    Var<T> masks = opts.hard_masks ? constant(hard_masks_from(S.value())) : S;
    res.prototypes = pool_prototypes(tp, X, masks);
    if (opts.intra_classes.empty()) {
        res.warned_empty_subset = true;
        res.updated = X;
        return res;
    }
    res.updated = prototype_map(tp, res.prototypes.p, masks, X, opts.intra_classes);
    return res;
}

template <typename T>
Var<T> inter_class_distance(Tape<T>& tp, const PrototypeSet<T>& protos, bool ordered_pairs,
                            bool* warned) {
    const int64_t cl = protos.p.value().dim(0);
    const int64_t c_ = protos.p.value().dim(1);
    int present_count = 0;
    for (char p : protos.present) present_count += p;
    if (warned) *warned = present_count < 2;
    if (present_count < 2) return constant(Tensor<T>::scalar(T(0)));

    const T* pp = protos.p.value().data();
    const T mult = ordered_pairs ? T(2) : T(1);
    T d_total = T(0);
    for (int64_t i = 0; i < cl; ++i) {
        if (!protos.present[size_t(i)]) continue;
        for (int64_t j = i + 1; j < cl; ++j) {
            if (!protos.present[size_t(j)]) continue;
            T acc = T(0);
            for (int64_t c = 0; c < c_; ++c) {
                const T dlt = pp[i * c_ + c] - pp[j * c_ + c];
                acc += dlt * dlt;
            }
            d_total += std::sqrt(acc);
        }
    }
    d_total *= mult;

    auto dp = protos.p.d;
    auto pres = protos.present;
    return tp.record("inter_class_distance", {protos.p}, Tensor<T>::scalar(d_total),
                     [dp, pres, cl, c_, mult](const Tensor<T>& g) {
                         if (!dp->requires_grad) return;
                         const T gv = g[0] * mult;
                         const T* pp2 = dp->value.data();
                         T* gp = dp->grad.data();
                         for (int64_t i = 0; i < cl; ++i) {
                             if (!pres[size_t(i)]) continue;
                             for (int64_t j = i + 1; j < cl; ++j) {
                                 if (!pres[size_t(j)]) continue;
                                 T acc = T(0);
                                 for (int64_t c = 0; c < c_; ++c) {
                                     const T dlt = pp2[i * c_ + c] - pp2[j * c_ + c];
                                     acc += dlt * dlt;
                                 }
                                 const T dist = std::sqrt(acc);
                                 if (dist == T(0)) continue; // subgradient 0 at coincident prototypes
                                 for (int64_t c = 0; c < c_; ++c) {
                                     const T dlt = (pp2[i * c_ + c] - pp2[j * c_ + c]) / dist;
                                     gp[i * c_ + c] += gv * dlt;
                                     gp[j * c_ + c] -= gv * dlt;
                                 }
                             }
                         }
                     });
}

template <typename T>
Var<T> inter_class_loss(Tape<T>& tp, const Var<T>& D, InterSign sign) {
    auto l = ad::log(tp, ad::add_scalar(tp, D, T(1))); // log(1+D)
    return sign == InterSign::maximize ? ad::neg(tp, l) : l;
}

#define CGA_SAM_INSTANTIATE(T)                                                                  \
    template Tensor<T> make_category_guided_map<T>(const LabelVolume&, int);                    \
    template Var<T> attention_supervision_loss(Tape<T>&, const Var<T>&, const Tensor<T>&);      \
    template PooledPrototype<T> masked_average_pool(Tape<T>&, const Var<T>&, const Var<T>&);    \
    template PrototypeSet<T> pool_prototypes(Tape<T>&, const Var<T>&, const Var<T>&);           \
    template Var<T> prototype_map(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,       \
                                  const std::vector<int>&);                                     \
    template Tensor<T> hard_masks_from(const Tensor<T>&);                                       \
    template SamResult<T> intra_class_update(Tape<T>&, const Var<T>&, const Var<T>&,            \
                                             const SamOptions&);                               \
    template Var<T> inter_class_distance(Tape<T>&, const PrototypeSet<T>&, bool, bool*);        \
    template Var<T> inter_class_loss(Tape<T>&, const Var<T>&, InterSign);

CGA_SAM_INSTANTIATE(float)
CGA_SAM_INSTANTIATE(double)
#undef CGA_SAM_INSTANTIATE

} // namespace cga

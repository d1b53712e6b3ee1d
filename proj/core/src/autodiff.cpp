#include "cga/autodiff.hpp"

#include <cmath>

namespace cga::ad {

template <typename T>
Var<T> add(Tape<T>& tp, const Var<T>& a, const Var<T>& b) {
    auto da = a.d, db = b.d;
    return tp.record("add", {a, b}, cga::add(a.value(), b.value()), [da, db](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, g);
        if (db->requires_grad) acc_grad(db, g);
    });
}

template <typename T>
Var<T> sub(Tape<T>& tp, const Var<T>& a, const Var<T>& b) {
    auto da = a.d, db = b.d;
    return tp.record("sub", {a, b}, cga::sub(a.value(), b.value()), [da, db](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, g);
        if (db->requires_grad) acc_grad(db, cga::neg(g));
    });
}

template <typename T>
Var<T> mul(Tape<T>& tp, const Var<T>& a, const Var<T>& b) {
    auto da = a.d, db = b.d;
    return tp.record("mul", {a, b}, cga::mul(a.value(), b.value()), [da, db](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, cga::mul(g, db->value));
        if (db->requires_grad) acc_grad(db, cga::mul(g, da->value));
    });
}

template <typename T>
Var<T> div(Tape<T>& tp, const Var<T>& a, const Var<T>& b) {
    auto da = a.d, db = b.d;
    return tp.record("div", {a, b}, cga::div(a.value(), b.value()), [da, db](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, cga::div(g, db->value));
        if (db->requires_grad) {
            // -g * a / b^2
            Tensor<T> t = cga::div(cga::mul(g, da->value), cga::mul(db->value, db->value));
            acc_grad(db, cga::neg(t));
        }
    });
}

template <typename T>
Var<T> neg(Tape<T>& tp, const Var<T>& a) {
    auto da = a.d;
    return tp.record("neg", {a}, cga::neg(a.value()), [da](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, cga::neg(g));
    });
}

template <typename T>
Var<T> relu(Tape<T>& tp, const Var<T>& a) {
    auto da = a.d;
    // subgradient at 0 is 0
    return tp.record("relu", {a}, cga::relu(a.value()), [da](const Tensor<T>& g) {
        if (!da->requires_grad) return;
        Tensor<T> gx(g.shape());
        const T* pg = g.data();
        const T* pa = da->value.data();
        T* po = gx.data();
        for (int64_t i = 0; i < g.numel(); ++i) po[i] = pa[i] > T(0) ? pg[i] : T(0);
        acc_grad(da, gx);
    });
}

template <typename T>
Var<T> exp(Tape<T>& tp, const Var<T>& a) {
    Tensor<T> v = cga::exp(a.value());
    auto da = a.d;
    auto vd = std::make_shared<Tensor<T>>(v);
    return tp.record("exp", {a}, std::move(v), [da, vd](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, cga::mul(g, *vd));
    });
}

template <typename T>
Var<T> log(Tape<T>& tp, const Var<T>& a) {
    auto da = a.d;
    return tp.record("log", {a}, cga::log(a.value()), [da](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, cga::div(g, da->value));
    });
}

template <typename T>
Var<T> sqrt(Tape<T>& tp, const Var<T>& a) {
    Tensor<T> v = cga::sqrt(a.value());
    auto da = a.d;
    auto vd = std::make_shared<Tensor<T>>(v);
    return tp.record("sqrt", {a}, std::move(v), [da, vd](const Tensor<T>& g) {
        if (!da->requires_grad) return;
        Tensor<T> gx(g.shape());
        const T* pg = g.data();
        const T* pv = vd->data();
        T* po = gx.data();
        for (int64_t i = 0; i < g.numel(); ++i) po[i] = pg[i] * T(0.5) / pv[i];
        acc_grad(da, gx);
    });
}

template <typename T>
Var<T> add_scalar(Tape<T>& tp, const Var<T>& a, T s) {
    auto da = a.d;
    return tp.record("add_scalar", {a}, cga::add_scalar(a.value(), s), [da](const Tensor<T>& g) {
        if (da->requires_grad) acc_grad(da, g);
    });
}

template <typename T>
Var<T> mul_scalar(Tape<T>& tp, const Var<T>& a, T s) {
    auto da = a.d;
    return tp.record("mul_scalar", {a}, cga::mul_scalar(a.value(), s),
                     [da, s](const Tensor<T>& g) {
                         if (da->requires_grad) acc_grad(da, cga::mul_scalar(g, s));
                     });
}

template <typename T>
Var<T> sum(Tape<T>& tp, const Var<T>& a, std::vector<int> axes, bool keep_dims) {
    auto ax = normalize_axes(a.value().shape(), std::move(axes));
    auto da = a.d;
    Shape full = a.value().shape();
    return tp.record("sum", {a}, reduce_sum(a.value(), ax, keep_dims),
                     [da, ax, full](const Tensor<T>& g) {
                         if (da->requires_grad) acc_grad(da, broadcast_reduced(g, full, ax));
                     });
}

template <typename T>
Var<T> mean(Tape<T>& tp, const Var<T>& a, std::vector<int> axes, bool keep_dims) {
    auto ax = normalize_axes(a.value().shape(), std::move(axes));
    auto da = a.d;
    Shape full = a.value().shape();
    const T inv = T(1) / T(reduce_count(full, ax));
    return tp.record("mean", {a}, reduce_mean(a.value(), ax, keep_dims),
                     [da, ax, full, inv](const Tensor<T>& g) {
                         if (da->requires_grad)
                             acc_grad(da, broadcast_reduced(cga::mul_scalar(g, inv), full, ax));
                     });
}

template <typename T>
Var<T> reshape(Tape<T>& tp, const Var<T>& a, Shape new_shape) {
    auto da = a.d;
    Shape old = a.value().shape();
    return tp.record("reshape", {a}, cga::reshape(a.value(), std::move(new_shape)),
                     [da, old](const Tensor<T>& g) {
                         if (da->requires_grad) acc_grad(da, cga::reshape(g, old));
                     });
}

template <typename T>
Var<T> permute(Tape<T>& tp, const Var<T>& a, std::vector<int> order) {
    auto da = a.d;
    std::vector<int> inverse(order.size());
    for (size_t i = 0; i < order.size(); ++i) inverse[size_t(order[i])] = int(i);
    return tp.record("permute", {a}, cga::permute(a.value(), order),
                     [da, inverse](const Tensor<T>& g) {
                         if (da->requires_grad) acc_grad(da, cga::permute(g, inverse));
                     });
}

template <typename T>
Var<T> concat(Tape<T>& tp, const std::vector<Var<T>>& parts, int axis) {
    std::vector<Tensor<T>> vals;
    std::vector<std::shared_ptr<VarData<T>>> ds;
    std::vector<int64_t> extents;
    vals.reserve(parts.size());
    for (const auto& p : parts) {
        vals.push_back(p.value());
        ds.push_back(p.d);
    }
    Tensor<T> v = cga::concat(vals, axis);
    int ax = axis < 0 ? axis + v.rank() : axis;
    for (const auto& p : parts) extents.push_back(p.value().dim(ax));
    return tp.record("concat", parts, std::move(v), [ds, ax, extents](const Tensor<T>& g) {
        auto gs = cga::split(g, ax, extents);
        for (size_t i = 0; i < ds.size(); ++i)
            if (ds[i]->requires_grad) acc_grad(ds[i], gs[i]);
    });
}

template <typename T>
Var<T> select0(Tape<T>& tp, const Var<T>& a, int64_t i) {
    const Shape& s = a.value().shape();
    if (s.empty() || i < 0 || i >= s[0]) throw ShapeError("select0: index out of range");
    Shape out_shape(s.begin() + 1, s.end());
    if (out_shape.empty()) out_shape.push_back(1);
    int64_t block = 1;
    for (size_t k = 1; k < s.size(); ++k) block *= s[k];
    std::vector<T> data(a.value().data() + i * block, a.value().data() + (i + 1) * block);
    auto da = a.d;
    return tp.record("select0", {a}, Tensor<T>::from_data(out_shape, std::move(data)),
                     [da, i, block](const Tensor<T>& g) {
                         if (!da->requires_grad) return;
                         T* pg = da->grad.data() + i * block;
                         const T* ps = g.data();
                         for (int64_t k = 0; k < block; ++k) pg[k] += ps[k];
                     });
}

template <typename T>
Var<T> stack0(Tape<T>& tp, const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ShapeError("stack0: no inputs");
    const Shape& s0 = parts[0].value().shape();
    for (const auto& p : parts)
        if (p.value().shape() != s0) throw ShapeError("stack0: shape mismatch");
    Shape out_shape;
    out_shape.push_back(int64_t(parts.size()));
    out_shape.insert(out_shape.end(), s0.begin(), s0.end());
    Tensor<T> v(out_shape);
    const int64_t block = parts[0].value().numel();
    std::vector<std::shared_ptr<VarData<T>>> ds;
    for (size_t i = 0; i < parts.size(); ++i) {
        std::copy(parts[i].value().data(), parts[i].value().data() + block, v.data() + int64_t(i) * block);
        ds.push_back(parts[i].d);
    }
    return tp.record("stack0", parts, std::move(v), [ds, block](const Tensor<T>& g) {
        for (size_t i = 0; i < ds.size(); ++i) {
            if (!ds[i]->requires_grad) continue;
            T* pg = ds[i]->grad.data();
            const T* ps = g.data() + int64_t(i) * block;
            for (int64_t k = 0; k < block; ++k) pg[k] += ps[k];
        }
    });
}

template <typename T>
Var<T> matmul(Tape<T>& tp, const Var<T>& a, const Var<T>& b) {
    auto da = a.d, db = b.d;
    return tp.record("matmul", {a, b}, cga::matmul(a.value(), b.value()),
                     [da, db](const Tensor<T>& g) {
                         if (da->requires_grad)
                             acc_grad(da, cga::matmul(g, cga::permute(db->value, {1, 0})));
                         if (db->requires_grad)
                             acc_grad(db, cga::matmul(cga::permute(da->value, {1, 0}), g));
                     });
}

template <typename T>
Var<T> softmax(Tape<T>& tp, const Var<T>& a, int axis) {
    Tensor<T> s = cga::softmax(a.value(), axis);
    auto da = a.d;
    auto sd = std::make_shared<Tensor<T>>(s);
    const int ax = axis < 0 ? axis + a.value().rank() : axis;
    return tp.record("softmax", {a}, std::move(s), [da, sd, ax](const Tensor<T>& g) {
        if (!da->requires_grad) return;
        // dx = s * (g - sum_axis(g * s))
        Tensor<T> gs = cga::mul(g, *sd);
        Tensor<T> dot = reduce_sum(gs, {ax}, true);
        Tensor<T> spread = broadcast_reduced(dot, g.shape(), {ax});
        acc_grad(da, cga::mul(*sd, cga::sub(g, spread)));
    });
}

#define CGA_AD_INSTANTIATE(T)                                                            \
    template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                         \
    template Var<T> sub(Tape<T>&, const Var<T>&, const Var<T>&);                         \
    template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                         \
    template Var<T> div(Tape<T>&, const Var<T>&, const Var<T>&);                         \
    template Var<T> neg(Tape<T>&, const Var<T>&);                                        \
    template Var<T> relu(Tape<T>&, const Var<T>&);                                       \
    template Var<T> exp(Tape<T>&, const Var<T>&);                                        \
    template Var<T> log(Tape<T>&, const Var<T>&);                                        \
    template Var<T> sqrt(Tape<T>&, const Var<T>&);                                       \
    template Var<T> add_scalar(Tape<T>&, const Var<T>&, T);                              \
    template Var<T> mul_scalar(Tape<T>&, const Var<T>&, T);                              \
    template Var<T> sum(Tape<T>&, const Var<T>&, std::vector<int>, bool);                \
    template Var<T> mean(Tape<T>&, const Var<T>&, std::vector<int>, bool);               \
    template Var<T> reshape(Tape<T>&, const Var<T>&, Shape);                             \
    template Var<T> permute(Tape<T>&, const Var<T>&, std::vector<int>);                  \
    template Var<T> concat(Tape<T>&, const std::vector<Var<T>>&, int);                   \
    template Var<T> select0(Tape<T>&, const Var<T>&, int64_t);                           \
    template Var<T> stack0(Tape<T>&, const std::vector<Var<T>>&);                        \
    template Var<T> matmul(Tape<T>&, const Var<T>&, const Var<T>&);                      \
    template Var<T> softmax(Tape<T>&, const Var<T>&, int);

CGA_AD_INSTANTIATE(float)
CGA_AD_INSTANTIATE(double)
#undef CGA_AD_INSTANTIATE

} // namespace cga::ad

#include "cga/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace cga {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

namespace {
bool g_strict = true;
bool g_count_enabled = false;
std::atomic<uint64_t> g_macs{0};
} // namespace

void set_strict_numerics(bool on) { g_strict = on; }
bool strict_numerics() { return g_strict; }

namespace opcount {
void enable(bool on) { g_count_enabled = on; }
bool enabled() { return g_count_enabled; }
void reset() { g_macs = 0; }
uint64_t macs() { return g_macs.load(); }
void add(uint64_t n) {
    if (g_count_enabled) g_macs += n;
}
} // namespace opcount

Shape5 Shape5::of(const Shape& s) {
    if (s.size() != 5) throw ShapeError("expected rank-5 (N,C,D,H,W), got " + shape_str(s));
    return Shape5{s[0], s[1], s[2], s[3], s[4]};
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename T, typename F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <typename T, typename F>
Tensor<T> unary(const Tensor<T>& a, F f) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    return out;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = int(s.size()) - 2; i >= 0; --i) st[size_t(i)] = st[size_t(i + 1)] * s[size_t(i + 1)];
    return st;
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, "add", [](T x, T y) { return x + y; });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, "sub", [](T x, T y) { return x - y; });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, "mul", [](T x, T y) { return x * y; });
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    if (strict_numerics()) {
        const T* pb = b.data();
        for (int64_t i = 0; i < b.numel(); ++i)
            if (pb[i] == T(0))
                throw NumericError("division by exact zero at flat index " + std::to_string(i));
    }
    return binary(a, b, "div", [](T x, T y) { return x / y; });
}
template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return unary(a, [](T x) { return -x; });
}
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary(a, [](T x) { return x > T(0) ? x : T(0); });
}
template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::exp(x); });
}
template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::log(x); });
}
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::sqrt(x); });
}
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    return unary(a, [s](T x) { return x + s; });
}
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    return unary(a, [s](T x) { return x * s; });
}

std::vector<int> normalize_axes(const Shape& shape, std::vector<int> axes) {
    const int r = int(shape.size());
    if (axes.empty()) {
        axes.resize(size_t(r));
        std::iota(axes.begin(), axes.end(), 0);
        return axes;
    }
    for (int& a : axes) {
        if (a < 0) a += r;
        if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(a) + " out of range for rank " + std::to_string(r));
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    return axes;
}

int64_t reduce_count(const Shape& full, const std::vector<int>& axes) {
    int64_t n = 1;
    for (int a : axes) n *= full[size_t(a)];
    return n;
}

namespace {

Shape reduced_shape(const Shape& full, const std::vector<int>& axes, bool keep) {
    Shape out;
    size_t ai = 0;
    for (size_t i = 0; i < full.size(); ++i) {
        const bool hit = ai < axes.size() && int(i) == axes[ai];
        if (hit) {
            ++ai;
            if (keep) out.push_back(1);
        } else {
            out.push_back(full[i]);
        }
    }
    if (out.empty()) out.push_back(1);
    return out;
}

// Iterates `full` once, mapping each element to its reduction slot.
template <typename T, typename F>
void for_each_slot(const Tensor<T>& a, const std::vector<int>& axes, F f) {
    const Shape& full = a.shape();
    const int r = int(full.size());
    std::vector<char> is_red(size_t(r), 0);
    for (int ax : axes) is_red[size_t(ax)] = 1;
    auto strides = row_major_strides(full);
    // strides within the output (kept axes only)
    std::vector<int64_t> out_stride(size_t(r), 0);
    int64_t acc = 1;
    for (int i = r - 1; i >= 0; --i) {
        if (!is_red[size_t(i)]) {
            out_stride[size_t(i)] = acc;
            acc *= full[size_t(i)];
        }
    }
    std::vector<int64_t> idx(size_t(r), 0);
    const int64_t n = a.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t slot = 0;
        for (int i = 0; i < r; ++i)
            if (!is_red[size_t(i)]) slot += idx[size_t(i)] * out_stride[size_t(i)];
        f(flat, slot);
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[size_t(i)] < full[size_t(i)]) break;
            idx[size_t(i)] = 0;
        }
    }
}

} // namespace

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::vector<int> axes, bool keep_dims) {
    axes = normalize_axes(a.shape(), axes);
    Tensor<T> out(reduced_shape(a.shape(), axes, keep_dims), T(0));
    const T* pa = a.data();
    T* po = out.data();
    for_each_slot(a, axes, [&](int64_t flat, int64_t slot) { po[slot] += pa[flat]; });
    return out;
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::vector<int> axes, bool keep_dims) {
    axes = normalize_axes(a.shape(), axes);
    const int64_t cnt = reduce_count(a.shape(), axes);
    Tensor<T> out = reduce_sum(a, axes, keep_dims);
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] /= T(cnt);
    return out;
}

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a, std::vector<int> axes, bool keep_dims) {
    axes = normalize_axes(a.shape(), axes);
    Tensor<T> out(reduced_shape(a.shape(), axes, keep_dims), std::numeric_limits<T>::lowest());
    const T* pa = a.data();
    T* po = out.data();
    for_each_slot(a, axes, [&](int64_t flat, int64_t slot) {
        if (pa[flat] > po[slot]) po[slot] = pa[flat];
    });
    return out;
}

template <typename T>
Tensor<T> argmax(const Tensor<T>& a, int axis, bool keep_dims) {
    auto axes = normalize_axes(a.shape(), {axis});
    Tensor<T> best(reduced_shape(a.shape(), axes, keep_dims), std::numeric_limits<T>::lowest());
    Tensor<T> out(best.shape(), T(0));
    const Shape& full = a.shape();
    const int ax = axes[0];
    const T* pa = a.data();
    T* pb = best.data();
    T* po = out.data();
    const int r = int(full.size());
    std::vector<int64_t> idx(size_t(r), 0);
    const int64_t n = a.numel();
    // reuse slot mapping from for_each_slot, but we need the axis index too
    std::vector<char> is_red(size_t(r), 0);
    is_red[size_t(ax)] = 1;
    std::vector<int64_t> out_stride(size_t(r), 0);
    int64_t acc = 1;
    for (int i = r - 1; i >= 0; --i)
        if (!is_red[size_t(i)]) {
            out_stride[size_t(i)] = acc;
            acc *= full[size_t(i)];
        }
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t slot = 0;
        for (int i = 0; i < r; ++i)
            if (!is_red[size_t(i)]) slot += idx[size_t(i)] * out_stride[size_t(i)];
        if (pa[flat] > pb[slot]) {
            pb[slot] = pa[flat];
            po[slot] = T(idx[size_t(ax)]);
        }
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[size_t(i)] < full[size_t(i)]) break;
            idx[size_t(i)] = 0;
        }
    }
    return out;
}

template <typename T>
Tensor<T> broadcast_reduced(const Tensor<T>& g, const Shape& full, const std::vector<int>& axes) {
    auto ax = normalize_axes(full, axes);
    Tensor<T> out(full);
    const T* pg = g.data();
    T* po = out.data();
    // same traversal as reduce_sum, inverted
    Tensor<T> probe(full); // traversal skeleton only
    for_each_slot(probe, ax, [&](int64_t flat, int64_t slot) { po[flat] = pg[slot]; });
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (Tensor<T>::checked_numel(new_shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor<T> out = a;
    return Tensor<T>::from_data(std::move(new_shape),
                                std::vector<T>(out.data(), out.data() + out.numel()));
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order) {
    const int r = a.rank();
    if (int(order.size()) != r) throw ShapeError("permute: order rank mismatch");
    std::vector<char> seen(size_t(r), 0);
    for (int o : order) {
        if (o < 0 || o >= r || seen[size_t(o)]) throw ShapeError("permute: order is not a permutation");
        seen[size_t(o)] = 1;
    }
    Shape new_shape(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) new_shape[size_t(i)] = a.dim(order[size_t(i)]);
    Tensor<T> out(new_shape);
    auto in_strides = row_major_strides(a.shape());
    std::vector<int64_t> src_stride(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) src_stride[size_t(i)] = in_strides[size_t(order[size_t(i)])];
    std::vector<int64_t> idx(size_t(r), 0);
    const T* pa = a.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t src = 0;
        for (int i = 0; i < r; ++i) src += idx[size_t(i)] * src_stride[size_t(i)];
        po[flat] = pa[src];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[size_t(i)] < new_shape[size_t(i)]) break;
            idx[size_t(i)] = 0;
        }
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int r = parts[0].rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
    int64_t cat_extent = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis && p.dim(i) != parts[0].dim(i))
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " +
                                 shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
        cat_extent += p.dim(axis);
    }
    Shape out_shape = parts[0].shape();
    out_shape[size_t(axis)] = cat_extent;
    Tensor<T> out(out_shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[size_t(i)];
    for (int i = axis + 1; i < r; ++i) inner *= out_shape[size_t(i)];
    T* po = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t block = p.dim(axis) * inner;
        const T* pp = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pp + o * block, pp + (o + 1) * block, po + o * cat_extent * inner + off);
        off += block;
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, int axis, const std::vector<int64_t>& extents) {
    const int r = a.rank();
    if (axis < 0) axis += r;
    int64_t total = 0;
    for (int64_t e : extents) total += e;
    if (total != a.dim(axis)) throw ShapeError("split: extents do not cover axis");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
    std::vector<Tensor<T>> parts;
    int64_t off = 0;
    const T* pa = a.data();
    const int64_t cat_extent = a.dim(axis);
    for (int64_t e : extents) {
        Shape s = a.shape();
        s[size_t(axis)] = e;
        Tensor<T> p(s);
        T* pp = p.data();
        const int64_t block = e * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pa + o * cat_extent * inner + off, pa + o * cat_extent * inner + off + block,
                      pp + o * block);
        parts.push_back(std::move(p));
        off += block;
    }
    return parts;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: need rank-2 inputs");
    const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor<T> out({m, n}, T(0));
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    // double accumulator, fixed k order: reproducible and well below the
    // documented 1e-6 oracle tolerance even at k = 64 in f32
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk)
                acc += double(pa[i * k + kk]) * double(pb[kk * n + j]);
            po[i * n + j] = T(acc);
        }
    }
    opcount::add(uint64_t(m) * uint64_t(k) * uint64_t(n));
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    if (has_nan(a)) throw NumericError("softmax: NaN input");
    auto axes = normalize_axes(a.shape(), {axis});
    const int ax = axes[0];
    const Shape& s = a.shape();
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= s[size_t(i)];
    for (int i = ax + 1; i < a.rank(); ++i) inner *= s[size_t(i)];
    const int64_t extent = s[size_t(ax)];
    Tensor<T> out(s);
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * extent * inner + in;
            T mx = pa[base];
            for (int64_t e = 1; e < extent; ++e) mx = std::max(mx, pa[base + e * inner]);
            T sum = T(0);
            for (int64_t e = 0; e < extent; ++e) {
                const T v = std::exp(pa[base + e * inner] - mx);
                po[base + e * inner] = v;
                sum += v;
            }
            for (int64_t e = 0; e < extent; ++e) po[base + e * inner] /= sum;
        }
    }
    return out;
}

template <typename T>
bool has_nan(const Tensor<T>& a) {
    const T* p = a.data();
    for (int64_t i = 0; i < a.numel(); ++i)
        if (std::isnan(double(p[i]))) return true;
    return false;
}

#define CGA_INSTANTIATE(T)                                                                       \
    template class Tensor<T>;                                                                    \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> neg(const Tensor<T>&);                                                    \
    template Tensor<T> relu(const Tensor<T>&);                                                   \
    template Tensor<T> exp(const Tensor<T>&);                                                    \
    template Tensor<T> log(const Tensor<T>&);                                                    \
    template Tensor<T> sqrt(const Tensor<T>&);                                                   \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                          \
    template Tensor<T> reduce_sum(const Tensor<T>&, std::vector<int>, bool);                     \
    template Tensor<T> reduce_mean(const Tensor<T>&, std::vector<int>, bool);                    \
    template Tensor<T> reduce_max(const Tensor<T>&, std::vector<int>, bool);                     \
    template Tensor<T> argmax(const Tensor<T>&, int, bool);                                      \
    template Tensor<T> broadcast_reduced(const Tensor<T>&, const Shape&, const std::vector<int>&); \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                       \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                               \
    template std::vector<Tensor<T>> split(const Tensor<T>&, int, const std::vector<int64_t>&);   \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> softmax(const Tensor<T>&, int);                                           \
    template bool has_nan(const Tensor<T>&);

CGA_INSTANTIATE(float)
CGA_INSTANTIATE(double)
#undef CGA_INSTANTIATE

} // namespace cga

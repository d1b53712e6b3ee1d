#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "cga/error.hpp"

namespace cga {

enum class Dtype { f32, f64 };

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

// Strict mode turns division by exact zero into an error; permissive mode lets
// IEEE semantics propagate. Global, defaults to strict.
void set_strict_numerics(bool on);
bool strict_numerics();

// Runtime multiply-accumulate counter for matmul/conv kernels. Disabled by
// default; counts are exact executed MACs (padding taps are skipped, so they
// match the closed-form conv formula only for pad=0).
namespace opcount {
void enable(bool on);
bool enabled();
void reset();
uint64_t macs();
void add(uint64_t n);
} // namespace opcount

// Dense row-major N-dimensional array. Value semantics; all free ops below are
// pure functions of their inputs.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), fill);
    }

    static Tensor from_data(Shape shape, std::vector<T> data) {
        Tensor t;
        if (checked_numel(shape) != int64_t(data.size()))
            throw ShapeError("from_data: " + shape_str(shape) + " does not hold " +
                             std::to_string(data.size()) + " elements");
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    static Tensor scalar(T v) { return from_data({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int64_t dim(int i) const { return shape_[size_t(i)]; }
    int64_t numel() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](int64_t i) { return data_[size_t(i)]; }
    const T& operator[](int64_t i) const { return data_[size_t(i)]; }

    Dtype dtype() const { return sizeof(T) == 4 ? Dtype::f32 : Dtype::f64; }

    T at(std::initializer_list<int64_t> idx) const { return data_[size_t(offset(idx))]; }
    T& at(std::initializer_list<int64_t> idx) { return data_[size_t(offset(idx))]; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        if (int(idx.size()) != rank()) throw ShapeError("index rank mismatch");
        int64_t off = 0;
        int i = 0;
        for (int64_t v : idx) {
            off = off * shape_[size_t(i)] + v;
            ++i;
        }
        return off;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    static int64_t checked_numel(const Shape& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d <= 0) throw ShapeError("non-positive extent in " + shape_str(s));
            n *= d;
        }
        return n;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

// (N, C, D, H, W): the canonical layout of every volumetric activation.
struct Shape5 {
    int64_t n = 1, c = 1, d = 1, h = 1, w = 1;
    Shape to_shape() const { return {n, c, d, h, w}; }
    int64_t spatial() const { return d * h * w; }
    static Shape5 of(const Shape& s);
};

// ---- elementwise ----
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);

// ---- reductions ----
// Empty `axes` means "reduce over all axes".
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::vector<int> axes = {}, bool keep_dims = false);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::vector<int> axes = {}, bool keep_dims = false);
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a, std::vector<int> axes = {}, bool keep_dims = false);
// Index of the maximum along one axis (first hit wins). Indices returned as T.
template <typename T> Tensor<T> argmax(const Tensor<T>& a, int axis, bool keep_dims = false);

// Spreads a reduced tensor back over the original shape (adjoint of reduce_sum).
template <typename T>
Tensor<T> broadcast_reduced(const Tensor<T>& g, const Shape& full, const std::vector<int>& axes);

// Count of elements covered by one reduction slot.
int64_t reduce_count(const Shape& full, const std::vector<int>& axes);
std::vector<int> normalize_axes(const Shape& shape, std::vector<int> axes);

// ---- layout ----
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape new_shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
// Inverse of concat: extents along `axis` per part.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, int axis, const std::vector<int64_t>& extents);

// ---- linear algebra ----
// (M,K) x (K,N) -> (M,N), fixed k-inner loop order for reproducible sums.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// ---- softmax ----
// Max-subtraction for stability; NaN input is an error.
template <typename T> Tensor<T> softmax(const Tensor<T>& a, int axis);

template <typename T> bool has_nan(const Tensor<T>& a);

} // namespace cga

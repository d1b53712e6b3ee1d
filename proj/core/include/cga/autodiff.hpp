#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cga/tensor.hpp"

namespace cga {

template <typename T> class Tape;

template <typename T>
struct VarData {
    Tensor<T> value;
    Tensor<T> grad; // same shape, zero until backward
    bool requires_grad = false;
    std::string name;
};

// Lightweight handle: a tensor enrolled for differentiation. Leaves carry no
// tape; recorded results remember the tape and node that produced them.
template <typename T>
class Var {
public:
    Var() = default;

    const Tensor<T>& value() const { return d->value; }
    Tensor<T>& value() { return d->value; }
    const Tensor<T>& grad() const { return d->grad; }
    Tensor<T>& grad() { return d->grad; }
    bool requires_grad() const { return d && d->requires_grad; }
    bool defined() const { return bool(d); }
    const std::string& name() const { return d->name; }

    void zero_grad() {
        if (d) d->grad.fill(T(0));
    }

    std::shared_ptr<VarData<T>> d;
    Tape<T>* tape = nullptr;
    int64_t node = -1;
};

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
    Var<T> v;
    v.d = std::make_shared<VarData<T>>();
    v.d->grad = Tensor<T>(value.shape(), T(0));
    v.d->value = std::move(value);
    v.d->requires_grad = requires_grad;
    v.d->name = std::move(name);
    return v;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
    return leaf(std::move(value), false);
}

// Records operations in execution order; recording order is a topological
// order by construction and backward replays it exactly in reverse. Backward
// closures receive the output gradient and accumulate into input gradients.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor<T>&)>;

    Var<T> record(const char* op, const std::vector<Var<T>>& inputs, Tensor<T> value,
                  BackwardFn backward_fn) {
        bool rg = false;
        for (const auto& in : inputs) {
            if (!in.defined()) throw Error("autodiff: undefined input to " + std::string(op));
            if (in.tape != nullptr && in.tape != this)
                throw Error("autodiff: input of " + std::string(op) +
                            " was recorded on a different tape");
            rg = rg || in.requires_grad();
        }
        if (!rg) return constant(std::move(value)); // pure-constant result, nothing to replay
        Var<T> out = leaf(std::move(value), true);
        out.tape = this;
        out.node = int64_t(nodes_.size());
        nodes_.push_back(Node{op, out.d, std::move(backward_fn)});
        return out;
    }

    // Seeds the root gradient with ones (scalar roots only) and replays the
    // tape in reverse from the root's node. Gradients accumulate (+=); calling
    // twice without zero_grad doubles them.
    void backward(const Var<T>& root) {
        if (root.value().numel() != 1)
            throw Error("autodiff: backward needs a scalar root or an explicit seed");
        backward(root, Tensor<T>(root.value().shape(), T(1)));
    }

    void backward(const Var<T>& root, const Tensor<T>& seed) {
        if (!root.defined()) throw Error("autodiff: backward on undefined var");
        if (seed.shape() != root.value().shape())
            throw ShapeError("backward: seed shape " + shape_str(seed.shape()) + " vs root " +
                             shape_str(root.value().shape()));
        // Intermediate grads are scratch per pass; only leaf grads accumulate
        // across repeated backward calls.
        if (root.tape == this)
            for (int64_t i = 0; i <= root.node; ++i) nodes_[size_t(i)].out->grad.fill(T(0));
        {
            T* g = root.d->grad.data();
            const T* s = seed.data();
            for (int64_t i = 0; i < seed.numel(); ++i) g[i] += s[i];
        }
        if (root.tape == nullptr) return; // leaf root: nothing upstream
        if (root.tape != this) throw Error("autodiff: root lives on a different tape");
        for (int64_t i = root.node; i >= 0; --i) {
            auto& n = nodes_[size_t(i)];
            n.bw(n.out->grad);
        }
    }

    size_t size() const { return nodes_.size(); }

    // First node (in recording order) whose output holds a NaN; for diagnostics.
    std::optional<std::string> first_nan_node() const {
        for (const auto& n : nodes_)
            if (has_nan(n.out->value)) return std::string(n.op);
        return std::nullopt;
    }

private:
    struct Node {
        const char* op;
        std::shared_ptr<VarData<T>> out;
        BackwardFn bw;
    };
    std::vector<Node> nodes_;
};

// Accumulate src into dst->grad (shapes must already agree).
template <typename T>
void acc_grad(const std::shared_ptr<VarData<T>>& dst, const Tensor<T>& src) {
    T* g = dst->grad.data();
    const T* s = src.data();
    for (int64_t i = 0; i < src.numel(); ++i) g[i] += s[i];
}

namespace ad {

// ---- elementwise ----
template <typename T> Var<T> add(Tape<T>& tp, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(Tape<T>& tp, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(Tape<T>& tp, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(Tape<T>& tp, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> neg(Tape<T>& tp, const Var<T>& a);
template <typename T> Var<T> relu(Tape<T>& tp, const Var<T>& a);
template <typename T> Var<T> exp(Tape<T>& tp, const Var<T>& a);
template <typename T> Var<T> log(Tape<T>& tp, const Var<T>& a);
template <typename T> Var<T> sqrt(Tape<T>& tp, const Var<T>& a);
template <typename T> Var<T> add_scalar(Tape<T>& tp, const Var<T>& a, T s);
template <typename T> Var<T> mul_scalar(Tape<T>& tp, const Var<T>& a, T s);

// ---- reductions / layout ----
template <typename T>
Var<T> sum(Tape<T>& tp, const Var<T>& a, std::vector<int> axes = {}, bool keep_dims = false);
template <typename T>
Var<T> mean(Tape<T>& tp, const Var<T>& a, std::vector<int> axes = {}, bool keep_dims = false);
template <typename T> Var<T> reshape(Tape<T>& tp, const Var<T>& a, Shape new_shape);
template <typename T> Var<T> permute(Tape<T>& tp, const Var<T>& a, std::vector<int> order);
template <typename T> Var<T> concat(Tape<T>& tp, const std::vector<Var<T>>& parts, int axis);
// Drops axis 0: (N, ...) -> (...) at index i.
template <typename T> Var<T> select0(Tape<T>& tp, const Var<T>& a, int64_t i);
// Inverse of select0: builds (N, ...) from N equally shaped slices.
template <typename T> Var<T> stack0(Tape<T>& tp, const std::vector<Var<T>>& parts);

// ---- linear algebra / softmax ----
template <typename T> Var<T> matmul(Tape<T>& tp, const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> softmax(Tape<T>& tp, const Var<T>& a, int axis);

} // namespace ad

} // namespace cga

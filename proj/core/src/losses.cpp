#include "cga/losses.hpp"

#include "cga/error.hpp"
#include "cga/volume.hpp"

namespace cga {

template <typename T>
Var<T> softmax_dice_loss(Tape<T>& tp, const Var<T>& pred, const Tensor<T>& gt_onehot, T eps) {
    const Shape& s = pred.value().shape();
    if (s != gt_onehot.shape())
        throw ShapeError("dice loss: pred " + shape_str(s) + " vs gt " +
                         shape_str(gt_onehot.shape()));
    if (s.size() < 2) throw ShapeError("dice loss: pred must be (N,C,...)");
    const int64_t n_ = s[0], c_ = s[1];
    int64_t sp = 1;
    for (size_t i = 2; i < s.size(); ++i) sp *= s[i];
    const int64_t fg = c_ - 1; // channels 1..C-1 are foreground

    const T* pp = pred.value().data();
    const T* pg = gt_onehot.data();
    std::vector<T> sum_pg(size_t(c_), T(0)), sum_p(size_t(c_), T(0)), sum_g(size_t(c_), T(0));
    for (int64_t n = 0; n < n_; ++n)
        for (int64_t c = 0; c < c_; ++c) {
            const T* pr = pp + (n * c_ + c) * sp;
            const T* gr = pg + (n * c_ + c) * sp;
            T a = T(0), b = T(0), g2 = T(0);
            for (int64_t i = 0; i < sp; ++i) {
                a += pr[i] * gr[i];
                b += pr[i];
                g2 += gr[i];
            }
            sum_pg[size_t(c)] += a;
            sum_p[size_t(c)] += b;
            sum_g[size_t(c)] += g2;
        }

    T dice_mean = T(0);
    std::vector<T> denom(size_t(c_), T(0)), dice(size_t(c_), T(0));
    for (int64_t c = 1; c < c_; ++c) {
        denom[size_t(c)] = sum_p[size_t(c)] + sum_g[size_t(c)] + eps;
        dice[size_t(c)] = (T(2) * sum_pg[size_t(c)] + eps) / denom[size_t(c)];
        dice_mean += dice[size_t(c)];
    }
    dice_mean /= T(fg);

    auto dpred = pred.d;
    auto gt = std::make_shared<Tensor<T>>(gt_onehot);
    return tp.record("softmax_dice_loss", {pred}, Tensor<T>::scalar(T(1) - dice_mean),
                     [dpred, gt, denom, dice, n_, c_, sp, fg](const Tensor<T>& g) {
                         if (!dpred->requires_grad) return;
                         const T gv = g[0];
                         const T* pgt = gt->data();
                         T* gp = dpred->grad.data();
                         for (int64_t n = 0; n < n_; ++n)
                             for (int64_t c = 1; c < c_; ++c) {
                                 // d dice_c / d p_i = (2 g_i - dice_c) / denom_c
                                 const T dc = dice[size_t(c)];
                                 const T dn = denom[size_t(c)];
                                 const T* gr = pgt + (n * c_ + c) * sp;
                                 T* gpr = gp + (n * c_ + c) * sp;
                                 const T scale = -gv / (T(fg) * dn);
                                 for (int64_t i = 0; i < sp; ++i)
                                     gpr[i] += scale * (T(2) * gr[i] - dc);
                             }
                     });
}

template <typename T>
Var<T> schedule_total(Tape<T>& tp, const LossBundle<T>& bundle) {
    auto total = ad::add(tp, ad::mul_scalar(tp, bundle.main, T(bundle.weights.main)),
                         ad::mul_scalar(tp, bundle.att, T(bundle.weights.att)));
    if (inter_active(bundle))
        total = ad::add(tp, total, ad::mul_scalar(tp, bundle.inter, T(bundle.weights.inter)));
    return total;
}

#define CGA_LOSS_INSTANTIATE(T)                                                            \
    template Var<T> softmax_dice_loss(Tape<T>&, const Var<T>&, const Tensor<T>&, T);       \
    template Var<T> schedule_total(Tape<T>&, const LossBundle<T>&);

CGA_LOSS_INSTANTIATE(float)
CGA_LOSS_INSTANTIATE(double)
#undef CGA_LOSS_INSTANTIATE

} // namespace cga

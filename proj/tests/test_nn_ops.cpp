#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cga/nn_ops.hpp"
#include "test_util.hpp"

using namespace cga;

namespace {

// Independent 7-nested-loop reference convolution, double accumulation.
template <typename T>
Tensor<double> conv3d_oracle(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                             int stride, int pad) {
    const int64_t n_ = x.dim(0), ci_ = x.dim(1), id = x.dim(2), ih = x.dim(3), iw = x.dim(4);
    const int64_t co_ = w.dim(0), k = w.dim(2);
    const int64_t od = conv_out_extent(id, k, stride, pad);
    const int64_t oh = conv_out_extent(ih, k, stride, pad);
    const int64_t ow = conv_out_extent(iw, k, stride, pad);
    Tensor<double> out({n_, co_, od, oh, ow});
    for (int64_t n = 0; n < n_; ++n)
        for (int64_t co = 0; co < co_; ++co)
            for (int64_t oz = 0; oz < od; ++oz)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double acc = bias ? double((*bias)[co]) : 0.0;
                        for (int64_t ci = 0; ci < ci_; ++ci)
                            for (int64_t kz = 0; kz < k; ++kz)
                                for (int64_t ky = 0; ky < k; ++ky)
                                    for (int64_t kx = 0; kx < k; ++kx) {
                                        const int64_t iz = oz * stride - pad + kz;
                                        const int64_t iy = oy * stride - pad + ky;
                                        const int64_t ix = ox * stride - pad + kx;
                                        if (iz < 0 || iz >= id || iy < 0 || iy >= ih || ix < 0 ||
                                            ix >= iw)
                                            continue;
                                        acc += double(x.at({n, ci, iz, iy, ix})) *
                                               double(w.at({co, ci, kz, ky, kx}));
                                    }
                        out.at({n, co, oz, oy, ox}) = acc;
                    }
    return out;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += double(a[i]) * double(b[i]);
    return acc;
}

} // namespace

TEST_CASE("1x1x1 conv with identity-embedding weight reproduces input") {
    Rng rng(31);
    auto x = testutil::random_tensor<float>({1, 3, 4, 4, 4}, rng);
    Tensor<float> w({3, 3, 1, 1, 1});
    for (int c = 0; c < 3; ++c) w.at({c, c, 0, 0, 0}) = 1.f;
    auto y = conv3d_forward<float>(x, w, nullptr, 1, 0);
    CHECK(testutil::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("all-ones 3^3 kernel counts the neighborhood") {
    Tensor<float> x({1, 1, 3, 3, 3}, 1.f);
    Tensor<float> w({1, 1, 3, 3, 3}, 1.f);
    auto y = conv3d_forward<float>(x, w, nullptr, 1, 1);
    CHECK(y.at({0, 0, 1, 1, 1}) == 27.f);
    CHECK(y.at({0, 0, 0, 0, 0}) == 8.f);
    CHECK(y.at({0, 0, 2, 2, 2}) == 8.f);
}

TEST_CASE("conv3d matches the nested-loop oracle") {
    Rng rng(32);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
        auto x = testutil::random_tensor<float>({2, 3, 5, 5, 5}, rng);
        auto w = testutil::random_tensor<float>({4, 3, 3, 3, 3}, rng);
        auto b = testutil::random_tensor<float>({4}, rng);
        auto y = conv3d_forward(x, w, &b, stride, pad);
        auto ref = conv3d_oracle(x, w, &b, stride, pad);
        for (int64_t i = 0; i < y.numel(); ++i)
            CHECK(std::abs(double(y[i]) - ref[i]) <= 1e-5);
    }
}

TEST_CASE("conv3d channel mismatch is an error") {
    Tensor<float> x({1, 3, 4, 4, 4});
    Tensor<float> w({2, 4, 3, 3, 3});
    CHECK_THROWS_AS((void)conv3d_forward<float>(x, w, nullptr, 1, 1), ShapeError);
}

TEST_CASE("conv_transpose3d doubles extents with k=2 s=2") {
    Tensor<float> x({1, 4, 16, 16, 16});
    Tensor<float> w({4, 2, 2, 2, 2});
    auto y = conv_transpose3d_forward<float>(x, w, nullptr, 2, 0);
    CHECK(y.shape() == Shape{1, 2, 32, 32, 32});
}

TEST_CASE("conv_transpose3d of zero input is zero") {
    Rng rng(33);
    Tensor<float> x({1, 3, 4, 4, 4}, 0.f);
    auto w = testutil::random_tensor<float>({3, 2, 2, 2, 2}, rng);
    auto y = conv_transpose3d_forward<float>(x, w, nullptr, 2, 0);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.f);
}

TEST_CASE("adjoint identity <conv(x), y> == <x, convT(y)>") {
    Rng rng(34);
    // conv with stride 2, pad 0, k 2 maps 8^3 -> 4^3; its adjoint is convT
    auto x = testutil::random_tensor<float>({1, 3, 8, 8, 8}, rng);
    auto w = testutil::random_tensor<float>({5, 3, 2, 2, 2}, rng);
    auto y = testutil::random_tensor<float>({1, 5, 4, 4, 4}, rng);
    auto cx = conv3d_forward<float>(x, w, nullptr, 2, 0);
    // the conv weight (Co,Ci,k,k,k) reads directly as convT's (in,out,k,k,k)
    auto cty = conv_transpose3d_forward<float>(y, w, nullptr, 2, 0);
    const double lhs = dot(cx, y);
    const double rhs = dot(x, cty);
    CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) <= 1e-5);
}

TEST_CASE("conv3d gradient check") {
    Rng rng(35);
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{testutil::random_tensor<double>({1, 2, 4, 4, 4}, rng),
                                     testutil::random_tensor<double>({3, 2, 3, 3, 3}, rng),
                                     testutil::random_tensor<double>({3}, rng)};
    CHECK(gc.run(
        [](Tape<double>& tp, std::vector<Var<double>>& in) {
            auto y = ad::conv3d(tp, in[0], in[1], &in[2], 1, 1);
            return ad::sum(tp, ad::mul(tp, y, y));
        },
        init));
    CHECK(gc.max_rel <= 1e-5);
}

TEST_CASE("conv3d stride-2 gradient check") {
    Rng rng(38);
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{testutil::random_tensor<double>({1, 2, 4, 4, 4}, rng),
                                     testutil::random_tensor<double>({3, 2, 3, 3, 3}, rng)};
    CHECK(gc.run(
        [](Tape<double>& tp, std::vector<Var<double>>& in) {
            auto y = ad::conv3d<double>(tp, in[0], in[1], nullptr, 2, 1);
            return ad::sum(tp, ad::mul(tp, y, y));
        },
        init));
}

TEST_CASE("conv_transpose3d gradient check") {
    Rng rng(39);
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{testutil::random_tensor<double>({1, 3, 3, 3, 3}, rng),
                                     testutil::random_tensor<double>({3, 2, 2, 2, 2}, rng),
                                     testutil::random_tensor<double>({2}, rng)};
    CHECK(gc.run(
        [](Tape<double>& tp, std::vector<Var<double>>& in) {
            auto y = ad::conv_transpose3d(tp, in[0], in[1], &in[2], 2, 0);
            return ad::sum(tp, ad::mul(tp, y, y));
        },
        init));
}

TEST_CASE("batch norm: train mode normalizes, eval mode is deterministic") {
    Rng rng(36);
    auto x = testutil::random_tensor<float>({2, 3, 4, 4, 4}, rng, -2, 5);
    auto gamma = leaf(Tensor<float>({3}, 1.f), true);
    auto beta = leaf(Tensor<float>({3}, 0.f), true);
    Tensor<float> rm({3}, 0.f), rv({3}, 1.f);
    Tape<float> tp;
    auto xv = leaf(x, true);
    auto y = ad::batch_norm3d(tp, xv, gamma, beta, rm, rv, /*train=*/true);

    // per-channel mean about 0, var about 1
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        int64_t cnt = 0;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t z = 0; z < 4; ++z)
                for (int64_t yy = 0; yy < 4; ++yy)
                    for (int64_t xx = 0; xx < 4; ++xx) {
                        mean += y.value().at({n, c, z, yy, xx});
                        ++cnt;
                    }
        mean /= double(cnt);
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t z = 0; z < 4; ++z)
                for (int64_t yy = 0; yy < 4; ++yy)
                    for (int64_t xx = 0; xx < 4; ++xx) {
                        const double d = y.value().at({n, c, z, yy, xx}) - mean;
                        var += d * d;
                    }
        var /= double(cnt);
        CHECK(std::abs(mean) <= 1e-4);
        CHECK(std::abs(var - 1.0) <= 1e-3);
    }

    // running stats moved off their init
    CHECK(rm[0] != 0.f);

    // eval mode: same input twice gives identical output
    Tape<float> tp2;
    auto e1 = ad::batch_norm3d(tp2, xv, gamma, beta, rm, rv, /*train=*/false);
    auto e2 = ad::batch_norm3d(tp2, xv, gamma, beta, rm, rv, /*train=*/false);
    CHECK(testutil::max_abs_diff(e1.value(), e2.value()) == 0.0);
}

TEST_CASE("batch norm rejects a single-value reduction in train mode") {
    Tensor<float> x({1, 2, 1, 1, 1});
    auto gamma = leaf(Tensor<float>({2}, 1.f), true);
    auto beta = leaf(Tensor<float>({2}, 0.f), true);
    Tensor<float> rm({2}), rv({2}, 1.f);
    Tape<float> tp;
    auto xv = leaf(x, true);
    CHECK_THROWS_AS((void)ad::batch_norm3d(tp, xv, gamma, beta, rm, rv, true), NumericError);
}

TEST_CASE("batch norm gradient check (train mode)") {
    Rng rng(40);
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{testutil::random_tensor<double>({2, 2, 3, 3, 3}, rng, -2, 2),
                                     testutil::random_tensor<double>({2}, rng, 0.5, 1.5),
                                     testutil::random_tensor<double>({2}, rng, -0.5, 0.5)};
    Rng wr(77);
    auto w = testutil::random_tensor<double>({2, 2, 3, 3, 3}, wr);
    CHECK(gc.run(
        [&w](Tape<double>& tp, std::vector<Var<double>>& in) {
            Tensor<double> rm({2}, 0.0), rv({2}, 1.0);
            auto y = ad::batch_norm3d(tp, in[0], in[1], in[2], rm, rv, true);
            return ad::sum(tp, ad::mul(tp, y, constant(w)));
        },
        init));
    CHECK(gc.max_rel <= 1e-5);
}

TEST_CASE("dropout: train scales by kept mask, eval is identity") {
    Rng rng(37);
    auto x = leaf(Tensor<float>({4, 100}, 1.f), true);
    Tape<float> tp;
    Rng drop(42);
    auto y = ad::dropout(tp, x, 0.5, true, drop);
    int64_t kept = 0;
    for (int64_t i = 0; i < y.value().numel(); ++i) {
        if (y.value()[i] != 0.f) {
            CHECK(y.value()[i] == 2.f);
            ++kept;
        }
    }
    CHECK(kept > 100);
    CHECK(kept < 300);

    Rng drop2(42);
    auto ye = ad::dropout(tp, x, 0.5, false, drop2);
    CHECK(testutil::max_abs_diff(ye.value(), x.value()) == 0.0);
}

TEST_CASE("dropout gradient check with fixed mask") {
    Rng rng(41);
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{testutil::random_tensor<double>({4, 5}, rng)};
    CHECK(gc.run(
        [](Tape<double>& tp, std::vector<Var<double>>& in) {
            Rng drop(123); // same mask on every evaluation
            auto y = ad::dropout(tp, in[0], 0.3, true, drop);
            return ad::sum(tp, ad::mul(tp, y, y));
        },
        init));
}

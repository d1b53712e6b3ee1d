#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cga/rng.hpp"
#include "cga/tensor.hpp"
#include "test_util.hpp"

using namespace cga;

TEST_CASE("elementwise add/relu and shape mismatch") {
    auto a = Tensor<float>::from_data({2}, {1, 2});
    auto b = Tensor<float>::from_data({2}, {3, 4});
    auto c = add(a, b);
    CHECK(c[0] == 4);
    CHECK(c[1] == 6);

    auto r = relu(Tensor<float>::from_data({3}, {-1, 0, 2}));
    CHECK(r[0] == 0);
    CHECK(r[1] == 0);
    CHECK(r[2] == 2);

    auto m = Tensor<float>({2, 3});
    auto n = Tensor<float>({3, 2});
    CHECK_THROWS_AS((void)mul(m, n), ShapeError);
}

TEST_CASE("add commutes bitwise") {
    Rng rng(7);
    auto a = testutil::random_tensor<float>({4, 5}, rng);
    auto b = testutil::random_tensor<float>({4, 5}, rng);
    auto ab = add(a, b);
    auto ba = add(b, a);
    for (int64_t i = 0; i < ab.numel(); ++i) CHECK(ab[i] == ba[i]);
}

TEST_CASE("division by exact zero honors numeric mode") {
    auto a = Tensor<float>::from_data({2}, {1, 2});
    auto z = Tensor<float>::from_data({2}, {1, 0});
    CHECK_THROWS_AS((void)div(a, z), NumericError);
    set_strict_numerics(false);
    auto q = div(a, z);
    CHECK(std::isinf(q[1]));
    set_strict_numerics(true);
}

TEST_CASE("reductions") {
    auto a = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
    auto s = reduce_sum(a, {1});
    CHECK(s.shape() == Shape{2});
    CHECK(s[0] == 3);
    CHECK(s[1] == 7);

    auto c = Tensor<float>({3, 4}, 2.5f);
    auto m = reduce_mean(c);
    CHECK(m.numel() == 1);
    CHECK(m[0] == doctest::Approx(2.5));

    auto am = argmax(Tensor<float>::from_data({3}, {0.1f, 0.7f, 0.2f}), 0);
    CHECK(am[0] == 1);

    CHECK_THROWS_AS((void)reduce_sum(a, {5}), ShapeError);
}

TEST_CASE("reshape preserves row-major order and round-trips") {
    auto a = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = reshape(a, {3, 2});
    CHECK(b.at({0, 0}) == 1);
    CHECK(b.at({0, 1}) == 2);
    CHECK(b.at({2, 1}) == 6);
    auto back = reshape(b, {2, 3});
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(back[i] == a[i]);
    CHECK_THROWS_AS((void)reshape(a, {4, 2}), ShapeError);
}

TEST_CASE("concat on channel axis") {
    Tensor<float> a({1, 2, 4, 4, 4}, 1.f);
    Tensor<float> b({1, 2, 4, 4, 4}, 2.f);
    auto c = concat<float>({a, b}, 1);
    CHECK(c.shape() == Shape{1, 4, 4, 4, 4});
    CHECK(c.at({0, 0, 0, 0, 0}) == 1.f);
    CHECK(c.at({0, 3, 3, 3, 3}) == 2.f);

    Tensor<float> bad({1, 2, 3, 4, 4});
    CHECK_THROWS_AS((void)concat<float>({a, bad}, 1), ShapeError);
}

TEST_CASE("permute round-trip is identity") {
    Rng rng(3);
    auto x = testutil::random_tensor<float>({2, 3, 4, 5, 6}, rng);
    auto p = permute(x, {0, 2, 3, 4, 1});
    CHECK(p.shape() == Shape{2, 4, 5, 6, 3});
    auto back = permute(p, {0, 4, 1, 2, 3});
    CHECK(testutil::max_abs_diff(x, back) == 0.0);
}

TEST_CASE("matmul basics") {
    auto id3 = Tensor<float>({3, 3});
    for (int i = 0; i < 3; ++i) id3.at({i, i}) = 1;
    Rng rng(11);
    auto a = testutil::random_tensor<float>({3, 3}, rng);
    auto ia = matmul(id3, a);
    CHECK(testutil::max_abs_diff(ia, a) == 0.0);

    auto m = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
    auto v = Tensor<float>::from_data({2, 1}, {5, 6});
    auto mv = matmul(m, v);
    CHECK(mv[0] == 17);
    CHECK(mv[1] == 39);

    CHECK_THROWS_AS((void)matmul(Tensor<float>({2, 3}), Tensor<float>({2, 3})), ShapeError);
}

TEST_CASE("matmul matches naive triple-loop oracle") {
    Rng rng(5);
    for (auto [m, k, n] : {std::tuple{4, 5, 3}, {16, 16, 16}, {64, 64, 64}}) {
        auto a = testutil::random_tensor<float>({m, k}, rng);
        auto b = testutil::random_tensor<float>({k, n}, rng);
        auto c = matmul(a, b);
        // independent oracle: plain i/j/k accumulation in double
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0;
                for (int64_t kk = 0; kk < k; ++kk)
                    acc += double(a.at({i, kk})) * double(b.at({kk, j}));
                const double rel =
                    std::abs(acc - double(c.at({i, j}))) / std::max(1.0, std::abs(acc));
                CHECK(rel <= 1e-6);
            }
    }
}

TEST_CASE("softmax") {
    auto s = softmax(Tensor<float>::from_data({2}, {0, 0}), 0);
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    auto big = softmax(Tensor<float>::from_data({2}, {1000, 0}), 0);
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(big[0]));

    Rng rng(13);
    auto x = testutil::random_tensor<float>({3, 7}, rng, -4, 4);
    auto sm = softmax(x, 1);
    for (int64_t i = 0; i < 3; ++i) {
        double sum = 0;
        for (int64_t j = 0; j < 7; ++j) {
            sum += sm.at({i, j});
            CHECK(sm.at({i, j}) > 0.0);
            CHECK(sm.at({i, j}) < 1.0);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }

    auto nan_in = Tensor<float>::from_data({2}, {std::nanf(""), 0.f});
    CHECK_THROWS_AS((void)softmax(nan_in, 0), NumericError);
}

TEST_CASE("op counter counts matmul MACs") {
    opcount::reset();
    opcount::enable(true);
    (void)matmul(Tensor<float>({2, 3}, 1.f), Tensor<float>({3, 4}, 1.f));
    opcount::enable(false);
    CHECK(opcount::macs() == 24);
}

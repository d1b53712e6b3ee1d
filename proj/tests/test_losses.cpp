#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cga/losses.hpp"
#include "cga/volume.hpp"
#include "test_util.hpp"

using namespace cga;

namespace {

Tensor<double> random_probs(const Shape& s, uint64_t seed) {
    Rng rng(seed);
    auto raw = testutil::random_tensor<double>(s, rng, -1, 1);
    return softmax(raw, 1);
}

} // namespace

TEST_CASE("dice loss is ~0 when pred equals one-hot gt") {
    LabelVolume gt(4, 4, 4);
    Rng rng(100);
    for (auto& v : gt.data) v = kLabelAlphabet[rng.below(4)];
    auto oh = onehot_encode<double>(gt);
    auto gt4 = reshape(oh, {1, 4, 4, 4, 4});
    Tape<double> tp;
    auto pred = leaf(gt4, true);
    auto loss = softmax_dice_loss(tp, pred, gt4);
    CHECK(std::abs(loss.value()[0]) <= 1e-4);
}

TEST_CASE("dice loss for a uniform prediction matches hand algebra on a 2^3 case") {
    // pred = 1/4 everywhere; per foreground channel:
    // dice_c = (2*(1/4)*V_g + eps) / ((1/4)*V + V_g + eps)
    LabelVolume gt(2, 2, 2);
    gt.at(0, 0, 0) = 1;
    gt.at(0, 0, 1) = 1;
    gt.at(0, 1, 0) = 2;
    gt.at(1, 1, 1) = 4;
    auto oh = onehot_encode<double>(gt);
    auto gt5 = reshape(oh, {1, 4, 2, 2, 2});
    Tape<double> tp;
    auto pred = leaf(Tensor<double>(gt5.shape(), 0.25), true);
    auto loss = softmax_dice_loss(tp, pred, gt5);
    const double eps = 1e-5, V = 8;
    auto dice_c = [&](double vg) { return (0.5 * vg + eps) / (0.25 * V + vg + eps); };
    const double expect = 1.0 - (dice_c(2) + dice_c(1) + dice_c(1)) / 3.0;
    CHECK(loss.value()[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("dice loss gradient check") {
    LabelVolume gt(2, 2, 2);
    Rng rng(101);
    for (auto& v : gt.data) v = kLabelAlphabet[rng.below(4)];
    auto gt5 = reshape(onehot_encode<double>(gt), {1, 4, 2, 2, 2});
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{random_probs({1, 4, 2, 2, 2}, 102)};
    CHECK(gc.run(
        [&gt5](Tape<double>& tp, std::vector<Var<double>>& in) {
            return softmax_dice_loss(tp, in[0], gt5);
        },
        init));
    CHECK(gc.max_rel <= 1e-5);
}

TEST_CASE("dice loss shape mismatch is an error") {
    Tape<double> tp;
    auto pred = leaf(Tensor<double>({1, 4, 2, 2, 2}, 0.25), true);
    Tensor<double> gt({1, 4, 4, 4, 4}, 0.0);
    CHECK_THROWS_AS((void)softmax_dice_loss(tp, pred, gt), ShapeError);
}

TEST_CASE("schedule: L_I excluded before the switch epoch, included after") {
    Tape<double> tp;
    LossBundle<double> b;
    b.main = leaf(Tensor<double>::scalar(1.0), false);
    b.att = leaf(Tensor<double>::scalar(2.0), false);
    b.inter = leaf(Tensor<double>::scalar(-5.0), false);
    b.switch_epoch = 20;
    b.weights = LossWeights{1.0, 1.0, 0.1};

    b.epoch = 0;
    CHECK(schedule_total(tp, b).value()[0] == doctest::Approx(3.0));
    b.epoch = 19;
    CHECK(schedule_total(tp, b).value()[0] == doctest::Approx(3.0));
    b.epoch = 20;
    CHECK(schedule_total(tp, b).value()[0] == doctest::Approx(2.5));
    // toggling 19 -> 20 changes the total by exactly w_I * L_I
    b.epoch = 19;
    const double t19 = schedule_total(tp, b).value()[0];
    b.epoch = 20;
    const double t20 = schedule_total(tp, b).value()[0];
    CHECK(t20 - t19 == doctest::Approx(0.1 * -5.0));
}

TEST_CASE("schedule invariant holds for every epoch 0..40 (property)") {
    Rng rng(103);
    for (int trial = 0; trial < 20; ++trial) {
        const double lm = rng.uniform(0, 2), la = rng.uniform(0, 2), li = rng.uniform(-3, 3);
        const double wi = rng.uniform(0.01, 1.0);
        LossBundle<double> b;
        Tape<double> tp;
        b.main = leaf(Tensor<double>::scalar(lm), false);
        b.att = leaf(Tensor<double>::scalar(la), false);
        b.inter = leaf(Tensor<double>::scalar(li), false);
        b.switch_epoch = 20;
        b.weights = LossWeights{1.0, 1.0, wi};
        for (int epoch = 0; epoch <= 40; ++epoch) {
            b.epoch = epoch;
            const double total = schedule_total(tp, b).value()[0];
            const double expect = epoch < 20 ? lm + la : lm + la + wi * li;
            CHECK(total == doctest::Approx(expect).epsilon(1e-12));
            CHECK(inter_active(b) == (epoch >= 20));
        }
    }
}

TEST_CASE("schedule total is differentiable through all three components") {
    testutil::GradCheck gc;
    std::vector<Tensor<double>> init{Tensor<double>::scalar(0.7), Tensor<double>::scalar(0.4),
                                     Tensor<double>::scalar(-1.2)};
    CHECK(gc.run(
        [](Tape<double>& tp, std::vector<Var<double>>& in) {
            LossBundle<double> b;
            b.main = in[0];
            b.att = in[1];
            b.inter = in[2];
            b.epoch = 25;
            b.switch_epoch = 20;
            b.weights = LossWeights{1.0, 1.0, 0.1};
            return schedule_total(tp, b);
        },
        init));
}

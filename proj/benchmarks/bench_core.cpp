#include <benchmark/benchmark.h>

#include "cga/losses.hpp"
#include "cga/network.hpp"
#include "cga/phantom.hpp"
#include "cga/rng.hpp"

using namespace cga;

namespace {

Tensor<float> random_tensor(const Shape& shape, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(-1, 1));
    return t;
}

void BM_conv3d_forward(benchmark::State& state) {
    const int64_t c = state.range(0);
    auto x = random_tensor({1, c, 16, 16, 16}, 1);
    auto w = random_tensor({c, c, 3, 3, 3}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv3d_forward<float>(x, w, nullptr, 1, 1));
    state.SetItemsProcessed(int64_t(state.iterations()) * c * c * 27 * 16 * 16 * 16);
}
BENCHMARK(BM_conv3d_forward)->Arg(8)->Arg(16)->Arg(32);

void BM_matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    auto a = random_tensor({n, n}, 3);
    auto b = random_tensor({n, n}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(256);

void BM_intra_class_update(benchmark::State& state) {
    auto x = random_tensor({32, 8, 8, 8}, 5);
    auto s = softmax(random_tensor({4, 8, 8, 8}, 6), 0);
    SamOptions opts;
    for (auto _ : state) {
        Tape<float> tp;
        auto res = intra_class_update(tp, leaf(x, true), leaf(s, true), opts);
        benchmark::DoNotOptimize(res.updated.value().data());
    }
}
BENCHMARK(BM_intra_class_update);

void BM_train_step(benchmark::State& state) {
    auto spec = NetworkSpec::desk_scale(4, 16);
    spec.dropout = 0.0;
    CgaUnet<float> model(spec, 1);
    auto img = random_tensor({2, 4, 16, 16, 16}, 7);
    LabelVolume lab(16, 16, 16);
    Rng lr(8);
    for (auto& v : lab.data) v = kLabelAlphabet[lr.below(4)];
    auto oh = onehot_encode<float>(lab);
    Tensor<float> gt({2, 4, 16, 16, 16});
    std::copy(oh.data(), oh.data() + oh.numel(), gt.data());
    std::copy(oh.data(), oh.data() + oh.numel(), gt.data() + oh.numel());
    auto g = make_category_guided_map<float>(lab, 8);
    Tensor<float> gm({2, 4, 2, 2, 2});
    std::copy(g.data(), g.data() + g.numel(), gm.data());
    std::copy(g.data(), g.data() + g.numel(), gm.data() + g.numel());
    Adam<float> opt;
    SamOptions sam;
    for (auto _ : state) {
        Tape<float> tp;
        auto out = model.forward(tp, img, true, nullptr, sam);
        LossBundle<float> b;
        b.main = softmax_dice_loss(tp, out.pred, gt);
        b.att = attention_supervision_loss(tp, out.att_map, gm);
        b.inter = inter_class_loss(tp, out.inter_distance, InterSign::maximize);
        b.epoch = 5;
        b.switch_epoch = 2;
        auto total = schedule_total(tp, b);
        opt.zero_grad(model.parameters());
        tp.backward(total);
        opt.step(model.parameters());
        benchmark::DoNotOptimize(total.value()[0]);
    }
}
BENCHMARK(BM_train_step);

} // namespace

BENCHMARK_MAIN();

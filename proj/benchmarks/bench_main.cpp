#include <benchmark/benchmark.h>

#include "tta/adapt.hpp"
#include "tta/backbone.hpp"
#include "tta/evalstat.hpp"

using namespace tta;

namespace {

WindowBatch random_batch(std::size_t count, int L, int d, std::uint64_t seed) {
    Rng rng(seed);
    WindowBatch b;
    b.L = L;
    b.d = d;
    b.count = count;
    b.data.resize(count * static_cast<std::size_t>(L) * d);
    for (auto& v : b.data) v = rng.normal();
    b.indices.resize(count);
    for (std::size_t i = 0; i < count; ++i) b.indices[i] = static_cast<std::int64_t>(i);
    return b;
}

Backbone paper_scale_net(HeadKind kind, int horizon) {
    ArchDescriptor arch;
    arch.input_channels = 7;
    arch.hidden = 64;
    arch.blocks = 3;
    arch.kernel = 3;
    arch.dilations = {1, 2, 4};
    return Backbone(arch, TaskHead{kind, horizon}, 1);
}

void BM_ForwardPaperScale(benchmark::State& state) {
    auto net = paper_scale_net(HeadKind::Regression, 24);
    auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 96, 7, 2);
    for (auto _ : state) {
        auto fr = net.forward(batch, BnMode::RunningStats, false);
        benchmark::DoNotOptimize(fr.output.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardPaperScale)->Arg(1)->Arg(32)->Arg(64);

void BM_BackwardPhiPaperScale(benchmark::State& state) {
    auto net = paper_scale_net(HeadKind::Regression, 24);
    auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 96, 7, 3);
    auto fr = net.forward(batch, BnMode::RunningStats, true);
    std::vector<double> dout(batch.count * 24, 1.0);
    for (auto _ : state) {
        auto g = net.backward_phi(fr.cache, dout);
        benchmark::DoNotOptimize(g.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackwardPhiPaperScale)->Arg(32)->Arg(64);

void BM_BackwardAllPaperScale(benchmark::State& state) {
    auto net = paper_scale_net(HeadKind::Regression, 24);
    auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 96, 7, 4);
    auto fr = net.forward_train(batch, 0.1, true);
    std::vector<double> dout(batch.count * 24, 1.0);
    for (auto _ : state) {
        auto g = net.backward_all(fr.cache, dout);
        benchmark::DoNotOptimize(g.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackwardAllPaperScale)->Arg(64);

void BM_AdaptDayNormOnly(benchmark::State& state) {
    auto net = paper_scale_net(HeadKind::Regression, 24);
    AdaptConfig cfg;
    cfg.mode = AdaptMode::NormOnly;
    cfg.context_w = static_cast<int>(state.range(0));
    cfg.steps = 3;
    cfg.k_transforms = 2;
    cfg.augmentations = AugmentationSet::from_names({"scale"}, std::vector<double>(7, 1.0));
    auto context = random_batch(static_cast<std::size_t>(state.range(0)), 96, 7, 5);
    auto today = random_batch(1, 96, 7, 6);
    today.indices = {context.indices.back()};
    std::int64_t day = context.indices.back();
    for (auto _ : state) {
        Backbone n = net;
        auto st = AdaptState::init(n, 1e18);
        Rng rng(7);
        auto out = adapt_day(n, st, context, today, day, cfg, rng);
        benchmark::DoNotOptimize(out.output.data());
    }
}
BENCHMARK(BM_AdaptDayNormOnly)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DmTest(benchmark::State& state) {
    Rng rng(8);
    LossSeries a{LossKind::Squared, {}, {}}, b{LossKind::Squared, {}, {}};
    for (int i = 0; i < state.range(0); ++i) {
        a.values.push_back(rng.normal(0.1, 1.0));
        b.values.push_back(rng.normal(0.0, 1.0));
    }
    for (auto _ : state) {
        auto r = dm_test(a, b);
        benchmark::DoNotOptimize(r.statistic);
    }
}
BENCHMARK(BM_DmTest)->Arg(500)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();

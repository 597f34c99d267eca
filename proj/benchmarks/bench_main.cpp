#include <benchmark/benchmark.h>

#include "cxgrad/meta.hpp"
#include "cxgrad/nn.hpp"
#include "cxgrad/ops.hpp"
#include "cxgrad/tasks.hpp"

using namespace cxgrad;
namespace op = cxgrad::ops;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
    std::vector<double> d(static_cast<size_t>(numel(shape)));
    for (auto& v : d) v = rng.uniform(-1.0, 1.0);
    return Tensor(shape, std::move(d));
}

tasks::TaskSource bench_source() {
    return tasks::TaskSource::synthetic(tasks::SourceVariant::SyntheticPattern, 3, 1, 32, 32);
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    Rng rng(1);
    const int c = static_cast<int>(state.range(0));
    Tensor x = random_tensor({4, c, 32, 32}, rng);
    Tensor w = random_tensor({c, c, 3, 3}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(op::conv2d(x, w));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_BackboneBackward(benchmark::State& state) {
    Rng rng(2);
    const int width = static_cast<int>(state.range(0));
    nn::Backbone bb = nn::make_backbone(width, 1, rng);
    Tensor x = random_tensor({5, 1, 32, 32}, rng);
    for (auto _ : state) {
        Graph g;
        nn::Backbone gb = nn::to_graph(g, bb, true);
        Tensor loss = op::sum_all(nn::backbone_forward(gb, x, 1e-5));
        benchmark::DoNotOptimize(g.backward(loss, false));
    }
}
BENCHMARK(BM_BackboneBackward)->Arg(8)->Arg(16);

static void BM_EpisodeSampling(benchmark::State& state) {
    auto src = bench_source();
    Rng rng(3);
    for (auto _ : state)
        benchmark::DoNotOptimize(src.sample_episode(tasks::Split::Train, 5, 1, 15, rng));
}
BENCHMARK(BM_EpisodeSampling);

static void BM_InnerAdapt(benchmark::State& state) {
    auto src = bench_source();
    Rng rng(4);
    auto kind = state.range(0) ? meta::LearnerKind::CxGrad : meta::LearnerKind::Maml;
    Rng init(5);
    meta::MetaKnowledge mk = meta::make_meta_knowledge(kind, 5, 8, 1, 32, 32, 100, init);
    tasks::Episode ep = src.sample_episode(tasks::Split::Train, 5, 1, 5, rng);
    meta::InnerLoopConfig cfg;
    for (auto _ : state) {
        Graph g;
        meta::GraphModel gm = meta::to_graph(g, mk);
        benchmark::DoNotOptimize(meta::adapt(g, gm, ep, cfg, kind));
    }
}
BENCHMARK(BM_InnerAdapt)->Arg(0)->Arg(1);

static void BM_OuterStep(benchmark::State& state) {
    auto src = bench_source();
    Rng rng(6);
    Rng init(7);
    meta::MetaKnowledge mk =
        meta::make_meta_knowledge(meta::LearnerKind::CxGrad, 5, 8, 1, 32, 32, 100, init);
    std::vector<tasks::Episode> batch;
    for (int i = 0; i < 2; ++i) batch.push_back(src.sample_episode(tasks::Split::Train, 5, 1, 5, rng));
    meta::InnerLoopConfig cfg;
    meta::AdamState opt;
    for (auto _ : state)
        benchmark::DoNotOptimize(meta::outer_step(mk, batch, cfg, meta::LearnerKind::CxGrad, opt));
}
BENCHMARK(BM_OuterStep);

BENCHMARK_MAIN();

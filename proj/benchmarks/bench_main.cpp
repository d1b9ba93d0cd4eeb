#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "m2iosr/mi_objectives.hpp"
#include "m2iosr/model.hpp"
#include "m2iosr/trainer.hpp"

using namespace m2iosr;

namespace {

EncoderConfig desk_encoder() {
    EncoderConfig c;
    c.input = ImageShape{1, 32, 32};
    c.stage_widths = {16, 32, 48, 64};
    c.latent_dim = 32;
    c.num_known = 6;
    c.adapter_channels = 16;
    c.disc_hidden = 128;
    return c;
}

void BM_EncoderForward(benchmark::State& state) {
    torch::set_num_threads(1);
    auto m = make_model(desk_encoder(), 0);
    m->eval();
    auto x = torch::rand({state.range(0), 1, 32, 32});
    torch::NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(m->encoder->forward(x).stats.mu);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_JsdObjective(benchmark::State& state) {
    auto pos = torch::randn({state.range(0)});
    auto neg = torch::randn({state.range(0)});
    for (auto _ : state) benchmark::DoNotOptimize(jsd_objective(pos, neg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_JsdObjective)->Arg(64)->Arg(64 * 256);

void BM_MaxminStep(benchmark::State& state) {
    torch::set_num_threads(1);
    Trainer trainer(make_model(desk_encoder(), 0), TrainConfig{});
    auto x = torch::rand({64, 1, 32, 32});
    auto y = torch::randint(0, 6, {64}, torch::kLong);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.maxmin_step(x, y).total);
}
BENCHMARK(BM_MaxminStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();

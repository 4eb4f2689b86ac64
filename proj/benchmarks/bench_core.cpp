#include "promptlab/assignment.hpp"
#include "promptlab/linalg.hpp"
#include "promptlab/meanfield.hpp"
#include "promptlab/prompt_grad.hpp"
#include "promptlab/transformer.hpp"

#include <benchmark/benchmark.h>

using namespace plab;

namespace {

TransformerWeights model(Index d, Index heads, Index layers)
{
    RandomModelSpec spec;
    spec.dims.d = d;
    spec.dims.h = heads;
    spec.layers = layers;
    spec.seed = 1;
    return random_weights(spec);
}

} // namespace

static void BM_Forward(benchmark::State& state)
{
    const Index tokens = state.range(0);
    const auto w = model(8, 2, 2);
    Rng rng(2);
    const TokenMatrix x = sample_ball_columns(8, tokens, 1.0, Norm::l2, rng);
    for (auto _ : state) benchmark::DoNotOptimize(forward(w, x, false));
    state.SetComplexityN(tokens);
}
BENCHMARK(BM_Forward)->RangeMultiplier(2)->Range(2, 64)->Complexity();

static void BM_PromptGradient(benchmark::State& state)
{
    const Index mp = state.range(0);
    const auto w = model(6, 2, 2);
    Rng rng(3);
    MemorizationTask task;
    for (int i = 0; i < 8; ++i)
        task.pairs.push_back({sample_ball_columns(6, 1, 1.0, Norm::l2, rng), sample_ball_columns(6, 1, 1.0, Norm::l2, rng)});
    const TokenMatrix p = sample_ball_columns(6, mp, 1.0, Norm::l2, rng);
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(w, p, task));
}
BENCHMARK(BM_PromptGradient)->Arg(1)->Arg(4)->Arg(16);

static void BM_Assignment(benchmark::State& state)
{
    Rng rng(4);
    const Matrix cost = sample_normal(state.range(0), state.range(0), rng);
    for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(cost));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Assignment)->RangeMultiplier(2)->Range(4, 128)->Complexity(benchmark::oNCubed);

static void BM_Wasserstein(benchmark::State& state)
{
    Rng rng(5);
    const auto mu = from_tokens(sample_normal(6, state.range(0), rng));
    const auto nu = from_tokens(sample_normal(6, state.range(0), rng));
    for (auto _ : state) benchmark::DoNotOptimize(wasserstein(mu, nu, 2.0));
}
BENCHMARK(BM_Wasserstein)->Arg(4)->Arg(16)->Arg(64);

static void BM_SpectralNorm(benchmark::State& state)
{
    Rng rng(6);
    const Matrix m = sample_normal(state.range(0), state.range(0), rng);
    for (auto _ : state) benchmark::DoNotOptimize(spectral_norm(m));
}
BENCHMARK(BM_SpectralNorm)->Arg(8)->Arg(32)->Arg(128);
BENCHMARK_MAIN();

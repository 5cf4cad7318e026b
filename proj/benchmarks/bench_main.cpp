#include <benchmark/benchmark.h>

#include <memory>

#include "seven/autodiff.hpp"
#include "seven/mask.hpp"
#include "seven/model.hpp"
#include "seven/score.hpp"

namespace seven {
namespace {

Tensor filled(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = filled(n, n, rng), b = filled(n, n, rng);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(ops::matmul(g.constant(a), g.constant(b)).value()[0]);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128);

TransformerConfig bench_model() {
  TransformerConfig c;
  c.layers = 2;
  c.d_model = 32;
  c.heads = 2;
  c.ffn_dim = 64;
  c.seq_len = 8;
  c.vocab = 4;
  return c;
}

Batch bench_batch(const TransformerConfig& c, std::size_t size) {
  Rng rng(3);
  Batch b;
  b.size = size;
  b.seq_len = c.seq_len;
  for (std::size_t i = 0; i < size * c.seq_len; ++i) b.tokens.push_back(static_cast<int>(rng.below(c.vocab)));
  for (std::size_t i = 0; i < size; ++i) b.labels.push_back(static_cast<int>(rng.below(c.classes)));
  return b;
}

void BM_ForwardBackward(benchmark::State& state) {
  const TransformerConfig c = bench_model();
  const ParamStore p = init_model(c, 1);
  const Batch batch = bench_batch(c, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(c, p, batch).loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ScoreUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<double> theta(n), g(n);
  for (std::size_t j = 0; j < n; ++j) theta[j] = rng.uniform(-1, 1), g[j] = rng.uniform(-1, 1);
  ScoreState s(n, ScoreHyper{});
  for (auto _ : state) {
    s.update(g);
    s.accumulate(theta, g);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScoreUpdate)->Arg(1 << 12)->Arg(1 << 16);

void BM_BuildMask(benchmark::State& state) {
  ParamStore p;
  const auto n = static_cast<std::size_t>(state.range(0));
  p.add("w", Tensor({n}), true);
  const PrunableLayout layout(p);
  Rng rng(4);
  std::vector<double> scores(n);
  for (double& v : scores) v = rng.uniform(0, 1);
  const Mask previous = build_mask(layout, scores, 0.3, nullptr, false).mask;
  for (auto _ : state) benchmark::DoNotOptimize(build_mask(layout, scores, 0.6, &previous, false).tau);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildMask)->Arg(1 << 12)->Arg(1 << 16);

}  // namespace
}  // namespace seven

BENCHMARK_MAIN();

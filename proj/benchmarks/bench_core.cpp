// Hot-path microbenchmarks: tensor primitives, recurrent cells, the full
// per-sentence objective, beam decoding, and corpus scoring.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "vrnmt/decoding.hpp"
#include "vrnmt/metrics.hpp"
#include "vrnmt/model.hpp"
#include "vrnmt/rng.hpp"
#include "vrnmt/tensor.hpp"
#include "vrnmt/training.hpp"

using namespace vrnmt;

namespace {

Tensor rand_tensor(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Desk-scale dimensions; the numbers every training run pays per step.
ModelConfig desk_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.src_vocab = 50;
  cfg.tgt_vocab = 50;
  return cfg;
}

ModelParams make_model(Variant v, std::uint64_t seed) {
  ModelParams m = ModelParams::create(desk_config(v));
  Rng rng(seed);
  m.init(rng);
  return m;
}

std::vector<int> sentence(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<int> ids(len);
  for (int& t : ids)
    t = rng.uniform_int(static_cast<int>(kReservedTokens),
                        static_cast<int>(vocab) - 1);
  return ids;
}

void BM_matvec(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor W = rand_tensor(rng, mat_shape(n, n));
  Tensor x = rand_tensor(rng, vec_shape(n));
  for (auto _ : state) {
    Graph g;
    Var y = g.matvec(g.leaf(W), g.leaf(x));
    benchmark::DoNotOptimize(g.value(y).data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_matvec)->Arg(64)->Arg(256);

void BM_gru_step(benchmark::State& state) {
  Rng rng(2);
  GruParams P = GruParams::create(64, 32);
  P.init(rng, false);
  Tensor s = rand_tensor(rng, vec_shape(64));
  Tensor x = rand_tensor(rng, vec_shape(32));
  for (auto _ : state) {
    Graph g;
    Var next = gru_step(g, g.leaf(s), g.leaf(x), P);
    benchmark::DoNotOptimize(g.value(next).data.data());
  }
}
BENCHMARK(BM_gru_step);

void BM_objective_forward(benchmark::State& state) {
  ModelParams m = make_model(static_cast<Variant>(state.range(0)), 3);
  Rng rng(4);
  const std::vector<int> x = sentence(rng, 10, m.cfg.src_vocab);
  const std::vector<int> y = sentence(rng, 10, m.cfg.tgt_vocab);
  ObjectiveConfig oc;
  for (auto _ : state) {
    Graph g;
    ObjectiveResult r = sentence_objective(g, x, y, m, oc);
    benchmark::DoNotOptimize(r.nll_value);
  }
}
BENCHMARK(BM_objective_forward)
    ->Arg(static_cast<int>(Variant::baseline))
    ->Arg(static_cast<int>(Variant::vrnmt));

void BM_objective_backward(benchmark::State& state) {
  ModelParams m = make_model(static_cast<Variant>(state.range(0)), 5);
  m.set_requires_grad(true);
  Rng rng(6);
  const std::vector<int> x = sentence(rng, 10, m.cfg.src_vocab);
  const std::vector<int> y = sentence(rng, 10, m.cfg.tgt_vocab);
  ObjectiveConfig oc;
  for (auto _ : state) {
    m.zero_grads();
    Graph g;
    ObjectiveResult r = sentence_objective(g, x, y, m, oc);
    Var loss = r.kl.valid() ? g.add(r.nll, r.kl) : r.nll;
    g.backward(loss);
    benchmark::DoNotOptimize(g.scalar(loss));
  }
}
BENCHMARK(BM_objective_backward)
    ->Arg(static_cast<int>(Variant::baseline))
    ->Arg(static_cast<int>(Variant::vrnmt));

void BM_beam_search(benchmark::State& state) {
  ModelParams m = make_model(Variant::vrnmt, 7);
  Rng rng(8);
  const std::vector<int> src = sentence(rng, 10, m.cfg.src_vocab);
  const std::size_t beam = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    std::vector<Hypothesis> hyps = beam_search(m, src, beam, 14);
    benchmark::DoNotOptimize(hyps.front().score);
  }
}
BENCHMARK(BM_beam_search)->Arg(1)->Arg(5);

void BM_bleu(benchmark::State& state) {
  Rng rng(9);
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> refs;
  for (int i = 0; i < 500; ++i) {
    TokenSeq c, r;
    const std::size_t len = static_cast<std::size_t>(rng.uniform_int(3, 12));
    for (std::size_t j = 0; j < len; ++j) {
      c.push_back("w" + std::to_string(rng.uniform_int(0, 45)));
      r.push_back("w" + std::to_string(rng.uniform_int(0, 45)));
    }
    // Half the corpus matches its reference so clipping paths both run.
    if (i % 2) r = c;
    cands.push_back(std::move(c));
    refs.push_back({std::move(r)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu(cands, refs));
  }
}
BENCHMARK(BM_bleu);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>
#include <omp.h>

#include "churn/backward.hpp"
#include "churn/rank.hpp"
#include "churn/synth.hpp"
#include "churn/train.hpp"
#include "churn/walk.hpp"

using namespace churn;

namespace {

// Arg 0 runs the serial reference, arg 1 the OpenMP path on every core.
Execution setup(benchmark::State& state) {
  const bool parallel = state.range(0) == 1;
  set_num_threads(parallel ? omp_get_num_procs() : 1);
  state.SetLabel(parallel ? "parallel" : "serial");
  return parallel ? Execution::Parallel : Execution::Serial;
}

const SynthResult& world() {
  static const SynthResult w = [] {
    SynthConfig c;
    c.num_players = 2000;
    c.num_games = 50;
    c.num_days = 3;
    c.games_per_player = 5;
    c.seed = 1;
    return generate(c);
  }();
  return w;
}

RelationGraph relation() {
  const auto& w = world();
  return RelationGraph::from_snapshot(w.graph.at(1), w.hazards_on(1));
}

void BM_BuildAugmented(benchmark::State& state) {
  const auto exec = setup(state);
  WalkConfig c;
  c.epsilon = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(build_augmented(world().graph.at(1), c, exec));
}

void BM_WalkBatch(benchmark::State& state) {
  const auto exec = setup(state);
  WalkConfig c;
  c.epsilon = 0.3;
  const auto& s = world().graph.at(1);
  const auto ag = build_augmented(s, c);
  for (auto _ : state) benchmark::DoNotOptimize(sample_contexts_batch(ag, s.edges(), 0, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.edges().size()));
}

void BM_Backward(benchmark::State& state) {
  const auto exec = setup(state);
  ModelShape shape;
  shape.input_dim = 4;
  shape.embed_dim = 50;
  auto params = init_params(shape, 0);
  for (std::uint32_t k = 0; k < 500; ++k) params.add_context({k, 0});
  auto rng = make_stream(0, 1);
  Batch batch;
  for (int i = 0; i < 1024; ++i) {
    BatchExample ex;
    for (int j = 0; j < 4; ++j) ex.z.push_back(uniform01(rng));
    ex.stays = uniform01(rng) < 0.5;
    for (int c = 0; c < 4; ++c) {
      ContextSample cs;
      cs.target = static_cast<std::uint32_t>(uniform_index(rng, 250));
      for (int n = 0; n < 5; ++n) cs.negatives.push_back(250 + static_cast<std::uint32_t>(uniform_index(rng, 250)));
      ex.contexts.push_back(cs);
    }
    ex.temporal = TemporalTerm{ex.z, true, {}};
    batch.examples.push_back(std::move(ex));
  }
  const auto w = ObjectiveWeights::co_train(LossWeights{});
  for (auto _ : state) benchmark::DoNotOptimize(backward(params, batch, w, exec));
  state.SetItemsProcessed(state.iterations() * 1024);
}

void BM_Predict(benchmark::State& state) {
  const auto exec = setup(state);
  ModelShape shape;
  shape.input_dim = world().graph.schema().blocks.size();
  shape.embed_dim = 50;
  const auto params = init_params(shape, 0);
  for (auto _ : state) benchmark::DoNotOptimize(predict(params, world().graph, 1, exec));
}

void BM_PageRank(benchmark::State& state) {
  const auto exec = setup(state);
  const auto rg = relation();
  PageRankConfig c;
  c.tol = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(pagerank(rg, c, exec));
}

void BM_Hits(benchmark::State& state) {
  const auto exec = setup(state);
  const auto rg = relation();
  HitsConfig c;
  c.tol = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(hits(rg, c, exec));
}

}  // namespace

BENCHMARK(BM_BuildAugmented)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WalkBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Backward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PageRank)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Hits)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

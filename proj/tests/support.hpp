#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "churn/backward.hpp"
#include "churn/graph.hpp"
#include "churn/model.hpp"
#include "churn/rng.hpp"

namespace churn::testing {

// Every node is present on every day; one feature block spans each side.
struct GraphSpec {
  std::size_t players = 0;
  std::size_t games = 0;
  int churn_window = 3;
  Day first_day = 0;
  std::vector<std::vector<EdgeKey>> days;
  std::vector<std::vector<double>> player_features;  // default (1, 0)
  std::vector<std::vector<double>> game_features;    // default (1, 0)
};

inline TemporalBipartiteGraph make_graph(const GraphSpec& spec) {
  const auto feature = [](const std::vector<std::vector<double>>& f, std::size_t k) {
    return f.empty() ? std::vector<double>{1.0, 0.0} : f[k];
  };
  const std::size_t pd = feature(spec.player_features, 0).size();
  const std::size_t gd = feature(spec.game_features, 0).size();
  FeatureSchema schema{pd, gd, {{"all", 0, pd, 0, gd}}};
  std::vector<std::string> pids, gids;
  for (std::size_t k = 0; k < spec.players; ++k) pids.push_back("p" + std::to_string(k));
  for (std::size_t k = 0; k < spec.games; ++k) gids.push_back("g" + std::to_string(k));
  std::vector<Snapshot> snaps;
  for (std::size_t t = 0; t < spec.days.size(); ++t) {
    Snapshot s(spec.first_day + static_cast<Day>(t), spec.players, spec.games, pd, gd);
    for (std::uint32_t u = 0; u < spec.players; ++u) s.add_player(u, feature(spec.player_features, u));
    for (std::uint32_t v = 0; v < spec.games; ++v) s.add_game(v, feature(spec.game_features, v));
    for (const auto& e : spec.days[t]) s.add_edge(e);
    snaps.push_back(std::move(s));
  }
  return TemporalBipartiteGraph(schema, spec.churn_window, pids, gids, std::move(snaps));
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

// Random model with nonzero biases and a context table of `vocab` rows.
inline ModelParams random_params(std::uint64_t seed, std::size_t d, std::size_t m, std::size_t vocab) {
  ModelShape shape;
  shape.input_dim = d;
  shape.embed_dim = m;
  auto params = init_params(shape, seed);
  auto rng = make_stream(seed, 0x5445535450ULL);
  for (auto& l : params.embed)
    for (auto& b : l.biases) b = 0.1 * standard_normal(rng);
  for (auto& l : params.predict)
    for (auto& b : l.biases) b = 0.1 * standard_normal(rng);
  for (std::uint32_t k = 0; k < vocab; ++k) params.add_context({k, k + 1000});
  for (auto& c : params.context) c = 0.5 * standard_normal(rng);
  return params;
}

// Batch with observed and censored examples, contexts, and temporal pairs of
// both kinds, so every objective component is active.
inline Batch random_batch(std::uint64_t seed, std::size_t d, std::size_t vocab, std::size_t n) {
  auto rng = make_stream(seed, 0x4241544348ULL);
  Batch batch;
  for (std::size_t i = 0; i < n; ++i) {
    BatchExample ex;
    ex.z = random_vector(rng, d);
    ex.observed = i % 4 != 3;
    ex.stays = uniform01(rng) < 0.5;
    if (ex.observed) {
      for (int c = 0; c < 2; ++c) {
        ContextSample s;
        s.target = static_cast<std::uint32_t>(uniform_index(rng, vocab));
        while (s.negatives.size() < 3) {
          const auto k = static_cast<std::uint32_t>(uniform_index(rng, vocab));
          if (k != s.target) s.negatives.push_back(k);
        }
        ex.contexts.push_back(std::move(s));
      }
    }
    if (i % 3 != 2) {
      TemporalTerm t;
      t.z_next = random_vector(rng, d);
      t.next_observed = i % 2 == 0;
      if (!t.next_observed) t.z_reference = random_vector(rng, d);
      ex.temporal = std::move(t);
    }
    batch.examples.push_back(std::move(ex));
  }
  return batch;
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
// parameter, with central differences of step h.
inline double max_gradient_error(ModelParams params, const Batch& batch, const ObjectiveWeights& w,
                                 const Gradients& grads, double h = 1e-6, double floor = 1e-6) {
  std::vector<std::vector<double>> analytic;
  for (auto t : grads.dense_tensors()) analytic.emplace_back(t.begin(), t.end());
  std::vector<double> ctx(params.context.size(), 0.0);
  const std::size_t m = params.shape.embed_dim;
  for (const auto& [row, g] : grads.context) std::copy(g.begin(), g.end(), ctx.begin() + static_cast<std::ptrdiff_t>(row * m));
  analytic.push_back(ctx);

  double worst = 0.0;
  auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t k = 0; k < tensors[t].size(); ++k) {
      double& x = tensors[t][k];
      const double saved = x;
      x = saved + h;
      const double up = batch_objective(params, batch, w).value;
      x = saved - h;
      const double down = batch_objective(params, batch, w).value;
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace churn::testing

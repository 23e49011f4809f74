#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "churn/error.hpp"
#include "churn/rng.hpp"
#include "churn/synth.hpp"
#include "churn/walk.hpp"
#include "support.hpp"

using namespace churn;
using churn::testing::GraphSpec;
using churn::testing::make_graph;

namespace {

bool throws_kind(ErrorKind kind, const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

// One player u0 playing games v0 and v2; v1 is present but unplayed.
// cos(v0, v1) = 0.9, cos(v0, v2) = 0.5.
TemporalBipartiteGraph three_game_fixture() {
  GraphSpec spec;
  spec.players = 1;
  spec.games = 3;
  spec.days = {{{0, 0}, {0, 2}}};
  spec.game_features = {{1.0, 0.0}, {0.9, std::sqrt(1.0 - 0.81)}, {0.5, std::sqrt(0.75)}};
  return make_graph(spec);
}

WalkConfig fixture_config() {
  WalkConfig c;
  c.epsilon = 1.0;
  c.p = 1.0;
  c.q = 0.05;
  c.max_augmented_per_node = 1;
  return c;
}

TemporalBipartiteGraph random_graph(std::uint64_t seed) {
  SynthConfig c;
  c.num_players = 40;
  c.num_games = 8;
  c.num_days = 2;
  c.games_per_player = 3;
  c.seed = seed;
  return generate(c).graph;
}

}  // namespace

TEST(Similarity, CosineExamples) {
  EXPECT_DOUBLE_EQ(node_similarity(std::vector<double>{1, 0}, std::vector<double>{2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(node_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0);
  EXPECT_DOUBLE_EQ(node_similarity(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), -1.0);
  EXPECT_EQ(node_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
}

TEST(Augment, TinyEpsilonKeepsOnlyNearDuplicates) {
  GraphSpec spec;
  spec.players = 2;
  spec.games = 2;
  spec.days = {{{0, 0}, {1, 1}}};
  spec.player_features = {{1, 0}, {0.8, 0.6}};
  spec.game_features = {{1, 0}, {0, 1}};
  const auto g = make_graph(spec);
  WalkConfig c;
  c.epsilon = 1e-9;
  const auto ag = build_augmented(g.at(0), c);
  for (std::uint32_t k = 0; k < 2; ++k) {
    EXPECT_TRUE(ag.augments(NodeId::player(k)).empty());
    EXPECT_TRUE(ag.augments(NodeId::game(k)).empty());
  }
}

TEST(Augment, IdenticalGamesListEachOther) {
  GraphSpec spec;
  spec.players = 1;
  spec.games = 2;
  spec.days = {{{0, 0}, {0, 1}}};
  spec.game_features = {{0.3, 0.4}, {0.3, 0.4}};
  const auto g = make_graph(spec);
  WalkConfig c;
  c.epsilon = 0.5;
  const auto ag = build_augmented(g.at(0), c);
  const auto a0 = ag.augments(NodeId::game(0));
  const auto a1 = ag.augments(NodeId::game(1));
  ASSERT_EQ(a0.size(), 1u);
  ASSERT_EQ(a1.size(), 1u);
  EXPECT_EQ(a0[0].node, NodeId::game(1));
  EXPECT_EQ(a1[0].node, NodeId::game(0));
  EXPECT_NEAR(a0[0].similarity, 1.0, 1e-15);
}

TEST(Augment, MatchesExhaustiveOracle) {
  auto rng = make_stream(5, 1);
  for (int trial = 0; trial < 20; ++trial) {
    GraphSpec spec;
    spec.players = 1;
    spec.games = 5;
    spec.days = {{{0, 0}}};
    spec.player_features = {{1, 0, 0}};
    for (int k = 0; k < 5; ++k) spec.game_features.push_back(churn::testing::random_vector(rng, 3));
    const auto g = make_graph(spec);
    WalkConfig c;
    c.epsilon = 0.2 + 1.6 * uniform01(rng) / 2.0;
    c.max_augmented_per_node = 2;
    for (auto exec : {Execution::Serial, Execution::Parallel}) {
      const auto ag = build_augmented(g.at(0), c, exec);
      for (std::uint32_t a = 0; a < 5; ++a) {
        std::vector<std::pair<double, std::uint32_t>> all;
        for (std::uint32_t b = 0; b < 5; ++b) {
          if (b == a) continue;
          const auto& xa = spec.game_features[a];
          const auto& xb = spec.game_features[b];
          double dot = 0, na = 0, nb = 0;
          for (int k = 0; k < 3; ++k) {
            dot += xa[k] * xb[k];
            na += xa[k] * xa[k];
            nb += xb[k] * xb[k];
          }
          const double sim = dot / (std::sqrt(na) * std::sqrt(nb));
          if (sim > 1.0 - c.epsilon) all.push_back({-sim, b});
        }
        std::sort(all.begin(), all.end());
        if (all.size() > 2) all.resize(2);
        const auto got = ag.augments(NodeId::game(a));
        ASSERT_EQ(got.size(), all.size());
        for (std::size_t k = 0; k < all.size(); ++k) {
          EXPECT_EQ(got[k].node.index, all[k].second);
          EXPECT_NEAR(got[k].similarity, -all[k].first, 1e-12);
        }
      }
    }
  }
}

TEST(Transition, ThreeGameFixture) {
  const auto g = three_game_fixture();
  const auto ag = build_augmented(g.at(0), fixture_config());
  const auto dist = transition_distribution(ag, NodeId::game(0), NodeId::player(0));
  // Weights: return 1/p = 1, augmented v1 0.9/q = 18, two-hop v2 0.5/q = 10.
  EXPECT_NEAR(dist.probability(NodeId::game(0)), 1.0 / 29.0, 1e-12);
  EXPECT_NEAR(dist.probability(NodeId::game(1)), 18.0 / 29.0, 1e-12);
  EXPECT_NEAR(dist.probability(NodeId::game(2)), 10.0 / 29.0, 1e-12);
  EXPECT_EQ(dist.probability(NodeId::player(0)), 0.0);
}

TEST(Transition, ReturnOnlyCandidateIsCertain) {
  GraphSpec spec;
  spec.players = 1;
  spec.games = 1;
  spec.days = {{{0, 0}}};
  const auto g = make_graph(spec);
  const auto ag = build_augmented(g.at(0), WalkConfig{});
  const auto dist = transition_distribution(ag, NodeId::game(0), NodeId::player(0));
  ASSERT_EQ(dist.entries.size(), 1u);
  EXPECT_EQ(dist.probability(NodeId::game(0)), 1.0);
}

TEST(Transition, SameKindStepIsRejected) {
  const auto g = three_game_fixture();
  const auto ag = build_augmented(g.at(0), fixture_config());
  EXPECT_TRUE(throws_kind(ErrorKind::DataError,
                          [&] { transition_distribution(ag, NodeId::game(0), NodeId::game(1)); }));
}

TEST(Transition, DistributionsSumToOneAndRespectKind) {
  const auto g = random_graph(3);
  const auto& s = g.at(0);
  WalkConfig c;
  c.epsilon = 0.5;
  const auto ag = build_augmented(s, c);
  for (const auto& e : s.edges()) {
    for (auto [prev, cur] : {std::pair{NodeId::game(e.game), NodeId::player(e.player)},
                             std::pair{NodeId::player(e.player), NodeId::game(e.game)}}) {
      const auto dist = transition_distribution(ag, prev, cur);
      double total = 0.0;
      for (const auto& t : dist.entries) {
        total += t.probability;
        EXPECT_EQ(t.node.kind, prev.kind);
        EXPECT_GT(t.probability, 0.0);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      EXPECT_EQ(dist.probability(cur), 0.0);
    }
  }
}

TEST(Transition, EmpiricalFrequenciesMatch) {
  const auto g = three_game_fixture();
  const auto ag = build_augmented(g.at(0), fixture_config());
  const auto dist = transition_distribution(ag, NodeId::game(0), NodeId::player(0));
  auto rng = make_stream(17, 4);
  std::map<std::uint32_t, int> counts;
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++counts[sample_transition(dist, rng).index];
  for (std::uint32_t v = 0; v < 3; ++v) {
    EXPECT_NEAR(counts[v] / static_cast<double>(n), dist.probability(NodeId::game(v)), 0.01);
  }
}

TEST(Contexts, RespectCapAndSkipSourceEdge) {
  const auto g = random_graph(4);
  const auto& s = g.at(0);
  WalkConfig c;
  c.epsilon = 0.5;
  c.rng_seed = 9;
  const auto ag = build_augmented(s, c);
  for (std::size_t k = 0; k < s.edges().size(); ++k) {
    auto rng = walk_stream(c, k);
    const auto ctx = sample_contexts(ag, s.edges()[k], rng);
    EXPECT_LE(ctx.size(), c.contexts_per_edge);
    for (const auto& x : ctx) EXPECT_NE(x, s.edges()[k]);
  }
}

TEST(Contexts, IsolatedEdgeHasNone) {
  GraphSpec spec;
  spec.players = 1;
  spec.games = 1;
  spec.days = {{{0, 0}}};
  const auto g = make_graph(spec);
  const auto ag = build_augmented(g.at(0), WalkConfig{});
  auto rng = make_stream(1, 1);
  EXPECT_TRUE(sample_contexts(ag, {0, 0}, rng).empty());
  EXPECT_TRUE(throws_kind(ErrorKind::NoEdge, [&] {
    auto r = make_stream(1, 1);
    sample_contexts(ag, {0, 1}, r);
  }));
}

TEST(Contexts, MatchStepByStepReplay) {
  const auto g = random_graph(6);
  const auto& s = g.at(0);
  WalkConfig c;
  c.epsilon = 0.6;
  c.walk_length = 10;
  c.contexts_per_edge = 5;
  c.rng_seed = 21;
  const auto ag = build_augmented(s, c);
  for (std::size_t k = 0; k < s.edges().size(); ++k) {
    const EdgeKey edge = s.edges()[k];
    auto rng = walk_stream(c, k);
    const auto got = sample_contexts(ag, edge, rng);

    auto replay = walk_stream(c, k);
    std::vector<EdgeKey> want;
    NodeId prev = NodeId::game(edge.game);
    NodeId cur = NodeId::player(edge.player);
    for (std::size_t step = 0; step < c.walk_length && want.size() < c.contexts_per_edge; ++step) {
      TransitionDistribution dist;
      try {
        dist = transition_distribution(ag, prev, cur);
      } catch (const Error& e) {
        ASSERT_EQ(e.kind(), ErrorKind::DeadEnd);
        break;
      }
      const double u = uniform01(replay);
      NodeId next = dist.entries.back().node;
      double acc = 0.0;
      for (const auto& t : dist.entries) {
        acc += t.probability;
        if (u < acc) {
          next = t.node;
          break;
        }
      }
      const EdgeKey pair = cur.kind == NodeKind::Player ? EdgeKey{cur.index, next.index}
                                                        : EdgeKey{next.index, cur.index};
      if (pair != edge) want.push_back(pair);
      prev = cur;
      cur = next;
    }
    EXPECT_EQ(got, want) << "edge " << k;
  }
}

TEST(Parallel, AugmentAndBatchesMatchSerial) {
  const auto g = random_graph(8);
  const auto& s = g.at(0);
  WalkConfig c;
  c.epsilon = 0.7;
  c.rng_seed = 2;
  const auto a = build_augmented(s, c, Execution::Serial);
  const auto b = build_augmented(s, c, Execution::Parallel);
  for (const auto u : s.players()) {
    const auto x = a.augments(NodeId::player(u));
    const auto y = b.augments(NodeId::player(u));
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_EQ(x[k].node, y[k].node);
      EXPECT_EQ(x[k].similarity, y[k].similarity);
    }
  }
  const auto serial = sample_contexts_batch(a, s.edges(), 100, Execution::Serial);
  const auto parallel = sample_contexts_batch(b, s.edges(), 100, Execution::Parallel);
  EXPECT_EQ(serial, parallel);
}

TEST(WalkConfig, ValidateRejectsBadValues) {
  WalkConfig c;
  c.epsilon = 0.0;
  EXPECT_TRUE(throws_kind(ErrorKind::ConfigError, [&] { c.validate(); }));
  c = WalkConfig{};
  c.q = 0.0;
  EXPECT_TRUE(throws_kind(ErrorKind::ConfigError, [&] { c.validate(); }));
}

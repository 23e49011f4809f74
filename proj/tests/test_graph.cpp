#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>

#include "churn/dataset_io.hpp"
#include "churn/error.hpp"
#include "churn/graph.hpp"
#include "churn/rng.hpp"
#include "churn/synth.hpp"
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

// One edge (0, 0) played on the listed days of a [0, num_days) observation.
TemporalBipartiteGraph single_pair(int num_days, int T, std::vector<int> play_days) {
  GraphSpec spec;
  spec.players = 1;
  spec.games = 1;
  spec.churn_window = T;
  spec.days.resize(static_cast<std::size_t>(num_days));
  for (int d : play_days) spec.days[static_cast<std::size_t>(d)].push_back({0, 0});
  return make_graph(spec);
}

TemporalBipartiteGraph three_block_graph(std::vector<double> xu, std::vector<double> xv) {
  FeatureSchema schema{6, 6, {{"a", 0, 2, 0, 2}, {"b", 2, 2, 2, 2}, {"c", 4, 2, 4, 2}}};
  Snapshot s(0, 1, 1, 6, 6);
  s.add_player(0, xu);
  s.add_game(0, xv);
  s.add_edge({0, 0});
  std::vector<Snapshot> snaps;
  snaps.push_back(std::move(s));
  return TemporalBipartiteGraph(schema, 3, {"p0"}, {"g0"}, std::move(snaps));
}

}  // namespace

TEST(EdgeFeatures, IdenticalVectorsGiveOnes) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const auto z = edge_features(three_block_graph(x, x), {0, 0}, 0);
  ASSERT_EQ(z.size(), 3u);
  for (double c : z) EXPECT_DOUBLE_EQ(c, 1.0);
}

TEST(EdgeFeatures, BlockwiseOrthogonalGivesZeros) {
  const auto z = edge_features(three_block_graph({1, 0, 0, 1, 2, 0}, {0, 3, 5, 0, 0, 1}), {0, 0}, 0);
  for (double c : z) EXPECT_EQ(c, 0.0);
}

TEST(EdgeFeatures, MatchesDirectCosine) {
  const auto z = edge_features(three_block_graph({1, 2, 1, 0, 1, 1}, {2, 1, 1, 0, 1, 1}), {0, 0}, 0);
  const double oracle = (1.0 * 2 + 2.0 * 1) / (std::sqrt(5.0) * std::sqrt(5.0));
  EXPECT_NEAR(z[0], oracle, 1e-15);
  EXPECT_NEAR(z[0], 0.8, 1e-15);
}

TEST(EdgeFeatures, ZeroNormBlockIsZero) {
  const auto z = edge_features(three_block_graph({0, 0, 1, 0, 1, 1}, {2, 1, 1, 0, 1, 1}), {0, 0}, 0);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_TRUE(std::isfinite(z[0]));
}

TEST(EdgeFeatures, SymmetricUnderBlockPermutation) {
  auto rng = make_stream(7, 1);
  std::vector<double> xu(6), xv(6);
  for (auto& x : xu) x = standard_normal(rng);
  for (auto& x : xv) x = standard_normal(rng);
  const auto z = edge_features(three_block_graph(xu, xv), {0, 0}, 0);

  // Reverse block order on both sides.
  const auto swap_blocks = [](const std::vector<double>& x) {
    return std::vector<double>{x[4], x[5], x[2], x[3], x[0], x[1]};
  };
  const auto zp = edge_features(three_block_graph(swap_blocks(xu), swap_blocks(xv)), {0, 0}, 0);
  EXPECT_EQ(z[0], zp[2]);
  EXPECT_EQ(z[1], zp[1]);
  EXPECT_EQ(z[2], zp[0]);
}

TEST(EdgeFeatures, AbsentNodeThrowsNotPresent) {
  FeatureSchema schema{2, 2, {{"a", 0, 2, 0, 2}}};
  std::vector<Snapshot> snaps;
  for (Day d = 0; d < 2; ++d) {
    Snapshot s(d, 2, 1, 2, 2);
    s.add_player(0, std::vector<double>{1, 0});
    if (d == 0) s.add_player(1, std::vector<double>{1, 0});
    s.add_game(0, std::vector<double>{1, 0});
    s.add_edge({0, 0});
    snaps.push_back(std::move(s));
  }
  const TemporalBipartiteGraph g(schema, 1, {"p0", "p1"}, {"g0"}, std::move(snaps));
  EXPECT_TRUE(throws_kind(ErrorKind::NotPresent, [&] { edge_features(g, {1, 0}, 1); }));
}

TEST(FeatureSchema, BlockPastWidthIsSchemaError) {
  FeatureSchema schema{2, 2, {{"a", 1, 2, 0, 2}}};
  EXPECT_TRUE(throws_kind(ErrorKind::SchemaError, [&] { schema.validate(); }));
  EXPECT_TRUE(throws_kind(ErrorKind::SchemaError, [] {
    cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3});
  }));
}

TEST(EdgeLabel, DailyPlayIsStay) {
  const auto g = single_pair(10, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto l = edge_label(g, {0, 0}, 5);
  EXPECT_EQ(l.value, LabelValue::Stay);
  EXPECT_TRUE(l.observed);
}

TEST(EdgeLabel, LastPlayInsideFinalWindowIsCensored) {
  const auto g = single_pair(10, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  const auto l = edge_label(g, {0, 0}, 8);
  EXPECT_EQ(l.value, LabelValue::Unknown);
  EXPECT_FALSE(l.observed);
  ASSERT_TRUE(l.last_observed.has_value());
  EXPECT_LT(*l.last_observed, 8);
}

TEST(EdgeLabel, GapCoveringWholeWindowIsChurn) {
  // Plays on days 1-4 of a 10-day observation, T = 3, query day 4: the window
  // is days 6-8, entirely observed and without play.
  const auto g = single_pair(10, 3, {1, 2, 3, 4});
  const auto l = edge_label(g, {0, 0}, 4);
  EXPECT_EQ(l.value, LabelValue::Churn);
  EXPECT_TRUE(l.observed);
}

TEST(EdgeLabel, AbsentEdgeThrowsNoEdge) {
  const auto g = single_pair(10, 3, {1, 2});
  EXPECT_TRUE(throws_kind(ErrorKind::NoEdge, [&] { edge_label(g, {0, 0}, 5); }));
}

TEST(EdgeLabel, NeverUnknownWhenWindowIsObserved) {
  auto rng = make_stream(11, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 1 + static_cast<int>(uniform_index(rng, 4));
    std::vector<int> plays;
    for (int d = 0; d < 20; ++d)
      if (uniform01(rng) < 0.5) plays.push_back(d);
    if (plays.empty()) continue;
    const auto g = single_pair(20, T, plays);
    for (int d : plays) {
      const auto l = edge_label(g, {0, 0}, d);
      if (d + T + 1 <= 19) EXPECT_TRUE(l.observed) << "day " << d << " T " << T;
      // Brute force over the window.
      bool any = false;
      for (int k = d + 2; k <= std::min(d + T + 1, 19); ++k) any |= std::count(plays.begin(), plays.end(), k) > 0;
      if (any) EXPECT_EQ(l.value, LabelValue::Stay);
      if (!any && d + T + 1 <= 19) EXPECT_EQ(l.value, LabelValue::Churn);
      if (!any && d + T + 1 > 19) EXPECT_EQ(l.value, LabelValue::Unknown);
    }
  }
}

TEST(PersistentEdges, SetIntersection) {
  GraphSpec spec;
  spec.players = 2;
  spec.games = 2;
  spec.days = {{{0, 0}, {0, 1}}, {{0, 1}}, {{1, 0}}, {{1, 0}}};
  const auto g = make_graph(spec);
  EXPECT_EQ(persistent_edges(g, 0), (std::vector<EdgeKey>{{0, 1}}));
  EXPECT_TRUE(persistent_edges(g, 1).empty());
  EXPECT_EQ(persistent_edges(g, 2), (std::vector<EdgeKey>{{1, 0}}));
  EXPECT_TRUE(throws_kind(ErrorKind::OutOfRange, [&] { persistent_edges(g, 3); }));
}

TEST(PersistentEdges, SubsetOfBothDays) {
  SynthConfig c;
  c.num_players = 30;
  c.num_games = 6;
  c.num_days = 12;
  c.base_hazard = 0.2;
  const auto g = generate(c).graph;
  for (Day d = g.first_day(); d < g.last_day(); ++d) {
    const auto& a = g.at(d).edges();
    const auto& b = g.at(d + 1).edges();
    for (const auto& e : persistent_edges(g, d)) {
      EXPECT_TRUE(std::binary_search(a.begin(), a.end(), e));
      EXPECT_TRUE(std::binary_search(b.begin(), b.end(), e));
    }
  }
}

TEST(Dataset, RoundTripIsBitIdentical) {
  SynthConfig c;
  c.num_players = 25;
  c.num_games = 5;
  c.num_days = 10;
  const auto g = generate(c).graph;
  const auto dir = std::filesystem::temp_directory_path() / "churn_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(g, dir);
  const auto h = load_dataset(dir);
  ASSERT_EQ(h.first_day(), g.first_day());
  ASSERT_EQ(h.last_day(), g.last_day());
  EXPECT_EQ(h.player_ids(), g.player_ids());
  EXPECT_EQ(h.game_ids(), g.game_ids());
  EXPECT_EQ(h.churn_window(), g.churn_window());
  for (Day d = g.first_day(); d <= g.last_day(); ++d) {
    ASSERT_EQ(h.at(d).edges(), g.at(d).edges());
    for (const auto& e : g.at(d).edges()) {
      const auto a = edge_features(g, e, d);
      const auto b = edge_features(h, e, d);
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[k]), std::bit_cast<std::uint64_t>(b[k]));
      const auto la = edge_label(g, e, d);
      const auto lb = edge_label(h, e, d);
      EXPECT_EQ(la.value, lb.value);
      EXPECT_EQ(la.observed, lb.observed);
      EXPECT_EQ(la.last_observed, lb.last_observed);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, ShortestDoubleRoundTrip) {
  auto rng = make_stream(3, 3);
  for (int k = 0; k < 1000; ++k) {
    const double x = standard_normal(rng) * std::pow(10.0, static_cast<double>(uniform_index(rng, 40)) - 20.0);
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_TRUE(throws_kind(ErrorKind::DataError, [] { parse_double("1.5x"); }));
}

TEST(Graph, TruncatedCensorsAtNewEnd) {
  const auto g = single_pair(10, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto h = g.truncated(5);
  EXPECT_EQ(h.last_day(), 5);
  EXPECT_EQ(edge_label(g, {0, 0}, 4).value, LabelValue::Stay);
  EXPECT_EQ(edge_label(h, {0, 0}, 4).value, LabelValue::Unknown);
}

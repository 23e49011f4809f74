#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "churn/backward.hpp"
#include "churn/cli.hpp"
#include "churn/loss.hpp"
#include "churn/metrics.hpp"
#include "churn/rank.hpp"
#include "churn/synth.hpp"
#include "churn/train.hpp"
#include "churn/walk.hpp"
#include "../oracles.hpp"
#include "../support.hpp"

using namespace churn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// World shared by the training, ranking and reproducibility checks.
SynthConfig fixture_world() {
  SynthConfig c;
  c.num_players = 200;
  c.num_games = 20;
  c.num_days = 30;
  c.churn_window = 3;
  c.latent_dim = 1;
  c.games_per_player = 20;
  c.popularity_exponent = 1.0;
  c.player_spread = 0.1;
  c.interaction_scale = -8.0;
  c.base_hazard = 0.5;
  c.tenure_coefficient = 0.1;
  c.tenure_cap = 10.0;
  c.history_days = 30;
  c.rejoin_rate = 0.4;
  c.noise = 0.02;
  c.seed = 0;
  return c;
}

TrainConfig fixture_train(TrainMode mode) {
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 128;
  c.initial_lr = 0.005;
  c.embed_dim = 50;
  c.seed = 1;
  c.walk.rng_seed = 1;
  c.mode = mode;
  return c;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  LossWeights lw;
  lw.alpha = 0.5;
  lw.beta = 0.5;
  lw.gamma = 0.01;
  const auto w = ObjectiveWeights::co_train(lw);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = testing::random_params(seed, 6, 4, 10);
    const auto batch = testing::random_batch(seed, 6, 10, 8);
    const auto r = backward(params, batch, w, Execution::Serial);
    worst = std::max(worst, testing::max_gradient_error(params, batch, w, r.grads));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          "max relative error " + fmt("%.2e", worst) + " over 20 instances, " + fmt("%.1f s", secs)};
}

Outcome simsum_unbiased() {
  SynthConfig c;
  c.num_players = 500;
  c.num_games = 50;
  c.num_days = 6;
  c.churn_window = 3;
  c.games_per_player = 5;
  c.base_hazard = 0.1;
  c.history_days = 10;
  c.seed = 11;
  const Day day = 2;
  const int realizations = 200;
  std::vector<double> sum(c.num_games, 0.0), sq(c.num_games, 0.0);
  for (int r = 0; r < realizations; ++r) {
    c.churn_seed = 1000 + static_cast<std::uint64_t>(r);
    const auto world = generate(c);
    const auto rg = RelationGraph::from_snapshot(world.graph.at(day), world.hazards_on(day));
    const auto expected = simsum(rg);
    const auto realized = realized_churn_counts(world.graph, day);
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const double d = static_cast<double>(realized[k].count) - expected[k].score;
      sum[expected[k].game] += d;
      sq[expected[k].game] += d * d;
    }
  }
  std::size_t passed = 0;
  for (std::size_t v = 0; v < c.num_games; ++v) {
    const double n = realizations;
    const double mean = sum[v] / n;
    const double var = std::max(0.0, (sq[v] - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    if (std::abs(mean) <= 3.0 * se + 1e-12) ++passed;
  }
  const double share = static_cast<double>(passed) / static_cast<double>(c.num_games);
  return {share >= 0.95, std::to_string(passed) + "/" + std::to_string(c.num_games) +
                             " games within 3 standard errors over 200 realizations"};
}

Outcome metric_oracles() {
  auto rng = make_stream(3, 0x4d4554);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    const auto a = testing::shuffled(n, rng);
    const auto b = testing::shuffled(n, rng);
    const std::size_t k = 1 + uniform_index(rng, n);
    const auto [apk, ap] = testing::precision_oracles(a, b, k);
    std::vector<ScoredLabel> s(n);
    for (auto& x : s) {
      x.score = std::floor(uniform01(rng) * 20.0);
      x.positive = uniform01(rng) < 0.4;
    }
    s[0].positive = true;
    s[1].positive = false;
    worst = std::max({worst, std::abs(kendall_tau(a, b) - testing::kendall_oracle(a, b)),
                      std::abs(weighted_kendall_tau(a, b) - testing::weighted_oracle(a, b)),
                      std::abs(spearman(a, b) - testing::spearman_oracle(a, b)),
                      std::abs(avg_precision_at_k(a, b, k) - apk), std::abs(average_precision(a, b, k) - ap),
                      std::abs(*auc(s) - testing::auc_oracle(s))});
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.2e", worst) + " over 100 inputs"};
}

Outcome softmax_exact() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t vocab = 5 + seed % 8;
    const auto params = testing::random_params(seed, 4, 5, vocab);
    auto rng = make_stream(seed, 0x534d58);
    std::vector<std::vector<double>> gs;
    std::vector<std::vector<ContextSample>> ctx;
    long double exact = 0.0L;
    for (int i = 0; i < 3; ++i) {
      gs.push_back(testing::random_vector(rng, 5, 1.5));
      ctx.emplace_back();
      for (int j = 0; j < 2; ++j) {
        ContextSample s;
        s.target = static_cast<std::uint32_t>(uniform_index(rng, vocab));
        long double z = 0.0L, st = 0.0L;
        for (std::uint32_t v = 0; v < vocab; ++v) {
          if (v != s.target) s.negatives.push_back(v);
          long double dot = 0.0L;
          for (std::size_t m = 0; m < 5; ++m) dot += static_cast<long double>(gs.back()[m]) * params.context_row(v)[m];
          z += std::exp(dot);
          if (v == s.target) st = dot;
        }
        exact += std::log(z) - st;
        ctx.back().push_back(std::move(s));
      }
    }
    std::vector<UnsupervisedItem> items;
    for (std::size_t i = 0; i < gs.size(); ++i) items.push_back({gs[i], ctx[i]});
    worst = std::max(worst, std::abs(unsupervised_loss(params, items) - static_cast<double>(exact)));
  }
  return {worst <= 1e-9, "max |L_U - exact| " + fmt("%.2e", worst) + " over 50 fixtures"};
}

Outcome walk_kernel() {
  // Six nodes: players u0, u1 and games v0..v3.
  testing::GraphSpec spec;
  spec.players = 2;
  spec.games = 4;
  spec.days = {{{0, 0}, {0, 2}, {1, 2}, {1, 3}}};
  spec.player_features = {{1.0, 0.2}, {0.6, 0.8}};
  spec.game_features = {{1.0, 0.0}, {0.9, 0.3}, {0.4, 0.9}, {-0.2, 1.0}};
  const auto g = testing::make_graph(spec);
  WalkConfig wc;
  wc.epsilon = 1.0;
  wc.p = 2.0;
  wc.q = 0.5;
  wc.max_augmented_per_node = 2;
  const auto ag = build_augmented(g.at(0), wc);

  bool sums = true, kinds = true;
  double linf = 0.0;
  const std::vector<std::pair<NodeId, NodeId>> steps{{NodeId::game(0), NodeId::player(0)},
                                                     {NodeId::player(0), NodeId::game(2)},
                                                     {NodeId::game(3), NodeId::player(1)},
                                                     {NodeId::player(1), NodeId::game(2)}};
  auto rng = make_stream(5, 0x57414c4b);
  for (const auto& [prev, cur] : steps) {
    const auto dist = transition_distribution(ag, prev, cur);
    double total = 0.0;
    for (const auto& t : dist.entries) total += t.probability;
    sums &= std::abs(total - 1.0) <= 1e-12;
    const std::size_t other = cur.kind == NodeKind::Player ? 2 : 4;
    for (std::uint32_t k = 0; k < other; ++k) {
      const NodeId wrong{k, cur.kind};
      kinds &= dist.probability(wrong) == 0.0;
    }
    const std::size_t same = prev.kind == NodeKind::Player ? 2 : 4;
    std::vector<double> freq(same, 0.0);
    const int n = 100000;
    for (int s = 0; s < n; ++s) {
      const auto x = sample_transition(dist, rng);
      kinds &= x.kind == prev.kind;
      freq[x.index] += 1.0 / n;
    }
    for (std::uint32_t k = 0; k < same; ++k)
      linf = std::max(linf, std::abs(freq[k] - dist.probability(NodeId{k, prev.kind})));
  }
  // Every step on a random world.
  SynthConfig sc;
  sc.num_players = 60;
  sc.num_games = 10;
  sc.num_days = 1;
  sc.seed = 2;
  const auto world = generate(sc);
  WalkConfig wr;
  wr.epsilon = 0.5;
  const auto ar = build_augmented(world.graph.at(0), wr);
  for (const auto& e : world.graph.at(0).edges()) {
    for (const auto& [prev, cur] : {std::pair{NodeId::game(e.game), NodeId::player(e.player)},
                                    std::pair{NodeId::player(e.player), NodeId::game(e.game)}}) {
      const auto dist = transition_distribution(ar, prev, cur);
      double total = 0.0;
      for (const auto& t : dist.entries) {
        total += t.probability;
        kinds &= t.node.kind == prev.kind;
      }
      sums &= std::abs(total - 1.0) <= 1e-12;
    }
  }
  return {sums && kinds && linf <= 0.01,
          std::string(sums ? "sums to 1" : "sum mismatch") + ", " + (kinds ? "no wrong-type mass" : "wrong-type mass") +
              ", L-inf " + fmt("%.4f", linf) + " over 1e5 samples"};
}

Outcome temporal_loss_check() {
  auto rng = make_stream(6, 0x544d50);
  bool zero = true, hinge = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto gv = testing::random_vector(rng, 5);
    const double f0 = uniform01(rng);
    const double f1 = f0 + (1.0 - f0) * uniform01(rng);
    const std::vector<TemporalPair> same{{gv, gv, f0, f1, true, std::nullopt}};
    zero &= temporal_loss(same) == 0.0;
    const double ref = uniform01(rng);
    const double fn = uniform01(rng);
    const std::vector<TemporalPair> censored{{gv, gv, uniform01(rng), fn, false, ref}};
    hinge &= temporal_loss(censored) == std::max(ref - fn, 0.0);
  }
  // Through the model: a pair whose next-day features equal today's.
  const auto params = testing::random_params(1, 6, 4, 3);
  Batch batch;
  BatchExample ex;
  ex.z = testing::random_vector(rng, 6);
  ex.temporal = TemporalTerm{ex.z, true, {}};
  batch.examples.push_back(ex);
  zero &= batch_objective(params, batch, ObjectiveWeights::co_train(LossWeights{})).components.temporal == 0.0;
  return {zero && hinge, std::string(zero ? "L_T = 0 for identical embeddings" : "nonzero L_T") + ", " +
                             (hinge ? "censored pairs give the hinge gap" : "hinge mismatch")};
}

Outcome training_quality(const SynthResult& world, TrainResult& cotrain) {
  const auto t0 = Clock::now();
  cotrain = train(world.graph, fixture_train(TrainMode::CoTrain));
  const auto alternating = train(world.graph, fixture_train(TrainMode::Alternating));
  const double secs = seconds_since(t0);
  const double a = cotrain.log.back().test_auc.value_or(0.0);
  const double b = alternating.log.back().test_auc.value_or(0.0);
  return {a >= 0.90 && a >= b - 0.02 && secs < 120.0,
          "CoTrain AUC " + fmt("%.4f", a) + ", Alternating AUC " + fmt("%.4f", b) + ", " + fmt("%.1f s", secs)};
}

Outcome ranking_quality(const SynthResult& world, const TrainResult& cotrain) {
  const auto t0 = Clock::now();
  const auto& g = world.graph;
  double tau_simsum = 0.0, tau_pagerank = 0.0, tau_hits = 0.0, tau_oracle = 0.0;
  int days = 0;
  for (const Day d : cotrain.split.test) {
    if (!g.contains_day(d + 1)) continue;
    GameScores counts;
    for (const auto& c : realized_churn_counts(g, d)) counts.push_back({c.game, static_cast<double>(c.count)});
    const auto truth = rank_games(counts);
    std::vector<double> probs;
    for (const auto& p : predict(cotrain.params, g, d)) probs.push_back(p.probability);
    const auto rg = RelationGraph::from_snapshot(g.at(d), probs);
    tau_simsum += kendall_tau(rank_games(simsum(rg)), truth);
    tau_pagerank += kendall_tau(rank_games(pagerank(rg).games), truth);
    tau_hits += kendall_tau(rank_games(hits(rg).games), truth);
    const auto oracle = RelationGraph::from_snapshot(g.at(d), world.hazards_on(d));
    tau_oracle += kendall_tau(rank_games(simsum(oracle)), truth);
    ++days;
  }
  const double n = std::max(days, 1);
  tau_simsum /= n;
  tau_pagerank /= n;
  tau_hits /= n;
  tau_oracle /= n;
  const double secs = seconds_since(t0);
  return {days > 0 && tau_simsum >= 0.5 && tau_pagerank >= 0.5 && tau_hits >= 0.5 && tau_oracle >= 0.8 && secs < 60.0,
          "tau SimSum " + fmt("%.3f", tau_simsum) + ", PageRank " + fmt("%.3f", tau_pagerank) + ", HITS " +
              fmt("%.3f", tau_hits) + ", oracle SimSum " + fmt("%.3f", tau_oracle) + " over " + std::to_string(days) +
              " test days, " + fmt("%.1f s", secs)};
}

Outcome link_analysis_fixtures() {
  const RelationGraph two({0}, {0}, {{0, 0, 0.6}});
  const auto pr = pagerank(two);
  const bool pr_ok = std::abs(pr.games[0].score - 0.5) <= 1e-10 && std::abs(pr.players[0] - 0.5) <= 1e-10;
  std::vector<WeightedEdge> edges;
  for (std::uint32_t u = 0; u < 5; ++u)
    for (std::uint32_t v = 0; v < 6; ++v) edges.push_back({u, v, 0.3});
  const RelationGraph complete({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4, 5}, edges);
  const auto h = hits(complete);
  double spread = 0.0;
  for (const auto& a : h.games) spread = std::max(spread, std::abs(a.score - h.games[0].score));
  return {pr_ok && spread <= 1e-10, "PageRank (" + fmt("%.12f", pr.players[0]) + ", " + fmt("%.12f", pr.games[0].score) +
                                        "), HITS authority spread " + fmt("%.1e", spread)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void run_pipeline(const fs::path& dir) {
  cli::cmd_synth({fixture_world(), dir / "data"});
  cli::cmd_train({dir / "data", dir / "model", fixture_train(TrainMode::CoTrain)});
  const auto ckpt = dir / "model" / "checkpoint.json";
  cli::cmd_truth({dir / "data", dir / "truth", ckpt, {}});
  for (const std::string m : {"simsum", "pagerank", "hits"}) {
    cli::RankCommand r;
    r.data = dir / "data";
    r.out = dir / "ranks";
    r.method = m;
    r.checkpoint = ckpt;
    cli::cmd_rank(r);
  }
  cli::cmd_predict({ckpt, dir / "data", dir / "predictions.csv", {}});
  cli::cmd_eval({dir / "ranks", dir / "truth", {"simsum", "pagerank", "hits"}, dir / "predictions.csv",
                 dir / "eval.jsonl"});
}

Outcome reproducibility() {
  const auto root = fs::temp_directory_path() / "churn_acceptance_repro";
  fs::remove_all(root);
  run_pipeline(root / "a");
  run_pipeline(root / "b");
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto other = root / "b" / fs::relative(entry.path(), root / "a");
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  std::size_t files_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "b")) files_b += entry.is_regular_file() ? 1 : 0;
  fs::remove_all(root);
  return {files > 0 && differing == 0 && files == files_b,
          std::to_string(files) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int n, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };

  report(1, "gradient check", gradient_check);
  report(2, "SimSum is unbiased for realized churn counts", simsum_unbiased);
  report(3, "metrics match brute-force oracles", metric_oracles);
  report(4, "context loss equals the exact softmax", softmax_exact);
  report(5, "walk transition kernel", walk_kernel);
  report(6, "temporal loss", temporal_loss_check);

  const auto world = generate(fixture_world());
  TrainResult cotrain;
  report(7, "churn prediction AUC", [&] { return training_quality(world, cotrain); });
  report(8, "churn ranking tau", [&] { return ranking_quality(world, cotrain); });
  report(9, "PageRank and HITS fixtures", link_analysis_fixtures);
  report(10, "pipeline reruns are byte-identical", reproducibility);

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}

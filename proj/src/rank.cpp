#include "churn/rank.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "churn/dataset_io.hpp"
#include "churn/error.hpp"

namespace churn {

namespace {

double l1_change(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s;
}

void l2_normalize(std::span<double> x) {
  if (x.empty()) return;
  double sq = 0.0;
  for (double v : x) sq += v * v;
  if (sq > 0.0) {
    const double n = std::sqrt(sq);
    for (double& v : x) v /= n;
  } else {
    const double u = 1.0 / std::sqrt(static_cast<double>(x.size()));
    for (double& v : x) v = u;
  }
}

GameScores game_slice(const RelationGraph& rg, const std::vector<double>& node_scores) {
  GameScores out;
  out.reserve(rg.games().size());
  for (std::size_t k = 0; k < rg.games().size(); ++k) {
    out.push_back({rg.games()[k], node_scores[rg.game_node(k)]});
  }
  return out;
}

}  // namespace

RelationGraph::RelationGraph(std::vector<std::uint32_t> players, std::vector<std::uint32_t> games,
                             std::vector<WeightedEdge> edges)
    : players_(std::move(players)), games_(std::move(games)), edges_(std::move(edges)) {
  std::sort(players_.begin(), players_.end());
  std::sort(games_.begin(), games_.end());
  if (std::adjacent_find(players_.begin(), players_.end()) != players_.end() ||
      std::adjacent_find(games_.begin(), games_.end()) != games_.end()) {
    throw Error(ErrorKind::DataError, "duplicate node in relation graph");
  }
  std::sort(edges_.begin(), edges_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.player, a.game) < std::tie(b.player, b.game);
  });
  auto node_of = [](const std::vector<std::uint32_t>& v, std::uint32_t id) -> std::ptrdiff_t {
    const auto it = std::lower_bound(v.begin(), v.end(), id);
    return it != v.end() && *it == id ? it - v.begin() : -1;
  };
  const std::size_t n = num_nodes();
  std::vector<std::vector<Adjacent>> adj(n);
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    if (!std::isfinite(e.weight) || e.weight < 0.0 || e.weight > 1.0) {
      throw Error(ErrorKind::DataError, "relation weight outside [0, 1]");
    }
    if (k > 0 && edges_[k - 1].player == e.player && edges_[k - 1].game == e.game) {
      throw Error(ErrorKind::DataError, "duplicate relation edge");
    }
    const auto pu = node_of(players_, e.player);
    const auto gv = node_of(games_, e.game);
    if (pu < 0 || gv < 0) throw Error(ErrorKind::NotPresent, "relation edge endpoint not listed");
    const auto u = static_cast<std::uint32_t>(pu);
    const auto v = static_cast<std::uint32_t>(players_.size() + static_cast<std::size_t>(gv));
    adj[u].push_back({v, e.weight});
    adj[v].push_back({u, e.weight});
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) offsets_[k + 1] = offsets_[k] + adj[k].size();
  adjacency_.reserve(offsets_[n]);
  for (auto& a : adj) {
    std::sort(a.begin(), a.end(), [](const Adjacent& x, const Adjacent& y) { return x.node < y.node; });
    adjacency_.insert(adjacency_.end(), a.begin(), a.end());
  }
}

RelationGraph RelationGraph::from_snapshot(const Snapshot& s, std::span<const double> probabilities) {
  if (probabilities.size() != s.edges().size()) {
    throw Error(ErrorKind::DataError, "one probability per snapshot edge is required");
  }
  std::vector<WeightedEdge> edges;
  edges.reserve(s.edges().size());
  for (std::size_t k = 0; k < s.edges().size(); ++k) {
    edges.push_back({s.edges()[k].player, s.edges()[k].game, probabilities[k]});
  }
  return RelationGraph(s.players(), s.games(), std::move(edges));
}

std::span<const RelationGraph::Adjacent> RelationGraph::adjacent(std::uint32_t node) const {
  return {adjacency_.data() + offsets_[node], offsets_[node + 1] - offsets_[node]};
}

GameScores simsum(const RelationGraph& rg) {
  GameScores out;
  out.reserve(rg.games().size());
  for (std::size_t k = 0; k < rg.games().size(); ++k) {
    double s = 0.0;
    for (const auto& a : rg.adjacent(rg.game_node(k))) s += a.weight;
    out.push_back({rg.games()[k], s});
  }
  return out;
}

void PageRankConfig::validate() const {
  if (max_iter == 0) throw Error(ErrorKind::ConfigError, "PageRank needs at least one iteration");
  if (!(damping >= 0.0 && damping < 1.0)) throw Error(ErrorKind::ConfigError, "damping must lie in [0, 1)");
  if (!(tol >= 0.0)) throw Error(ErrorKind::ConfigError, "tolerance must be non-negative");
}

void HitsConfig::validate() const {
  if (max_iter == 0) throw Error(ErrorKind::ConfigError, "HITS needs at least one iteration");
  if (!(tol >= 0.0)) throw Error(ErrorKind::ConfigError, "tolerance must be non-negative");
}

LinkAnalysisResult pagerank(const RelationGraph& rg, const PageRankConfig& config, Execution exec) {
  config.validate();
  const std::size_t n = rg.num_nodes();
  LinkAnalysisResult r;
  if (n == 0) {
    r.converged = true;
    return r;
  }
  const double base = (1.0 - config.damping) / static_cast<double>(n);
  std::vector<double> strength(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& a : rg.adjacent(static_cast<std::uint32_t>(i))) strength[i] += a.weight;

  std::vector<double> cur(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n, 0.0);
  const bool sender = config.normalization == PageRankNormalization::Sender;
  const auto nn = static_cast<std::ptrdiff_t>(n);

  for (std::size_t it = 0; it < config.max_iter; ++it) {
    if (exec == Execution::Serial) {
      // Scatter over the edge list.
      std::fill(next.begin(), next.end(), base);
      for (std::size_t j = 0; j < n; ++j) {
        for (const auto& a : rg.adjacent(static_cast<std::uint32_t>(j))) {
          const double norm = sender ? strength[j] : strength[a.node];
          if (norm > 0.0) next[a.node] += config.damping * cur[j] * a.weight / norm;
        }
      }
    } else {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < nn; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double acc = 0.0;
        for (const auto& a : rg.adjacent(static_cast<std::uint32_t>(i))) {
          const double norm = sender ? strength[a.node] : strength[i];
          if (norm > 0.0) acc += cur[a.node] * a.weight / norm;
        }
        next[i] = base + config.damping * acc;
      }
    }
    r.last_change = l1_change(next, cur);
    std::swap(cur, next);
    r.iterations = it + 1;
    if (r.last_change < config.tol) {
      r.converged = true;
      break;
    }
  }
  r.games = game_slice(rg, cur);
  r.players.assign(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(rg.players().size()));
  return r;
}

LinkAnalysisResult hits(const RelationGraph& rg, const HitsConfig& config, Execution exec) {
  config.validate();
  const std::size_t np = rg.players().size();
  const std::size_t ng = rg.games().size();
  std::vector<double> hub(np, 1.0), auth(ng, 1.0);
  std::vector<double> hub_next(np), auth_next(ng);
  LinkAnalysisResult r;
  const auto nnp = static_cast<std::ptrdiff_t>(np);
  const auto nng = static_cast<std::ptrdiff_t>(ng);

  std::vector<std::pair<std::size_t, std::size_t>> ends;
  if (exec == Execution::Serial) {
    ends.reserve(rg.edges().size());
    for (const auto& e : rg.edges()) {
      ends.emplace_back(
          static_cast<std::size_t>(std::lower_bound(rg.players().begin(), rg.players().end(), e.player) -
                                   rg.players().begin()),
          static_cast<std::size_t>(std::lower_bound(rg.games().begin(), rg.games().end(), e.game) -
                                   rg.games().begin()));
    }
  }

  for (std::size_t it = 0; it < config.max_iter; ++it) {
    if (exec == Execution::Serial) {
      std::fill(auth_next.begin(), auth_next.end(), 0.0);
      std::fill(hub_next.begin(), hub_next.end(), 0.0);
      for (std::size_t k = 0; k < ends.size(); ++k) {
        const auto [u, v] = ends[k];
        const double w = rg.edges()[k].weight;
        auth_next[v] += w * hub[u];
        hub_next[u] += w * auth[v];
      }
    } else {
#pragma omp parallel
      {
#pragma omp for schedule(static) nowait
        for (std::ptrdiff_t k = 0; k < nng; ++k) {
          double s = 0.0;
          for (const auto& a : rg.adjacent(rg.game_node(static_cast<std::size_t>(k)))) s += a.weight * hub[a.node];
          auth_next[static_cast<std::size_t>(k)] = s;
        }
#pragma omp for schedule(static)
        for (std::ptrdiff_t k = 0; k < nnp; ++k) {
          double s = 0.0;
          for (const auto& a : rg.adjacent(static_cast<std::uint32_t>(k))) s += a.weight * auth[a.node - np];
          hub_next[static_cast<std::size_t>(k)] = s;
        }
      }
    }
    l2_normalize(auth_next);
    l2_normalize(hub_next);
    r.last_change = l1_change(auth_next, auth) + l1_change(hub_next, hub);
    std::swap(auth, auth_next);
    std::swap(hub, hub_next);
    r.iterations = it + 1;
    if (r.last_change < config.tol) {
      r.converged = true;
      break;
    }
  }
  r.games.reserve(ng);
  for (std::size_t k = 0; k < ng; ++k) r.games.push_back({rg.games()[k], auth[k]});
  r.players = hub;
  return r;
}

RankedList rank_games(GameScores scores) {
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw Error(ErrorKind::DataError, "non-finite ranking score");
  }
  std::sort(scores.begin(), scores.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.game < b.game;
  });
  return RankedList{std::move(scores)};
}

void write_ranked_list(const std::filesystem::path& path, const RankedList& list,
                       const std::vector<std::string>& game_ids, std::string_view method) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "rank,game_id,score,method\n";
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& e = list.entries[k];
    if (e.game >= game_ids.size()) throw Error(ErrorKind::DataError, "ranked game has no id");
    out << (k + 1) << ',' << game_ids[e.game] << ',' << format_double(e.score) << ',' << method << '\n';
  }
}

LoadedRankedList read_ranked_list(const std::filesystem::path& path,
                                  std::unordered_map<std::string, std::uint32_t>& ids) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::DataError, path.string() + " is empty");
  LoadedRankedList out;
  std::size_t expected = 1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw Error(ErrorKind::DataError, path.string() + ": expected rank,game_id,score,method");
    if (std::string(cells[0]) != std::to_string(expected)) {
      throw Error(ErrorKind::DataError, path.string() + ": ranks must run 1, 2, 3, ...");
    }
    ++expected;
    auto [it, inserted] = ids.try_emplace(std::string(cells[1]), static_cast<std::uint32_t>(ids.size()));
    out.list.entries.push_back({it->second, parse_double(cells[2])});
    out.method = std::string(cells[3]);
  }
  return out;
}

}  // namespace churn

#include "churn/walk.hpp"

#include <omp.h>

#include <algorithm>
#include <string>

#include "churn/error.hpp"

namespace churn {

namespace {

constexpr std::uint64_t kWalkStreamTag = 0x57414c4bULL;  // "WALK"

bool by_similarity(const Augment& a, const Augment& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.node.index < b.node.index;
}

std::vector<std::vector<Augment>> augment_kind_parallel(const Snapshot& s, NodeKind kind,
                                                        const WalkConfig& cfg) {
  const auto& nodes = kind == NodeKind::Player ? s.players() : s.games();
  const std::size_t total = kind == NodeKind::Player ? s.num_players() : s.num_games();
  std::vector<std::vector<Augment>> out(total);
  const double threshold = 1.0 - cfg.epsilon;
  const auto n = static_cast<std::ptrdiff_t>(nodes.size());

#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const NodeId a{nodes[static_cast<std::size_t>(i)], kind};
    const auto xa = s.features(a);
    std::vector<Augment> found;
    for (const auto j : nodes) {
      if (j == a.index) continue;
      const NodeId b{j, kind};
      const double sim = cosine_similarity(xa, s.features(b));
      if (sim > threshold) found.push_back({b, sim});
    }
    const auto keep = std::min(found.size(), cfg.max_augmented_per_node);
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(keep), found.end(),
                      by_similarity);
    found.resize(keep);
    out[a.index] = std::move(found);
  }
  return out;
}

// Serial reference: full similarity matrix, then a full sort per row.
std::vector<std::vector<Augment>> augment_kind_serial(const Snapshot& s, NodeKind kind,
                                                      const WalkConfig& cfg) {
  const auto& nodes = kind == NodeKind::Player ? s.players() : s.games();
  const std::size_t total = kind == NodeKind::Player ? s.num_players() : s.num_games();
  const std::size_t n = nodes.size();
  std::vector<double> sims(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sims[i * n + j] = cosine_similarity(s.features({nodes[i], kind}), s.features({nodes[j], kind}));
    }
  }
  std::vector<std::vector<Augment>> out(total);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Augment> row;
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && sims[i * n + j] > 1.0 - cfg.epsilon) row.push_back({{nodes[j], kind}, sims[i * n + j]});
    }
    std::sort(row.begin(), row.end(), by_similarity);
    if (row.size() > cfg.max_augmented_per_node) row.resize(cfg.max_augmented_per_node);
    out[nodes[i]] = std::move(row);
  }
  return out;
}

bool shares_neighbor(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

EdgeKey as_edge(NodeId x, NodeId y) {
  return x.kind == NodeKind::Player ? EdgeKey{x.index, y.index} : EdgeKey{y.index, x.index};
}

}  // namespace

void WalkConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::ConfigError, "epsilon must lie in (0, 1]");
  if (!(p > 0.0)) throw Error(ErrorKind::ConfigError, "walk constant p must be positive");
  if (!(q > 0.0)) throw Error(ErrorKind::ConfigError, "walk constant q must be positive");
  if (walk_length == 0) throw Error(ErrorKind::ConfigError, "walk_length must be positive");
  if (contexts_per_edge == 0) throw Error(ErrorKind::ConfigError, "contexts_per_edge must be positive");
  if (max_augmented_per_node == 0) {
    throw Error(ErrorKind::ConfigError, "max_augmented_per_node must be positive");
  }
}

AugmentedGraph::AugmentedGraph(const Snapshot& base, WalkConfig config,
                               std::vector<std::vector<Augment>> players,
                               std::vector<std::vector<Augment>> games)
    : base_(&base),
      config_(config),
      player_augments_(std::move(players)),
      game_augments_(std::move(games)) {}

std::span<const Augment> AugmentedGraph::augments(NodeId n) const {
  const auto& table = n.kind == NodeKind::Player ? player_augments_ : game_augments_;
  if (n.index >= table.size()) return {};
  return table[n.index];
}

double node_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_similarity(a, b);
}

AugmentedGraph build_augmented(const Snapshot& snapshot, const WalkConfig& config, Execution exec) {
  config.validate();
  if (exec == Execution::Serial) {
    return AugmentedGraph(snapshot, config, augment_kind_serial(snapshot, NodeKind::Player, config),
                          augment_kind_serial(snapshot, NodeKind::Game, config));
  }
  return AugmentedGraph(snapshot, config, augment_kind_parallel(snapshot, NodeKind::Player, config),
                        augment_kind_parallel(snapshot, NodeKind::Game, config));
}

double TransitionDistribution::probability(NodeId n) const noexcept {
  for (const auto& t : entries)
    if (t.node == n) return t.probability;
  return 0.0;
}

TransitionDistribution transition_distribution(const AugmentedGraph& ag, NodeId prev, NodeId cur) {
  const Snapshot& s = ag.base();
  const WalkConfig& cfg = ag.config();
  if (prev.kind == cur.kind) throw Error(ErrorKind::DataError, "walk step between nodes of one kind");
  if (!s.has_node(prev) || !s.has_node(cur)) throw Error(ErrorKind::NotPresent, "walk node absent");

  TransitionDistribution dist;
  dist.entries.push_back({prev, 1.0 / cfg.p});

  const auto one_hop = ag.augments(prev);
  for (const auto& a : one_hop) {
    if (a.node != prev) dist.entries.push_back({a.node, a.similarity / cfg.q});
  }

  const auto prev_features = s.features(prev);
  const auto prev_neighbors = s.neighbors(prev);
  for (const auto o : s.neighbors(cur)) {
    const NodeId cand{o, prev.kind};
    if (cand == prev) continue;
    const bool in_one_hop = std::any_of(one_hop.begin(), one_hop.end(),
                                        [&](const Augment& a) { return a.node == cand; });
    if (in_one_hop) continue;
    if (!shares_neighbor(prev_neighbors, s.neighbors(cand))) continue;
    // e_{cur,o} = 1 because o was taken from cur's neighbours.
    const double w = std::max(0.0, node_similarity(prev_features, s.features(cand))) / cfg.q;
    if (w > 0.0) dist.entries.push_back({cand, w});
  }

  double total = 0.0;
  for (const auto& t : dist.entries) total += t.probability;
  if (!(total > 0.0)) throw Error(ErrorKind::DeadEnd, "no candidate with positive weight");
  for (auto& t : dist.entries) t.probability /= total;
  return dist;
}

NodeId sample_transition(const TransitionDistribution& dist, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& t : dist.entries) {
    acc += t.probability;
    if (u < acc) return t.node;
  }
  return dist.entries.back().node;
}

Rng walk_stream(const WalkConfig& config, std::uint64_t walk_index) {
  return make_stream(config.rng_seed, kWalkStreamTag, walk_index);
}

std::vector<EdgeKey> sample_contexts(const AugmentedGraph& ag, EdgeKey edge, Rng& rng) {
  const auto& cfg = ag.config();
  if (!ag.base().has_edge(edge)) {
    throw Error(ErrorKind::NoEdge, "walk start (" + std::to_string(edge.player) + ", " +
                                       std::to_string(edge.game) + ") is not a snapshot edge");
  }
  std::vector<EdgeKey> contexts;
  NodeId prev = NodeId::game(edge.game);
  NodeId cur = NodeId::player(edge.player);
  for (std::size_t step = 0; step < cfg.walk_length && contexts.size() < cfg.contexts_per_edge; ++step) {
    TransitionDistribution dist;
    try {
      dist = transition_distribution(ag, prev, cur);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DeadEnd) break;
      throw;
    }
    const NodeId next = sample_transition(dist, rng);
    const EdgeKey pair = as_edge(cur, next);
    if (pair != edge) contexts.push_back(pair);
    prev = cur;
    cur = next;
  }
  return contexts;
}

std::vector<std::vector<EdgeKey>> sample_contexts_batch(const AugmentedGraph& ag,
                                                        std::span<const EdgeKey> edges,
                                                        std::uint64_t first_walk_index,
                                                        Execution exec) {
  std::vector<std::vector<EdgeKey>> out(edges.size());
  const auto n = static_cast<std::ptrdiff_t>(edges.size());
  if (exec == Execution::Serial) {
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      auto rng = walk_stream(ag.config(), first_walk_index + static_cast<std::uint64_t>(k));
      out[static_cast<std::size_t>(k)] = sample_contexts(ag, edges[static_cast<std::size_t>(k)], rng);
    }
    return out;
  }
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    auto rng = walk_stream(ag.config(), first_walk_index + static_cast<std::uint64_t>(k));
    out[static_cast<std::size_t>(k)] = sample_contexts(ag, edges[static_cast<std::size_t>(k)], rng);
  }
  return out;
}

}  // namespace churn

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "churn/graph.hpp"
#include "churn/parallel.hpp"
#include "churn/rng.hpp"

namespace churn {

struct WalkConfig {
  double epsilon = 1.0;  // augmented edges need similarity > 1 - epsilon
  double p = 1.0;        // return constant
  double q = 0.05;       // in-out constant
  std::size_t walk_length = 16;
  std::size_t contexts_per_edge = 4;
  std::size_t max_augmented_per_node = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Augment {
  NodeId node;
  double similarity = 0.0;
};

// A snapshot plus same-kind similarity links. Holds a pointer to the snapshot,
// which must outlive it.
class AugmentedGraph {
 public:
  AugmentedGraph(const Snapshot& base, WalkConfig config, std::vector<std::vector<Augment>> players,
                 std::vector<std::vector<Augment>> games);

  const Snapshot& base() const noexcept { return *base_; }
  const WalkConfig& config() const noexcept { return config_; }

  // Descending similarity, ties by ascending index.
  std::span<const Augment> augments(NodeId n) const;

 private:
  const Snapshot* base_;
  WalkConfig config_;
  std::vector<std::vector<Augment>> player_augments_;
  std::vector<std::vector<Augment>> game_augments_;
};

double node_similarity(std::span<const double> a, std::span<const double> b);

AugmentedGraph build_augmented(const Snapshot& snapshot, const WalkConfig& config,
                               Execution exec = Execution::Parallel);

struct Transition {
  NodeId node;
  double probability = 0.0;
};

struct TransitionDistribution {
  // Candidates with positive probability: the return move first, then the
  // augmented neighbours, then the two-hop neighbours, in that order.
  std::vector<Transition> entries;

  // 0 for any node that is not a candidate, including every node whose kind
  // differs from the previous node's.
  double probability(NodeId n) const noexcept;
};

// Second-order step for a walker that moved prev -> cur. Throws DeadEnd when
// no candidate has positive weight.
TransitionDistribution transition_distribution(const AugmentedGraph& ag, NodeId prev, NodeId cur);

NodeId sample_transition(const TransitionDistribution& dist, Rng& rng);

// Walk that begins by traversing game -> player along `edge` and emits each
// later consecutive (player, game) pair as a context. Pairs equal to `edge`
// itself are not contexts. Stops after contexts_per_edge contexts or
// walk_length steps.
std::vector<EdgeKey> sample_contexts(const AugmentedGraph& ag, EdgeKey edge, Rng& rng);

// One walk per edge; walk k uses the stream seeded by (rng_seed, first_walk_index + k).
std::vector<std::vector<EdgeKey>> sample_contexts_batch(const AugmentedGraph& ag,
                                                        std::span<const EdgeKey> edges,
                                                        std::uint64_t first_walk_index,
                                                        Execution exec = Execution::Parallel);

Rng walk_stream(const WalkConfig& config, std::uint64_t walk_index);

}  // namespace churn

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "churn/graph.hpp"
#include "churn/metrics.hpp"
#include "churn/parallel.hpp"

namespace churn {

struct WeightedEdge {
  std::uint32_t player = 0;
  std::uint32_t game = 0;
  double weight = 0.0;
};

// Bipartite graph whose edge weights are churn probabilities.
class RelationGraph {
 public:
  // Weights must be finite and in [0, 1]; every edge endpoint must be listed.
  RelationGraph(std::vector<std::uint32_t> players, std::vector<std::uint32_t> games,
                std::vector<WeightedEdge> edges);

  // Nodes and edges of `s`, weighted by `probabilities` (parallel to s.edges()).
  static RelationGraph from_snapshot(const Snapshot& s, std::span<const double> probabilities);

  const std::vector<std::uint32_t>& players() const noexcept { return players_; }
  const std::vector<std::uint32_t>& games() const noexcept { return games_; }
  const std::vector<WeightedEdge>& edges() const noexcept { return edges_; }
  std::size_t num_nodes() const noexcept { return players_.size() + games_.size(); }

  // Node numbering used by the link-analysis kernels: players first, then games.
  struct Adjacent {
    std::uint32_t node;
    double weight;
  };
  std::span<const Adjacent> adjacent(std::uint32_t node) const;
  std::uint32_t game_node(std::size_t k) const noexcept { return static_cast<std::uint32_t>(players_.size() + k); }

 private:
  std::vector<std::uint32_t> players_;
  std::vector<std::uint32_t> games_;
  std::vector<WeightedEdge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Adjacent> adjacency_;
};

// Per-game scores, one entry per game of the relation graph, ascending game index.
using GameScores = std::vector<RankedEntry>;

GameScores simsum(const RelationGraph& rg);

enum class PageRankNormalization {
  // Each neighbour j passes on T(j) * W(i,j) / sum_l W(j,l): the share of its
  // own incident weight that goes to i.
  Sender,
  // Divide by the receiving node's incident weight sum instead. With this
  // choice every uniform vector is a fixed point, so all scores stay 1/N.
  Receiver,
};

struct PageRankConfig {
  std::size_t max_iter = 100;
  double damping = 0.85;
  double tol = 1e-12;
  PageRankNormalization normalization = PageRankNormalization::Sender;

  void validate() const;
};

struct LinkAnalysisResult {
  GameScores games;
  std::vector<double> players;  // parallel to RelationGraph::players()
  std::size_t iterations = 0;
  double last_change = 0.0;  // L1 change of the final iteration
  bool converged = false;
};

LinkAnalysisResult pagerank(const RelationGraph& rg, const PageRankConfig& config = {},
                            Execution exec = Execution::Parallel);

struct HitsConfig {
  std::size_t max_iter = 100;
  double tol = 1e-12;

  void validate() const;
};

// Authorities live on games and hubs on players. Both start at 1, are updated
// from the previous iterate, and are L2-normalized every iteration; a zero
// vector becomes uniform.
LinkAnalysisResult hits(const RelationGraph& rg, const HitsConfig& config = {},
                        Execution exec = Execution::Parallel);

// Descending score, ties by ascending game index. DataError on non-finite scores.
RankedList rank_games(GameScores scores);

// "rank,game_id,score,method" with a header line and 1-based ranks.
void write_ranked_list(const std::filesystem::path& path, const RankedList& list,
                       const std::vector<std::string>& game_ids, std::string_view method);

struct LoadedRankedList {
  RankedList list;
  std::string method;
};

// Game ids are interned into `ids` so lists read from several files share indices.
LoadedRankedList read_ranked_list(const std::filesystem::path& path,
                                  std::unordered_map<std::string, std::uint32_t>& ids);

}  // namespace churn

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace churn {

// Integer day index. Calendar parsing, if any, happens before ingestion.
using Day = std::int32_t;

enum class NodeKind : std::uint8_t { Player, Game };

struct NodeId {
  std::uint32_t index = 0;
  NodeKind kind = NodeKind::Player;

  static constexpr NodeId player(std::uint32_t i) { return {i, NodeKind::Player}; }
  static constexpr NodeId game(std::uint32_t i) { return {i, NodeKind::Game}; }

  friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

// A (player, game) pair. Used both for snapshot edges and for context edges
// that need not exist in any snapshot.
struct EdgeKey {
  std::uint32_t player = 0;
  std::uint32_t game = 0;

  friend constexpr auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& e) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(e.player) << 32) | e.game);
  }
};

// One aligned (player-slice, game-slice) pair. The cosine of the two slices is
// one component of the edge feature vector.
struct FeatureBlock {
  std::string name;
  std::size_t player_offset = 0;
  std::size_t player_length = 0;
  std::size_t game_offset = 0;
  std::size_t game_length = 0;
};

struct FeatureSchema {
  std::size_t player_dim = 0;
  std::size_t game_dim = 0;
  std::vector<FeatureBlock> blocks;

  std::size_t edge_dim() const noexcept { return blocks.size(); }

  // Throws SchemaError when a block is empty, has mismatched slice lengths, or
  // runs past the declared feature widths.
  void validate() const;
};

// The attributed bipartite graph observed on one day. Populate with the add_*
// calls, then freeze with finalize(); after that the object is read-only.
class Snapshot {
 public:
  Snapshot(Day day, std::size_t num_players, std::size_t num_games, std::size_t player_dim,
           std::size_t game_dim);

  void add_player(std::uint32_t player, std::span<const double> features);
  void add_game(std::uint32_t game, std::span<const double> features);
  void add_edge(EdgeKey edge);
  void finalize();

  Day day() const noexcept { return day_; }
  std::size_t num_players() const noexcept { return num_players_; }
  std::size_t num_games() const noexcept { return num_games_; }
  std::size_t player_dim() const noexcept { return player_dim_; }
  std::size_t game_dim() const noexcept { return game_dim_; }

  bool has_player(std::uint32_t p) const noexcept;
  bool has_game(std::uint32_t g) const noexcept;
  bool has_node(NodeId n) const noexcept;
  bool has_edge(EdgeKey e) const noexcept;

  std::span<const double> player_features(std::uint32_t p) const;
  std::span<const double> game_features(std::uint32_t g) const;
  std::span<const double> features(NodeId n) const;

  // Sorted by (player, game).
  const std::vector<EdgeKey>& edges() const noexcept { return edges_; }
  const std::vector<std::uint32_t>& players() const noexcept { return players_; }
  const std::vector<std::uint32_t>& games() const noexcept { return games_; }

  // Base-graph adjacency, ascending.
  std::span<const std::uint32_t> games_of(std::uint32_t player) const;
  std::span<const std::uint32_t> players_of(std::uint32_t game) const;
  std::span<const std::uint32_t> neighbors(NodeId n) const;

 private:
  Day day_;
  std::size_t num_players_;
  std::size_t num_games_;
  std::size_t player_dim_;
  std::size_t game_dim_;
  bool frozen_ = false;

  std::vector<char> player_present_;
  std::vector<char> game_present_;
  std::vector<double> player_features_;
  std::vector<double> game_features_;
  std::vector<std::uint32_t> players_;
  std::vector<std::uint32_t> games_;
  std::vector<EdgeKey> edges_;

  std::vector<std::size_t> player_offsets_;
  std::vector<std::uint32_t> player_adjacency_;
  std::vector<std::size_t> game_offsets_;
  std::vector<std::uint32_t> game_adjacency_;
};

// H^(t): consecutive daily snapshots plus the churn window T.
class TemporalBipartiteGraph {
 public:
  TemporalBipartiteGraph(FeatureSchema schema, int churn_window, std::vector<std::string> player_ids,
                         std::vector<std::string> game_ids, std::vector<Snapshot> snapshots);

  const FeatureSchema& schema() const noexcept { return schema_; }
  int churn_window() const noexcept { return churn_window_; }
  Day first_day() const noexcept { return snapshots_.front().day(); }
  Day last_day() const noexcept { return snapshots_.back().day(); }
  std::size_t num_days() const noexcept { return snapshots_.size(); }
  bool contains_day(Day t) const noexcept { return t >= first_day() && t <= last_day(); }

  std::size_t num_players() const noexcept { return player_ids_.size(); }
  std::size_t num_games() const noexcept { return game_ids_.size(); }
  const std::vector<std::string>& player_ids() const noexcept { return player_ids_; }
  const std::vector<std::string>& game_ids() const noexcept { return game_ids_; }

  const Snapshot& at(Day t) const;
  const std::vector<Snapshot>& snapshots() const noexcept { return snapshots_; }

  // Days on which the edge is present, ascending. Empty when never present.
  std::span<const Day> presence(EdgeKey e) const;

  // Copy restricted to days <= last. Labels computed on the copy are censored
  // at the new observation end, which is how training avoids peeking at
  // test-period activity.
  TemporalBipartiteGraph truncated(Day last) const;

 private:
  FeatureSchema schema_;
  int churn_window_;
  std::vector<std::string> player_ids_;
  std::vector<std::string> game_ids_;
  std::vector<Snapshot> snapshots_;
  std::unordered_map<EdgeKey, std::vector<Day>, EdgeKeyHash> presence_;
};

enum class LabelValue : std::uint8_t { Stay, Churn, Unknown };

struct EdgeLabel {
  LabelValue value = LabelValue::Unknown;
  bool observed = false;              // censor flag: true = observed, false = censored
  std::optional<Day> last_observed;   // latest day <= query with an observed label

  bool churned() const noexcept { return value == LabelValue::Churn; }
};

// Cosine similarity; 0 when either side has zero norm. Throws SchemaError on
// length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Per-block cosine of player and game features on day t.
std::vector<double> edge_features(const TemporalBipartiteGraph& g, EdgeKey e, Day t);
void edge_features_into(const FeatureSchema& schema, const Snapshot& s, EdgeKey e,
                        std::span<double> out);

// Label of an edge present on day i. The next-day indicator is decided by
// activity in the forward window [i+2, i+T+1]; a window that runs past the
// observation end with no activity in its observed part is censored.
EdgeLabel edge_label(const TemporalBipartiteGraph& g, EdgeKey e, Day i);

// Edges present on both day i and day i+1.
std::vector<EdgeKey> persistent_edges(const TemporalBipartiteGraph& g, Day i);

}  // namespace churn

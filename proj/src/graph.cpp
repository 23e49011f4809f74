#include "churn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "churn/error.hpp"

namespace churn {

void FeatureSchema::validate() const {
  if (blocks.empty()) throw Error(ErrorKind::SchemaError, "schema declares no feature blocks");
  for (const auto& b : blocks) {
    if (b.player_length == 0 || b.player_length != b.game_length) {
      throw Error(ErrorKind::SchemaError, "block '" + b.name + "' has mismatched or empty slices");
    }
    if (b.player_offset + b.player_length > player_dim || b.game_offset + b.game_length > game_dim) {
      throw Error(ErrorKind::SchemaError, "block '" + b.name + "' exceeds the feature width");
    }
  }
}

// --- Snapshot ---------------------------------------------------------------

Snapshot::Snapshot(Day day, std::size_t num_players, std::size_t num_games,
                   std::size_t player_dim, std::size_t game_dim)
    : day_(day),
      num_players_(num_players),
      num_games_(num_games),
      player_dim_(player_dim),
      game_dim_(game_dim),
      player_present_(num_players, 0),
      game_present_(num_games, 0),
      player_features_(num_players * player_dim, 0.0),
      game_features_(num_games * game_dim, 0.0) {}

void Snapshot::add_player(std::uint32_t p, std::span<const double> features) {
  if (frozen_) throw Error(ErrorKind::DataError, "snapshot is frozen");
  if (p >= num_players_) throw Error(ErrorKind::OutOfRange, "player index " + std::to_string(p));
  if (features.size() != player_dim_) {
    throw Error(ErrorKind::SchemaError, "player feature length " + std::to_string(features.size()) +
                                            " != " + std::to_string(player_dim_));
  }
  player_present_[p] = 1;
  std::copy(features.begin(), features.end(), player_features_.begin() + p * player_dim_);
}

void Snapshot::add_game(std::uint32_t g, std::span<const double> features) {
  if (frozen_) throw Error(ErrorKind::DataError, "snapshot is frozen");
  if (g >= num_games_) throw Error(ErrorKind::OutOfRange, "game index " + std::to_string(g));
  if (features.size() != game_dim_) {
    throw Error(ErrorKind::SchemaError, "game feature length " + std::to_string(features.size()) +
                                            " != " + std::to_string(game_dim_));
  }
  game_present_[g] = 1;
  std::copy(features.begin(), features.end(), game_features_.begin() + g * game_dim_);
}

void Snapshot::add_edge(EdgeKey e) {
  if (frozen_) throw Error(ErrorKind::DataError, "snapshot is frozen");
  edges_.push_back(e);
}

void Snapshot::finalize() {
  if (frozen_) return;
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const auto& e : edges_) {
    if (!has_player(e.player) || !has_game(e.game)) {
      throw Error(ErrorKind::NotPresent, "edge endpoint missing on day " + std::to_string(day_) +
                                             " (player " + std::to_string(e.player) + ", game " +
                                             std::to_string(e.game) + ")");
    }
  }
  players_.clear();
  games_.clear();
  for (std::uint32_t p = 0; p < num_players_; ++p)
    if (player_present_[p]) players_.push_back(p);
  for (std::uint32_t g = 0; g < num_games_; ++g)
    if (game_present_[g]) games_.push_back(g);

  player_offsets_.assign(num_players_ + 1, 0);
  game_offsets_.assign(num_games_ + 1, 0);
  for (const auto& e : edges_) {
    ++player_offsets_[e.player + 1];
    ++game_offsets_[e.game + 1];
  }
  for (std::size_t i = 0; i < num_players_; ++i) player_offsets_[i + 1] += player_offsets_[i];
  for (std::size_t i = 0; i < num_games_; ++i) game_offsets_[i + 1] += game_offsets_[i];
  player_adjacency_.resize(edges_.size());
  game_adjacency_.resize(edges_.size());
  std::vector<std::size_t> pc(player_offsets_.begin(), player_offsets_.end() - 1);
  std::vector<std::size_t> gc(game_offsets_.begin(), game_offsets_.end() - 1);
  // edges_ is sorted by (player, game), so both adjacency lists come out ascending.
  for (const auto& e : edges_) {
    player_adjacency_[pc[e.player]++] = e.game;
    game_adjacency_[gc[e.game]++] = e.player;
  }
  frozen_ = true;
}

bool Snapshot::has_player(std::uint32_t p) const noexcept {
  return p < num_players_ && player_present_[p] != 0;
}

bool Snapshot::has_game(std::uint32_t g) const noexcept {
  return g < num_games_ && game_present_[g] != 0;
}

bool Snapshot::has_node(NodeId n) const noexcept {
  return n.kind == NodeKind::Player ? has_player(n.index) : has_game(n.index);
}

bool Snapshot::has_edge(EdgeKey e) const noexcept {
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

std::span<const double> Snapshot::player_features(std::uint32_t p) const {
  if (!has_player(p)) {
    throw Error(ErrorKind::NotPresent,
                "player " + std::to_string(p) + " absent on day " + std::to_string(day_));
  }
  return {player_features_.data() + p * player_dim_, player_dim_};
}

std::span<const double> Snapshot::game_features(std::uint32_t g) const {
  if (!has_game(g)) {
    throw Error(ErrorKind::NotPresent,
                "game " + std::to_string(g) + " absent on day " + std::to_string(day_));
  }
  return {game_features_.data() + g * game_dim_, game_dim_};
}

std::span<const double> Snapshot::features(NodeId n) const {
  return n.kind == NodeKind::Player ? player_features(n.index) : game_features(n.index);
}

std::span<const std::uint32_t> Snapshot::games_of(std::uint32_t p) const {
  if (p >= num_players_ || !frozen_) return {};
  return {player_adjacency_.data() + player_offsets_[p], player_offsets_[p + 1] - player_offsets_[p]};
}

std::span<const std::uint32_t> Snapshot::players_of(std::uint32_t g) const {
  if (g >= num_games_ || !frozen_) return {};
  return {game_adjacency_.data() + game_offsets_[g], game_offsets_[g + 1] - game_offsets_[g]};
}

std::span<const std::uint32_t> Snapshot::neighbors(NodeId n) const {
  return n.kind == NodeKind::Player ? games_of(n.index) : players_of(n.index);
}

// --- TemporalBipartiteGraph -------------------------------------------------

TemporalBipartiteGraph::TemporalBipartiteGraph(FeatureSchema schema, int churn_window,
                                               std::vector<std::string> player_ids,
                                               std::vector<std::string> game_ids,
                                               std::vector<Snapshot> snapshots)
    : schema_(std::move(schema)),
      churn_window_(churn_window),
      player_ids_(std::move(player_ids)),
      game_ids_(std::move(game_ids)),
      snapshots_(std::move(snapshots)) {
  schema_.validate();
  if (churn_window_ < 1) throw Error(ErrorKind::ConfigError, "churn window must be >= 1");
  if (snapshots_.empty()) throw Error(ErrorKind::DataError, "graph has no snapshots");
  for (std::size_t k = 0; k < snapshots_.size(); ++k) {
    auto& s = snapshots_[k];
    if (k > 0 && s.day() != snapshots_[k - 1].day() + 1) {
      throw Error(ErrorKind::DataError, "snapshot days must increase by exactly 1");
    }
    if (s.num_players() != player_ids_.size() || s.num_games() != game_ids_.size() ||
        s.player_dim() != schema_.player_dim || s.game_dim() != schema_.game_dim) {
      throw Error(ErrorKind::SchemaError, "snapshot shape disagrees with the graph schema");
    }
    s.finalize();
    for (const auto& e : s.edges()) presence_[e].push_back(s.day());
  }
}

const Snapshot& TemporalBipartiteGraph::at(Day t) const {
  if (!contains_day(t)) throw Error(ErrorKind::OutOfRange, "day " + std::to_string(t));
  return snapshots_[static_cast<std::size_t>(t - first_day())];
}

std::span<const Day> TemporalBipartiteGraph::presence(EdgeKey e) const {
  auto it = presence_.find(e);
  if (it == presence_.end()) return {};
  return it->second;
}

TemporalBipartiteGraph TemporalBipartiteGraph::truncated(Day last) const {
  if (!contains_day(last)) throw Error(ErrorKind::OutOfRange, "truncation day " + std::to_string(last));
  std::vector<Snapshot> kept(snapshots_.begin(),
                             snapshots_.begin() + static_cast<std::ptrdiff_t>(last - first_day() + 1));
  return TemporalBipartiteGraph(schema_, churn_window_, player_ids_, game_ids_, std::move(kept));
}

// --- Operations -------------------------------------------------------------

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::SchemaError, "cosine of vectors with lengths " + std::to_string(a.size()) +
                                            " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

void edge_features_into(const FeatureSchema& schema, const Snapshot& s, EdgeKey e,
                        std::span<double> out) {
  const auto xu = s.player_features(e.player);
  const auto xv = s.game_features(e.game);
  if (xu.size() != schema.player_dim || xv.size() != schema.game_dim ||
      out.size() != schema.blocks.size()) {
    throw Error(ErrorKind::SchemaError, "feature widths disagree with the block schema");
  }
  for (std::size_t k = 0; k < schema.blocks.size(); ++k) {
    const auto& b = schema.blocks[k];
    out[k] = cosine_similarity(xu.subspan(b.player_offset, b.player_length),
                               xv.subspan(b.game_offset, b.game_length));
  }
}

std::vector<double> edge_features(const TemporalBipartiteGraph& g, EdgeKey e, Day t) {
  std::vector<double> z(g.schema().edge_dim());
  edge_features_into(g.schema(), g.at(t), e, z);
  return z;
}

namespace {

// Label at day i given the edge's presence days; assumes presence contains i.
bool label_observed(std::span<const Day> days, Day i, int window, Day end, bool* stay) {
  const Day lo = i + 2;
  const Day hi = i + window + 1;
  const auto it = std::lower_bound(days.begin(), days.end(), lo);
  const bool played = it != days.end() && *it <= std::min(hi, end);
  if (stay) *stay = played;
  return played || hi <= end;
}

}  // namespace

EdgeLabel edge_label(const TemporalBipartiteGraph& g, EdgeKey e, Day i) {
  const Snapshot& s = g.at(i);
  if (!s.has_edge(e)) {
    throw Error(ErrorKind::NoEdge, "edge (" + std::to_string(e.player) + ", " +
                                       std::to_string(e.game) + ") absent on day " + std::to_string(i));
  }
  const auto days = g.presence(e);
  const Day end = g.last_day();
  const int window = g.churn_window();

  EdgeLabel label;
  bool stay = false;
  label.observed = label_observed(days, i, window, end, &stay);
  label.value = !label.observed ? LabelValue::Unknown : (stay ? LabelValue::Stay : LabelValue::Churn);

  auto it = std::upper_bound(days.begin(), days.end(), i);
  while (it != days.begin()) {
    --it;
    if (label_observed(days, *it, window, end, nullptr)) {
      label.last_observed = *it;
      break;
    }
  }
  return label;
}

std::vector<EdgeKey> persistent_edges(const TemporalBipartiteGraph& g, Day i) {
  if (!g.contains_day(i) || !g.contains_day(i + 1)) {
    throw Error(ErrorKind::OutOfRange, "persistent edges need days " + std::to_string(i) + " and " +
                                           std::to_string(i + 1));
  }
  const auto& a = g.at(i).edges();
  const auto& b = g.at(i + 1).edges();
  std::vector<EdgeKey> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace churn

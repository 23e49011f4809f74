#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "churn/graph.hpp"

namespace churn {

struct SynthConfig {
  std::size_t num_players = 200;
  std::size_t num_games = 20;
  std::size_t num_days = 30;
  int churn_window = 3;
  std::size_t latent_dim = 2;
  double tenure_coefficient = 0.1;  // per day of tenure, on the logit scale
  // Tenure stops growing after this many days, in the hazard and the features.
  double tenure_cap = std::numeric_limits<double>::infinity();
  double base_hazard = 0.05;        // hazard at zero interaction and zero tenure
  double noise = 0.05;              // stationary sd of the feature noise
  std::uint64_t seed = 0;

  // Weight of the player-game affinity sum_k cos(angle_u,k - angle_v,k) in
  // the hazard logit; negative values make affinity protect against churn.
  double interaction_scale = 1.5;
  // Player angles are uniform on [-spread*pi, spread*pi]; games use the full
  // circle. A small spread gives every game a distinct mean affinity.
  double player_spread = 1.0;
  std::size_t games_per_player = 3;
  double popularity_exponent = 1.0;  // Zipf exponent of game popularity
  double noise_persistence = 0.9;    // day-to-day autocorrelation of the noise
  // Players join on days [-history_days, num_days - 1]. A background_share
  // of them join uniformly; the rest follow a Gaussian wave around join_peak.
  // With history, the first snapshot already holds players with tenure.
  std::size_t history_days = 0;
  double background_share = 1.0;
  double join_peak = 0.0;
  double join_spread = 1.0;
  // Daily chance that a churned edge returns once it has been idle for
  // churn_window + 1 days; 0 makes churn final.
  double rejoin_rate = 0.0;
  std::optional<std::uint64_t> churn_seed;  // defaults to seed

  void validate() const;
};

struct OracleHazard {
  EdgeKey edge;
  Day day = 0;
  double hazard = 0.0;
};

struct SynthResult {
  TemporalBipartiteGraph graph;
  // Probability that `day` is the edge's last day, for every present edge,
  // ordered by day and then by edge.
  std::vector<OracleHazard> oracle;

  // Hazards parallel to graph.at(day).edges().
  std::vector<double> hazards_on(Day day) const;
};

// Latent player and game directions drive a logistic daily hazard that grows
// with tenure. Node features are noisy views of the latents plus a tenure
// block; the noise follows an AR(1) process so features drift slowly.
// Randomness for the world (latents, joins, game choices, noise) comes from
// `seed`; the churn draws come from `churn_seed`.
SynthResult generate(const SynthConfig& config);

struct ChurnCount {
  std::uint32_t game = 0;
  std::size_t count = 0;
};

// |N_v(day) \ N_v(day+1)| for every game present on `day`, ascending game index.
std::vector<ChurnCount> realized_churn_counts(const TemporalBipartiteGraph& g, Day day);

// player_id,game_id,day,hazard
void write_oracle(const std::filesystem::path& path, const SynthResult& result);

// Reads write_oracle output against the ids of `g`, sorted by (day, edge).
std::vector<OracleHazard> read_oracle(const std::filesystem::path& path, const TemporalBipartiteGraph& g);

// Hazards parallel to g.at(day).edges(); DataError if an edge is missing.
std::vector<double> oracle_hazards_on(std::span<const OracleHazard> oracle, const TemporalBipartiteGraph& g,
                                      Day day);

}  // namespace churn

#include "churn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_map>

#include "churn/dataset_io.hpp"
#include "churn/error.hpp"
#include "churn/rng.hpp"

namespace churn {

namespace {

constexpr std::uint64_t kLatentTag = 0x4c41544eULL;  // "LATN"
constexpr std::uint64_t kJoinTag = 0x4a4f494eULL;    // "JOIN"
constexpr std::uint64_t kPickTag = 0x5049434bULL;    // "PICK"
constexpr std::uint64_t kNoiseTag = 0x4e4f4953ULL;   // "NOIS"
constexpr std::uint64_t kChurnTag = 0x4348524eULL;   // "CHRN"

std::string padded(char prefix, std::size_t k, std::size_t total) {
  const auto width = std::to_string(total > 0 ? total - 1 : 0).size();
  auto s = std::to_string(k);
  return std::string(1, prefix) + std::string(width - std::min(width, s.size()), '0') + s;
}

// AR(1) noise with stationary sd `sd`, one row of `dim` values per day.
std::vector<double> noise_path(Rng& rng, std::size_t days, std::size_t dim, double sd, double rho) {
  std::vector<double> out(days * dim, 0.0);
  if (sd == 0.0) return out;
  const double innovation = sd * std::sqrt(1.0 - rho * rho);
  for (std::size_t j = 0; j < dim; ++j) out[j] = sd * standard_normal(rng);
  for (std::size_t t = 1; t < days; ++t)
    for (std::size_t j = 0; j < dim; ++j)
      out[t * dim + j] = rho * out[(t - 1) * dim + j] + innovation * standard_normal(rng);
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigError, m); };
  if (num_players == 0) fail("num_players must be positive");
  if (num_games == 0) fail("num_games must be positive");
  if (num_days == 0) fail("num_days must be positive");
  if (churn_window < 1) fail("churn_window must be at least 1");
  if (latent_dim == 0) fail("latent_dim must be positive");
  if (!(tenure_coefficient >= 0.0)) fail("tenure_coefficient must be non-negative");
  if (!(tenure_cap >= 0.0)) fail("tenure_cap must be non-negative");
  if (!(base_hazard > 0.0 && base_hazard < 1.0)) fail("base_hazard must lie in (0, 1)");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
  if (!std::isfinite(interaction_scale)) fail("interaction_scale must be finite");
  if (games_per_player == 0 || games_per_player > num_games) fail("games_per_player must lie in [1, num_games]");
  if (!(popularity_exponent >= 0.0)) fail("popularity_exponent must be non-negative");
  if (!(noise_persistence >= 0.0 && noise_persistence < 1.0)) fail("noise_persistence must lie in [0, 1)");
  if (!std::isfinite(join_peak)) fail("join_peak must be finite");
  if (!(join_spread > 0.0 && std::isfinite(join_spread))) fail("join_spread must be positive");
  if (!(rejoin_rate >= 0.0 && rejoin_rate <= 1.0)) fail("rejoin_rate must lie in [0, 1]");
  if (!(background_share >= 0.0 && background_share <= 1.0)) fail("background_share must lie in [0, 1]");
  if (!(player_spread >= 0.0 && player_spread <= 1.0)) fail("player_spread must lie in [0, 1]");
}

std::vector<double> oracle_hazards_on(std::span<const OracleHazard> oracle, const TemporalBipartiteGraph& g,
                                      Day day) {
  const auto& edges = g.at(day).edges();
  const auto lo = std::lower_bound(oracle.begin(), oracle.end(), day,
                                   [](const OracleHazard& h, Day d) { return h.day < d; });
  std::vector<double> out;
  out.reserve(edges.size());
  auto it = lo;
  for (const auto& e : edges) {
    if (it == oracle.end() || it->day != day || it->edge != e) {
      throw Error(ErrorKind::DataError, "oracle does not cover every edge of day " + std::to_string(day));
    }
    out.push_back(it->hazard);
    ++it;
  }
  return out;
}

std::vector<double> SynthResult::hazards_on(Day day) const { return oracle_hazards_on(oracle, graph, day); }

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const std::size_t P = config.num_players;
  const std::size_t G = config.num_games;
  const std::size_t D = config.num_days;
  const std::size_t L = config.latent_dim;
  const std::size_t dim = 2 * L + 2;

  // Latent directions, one angle per dimension.
  auto latent_rng = make_stream(config.seed, kLatentTag);
  std::vector<double> player_angle(P * L), game_angle(G * L);
  for (double& a : player_angle) a = config.player_spread * std::numbers::pi * (2.0 * uniform01(latent_rng) - 1.0);
  for (double& a : game_angle) a = 2.0 * std::numbers::pi * uniform01(latent_rng);

  // Join days on [-history_days, num_days - 1]: a uniform background share
  // plus a Gaussian wave around join_peak; players are indexed in join order so node indices
  // follow first appearance in the written files.
  const auto H = static_cast<std::int64_t>(config.history_days);
  std::vector<double> join_weight;
  for (std::int64_t j = -H; j < static_cast<std::int64_t>(D); ++j) {
    const double z = (static_cast<double>(j) - config.join_peak) / config.join_spread;
    join_weight.push_back(std::exp(-0.5 * z * z));
  }
  const double wave_total = std::accumulate(join_weight.begin(), join_weight.end(), 0.0);
  const double days_total = static_cast<double>(join_weight.size());
  for (auto& w : join_weight) {
    w = config.background_share / days_total + (1.0 - config.background_share) * w / wave_total;
  }
  std::vector<double> join_cdf(join_weight.size());
  std::partial_sum(join_weight.begin(), join_weight.end(), join_cdf.begin());
  auto join_rng = make_stream(config.seed, kJoinTag);
  std::vector<std::int64_t> join(P);
  for (auto& j : join) {
    const double x = uniform01(join_rng) * join_cdf.back();
    const auto k = std::upper_bound(join_cdf.begin(), join_cdf.end(), x) - join_cdf.begin();
    j = std::min<std::int64_t>(k, static_cast<std::int64_t>(join_cdf.size()) - 1) - H;
  }
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return join[a] < join[b]; });
  {
    std::vector<std::int64_t> j2(P);
    std::vector<double> a2(P * L);
    for (std::size_t k = 0; k < P; ++k) {
      j2[k] = join[order[k]];
      std::copy_n(player_angle.begin() + static_cast<std::ptrdiff_t>(order[k] * L), L,
                  a2.begin() + static_cast<std::ptrdiff_t>(k * L));
    }
    join = std::move(j2);
    player_angle = std::move(a2);
  }
  auto first_day = [&](std::size_t u) { return static_cast<std::size_t>(std::max<std::int64_t>(join[u], 0)); };

  // Zipf popularity, sampled without replacement.
  // Popularity ranks are a seeded permutation of game indices, so index
  // tie-breaks in rankings carry no popularity information.
  auto pick_rng = make_stream(config.seed, kPickTag);
  std::vector<std::size_t> popularity_rank(G);
  std::iota(popularity_rank.begin(), popularity_rank.end(), 0);
  for (std::size_t k = G; k > 1; --k) std::swap(popularity_rank[k - 1], popularity_rank[uniform_index(pick_rng, k)]);
  std::vector<double> popularity(G);
  for (std::size_t v = 0; v < G; ++v) {
    popularity[v] = std::pow(static_cast<double>(popularity_rank[v] + 1), -config.popularity_exponent);
  }
  std::vector<std::vector<std::uint32_t>> picks(P);
  for (std::size_t u = 0; u < P; ++u) {
    auto w = popularity;
    for (std::size_t c = 0; c < config.games_per_player; ++c) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double x = uniform01(pick_rng) * total;
      std::size_t v = 0;
      while (v + 1 < G && (w[v] == 0.0 || x >= w[v])) {
        x -= w[v];
        ++v;
      }
      while (w[v] == 0.0) --v;  // guard against rounding past the last positive weight
      picks[u].push_back(static_cast<std::uint32_t>(v));
      w[v] = 0.0;
    }
    std::sort(picks[u].begin(), picks[u].end());
  }

  // Churn realization: an edge is played daily from the join day until its
  // hazard fires, which becomes its last day. After churn_window + 1 idle
  // days it may return at rejoin_rate per day, starting a new spell whose
  // tenure counts from zero. Days before 0 are simulated but not recorded.
  const std::uint64_t churn_seed = config.churn_seed.value_or(config.seed);
  const double bias = std::log(config.base_hazard / (1.0 - config.base_hazard));
  const auto cooldown = static_cast<std::int64_t>(config.churn_window) + 1;
  std::vector<std::vector<EdgeKey>> day_edges(D);
  std::vector<OracleHazard> oracle;
  for (std::size_t u = 0; u < P; ++u) {
    for (const auto v : picks[u]) {
      auto rng = make_stream(churn_seed, kChurnTag, (static_cast<std::uint64_t>(u) << 32) | v);
      const EdgeKey e{static_cast<std::uint32_t>(u), v};
      double interaction = 0.0;
      for (std::size_t k = 0; k < L; ++k) interaction += std::cos(player_angle[u * L + k] - game_angle[v * L + k]);
      interaction *= config.interaction_scale;
      bool active = true;
      std::int64_t spell_start = join[u], idle_since = 0;
      for (std::int64_t t = join[u]; t < static_cast<std::int64_t>(D); ++t) {
        if (!active) {
          if (config.rejoin_rate <= 0.0) break;
          if (t - idle_since < cooldown || uniform01(rng) >= config.rejoin_rate) continue;
          active = true;
          spell_start = t;
        }
        const double age = std::min(static_cast<double>(t - spell_start), config.tenure_cap);
        const double h = 1.0 / (1.0 + std::exp(-(interaction + config.tenure_coefficient * age + bias)));
        if (t >= 0) {
          day_edges[static_cast<std::size_t>(t)].push_back(e);
          oracle.push_back({e, static_cast<Day>(t), h});
        }
        if (uniform01(rng) < h) {
          active = false;
          idle_since = t + 1;
        }
      }
    }
  }
  std::sort(oracle.begin(), oracle.end(), [](const OracleHazard& a, const OracleHazard& b) {
    return std::tie(a.day, a.edge) < std::tie(b.day, b.edge);
  });

  // Features: latent unit vectors, linear tenure, plus slow noise.
  FeatureSchema schema;
  schema.player_dim = dim;
  schema.game_dim = dim;
  for (std::size_t k = 0; k < L; ++k) schema.blocks.push_back({"latent" + std::to_string(k), 2 * k, 2, 2 * k, 2});
  schema.blocks.push_back({"tenure", 2 * L, 2, 2 * L, 2});

  std::vector<Snapshot> snaps;
  snaps.reserve(D);
  for (std::size_t t = 0; t < D; ++t) snaps.emplace_back(static_cast<Day>(t), P, G, dim, dim);

  std::vector<double> x(dim);
  for (std::size_t u = 0; u < P; ++u) {
    const std::size_t days = D - first_day(u);
    auto rng = make_stream(config.seed, kNoiseTag, u);
    const auto eps = noise_path(rng, days, dim, config.noise, config.noise_persistence);
    for (std::size_t s = 0; s < days; ++s) {
      for (std::size_t k = 0; k < L; ++k) {
        x[2 * k] = std::cos(player_angle[u * L + k]);
        x[2 * k + 1] = std::sin(player_angle[u * L + k]);
      }
      const auto t = first_day(u) + s;
      x[2 * L] = std::min(static_cast<double>(static_cast<std::int64_t>(t) - join[u]), config.tenure_cap) / 7.0;
      x[2 * L + 1] = 1.0;
      for (std::size_t j = 0; j < dim; ++j) x[j] += eps[s * dim + j];
      snaps[t].add_player(static_cast<std::uint32_t>(u), x);
    }
  }
  for (std::size_t v = 0; v < G; ++v) {
    auto rng = make_stream(config.seed, kNoiseTag, (std::uint64_t{1} << 40) | v);
    const auto eps = noise_path(rng, D, dim, config.noise, config.noise_persistence);
    for (std::size_t t = 0; t < D; ++t) {
      for (std::size_t k = 0; k < L; ++k) {
        x[2 * k] = std::cos(game_angle[v * L + k]);
        x[2 * k + 1] = std::sin(game_angle[v * L + k]);
      }
      x[2 * L] = 0.0;
      x[2 * L + 1] = 1.0;
      for (std::size_t j = 0; j < dim; ++j) x[j] += eps[t * dim + j];
      snaps[t].add_game(static_cast<std::uint32_t>(v), x);
    }
  }
  for (std::size_t t = 0; t < D; ++t)
    for (const auto& e : day_edges[t]) snaps[t].add_edge(e);

  std::vector<std::string> player_ids(P), game_ids(G);
  for (std::size_t u = 0; u < P; ++u) player_ids[u] = padded('p', u, P);
  for (std::size_t v = 0; v < G; ++v) game_ids[v] = padded('g', v, G);

  return SynthResult{TemporalBipartiteGraph(std::move(schema), config.churn_window, std::move(player_ids),
                                            std::move(game_ids), std::move(snaps)),
                     std::move(oracle)};
}

std::vector<ChurnCount> realized_churn_counts(const TemporalBipartiteGraph& g, Day day) {
  if (!g.contains_day(day) || !g.contains_day(day + 1)) {
    throw Error(ErrorKind::OutOfRange, "churn counts need days " + std::to_string(day) + " and " +
                                           std::to_string(day + 1));
  }
  const Snapshot& now = g.at(day);
  const Snapshot& next = g.at(day + 1);
  std::vector<ChurnCount> out;
  out.reserve(now.games().size());
  for (const auto v : now.games()) {
    std::size_t lost = 0;
    for (const auto u : now.players_of(v))
      if (!next.has_edge({u, v})) ++lost;
    out.push_back({v, lost});
  }
  return out;
}

void write_oracle(const std::filesystem::path& path, const SynthResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "player_id,game_id,day,hazard\n";
  const auto& g = result.graph;
  for (const auto& h : result.oracle) {
    out << g.player_ids()[h.edge.player] << ',' << g.game_ids()[h.edge.game] << ',' << h.day << ','
        << format_double(h.hazard) << '\n';
  }
}

std::vector<OracleHazard> read_oracle(const std::filesystem::path& path, const TemporalBipartiteGraph& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::unordered_map<std::string, std::uint32_t> players, games;
  for (std::size_t k = 0; k < g.player_ids().size(); ++k) players.emplace(g.player_ids()[k], static_cast<std::uint32_t>(k));
  for (std::size_t k = 0; k < g.game_ids().size(); ++k) games.emplace(g.game_ids()[k], static_cast<std::uint32_t>(k));
  std::string line;
  if (!std::getline(in, line) || line != "player_id,game_id,day,hazard") {
    throw Error(ErrorKind::SchemaError, path.string() + ": expected header player_id,game_id,day,hazard");
  }
  std::vector<OracleHazard> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw Error(ErrorKind::SchemaError, path.string() + ": expected 4 fields");
    const auto p = players.find(std::string(f[0]));
    const auto v = games.find(std::string(f[1]));
    if (p == players.end() || v == games.end()) throw Error(ErrorKind::DataError, path.string() + ": unknown id");
    const double day = parse_double(f[2]);
    out.push_back({{p->second, v->second}, static_cast<Day>(day), parse_double(f[3])});
  }
  std::sort(out.begin(), out.end(), [](const OracleHazard& a, const OracleHazard& b) {
    return std::tie(a.day, a.edge) < std::tie(b.day, b.edge);
  });
  return out;
}

}  // namespace churn

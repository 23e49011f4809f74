#include "churn/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "churn/error.hpp"

namespace churn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw Error(ErrorKind::NumericError, "cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::DataError, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

namespace {

Day parse_day(std::string_view text) {
  Day d = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::DataError, "bad day index '" + std::string(text) + "'");
  }
  return d;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + p.string());
  return out;
}

struct FeatureRow {
  std::uint32_t node;
  Day day;
  std::vector<double> values;
};

std::vector<FeatureRow> read_feature_file(const fs::path& p, std::size_t dim,
                                          std::vector<std::string>& ids,
                                          std::unordered_map<std::string, std::uint32_t>& index) {
  auto in = open_in(p);
  std::string line;
  std::getline(in, line);  // header
  std::vector<FeatureRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != dim + 2) {
      throw Error(ErrorKind::SchemaError, p.filename().string() + ":" + std::to_string(lineno) +
                                              " has " + std::to_string(cells.size() - 2) +
                                              " features, schema declares " + std::to_string(dim));
    }
    std::string id(cells[0]);
    auto [it, inserted] = index.try_emplace(id, static_cast<std::uint32_t>(ids.size()));
    if (inserted) ids.push_back(id);
    FeatureRow row{it->second, parse_day(cells[1]), {}};
    row.values.reserve(dim);
    for (std::size_t k = 0; k < dim; ++k) row.values.push_back(parse_double(cells[k + 2]));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TemporalBipartiteGraph load_dataset(const fs::path& dir) {
  json meta;
  try {
    auto in = open_in(dir / dataset_files::kSchema);
    in >> meta;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("schema.json: ") + e.what());
  }

  FeatureSchema schema;
  int window = 0;
  Day first = 0, last = 0;
  try {
    schema.player_dim = meta.at("player_dim").get<std::size_t>();
    schema.game_dim = meta.at("game_dim").get<std::size_t>();
    for (const auto& b : meta.at("blocks")) {
      schema.blocks.push_back({b.value("name", std::string{}), b.at("player_offset").get<std::size_t>(),
                               b.at("player_length").get<std::size_t>(),
                               b.at("game_offset").get<std::size_t>(),
                               b.at("game_length").get<std::size_t>()});
    }
    window = meta.at("churn_window").get<int>();
    first = meta.at("first_day").get<Day>();
    last = meta.at("last_day").get<Day>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("schema.json: ") + e.what());
  }
  schema.validate();
  if (last < first) throw Error(ErrorKind::SchemaError, "last_day precedes first_day");

  std::vector<std::string> player_ids, game_ids;
  std::unordered_map<std::string, std::uint32_t> player_index, game_index;
  auto player_rows = read_feature_file(dir / dataset_files::kPlayers, schema.player_dim, player_ids,
                                       player_index);
  auto game_rows =
      read_feature_file(dir / dataset_files::kGames, schema.game_dim, game_ids, game_index);

  const auto num_days = static_cast<std::size_t>(last - first + 1);
  std::vector<Snapshot> snaps;
  snaps.reserve(num_days);
  for (std::size_t k = 0; k < num_days; ++k) {
    snaps.emplace_back(first + static_cast<Day>(k), player_ids.size(), game_ids.size(),
                       schema.player_dim, schema.game_dim);
  }
  auto snapshot_for = [&](Day d, const std::string& what) -> Snapshot& {
    if (d < first || d > last) {
      throw Error(ErrorKind::OutOfRange, what + " on day " + std::to_string(d) +
                                             " outside the declared observation window");
    }
    return snaps[static_cast<std::size_t>(d - first)];
  };
  for (const auto& r : player_rows) snapshot_for(r.day, "player row").add_player(r.node, r.values);
  for (const auto& r : game_rows) snapshot_for(r.day, "game row").add_game(r.node, r.values);

  auto in = open_in(dir / dataset_files::kPlays);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 3) throw Error(ErrorKind::DataError, "plays.csv row needs user_id,game_id,day");
    const auto pu = player_index.find(std::string(cells[0]));
    const auto gv = game_index.find(std::string(cells[1]));
    if (pu == player_index.end() || gv == game_index.end()) {
      throw Error(ErrorKind::NotPresent, "play record references an unknown node: " + line);
    }
    snapshot_for(parse_day(cells[2]), "play").add_edge({pu->second, gv->second});
  }

  return TemporalBipartiteGraph(std::move(schema), window, std::move(player_ids),
                                std::move(game_ids), std::move(snaps));
}

void save_dataset(const TemporalBipartiteGraph& g, const fs::path& dir) {
  fs::create_directories(dir);
  json meta;
  meta["version"] = 1;
  meta["churn_window"] = g.churn_window();
  meta["first_day"] = g.first_day();
  meta["last_day"] = g.last_day();
  meta["player_dim"] = g.schema().player_dim;
  meta["game_dim"] = g.schema().game_dim;
  meta["blocks"] = json::array();
  for (const auto& b : g.schema().blocks) {
    meta["blocks"].push_back({{"name", b.name},
                              {"player_offset", b.player_offset},
                              {"player_length", b.player_length},
                              {"game_offset", b.game_offset},
                              {"game_length", b.game_length}});
  }
  {
    auto out = open_out(dir / dataset_files::kSchema);
    out << meta.dump(2) << '\n';
  }

  auto write_features = [&](std::string_view file, std::string_view id_col, std::size_t dim,
                            bool players) {
    auto out = open_out(dir / file);
    out << id_col << ",day";
    for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
    out << '\n';
    // Emit every id once on the first day it appears so indices are preserved
    // by first-appearance order on reload.
    const auto n = players ? g.num_players() : g.num_games();
    std::vector<char> emitted(n, 0);
    std::vector<std::uint32_t> order;
    for (const auto& s : g.snapshots()) {
      for (auto id : players ? s.players() : s.games()) {
        if (!emitted[id]) {
          emitted[id] = 1;
          order.push_back(id);
        }
      }
    }
    std::vector<std::size_t> rank(n, 0);
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    for (std::size_t id = 0; id < n; ++id) {
      if (!emitted[id]) {
        throw Error(ErrorKind::DataError, "node never present; cannot be serialized");
      }
      if (rank[id] != id) {
        throw Error(ErrorKind::DataError, "node indices are not in first-appearance order");
      }
    }
    for (const auto& s : g.snapshots()) {
      for (auto id : players ? s.players() : s.games()) {
        out << (players ? g.player_ids()[id] : g.game_ids()[id]) << ',' << s.day();
        const auto f = players ? s.player_features(id) : s.game_features(id);
        for (double x : f) out << ',' << format_double(x);
        out << '\n';
      }
    }
  };
  write_features(dataset_files::kPlayers, "player_id", g.schema().player_dim, true);
  write_features(dataset_files::kGames, "game_id", g.schema().game_dim, false);

  auto out = open_out(dir / dataset_files::kPlays);
  out << "user_id,game_id,day\n";
  for (const auto& s : g.snapshots()) {
    for (const auto& e : s.edges()) {
      out << g.player_ids()[e.player] << ',' << g.game_ids()[e.game] << ',' << s.day() << '\n';
    }
  }
}

}  // namespace churn

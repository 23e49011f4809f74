#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "churn/graph.hpp"

namespace churn {

// On-disk dataset layout (one directory):
//
//   schema.json   {"version":1, "churn_window":T, "first_day":a, "last_day":b,
//                  "player_dim":n_u, "game_dim":n_v,
//                  "blocks":[{"name":..., "player_offset":..., "player_length":...,
//                             "game_offset":..., "game_length":...}, ...]}
//   players.csv   player_id,day,f0,...,f{n_u-1}   one row per player present that day
//   games.csv     game_id,day,f0,...,f{n_v-1}     one row per game present that day
//   plays.csv     user_id,game_id,day[,extra context columns are ignored]
//
// Node indices follow first appearance in players.csv / games.csv.
namespace dataset_files {
inline constexpr std::string_view kSchema = "schema.json";
inline constexpr std::string_view kPlayers = "players.csv";
inline constexpr std::string_view kGames = "games.csv";
inline constexpr std::string_view kPlays = "plays.csv";
}  // namespace dataset_files

TemporalBipartiteGraph load_dataset(const std::filesystem::path& dir);
void save_dataset(const TemporalBipartiteGraph& g, const std::filesystem::path& dir);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double x);
double parse_double(std::string_view text);
std::vector<std::string_view> split_csv_line(std::string_view line);

}  // namespace churn

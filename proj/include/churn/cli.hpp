#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "churn/rank.hpp"
#include "churn/synth.hpp"
#include "churn/train.hpp"

namespace churn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

// Inclusive day range; unset ends fall back to the test days of the split.
struct DayRange {
  std::optional<Day> from;
  std::optional<Day> to;
};

struct SynthCommand {
  SynthConfig config;
  std::filesystem::path out;
};

// Dataset files plus oracle.csv in `out`.
void cmd_synth(const SynthCommand& cmd);

struct TrainCommand {
  std::filesystem::path data;
  std::filesystem::path out;
  TrainConfig config;
};

// Writes out/checkpoint.json after every epoch (epoch 0 is the initialization)
// and one metrics.jsonl line per epoch. A numeric failure leaves the last
// completed checkpoint in place.
TrainResult cmd_train(const TrainCommand& cmd);

struct PredictCommand {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  DayRange days;
};

// player_id,game_id,day,probability,churned,observed
void cmd_predict(const PredictCommand& cmd);

struct TruthCommand {
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> checkpoint;  // supplies the split
  DayRange days;
};

// truth_day<NNN>.csv ranked by realized churn counts, for days with a next day.
void cmd_truth(const TruthCommand& cmd);

struct RankCommand {
  std::filesystem::path data;
  std::filesystem::path out;
  std::string method;  // simsum, pagerank or hits
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> oracle;  // rank from oracle hazards instead of a model
  PageRankConfig pagerank;
  HitsConfig hits;
  DayRange days;
};

// <method>_day<NNN>.csv per selected day.
void cmd_rank(const RankCommand& cmd);

struct EvalCommand {
  std::filesystem::path pred_dir;
  std::filesystem::path truth_dir;
  std::vector<std::string> methods;
  std::optional<std::filesystem::path> predictions;  // cmd_predict output, for AUC/precision/recall
  std::filesystem::path out;
};

struct EvalRecord {
  std::string scope;  // "day", "mean" or "all"
  std::optional<Day> day;
  std::string method;
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;  // days averaged, or labeled rows
};

// Rank metrics per day and their means over days, as JSON lines.
std::vector<EvalRecord> cmd_eval(const EvalCommand& cmd);

std::vector<std::size_t> k_grid(std::size_t n);
std::string ranked_list_name(std::string_view method, Day day);

// Parses argv (a leading program name included) and runs one subcommand.
int run(int argc, const char* const* argv);

}  // namespace churn::cli

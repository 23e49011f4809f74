#include "churn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "churn/checkpoint.hpp"
#include "churn/dataset_io.hpp"
#include "churn/error.hpp"
#include "churn/metrics.hpp"
#include "churn/parallel.hpp"

namespace churn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

// Explicit range if given, otherwise the test days of the split (from the
// checkpoint when it carries one). Days outside the graph are dropped.
std::vector<Day> select_days(const TemporalBipartiteGraph& g, const DayRange& range,
                             const std::optional<Split>& split) {
  std::vector<Day> days;
  if (range.from || range.to) {
    const Day lo = std::max(range.from.value_or(g.first_day()), g.first_day());
    const Day hi = std::min(range.to.value_or(g.last_day()), g.last_day());
    for (Day d = lo; d <= hi; ++d) days.push_back(d);
    return days;
  }
  return split ? split->test : chronological_split(g, TrainConfig{}.split_fraction).test;
}

std::optional<Split> checkpoint_split(const std::optional<fs::path>& path) {
  if (!path) return std::nullopt;
  return load_checkpoint(*path).meta.split;
}

std::optional<Day> parse_day_suffix(std::string_view name, std::string_view prefix) {
  if (name.size() <= prefix.size() + 4 || name.substr(0, prefix.size()) != prefix ||
      name.substr(name.size() - 4) != ".csv") {
    return std::nullopt;
  }
  const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - 4);
  Day day = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), day);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return day;
}

std::map<Day, fs::path> list_files(const fs::path& dir, std::string_view method) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "not a directory: " + dir.string());
  const std::string prefix = std::string(method) + "_day";
  std::map<Day, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (const auto day = parse_day_suffix(name, prefix)) out.emplace(*day, entry.path());
  }
  return out;
}

json record_json(const EvalRecord& r) {
  json j;
  j["scope"] = r.scope;
  if (r.day) j["day"] = *r.day;
  j["method"] = r.method;
  j["metric"] = r.metric;
  j["value"] = r.value;
  if (r.scope != "day") j["count"] = r.count;
  return j;
}

std::vector<EvalRecord> prediction_records(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "player_id,game_id,day,probability,churned,observed") {
    throw Error(ErrorKind::SchemaError, path.string() + ": unexpected header");
  }
  std::vector<ScoredLabel> labeled;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw Error(ErrorKind::SchemaError, path.string() + ": expected 6 fields");
    if (f[5] != "1") continue;
    labeled.push_back({parse_double(f[3]), f[4] == "1"});
  }
  std::vector<EvalRecord> out;
  const auto add = [&](const char* metric, std::optional<double> v) {
    if (v) out.push_back({"all", std::nullopt, "predictions", metric, *v, labeled.size()});
  };
  add("auc", auc(labeled));
  const auto pr = precision_recall(labeled);
  add("precision", pr.precision);
  add("recall", pr.recall);
  return out;
}

}  // namespace

std::vector<std::size_t> k_grid(std::size_t n) {
  std::vector<std::size_t> ks;
  for (std::size_t k : {5, 10, 20, 50, 100, 200, 500}) {
    const std::size_t capped = std::min(k, n);
    if (capped >= 1 && (ks.empty() || ks.back() != capped)) ks.push_back(capped);
  }
  return ks;
}

std::string ranked_list_name(std::string_view method, Day day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_day%03d.csv", static_cast<int>(day));
  return std::string(method) + buf;
}

void cmd_synth(const SynthCommand& cmd) {
  const auto result = generate(cmd.config);
  save_dataset(result.graph, cmd.out);
  write_oracle(cmd.out / "oracle.csv", result);
}

TrainResult cmd_train(const TrainCommand& cmd) {
  cmd.config.validate();
  const auto g = load_dataset(cmd.data);
  const auto split = chronological_split(g, cmd.config.split_fraction);
  fs::create_directories(cmd.out);
  auto log = open_out(cmd.out / "metrics.jsonl");
  const auto ckpt = cmd.out / "checkpoint.json";
  return train(g, cmd.config, [&](const ModelParams& params, const EpochMetrics& m) {
    save_checkpoint(ckpt, params, {cmd.config.seed, m.epoch, split});
    json j;
    j["epoch"] = m.epoch;
    j["lr"] = m.lr;
    j["train_loss"] = m.train_loss;
    j["train_auc"] = optional_json(m.train_auc);
    j["test_auc"] = optional_json(m.test_auc);
    log << j.dump() << '\n';
    log.flush();
  });
}

void cmd_predict(const PredictCommand& cmd) {
  const auto ckpt = load_checkpoint(cmd.checkpoint);
  const auto g = load_dataset(cmd.data);
  auto out = open_out(cmd.out);
  out << "player_id,game_id,day,probability,churned,observed\n";
  for (const Day d : select_days(g, cmd.days, ckpt.meta.split)) {
    for (const auto& p : predict(ckpt.params, g, d)) {
      const auto label = edge_label(g, p.edge, d);
      out << g.player_ids()[p.edge.player] << ',' << g.game_ids()[p.edge.game] << ',' << d << ','
          << format_double(p.probability) << ',' << (label.churned() ? 1 : 0) << ',' << (label.observed ? 1 : 0)
          << '\n';
    }
  }
}

void cmd_truth(const TruthCommand& cmd) {
  const auto g = load_dataset(cmd.data);
  fs::create_directories(cmd.out);
  for (const Day d : select_days(g, cmd.days, checkpoint_split(cmd.checkpoint))) {
    if (!g.contains_day(d + 1)) continue;
    GameScores scores;
    for (const auto& c : realized_churn_counts(g, d)) scores.push_back({c.game, static_cast<double>(c.count)});
    write_ranked_list(cmd.out / ranked_list_name("truth", d), rank_games(std::move(scores)), g.game_ids(), "truth");
  }
}

void cmd_rank(const RankCommand& cmd) {
  if (cmd.method != "simsum" && cmd.method != "pagerank" && cmd.method != "hits") {
    throw Error(ErrorKind::ConfigError, "unknown method " + cmd.method);
  }
  if (cmd.checkpoint.has_value() == cmd.oracle.has_value()) {
    throw Error(ErrorKind::ConfigError, "rank needs exactly one of a checkpoint or an oracle");
  }
  cmd.pagerank.validate();
  cmd.hits.validate();
  const auto g = load_dataset(cmd.data);
  std::optional<Checkpoint> ckpt;
  std::vector<OracleHazard> oracle;
  if (cmd.checkpoint) ckpt = load_checkpoint(*cmd.checkpoint);
  if (cmd.oracle) oracle = read_oracle(*cmd.oracle, g);
  fs::create_directories(cmd.out);
  const auto split = ckpt ? ckpt->meta.split : std::nullopt;
  for (const Day d : select_days(g, cmd.days, split)) {
    std::vector<double> probs;
    if (ckpt) {
      for (const auto& p : predict(ckpt->params, g, d)) probs.push_back(p.probability);
    } else {
      probs = oracle_hazards_on(oracle, g, d);
    }
    const auto rg = RelationGraph::from_snapshot(g.at(d), probs);
    GameScores scores;
    if (cmd.method == "simsum") scores = simsum(rg);
    if (cmd.method == "pagerank") scores = pagerank(rg, cmd.pagerank).games;
    if (cmd.method == "hits") scores = hits(rg, cmd.hits).games;
    write_ranked_list(cmd.out / ranked_list_name(cmd.method, d), rank_games(std::move(scores)), g.game_ids(),
                      cmd.method);
  }
}

std::vector<EvalRecord> cmd_eval(const EvalCommand& cmd) {
  std::unordered_map<std::string, std::uint32_t> ids;
  const auto truth_files = list_files(cmd.truth_dir, "truth");
  std::map<Day, RankedList> truth;
  for (const auto& [day, path] : truth_files) truth.emplace(day, read_ranked_list(path, ids).list);

  std::vector<EvalRecord> records;
  for (const auto& method : cmd.methods) {
    const auto pred_files = list_files(cmd.pred_dir, method);
    std::map<std::string, std::vector<double>> per_metric;
    std::vector<std::string> order;
    const auto add = [&](Day day, const std::string& metric, double v) {
      records.push_back({"day", day, method, metric, v, 1});
      auto [it, fresh] = per_metric.try_emplace(metric);
      if (fresh) order.push_back(metric);
      it->second.push_back(v);
    };
    for (const auto& [day, path] : pred_files) {
      const auto t = truth.find(day);
      if (t == truth.end()) continue;
      const auto pred = read_ranked_list(path, ids).list;
      add(day, "kendall_tau", kendall_tau(pred, t->second));
      add(day, "weighted_kendall_tau", weighted_kendall_tau(pred, t->second));
      add(day, "spearman", spearman(pred, t->second));
      for (const auto k : k_grid(pred.size())) add(day, "ap@" + std::to_string(k), avg_precision_at_k(pred, t->second, k));
      add(day, "average_precision", average_precision(pred, t->second, std::min<std::size_t>(500, pred.size())));
    }
    if (order.empty()) throw Error(ErrorKind::DataError, "no " + method + " list shares a day with the truth lists");
    for (const auto& metric : order) {
      const auto& v = per_metric[metric];
      const std::string name = metric == "average_precision" ? "map" : metric;
      records.push_back({"mean", std::nullopt, method, name, mean_average_precision(v), v.size()});
    }
  }
  if (cmd.predictions) {
    for (auto& r : prediction_records(*cmd.predictions)) records.push_back(std::move(r));
  }
  auto out = open_out(cmd.out);
  for (const auto& r : records) out << record_json(r).dump() << '\n';
  return records;
}

namespace {

// Registers --name and --name_with_underscores so config files may use either.
template <class T>
CLI::Option* add(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  std::string alt = name;
  std::replace(alt.begin(), alt.end(), '-', '_');
  const std::string names = alt == name ? "--" + name : "--" + name + ",--" + alt;
  return app->add_option(names, target, help)->capture_default_str();
}

void add_days(CLI::App* app, DayRange& days) {
  app->add_option("--from-day", days.from, "First day (default: test days of the split)");
  app->add_option("--to-day", days.to, "Last day");
}

// CLI11 reads --config only before the subcommand; move it to the front.
std::vector<std::string> reorder_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc), front, rest;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      front.push_back(args[k]);
      front.push_back(args[++k]);
    } else if (args[k].rfind("--config=", 0) == 0) {
      front.push_back(args[k]);
    } else {
      rest.push_back(args[k]);
    }
  }
  front.insert(front.end(), rest.begin(), rest.end());
  std::reverse(front.begin(), front.end());  // CLI11 parses a reversed vector
  return front;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Churn prediction and churn ranking on temporal player-game graphs"};
  app.set_config("--config", "", "TOML file with one [section] per subcommand");
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "OpenMP threads")->capture_default_str()->check(CLI::PositiveNumber);

  SynthCommand synth;
  synth.config.churn_window = 14;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with oracle hazards");
  auto& sc = synth.config;
  add(s, "out", synth.out, "Output directory")->required();
  add(s, "num-players", sc.num_players, "Players")->required();
  add(s, "num-games", sc.num_games, "Games")->required();
  add(s, "num-days", sc.num_days, "Days")->required();
  add(s, "seed", sc.seed, "World seed");
  add(s, "churn-seed", sc.churn_seed, "Seed of the churn draws (default: seed)");
  add(s, "churn-window", sc.churn_window, "Idle days that make a churn");
  add(s, "latent-dim", sc.latent_dim, "Latent dimensions");
  add(s, "tenure-coefficient", sc.tenure_coefficient, "Hazard logit per day of tenure");
  add(s, "tenure-cap", sc.tenure_cap, "Tenure stops growing after this many days");
  add(s, "base-hazard", sc.base_hazard, "Hazard at zero interaction and tenure");
  add(s, "interaction-scale", sc.interaction_scale, "Weight of the latent interaction");
  add(s, "player-spread", sc.player_spread, "Player angle spread as a fraction of pi");
  add(s, "games-per-player", sc.games_per_player, "Games each player picks");
  add(s, "popularity-exponent", sc.popularity_exponent, "Zipf exponent of game popularity");
  add(s, "noise", sc.noise, "Feature noise sd");
  add(s, "noise-persistence", sc.noise_persistence, "Day-to-day noise autocorrelation");
  add(s, "history-days", sc.history_days, "Days simulated before the first snapshot");
  add(s, "background-share", sc.background_share, "Share of players joining uniformly");
  add(s, "join-peak", sc.join_peak, "Centre of the join wave");
  add(s, "join-spread", sc.join_spread, "Width of the join wave");
  add(s, "rejoin-rate", sc.rejoin_rate, "Daily return chance of a churned pair");

  TrainCommand trainc;
  auto* t = app.add_subcommand("train", "Train the churn model and write a checkpoint");
  auto& tc = trainc.config;
  std::string mode = "cotrain", objective = "softmax";
  add(t, "data", trainc.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  add(t, "out", trainc.out, "Output directory")->required();
  add(t, "epochs", tc.epochs, "Epochs");
  add(t, "batch-size", tc.batch_size, "Examples per step");
  add(t, "lr", tc.initial_lr, "Initial learning rate");
  add(t, "mode", mode, "cotrain or alternating")->check(CLI::IsMember({"cotrain", "alternating"}));
  add(t, "objective", objective, "softmax or sgns")->check(CLI::IsMember({"softmax", "sgns"}));
  add(t, "alpha", tc.loss_weights.alpha, "Weight of the context loss");
  add(t, "beta", tc.loss_weights.beta, "Weight of the temporal loss");
  add(t, "gamma", tc.loss_weights.gamma, "Weight of the regularizer");
  add(t, "embed-dim", tc.embed_dim, "Edge embedding width");
  add(t, "embed-layers", tc.embed_layers, "Embedding layers");
  add(t, "predict-layers", tc.predict_layers, "Prediction layers");
  add(t, "negatives", tc.negatives, "Negatives per context");
  add(t, "split", tc.split_fraction, "Fraction of days used for training");
  add(t, "seed", tc.seed, "Training seed");
  add(t, "epsilon", tc.walk.epsilon, "Augmented edges need similarity above 1 - epsilon");
  add(t, "p", tc.walk.p, "Walk return constant");
  add(t, "q", tc.walk.q, "Walk in-out constant");
  add(t, "walk-length", tc.walk.walk_length, "Steps per walk");
  add(t, "contexts", tc.walk.contexts_per_edge, "Contexts per edge");
  add(t, "max-augmented", tc.walk.max_augmented_per_node, "Augmented edges kept per node");
  add(t, "walk-seed", tc.walk.rng_seed, "Walk seed");

  PredictCommand predictc;
  auto* p = app.add_subcommand("predict", "Write per-edge churn probabilities");
  add(p, "checkpoint", predictc.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  add(p, "data", predictc.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  add(p, "out", predictc.out, "Output CSV")->required();
  add_days(p, predictc.days);

  TruthCommand truthc;
  auto* tr = app.add_subcommand("truth", "Write ranked lists of realized churn counts");
  add(tr, "data", truthc.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  add(tr, "out", truthc.out, "Output directory")->required();
  add(tr, "checkpoint", truthc.checkpoint, "Checkpoint whose split selects the days")->check(CLI::ExistingFile);
  add_days(tr, truthc.days);

  RankCommand rankc;
  std::string normalization = "sender";
  auto* r = app.add_subcommand("rank", "Rank games by predicted churn");
  add(r, "data", rankc.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  add(r, "out", rankc.out, "Output directory")->required();
  add(r, "method", rankc.method, "simsum, pagerank or hits")
      ->required()
      ->check(CLI::IsMember({"simsum", "pagerank", "hits"}));
  auto* ck = add(r, "checkpoint", rankc.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  auto* orc = add(r, "oracle", rankc.oracle, "Oracle hazards CSV used instead of a model")->check(CLI::ExistingFile);
  ck->excludes(orc);
  add(r, "damping", rankc.pagerank.damping, "PageRank damping");
  add(r, "max-iter", rankc.pagerank.max_iter, "Iteration cap");
  add(r, "tol", rankc.pagerank.tol, "L1 convergence tolerance");
  add(r, "normalization", normalization, "PageRank normalization: sender or receiver")
      ->check(CLI::IsMember({"sender", "receiver"}));
  add_days(r, rankc.days);

  EvalCommand evalc;
  auto* e = app.add_subcommand("eval", "Compare ranked lists with the truth lists");
  add(e, "pred-dir", evalc.pred_dir, "Directory of <method>_day<NNN>.csv")->required()->check(CLI::ExistingDirectory);
  add(e, "truth-dir", evalc.truth_dir, "Directory of truth_day<NNN>.csv")->required()->check(CLI::ExistingDirectory);
  add(e, "methods", evalc.methods, "Methods to evaluate")->required()->delimiter(',');
  add(e, "predictions", evalc.predictions, "Output of predict")->check(CLI::ExistingFile);
  add(e, "out", evalc.out, "Report (JSON lines)")->required();

  try {
    app.parse(reorder_config(argc, argv));
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_num_threads(threads);
    if (s->parsed()) cmd_synth(synth);
    if (t->parsed()) {
      tc.mode = mode == "alternating" ? TrainMode::Alternating : TrainMode::CoTrain;
      tc.objective = objective == "sgns" ? ContextObjective::LogisticNegativeSampling : ContextObjective::SampledSoftmax;
      cmd_train(trainc);
    }
    if (p->parsed()) cmd_predict(predictc);
    if (tr->parsed()) cmd_truth(truthc);
    if (r->parsed()) {
      rankc.hits.max_iter = rankc.pagerank.max_iter;
      rankc.hits.tol = rankc.pagerank.tol;
      rankc.pagerank.normalization =
          normalization == "receiver" ? PageRankNormalization::Receiver : PageRankNormalization::Sender;
      cmd_rank(rankc);
    }
    if (e->parsed()) cmd_eval(evalc);
  } catch (const Error& err) {
    std::cerr << err.what() << '\n';
    return err.kind() == ErrorKind::NumericError ? kExitNumeric : kExitUsage;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << err.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace churn::cli

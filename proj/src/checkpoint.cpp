#include "churn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "churn/error.hpp"

namespace churn {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;

json layer_json(const DenseLayer& l) {
  return {{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"biases", l.biases}};
}

DenseLayer layer_from(const json& j) {
  DenseLayer l(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
  l.weights = j.at("weights").get<std::vector<double>>();
  l.biases = j.at("biases").get<std::vector<double>>();
  if (l.weights.size() != l.in * l.out || l.biases.size() != l.out) {
    throw Error(ErrorKind::SchemaError, "checkpoint layer shape mismatch");
  }
  return l;
}

}  // namespace

std::string checkpoint_json(const ModelParams& params, const CheckpointMeta& meta) {
  json j;
  j["version"] = kVersion;
  j["shape"] = {{"input_dim", params.shape.input_dim},
                {"embed_dim", params.shape.embed_dim},
                {"embed_layers", params.shape.embed_layers},
                {"predict_layers", params.shape.predict_layers},
                {"predict_width", params.shape.predict_width}};
  j["init_seed"] = params.init_seed;
  j["seed"] = meta.seed;
  j["epoch"] = meta.epoch;
  if (meta.split) j["split"] = {{"train", meta.split->train}, {"test", meta.split->test}};
  j["embed"] = json::array();
  for (const auto& l : params.embed) j["embed"].push_back(layer_json(l));
  j["predict"] = json::array();
  for (const auto& l : params.predict) j["predict"].push_back(layer_json(l));
  j["sigmoid_weight"] = params.sigmoid_weight;
  json vocab = json::array();
  for (const auto& k : params.vocab.keys()) vocab.push_back({k.player, k.game});
  j["vocab"] = std::move(vocab);
  j["context"] = params.context;
  return j.dump() + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  Checkpoint c;
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != kVersion) throw Error(ErrorKind::SchemaError, "unsupported checkpoint version");
    auto& p = c.params;
    const auto& s = j.at("shape");
    p.shape.input_dim = s.at("input_dim").get<std::size_t>();
    p.shape.embed_dim = s.at("embed_dim").get<std::size_t>();
    p.shape.embed_layers = s.at("embed_layers").get<std::size_t>();
    p.shape.predict_layers = s.at("predict_layers").get<std::size_t>();
    p.shape.predict_width = s.at("predict_width").get<std::size_t>();
    p.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.meta.seed = j.at("seed").get<std::uint64_t>();
    c.meta.epoch = j.at("epoch").get<std::size_t>();
    if (j.contains("split")) {
      Split sp;
      sp.train = j["split"].at("train").get<std::vector<Day>>();
      sp.test = j["split"].at("test").get<std::vector<Day>>();
      c.meta.split = std::move(sp);
    }
    for (const auto& l : j.at("embed")) p.embed.push_back(layer_from(l));
    for (const auto& l : j.at("predict")) p.predict.push_back(layer_from(l));
    p.sigmoid_weight = j.at("sigmoid_weight").get<std::vector<double>>();
    for (const auto& k : j.at("vocab")) p.vocab.intern({k.at(0).get<std::uint32_t>(), k.at(1).get<std::uint32_t>()});
    p.context = j.at("context").get<std::vector<double>>();
    if (p.embed.size() != p.shape.embed_layers || p.predict.size() != p.shape.predict_layers ||
        p.context.size() != p.vocab.size() * p.shape.embed_dim) {
      throw Error(ErrorKind::SchemaError, "checkpoint tensors do not match the declared shape");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta) {
  const auto text = checkpoint_json(params, meta);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace churn

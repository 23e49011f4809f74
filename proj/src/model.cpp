#include "churn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "churn/error.hpp"

namespace churn {

namespace {

constexpr std::uint64_t kInitTag = 0x494e4954ULL;     // "INIT"
constexpr std::uint64_t kContextTag = 0x43545854ULL;  // "CTXT"

void check_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NumericError, std::string("non-finite ") + what);
  }
}

void dense_relu(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y) {
  y.assign(layer.out, 0.0);
  for (std::size_t r = 0; r < layer.out; ++r) {
    double acc = layer.biases[r];
    const double* row = layer.weights.data() + r * layer.in;
    for (std::size_t c = 0; c < layer.in; ++c) acc += row[c] * x[c];
    y[r] = acc > 0.0 ? acc : 0.0;
  }
}

void xavier(DenseLayer& layer, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
  for (double& w : layer.weights) w = (2.0 * uniform01(rng) - 1.0) * a;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::uint32_t EdgeVocabulary::intern(EdgeKey e) {
  auto [it, inserted] = index_.try_emplace(e, static_cast<std::uint32_t>(keys_.size()));
  if (inserted) keys_.push_back(e);
  return it->second;
}

std::optional<std::uint32_t> EdgeVocabulary::find(EdgeKey e) const {
  const auto it = index_.find(e);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t EdgeVocabulary::at(EdgeKey e) const {
  const auto idx = find(e);
  if (!idx) {
    throw Error(ErrorKind::VocabError, "edge (" + std::to_string(e.player) + ", " +
                                           std::to_string(e.game) + ") not in vocabulary");
  }
  return *idx;
}

EdgeKey EdgeVocabulary::key(std::uint32_t index) const {
  if (index >= keys_.size()) throw Error(ErrorKind::VocabError, "vocabulary index out of range");
  return keys_[index];
}

void ModelShape::validate() const {
  if (input_dim == 0) throw Error(ErrorKind::ConfigError, "model input width must be positive");
  if (embed_dim == 0) throw Error(ErrorKind::ConfigError, "embedding width must be positive");
  if (embed_layers == 0) throw Error(ErrorKind::ConfigError, "need at least one embedding layer");
}

std::span<const double> ModelParams::context_row(std::uint32_t index) const {
  if (index >= vocab.size()) throw Error(ErrorKind::VocabError, "context index out of range");
  return {context.data() + static_cast<std::size_t>(index) * shape.embed_dim, shape.embed_dim};
}

std::span<double> ModelParams::context_row(std::uint32_t index) {
  if (index >= vocab.size()) throw Error(ErrorKind::VocabError, "context index out of range");
  return {context.data() + static_cast<std::size_t>(index) * shape.embed_dim, shape.embed_dim};
}

std::uint32_t ModelParams::add_context(EdgeKey e) {
  const auto before = vocab.size();
  const auto idx = vocab.intern(e);
  if (vocab.size() != before) {
    auto rng = make_stream(init_seed, kContextTag, idx);
    for (std::size_t k = 0; k < shape.embed_dim; ++k) context.push_back(0.01 * standard_normal(rng));
  }
  return idx;
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : embed) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  for (auto& l : predict) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  out.emplace_back(sigmoid_weight);
  out.emplace_back(context);
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(s);
  return out;
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  ModelParams p;
  p.shape = shape;
  p.init_seed = seed;
  auto rng = make_stream(seed, kInitTag);
  std::size_t width = shape.input_dim;
  for (std::size_t k = 0; k < shape.embed_layers; ++k) {
    p.embed.emplace_back(width, shape.embed_dim);
    xavier(p.embed.back(), rng);
    width = shape.embed_dim;
  }
  for (std::size_t k = 0; k < shape.predict_layers; ++k) {
    p.predict.emplace_back(width, shape.hidden_width());
    xavier(p.predict.back(), rng);
    width = shape.hidden_width();
  }
  p.sigmoid_weight.resize(width);
  const double a = std::sqrt(6.0 / static_cast<double>(width + 1));
  for (double& w : p.sigmoid_weight) w = (2.0 * uniform01(rng) - 1.0) * a;
  return p;
}

EmbedResult embed_forward(const ModelParams& params, std::span<const double> z) {
  if (z.size() != params.shape.input_dim) {
    throw Error(ErrorKind::SchemaError, "edge feature width " + std::to_string(z.size()) +
                                            " != model input width " +
                                            std::to_string(params.shape.input_dim));
  }
  check_finite(z, "edge feature");
  EmbedResult r;
  r.tape.activations.reserve(params.embed.size() + 1);
  r.tape.activations.emplace_back(z.begin(), z.end());
  for (const auto& layer : params.embed) {
    std::vector<double> y;
    dense_relu(layer, r.tape.activations.back(), y);
    r.tape.activations.push_back(std::move(y));
  }
  r.g = r.tape.activations.back();
  return r;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double predict_logit(const ModelParams& params, std::span<const double> g, LayerTape* tape) {
  LayerTape local;
  LayerTape& t = tape ? *tape : local;
  t.activations.clear();
  t.activations.emplace_back(g.begin(), g.end());
  for (const auto& layer : params.predict) {
    std::vector<double> y;
    dense_relu(layer, t.activations.back(), y);
    t.activations.push_back(std::move(y));
  }
  const double s = dot(t.output(), params.sigmoid_weight);
  if (!std::isfinite(s)) throw Error(ErrorKind::NumericError, "non-finite prediction logit");
  return s;
}

double predict_forward(const ModelParams& params, std::span<const double> g) {
  return sigmoid(predict_logit(params, g));
}

double predict_probability(const ModelParams& params, std::span<const double> z) {
  return predict_forward(params, embed_forward(params, z).g);
}

double context_log_prob(const ModelParams& params, std::span<const double> g, std::uint32_t target,
                        std::span<const std::uint32_t> negatives, ContextObjective objective) {
  const double st = dot(g, params.context_row(target));
  if (objective == ContextObjective::LogisticNegativeSampling) {
    double lp = -softplus(-st);
    for (auto n : negatives) {
      if (n == target) throw Error(ErrorKind::VocabError, "negative sample equals the target");
      lp -= softplus(dot(g, params.context_row(n)));
    }
    return lp;
  }
  std::vector<double> s;
  s.reserve(negatives.size() + 1);
  s.push_back(st);
  for (auto n : negatives) {
    if (n == target) throw Error(ErrorKind::VocabError, "negative sample equals the target");
    s.push_back(dot(g, params.context_row(n)));
  }
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  return st - mx - std::log(z);
}

double context_log_prob_exact(const ModelParams& params, std::span<const double> g,
                              std::uint32_t target) {
  const auto n = static_cast<std::uint32_t>(params.vocab.size());
  if (target >= n) throw Error(ErrorKind::VocabError, "context index out of range");
  std::vector<double> s(n);
  for (std::uint32_t k = 0; k < n; ++k) s[k] = dot(g, params.context_row(k));
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  return s[target] - mx - std::log(z);
}

NegativeSampler::NegativeSampler(std::span<const double> counts, double power) {
  double acc = 0.0;
  cumulative_.reserve(counts.size());
  for (double c : counts) {
    if (c < 0.0 || !std::isfinite(c)) throw Error(ErrorKind::DataError, "bad context count");
    acc += std::pow(c, power);
    cumulative_.push_back(acc);
  }
}

std::uint32_t NegativeSampler::sample(Rng& rng, std::uint32_t exclude) const {
  if (cumulative_.empty()) throw Error(ErrorKind::VocabError, "empty negative-sampling table");
  const double total = cumulative_.back();
  const double excluded_mass =
      exclude < cumulative_.size()
          ? cumulative_[exclude] - (exclude == 0 ? 0.0 : cumulative_[exclude - 1])
          : 0.0;
  if (!(total - excluded_mass > 0.0)) {
    throw Error(ErrorKind::VocabError, "no negative candidate besides the target");
  }
  while (true) {
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = static_cast<std::uint32_t>(
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1));
    if (idx != exclude) return idx;
  }
}

std::vector<std::uint32_t> NegativeSampler::sample(Rng& rng, std::uint32_t exclude,
                                                   std::size_t count) const {
  std::vector<std::uint32_t> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(sample(rng, exclude));
  return out;
}

}  // namespace churn

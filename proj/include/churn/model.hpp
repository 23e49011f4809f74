#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "churn/graph.hpp"
#include "churn/rng.hpp"

namespace churn {

// Row-major out x in weights plus a bias per output.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  DenseLayer() = default;
  DenseLayer(std::size_t in_width, std::size_t out_width)
      : in(in_width), out(out_width), weights(in_width * out_width, 0.0), biases(out_width, 0.0) {}

  double& w(std::size_t r, std::size_t c) { return weights[r * in + c]; }
  double w(std::size_t r, std::size_t c) const { return weights[r * in + c]; }
};

// Dense index for every (player, game) pair that can be a context target.
// Append-only.
class EdgeVocabulary {
 public:
  std::uint32_t intern(EdgeKey e);
  std::optional<std::uint32_t> find(EdgeKey e) const;
  std::uint32_t at(EdgeKey e) const;  // VocabError when unknown
  EdgeKey key(std::uint32_t index) const;
  std::size_t size() const noexcept { return keys_.size(); }
  const std::vector<EdgeKey>& keys() const noexcept { return keys_; }

 private:
  std::unordered_map<EdgeKey, std::uint32_t, EdgeKeyHash> index_;
  std::vector<EdgeKey> keys_;
};

struct ModelShape {
  std::size_t input_dim = 0;       // d
  std::size_t embed_dim = 50;      // m
  std::size_t embed_layers = 2;    // l_p
  std::size_t predict_layers = 2;  // l_n
  std::size_t predict_width = 0;   // 0 means embed_dim

  std::size_t hidden_width() const noexcept { return predict_width == 0 ? embed_dim : predict_width; }
  void validate() const;
};

struct ModelParams {
  ModelShape shape;
  std::vector<DenseLayer> embed;    // d -> m -> ... -> m
  std::vector<DenseLayer> predict;  // m -> h -> ... -> h
  std::vector<double> sigmoid_weight;
  EdgeVocabulary vocab;
  std::vector<double> context;  // vocab.size() rows of width m
  std::uint64_t init_seed = 0;

  std::span<const double> context_row(std::uint32_t index) const;
  std::span<double> context_row(std::uint32_t index);

  // Interns the edge and, for a new entry, appends a row drawn from
  // N(0, 0.01^2) with a stream keyed by the row index.
  std::uint32_t add_context(EdgeKey e);

  // Every trainable tensor in a fixed order: per embed layer (weights,
  // biases), per predict layer (weights, biases), sigmoid weight, context.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
};

ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

// Activations recorded for backward. activations[k] is the input of layer k;
// the last entry is the layer stack output.
struct LayerTape {
  std::vector<std::vector<double>> activations;
  const std::vector<double>& output() const { return activations.back(); }
};

struct EmbedResult {
  std::vector<double> g;
  LayerTape tape;
};

EmbedResult embed_forward(const ModelParams& params, std::span<const double> z);

double sigmoid(double x) noexcept;
double predict_logit(const ModelParams& params, std::span<const double> g, LayerTape* tape = nullptr);
double predict_forward(const ModelParams& params, std::span<const double> g);

// Churn probability f(g(z)).
double predict_probability(const ModelParams& params, std::span<const double> z);

enum class ContextObjective {
  // log( e^{s_t} / (e^{s_t} + sum_neg e^{s_n}) ): the softmax with its
  // denominator restricted to target plus sampled negatives. Equals the exact
  // softmax when every non-target is a negative.
  SampledSoftmax,
  // log sigma(s_t) + sum_neg log sigma(-s_n).
  LogisticNegativeSampling,
};

double context_log_prob(const ModelParams& params, std::span<const double> g, std::uint32_t target,
                        std::span<const std::uint32_t> negatives,
                        ContextObjective objective = ContextObjective::SampledSoftmax);

// Exact log softmax over the whole vocabulary.
double context_log_prob_exact(const ModelParams& params, std::span<const double> g,
                              std::uint32_t target);

// Draws negatives from unigram counts raised to a power, never returning the
// excluded target.
class NegativeSampler {
 public:
  NegativeSampler() = default;
  NegativeSampler(std::span<const double> counts, double power = 0.75);

  std::size_t size() const noexcept { return cumulative_.size(); }
  std::uint32_t sample(Rng& rng, std::uint32_t exclude) const;
  std::vector<std::uint32_t> sample(Rng& rng, std::uint32_t exclude, std::size_t count) const;

 private:
  std::vector<double> cumulative_;
};

}  // namespace churn

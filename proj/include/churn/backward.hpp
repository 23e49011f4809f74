#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "churn/loss.hpp"
#include "churn/model.hpp"
#include "churn/parallel.hpp"

namespace churn {

// Second day of a temporal pair: the same edge one day later.
struct TemporalTerm {
  std::vector<double> z_next;
  bool next_observed = true;
  // Features on the last day the edge's label was observed. Read only when
  // next_observed is false.
  std::vector<double> z_reference;
};

struct BatchExample {
  std::vector<double> z;
  bool observed = true;  // censored examples add nothing to the supervised or context terms
  bool stays = false;
  std::vector<ContextSample> contexts;
  std::optional<TemporalTerm> temporal;
};

struct Batch {
  std::vector<BatchExample> examples;
  ContextObjective objective = ContextObjective::SampledSoftmax;
};

// Coefficients of the per-batch objective
//   s * L_S + u * L_U / B + t * L_T / B + r * L_R(lambdas)
// where L_S is the mean over observed examples and B is the batch size.
struct ObjectiveWeights {
  double supervised = 1.0;
  double unsupervised = 0.0;
  double temporal = 0.0;
  double regularization = 0.0;
  std::array<double, 5> lambdas{1.0, 1.0, 1.0, 1.0, 1.0};

  static ObjectiveWeights co_train(const LossWeights& w);
  // Context objective plus the embedding part of the regularizer.
  static ObjectiveWeights unsupervised_phase(const LossWeights& w);
  // Supervised and temporal objective plus the whole regularizer.
  static ObjectiveWeights supervised_phase(const LossWeights& w);
  static ObjectiveWeights zero();
};

struct Gradients {
  std::vector<DenseLayer> embed;
  std::vector<DenseLayer> predict;
  std::vector<double> sigmoid_weight;
  std::map<std::uint32_t, std::vector<double>> context;  // rows touched by the batch

  Gradients() = default;
  explicit Gradients(const ModelParams& params);

  void add(const Gradients& other);
  // Dense tensors in ModelParams::tensors() order, excluding the context table.
  std::vector<std::span<const double>> dense_tensors() const;
  bool all_finite() const;
};

struct ObjectiveValue {
  LossComponents components;  // L_S (mean), L_U and L_T (sums), L_R
  double value = 0.0;
};

// Forward-only evaluation built from the loss functions.
ObjectiveValue batch_objective(const ModelParams& params, const Batch& batch, const ObjectiveWeights& w);

struct BackwardResult {
  ObjectiveValue objective;
  Gradients grads;
};

// Exact gradient of batch_objective. The parallel path splits examples into
// fixed chunks and reduces chunk results in order, so its output does not
// depend on the thread count. Hinge and ReLU kinks take subgradient 0.
BackwardResult backward(const ModelParams& params, const Batch& batch, const ObjectiveWeights& w,
                        Execution exec = Execution::Parallel);

inline constexpr std::size_t kBackwardChunk = 64;

}  // namespace churn

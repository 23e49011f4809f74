#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "churn/model.hpp"

namespace churn {

struct LossWeights {
  double alpha = 0.02;  // unsupervised
  double beta = 0.01;   // temporal
  double gamma = 1e-5;  // regularization
  // embed weights, embed biases, predict weights, predict biases, sigmoid weight
  std::array<double, 5> lambdas{1.0, 1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

struct SupervisedItem {
  double prob = 0.0;     // predicted churn probability
  bool stays = false;    // e^(i+1) = 1
  bool observed = true;  // censor flag
};

// Mean over observed items of ((1 - e) - prob)^2; 0 when every item is
// censored. Throws EmptyBatch on an empty list.
double supervised_loss(std::span<const SupervisedItem> items);

struct ContextSample {
  std::uint32_t target = 0;
  std::vector<std::uint32_t> negatives;
};

struct UnsupervisedItem {
  std::span<const double> g;
  std::span<const ContextSample> contexts;
};

// Negative log-likelihood summed over items and contexts.
double unsupervised_loss(const ModelParams& params, std::span<const UnsupervisedItem> items,
                         ContextObjective objective = ContextObjective::SampledSoftmax);

struct TemporalPair {
  std::span<const double> g_now;   // g(z^(i))
  std::span<const double> g_next;  // g(z^(i+1))
  double f_now = 0.0;
  double f_next = 0.0;
  bool next_observed = true;        // censor flag of the later day
  std::optional<double> f_reference;  // f at the last observed day; needed when censored
};

// Sum of ||g_next - g_now|| + [reference - f_next]_+. Throws DataError for a
// censored pair without a reference.
double temporal_loss(std::span<const TemporalPair> pairs);

double regularization_loss(const ModelParams& params, const std::array<double, 5>& lambdas);

struct LossComponents {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double temporal = 0.0;
  double regularization = 0.0;
};

// L_S + alpha L_U + beta L_T + gamma L_R.
double total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace churn

#include "churn/loss.hpp"

#include <cmath>

#include "churn/error.hpp"

namespace churn {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw Error(ErrorKind::ConfigError, "loss weights alpha, beta, gamma must be non-negative");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw Error(ErrorKind::ConfigError, "regularization lambdas must be non-negative");
  }
}

double supervised_loss(std::span<const SupervisedItem> items) {
  if (items.empty()) throw Error(ErrorKind::EmptyBatch, "supervised loss over an empty batch");
  double sum = 0.0;
  std::size_t observed = 0;
  for (const auto& it : items) {
    if (!it.observed) continue;
    const double r = (it.stays ? 0.0 : 1.0) - it.prob;
    sum += r * r;
    ++observed;
  }
  return observed == 0 ? 0.0 : sum / static_cast<double>(observed);
}

double unsupervised_loss(const ModelParams& params, std::span<const UnsupervisedItem> items,
                         ContextObjective objective) {
  if (items.empty()) throw Error(ErrorKind::EmptyBatch, "unsupervised loss over an empty batch");
  double sum = 0.0;
  for (const auto& it : items) {
    for (const auto& c : it.contexts) sum -= context_log_prob(params, it.g, c.target, c.negatives, objective);
  }
  return sum;
}

double temporal_loss(std::span<const TemporalPair> pairs) {
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (p.g_now.size() != p.g_next.size()) throw Error(ErrorKind::SchemaError, "embedding widths differ");
    double sq = 0.0;
    for (std::size_t k = 0; k < p.g_now.size(); ++k) {
      const double d = p.g_next[k] - p.g_now[k];
      sq += d * d;
    }
    double ref = p.f_now;
    if (!p.next_observed) {
      if (!p.f_reference) throw Error(ErrorKind::DataError, "censored temporal pair has no reference");
      ref = *p.f_reference;
    }
    sum += std::sqrt(sq) + std::max(0.0, ref - p.f_next);
  }
  return sum;
}

double regularization_loss(const ModelParams& params, const std::array<double, 5>& lambdas) {
  auto sq = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  double r = 0.0;
  for (const auto& l : params.embed) r += lambdas[0] * sq(l.weights) + lambdas[1] * sq(l.biases);
  for (const auto& l : params.predict) r += lambdas[2] * sq(l.weights) + lambdas[3] * sq(l.biases);
  r += lambdas[4] * sq(params.sigmoid_weight);
  return r;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return c.supervised + w.alpha * c.unsupervised + w.beta * c.temporal + w.gamma * c.regularization;
}

}  // namespace churn

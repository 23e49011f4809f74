#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "churn/backward.hpp"
#include "churn/graph.hpp"
#include "churn/loss.hpp"
#include "churn/model.hpp"
#include "churn/parallel.hpp"
#include "churn/walk.hpp"

namespace churn {

enum class TrainMode { CoTrain, Alternating };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double initial_lr = 0.017;
  std::size_t epochs = 6;
  std::size_t batch_size = 1024;
  TrainMode mode = TrainMode::CoTrain;
  AdamConfig adam;
  LossWeights loss_weights;
  WalkConfig walk;
  double split_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;

  std::size_t embed_dim = 50;
  std::size_t embed_layers = 2;
  std::size_t predict_layers = 2;
  std::size_t negatives = 5;
  ContextObjective objective = ContextObjective::SampledSoftmax;
  Execution execution = Execution::Parallel;

  void validate() const;
};

struct Split {
  std::vector<Day> train;
  std::vector<Day> test;
};

// First ceil(fraction * n) snapshot days train, the rest test; each side keeps
// at least one day. DataError with fewer than 2 days.
Split chronological_split(const TemporalBipartiteGraph& g, double fraction);

double decayed_lr(double initial, std::size_t completed_epochs);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

// Dense Adam with bias correction over every tensor, including context rows
// the batch did not touch. NumericError on non-finite gradients.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

struct EdgeExample {
  EdgeKey edge;
  Day day = 0;
  std::vector<double> z;
  EdgeLabel label;
  std::vector<std::uint32_t> contexts;  // vocabulary rows
  std::optional<TemporalTerm> temporal;
};

// One example per edge on each listed day. Labels, censoring, and temporal
// partners come from `g` as given, so pass a graph truncated at the last
// training day to keep later activity out. Context targets are interned into
// params' vocabulary. Censored examples get no contexts.
std::vector<EdgeExample> assemble_examples(const TemporalBipartiteGraph& g, std::span<const Day> days,
                                           ModelParams& params, const WalkConfig& walk,
                                           Execution exec = Execution::Parallel);

struct LabeledEdge {
  EdgeKey edge;
  Day day = 0;
  std::vector<double> z;
  EdgeLabel label;
};

std::vector<LabeledEdge> labeled_edges(const TemporalBipartiteGraph& g, std::span<const Day> days);

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 is the untrained model
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> train_auc;
  std::optional<double> test_auc;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> log;
  Split split;
};

using EpochCallback = std::function<void(const ModelParams&, const EpochMetrics&)>;

TrainResult train(const TemporalBipartiteGraph& g, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct EdgePrediction {
  EdgeKey edge;
  double probability = 0.0;
};

// Churn probability for every edge of the snapshot on `day`, in edge order.
std::vector<EdgePrediction> predict(const ModelParams& params, const TemporalBipartiteGraph& g, Day day,
                                    Execution exec = Execution::Parallel);

}  // namespace churn

#include "churn/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "churn/error.hpp"
#include "churn/metrics.hpp"

namespace churn {

namespace {

constexpr std::uint64_t kShuffleTag = 0x53485546ULL;   // "SHUF"
constexpr std::uint64_t kNegativeTag = 0x4e454753ULL;  // "NEGS"
constexpr std::uint64_t kEvalTag = 0x4556414cULL;      // "EVAL"

std::vector<ContextSample> draw_contexts(const EdgeExample& ex, const NegativeSampler* sampler,
                                         std::size_t negatives, Rng& rng) {
  std::vector<ContextSample> out;
  out.reserve(ex.contexts.size());
  for (auto target : ex.contexts) {
    ContextSample c{target, {}};
    if (sampler) c.negatives = sampler->sample(rng, target, negatives);
    out.push_back(std::move(c));
  }
  return out;
}

BatchExample to_batch_example(const EdgeExample& ex, bool with_contexts, const NegativeSampler* sampler,
                              std::size_t negatives, Rng& rng) {
  BatchExample b;
  b.z = ex.z;
  b.observed = ex.label.observed;
  b.stays = ex.label.value == LabelValue::Stay;
  if (with_contexts && ex.label.observed) b.contexts = draw_contexts(ex, sampler, negatives, rng);
  b.temporal = ex.temporal;
  return b;
}

std::optional<double> examples_auc(const ModelParams& params, const std::vector<EdgeExample>& examples,
                                   Execution exec) {
  std::vector<ScoredLabel> s(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto& ex = examples[static_cast<std::size_t>(k)];
    s[static_cast<std::size_t>(k)] = {predict_probability(params, ex.z), ex.label.churned()};
  }
  std::vector<ScoredLabel> observed;
  for (std::size_t k = 0; k < examples.size(); ++k)
    if (examples[k].label.observed) observed.push_back(s[k]);
  return auc(observed);
}

std::optional<double> labeled_auc(const ModelParams& params, const std::vector<LabeledEdge>& edges,
                                  Execution exec) {
  std::vector<ScoredLabel> s(edges.size());
  const auto n = static_cast<std::ptrdiff_t>(edges.size());
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto& e = edges[static_cast<std::size_t>(k)];
    s[static_cast<std::size_t>(k)] = {predict_probability(params, e.z), e.label.churned()};
  }
  std::vector<ScoredLabel> observed;
  for (std::size_t k = 0; k < edges.size(); ++k)
    if (edges[k].label.observed) observed.push_back(s[k]);
  return auc(observed);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) {
    throw Error(ErrorKind::ConfigError, "learning rate must be non-negative");
  }
  if (batch_size == 0) throw Error(ErrorKind::ConfigError, "batch size must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw Error(ErrorKind::ConfigError, "split fraction must lie in (0, 1)");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw Error(ErrorKind::ConfigError, "Adam constants out of range");
  }
  loss_weights.validate();
  walk.validate();
  if (embed_dim == 0 || embed_layers == 0) throw Error(ErrorKind::ConfigError, "empty embedding stack");
}

Split chronological_split(const TemporalBipartiteGraph& g, double fraction) {
  const std::size_t n = g.num_days();
  if (n < 2) throw Error(ErrorKind::DataError, "chronological split needs at least two days");
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorKind::ConfigError, "split fraction outside (0, 1)");
  // The small offset keeps fractions like 2/3 of 9 from rounding up past 6.
  auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  for (std::size_t k = 0; k < n; ++k) {
    const Day d = g.first_day() + static_cast<Day>(k);
    (k < n_train ? s.train : s.test).push_back(d);
  }
  return s;
}

double decayed_lr(double initial, std::size_t completed_epochs) {
  return initial / (1.0 + static_cast<double>(completed_epochs) / 2.0);
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (auto t : params.tensors()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (!grads.all_finite()) throw Error(ErrorKind::NumericError, "non-finite gradient");
  auto tensors = params.tensors();
  const auto dense = grads.dense_tensors();
  if (state.m.size() != tensors.size() || dense.size() + 1 != tensors.size()) {
    throw Error(ErrorKind::DataError, "optimizer state does not match the model");
  }
  // The context table may have grown since the state was created.
  state.m.back().resize(tensors.back().size(), 0.0);
  state.v.back().resize(tensors.back().size(), 0.0);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto update = [&](double& p, double g, double& m, double& v) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon);
  };
  for (std::size_t k = 0; k < dense.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != tensors[k].size() || dense[k].size() != tensors[k].size()) {
      throw Error(ErrorKind::DataError, "gradient shape does not match the model");
    }
    for (std::size_t j = 0; j < tensors[k].size(); ++j) update(tensors[k][j], dense[k][j], m[j], v[j]);
  }
  auto ctx = tensors.back();
  auto& m = state.m.back();
  auto& v = state.v.back();
  const std::size_t width = params.shape.embed_dim;
  auto next = grads.context.begin();
  for (std::size_t row = 0; row * width < ctx.size(); ++row) {
    const std::vector<double>* g = nullptr;
    if (next != grads.context.end() && next->first == row) {
      g = &next->second;
      ++next;
    }
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t at = row * width + j;
      update(ctx[at], g ? (*g)[j] : 0.0, m[at], v[at]);
    }
  }
  if (next != grads.context.end()) throw Error(ErrorKind::VocabError, "gradient for an unknown context row");
}

std::vector<EdgeExample> assemble_examples(const TemporalBipartiteGraph& g, std::span<const Day> days,
                                           ModelParams& params, const WalkConfig& walk, Execution exec) {
  std::vector<EdgeExample> out;
  const auto& schema = g.schema();
  for (const Day i : days) {
    const Snapshot& s = g.at(i);
    const auto& edges = s.edges();
    const auto ag = build_augmented(s, walk, exec);
    const auto first_walk = static_cast<std::uint64_t>(i - g.first_day()) << 32;
    const auto contexts = sample_contexts_batch(ag, edges, first_walk, exec);
    const bool has_next = g.contains_day(i + 1);

    for (std::size_t k = 0; k < edges.size(); ++k) {
      const EdgeKey e = edges[k];
      EdgeExample ex;
      ex.edge = e;
      ex.day = i;
      ex.z.resize(schema.edge_dim());
      edge_features_into(schema, s, e, ex.z);
      ex.label = edge_label(g, e, i);
      if (ex.label.observed) {
        for (const auto& c : contexts[k]) ex.contexts.push_back(params.add_context(c));
      }
      if (has_next && g.at(i + 1).has_edge(e)) {
        const EdgeLabel next_label = edge_label(g, e, i + 1);
        TemporalTerm tt;
        tt.z_next.resize(schema.edge_dim());
        edge_features_into(schema, g.at(i + 1), e, tt.z_next);
        tt.next_observed = next_label.observed;
        if (!tt.next_observed) {
          // A pair whose edge was never observed has nothing to compare against.
          if (next_label.last_observed) {
            tt.z_reference.resize(schema.edge_dim());
            edge_features_into(schema, g.at(*next_label.last_observed), e, tt.z_reference);
            ex.temporal = std::move(tt);
          }
        } else {
          ex.temporal = std::move(tt);
        }
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<LabeledEdge> labeled_edges(const TemporalBipartiteGraph& g, std::span<const Day> days) {
  std::vector<LabeledEdge> out;
  for (const Day i : days) {
    const Snapshot& s = g.at(i);
    for (const EdgeKey e : s.edges()) {
      LabeledEdge le{e, i, std::vector<double>(g.schema().edge_dim()), edge_label(g, e, i)};
      edge_features_into(g.schema(), s, e, le.z);
      out.push_back(std::move(le));
    }
  }
  return out;
}

TrainResult train(const TemporalBipartiteGraph& g, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  result.split = chronological_split(g, config.split_fraction);
  const auto train_graph = g.truncated(result.split.train.back());

  ModelShape shape;
  shape.input_dim = g.schema().edge_dim();
  shape.embed_dim = config.embed_dim;
  shape.embed_layers = config.embed_layers;
  shape.predict_layers = config.predict_layers;
  result.params = init_params(shape, config.seed);
  ModelParams& params = result.params;

  const auto examples = assemble_examples(train_graph, result.split.train, params, config.walk, config.execution);
  if (examples.empty()) throw Error(ErrorKind::DataError, "no training examples");
  const auto test_edges = labeled_edges(g, result.split.test);

  std::vector<double> counts(params.vocab.size(), 0.0);
  for (const auto& ex : examples)
    for (auto c : ex.contexts) counts[c] += 1.0;
  std::optional<NegativeSampler> sampler;
  if (counts.size() >= 2 && config.negatives > 0) sampler.emplace(counts);
  const NegativeSampler* sp = sampler ? &*sampler : nullptr;

  // Fixed negatives so the logged loss is comparable across epochs.
  Batch eval_batch;
  eval_batch.objective = config.objective;
  for (std::size_t k = 0; k < examples.size(); ++k) {
    auto rng = make_stream(config.seed, kEvalTag, k);
    eval_batch.examples.push_back(to_batch_example(examples[k], true, sp, config.negatives, rng));
  }
  const auto eval_weights = ObjectiveWeights::co_train(config.loss_weights);

  auto record = [&](std::size_t epoch, double lr) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = batch_objective(params, eval_batch, eval_weights).value;
    m.train_auc = examples_auc(params, examples, config.execution);
    m.test_auc = labeled_auc(params, test_edges, config.execution);
    result.log.push_back(m);
    if (on_epoch) on_epoch(params, m);
  };
  record(0, decayed_lr(config.initial_lr, 0));

  AdamState adam = make_adam_state(params);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = decayed_lr(config.initial_lr, epoch);
    ObjectiveWeights weights = ObjectiveWeights::co_train(config.loss_weights);
    if (config.mode == TrainMode::Alternating) {
      weights = epoch % 2 == 0 ? ObjectiveWeights::unsupervised_phase(config.loss_weights)
                               : ObjectiveWeights::supervised_phase(config.loss_weights);
    }
    const bool with_contexts = weights.unsupervised != 0.0;

    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_stream(config.seed, kShuffleTag, epoch);
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[uniform_index(shuffle_rng, k)]);

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Batch batch;
      batch.objective = config.objective;
      batch.examples.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        auto rng = make_stream(mix_seed(config.seed) ^ epoch, kNegativeTag, order[k]);
        batch.examples.push_back(to_batch_example(examples[order[k]], with_contexts, sp, config.negatives, rng));
      }
      const auto r = backward(params, batch, weights, config.execution);
      adam_step(params, r.grads, adam, lr, config.adam);
    }
    record(epoch + 1, lr);
  }
  return result;
}

std::vector<EdgePrediction> predict(const ModelParams& params, const TemporalBipartiteGraph& g, Day day,
                                    Execution exec) {
  const Snapshot& s = g.at(day);
  const auto& edges = s.edges();
  std::vector<EdgePrediction> out(edges.size());
  const auto n = static_cast<std::ptrdiff_t>(edges.size());
  const std::size_t d = g.schema().edge_dim();
  if (d != params.shape.input_dim) {
    throw Error(ErrorKind::DataError, "dataset edge width " + std::to_string(d) + " != model input width " +
                                          std::to_string(params.shape.input_dim));
  }
  std::vector<std::exception_ptr> errors(edges.size());
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      std::vector<double> z(d);
      edge_features_into(g.schema(), s, edges[i], z);
      out[i] = {edges[i], predict_probability(params, z)};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::NotPresent) throw Error(ErrorKind::DataError, err.what());
      throw;
    }
  }
  return out;
}

}  // namespace churn

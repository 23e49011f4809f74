#include "churn/backward.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "churn/error.hpp"

namespace churn {

namespace {

struct FullForward {
  EmbedResult embed;
  LayerTape predict;
  double prob = 0.0;
};

FullForward full_forward(const ModelParams& params, std::span<const double> z) {
  FullForward f;
  f.embed = embed_forward(params, z);
  f.prob = sigmoid(predict_logit(params, f.embed.g, &f.predict));
  return f;
}

// Backpropagates one ReLU stack. dy is the gradient at the stack output and is
// replaced by the gradient at the stack input.
void backprop_stack(const std::vector<DenseLayer>& layers, const LayerTape& tape,
                    std::vector<DenseLayer>& grads, std::vector<double>& dy) {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    const auto& x = tape.activations[k];
    const auto& y = tape.activations[k + 1];
    auto& gl = grads[k];
    std::vector<double> dx(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      if (!(y[r] > 0.0)) continue;
      const double d = dy[r];
      if (d == 0.0) continue;
      gl.biases[r] += d;
      const double* wrow = layer.weights.data() + r * layer.in;
      double* grow = gl.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) {
        grow[c] += d * x[c];
        dx[c] += d * wrow[c];
      }
    }
    dy = std::move(dx);
  }
}

void backprop(const ModelParams& params, const FullForward& f, double dprob, std::vector<double> dg,
              Gradients& grads) {
  const double ds = dprob * f.prob * (1.0 - f.prob);
  std::vector<double> dh(params.sigmoid_weight.size(), 0.0);
  const auto& h = f.predict.output();
  if (ds != 0.0) {
    for (std::size_t k = 0; k < dh.size(); ++k) {
      grads.sigmoid_weight[k] += ds * h[k];
      dh[k] = ds * params.sigmoid_weight[k];
    }
  }
  backprop_stack(params.predict, f.predict, grads.predict, dh);
  for (std::size_t k = 0; k < dg.size(); ++k) dg[k] += dh[k];
  backprop_stack(params.embed, f.embed.tape, grads.embed, dg);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Adds coef * d(-log p)/d(.) for one context sample; returns -log p.
double context_backward(const ModelParams& params, std::span<const double> g, const ContextSample& c,
                        ContextObjective objective, double coef, std::vector<double>& dg,
                        Gradients& grads) {
  const std::size_t m = g.size();
  std::vector<std::uint32_t> idx;
  idx.reserve(c.negatives.size() + 1);
  idx.push_back(c.target);
  for (auto n : c.negatives) {
    if (n == c.target) throw Error(ErrorKind::VocabError, "negative sample equals the target");
    idx.push_back(n);
  }
  std::vector<double> s(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) s[k] = dot(g, params.context_row(idx[k]));

  std::vector<double> ds(idx.size());
  double nll = 0.0;
  if (objective == ContextObjective::SampledSoftmax) {
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    nll = -(s[0] - mx - std::log(z));
    for (std::size_t k = 0; k < idx.size(); ++k) ds[k] = std::exp(s[k] - mx) / z;
    ds[0] -= 1.0;
  } else {
    nll = -std::log(sigmoid(s[0]));
    ds[0] = sigmoid(s[0]) - 1.0;
    for (std::size_t k = 1; k < idx.size(); ++k) {
      nll -= std::log(sigmoid(-s[k]));
      ds[k] = sigmoid(s[k]);
    }
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double d = coef * ds[k];
    const auto row = params.context_row(idx[k]);
    auto& grow = grads.context[idx[k]];
    if (grow.empty()) grow.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      dg[j] += d * row[j];
      grow[j] += d * g[j];
    }
  }
  return nll;
}

struct ChunkResult {
  Gradients grads;
  double supervised_sum = 0.0;
  double unsupervised = 0.0;
  double temporal = 0.0;
};

void example_backward(const ModelParams& params, const BatchExample& ex, ContextObjective objective,
                      const ObjectiveWeights& w, double observed_count, double batch_size,
                      ChunkResult& out) {
  const std::size_t m = params.shape.embed_dim;
  const FullForward now = full_forward(params, ex.z);
  std::vector<double> dg_now(m, 0.0);
  double dprob_now = 0.0;

  if (ex.observed) {
    const double r = (ex.stays ? 0.0 : 1.0) - now.prob;
    out.supervised_sum += r * r;
    dprob_now += w.supervised * (-2.0 * r) / observed_count;
    const double coef = w.unsupervised / batch_size;
    for (const auto& c : ex.contexts) {
      out.unsupervised += context_backward(params, now.embed.g, c, objective, coef, dg_now, out.grads);
    }
  }

  if (ex.temporal) {
    const auto& tt = *ex.temporal;
    const FullForward next = full_forward(params, tt.z_next);
    std::vector<double> dg_next(m, 0.0);
    double dprob_next = 0.0;
    const double coef = w.temporal / batch_size;

    double sq = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double d = next.embed.g[k] - now.embed.g[k];
      sq += d * d;
    }
    const double norm = std::sqrt(sq);
    if (norm > 0.0 && coef != 0.0) {
      for (std::size_t k = 0; k < m; ++k) {
        const double d = coef * (next.embed.g[k] - now.embed.g[k]) / norm;
        dg_next[k] += d;
        dg_now[k] -= d;
      }
    }

    std::optional<FullForward> reference;
    double ref = now.prob;
    if (!tt.next_observed) {
      if (tt.z_reference.empty()) throw Error(ErrorKind::DataError, "censored temporal pair has no reference");
      reference = full_forward(params, tt.z_reference);
      ref = reference->prob;
    }
    const double hinge = ref - next.prob;
    out.temporal += norm + std::max(0.0, hinge);
    double dprob_ref = 0.0;
    if (hinge > 0.0) {
      dprob_next -= coef;
      if (reference) {
        dprob_ref += coef;
      } else {
        dprob_now += coef;
      }
    }
    backprop(params, next, dprob_next, std::move(dg_next), out.grads);
    if (reference && dprob_ref != 0.0) backprop(params, *reference, dprob_ref, std::vector<double>(m, 0.0), out.grads);
  }

  backprop(params, now, dprob_now, std::move(dg_now), out.grads);
}

void add_regularization(const ModelParams& params, const ObjectiveWeights& w, Gradients& g) {
  if (w.regularization == 0.0) return;
  auto add = [](std::span<double> dst, std::span<const double> src, double c) {
    if (c == 0.0) return;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += 2.0 * c * src[k];
  };
  const double r = w.regularization;
  for (std::size_t k = 0; k < params.embed.size(); ++k) {
    add(g.embed[k].weights, params.embed[k].weights, r * w.lambdas[0]);
    add(g.embed[k].biases, params.embed[k].biases, r * w.lambdas[1]);
  }
  for (std::size_t k = 0; k < params.predict.size(); ++k) {
    add(g.predict[k].weights, params.predict[k].weights, r * w.lambdas[2]);
    add(g.predict[k].biases, params.predict[k].biases, r * w.lambdas[3]);
  }
  add(g.sigmoid_weight, params.sigmoid_weight, r * w.lambdas[4]);
}

}  // namespace

ObjectiveWeights ObjectiveWeights::co_train(const LossWeights& w) {
  return {1.0, w.alpha, w.beta, w.gamma, w.lambdas};
}

ObjectiveWeights ObjectiveWeights::unsupervised_phase(const LossWeights& w) {
  return {0.0, w.alpha, 0.0, w.gamma, {w.lambdas[0], w.lambdas[1], 0.0, 0.0, 0.0}};
}

ObjectiveWeights ObjectiveWeights::supervised_phase(const LossWeights& w) {
  return {1.0, 0.0, w.beta, w.gamma, w.lambdas};
}

ObjectiveWeights ObjectiveWeights::zero() { return {0.0, 0.0, 0.0, 0.0, {0.0, 0.0, 0.0, 0.0, 0.0}}; }

Gradients::Gradients(const ModelParams& params) : sigmoid_weight(params.sigmoid_weight.size(), 0.0) {
  for (const auto& l : params.embed) embed.emplace_back(l.in, l.out);
  for (const auto& l : params.predict) predict.emplace_back(l.in, l.out);
}

void Gradients::add(const Gradients& other) {
  auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  };
  for (std::size_t k = 0; k < embed.size(); ++k) {
    acc(embed[k].weights, other.embed[k].weights);
    acc(embed[k].biases, other.embed[k].biases);
  }
  for (std::size_t k = 0; k < predict.size(); ++k) {
    acc(predict[k].weights, other.predict[k].weights);
    acc(predict[k].biases, other.predict[k].biases);
  }
  acc(sigmoid_weight, other.sigmoid_weight);
  for (const auto& [idx, row] : other.context) {
    auto& dst = context[idx];
    if (dst.empty()) {
      dst = row;
    } else {
      acc(dst, row);
    }
  }
}

std::vector<std::span<const double>> Gradients::dense_tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : embed) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  for (const auto& l : predict) {
    out.emplace_back(l.weights);
    out.emplace_back(l.biases);
  }
  out.emplace_back(sigmoid_weight);
  return out;
}

bool Gradients::all_finite() const {
  for (auto t : dense_tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  for (const auto& [idx, row] : context)
    for (double v : row)
      if (!std::isfinite(v)) return false;
  return true;
}

ObjectiveValue batch_objective(const ModelParams& params, const Batch& batch, const ObjectiveWeights& w) {
  if (batch.examples.empty()) throw Error(ErrorKind::EmptyBatch, "objective over an empty batch");
  const auto n = batch.examples.size();
  std::vector<EmbedResult> now(n);
  std::vector<SupervisedItem> sup(n);
  std::vector<UnsupervisedItem> unsup;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& ex = batch.examples[k];
    now[k] = embed_forward(params, ex.z);
    sup[k] = {predict_forward(params, now[k].g), ex.stays, ex.observed};
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto& ex = batch.examples[k];
    if (ex.observed && !ex.contexts.empty()) unsup.push_back({now[k].g, ex.contexts});
  }

  std::vector<std::vector<double>> next_g;
  std::vector<TemporalPair> pairs;
  next_g.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& ex = batch.examples[k];
    if (!ex.temporal) continue;
    next_g.push_back(embed_forward(params, ex.temporal->z_next).g);
    TemporalPair p;
    p.g_now = now[k].g;
    p.g_next = next_g.back();
    p.f_now = sup[k].prob;
    p.f_next = predict_forward(params, next_g.back());
    p.next_observed = ex.temporal->next_observed;
    if (!p.next_observed && !ex.temporal->z_reference.empty()) {
      p.f_reference = predict_probability(params, ex.temporal->z_reference);
    }
    pairs.push_back(p);
  }

  ObjectiveValue v;
  v.components.supervised = supervised_loss(sup);
  v.components.unsupervised = unsup.empty() ? 0.0 : unsupervised_loss(params, unsup, batch.objective);
  v.components.temporal = temporal_loss(pairs);
  v.components.regularization = regularization_loss(params, w.lambdas);
  const double b = static_cast<double>(n);
  v.value = w.supervised * v.components.supervised + w.unsupervised * v.components.unsupervised / b +
            w.temporal * v.components.temporal / b + w.regularization * v.components.regularization;
  return v;
}

BackwardResult backward(const ModelParams& params, const Batch& batch, const ObjectiveWeights& w,
                        Execution exec) {
  const auto n = batch.examples.size();
  if (n == 0) throw Error(ErrorKind::EmptyBatch, "gradient over an empty batch");
  std::size_t observed = 0;
  for (const auto& ex : batch.examples) observed += ex.observed ? 1 : 0;
  const double observed_count = observed == 0 ? 1.0 : static_cast<double>(observed);
  const double batch_size = static_cast<double>(n);

  BackwardResult result{{}, Gradients(params)};
  ChunkResult total{Gradients(params)};

  if (exec == Execution::Serial) {
    for (const auto& ex : batch.examples) {
      example_backward(params, ex, batch.objective, w, observed_count, batch_size, total);
    }
  } else {
    const std::size_t chunks = (n + kBackwardChunk - 1) / kBackwardChunk;
    std::vector<ChunkResult> parts(chunks);
    std::vector<std::exception_ptr> errors(chunks);
    const auto nc = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < nc; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      try {
        parts[ci].grads = Gradients(params);
        const std::size_t end = std::min(n, (ci + 1) * kBackwardChunk);
        for (std::size_t k = ci * kBackwardChunk; k < end; ++k) {
          example_backward(params, batch.examples[k], batch.objective, w, observed_count, batch_size, parts[ci]);
        }
      } catch (...) {
        errors[ci] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (const auto& p : parts) {
      total.grads.add(p.grads);
      total.supervised_sum += p.supervised_sum;
      total.unsupervised += p.unsupervised;
      total.temporal += p.temporal;
    }
  }

  add_regularization(params, w, total.grads);
  if (!total.grads.all_finite()) throw Error(ErrorKind::NumericError, "non-finite gradient");

  auto& c = result.objective.components;
  c.supervised = observed == 0 ? 0.0 : total.supervised_sum / static_cast<double>(observed);
  c.unsupervised = total.unsupervised;
  c.temporal = total.temporal;
  c.regularization = regularization_loss(params, w.lambdas);
  result.objective.value = w.supervised * c.supervised + w.unsupervised * c.unsupervised / batch_size +
                           w.temporal * c.temporal / batch_size + w.regularization * c.regularization;
  result.grads = std::move(total.grads);
  return result;
}

}  // namespace churn

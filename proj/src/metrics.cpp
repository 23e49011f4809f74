#include "churn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "churn/error.hpp"

namespace churn {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of added indices < i.
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

// truth position of each item, listed in pred order.
std::vector<std::size_t> truth_positions(const RankedList& pred, const RankedList& truth) {
  const std::size_t n = pred.size();
  if (truth.size() != n) throw Error(ErrorKind::DataError, "ranked lists differ in length");
  if (n < 2) throw Error(ErrorKind::DataError, "rank correlation needs at least two items");
  std::uint32_t max_item = 0;
  for (const auto& e : truth.entries) max_item = std::max(max_item, e.game);
  for (const auto& e : pred.entries) max_item = std::max(max_item, e.game);
  constexpr std::size_t kMissing = static_cast<std::size_t>(-1);
  std::vector<std::size_t> where(static_cast<std::size_t>(max_item) + 1, kMissing);
  for (std::size_t k = 0; k < n; ++k) {
    auto& w = where[truth.entries[k].game];
    if (w != kMissing) throw Error(ErrorKind::DataError, "duplicate item in ranked list");
    w = k;
  }
  std::vector<std::size_t> out(n);
  std::vector<char> seen(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto w = where[pred.entries[k].game];
    if (w == kMissing || seen[w]) throw Error(ErrorKind::DataError, "ranked lists hold different items");
    seen[w] = 1;
    out[k] = w;
  }
  return out;
}

// For every item (indexed by its position p in the first order), the number
// of concordant minus discordant partners: 4A + n - 1 - 2p - 2q, where q is its
// position in the second order and A counts items before it in both.
std::vector<std::int64_t> concordance_balance(const std::vector<std::size_t>& q) {
  const std::size_t n = q.size();
  Fenwick fw(n);
  std::vector<std::int64_t> out(n);
  const auto nn = static_cast<std::int64_t>(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::int64_t a = fw.prefix(q[p]);
    out[p] = 4 * a + nn - 1 - 2 * static_cast<std::int64_t>(p) - 2 * static_cast<std::int64_t>(q[p]);
    fw.add(q[p]);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

void check_k(std::size_t k, std::size_t n) {
  if (k == 0 || k > n) {
    throw Error(ErrorKind::DataError, "K = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
}

// rel[j] for positions 0..k-1.
std::vector<char> relevance(const RankedList& pred, const RankedList& truth, std::size_t k) {
  check_k(k, pred.size());
  if (truth.size() != pred.size()) throw Error(ErrorKind::DataError, "ranked lists differ in length");
  std::uint32_t max_item = 0;
  for (const auto& e : truth.entries) max_item = std::max(max_item, e.game);
  for (const auto& e : pred.entries) max_item = std::max(max_item, e.game);
  std::vector<std::size_t> where(static_cast<std::size_t>(max_item) + 1, static_cast<std::size_t>(-1));
  for (std::size_t j = 0; j < truth.size(); ++j) where[truth.entries[j].game] = j;
  std::vector<char> rel(k);
  for (std::size_t j = 0; j < k; ++j) rel[j] = where[pred.entries[j].game] <= j ? 1 : 0;
  return rel;
}

}  // namespace

std::vector<std::uint32_t> RankedList::items() const {
  std::vector<std::uint32_t> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.game);
  return out;
}

std::optional<double> auc(std::span<const ScoredLabel> s) {
  std::size_t pos = 0;
  for (const auto& x : s) pos += x.positive ? 1 : 0;
  const std::size_t neg = s.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<double> scores(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) scores[k] = s[k].score;
  const auto r = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s[k].positive) rank_sum += r[k];
  const double np = static_cast<double>(pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(neg));
}

PrecisionRecall precision_recall(std::span<const ScoredLabel> s, double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& x : s) {
    const bool predicted = x.score >= threshold;
    if (predicted && x.positive) ++tp;
    if (predicted && !x.positive) ++fp;
    if (!predicted && x.positive) ++fn;
  }
  PrecisionRecall pr;
  if (tp + fp > 0) pr.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) pr.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

double kendall_tau(const RankedList& pred, const RankedList& truth) {
  const auto q = truth_positions(pred, truth);
  const std::size_t n = q.size();
  // Discordant pairs are inversions of q.
  Fenwick fw(n);
  std::int64_t inversions = 0;
  for (std::size_t p = 0; p < n; ++p) {
    inversions += static_cast<std::int64_t>(p) - fw.prefix(q[p]);
    fw.add(q[p]);
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return (pairs - 2.0 * static_cast<double>(inversions)) / pairs;
}

double weighted_kendall_tau(const RankedList& pred, const RankedList& truth) {
  const auto q = truth_positions(pred, truth);
  const std::size_t n = q.size();
  const auto balance = concordance_balance(q);
  double weight_sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) weight_sum += 1.0 / static_cast<double>(r + 1);
  const double norm = static_cast<double>(n - 1) * weight_sum;

  double by_pred = 0.0;
  double by_truth = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double b = static_cast<double>(balance[p]);
    by_pred += b / static_cast<double>(p + 1);
    by_truth += b / static_cast<double>(q[p] + 1);
  }
  return 0.5 * (by_pred / norm + by_truth / norm);
}

double spearman(const RankedList& pred, const RankedList& truth) {
  const auto q = truth_positions(pred, truth);
  const double n = static_cast<double>(q.size());
  double d2 = 0.0;
  for (std::size_t p = 0; p < q.size(); ++p) {
    const double d = static_cast<double>(p) - static_cast<double>(q[p]);
    d2 += d * d;
  }
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DataError, "score vectors differ in length");
  if (a.size() < 2) throw Error(ErrorKind::DataError, "rank correlation needs at least two items");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    const double x = ra[k] - mean;
    const double y = rb[k] - mean;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

double avg_precision_at_k(const RankedList& pred, const RankedList& truth, std::size_t k) {
  const auto rel = relevance(pred, truth, k);
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    hits += rel[i];
    sum += hits / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(k);
}

double average_precision(const RankedList& pred, const RankedList& truth, std::size_t k) {
  const auto rel = relevance(pred, truth, k);
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    hits += rel[i];
    if (rel[i]) sum += hits / static_cast<double>(i + 1);
  }
  return sum / std::max(1.0, hits);
}

double mean_average_precision(std::span<const double> per_day) {
  if (per_day.empty()) throw Error(ErrorKind::EmptyInput, "no per-day average precision values");
  double s = 0.0;
  for (double v : per_day) s += v;
  return s / static_cast<double>(per_day.size());
}

}  // namespace churn

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace churn {

// Games in descending score order; equal scores ordered by ascending game index.
struct RankedEntry {
  std::uint32_t game = 0;
  double score = 0.0;
};

struct RankedList {
  std::vector<RankedEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::vector<std::uint32_t> items() const;
};

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

// Mann-Whitney AUC with midranks; ties count 1/2. Empty when either class is
// missing.
std::optional<double> auc(std::span<const ScoredLabel> s);

struct PrecisionRecall {
  std::optional<double> precision;  // empty with no predicted positives
  std::optional<double> recall;     // empty with no actual positives
};

// score >= threshold is a predicted positive.
PrecisionRecall precision_recall(std::span<const ScoredLabel> s, double threshold = 0.5);

// The rank-correlation functions compare orders only and require both lists
// to hold the same items (DataError otherwise, or when fewer than 2 items).
double kendall_tau(const RankedList& pred, const RankedList& truth);

// Additive hyperbolic weighting: a pair at 0-based positions r, s weighs
// 1/(r+1) + 1/(s+1). Positions are taken in one list and then the other, and
// the two normalized values are averaged.
double weighted_kendall_tau(const RankedList& pred, const RankedList& truth);

double spearman(const RankedList& pred, const RankedList& truth);

// Pearson correlation of average ranks. Empty when either side is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// Mean over i = 1..K of precision-at-i, where the item at position j counts
// as relevant when it is among the first j items of truth. K in [1, n].
double avg_precision_at_k(const RankedList& pred, const RankedList& truth, std::size_t k);

// Position-weighted average precision over the first K positions:
// sum_i P@i * rel(i) / max(1, sum_i rel(i)).
double average_precision(const RankedList& pred, const RankedList& truth, std::size_t k);

// Mean of per-day values; EmptyInput when there are none.
double mean_average_precision(std::span<const double> per_day);

}  // namespace churn

#pragma once

// Binary classification metrics over probability scores and 0/1 labels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace chainsearch {

inline constexpr double kDefaultThreshold = 0.5;

struct MetricReport {
  double auc = 0.0;
  double bacc = 0.0;
  double f1 = 0.0;
  double acc = 0.0;

  bool operator==(const MetricReport&) const = default;
};

enum class Metric { Auc, Bacc, F1 };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::Auc: return "auc";
    case Metric::Bacc: return "bacc";
    case Metric::F1: return "f1";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "auc") return Metric::Auc;
  if (s == "bacc") return Metric::Bacc;
  if (s == "f1") return Metric::F1;
  throw DomainError("unknown metric '" + s + "'");
}

inline double metric_value(const MetricReport& r, Metric m) {
  switch (m) {
    case Metric::Auc: return r.auc;
    case Metric::Bacc: return r.bacc;
    case Metric::F1: return r.f1;
  }
  return 0.0;
}

// Validated view over scores and labels.
class ScoredLabels {
public:
  ScoredLabels(std::span<const double> scores, std::span<const int> labels)
      : scores_(scores), labels_(labels) {
    if (scores.size() != labels.size())
      throw DomainError("scores and labels differ in length");
    if (scores.empty()) throw DomainError("no scored samples");
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw DomainError("score outside [0,1]");
      if (labels[i] != 0 && labels[i] != 1) throw DomainError("label is not 0/1");
    }
  }

  std::span<const double> scores() const noexcept { return scores_; }
  std::span<const int> labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return scores_.size(); }

private:
  std::span<const double> scores_;
  std::span<const int> labels_;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(const ScoredLabels& d, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool pred = d.scores()[i] >= threshold;
    const bool pos = d.labels()[i] == 1;
    if (pred && pos) ++c.tp;
    else if (pred) ++c.fp;
    else if (pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Mann-Whitney U via average ranks; ties count 1/2 per pair.
inline double roc_auc(const ScoredLabels& d) {
  const std::size_t n = d.size();
  std::size_t n_pos = 0;
  for (int l : d.labels()) n_pos += static_cast<std::size_t>(l);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC undefined: labels contain a single class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d.scores()[a] < d.scores()[b]; });
  // Twice the rank sum of positives stays integral with tied (half) ranks.
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && d.scores()[order[j]] == d.scores()[order[i]]) ++j;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (d.labels()[order[k]] == 1) twice_rank_sum += twice_avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  const double u = 0.5 * twice_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

inline double balanced_accuracy(const ScoredLabels& d, double threshold = kDefaultThreshold) {
  const auto c = confusion(d, threshold);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0)
    throw UndefinedMetricError("balanced accuracy undefined: labels contain a single class");
  const double tpr = double(c.tp) / double(c.tp + c.fn);
  const double tnr = double(c.tn) / double(c.tn + c.fp);
  return (tpr + tnr) / 2.0;
}

// Harmonic mean of precision and recall in count form, 2tp / (2tp + fp + fn);
// 0 when there are no true positives.
inline double f1(const ScoredLabels& d, double threshold = kDefaultThreshold) {
  const auto c = confusion(d, threshold);
  if (c.tp == 0) return 0.0;
  return double(2 * c.tp) / double(2 * c.tp + c.fp + c.fn);
}

inline double accuracy(const ScoredLabels& d, double threshold = kDefaultThreshold) {
  const auto c = confusion(d, threshold);
  return double(c.tp + c.tn) / double(d.size());
}

inline MetricReport evaluate_scores(const ScoredLabels& d, double threshold = kDefaultThreshold) {
  return {roc_auc(d), balanced_accuracy(d, threshold), f1(d, threshold), accuracy(d, threshold)};
}

}  // namespace chainsearch

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace typeforge {

struct MetricsReport {
  double strict = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
};

namespace detail {

// label sets are sorted id vectors
inline int intersection_size(const std::vector<int>& a,
                             const std::vector<int>& b) {
  int n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

inline double f1_from_counts(double tp, double pred, double gold) {
  if (pred == 0.0 && gold == 0.0) return 1.0;  // both empty: exact match
  if (tp == 0.0) return 0.0;
  const double p = tp / pred;
  const double r = tp / gold;
  return 2.0 * p * r / (p + r);
}

}  // namespace detail

// strict accuracy, mention-averaged F1, corpus-pooled F1. Predictions and
// golds are aligned by position; every mention needs an entry (an empty set
// is a valid prediction).
inline MetricsReport evaluate(const std::vector<std::vector<int>>& predictions,
                              const std::vector<std::vector<int>>& gold) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument(
        "evaluate: missing predictions (" + std::to_string(predictions.size()) +
        " predictions for " + std::to_string(gold.size()) + " mentions)");
  }
  if (predictions.empty()) {
    throw std::invalid_argument("evaluate: no mentions to score");
  }
  const double n = static_cast<double>(predictions.size());
  double exact = 0.0;
  double macro_sum = 0.0;
  std::int64_t tp_total = 0, pred_total = 0, gold_total = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = gold[i];
    const int tp = detail::intersection_size(p, g);
    if (p == g) exact += 1.0;
    macro_sum += detail::f1_from_counts(tp, p.size(), g.size());
    tp_total += tp;
    pred_total += static_cast<std::int64_t>(p.size());
    gold_total += static_cast<std::int64_t>(g.size());
  }
  MetricsReport r;
  r.strict = exact / n;
  r.macro_f1 = macro_sum / n;
  r.micro_f1 = detail::f1_from_counts(static_cast<double>(tp_total),
                                      static_cast<double>(pred_total),
                                      static_cast<double>(gold_total));
  return r;
}

}  // namespace typeforge

#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "typeforge/corpus.hpp"
#include "typeforge/embedding.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/typing.hpp"

namespace typeforge {

// A root-to-node chain in the hierarchy; possibly empty. Label ids are kept
// sorted so predictions compare directly against gold sets.
struct Prediction {
  int mention = -1;
  std::vector<int> labels;
};

namespace detail {

inline std::optional<int> best_scoring(std::span<const double> phi_m,
                                       const std::vector<int>& candidates,
                                       const LabelEmbeddings& labels) {
  std::optional<int> best;
  double best_score = 0.0;
  for (int y : candidates) {  // ascending ids: strict > keeps the lowest on ties
    const double s = score(phi_m, y, labels);
    if (!best || s > best_score) {
      best = y;
      best_score = s;
    }
  }
  return best;
}

}  // namespace detail

// Top-down search: starting from the roots, repeatedly take the best-scoring
// candidate; accept it while its score stays >= 0 and descend into its
// children. force_root emits the best root even when every root scores
// below zero.
inline Prediction top_down_infer(std::span<const double> phi_m,
                                 const LabelEmbeddings& labels,
                                 const TypeHierarchy& hierarchy,
                                 bool force_root = false) {
  Prediction out;
  const std::vector<int>* candidates = &hierarchy.roots();
  bool at_root = true;
  while (!candidates->empty()) {
    const auto best = detail::best_scoring(phi_m, *candidates, labels);
    if (!best) break;
    if (score(phi_m, *best, labels) < 0.0) {
      if (at_root && force_root) out.labels.push_back(*best);
      break;
    }
    out.labels.push_back(*best);
    candidates = &hierarchy.children(*best);
    at_root = false;
  }
  std::sort(out.labels.begin(), out.labels.end());
  return out;
}

struct Neighbor {
  int mention = -1;
  double similarity = 0.0;
};

struct NeighborQueryResult {
  std::vector<Neighbor> neighbors;  // descending similarity, ties by lower id
  bool truncated = false;           // k exceeded the number of other rows
  int skipped_zero = 0;             // rows with zero norm, not rankable
};

// cosine ranking over rows of a representation matrix, query excluded
inline NeighborQueryResult nearest_neighbors(const Matrix& representations,
                                             int query, int k) {
  const int n = static_cast<int>(representations.rows());
  if (query < 0 || query >= n) {
    throw std::invalid_argument("nearest_neighbors: query id " +
                                std::to_string(query) + " out of range");
  }
  if (k < 1) {
    throw std::invalid_argument("nearest_neighbors: k must be >= 1");
  }
  const auto q = representations.row(query);
  if (squared_norm(q) == 0.0) {
    throw std::invalid_argument("nearest_neighbors: query row " +
                                std::to_string(query) + " has zero norm");
  }
  NeighborQueryResult out;
  out.neighbors.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    if (i == query) continue;
    const auto row = representations.row(i);
    if (squared_norm(row) == 0.0) {
      ++out.skipped_zero;
      continue;
    }
    out.neighbors.push_back({i, cosine(q, row)});
  }
  std::sort(out.neighbors.begin(), out.neighbors.end(),
            [](const Neighbor& a, const Neighbor& b) {
              if (a.similarity != b.similarity) {
                return a.similarity > b.similarity;
              }
              return a.mention < b.mention;
            });
  if (static_cast<int>(out.neighbors.size()) > k) {
    out.neighbors.resize(k);
  } else if (static_cast<int>(out.neighbors.size()) < k) {
    out.truncated = true;
  }
  return out;
}

}  // namespace typeforge

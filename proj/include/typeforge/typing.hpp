#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "typeforge/corpus.hpp"
#include "typeforge/io.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/random.hpp"

namespace typeforge {

struct LabelEmbeddings {
  Matrix embed;               // Y x k, row y = phi_y
  std::vector<double> bias;   // per-type bias

  int type_count() const { return static_cast<int>(embed.rows()); }
  int width() const { return static_cast<int>(embed.cols()); }

  static LabelEmbeddings init(int y_count, int k, Rng& rng) {
    LabelEmbeddings l;
    l.embed = Matrix(y_count, k);
    for (double& x : l.embed.data()) x = rng.uniform(-0.05, 0.05);
    l.bias.assign(y_count, 0.0);
    return l;
  }
};

// f(phi_m, phi_y) = phi_m . phi_y + bias_y
inline double score(std::span<const double> phi_m, int y,
                    const LabelEmbeddings& labels) {
  return dot(phi_m, labels.embed.row(y)) + labels.bias[y];
}

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

namespace detail {

// scores for all Y types, in type-id order
inline std::vector<double> all_scores(std::span<const double> phi_m,
                                      const LabelEmbeddings& labels) {
  std::vector<double> f(labels.type_count());
  for (int y = 0; y < labels.type_count(); ++y) f[y] = score(phi_m, y, labels);
  return f;
}

inline std::vector<char> membership(const std::vector<int>& ids, int y_count) {
  std::vector<char> in(y_count, 0);
  for (int y : ids) in[y] = 1;
  return in;
}

}  // namespace detail

// Margin loss for clean mentions: every true label is pushed above +1, every
// false label below -1. True terms accumulate in ascending type id, then
// false terms in ascending type id.
inline double loss_clean(std::span<const double> phi_m,
                         const std::vector<int>& true_ids,
                         const LabelEmbeddings& labels) {
  if (true_ids.empty()) {
    throw std::invalid_argument("loss_clean: empty true label set");
  }
  const auto f = detail::all_scores(phi_m, labels);
  const auto in = detail::membership(true_ids, labels.type_count());
  double loss = 0.0;
  for (int y : true_ids) loss += hinge(1.0 - f[y]);
  for (int y = 0; y < labels.type_count(); ++y) {
    if (!in[y]) loss += hinge(1.0 + f[y]);
  }
  return loss;
}

// Margin loss for noisy mentions: only the best-scoring candidate label
// y* = argmax_{y in T} f is pulled up; the complement is pushed down as in
// the clean loss. Ties on the argmax go to the lowest type id.
inline std::pair<double, int> loss_noisy(std::span<const double> phi_m,
                                         const std::vector<int>& true_ids,
                                         const LabelEmbeddings& labels) {
  if (true_ids.empty()) {
    throw std::invalid_argument("loss_noisy: empty noisy label set");
  }
  const auto f = detail::all_scores(phi_m, labels);
  const auto in = detail::membership(true_ids, labels.type_count());
  int best = true_ids.front();
  for (int y : true_ids) {
    if (f[y] > f[best]) best = y;
  }
  double loss = hinge(1.0 - f[best]);
  for (int y = 0; y < labels.type_count(); ++y) {
    if (!in[y]) loss += hinge(1.0 + f[y]);
  }
  return {loss, best};
}

struct LossBreakdown {
  double clean = 0.0;
  double noisy = 0.0;
  double total() const { return clean + noisy; }
};

struct BatchMention {
  int row = -1;                          // row in the representation matrix
  const std::vector<int>* labels = nullptr;
  Cleanliness tag = Cleanliness::clean;
};

struct TypingGradients {
  Matrix d_rows;               // gradient of the representation matrix
  Matrix d_label;              // Y x k
  std::vector<double> d_bias;  // Y
  LossBreakdown loss;
};

// Hinge subgradients summed over the batch; y* is held fixed within the step.
// Satisfied margins (including exactly-met ones) contribute nothing.
inline TypingGradients typing_loss_grads(const Matrix& phi,
                                         std::span<const BatchMention> batch,
                                         const LabelEmbeddings& labels) {
  check_shapes(phi.cols(), labels.embed.cols(), "typing_loss_grads width");
  const int y_count = labels.type_count();
  const int k = labels.width();
  TypingGradients out;
  out.d_rows = Matrix(phi.rows(), phi.cols());
  out.d_label = Matrix(y_count, k);
  out.d_bias.assign(y_count, 0.0);

  for (const auto& bm : batch) {
    const auto row = phi.row(bm.row);
    auto d_row = out.d_rows.row(bm.row);
    const auto f = detail::all_scores(row, labels);
    const auto in = detail::membership(*bm.labels, y_count);

    auto pull_up = [&](int y) {
      // d/df ReLU(1 - f) = -1 when f < 1
      if (1.0 - f[y] > 0.0) {
        const auto phi_y = labels.embed.row(y);
        auto d_phi_y = out.d_label.row(y);
        for (int d = 0; d < k; ++d) {
          d_row[d] -= phi_y[d];
          d_phi_y[d] -= row[d];
        }
        out.d_bias[y] -= 1.0;
      }
    };

    if (bm.tag == Cleanliness::clean) {
      const double l = loss_clean(row, *bm.labels, labels);
      out.loss.clean += l;
      for (int y : *bm.labels) pull_up(y);
    } else {
      const auto [l, best] = loss_noisy(row, *bm.labels, labels);
      out.loss.noisy += l;
      pull_up(best);
    }
    for (int y = 0; y < y_count; ++y) {
      // d/df ReLU(1 + f) = +1 when f > -1
      if (!in[y] && 1.0 + f[y] > 0.0) {
        const auto phi_y = labels.embed.row(y);
        auto d_phi_y = out.d_label.row(y);
        for (int d = 0; d < k; ++d) {
          d_row[d] += phi_y[d];
          d_phi_y[d] += row[d];
        }
        out.d_bias[y] += 1.0;
      }
    }
  }
  return out;
}

// checkpoint: header (Y, k) as u32 + label matrix + bias, all f64
inline void save_labels(const LabelEmbeddings& labels, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, static_cast<std::uint32_t>(labels.type_count()));
  write_u32(os, static_cast<std::uint32_t>(labels.width()));
  for (double v : labels.embed.data()) write_f64(os, v);
  for (double v : labels.bias) write_f64(os, v);
  if (!os) throw ValidationError("failed writing typing checkpoint: " + path);
}

inline LabelEmbeddings load_labels(const std::string& path) {
  auto is = open_input(path);
  const std::uint32_t y_count = read_u32(is, "typing Y");
  const std::uint32_t k = read_u32(is, "typing k");
  LabelEmbeddings l;
  l.embed = Matrix(y_count, k);
  for (double& v : l.embed.data()) v = read_f64(is, "typing embeddings");
  l.bias.assign(y_count, 0.0);
  for (double& v : l.bias) v = read_f64(is, "typing bias");
  if (!all_finite(l.embed) || !all_finite(l.bias)) {
    throw ValidationError("typing checkpoint contains non-finite values: " +
                          path);
  }
  return l;
}

}  // namespace typeforge

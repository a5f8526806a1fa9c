#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "typeforge/corpus.hpp"
#include "typeforge/io.hpp"
#include "typeforge/matrix.hpp"

namespace typeforge {

// Pretrained context-dependent token vectors, keyed by (record, token index).
// The table is immutable after loading; lookups are safe from any thread.
class TokenEmbeddingTable {
 public:
  TokenEmbeddingTable() = default;
  explicit TokenEmbeddingTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }

  static std::uint64_t key(int record, int token) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(record)) << 32) |
           static_cast<std::uint32_t>(token);
  }

  void insert(int record, int token, std::span<const double> v) {
    if (static_cast<int>(v.size()) != dim_) {
      throw ValidationError("embedding width " + std::to_string(v.size()) +
                            " does not match table width " + std::to_string(dim_));
    }
    if (!all_finite(v)) {
      throw ValidationError("non-finite embedding for record " +
                            std::to_string(record) + " token " +
                            std::to_string(token));
    }
    auto [it, fresh] = index_.emplace(key(record, token), data_.size() / dim_);
    if (!fresh) {
      throw ValidationError("duplicate embedding entry for record " +
                            std::to_string(record) + " token " +
                            std::to_string(token));
    }
    data_.insert(data_.end(), v.begin(), v.end());
  }

  const double* find(int record, int token) const {
    auto it = index_.find(key(record, token));
    if (it == index_.end()) return nullptr;
    return data_.data() + it->second * dim_;
  }

  // (record, token) keys in sorted order; used by the writers so saved files
  // do not depend on hash-map iteration order.
  std::vector<std::pair<int, int>> sorted_keys() const {
    std::vector<std::pair<int, int>> keys;
    keys.reserve(index_.size());
    for (const auto& [k, _] : index_) {
      keys.emplace_back(static_cast<int>(k >> 32),
                        static_cast<int>(k & 0xffffffffull));
    }
    std::sort(keys.begin(), keys.end());
    return keys;
  }

 private:
  int dim_ = 0;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<double> data_;
};

// --- embedding file formats -------------------------------------------------

inline constexpr std::uint32_t kEmbeddingMagic = 0x4d454654;  // "TFEM"
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void save_embeddings_binary(const TokenEmbeddingTable& table,
                                   const std::string& path) {
  auto os = open_output(path);
  write_u32(os, kEmbeddingMagic);
  write_u32(os, kEmbeddingVersion);
  write_u32(os, static_cast<std::uint32_t>(table.size()));
  write_u32(os, static_cast<std::uint32_t>(table.dim()));
  for (const auto& [rec, tok] : table.sorted_keys()) {
    write_u32(os, static_cast<std::uint32_t>(rec));
    write_u32(os, static_cast<std::uint32_t>(tok));
    const double* v = table.find(rec, tok);
    for (int d = 0; d < table.dim(); ++d) {
      write_f32(os, static_cast<float>(v[d]));
    }
  }
  if (!os) throw ValidationError("failed writing embeddings: " + path);
}

inline TokenEmbeddingTable load_embeddings_binary(const std::string& path) {
  auto is = open_input(path);
  if (read_u32(is, "embedding magic") != kEmbeddingMagic) {
    throw ValidationError("not an embedding file: " + path);
  }
  if (read_u32(is, "embedding version") != kEmbeddingVersion) {
    throw ValidationError("unsupported embedding file version: " + path);
  }
  const std::uint32_t count = read_u32(is, "embedding record count");
  const std::uint32_t dim = read_u32(is, "embedding dim");
  if (dim == 0) throw ValidationError("embedding dim is zero: " + path);
  TokenEmbeddingTable table(static_cast<int>(dim));
  std::vector<double> v(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int rec = static_cast<int>(read_u32(is, "embedding record index"));
    const int tok = static_cast<int>(read_u32(is, "embedding token index"));
    for (auto& x : v) x = static_cast<double>(read_f32(is, "embedding value"));
    table.insert(rec, tok, v);
  }
  return table;
}

// one line per entry: `record token v1 ... vd`
inline TokenEmbeddingTable load_embeddings_text(const std::string& path) {
  auto is = open_input(path, /*binary=*/false);
  TokenEmbeddingTable table;
  std::string line;
  int line_no = 0;
  int dim = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int rec = 0, tok = 0;
    if (!(ls >> rec >> tok)) {
      throw ValidationError(path + ":line " + std::to_string(line_no) +
                            ": malformed embedding line");
    }
    std::vector<double> v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (v.empty()) {
      throw ValidationError(path + ":line " + std::to_string(line_no) +
                            ": embedding line has no values");
    }
    if (dim < 0) {
      dim = static_cast<int>(v.size());
      table = TokenEmbeddingTable(dim);
    } else if (static_cast<int>(v.size()) != dim) {
      throw ValidationError(path + ":line " + std::to_string(line_no) +
                            ": embedding width changed from " +
                            std::to_string(dim) + " to " +
                            std::to_string(v.size()));
    }
    table.insert(rec, tok, v);
  }
  if (table.size() == 0) throw ValidationError("empty embedding file: " + path);
  return table;
}

// --- mention embeddings and pivots -------------------------------------------

// mean over the span's token vectors
inline std::vector<double> mention_embedding(const Mention& m,
                                             const TokenEmbeddingTable& table) {
  std::vector<double> acc(table.dim(), 0.0);
  for (int t = m.start; t < m.end; ++t) {
    const double* v = table.find(m.record, t);
    if (v == nullptr) {
      throw ValidationError("mention " + std::to_string(m.id) +
                            ": no embedding for record " +
                            std::to_string(m.record) + " token " +
                            std::to_string(t));
    }
    for (int d = 0; d < table.dim(); ++d) acc[d] += v[d];
  }
  const double inv = 1.0 / static_cast<double>(m.end - m.start);
  for (auto& x : acc) x *= inv;
  return acc;
}

// N x d_e, row i = embedding of mention i
inline Matrix mention_embedding_matrix(const Corpus& corpus,
                                       const TokenEmbeddingTable& table) {
  Matrix out(corpus.mentions.size(), table.dim());
  for (const auto& m : corpus.mentions) {
    const auto emb = mention_embedding(m, table);
    auto row = out.row(m.id);
    std::copy(emb.begin(), emb.end(), row.begin());
  }
  return out;
}

inline double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  check_shapes(u.size(), v.size(), "cosine");
  if (!all_finite(u) || !all_finite(v)) {
    throw std::domain_error("cosine: non-finite input vector");
  }
  const double nu = squared_norm(u);
  const double nv = squared_norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw std::domain_error("cosine: zero input vector");
  }
  // sqrt(nu * nv) keeps cosine(u, u) at exactly 1; the factored form can
  // fall one ulp short
  const double nunv = nu * nv;
  const double denom = std::isfinite(nunv) ? std::sqrt(nunv)
                                           : std::sqrt(nu) * std::sqrt(nv);
  const double c = dot(u, v) / denom;
  return std::min(1.0, std::max(-1.0, c));
}

// Per-type centroids of the training mention embeddings. A multi-label
// mention contributes once to each of its labels. Stored as the mean; the
// mean and the raw sum are interchangeable for every cosine decision.
struct PivotSet {
  Matrix pivots;                    // Y x d_e
  std::vector<std::int64_t> support;

  int type_count() const { return static_cast<int>(support.size()); }
  bool usable(int y) const { return support[y] > 0; }

  int usable_count() const {
    int n = 0;
    for (auto s : support) n += (s > 0) ? 1 : 0;
    return n;
  }
};

inline PivotSet compute_pivots(const Corpus& corpus,
                               const Matrix& mention_embeddings) {
  const int y_count = corpus.hierarchy.size();
  const std::size_t dim = mention_embeddings.cols();
  PivotSet out;
  out.pivots = Matrix(y_count, dim);
  out.support.assign(y_count, 0);
  for (const auto& m : corpus.mentions) {
    if (m.split != Split::train) continue;
    const auto emb = mention_embeddings.row(m.id);
    for (int y : m.labels) {
      auto row = out.pivots.row(y);
      for (std::size_t d = 0; d < dim; ++d) row[d] += emb[d];
      out.support[y] += 1;
    }
  }
  for (int y = 0; y < y_count; ++y) {
    if (out.support[y] == 0) continue;
    const double inv = 1.0 / static_cast<double>(out.support[y]);
    for (double& x : out.pivots.row(y)) x *= inv;
  }
  return out;
}

inline constexpr std::uint32_t kPivotMagic = 0x56504654;  // "TFPV"

inline void save_pivots(const PivotSet& pivots, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, kPivotMagic);
  write_u32(os, static_cast<std::uint32_t>(pivots.type_count()));
  write_u32(os, static_cast<std::uint32_t>(pivots.pivots.cols()));
  for (int y = 0; y < pivots.type_count(); ++y) {
    write_u64(os, static_cast<std::uint64_t>(pivots.support[y]));
    for (double x : pivots.pivots.row(y)) write_f64(os, x);
  }
  if (!os) throw ValidationError("failed writing pivots: " + path);
}

inline PivotSet load_pivots(const std::string& path) {
  auto is = open_input(path);
  if (read_u32(is, "pivot magic") != kPivotMagic) {
    throw ValidationError("not a pivot file: " + path);
  }
  const std::uint32_t y_count = read_u32(is, "pivot type count");
  const std::uint32_t dim = read_u32(is, "pivot dim");
  PivotSet out;
  out.pivots = Matrix(y_count, dim);
  out.support.assign(y_count, 0);
  for (std::uint32_t y = 0; y < y_count; ++y) {
    out.support[y] = static_cast<std::int64_t>(read_u64(is, "pivot support"));
    for (double& x : out.pivots.row(y)) x = read_f64(is, "pivot value");
  }
  return out;
}

}  // namespace typeforge

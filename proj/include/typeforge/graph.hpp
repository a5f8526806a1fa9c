#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "typeforge/corpus.hpp"
#include "typeforge/embedding.hpp"
#include "typeforge/io.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/random.hpp"

namespace typeforge {

enum class GraphMode { attn, pivots, eye, rnd };

inline const char* graph_mode_name(GraphMode m) {
  switch (m) {
    case GraphMode::attn: return "attn";
    case GraphMode::pivots: return "pivots";
    case GraphMode::eye: return "eye";
    default: return "rnd";
  }
}

inline std::optional<GraphMode> parse_graph_mode(const std::string& s) {
  if (s == "attn") return GraphMode::attn;
  if (s == "pivots") return GraphMode::pivots;
  if (s == "eye") return GraphMode::eye;
  if (s == "rnd") return GraphMode::rnd;
  return std::nullopt;
}

// Corpus-level refinement graph: nodes are mention ids, edges connect
// same-type confident candidates, eta carries the per-edge attention weight.
struct RefinementGraph {
  struct Edge {
    int i = 0;  // i < j
    int j = 0;
    double eta = 1.0;
  };

  int n = 0;
  GraphMode mode = GraphMode::attn;
  std::vector<Edge> edges;  // sorted by (i, j), no self-edges, no duplicates
};

// One mention recruited into a per-type candidate set, with its cosine to the
// pivot that selected it.
struct Candidate {
  int node = -1;
  double score = 0.0;
};

struct PivotMatch {
  int type = -1;
  double score = 0.0;
};

// argmax over usable pivots; ties go to the lowest type id. Returns the type
// only when the best cosine clears thr. nullopt when nothing qualifies or no
// pivot is usable.
inline std::optional<PivotMatch> select_candidate(
    std::span<const double> embedding, const PivotSet& pivots, double thr) {
  int best = -1;
  double best_cos = 0.0;
  for (int y = 0; y < pivots.type_count(); ++y) {
    if (!pivots.usable(y)) continue;
    const double c = cosine(embedding, pivots.pivots.row(y));
    if (best < 0 || c > best_cos) {
      best = y;
      best_cos = c;
    }
  }
  if (best < 0 || best_cos < thr) return std::nullopt;
  return PivotMatch{best, best_cos};
}

struct CandidateAssignment {
  std::vector<std::vector<Candidate>> by_type;  // per type, ascending node id
  std::vector<int> eligible;                    // train+test mention ids
  int skipped_zero = 0;                         // mentions with zero embedding
};

// Runs candidate capture over D_train + D_test; dev mentions stay isolated
// nodes so their rows pass through the convolution untouched.
inline CandidateAssignment assign_candidates(const Corpus& corpus,
                                             const Matrix& mention_embeddings,
                                             const PivotSet& pivots,
                                             double thr) {
  CandidateAssignment out;
  out.by_type.resize(corpus.hierarchy.size());
  for (const auto& m : corpus.mentions) {
    if (m.split == Split::dev) continue;
    out.eligible.push_back(m.id);
    const auto emb = mention_embeddings.row(m.id);
    if (squared_norm(emb) == 0.0) {
      ++out.skipped_zero;
      continue;
    }
    if (auto match = select_candidate(emb, pivots, thr)) {
      out.by_type[match->type].push_back(Candidate{m.id, match->score});
    }
  }
  return out;
}

struct GraphBuildOptions {
  GraphMode mode = GraphMode::attn;
  std::uint64_t seed = 0;                // used by rnd mode only
  std::optional<int> max_clique;         // per-type candidate cap
};

namespace detail {

inline std::uint64_t pack_edge(int i, int j) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
         static_cast<std::uint32_t>(j);
}

// clique edges over every candidate set, deduplicated and sorted
inline std::vector<std::uint64_t> clique_edges(
    const std::vector<std::vector<Candidate>>& by_type,
    const std::optional<int>& max_clique) {
  std::vector<std::uint64_t> packed;
  for (const auto& set : by_type) {
    const std::vector<Candidate>* members = &set;
    std::vector<Candidate> capped;
    if (max_clique && static_cast<int>(set.size()) > *max_clique) {
      capped = set;
      std::sort(capped.begin(), capped.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
      });
      capped.resize(*max_clique);
      std::sort(capped.begin(), capped.end(),
                [](const Candidate& a, const Candidate& b) { return a.node < b.node; });
      members = &capped;
    }
    for (std::size_t a = 0; a < members->size(); ++a) {
      for (std::size_t b = a + 1; b < members->size(); ++b) {
        const int u = (*members)[a].node;
        const int v = (*members)[b].node;
        packed.push_back(pack_edge(std::min(u, v), std::max(u, v)));
      }
    }
  }
  std::sort(packed.begin(), packed.end());
  packed.erase(std::unique(packed.begin(), packed.end()), packed.end());
  return packed;
}

}  // namespace detail

// Assembles the graph from per-type candidate sets. attn/pivots form a clique
// inside every set; eye keeps no edges; rnd draws a uniformly random edge set
// over the eligible nodes with the same cardinality as the clique union.
inline RefinementGraph build_graph(
    const std::vector<std::vector<Candidate>>& by_type, int n_nodes,
    const std::vector<int>& eligible_nodes, const GraphBuildOptions& options) {
  RefinementGraph g;
  g.n = n_nodes;
  g.mode = options.mode;
  if (options.mode == GraphMode::eye) return g;

  const auto packed = detail::clique_edges(by_type, options.max_clique);

  if (options.mode == GraphMode::rnd) {
    const std::size_t m = eligible_nodes.size();
    const std::size_t want = packed.size();
    if (m < 2 && want > 0) {
      throw ValidationError("rnd graph: fewer than two eligible nodes");
    }
    if (want > m * (m - 1) / 2) {
      throw ValidationError("rnd graph: requested edge count exceeds the "
                            "number of distinct node pairs");
    }
    Rng rng(options.seed);
    std::set<std::uint64_t> chosen;
    while (chosen.size() < want) {
      const int a = eligible_nodes[rng.uniform_index(m)];
      const int b = eligible_nodes[rng.uniform_index(m)];
      if (a == b) continue;
      chosen.insert(detail::pack_edge(std::min(a, b), std::max(a, b)));
    }
    g.edges.reserve(chosen.size());
    for (std::uint64_t p : chosen) {
      g.edges.push_back({static_cast<int>(p >> 32),
                         static_cast<int>(p & 0xffffffffull), 1.0});
    }
    return g;
  }

  g.edges.reserve(packed.size());
  for (std::uint64_t p : packed) {
    g.edges.push_back({static_cast<int>(p >> 32),
                       static_cast<int>(p & 0xffffffffull), 1.0});
  }
  return g;
}

// eta_ij = cos(emb_i, emb_j) for every edge; edges touching a zero embedding
// are dropped. Returns the number of dropped edges.
inline int attach_attention(RefinementGraph& graph, const Matrix& embeddings) {
  if (graph.mode != GraphMode::attn) {
    throw std::invalid_argument("attach_attention requires an attn-mode graph");
  }
  std::vector<RefinementGraph::Edge> kept;
  kept.reserve(graph.edges.size());
  int dropped = 0;
  for (auto e : graph.edges) {
    const auto u = embeddings.row(e.i);
    const auto v = embeddings.row(e.j);
    if (squared_norm(u) == 0.0 || squared_norm(v) == 0.0) {
      ++dropped;
      continue;
    }
    e.eta = cosine(u, v);
    kept.push_back(e);
  }
  graph.edges = std::move(kept);
  return dropped;
}

// Symmetrically normalized propagation matrix with explicit self-loops:
// each off-diagonal entry eta_ij / sqrt(d_i d_j) is computed once and stored
// for both (i,j) and (j,i), so the matrix is symmetric to the last bit.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  int n() const { return n_; }
  std::size_t entry_count() const { return col_.size(); }

  // CSR accessors; columns within a row are strictly increasing
  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const int> cols() const { return col_; }
  std::span<const double> values() const { return val_; }

  double at(int i, int j) const {
    const auto lo = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto hi = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(lo, hi, j);
    if (it == hi || *it != j) return 0.0;
    return val_[static_cast<std::size_t>(it - col_.begin())];
  }

  Matrix multiply(const Matrix& x) const {
    check_shapes(static_cast<std::size_t>(n_), x.rows(), "adjacency multiply");
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < n_; ++i) {
      auto out_row = out.row(i);
      for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
        const double w = val_[e];
        const auto src = x.row(col_[e]);
        for (std::size_t c = 0; c < src.size(); ++c) out_row[c] += w * src[c];
      }
    }
    return out;
  }

  static NormalizedAdjacency from_graph(const RefinementGraph& graph) {
    NormalizedAdjacency a;
    a.n_ = graph.n;
    std::vector<double> degree(graph.n, 1.0);  // self-loop included
    for (const auto& e : graph.edges) {
      degree[e.i] += e.eta;
      degree[e.j] += e.eta;
    }
    std::vector<double> inv_sqrt(graph.n);
    for (int i = 0; i < graph.n; ++i) {
      if (!(degree[i] > 0.0)) {
        throw ValidationError("normalize: node " + std::to_string(i) +
                              " has non-positive degree " +
                              std::to_string(degree[i]));
      }
      inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
    }
    std::vector<std::vector<std::pair<int, double>>> rows(graph.n);
    for (int i = 0; i < graph.n; ++i) {
      rows[i].emplace_back(i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for (const auto& e : graph.edges) {
      const double v = e.eta * inv_sqrt[e.i] * inv_sqrt[e.j];
      rows[e.i].emplace_back(e.j, v);
      rows[e.j].emplace_back(e.i, v);
    }
    a.row_ptr_.assign(graph.n + 1, 0);
    for (int i = 0; i < graph.n; ++i) {
      std::sort(rows[i].begin(), rows[i].end());
      a.row_ptr_[i + 1] = a.row_ptr_[i] + rows[i].size();
    }
    a.col_.reserve(a.row_ptr_.back());
    a.val_.reserve(a.row_ptr_.back());
    for (int i = 0; i < graph.n; ++i) {
      for (const auto& [c, v] : rows[i]) {
        a.col_.push_back(c);
        a.val_.push_back(v);
      }
    }
    return a;
  }

 private:
  int n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

inline NormalizedAdjacency normalize(const RefinementGraph& graph) {
  for (const auto& e : graph.edges) {
    if (!std::isfinite(e.eta)) {
      throw ValidationError("normalize: non-finite eta on edge (" +
                            std::to_string(e.i) + ", " + std::to_string(e.j) +
                            ")");
    }
  }
  return NormalizedAdjacency::from_graph(graph);
}

// --- graph files -------------------------------------------------------------

// text dump, one `i j eta` line per edge
inline void save_graph_edges(const RefinementGraph& graph,
                             const std::string& path) {
  auto os = open_output(path, /*binary=*/false);
  char buf[80];
  for (const auto& e : graph.edges) {
    std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", e.i, e.j, e.eta);
    os << buf;
  }
  if (!os) throw ValidationError("failed writing graph edges: " + path);
}

inline RefinementGraph load_graph_edges(const std::string& path, int n,
                                        GraphMode mode) {
  auto is = open_input(path, /*binary=*/false);
  RefinementGraph g;
  g.n = n;
  g.mode = mode;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    RefinementGraph::Edge e;
    if (!(ls >> e.i >> e.j >> e.eta) || e.i >= e.j || e.i < 0 || e.j >= n) {
      throw ValidationError(path + ":line " + std::to_string(line_no) +
                            ": malformed edge line");
    }
    g.edges.push_back(e);
  }
  return g;
}

// coordinate triples `i j value`, row-major over stored entries
inline void save_normalized_triples(const NormalizedAdjacency& a,
                                    const std::string& path) {
  auto os = open_output(path, /*binary=*/false);
  char buf[80];
  for (int i = 0; i < a.n(); ++i) {
    for (std::size_t e = a.row_ptr()[i]; e < a.row_ptr()[i + 1]; ++e) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", i, a.cols()[e],
                    a.values()[e]);
      os << buf;
    }
  }
  if (!os) throw ValidationError("failed writing normalized matrix: " + path);
}

}  // namespace typeforge

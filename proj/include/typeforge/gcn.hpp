#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "typeforge/graph.hpp"
#include "typeforge/io.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/random.hpp"

namespace typeforge {

// Two-layer edge-weighted graph convolution:
//   Phi = A_hat * ReLU(A_hat * X * W0) * W1
// No bias terms and no outer nonlinearity; ReLU's subgradient at 0 is 0.
struct GcnParams {
  Matrix w0;  // f x h
  Matrix w1;  // h x k
  std::uint64_t revision = 0;  // bumped on every update; guards stale caches

  int input_dim() const { return static_cast<int>(w0.rows()); }
  int hidden_dim() const { return static_cast<int>(w0.cols()); }
  int output_dim() const { return static_cast<int>(w1.cols()); }

  static GcnParams init(int f, int h, int k, Rng& rng) {
    GcnParams p;
    p.w0 = Matrix(f, h);
    const double g0 = std::sqrt(6.0 / (f + h));
    for (double& x : p.w0.data()) x = rng.uniform(-g0, g0);
    p.w1 = Matrix(h, k);
    const double g1 = std::sqrt(6.0 / (h + k));
    for (double& x : p.w1.data()) x = rng.uniform(-g1, g1);
    return p;
  }
};

struct GcnCache {
  Matrix ax;  // A_hat X
  Matrix h0;  // A_hat X W0, pre-activation
  Matrix ar;  // A_hat ReLU(h0)
  std::uint64_t revision = 0;
};

inline Matrix gcn_forward(const NormalizedAdjacency& adjacency, const Matrix& x,
                          const GcnParams& params, GcnCache* cache = nullptr) {
  check_shapes(x.cols(), params.w0.rows(), "gcn_forward input width");
  check_shapes(static_cast<std::size_t>(adjacency.n()), x.rows(),
               "gcn_forward node count");
  Matrix ax = adjacency.multiply(x);
  Matrix h0 = matmul(ax, params.w0);
  Matrix r = h0;
  for (double& v : r.data()) v = v > 0.0 ? v : 0.0;
  Matrix ar = adjacency.multiply(r);
  Matrix phi = matmul(ar, params.w1);
  if (cache != nullptr) {
    cache->ax = std::move(ax);
    cache->h0 = std::move(h0);
    cache->ar = std::move(ar);
    cache->revision = params.revision;
  }
  return phi;
}

struct GcnGradients {
  Matrix d_w0;
  Matrix d_w1;
  Matrix d_x;
};

// A_hat is symmetric, so every transpose of it below is A_hat itself:
//   dW1 = (A_hat R)^T dPhi
//   dH  = (A_hat dPhi W1^T) .* [h0 > 0]
//   dW0 = (A_hat X)^T dH
//   dX  = A_hat dH W0^T
inline GcnGradients gcn_backward(const NormalizedAdjacency& adjacency,
                                 const GcnParams& params, const GcnCache& cache,
                                 const Matrix& d_phi) {
  if (cache.revision != params.revision) {
    throw std::invalid_argument(
        "gcn_backward: stale cache (parameters changed since forward)");
  }
  check_shapes(d_phi.rows(), cache.ar.rows(), "gcn_backward rows");
  check_shapes(d_phi.cols(), params.w1.cols(), "gcn_backward width");

  GcnGradients g;
  g.d_w1 = matmul_tn(cache.ar, d_phi);
  Matrix dh = adjacency.multiply(matmul_nt(d_phi, params.w1));
  for (std::size_t i = 0; i < dh.data().size(); ++i) {
    if (!(cache.h0.data()[i] > 0.0)) dh.data()[i] = 0.0;
  }
  g.d_w0 = matmul_tn(cache.ax, dh);
  g.d_x = adjacency.multiply(matmul_nt(dh, params.w0));
  return g;
}

// checkpoint: header (f, h, k) as u32 + W0, W1 row-major f64
inline void save_gcn(const GcnParams& params, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, static_cast<std::uint32_t>(params.input_dim()));
  write_u32(os, static_cast<std::uint32_t>(params.hidden_dim()));
  write_u32(os, static_cast<std::uint32_t>(params.output_dim()));
  for (double v : params.w0.data()) write_f64(os, v);
  for (double v : params.w1.data()) write_f64(os, v);
  if (!os) throw ValidationError("failed writing gcn checkpoint: " + path);
}

inline GcnParams load_gcn(const std::string& path) {
  auto is = open_input(path);
  const std::uint32_t f = read_u32(is, "gcn f");
  const std::uint32_t h = read_u32(is, "gcn h");
  const std::uint32_t k = read_u32(is, "gcn k");
  GcnParams p;
  p.w0 = Matrix(f, h);
  for (double& v : p.w0.data()) v = read_f64(is, "gcn w0");
  p.w1 = Matrix(h, k);
  for (double& v : p.w1.data()) v = read_f64(is, "gcn w1");
  if (!all_finite(p.w0) || !all_finite(p.w1)) {
    throw ValidationError("gcn checkpoint contains non-finite values: " + path);
  }
  return p;
}

}  // namespace typeforge

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace typeforge {

struct AdamConfig {
  double lr = 0.001;  // paper range 0.0008-0.001
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Standard bias-corrected update. Deterministic given the state; a NaN
// gradient aborts the step with a diagnostic naming the offending entry.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isnan(grads[i])) {
      throw std::runtime_error("adam_step: NaN gradient at entry " +
                               std::to_string(i) + " of " +
                               std::to_string(grads.size()));
    }
  }
  state.t += 1;
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / m_corr;
    const double v_hat = state.v[i] / v_corr;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace typeforge

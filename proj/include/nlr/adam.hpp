#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nlr/errors.hpp"

namespace nlr {

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

// Bias-corrected Adam update. Throws NonFinite on a NaN/Inf gradient before
// touching any state.
template <typename T>
void adam_step(AdamState& state, std::span<T> params, std::span<const T> grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionMismatch("trainer: Adam parameter/gradient/state sizes differ");
  }
  for (const T g : grads) {
    if (!std::isfinite(static_cast<double>(g))) throw NonFinite("trainer: non-finite gradient");
  }
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double step_size = lr / c1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = b1 * state.m[i] + (1.0 - b1) * g;
    const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    params[i] = static_cast<T>(params[i] - step_size * m / (std::sqrt(v) * inv_sqrt_c2 + state.eps));
  }
}

}  // namespace nlr

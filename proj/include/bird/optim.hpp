#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "bird/array.hpp"

namespace bird {

/// Named parameter arrays for one network. std::map keeps iteration order
/// deterministic, which the global-norm clip and checkpointing rely on.
using ParamMap = std::map<std::string, Array>;

/// Adam first/second moments, one pair per parameter, plus the shared step
/// counter. Moments are created lazily with the parameter's shape.
struct AdamState {
  std::map<std::string, Array> m;
  std::map<std::string, Array> v;
  std::uint64_t step = 0;
};

inline double global_norm(const ParamMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("clip_gradient_norm: non-finite gradient in '" + name + "'");
      sq += g[i] * g[i];
    }
  }
  return std::sqrt(sq);
}

/// Scales all entries by max_norm / ||g|| when the global L2 norm exceeds
/// max_norm; otherwise returns the input unchanged. Idempotent.
inline ParamMap clip_gradient_norm(ParamMap grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradient_norm: max_norm must be > 0");
  double norm = global_norm(grads);
  // 1e-12 slack keeps the op exactly idempotent: a freshly clipped map whose
  // recomputed norm rounds a hair above max_norm takes the no-op branch.
  if (norm <= max_norm + 1e-12) return grads;
  double f = max_norm / norm;
  for (auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f;
  return grads;
}

/// Standard bias-corrected Adam update, applied in place.
inline void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  state.step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
    const Array& g = git->second;
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: shape mismatch for '" + name + "': " + p.shape_str() +
                                  " vs " + g.shape_str());
    Array& m = state.m.try_emplace(name, Array::zeros_like(p)).first->second;
    Array& v = state.v.try_emplace(name, Array::zeros_like(p)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace bird

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/numerics/tensor.hpp"

namespace msea::num {

template <std::floating_point T>
struct AdamState {
  T learning_rate = T{0.001};
  T beta1 = T{0.9};
  T beta2 = T{0.999};
  T epsilon = T{1e-8};
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Bias-corrected Adam update of every parameter from its accumulated gradient.
template <std::floating_point T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (auto* p : params) {
      state.first_moment.emplace_back(p->size(), T{0});
      state.second_moment.emplace_back(p->size(), T{0});
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer holds " + std::to_string(state.first_moment.size()) +
                         " moment slots for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto* p = params[k];
    if (state.first_moment[k].size() != p->size() || state.second_moment[k].size() != p->size() ||
        p->grad().size() != p->size()) {
      throw DimensionError("adam_step: parameter " + std::to_string(k) + " of shape " + p->shape().str() +
                           " disagrees with its gradient or moment buffers");
    }
    for (T g : p->grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("adam_step: non-finite gradient in parameter " + std::to_string(k) + " " +
                             p->shape().str());
      }
    }
  }

  ++state.step;
  const T t = static_cast<T>(state.step);
  const T correction1 = T{1} - std::pow(state.beta1, t);
  const T correction2 = T{1} - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k]->data();
    auto grad = params[k]->grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = state.beta1 * m[i] + (T{1} - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (T{1} - state.beta2) * grad[i] * grad[i];
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      data[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
template <std::floating_point T>
T clip_grad_norm(std::span<Tensor<T>* const> params, T max_norm) {
  T sq{0};
  for (const auto* p : params)
    for (T g : p->grad()) sq += g * g;
  const T norm = std::sqrt(sq);
  if (norm > max_norm && norm > T{0}) {
    const T factor = max_norm / norm;
    for (auto* p : params)
      for (T& g : p->grad()) g *= factor;
  }
  return norm;
}

}  // namespace msea::num

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/numerics/tape.hpp"

namespace msea::num {

template <std::floating_point T>
struct GradCheckReport {
  T max_error = T{0};
  std::size_t worst_index = 0;
  T analytic = T{0};
  T numeric = T{0};
  std::size_t coordinates = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <std::floating_point T>
T relative_error(T analytic, T numeric, T floor = T{1e-8}) {
  const T denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of every coordinate of `params` against central
/// differences. `loss` must bind the parameters on the tape it is given and return a
/// scalar; it is invoked once on a recording tape and twice per coordinate on
/// non-recording tapes. Raising `floor` stops gradients far below the loss scale from
/// being judged against difference noise.
template <std::floating_point T>
GradCheckReport<T> grad_check_params(std::span<Tensor<T>* const> params,
                                     const std::function<Var<T>(Tape<T>&)>& loss, T step = T{1e-5},
                                     T floor = T{1e-8}) {
  for (auto* p : params) p->enable_grad();
  {
    Tape<T> tape;
    auto l = loss(tape);
    if (!std::isfinite(l.item())) throw NonFiniteError("grad_check: loss is not finite at the base point");
    tape.backward(l);
  }
  auto eval = [&]() {
    Tape<T> tape(false);
    const T v = loss(tape).item();
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: loss is not finite at a perturbed point");
    return v;
  };

  GradCheckReport<T> report;
  std::size_t flat = 0;
  for (auto* p : params) {
    auto data = p->data();
    std::vector<T> analytic(p->grad().begin(), p->grad().end());
    for (std::size_t i = 0; i < data.size(); ++i, ++flat) {
      const T saved = data[i];
      data[i] = saved + step;
      const T up = eval();
      data[i] = saved - step;
      const T down = eval();
      data[i] = saved;
      const T numeric = (up - down) / (T{2} * step);
      const T err = relative_error(analytic[i], numeric, floor);
      ++report.coordinates;
      if (err > report.max_error || report.coordinates == 1) {
        report.max_error = err;
        report.worst_index = flat;
        report.analytic = analytic[i];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

/// Single-tensor form: `f` maps the variable bound to `point` to a scalar.
template <std::floating_point T>
T grad_check(const std::function<Var<T>(Tape<T>&, const Var<T>&)>& f, const Tensor<T>& point,
             T step = T{1e-5}) {
  Tensor<T> x = point;
  Tensor<T>* ptr = &x;
  return grad_check_params<T>(std::span<Tensor<T>* const>(&ptr, 1),
                              [&](Tape<T>& tape) { return f(tape, tape.param(x)); }, step)
      .max_error;
}

}  // namespace msea::num

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/numerics/tape.hpp"

// Differentiable primitives. Every op computes its value eagerly, then registers a
// local gradient rule that is only kept when some input needs a gradient.

namespace msea::num {

namespace detail {

template <std::floating_point T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

template <std::floating_point T>
void require_vector(const Var<T>& a, const char* op) {
  if (!a.shape().is_vector()) {
    throw DimensionError(std::string(op) + ": expected a vector, got " + a.shape().str());
  }
}

template <std::floating_point T>
void require_matrix(const Var<T>& a, const char* op) {
  if (!a.shape().is_matrix()) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + a.shape().str());
  }
}

template <std::floating_point T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T z = std::exp(-x);
    return T{1} / (T{1} + z);
  }
  const T z = std::exp(x);
  return z / (T{1} + z);
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

/// a[m×k] · b[k×n].
template <std::floating_point T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape().rows(), k = a.shape().cols(), n = b.shape().cols();
  if (b.shape().rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape().str() + " x " +
                         b.shape().str());
  }
  auto av = a.value();
  auto bv = b.value();
  std::vector<T> out(m * n, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T{0}) continue;
      const T* brow = &bv[p * n];
      T* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(Shape{m, n}, std::move(out), {a, b},
                       [ia, ib, m, k, n](Tape<T>& tp, std::span<const T> g) {
                         auto av = tp.value(ia);
                         auto bv = tp.value(ib);
                         if (tp.needs_grad(ia)) {
                           auto ga = tp.grad(ia);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               T s{0};
                               for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                               ga[i * k + p] += s;
                             }
                         }
                         if (tp.needs_grad(ib)) {
                           auto gb = tp.grad(ib);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t p = 0; p < k; ++p) {
                               const T aip = av[i * k + p];
                               for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                             }
                         }
                       });
}

/// a[m×k] · b[n×k]ᵀ, i.e. every row of `a` through the linear map `b`.
template <std::floating_point T>
Var<T> matmul_bt(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a, "matmul_bt");
  detail::require_matrix(b, "matmul_bt");
  const std::size_t m = a.shape().rows(), k = a.shape().cols(), n = b.shape().rows();
  if (b.shape().cols() != k) {
    throw DimensionError("matmul_bt: inner dimensions disagree, " + a.shape().str() + " x " +
                         b.shape().str() + "^T");
  }
  auto av = a.value();
  auto bv = b.value();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s{0};
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = s;
    }
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(Shape{m, n}, std::move(out), {a, b},
                       [ia, ib, m, k, n](Tape<T>& tp, std::span<const T> g) {
                         auto av = tp.value(ia);
                         auto bv = tp.value(ib);
                         if (tp.needs_grad(ia)) {
                           auto ga = tp.grad(ia);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) {
                               const T gij = g[i * n + j];
                               if (gij == T{0}) continue;
                               for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
                             }
                         }
                         if (tp.needs_grad(ib)) {
                           auto gb = tp.grad(ib);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) {
                               const T gij = g[i * n + j];
                               if (gij == T{0}) continue;
                               for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
                             }
                         }
                       });
}

/// w[m×n] · x[n] -> [m].
template <std::floating_point T>
Var<T> matvec(const Var<T>& w, const Var<T>& x) {
  detail::require_matrix(w, "matvec");
  detail::require_vector(x, "matvec");
  const std::size_t m = w.shape().rows(), n = w.shape().cols();
  if (x.size() != n) {
    throw DimensionError("matvec: " + w.shape().str() + " cannot multiply " + x.shape().str());
  }
  auto wv = w.value();
  auto xv = x.value();
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    T s{0};
    const T* row = &wv[i * n];
    for (std::size_t j = 0; j < n; ++j) s += row[j] * xv[j];
    out[i] = s;
  }
  const auto iw = w.id(), ix = x.id();
  return w.tape().push(Shape{m}, std::move(out), {w, x},
                       [iw, ix, m, n](Tape<T>& tp, std::span<const T> g) {
                         auto wv = tp.value(iw);
                         auto xv = tp.value(ix);
                         if (tp.needs_grad(iw)) {
                           auto gw = tp.grad(iw);
                           for (std::size_t i = 0; i < m; ++i) {
                             const T gi = g[i];
                             if (gi == T{0}) continue;
                             T* row = &gw[i * n];
                             for (std::size_t j = 0; j < n; ++j) row[j] += gi * xv[j];
                           }
                         }
                         if (tp.needs_grad(ix)) {
                           auto gx = tp.grad(ix);
                           for (std::size_t i = 0; i < m; ++i) {
                             const T gi = g[i];
                             if (gi == T{0}) continue;
                             const T* row = &wv[i * n];
                             for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
                           }
                         }
                       });
}

/// xᵀ[m] · w[m×n] -> [n]: the weighted sum of the rows of w.
template <std::floating_point T>
Var<T> vecmat(const Var<T>& x, const Var<T>& w) {
  detail::require_vector(x, "vecmat");
  detail::require_matrix(w, "vecmat");
  const std::size_t m = w.shape().rows(), n = w.shape().cols();
  if (x.size() != m) {
    throw DimensionError("vecmat: " + x.shape().str() + " cannot weight the rows of " + w.shape().str());
  }
  auto wv = w.value();
  auto xv = x.value();
  std::vector<T> out(n, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    const T xi = xv[i];
    const T* row = &wv[i * n];
    for (std::size_t j = 0; j < n; ++j) out[j] += xi * row[j];
  }
  const auto ix = x.id(), iw = w.id();
  return w.tape().push(Shape{n}, std::move(out), {x, w}, [ix, iw, m, n](Tape<T>& tp, std::span<const T> g) {
    auto wv = tp.value(iw);
    auto xv = tp.value(ix);
    if (tp.needs_grad(ix)) {
      auto gx = tp.grad(ix);
      for (std::size_t i = 0; i < m; ++i) {
        T s{0};
        const T* row = &wv[i * n];
        for (std::size_t j = 0; j < n; ++j) s += row[j] * g[j];
        gx[i] += s;
      }
    }
    if (tp.needs_grad(iw)) {
      auto gw = tp.grad(iw);
      for (std::size_t i = 0; i < m; ++i) {
        T* row = &gw[i * n];
        for (std::size_t j = 0; j < n; ++j) row[j] += xv[i] * g[j];
      }
    }
  });
}

/// Outer product u[m] vᵀ[n] -> [m×n].
template <std::floating_point T>
Var<T> outer(const Var<T>& u, const Var<T>& v) {
  detail::require_vector(u, "outer");
  detail::require_vector(v, "outer");
  const std::size_t m = u.size(), n = v.size();
  auto uv = u.value();
  auto vv = v.value();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = uv[i] * vv[j];
  const auto iu = u.id(), iv = v.id();
  return u.tape().push(Shape{m, n}, std::move(out), {u, v},
                       [iu, iv, m, n](Tape<T>& tp, std::span<const T> g) {
                         auto uv = tp.value(iu);
                         auto vv = tp.value(iv);
                         if (tp.needs_grad(iu)) {
                           auto gu = tp.grad(iu);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gu[i] += g[i * n + j] * vv[j];
                         }
                         if (tp.needs_grad(iv)) {
                           auto gv = tp.grad(iv);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j] * uv[i];
                         }
                       });
}

template <std::floating_point T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "dot");
  auto av = a.value();
  auto bv = b.value();
  T s{0};
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(Shape::scalar(), {s}, {a, b}, [ia, ib](Tape<T>& tp, std::span<const T> g) {
    auto av = tp.value(ia);
    auto bv = tp.value(ib);
    if (tp.needs_grad(ia)) {
      auto ga = tp.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * bv[i];
    }
    if (tp.needs_grad(ib)) {
      auto gb = tp.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * av[i];
    }
  });
}

// ---------------------------------------------------------------- elementwise

namespace detail {

template <std::floating_point T, class Fwd, class Dfa, class Dfb>
Var<T> binary(const Var<T>& a, const Var<T>& b, const char* name, Fwd fwd, Dfa dfa, Dfb dfb) {
  require_same(a, b, name);
  auto av = a.value();
  auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const auto ia = a.id(), ib = b.id();
  return a.tape().push(a.shape(), std::move(out), {a, b},
                       [ia, ib, dfa, dfb](Tape<T>& tp, std::span<const T> g) {
                         auto av = tp.value(ia);
                         auto bv = tp.value(ib);
                         if (tp.needs_grad(ia)) {
                           auto ga = tp.grad(ia);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * dfa(av[i], bv[i]);
                         }
                         if (tp.needs_grad(ib)) {
                           auto gb = tp.grad(ib);
                           for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * dfb(av[i], bv[i]);
                         }
                       });
}

/// Unary op whose derivative is expressed through the output value y.
template <std::floating_point T, class Fwd, class DfOut>
Var<T> unary_by_output(const Var<T>& a, Fwd fwd, DfOut df) {
  auto av = a.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  const auto ia = a.id();
  Tape<T>& tape = a.tape();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.push(a.shape(), std::move(out), {a}, [ia, self, df](Tape<T>& tp, std::span<const T> g) {
    auto yv = tp.value(self);
    auto ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df(yv[i]);
  });
}

}  // namespace detail

template <std::floating_point T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
                        [](T, T) { return T{1}; });
}

template <std::floating_point T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
                        [](T, T) { return T{-1}; });
}

template <std::floating_point T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                        [](T x, T) { return x; });
}

/// Elementwise minimum; at ties the gradient goes to the first operand.
template <std::floating_point T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, "minimum", [](T x, T y) { return std::min(x, y); },
      [](T x, T y) { return x <= y ? T{1} : T{0}; }, [](T x, T y) { return x <= y ? T{0} : T{1}; });
}

template <std::floating_point T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary_by_output(a, [](T x) { return detail::stable_sigmoid(x); },
                                 [](T y) { return y * (T{1} - y); });
}

template <std::floating_point T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary_by_output(a, [](T x) { return std::tanh(x); }, [](T y) { return T{1} - y * y; });
}

/// 1 - x.
template <std::floating_point T>
Var<T> one_minus(const Var<T>& a) {
  return detail::unary_by_output(a, [](T x) { return T{1} - x; }, [](T) { return T{-1}; });
}

/// x * c for a constant c.
template <std::floating_point T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary_by_output(a, [c](T x) { return x * c; }, [c](T) { return c; });
}

/// Natural log; inputs are clamped below at the smallest normal value.
template <std::floating_point T>
Var<T> log(const Var<T>& a) {
  auto av = a.value();
  std::vector<T> out(av.size());
  const T tiny = std::numeric_limits<T>::min();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], tiny));
  const auto ia = a.id();
  return a.tape().push(a.shape(), std::move(out), {a}, [ia, tiny](Tape<T>& tp, std::span<const T> g) {
    auto av = tp.value(ia);
    auto ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / std::max(av[i], tiny);
  });
}

/// x * s where s is a one-element variable.
template <std::floating_point T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  if (!s.shape().is_scalar()) throw DimensionError("scale_by: factor must be scalar, got " + s.shape().str());
  auto xv = x.value();
  const T sv = s.item();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sv;
  const auto ix = x.id(), is = s.id();
  return x.tape().push(x.shape(), std::move(out), {x, s}, [ix, is](Tape<T>& tp, std::span<const T> g) {
    auto xv = tp.value(ix);
    const T sv = tp.value(is)[0];
    if (tp.needs_grad(ix)) {
      auto gx = tp.grad(ix);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * sv;
    }
    if (tp.needs_grad(is)) {
      T acc{0};
      for (std::size_t i = 0; i < xv.size(); ++i) acc += g[i] * xv[i];
      tp.grad(is)[0] += acc;
    }
  });
}

/// x + s (broadcast) where s is a one-element variable.
template <std::floating_point T>
Var<T> add_scalar(const Var<T>& x, const Var<T>& s) {
  if (!s.shape().is_scalar()) throw DimensionError("add_scalar: addend must be scalar, got " + s.shape().str());
  auto xv = x.value();
  const T sv = s.item();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + sv;
  const auto ix = x.id(), is = s.id();
  return x.tape().push(x.shape(), std::move(out), {x, s}, [ix, is](Tape<T>& tp, std::span<const T> g) {
    if (tp.needs_grad(ix)) {
      auto gx = tp.grad(ix);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs_grad(is)) {
      T acc{0};
      for (T gi : g) acc += gi;
      tp.grad(is)[0] += acc;
    }
  });
}

/// Adds vector v[n] to every row of m[r×n].
template <std::floating_point T>
Var<T> add_rows(const Var<T>& m, const Var<T>& v) {
  detail::require_matrix(m, "add_rows");
  detail::require_vector(v, "add_rows");
  const std::size_t r = m.shape().rows(), n = m.shape().cols();
  if (v.size() != n) {
    throw DimensionError("add_rows: row width " + m.shape().str() + " vs " + v.shape().str());
  }
  auto mv = m.value();
  auto vv = v.value();
  std::vector<T> out(mv.begin(), mv.end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vv[j];
  const auto im = m.id(), iv = v.id();
  return m.tape().push(m.shape(), std::move(out), {m, v}, [im, iv, r, n](Tape<T>& tp, std::span<const T> g) {
    if (tp.needs_grad(im)) {
      auto gm = tp.grad(im);
      for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g[i];
    }
    if (tp.needs_grad(iv)) {
      auto gv = tp.grad(iv);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
    }
  });
}

// ---------------------------------------------------------------- reductions

template <std::floating_point T>
Var<T> sum(const Var<T>& a) {
  T s{0};
  for (T v : a.value()) s += v;
  const auto ia = a.id();
  return a.tape().push(Shape::scalar(), {s}, {a}, [ia](Tape<T>& tp, std::span<const T> g) {
    auto ga = tp.grad(ia);
    for (auto& v : ga) v += g[0];
  });
}

/// Column-wise arithmetic mean of the rows of m[r×n] -> [n].
template <std::floating_point T>
Var<T> mean_rows(const Var<T>& m) {
  detail::require_matrix(m, "mean_rows");
  const std::size_t r = m.shape().rows(), n = m.shape().cols();
  auto mv = m.value();
  std::vector<T> out(n, T{0});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += mv[i * n + j];
  const T inv = T{1} / static_cast<T>(r);
  for (auto& v : out) v *= inv;
  const auto im = m.id();
  return m.tape().push(Shape{n}, std::move(out), {m}, [im, r, n, inv](Tape<T>& tp, std::span<const T> g) {
    auto gm = tp.grad(im);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) gm[i * n + j] += g[j] * inv;
  });
}

/// Numerically stable softmax over a vector. Masked-out positions (mask[i] == false)
/// receive exactly zero probability.
template <std::floating_point T>
Var<T> softmax(const Var<T>& logits, std::optional<std::span<const bool>> mask = std::nullopt) {
  detail::require_vector(logits, "softmax");
  auto x = logits.value();
  const std::size_t n = x.size();
  if (mask && mask->size() != n) {
    throw DimensionError("softmax: mask length " + std::to_string(mask->size()) + " vs logits " +
                         logits.shape().str());
  }
  auto open = [&](std::size_t i) { return !mask || (*mask)[i]; };
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!open(i)) continue;
    if (std::isnan(x[i]) || x[i] == std::numeric_limits<T>::infinity()) {
      throw NonFiniteError("softmax: logit " + std::to_string(i) + " is not finite");
    }
    mx = std::max(mx, x[i]);
  }
  if (mx == -std::numeric_limits<T>::infinity()) {
    throw DistributionError("softmax: every position is masked");
  }
  std::vector<T> out(n, T{0});
  T z{0};
  for (std::size_t i = 0; i < n; ++i)
    if (open(i)) {
      out[i] = std::exp(x[i] - mx);
      z += out[i];
    }
  for (auto& v : out) v /= z;
  const auto il = logits.id();
  Tape<T>& tape = logits.tape();
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.push(logits.shape(), std::move(out), {logits}, [il, self](Tape<T>& tp, std::span<const T> g) {
    auto y = tp.value(self);
    T inner{0};
    for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
    auto gl = tp.grad(il);
    for (std::size_t i = 0; i < y.size(); ++i) gl[i] += y[i] * (g[i] - inner);
  });
}

// ---------------------------------------------------------------- structure

/// Concatenates vectors end to end.
template <std::floating_point T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<T> out;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    detail::require_vector(p, "concat");
    offsets.push_back(out.size());
    ids.push_back(p.id());
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  const std::size_t n = out.size();
  return parts.front().tape().push(Shape{n}, std::move(out), parts,
                                   [ids, offsets](Tape<T>& tp, std::span<const T> g) {
                                     for (std::size_t k = 0; k < ids.size(); ++k) {
                                       if (!tp.needs_grad(ids[k])) continue;
                                       auto gp = tp.grad(ids[k]);
                                       for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
                                     }
                                   });
}

template <std::floating_point T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Stacks equal-length vectors as the rows of a matrix.
template <std::floating_point T>
Var<T> stack_rows(std::span<const Var<T>> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t n = rows.front().size();
  std::vector<T> out;
  out.reserve(rows.size() * n);
  std::vector<std::uint32_t> ids;
  for (const auto& r : rows) {
    detail::require_vector(r, "stack_rows");
    if (r.size() != n) {
      throw DimensionError("stack_rows: row " + r.shape().str() + " vs width " + std::to_string(n));
    }
    ids.push_back(r.id());
    auto v = r.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  return rows.front().tape().push(Shape{rows.size(), n}, std::move(out), rows,
                                  [ids, n](Tape<T>& tp, std::span<const T> g) {
                                    for (std::size_t k = 0; k < ids.size(); ++k) {
                                      if (!tp.needs_grad(ids[k])) continue;
                                      auto gr = tp.grad(ids[k]);
                                      for (std::size_t j = 0; j < n; ++j) gr[j] += g[k * n + j];
                                    }
                                  });
}

/// Elements [begin, end) of a vector.
template <std::floating_point T>
Var<T> slice(const Var<T>& v, std::size_t begin, std::size_t end) {
  detail::require_vector(v, "slice");
  if (begin >= end || end > v.size()) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + v.shape().str());
  }
  auto vv = v.value();
  std::vector<T> out(vv.begin() + static_cast<std::ptrdiff_t>(begin), vv.begin() + static_cast<std::ptrdiff_t>(end));
  const auto iv = v.id();
  return v.tape().push(Shape{end - begin}, std::move(out), {v}, [iv, begin](Tape<T>& tp, std::span<const T> g) {
    auto gv = tp.grad(iv);
    for (std::size_t i = 0; i < g.size(); ++i) gv[begin + i] += g[i];
  });
}

/// Row i of a matrix, as a vector.
template <std::floating_point T>
Var<T> row(const Var<T>& m, std::size_t i) {
  detail::require_matrix(m, "row");
  const std::size_t n = m.shape().cols();
  if (i >= m.shape().rows()) {
    throw DimensionError("row: index " + std::to_string(i) + " outside " + m.shape().str());
  }
  auto mv = m.value();
  std::vector<T> out(mv.begin() + static_cast<std::ptrdiff_t>(i * n), mv.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  const auto im = m.id();
  return m.tape().push(Shape{n}, std::move(out), {m}, [im, i, n](Tape<T>& tp, std::span<const T> g) {
    auto gm = tp.grad(im);
    for (std::size_t j = 0; j < n; ++j) gm[i * n + j] += g[j];
  });
}

/// Columns [begin, end) of a matrix.
template <std::floating_point T>
Var<T> cols(const Var<T>& m, std::size_t begin, std::size_t end) {
  detail::require_matrix(m, "cols");
  const std::size_t r = m.shape().rows(), n = m.shape().cols();
  if (begin >= end || end > n) {
    throw DimensionError("cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + m.shape().str());
  }
  const std::size_t w = end - begin;
  auto mv = m.value();
  std::vector<T> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = mv[i * n + begin + j];
  const auto im = m.id();
  return m.tape().push(Shape{r, w}, std::move(out), {m}, [im, r, n, w, begin](Tape<T>& tp, std::span<const T> g) {
    auto gm = tp.grad(im);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gm[i * n + begin + j] += g[i * w + j];
  });
}

/// Rows `ids` of table[V×d] stacked into [len(ids)×d]; the embedding lookup.
template <std::floating_point T>
Var<T> gather_rows(const Var<T>& table, std::span<const int> ids) {
  detail::require_matrix(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t V = table.shape().rows(), d = table.shape().cols();
  auto tv = table.value();
  std::vector<T> out(ids.size() * d);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= V) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[k]) + " outside table " + table.shape().str());
    }
    std::copy_n(&tv[static_cast<std::size_t>(ids[k]) * d], d, &out[k * d]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const auto it = table.id();
  return table.tape().push(Shape{ids.size(), d}, std::move(out), {table},
                           [it, idv = std::move(idv), d](Tape<T>& tp, std::span<const T> g) {
                             auto gt = tp.grad(it);
                             for (std::size_t k = 0; k < idv.size(); ++k) {
                               T* dst = &gt[static_cast<std::size_t>(idv[k]) * d];
                               for (std::size_t j = 0; j < d; ++j) dst[j] += g[k * d + j];
                             }
                           });
}

/// Element i of a vector as a scalar.
template <std::floating_point T>
Var<T> pick(const Var<T>& v, std::size_t i) {
  detail::require_vector(v, "pick");
  if (i >= v.size()) {
    throw DimensionError("pick: index " + std::to_string(i) + " outside " + v.shape().str());
  }
  const auto iv = v.id();
  return v.tape().push(Shape::scalar(), {v.value()[i]}, {v}, [iv, i](Tape<T>& tp, std::span<const T> g) {
    tp.grad(iv)[i] += g[0];
  });
}

/// out[n] with out[ids[j]] += a[j]: sums source-position mass per target id.
template <std::floating_point T>
Var<T> scatter_add(const Var<T>& a, std::span<const int> ids, std::size_t n) {
  detail::require_vector(a, "scatter_add");
  if (ids.size() != a.size()) {
    throw DimensionError("scatter_add: " + std::to_string(ids.size()) + " ids for " + a.shape().str());
  }
  auto av = a.value();
  std::vector<T> out(n, T{0});
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || static_cast<std::size_t>(ids[j]) >= n) {
      throw DimensionError("scatter_add: id " + std::to_string(ids[j]) + " outside [0," + std::to_string(n) + ")");
    }
    out[static_cast<std::size_t>(ids[j])] += av[j];
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const auto ia = a.id();
  return a.tape().push(Shape{n}, std::move(out), {a}, [ia, idv = std::move(idv)](Tape<T>& tp, std::span<const T> g) {
    auto ga = tp.grad(ia);
    for (std::size_t j = 0; j < idv.size(); ++j) ga[j] += g[static_cast<std::size_t>(idv[j])];
  });
}

/// Extends a vector with trailing zeros up to length n.
template <std::floating_point T>
Var<T> pad(const Var<T>& v, std::size_t n) {
  detail::require_vector(v, "pad");
  if (n < v.size()) throw DimensionError("pad: target length shorter than " + v.shape().str());
  auto vv = v.value();
  std::vector<T> out(n, T{0});
  std::copy(vv.begin(), vv.end(), out.begin());
  const auto iv = v.id();
  return v.tape().push(Shape{n}, std::move(out), {v}, [iv](Tape<T>& tp, std::span<const T> g) {
    auto gv = tp.grad(iv);
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[i];
  });
}

}  // namespace msea::num

#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/numerics/ops.hpp"
#include "msea/numerics/tape.hpp"

namespace msea::model {

using num::Tape;
using num::Var;

template <std::floating_point T>
struct GruCell {
  Var<T> W_u, W_r, W_h;

  [[nodiscard]] std::size_t hidden() const { return W_u.shape().rows(); }
  [[nodiscard]] std::size_t input() const { return W_u.shape().cols() - hidden(); }
};

namespace detail {

template <std::floating_point T>
void check_gru(const GruCell<T>& c, const Var<T>& x, const Var<T>& h) {
  const std::size_t hid = c.hidden();
  for (const auto* w : {&c.W_u, &c.W_r, &c.W_h}) {
    if (!w->shape().is_matrix() || w->shape().rows() != hid || w->shape().cols() != c.W_u.shape().cols()) {
      throw DimensionError("gru_step: gate matrices disagree: " + w->shape().str() + " vs " +
                           c.W_u.shape().str());
    }
  }
  if (!x.shape().is_vector() || x.size() != c.input() || !h.shape().is_vector() || h.size() != hid) {
    throw DimensionError("gru_step: cell " + c.W_u.shape().str() + " given input " + x.shape().str() +
                         " and state " + h.shape().str());
  }
}

template <std::floating_point T>
T sigmoid(T x) {
  return num::detail::stable_sigmoid(x);
}

}  // namespace detail

/// One GRU update as a single tape node:
///   u = σ(W_u[x,h]), r = σ(W_r[x,h]), h' = tanh(W_h[x, r⊙h]), out = (1-u)⊙h + u⊙h'.
template <std::floating_point T>
Var<T> gru_step(const GruCell<T>& cell, const Var<T>& x, const Var<T>& h) {
  detail::check_gru(cell, x, h);
  const std::size_t nx = cell.input(), nh = cell.hidden(), nz = nx + nh;
  auto xv = x.value();
  auto hv = h.value();
  auto wu = cell.W_u.value();
  auto wr = cell.W_r.value();
  auto wh = cell.W_h.value();

  std::vector<T> z(nz), z2(nz), u(nh), r(nh), n(nh), out(nh);
  std::copy(xv.begin(), xv.end(), z.begin());
  std::copy(hv.begin(), hv.end(), z.begin() + static_cast<std::ptrdiff_t>(nx));
  for (std::size_t i = 0; i < nh; ++i) {
    T su{0}, sr{0};
    const T* ru = &wu[i * nz];
    const T* rr = &wr[i * nz];
    for (std::size_t j = 0; j < nz; ++j) {
      su += ru[j] * z[j];
      sr += rr[j] * z[j];
    }
    u[i] = detail::sigmoid(su);
    r[i] = detail::sigmoid(sr);
  }
  std::copy(xv.begin(), xv.end(), z2.begin());
  for (std::size_t i = 0; i < nh; ++i) z2[nx + i] = r[i] * hv[i];
  for (std::size_t i = 0; i < nh; ++i) {
    T s{0};
    const T* rh = &wh[i * nz];
    for (std::size_t j = 0; j < nz; ++j) s += rh[j] * z2[j];
    n[i] = std::tanh(s);
    out[i] = hv[i] + u[i] * (n[i] - hv[i]);
  }

  const auto ix = x.id(), ih = h.id(), iu = cell.W_u.id(), ir = cell.W_r.id(), iw = cell.W_h.id();
  Tape<T>& tape = x.tape();
  auto backward = [=, z = std::move(z), z2 = std::move(z2), u = std::move(u), r = std::move(r),
                   n = std::move(n)](Tape<T>& tp, std::span<const T> g) {
    auto hv = tp.value(ih);
    auto wu = tp.value(iu);
    auto wr = tp.value(ir);
    auto wh = tp.value(iw);
    std::vector<T> dan(nh), dau(nh), dar(nh), dz(nz, T{0}), dz2(nz, T{0}), dh(nh);
    for (std::size_t i = 0; i < nh; ++i) {
      dan[i] = g[i] * u[i] * (T{1} - n[i] * n[i]);
      dau[i] = g[i] * (n[i] - hv[i]) * u[i] * (T{1} - u[i]);
      dh[i] = g[i] * (T{1} - u[i]);
    }
    for (std::size_t i = 0; i < nh; ++i) {
      const T* rh = &wh[i * nz];
      for (std::size_t j = 0; j < nz; ++j) dz2[j] += dan[i] * rh[j];
    }
    for (std::size_t i = 0; i < nh; ++i) {
      const T drh = dz2[nx + i];
      dar[i] = drh * hv[i] * r[i] * (T{1} - r[i]);
      dh[i] += drh * r[i];
    }
    for (std::size_t i = 0; i < nh; ++i) {
      const T* ru = &wu[i * nz];
      const T* rr = &wr[i * nz];
      for (std::size_t j = 0; j < nz; ++j) dz[j] += dau[i] * ru[j] + dar[i] * rr[j];
    }
    auto outer_acc = [&](std::uint32_t id, const std::vector<T>& d, const std::vector<T>& in) {
      if (!tp.needs_grad(id)) return;
      auto gw = tp.grad(id);
      for (std::size_t i = 0; i < nh; ++i) {
        if (d[i] == T{0}) continue;
        T* row = &gw[i * nz];
        for (std::size_t j = 0; j < nz; ++j) row[j] += d[i] * in[j];
      }
    };
    outer_acc(iu, dau, z);
    outer_acc(ir, dar, z);
    outer_acc(iw, dan, z2);
    if (tp.needs_grad(ix)) {
      auto gx = tp.grad(ix);
      for (std::size_t j = 0; j < nx; ++j) gx[j] += dz[j] + dz2[j];
    }
    if (tp.needs_grad(ih)) {
      auto gh = tp.grad(ih);
      for (std::size_t i = 0; i < nh; ++i) gh[i] += dh[i] + dz[nx + i];
    }
  };
  return tape.push(num::Shape{nh}, std::move(out), {x, h, cell.W_u, cell.W_r, cell.W_h}, std::move(backward));
}

/// The same update assembled from primitive ops; slower, kept as a reference.
template <std::floating_point T>
Var<T> gru_step_reference(const GruCell<T>& cell, const Var<T>& x, const Var<T>& h) {
  detail::check_gru(cell, x, h);
  const auto z = num::concat({x, h});
  const auto u = num::sigmoid(num::matvec(cell.W_u, z));
  const auto r = num::sigmoid(num::matvec(cell.W_r, z));
  const auto cand = num::tanh(num::matvec(cell.W_h, num::concat({x, num::mul(r, h)})));
  return num::add(num::mul(num::one_minus(u), h), num::mul(u, cand));
}

/// Runs a cell over the rows of `inputs` from a zero state; returns one state per
/// row, in input order. `reverse` reads the rows last to first.
template <std::floating_point T>
std::vector<Var<T>> gru_scan(const GruCell<T>& cell, std::span<const Var<T>> inputs, bool reverse) {
  if (inputs.empty()) throw DimensionError("gru_scan: empty input sequence");
  Tape<T>& tape = inputs.front().tape();
  std::vector<Var<T>> states(inputs.size());
  Var<T> h = tape.zeros(num::Shape{cell.hidden()});
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t t = reverse ? inputs.size() - 1 - k : k;
    h = gru_step(cell, inputs[t], h);
    states[t] = h;
  }
  return states;
}

/// Inverted dropout: zeroes entries with probability `rate` and rescales the rest.
/// A null generator or zero rate is the identity.
template <std::floating_point T>
Var<T> dropout(const Var<T>& x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = keep(*rng) ? scale : T{0};
  return num::mul(x, x.tape().constant(x.shape(), std::move(mask)));
}

/// tanh(W · mean(rows) + b): the content vector of a sequence of states.
template <std::floating_point T>
Var<T> content_vector(const Var<T>& states, const Var<T>& W, const Var<T>& b) {
  if (!states.shape().is_matrix() || states.shape().rows() == 0) {
    throw DimensionError("content_vector: needs a non-empty matrix of states, got " + states.shape().str());
  }
  return num::tanh(num::add(num::matvec(W, num::mean_rows(states)), b));
}

template <std::floating_point T>
Var<T> content_vector(std::span<const Var<T>> states, const Var<T>& W, const Var<T>& b) {
  if (states.empty()) throw DimensionError("content_vector: empty state sequence");
  return content_vector(num::stack_rows(states), W, b);
}

}  // namespace msea::model

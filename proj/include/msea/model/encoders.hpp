#pragma once

#include <array>
#include <concepts>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/model/config.hpp"
#include "msea/model/layers.hpp"
#include "msea/model/params.hpp"
#include "msea/numerics/ops.hpp"

namespace msea::model {

/// Parameters of one model bound as leaves on a tape. Absent parameters stay invalid.
template <std::floating_point T>
struct Bound {
  Var<T> E;
  GruCell<T> master_fwd, master_bwd, claims_fwd, claims_bwd, decoder, slave;
  Var<T> W_p, b_p, W_q, b_q, P_0;
  Var<T> v_a, W_a, U_a, W_c;
  Var<T> W_v, b_v;
  Var<T> omega_c, omega_h, omega_y, omega_d, b_g;
  Var<T> W_1, b_1, W_2, b_2, W_s, W_s2, W_r, W_k, P_f, W_d, b_d;

  Bound() = default;
  Bound(Tape<T>& tape, ModelParams<T>& p) {
    auto get = [&](const char* name) { return p.contains(name) ? tape.param(p[name]) : Var<T>{}; };
    auto cell = [&](const std::string& prefix) {
      if (!p.contains(prefix + ".W_u")) return GruCell<T>{};
      return GruCell<T>{tape.param(p[prefix + ".W_u"]), tape.param(p[prefix + ".W_r"]),
                        tape.param(p[prefix + ".W_h"])};
    };
    E = get("E");
    master_fwd = cell("GRU^p_fwd");
    master_bwd = cell("GRU^p_bwd");
    claims_fwd = cell("GRU^q_fwd");
    claims_bwd = cell("GRU^q_bwd");
    decoder = cell("GRU^d");
    slave = cell("GRU^s");
    W_p = get("W_p");
    b_p = get("b_p");
    W_q = get("W_q");
    b_q = get("b_q");
    P_0 = get("P_0");
    v_a = get("v_a");
    W_a = get("W_a");
    U_a = get("U_a");
    W_c = get("W_c");
    W_v = get("W_v");
    b_v = get("b_v");
    omega_c = get("omega_c");
    omega_h = get("omega_h");
    omega_y = get("omega_y");
    omega_d = get("omega_d");
    b_g = get("b_g");
    W_1 = get("W_1");
    b_1 = get("b_1");
    W_2 = get("W_2");
    b_2 = get("b_2");
    W_s = get("W_s");
    W_s2 = p.contains("W_s'") ? tape.param(p["W_s'"]) : W_s;
    W_r = get("W_r");
    W_k = get("W_k");
    P_f = get("P_f");
    W_d = get("W_d");
    b_d = get("b_d");
  }
};

/// Bi-GRU output over one source sequence.
template <std::floating_point T>
struct MasterEncoding {
  /// [m × 2·hidden]; row t is forward_t ⊕ backward_t.
  Var<T> states;
  std::vector<Var<T>> rows;
  /// tanh(W · mean(states) + b); invalid when no content map was given.
  Var<T> content;
  /// Row m, the state at the last position.
  Var<T> final_state;
};

/// Embeds `ids`, applying dropout to the embeddings; returns one vector per position.
template <std::floating_point T>
std::vector<Var<T>> embed(const Var<T>& E, std::span<const int> ids, double rate, std::mt19937_64* rng) {
  if (ids.empty()) throw DimensionError("embed: empty id sequence");
  const auto table = num::gather_rows(E, ids);
  const auto dropped = dropout(table, rate, rng);
  std::vector<Var<T>> out;
  out.reserve(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) out.push_back(num::row(dropped, t));
  return out;
}

/// Forward and backward passes from zero states; content vector when W and b are valid.
template <std::floating_point T>
MasterEncoding<T> encode_master(std::span<const Var<T>> embedded, const GruCell<T>& fwd, const GruCell<T>& bwd,
                                const Var<T>& W = {}, const Var<T>& b = {}) {
  if (embedded.empty()) throw DimensionError("encode_master: empty input sequence");
  const auto f = gru_scan(fwd, embedded, false);
  const auto r = gru_scan(bwd, embedded, true);
  MasterEncoding<T> out;
  for (std::size_t t = 0; t < embedded.size(); ++t) out.rows.push_back(num::concat({f[t], r[t]}));
  out.states = num::stack_rows(std::span<const Var<T>>(out.rows));
  out.final_state = out.rows.back();
  if (W.valid() && b.valid()) out.content = content_vector(out.states, W, b);
  return out;
}

/// The importance gate at every source position at once:
///   α_t = σ(W_2·tanh(W_1[h_t, C^p, C^q, C^d] + b_1) + h_tᵀW_s C^p + h_tᵀW_s' C^d
///           − C^pᵀW_r C^d + C^qᵀW_k + b_2)
/// where W_s' is W_s unless the model unties them.
template <std::floating_point T>
Var<T> slave_gate_alpha(const Bound<T>& p, const Var<T>& states, const Var<T>& C_p, const Var<T>& C_q,
                        const Var<T>& C_d) {
  const std::size_t src = states.shape().cols();
  const std::size_t dc = C_p.size();
  if (C_q.size() != dc || C_d.size() != dc || p.W_1.shape().cols() != src + 3 * dc) {
    throw DimensionError("slave_gate_alpha: gate " + p.W_1.shape().str() + " given states " +
                         states.shape().str() + " and content widths " + std::to_string(C_p.size()) + "/" +
                         std::to_string(C_q.size()) + "/" + std::to_string(C_d.size()));
  }
  // W_1 splits into a per-position block and a block shared by all positions.
  const auto per_pos = num::matmul_bt(states, num::cols(p.W_1, 0, src));
  const auto shared = num::add(num::matvec(num::cols(p.W_1, src, src + 3 * dc), num::concat({C_p, C_q, C_d})), p.b_1);
  const auto hidden = num::tanh(num::add_rows(per_pos, shared));
  auto logits = num::matvec(hidden, p.W_2);
  logits = num::add(logits, num::matvec(states, num::matvec(p.W_s, C_p)));
  logits = num::add(logits, num::matvec(states, num::matvec(p.W_s2, C_d)));
  const auto bias = num::add(num::sub(num::dot(C_q, p.W_k), num::dot(C_p, num::matvec(p.W_r, C_d))), p.b_2);
  return num::sigmoid(num::add_scalar(logits, bias));
}

/// Single-position form of the gate.
template <std::floating_point T>
Var<T> slave_gate_alpha_at(const Bound<T>& p, const Var<T>& h_t, const Var<T>& C_p, const Var<T>& C_q,
                           const Var<T>& C_d) {
  const std::array<Var<T>, 1> one{h_t};
  return num::pick(slave_gate_alpha(p, num::stack_rows(std::span<const Var<T>>(one)), C_p, C_q, C_d), 0);
}

template <std::floating_point T>
struct SlaveEncoding {
  Var<T> final_state;
  Var<T> alpha;
};

/// h_t = (1 − α_t)·h_{t−1} + α_t·GRU^s(x_t, h_{t−1}) from a zero state.
template <std::floating_point T>
SlaveEncoding<T> slave_encode(std::span<const Var<T>> embedded, const Var<T>& alpha, const GruCell<T>& cell) {
  if (embedded.empty() || embedded.size() != alpha.size()) {
    throw DimensionError("slave_encode: " + std::to_string(embedded.size()) + " inputs for " +
                         std::to_string(alpha.size()) + " gates");
  }
  Tape<T>& tape = alpha.tape();
  Var<T> h = tape.zeros(num::Shape{cell.hidden()});
  for (std::size_t t = 0; t < embedded.size(); ++t) {
    const auto g = gru_step(cell, embedded[t], h);
    h = num::add(h, num::scale_by(num::sub(g, h), num::pick(alpha, t)));
  }
  return {h, alpha};
}

}  // namespace msea::model

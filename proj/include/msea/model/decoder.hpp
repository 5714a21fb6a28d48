#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msea/corpus/encode.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"
#include "msea/model/config.hpp"
#include "msea/model/encoders.hpp"
#include "msea/model/layers.hpp"
#include "msea/numerics/ops.hpp"

namespace msea::model {

using corpus::Vocabulary;

/// U_a · h_j for every source position, [m × attention]. Computed once per example.
template <std::floating_point T>
Var<T> attention_keys(const Bound<T>& p, const Var<T>& states) {
  return num::matmul_bt(states, p.U_a);
}

/// e_j = v_aᵀ tanh(W_a h_prev + U_a h_j [+ W_c c_j]).
template <std::floating_point T>
Var<T> attention_scores(const Bound<T>& p, const Var<T>& h_prev, const Var<T>& keys, const Var<T>& coverage,
                        bool use_coverage) {
  const std::size_t m = keys.shape().rows();
  if (coverage.valid() && coverage.size() != m) {
    throw DimensionError("attention_scores: coverage " + coverage.shape().str() + " over " + std::to_string(m) +
                         " source positions");
  }
  auto pre = num::add_rows(keys, num::matvec(p.W_a, h_prev));
  if (use_coverage) {
    if (!p.W_c.valid()) throw ConfigError("attention_scores: coverage requested but the model has no W_c");
    pre = num::add(pre, num::outer(coverage, p.W_c));
  }
  return num::matvec(num::tanh(pre), p.v_a);
}

/// Σ_j a_j h_j. `a` must sum to 1 within 1e-6.
template <std::floating_point T>
Var<T> context_vector(const Var<T>& a, const Var<T>& states) {
  T total{0};
  for (T v : a.value()) total += v;
  if (std::abs(total - T{1}) > T{1e-6}) {
    throw DistributionError("context_vector: attention sums to " + std::to_string(static_cast<double>(total)));
  }
  return num::vecmat(a, states);
}

/// tanh(W_d · mean(states) + b_d), or tanh(b_d) for an empty prefix.
template <std::floating_point T>
Var<T> partial_content(const Bound<T>& p, std::span<const Var<T>> states) {
  if (states.empty()) return num::tanh(p.b_d);
  return content_vector(states, p.W_d, p.b_d);
}

/// GRU^d(y, h_prev), or GRU^d(y, P_f[h_prev ⊕ h^s]) when a slave state is given.
template <std::floating_point T>
Var<T> decoder_step(const Bound<T>& p, const Var<T>& y, const Var<T>& h_prev, const Var<T>& slave_state = {}) {
  if (!slave_state.valid()) return gru_step(p.decoder, y, h_prev);
  if (!p.P_f.valid()) throw ConfigError("decoder_step: slave state given but the model has no fusion projection");
  return gru_step(p.decoder, y, num::matvec(p.P_f, num::concat({h_prev, slave_state})));
}

/// softmax(W_v [h ⊕ c] + b_v).
template <std::floating_point T>
Var<T> vocab_distribution(const Bound<T>& p, const Var<T>& h, const Var<T>& c) {
  return num::softmax(num::add(num::matvec(p.W_v, num::concat({h, c})), p.b_v));
}

/// σ(ω_c·c + ω_h·h + ω_y·y [+ ω_d·C^d] + b_g).
template <std::floating_point T>
Var<T> generation_probability(const Bound<T>& p, const Var<T>& c, const Var<T>& h, const Var<T>& y,
                              const Var<T>& C_d = {}) {
  auto s = num::add(num::add(num::dot(p.omega_c, c), num::dot(p.omega_h, h)), num::dot(p.omega_y, y));
  if (p.omega_d.valid() && C_d.valid()) s = num::add(s, num::dot(p.omega_d, C_d));
  return num::sigmoid(num::add(s, p.b_g));
}

/// P_p·P_v(w) + (1 − P_p)·Σ_{j: src_j = w} a_j over the extended vocabulary.
template <std::floating_point T>
Var<T> extended_distribution(const Var<T>& P_v, const Var<T>& P_p, const Var<T>& a,
                             std::span<const int> source_ids, std::size_t extended_size) {
  if (extended_size < P_v.size()) {
    throw DimensionError("extended_distribution: extended size " + std::to_string(extended_size) +
                         " below vocabulary size " + std::to_string(P_v.size()));
  }
  const auto generated = num::scale_by(num::pad(P_v, extended_size), P_p);
  const auto copied = num::scale_by(num::scatter_add(a, source_ids, extended_size), num::one_minus(P_p));
  return num::add(generated, copied);
}

template <std::floating_point T>
Var<T> coverage_update(const Var<T>& coverage, const Var<T>& a) {
  if (coverage.size() != a.size()) {
    throw DimensionError("coverage_update: " + coverage.shape().str() + " vs " + a.shape().str());
  }
  return num::add(coverage, a);
}

/// λ·Σ_j min(a_j, c_j): attention paid again to already covered positions.
template <std::floating_point T>
Var<T> coverage_penalty(const Var<T>& a, const Var<T>& coverage, double lambda) {
  return num::scale(num::sum(num::minimum(a, coverage)), static_cast<T>(lambda));
}

/// Step i (1-based) fuses the slave state iff the model has a slave encoder and K divides i.
inline bool is_fusion_step(const ModelConfig& cfg, std::size_t step) {
  return cfg.slave && step > 0 && step % cfg.K == 0;
}

/// Everything the decoder reads from one example's sources.
template <std::floating_point T>
struct SourceContext {
  std::vector<Var<T>> embedded;
  MasterEncoding<T> master;
  Var<T> keys;
  Var<T> C_q;
  Var<T> h0;
  std::vector<int> extended_ids;
  std::size_t extended_size = 0;
};

/// Runs the master (and, when used, claims) encoders. The source is the
/// specification; a claims-only model is fed claims in that position upstream.
template <std::floating_point T>
SourceContext<T> encode_sources(const Bound<T>& p, const ModelConfig& cfg, const corpus::EncodedExample& ex,
                                std::mt19937_64* rng) {
  SourceContext<T> s;
  s.embedded = embed(p.E, std::span<const int>(ex.spec_ids), cfg.dropout, rng);
  s.master = encode_master(std::span<const Var<T>>(s.embedded), p.master_fwd, p.master_bwd, p.W_p, p.b_p);
  s.keys = attention_keys(p, s.master.states);
  s.h0 = num::matvec(p.P_0, s.master.final_state);
  s.extended_ids = cfg.pointer ? ex.spec_extended_ids : ex.spec_ids;
  s.extended_size = cfg.pointer ? ex.extended_size(cfg.vocab_size) : cfg.vocab_size;
  Tape<T>& tape = s.h0.tape();
  if (cfg.slave) {
    if (cfg.claims_encoder() && p.claims_fwd.W_u.valid() && !ex.claims_ids.empty()) {
      const auto claims = embed(p.E, std::span<const int>(ex.claims_ids), cfg.dropout, rng);
      s.C_q = encode_master(std::span<const Var<T>>(claims), p.claims_fwd, p.claims_bwd, p.W_q, p.b_q).content;
    } else {
      s.C_q = tape.zeros(num::Shape{cfg.content});
    }
  }
  return s;
}

/// Decoder state between steps.
template <std::floating_point T>
struct DecoderState {
  Var<T> h;
  Var<T> coverage;
  /// Partial content as of the latest fusion boundary.
  Var<T> C_d;
  std::vector<Var<T>> history;
  std::size_t step = 0;
};

template <std::floating_point T>
DecoderState<T> initial_state(const Bound<T>& p, const ModelConfig& cfg, const SourceContext<T>& src) {
  DecoderState<T> st;
  st.h = src.h0;
  st.coverage = src.h0.tape().zeros(num::Shape{src.master.rows.size()});
  if (cfg.slave) st.C_d = partial_content(p, std::span<const Var<T>>{});
  return st;
}

/// Intermediate quantities of one decode step.
template <std::floating_point T>
struct StepOutput {
  Var<T> attention;
  /// Coverage seen by this step (sum of earlier attention).
  Var<T> coverage;
  Var<T> context;
  Var<T> h;
  Var<T> vocab;
  /// Valid only when the pointer is on.
  Var<T> p_gen;
  /// Distribution the token is drawn from: extended when the pointer is on, else vocab.
  Var<T> output;
  bool fused = false;
};

/// Advances the decoder by one step fed with `input_id` (extended ids read as UNK).
template <std::floating_point T>
StepOutput<T> advance(const Bound<T>& p, const ModelConfig& cfg, const SourceContext<T>& src,
                      DecoderState<T>& st, int input_id) {
  const std::size_t i = st.step + 1;
  StepOutput<T> out;
  out.coverage = st.coverage;
  const auto scores = attention_scores(p, st.h, src.keys, st.coverage, cfg.coverage);
  out.attention = num::softmax(scores);
  out.context = context_vector(out.attention, src.master.states);

  Var<T> slave_state;
  if (is_fusion_step(cfg, i)) {
    out.fused = true;
    if (cfg.cd_from_source) {
      st.C_d = content_vector(src.master.states, p.W_d, p.b_d);
    } else {
      st.C_d = partial_content(p, std::span<const Var<T>>(st.history));
    }
    const auto alpha = slave_gate_alpha(p, src.master.states, src.master.content, src.C_q, st.C_d);
    slave_state = slave_encode(std::span<const Var<T>>(src.embedded), alpha, p.slave).final_state;
  }

  const int id = input_id >= static_cast<int>(cfg.vocab_size) ? Vocabulary::unk_id : input_id;
  const int ids[] = {id};
  const auto y = num::row(num::gather_rows(p.E, std::span<const int>(ids)), 0);
  out.h = decoder_step(p, y, st.h, slave_state);
  out.vocab = vocab_distribution(p, out.h, out.context);
  if (cfg.pointer) {
    out.p_gen = generation_probability(p, out.context, out.h, y, st.C_d);
    out.output = extended_distribution(out.vocab, out.p_gen, out.attention, std::span<const int>(src.extended_ids),
                                       src.extended_size);
  } else {
    out.output = out.vocab;
  }

  st.coverage = coverage_update(st.coverage, out.attention);
  st.h = out.h;
  if (cfg.slave && !cfg.cd_from_source) st.history.push_back(out.h);
  st.step = i;
  return out;
}

/// Teacher-forced objective of one example: Σ_i [−log P(y_i*) + λ Σ_j min(a_ij, c_ij)].
template <std::floating_point T>
struct ExampleLoss {
  Var<T> total;
  std::size_t tokens = 0;
  double nll = 0;
  double coverage = 0;
};

template <std::floating_point T>
ExampleLoss<T> example_loss(const Bound<T>& p, const ModelConfig& cfg, const corpus::EncodedExample& ex,
                            std::mt19937_64* rng) {
  const auto& targets = cfg.pointer ? ex.summary_extended_ids : ex.summary_ids;
  if (targets.empty()) throw DataError("example " + ex.publication_number + " has no target tokens");
  const auto src = encode_sources(p, cfg, ex, rng);
  auto st = initial_state(p, cfg, src);
  ExampleLoss<T> loss;
  std::vector<Var<T>> terms;
  terms.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int input = i == 0 ? Vocabulary::start_id : ex.summary_ids[i - 1];
    const auto step = advance(p, cfg, src, st, input);
    const int gold = targets[i];
    if (gold < 0 || static_cast<std::size_t>(gold) >= step.output.size()) {
      throw DataError("example " + ex.publication_number + ": gold id " + std::to_string(gold) +
                      " outside extended vocabulary of size " + std::to_string(step.output.size()));
    }
    auto term = num::scale(num::log(num::pick(step.output, static_cast<std::size_t>(gold))), T{-1});
    loss.nll += static_cast<double>(term.item());
    if (cfg.coverage) {
      const auto penalty = coverage_penalty(step.attention, step.coverage, 1.0);
      loss.coverage += static_cast<double>(penalty.item());
      term = num::add(term, num::scale(penalty, static_cast<T>(cfg.lambda)));
    }
    terms.push_back(term);
  }
  loss.total = num::sum(num::concat(std::span<const Var<T>>(terms)));
  loss.tokens = targets.size();
  return loss;
}

}  // namespace msea::model

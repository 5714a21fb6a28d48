#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/corpus/encode.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"
#include "msea/model/config.hpp"
#include "msea/model/decoder.hpp"
#include "msea/model/params.hpp"

namespace msea::model {

/// Audit record for one emitted token.
struct TraceRecord {
  std::size_t step = 0;
  int emitted = 0;
  bool fused = false;
  /// Absent when the pointer is off.
  std::optional<double> p_gen;
  /// Sum of the distribution the token was drawn from.
  double checksum = 0;
  std::vector<double> attention;
  /// Coverage after this step: the sum of attention over steps 1..step.
  std::vector<double> coverage;
};

struct DecodeOptions {
  /// 1 is greedy.
  std::size_t beam = 1;
  /// 0 means the model's max_out.
  std::size_t max_len = 0;
};

struct DecodeResult {
  /// Emitted extended ids, STOP excluded.
  std::vector<int> ids;
  std::vector<TraceRecord> trace;
  bool stopped = false;
  double log_prob = 0;
};

namespace detail {

template <std::floating_point T>
TraceRecord make_record(const StepOutput<T>& out, std::size_t step, int emitted, const Var<T>& coverage_after) {
  TraceRecord r;
  r.step = step;
  r.emitted = emitted;
  r.fused = out.fused;
  if (out.p_gen.valid()) r.p_gen = static_cast<double>(out.p_gen.item());
  double total = 0;
  for (T v : out.output.value()) total += static_cast<double>(v);
  r.checksum = total;
  for (T v : out.attention.value()) r.attention.push_back(static_cast<double>(v));
  for (T v : coverage_after.value()) r.coverage.push_back(static_cast<double>(v));
  return r;
}

template <std::floating_point T>
struct Hypothesis {
  DecoderState<T> state;
  std::vector<int> ids;
  std::vector<TraceRecord> trace;
  double log_prob = 0;
  int last = corpus::Vocabulary::start_id;
};

}  // namespace detail

/// Greedy (beam = 1) or beam decoding until STOP or the length cap. Runs on a
/// non-recording tape and never touches gradients, so concurrent calls on shared
/// parameters are safe.
template <std::floating_point T>
DecodeResult decode_sequence(ModelParams<T>& params, const ModelConfig& cfg, const corpus::EncodedExample& ex,
                             const DecodeOptions& opts = {}) {
  ModelConfig eval = cfg;
  eval.dropout = 0.0;
  const std::size_t max_len = opts.max_len == 0 ? cfg.max_out : opts.max_len;
  const std::size_t width = std::max<std::size_t>(opts.beam, 1);
  Tape<T> tape(false);
  const Bound<T> p(tape, params);
  const auto src = encode_sources(p, eval, ex, nullptr);

  std::vector<detail::Hypothesis<T>> live(1);
  live[0].state = initial_state(p, eval, src);
  std::vector<detail::Hypothesis<T>> done;

  for (std::size_t step = 1; step <= max_len && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      int id;
      double score;
    };
    std::vector<Candidate> cands;
    std::vector<StepOutput<T>> outs;
    std::vector<DecoderState<T>> states;
    for (std::size_t k = 0; k < live.size(); ++k) {
      DecoderState<T> st = live[k].state;
      outs.push_back(advance(p, eval, src, st, live[k].last));
      states.push_back(std::move(st));
      const auto dist = outs.back().output.value();
      std::vector<int> order(dist.size());
      for (std::size_t w = 0; w < dist.size(); ++w) order[w] = static_cast<int>(w);
      const std::size_t take = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                        [&](int a, int b) { return dist[a] > dist[b] || (dist[a] == dist[b] && a < b); });
      for (std::size_t c = 0; c < take; ++c) {
        const double pr = static_cast<double>(dist[order[c]]);
        const double lp = pr > 0 ? std::log(pr) : -std::numeric_limits<double>::infinity();
        cands.push_back({k, order[c], live[k].log_prob + lp});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<detail::Hypothesis<T>> next;
    for (const auto& c : cands) {
      if (next.size() >= width) break;
      detail::Hypothesis<T> h;
      h.state = states[c.parent];
      h.ids = live[c.parent].ids;
      h.trace = live[c.parent].trace;
      h.trace.push_back(detail::make_record(outs[c.parent], step, c.id, states[c.parent].coverage));
      h.log_prob = c.score;
      h.last = c.id;
      if (c.id == corpus::Vocabulary::stop_id) {
        done.push_back(std::move(h));
      } else {
        h.ids.push_back(c.id);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (done.size() >= width) break;
    // Scores only fall with length, so a finished hypothesis ahead of every live one wins.
    double best_done = -std::numeric_limits<double>::infinity();
    for (const auto& h : done) best_done = std::max(best_done, h.log_prob);
    const bool ahead = std::all_of(live.begin(), live.end(), [&](const auto& h) { return h.log_prob <= best_done; });
    if (!done.empty() && ahead) break;
  }

  DecodeResult result;
  const detail::Hypothesis<T>* best = nullptr;
  for (const auto& h : done) {
    if (best == nullptr || h.log_prob > best->log_prob) best = &h;
  }
  result.stopped = best != nullptr;
  if (best == nullptr) {
    for (const auto& h : live) {
      if (best == nullptr || h.log_prob > best->log_prob) best = &h;
    }
  }
  if (best != nullptr) {
    result.ids = best->ids;
    result.trace = best->trace;
    result.log_prob = best->log_prob;
  }
  return result;
}

/// Maps decoded extended ids to words through the example's OOV list.
inline std::vector<std::string> decoded_tokens(const std::vector<int>& ids, const corpus::Vocabulary& vocab,
                                               const corpus::EncodedExample& ex) {
  return corpus::decode_extended(ids, vocab, ex.oov_words);
}

/// Steps whose decoder update fused the slave state.
inline std::vector<std::size_t> fused_steps(const std::vector<TraceRecord>& trace) {
  std::vector<std::size_t> out;
  for (const auto& r : trace) {
    if (r.fused) out.push_back(r.step);
  }
  return out;
}

inline nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json j{{"step", r.step},         {"emitted_id", r.emitted}, {"fused", r.fused},
                   {"checksum", r.checksum}, {"attention", r.attention}, {"coverage", r.coverage}};
  j["p_gen"] = r.p_gen ? nlohmann::json(*r.p_gen) : nlohmann::json(nullptr);
  return j;
}

inline TraceRecord trace_record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  try {
    r.step = j.at("step").get<std::size_t>();
    r.emitted = j.at("emitted_id").get<int>();
    r.fused = j.at("fused").get<bool>();
    r.checksum = j.at("checksum").get<double>();
    r.attention = j.at("attention").get<std::vector<double>>();
    r.coverage = j.at("coverage").get<std::vector<double>>();
    if (!j.at("p_gen").is_null()) r.p_gen = j.at("p_gen").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trace record: ") + e.what());
  }
  return r;
}

/// One JSON object per emitted token, tagged with the example and the token text.
inline void write_trace(std::ostream& out, const std::string& publication_number, const DecodeResult& result,
                        const corpus::Vocabulary& vocab, const corpus::EncodedExample& ex) {
  for (const auto& r : result.trace) {
    auto j = to_json(r);
    j["publication_number"] = publication_number;
    j["token"] = corpus::extended_token(r.emitted, vocab, ex.oov_words);
    out << j.dump() << '\n';
  }
}

}  // namespace msea::model

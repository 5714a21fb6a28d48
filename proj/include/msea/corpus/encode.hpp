#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/corpus/record.hpp"
#include "msea/corpus/tokenize.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"

namespace msea::corpus {

struct EncodeOptions {
  TokenizerMode tokenizer = TokenizerMode::char_cjk;
  std::size_t max_input = 500;
  std::size_t max_output = 100;
};

/// Model-ready view of one record.
///
/// `summary_ids` is the decoder target sequence: the reference tokens cut to at most
/// `max_output` ids, closed by STOP when it fits. START is never stored; the decoder
/// feeds it as the first input. Extended ids number this example's specification
/// OOV words from vocab.size() upward, in first-occurrence order.
struct EncodedExample {
  std::string publication_number;
  std::vector<int> spec_ids;
  std::vector<int> spec_extended_ids;
  std::vector<int> claims_ids;
  std::vector<int> summary_ids;
  std::vector<int> summary_extended_ids;
  std::vector<std::string> oov_words;
  std::vector<std::string> reference_tokens;

  [[nodiscard]] std::size_t extended_size(std::size_t vocab_size) const { return vocab_size + oov_words.size(); }

  friend bool operator==(const EncodedExample&, const EncodedExample&) = default;
};

inline EncodedExample encode_example(const PatentRecord& record, const Vocabulary& vocab,
                                     const EncodeOptions& opts = {}) {
  EncodedExample ex;
  ex.publication_number = record.publication_number;
  auto spec = tokenize(record.specification, opts.tokenizer);
  if (spec.empty()) {
    throw DataError("record " + record.publication_number + " has an empty specification after cleaning");
  }
  if (spec.size() > opts.max_input) spec.resize(opts.max_input);
  auto claims = tokenize(record.claims, opts.tokenizer);
  if (claims.size() > opts.max_input) claims.resize(opts.max_input);
  ex.reference_tokens = tokenize(record.abstract, opts.tokenizer);

  const int base = static_cast<int>(vocab.size());
  std::unordered_map<std::string, int> oov_index;
  for (const auto& tok : spec) {
    const int id = vocab.id(tok);
    ex.spec_ids.push_back(id);
    if (id != Vocabulary::unk_id || vocab.contains(tok)) {
      ex.spec_extended_ids.push_back(id);
      continue;
    }
    auto [it, fresh] = oov_index.try_emplace(tok, static_cast<int>(ex.oov_words.size()));
    if (fresh) ex.oov_words.push_back(tok);
    ex.spec_extended_ids.push_back(base + it->second);
  }
  for (const auto& tok : claims) ex.claims_ids.push_back(vocab.id(tok));

  const std::size_t keep = std::min(ex.reference_tokens.size(), opts.max_output);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& tok = ex.reference_tokens[i];
    const int id = vocab.id(tok);
    ex.summary_ids.push_back(id);
    if (id == Vocabulary::unk_id && !vocab.contains(tok)) {
      auto it = oov_index.find(tok);
      ex.summary_extended_ids.push_back(it == oov_index.end() ? Vocabulary::unk_id : base + it->second);
    } else {
      ex.summary_extended_ids.push_back(id);
    }
  }
  if (ex.summary_ids.size() < opts.max_output) {
    ex.summary_ids.push_back(Vocabulary::stop_id);
    ex.summary_extended_ids.push_back(Vocabulary::stop_id);
  }
  return ex;
}

/// Maps an extended id back to its token using the example's OOV list.
inline std::string extended_token(int id, const Vocabulary& vocab, const std::vector<std::string>& oov_words) {
  const auto base = static_cast<int>(vocab.size());
  if (id < base) return vocab.token(id);
  const auto k = static_cast<std::size_t>(id - base);
  if (k >= oov_words.size()) {
    throw DimensionError("extended id " + std::to_string(id) + " outside extended vocabulary of size " +
                         std::to_string(vocab.size() + oov_words.size()));
  }
  return oov_words[k];
}

inline std::vector<std::string> decode_extended(const std::vector<int>& ids, const Vocabulary& vocab,
                                                const std::vector<std::string>& oov_words) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(extended_token(id, vocab, oov_words));
  return out;
}

inline nlohmann::json to_json(const EncodedExample& e) {
  return nlohmann::json{{"publication_number", e.publication_number},
                        {"spec_ids", e.spec_ids},
                        {"spec_extended_ids", e.spec_extended_ids},
                        {"claims_ids", e.claims_ids},
                        {"summary_ids", e.summary_ids},
                        {"summary_extended_ids", e.summary_extended_ids},
                        {"oov_words", e.oov_words},
                        {"reference_tokens", e.reference_tokens}};
}

inline EncodedExample encoded_from_json(const nlohmann::json& j) {
  EncodedExample e;
  try {
    e.publication_number = j.at("publication_number").get<std::string>();
    e.spec_ids = j.at("spec_ids").get<std::vector<int>>();
    e.spec_extended_ids = j.at("spec_extended_ids").get<std::vector<int>>();
    e.claims_ids = j.at("claims_ids").get<std::vector<int>>();
    e.summary_ids = j.at("summary_ids").get<std::vector<int>>();
    e.summary_extended_ids = j.at("summary_extended_ids").get<std::vector<int>>();
    e.oov_words = j.at("oov_words").get<std::vector<std::string>>();
    e.reference_tokens = j.at("reference_tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed encoded example: ") + ex.what());
  }
  if (e.spec_ids.size() != e.spec_extended_ids.size() || e.summary_ids.size() != e.summary_extended_ids.size()) {
    throw DataError("encoded example " + e.publication_number + " has misaligned id sequences");
  }
  return e;
}

}  // namespace msea::corpus

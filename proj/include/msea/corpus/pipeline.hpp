#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msea/corpus/clean.hpp"
#include "msea/corpus/record.hpp"
#include "msea/corpus/split.hpp"
#include "msea/corpus/tokenize.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"

namespace msea::corpus {

/// Latin text keeps word boundaries; CJK text drops whitespace entirely.
inline WhitespaceMode whitespace_mode_for(TokenizerMode mode) {
  return mode == TokenizerMode::whitespace ? WhitespaceMode::collapse : WhitespaceMode::remove;
}

/// Cleans every text field. A missing title falls back to a <title> element of the
/// raw specification.
inline PatentRecord clean_record(const PatentRecord& raw, WhitespaceMode mode) {
  PatentRecord r;
  r.publication_number = raw.publication_number;
  r.title = clean_text(raw.title, mode);
  if (r.title.empty()) {
    if (auto t = extract_title(raw.specification)) r.title = clean_text(*t, mode);
  }
  r.abstract = clean_text(raw.abstract, mode);
  r.specification = clean_text(raw.specification, mode);
  r.claims = clean_text(raw.claims, mode);
  return r;
}

/// Why a cleaned record cannot be used, if it cannot.
inline std::optional<std::string> record_problem(const PatentRecord& r) {
  if (r.publication_number.empty()) return "missing publication number";
  if (r.specification.empty()) return "empty specification";
  if (r.claims.empty()) return "empty claims";
  if (r.abstract.empty()) return "empty abstract";
  return std::nullopt;
}

struct PreprocessOptions {
  TokenizerMode tokenizer = TokenizerMode::char_cjk;
  std::size_t vocab_max = 100000;
  std::size_t min_count = 1;
  std::uint64_t seed = 1;
};

struct RejectedRecord {
  std::string publication_number;
  std::string reason;
};

struct PreparedCorpus {
  DatasetSplit split;
  Vocabulary vocab;
  std::vector<RejectedRecord> rejected;
};

/// Cleans, drops unusable records (reported, not fatal), splits 8:1:1 and builds the
/// vocabulary from every field of the training split.
inline PreparedCorpus prepare_corpus(const std::vector<PatentRecord>& raw, const PreprocessOptions& opts) {
  PreparedCorpus out;
  std::vector<PatentRecord> kept;
  const auto ws = whitespace_mode_for(opts.tokenizer);
  for (const auto& r : raw) {
    auto c = clean_record(r, ws);
    if (auto problem = record_problem(c)) {
      out.rejected.push_back({r.publication_number, *problem});
      continue;
    }
    kept.push_back(std::move(c));
  }
  out.split = split_dataset(kept, opts.seed);
  std::vector<std::vector<std::string>> texts;
  for (const auto& r : out.split.train) {
    texts.push_back(tokenize(r.specification, opts.tokenizer));
    texts.push_back(tokenize(r.claims, opts.tokenizer));
    texts.push_back(tokenize(r.abstract, opts.tokenizer));
  }
  out.vocab = Vocabulary::build(texts, opts.vocab_max, opts.min_count);
  return out;
}

}  // namespace msea::corpus

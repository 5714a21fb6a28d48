#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/corpus/tokenize.hpp"
#include "msea/error.hpp"

namespace msea::rouge {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  friend bool operator==(const RougeScore&, const RougeScore&) = default;
};

/// Harmonic mean with equal weight, 0 when both are 0.
inline double f_measure(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

inline RougeScore score_from_counts(std::size_t overlap, std::size_t candidate_total, std::size_t reference_total) {
  RougeScore s;
  s.precision = candidate_total ? static_cast<double>(overlap) / static_cast<double>(candidate_total) : 0.0;
  s.recall = reference_total ? static_cast<double>(overlap) / static_cast<double>(reference_total) : 0.0;
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

using Tokens = std::vector<std::string>;

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

/// Clipped n-gram overlap. A side shorter than n scores 0; a note is appended to
/// `warnings` when given.
inline RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n,
                          std::vector<std::string>* warnings = nullptr) {
  if (n == 0) throw ConfigError("rouge_n: n must be at least 1");
  if (candidate.size() < n || reference.size() < n) {
    if (warnings != nullptr) {
      warnings->push_back("rouge-" + std::to_string(n) + ": sequence shorter than n (candidate " +
                          std::to_string(candidate.size()) + ", reference " + std::to_string(reference.size()) +
                          ")");
    }
    return {};
  }
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  return score_from_counts(overlap, candidate.size() - n + 1, reference.size() - n + 1);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS-based precision, recall and F1. An empty side scores 0.
inline RougeScore rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return {};
  return score_from_counts(lcs_length(candidate, reference), candidate.size(), reference.size());
}

struct PairScores {
  RougeScore r1, r2, rl;
};

inline PairScores score_pair(const Tokens& candidate, const Tokens& reference,
                             std::vector<std::string>* warnings = nullptr) {
  return {rouge_n(candidate, reference, 1, warnings), rouge_n(candidate, reference, 2, warnings),
          rouge_l(candidate, reference)};
}

/// Per-metric means over a corpus; each field of each score is averaged separately.
struct CorpusScores {
  RougeScore r1, r2, rl;
  std::size_t pairs = 0;
  std::vector<PairScores> per_pair;
  std::vector<std::string> warnings;
};

inline CorpusScores evaluate_corpus(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                                    bool keep_pairs = false) {
  if (candidates.size() != references.size()) {
    throw DataError("evaluate_corpus: " + std::to_string(candidates.size()) + " candidates for " +
                    std::to_string(references.size()) + " references");
  }
  CorpusScores out;
  out.pairs = candidates.size();
  auto add = [](RougeScore& acc, const RougeScore& s) {
    acc.precision += s.precision;
    acc.recall += s.recall;
    acc.f1 += s.f1;
  };
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto s = score_pair(candidates[i], references[i], &out.warnings);
    add(out.r1, s.r1);
    add(out.r2, s.r2);
    add(out.rl, s.rl);
    if (keep_pairs) out.per_pair.push_back(s);
  }
  if (out.pairs > 0) {
    const double n = static_cast<double>(out.pairs);
    for (auto* s : {&out.r1, &out.r2, &out.rl}) {
      s->precision /= n;
      s->recall /= n;
      s->f1 /= n;
    }
  }
  return out;
}

/// Tokenizes aligned summary lines with `mode` and scores them.
inline CorpusScores evaluate_texts(const std::vector<std::string>& candidates,
                                   const std::vector<std::string>& references, corpus::TokenizerMode mode,
                                   bool keep_pairs = false) {
  if (candidates.size() != references.size()) {
    throw DataError("evaluate_texts: " + std::to_string(candidates.size()) + " candidate lines for " +
                    std::to_string(references.size()) + " reference lines");
  }
  std::vector<Tokens> c, r;
  for (const auto& s : candidates) c.push_back(corpus::tokenize(s, mode));
  for (const auto& s : references) r.push_back(corpus::tokenize(s, mode));
  return evaluate_corpus(c, r, keep_pairs);
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline nlohmann::json to_json(const RougeScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline nlohmann::json to_json(const CorpusScores& s) {
  nlohmann::json j{{"pairs", s.pairs},
                   {"rouge-1", to_json(s.r1)},
                   {"rouge-2", to_json(s.r2)},
                   {"rouge-l", to_json(s.rl)}};
  if (!s.per_pair.empty()) {
    auto& rows = j["per_pair"] = nlohmann::json::array();
    for (const auto& p : s.per_pair) rows.push_back({{"r1", p.r1.f1}, {"r2", p.r2.f1}, {"rl", p.rl.f1}});
  }
  return j;
}

/// One row of a model comparison table.
struct TableRow {
  std::string model;
  RougeScore r1, r2, rl;
};

/// Markdown table with exactly the Rouge-1, Rouge-2 and Rouge-L F1 columns.
inline std::string format_table(const std::vector<TableRow>& rows, int precision = 3) {
  std::ostringstream os;
  os << "| Model | Rouge-1 | Rouge-2 | Rouge-L |\n|---|---|---|---|\n";
  os << std::fixed << std::setprecision(precision);
  for (const auto& r : rows) os << "| " << r.model << " | " << r.r1.f1 << " | " << r.r2.f1 << " | " << r.rl.f1 << " |\n";
  return os.str();
}

inline TableRow table_row(const std::string& model, const CorpusScores& s) { return {model, s.r1, s.r2, s.rl}; }

}  // namespace msea::rouge

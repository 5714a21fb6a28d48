#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "msea/corpus/record.hpp"
#include "msea/error.hpp"

namespace msea::corpus {

/// Knobs of the templated patent generator.
struct SyntheticGrammar {
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 3;
  std::size_t min_rare_terms = 1;
  std::size_t max_rare_terms = 3;
  /// Distinct claims key terms drawn from (at most 6).
  std::size_t key_terms = 4;
  /// Probability that a later specification sentence reuses the subject and verb of
  /// the first one, which makes copy attention ambiguous and decoders loop.
  double repetition = 0.0;
};

namespace detail {

inline constexpr std::array<std::string_view, 16> kNouns{"pump",  "valve",  "sensor", "housing", "shaft", "rotor",
                                                          "blade", "filter", "motor",  "gear",    "panel", "frame",
                                                          "pipe",  "tank",   "nozzle", "spring"};
inline constexpr std::array<std::string_view, 8> kVerbs{"drives", "supports", "covers", "holds",
                                                         "rotates", "cools", "seals", "connects"};
inline constexpr std::array<std::string_view, 6> kAdjectives{"upper", "lower", "inner", "outer", "first", "second"};
inline constexpr std::array<std::string_view, 6> kKeyTerms{"alpha", "beta", "gamma", "delta", "omega", "sigma"};

class TemplateRng {
 public:
  explicit TemplateRng(std::uint64_t seed) : rng_{seed} {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  template <std::size_t N>
  std::string pick(const std::array<std::string_view, N>& bank) {
    return std::string(bank[below(N)]);
  }

 private:
  std::mt19937_64 rng_;
};

inline std::string rare_term(TemplateRng& rng, std::unordered_set<std::string>& used) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  for (;;) {
    std::string w;
    for (int s = 0; s < 3; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    w += consonants[rng.below(consonants.size())];
    if (used.insert(w).second) return w;
  }
}

inline std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace detail

/// Templated, whitespace-tokenizable patents.
///
/// Each specification carries 1-3 rare invented terms (one always in its first
/// sentence); each claims section carries one key term that never appears in the
/// specification. The abstract is "the invention discloses <first specification
/// sentence> with <key term> .", so it depends on both sources.
inline std::vector<PatentRecord> generate_synthetic(std::size_t n, std::uint64_t seed,
                                                    const SyntheticGrammar& grammar = {}) {
  if (n == 0) throw ConfigError("synthetic corpus size must be positive");
  if (grammar.key_terms == 0 || grammar.key_terms > detail::kKeyTerms.size()) {
    throw ConfigError("synthetic key_terms must be in [1, 6]");
  }
  if (grammar.min_sentences == 0 || grammar.min_sentences > grammar.max_sentences ||
      grammar.min_rare_terms == 0 || grammar.min_rare_terms > grammar.max_rare_terms) {
    throw ConfigError("synthetic grammar ranges are inconsistent");
  }
  detail::TemplateRng rng(seed);
  std::unordered_set<std::string> used;
  for (auto w : detail::kNouns) used.emplace(w);
  for (auto w : detail::kVerbs) used.emplace(w);
  for (auto w : detail::kAdjectives) used.emplace(w);
  for (auto w : detail::kKeyTerms) used.emplace(w);

  std::vector<PatentRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t n_rare = rng.between(grammar.min_rare_terms, grammar.max_rare_terms);
    const std::size_t n_sent = std::max(rng.between(grammar.min_sentences, grammar.max_sentences), n_rare);
    std::vector<std::string> rare;
    for (std::size_t k = 0; k < n_rare; ++k) rare.push_back(detail::rare_term(rng, used));

    std::vector<std::vector<std::string>> sentences;
    for (std::size_t s = 0; s < n_sent; ++s) {
      std::string adj = rng.pick(detail::kAdjectives);
      std::string noun = rng.pick(detail::kNouns);
      std::string verb = rng.pick(detail::kVerbs);
      if (s > 0 && rng.unit() < grammar.repetition) {
        adj = sentences[0][1];
        noun = sentences[0][2];
        verb = sentences[0][3];
      }
      std::string object = s < n_rare ? rare[s] : rng.pick(detail::kNouns);
      sentences.push_back({"the", adj, noun, verb, "the", object, "."});
    }
    const std::string key(detail::kKeyTerms[rng.below(grammar.key_terms)]);

    std::vector<std::string> spec_words;
    for (const auto& s : sentences) spec_words.insert(spec_words.end(), s.begin(), s.end());

    const std::vector<std::string> claims_words{"a",   rng.pick(detail::kAdjectives), rng.pick(detail::kNouns),
                                                "comprising", "the", key, rng.pick(detail::kNouns), ",",
                                                "wherein", "the", rng.pick(detail::kNouns), rng.pick(detail::kVerbs),
                                                "the", rng.pick(detail::kNouns), "."};

    std::vector<std::string> abstract_words{"the", "invention", "discloses"};
    abstract_words.insert(abstract_words.end(), sentences[0].begin(), sentences[0].end() - 1);
    abstract_words.insert(abstract_words.end(), {"with", key, "."});

    char pub[48];
    std::snprintf(pub, sizeof pub, "SYN%llu-%06zu", static_cast<unsigned long long>(seed % 100000), i);
    PatentRecord r;
    r.publication_number = pub;
    r.title = sentences[0][1] + " " + sentences[0][2] + " device";
    r.specification = detail::join(spec_words);
    r.claims = detail::join(claims_words);
    r.abstract = detail::join(abstract_words);
    out.push_back(std::move(r));
  }
  return out;
}

/// Words the generator can emit other than its invented rare terms.
inline std::vector<std::string> synthetic_base_terms() {
  std::vector<std::string> out{"the", "invention", "discloses", "with", "a", "comprising", "wherein", ".", ","};
  for (auto w : detail::kNouns) out.emplace_back(w);
  for (auto w : detail::kVerbs) out.emplace_back(w);
  for (auto w : detail::kAdjectives) out.emplace_back(w);
  for (auto w : detail::kKeyTerms) out.emplace_back(w);
  return out;
}

}  // namespace msea::corpus

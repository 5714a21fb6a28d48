#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "msea/error.hpp"

namespace msea::corpus {

/// Dense token <-> id map. Ids 0..3 are reserved for PAD, UNK, START and STOP.
class Vocabulary {
 public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;
  static constexpr int start_id = 2;
  static constexpr int stop_id = 3;
  static constexpr std::size_t reserved_count = 4;
  static constexpr std::array<std::string_view, reserved_count> reserved_tokens{"<PAD>", "<UNK>", "<START>",
                                                                                 "<STOP>"};

  Vocabulary() {
    for (auto tok : reserved_tokens) insert(std::string(tok), 0);
  }

  /// Keeps the `max_size - 4` most frequent tokens seen at least `min_count` times;
  /// frequency ties go to the token seen first.
  static Vocabulary build(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                          std::size_t min_count = 1) {
    if (max_size <= reserved_count) {
      throw ConfigError("vocabulary max size must exceed " + std::to_string(reserved_count) + ", got " +
                        std::to_string(max_size));
    }
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::pair<std::string, std::uint64_t>> counts;  // first-occurrence order
    for (const auto& seq : corpus) {
      for (const auto& tok : seq) {
        if (is_reserved(tok)) continue;
        auto [it, fresh] = index.try_emplace(tok, counts.size());
        if (fresh) counts.emplace_back(tok, 0);
        ++counts[it->second].second;
      }
    }
    if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : counts) {
      if (v.size() >= max_size || n < min_count) break;
      v.insert(tok, n);
    }
    return v;
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }

  /// Id of `token`, or the UNK id when absent.
  [[nodiscard]] int id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_id : it->second;
  }
  [[nodiscard]] bool contains(std::string_view token) const { return ids_.contains(std::string(token)); }
  [[nodiscard]] const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw DimensionError("vocabulary id " + std::to_string(id) + " outside [0," + std::to_string(size()) + ")");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }
  [[nodiscard]] std::uint64_t frequency(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }

  /// One "token<TAB>id<TAB>frequency" line per entry, in id order.
  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\t' << freqs_[i] << '\n';
  }

  static Vocabulary read(std::istream& in) {
    Vocabulary v;
    v.tokens_.clear();
    v.freqs_.clear();
    v.ids_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tok, id_s, freq_s;
      if (!std::getline(ls, tok, '\t') || !std::getline(ls, id_s, '\t') || !std::getline(ls, freq_s)) {
        throw FormatError("vocabulary line " + std::to_string(lineno) + " is not token<TAB>id<TAB>frequency");
      }
      if (std::stoul(id_s) != v.tokens_.size()) {
        throw FormatError("vocabulary ids must be dense and ordered; line " + std::to_string(lineno));
      }
      v.insert(tok, std::stoull(freq_s));
    }
    for (std::size_t i = 0; i < reserved_count; ++i) {
      if (v.tokens_.size() <= i || v.tokens_[i] != reserved_tokens[i]) {
        throw FormatError("vocabulary does not start with the reserved tokens");
      }
    }
    return v;
  }

  /// The first `max_size` entries; ids are unchanged.
  [[nodiscard]] Vocabulary truncated(std::size_t max_size) const {
    if (max_size <= reserved_count) {
      throw ConfigError("vocabulary max size must exceed " + std::to_string(reserved_count) + ", got " +
                        std::to_string(max_size));
    }
    Vocabulary v;
    for (std::size_t i = reserved_count; i < std::min(max_size, tokens_.size()); ++i) v.insert(tokens_[i], freqs_[i]);
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.freqs_ == b.freqs_;
  }

 private:
  static bool is_reserved(std::string_view tok) {
    return std::find(reserved_tokens.begin(), reserved_tokens.end(), tok) != reserved_tokens.end();
  }

  void insert(std::string tok, std::uint64_t freq) {
    ids_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(tok));
    freqs_.push_back(freq);
  }

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace msea::corpus

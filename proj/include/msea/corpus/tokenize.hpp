#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "msea/error.hpp"

namespace msea::corpus {

enum class TokenizerMode { char_cjk, whitespace };

inline std::string to_string(TokenizerMode m) { return m == TokenizerMode::char_cjk ? "char_cjk" : "whitespace"; }

inline TokenizerMode tokenizer_from_string(std::string_view s) {
  if (s == "char_cjk") return TokenizerMode::char_cjk;
  if (s == "whitespace") return TokenizerMode::whitespace;
  throw ConfigError("unknown tokenizer '" + std::string(s) + "' (expected char_cjk or whitespace)");
}

namespace detail {

struct Codepoint {
  char32_t value;
  std::size_t length;  // bytes consumed
  bool valid;
};

inline Codepoint decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0u) == 0x80u ? (b & 0x3Fu) : -1;
  };
  if (b0 < 0x80u) return {b0, 1, true};
  if ((b0 & 0xE0u) == 0xC0u) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1Fu) << 6) | static_cast<unsigned>(c1)), 2, true};
  } else if ((b0 & 0xF0u) == 0xE0u) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0)
      return {static_cast<char32_t>(((b0 & 0x0Fu) << 12) | (static_cast<unsigned>(c1) << 6) | static_cast<unsigned>(c2)), 3,
              true};
  } else if ((b0 & 0xF8u) == 0xF0u) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0)
      return {static_cast<char32_t>(((b0 & 0x07u) << 18) | (static_cast<unsigned>(c1) << 12) |
                                    (static_cast<unsigned>(c2) << 6) | static_cast<unsigned>(c3)),
              4, true};
  }
  return {0xFFFD, 1, false};
}

inline bool is_latin_or_digit(char32_t c) {
  return (c >= U'0' && c <= U'9') || (c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z') ||
         (c >= 0x00C0 && c <= 0x024F && c != 0x00D7 && c != 0x00F7);
}

inline bool is_blank(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x3000 ||
         c == 0x00A0;
}

}  // namespace detail

/// char_cjk: Latin/digit runs form one token, every other non-blank codepoint
/// (CJK ideographs, punctuation) is its own token. whitespace: split on blanks.
inline std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) out.push_back(std::move(run));
    run.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto cp = detail::decode_utf8(text, i);
    const std::string_view bytes = text.substr(i, cp.length);
    i += cp.length;
    if (detail::is_blank(cp.value)) {
      flush();
    } else if (mode == TokenizerMode::whitespace || detail::is_latin_or_digit(cp.value)) {
      run.append(bytes);
    } else {
      flush();
      out.emplace_back(bytes);
    }
  }
  flush();
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, TokenizerMode mode) {
  std::string out;
  auto alnum = [](char c) { return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !tokens[i].empty() && !out.empty()) {
      // Adjacent Latin runs need a separator to stay two tokens.
      if (mode == TokenizerMode::whitespace || (alnum(out.back()) && alnum(tokens[i].front()))) out += ' ';
    }
    out += tokens[i];
  }
  return out;
}

}  // namespace msea::corpus

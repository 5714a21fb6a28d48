#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <boost/regex.hpp>

namespace msea::corpus {

/// How runs of whitespace are treated once markup is gone. `remove` deletes every
/// whitespace character (suits CJK text); `collapse` keeps one blank between words.
enum class WhitespaceMode { remove, collapse };

namespace detail {

struct CleaningPatterns {
  static constexpr auto flags = boost::regex::perl | boost::regex::icase;

  boost::regex script{R"(<script[^>]*?>[\s\S]*?<\/script>)", flags};
  boost::regex style{R"(<style[^>]*?>[\s\S]*?<\/style>)", flags};
  boost::regex anchor{R"(<a.*?href=.*?<\/a>)", flags};
  boost::regex table_row{R"(<tr>(.*?)</tr>)", flags};
  boost::regex table_head{R"(<th>(.*?)</th>)", flags};
  boost::regex table_cell{R"(<td>(.*?)</td>)", flags};
  boost::regex tags{R"(<(?!div|/div|p|/p|br)[^>]*>)", flags};
  boost::regex boundary_tags{R"(<(?:div|/div|p|/p|br)[^>]*>)", flags};
  boost::regex whitespace{R"(\s*|\t|\r|\n)", flags};
  boost::regex whitespace_run{R"(\s+)", flags};
  boost::regex title{R"((?<=<title>).*?(?=<\/title>))", flags};
};

inline const CleaningPatterns& patterns() {
  static const CleaningPatterns p;
  return p;
}

inline std::string clean_once(const std::string& in, WhitespaceMode mode) {
  const auto& p = patterns();
  std::string s = boost::regex_replace(in, p.script, "");
  s = boost::regex_replace(s, p.style, "");
  s = boost::regex_replace(s, p.anchor, "");
  s = boost::regex_replace(s, p.table_row, "$1");
  s = boost::regex_replace(s, p.table_head, "$1");
  s = boost::regex_replace(s, p.table_cell, "$1");
  s = boost::regex_replace(s, p.tags, "");
  // div/p/br survive the tag pattern; they become line breaks before whitespace handling.
  s = boost::regex_replace(s, p.boundary_tags, "\n");
  if (mode == WhitespaceMode::remove) {
    return boost::regex_replace(s, p.whitespace, "");
  }
  s = boost::regex_replace(s, p.whitespace_run, " ");
  const auto first = s.find_first_not_of(' ');
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(' ');
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Strips scripts, styles, hyperlinks and markup, keeps table-cell text, and
/// normalizes whitespace. Applied to a fixed point, so clean(clean(x)) == clean(x).
inline std::string clean_text(std::string_view raw, WhitespaceMode mode = WhitespaceMode::remove) {
  std::string current(raw);
  for (int pass = 0; pass < 64; ++pass) {
    std::string next = detail::clean_once(current, mode);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

/// Text between <title> and </title>, when present.
inline std::optional<std::string> extract_title(std::string_view raw) {
  boost::smatch m;
  const std::string s(raw);
  if (boost::regex_search(s, m, detail::patterns().title)) return m.str(0);
  return std::nullopt;
}

}  // namespace msea::corpus

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace morphnli::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_terminal_punct(char c) { return c == '.' || c == '!' || c == '?'; }

// Punctuation that may be glued to the end of a word ("shirt." / "coat,").
inline bool is_glue_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

/// Collapses whitespace runs to one space and trims both ends.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

inline std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::size_t token_count(std::string_view s) { return split_tokens(s).size(); }

/// Splits a collapsed sentence into its body and one trailing terminal mark.
inline std::pair<std::string, std::string> split_terminal(std::string_view collapsed) {
  if (!collapsed.empty() && is_terminal_punct(collapsed.back())) {
    std::string body(trim(collapsed.substr(0, collapsed.size() - 1)));
    return {body, std::string(1, collapsed.back())};
  }
  return {std::string(collapsed), std::string()};
}

/// First occurrence of `needle` in `hay` at or after `from` that starts at a
/// word start and ends at a word end (space, end of text or glued punctuation).
inline std::size_t find_word(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.empty()) return std::string_view::npos;
  while (from <= hay.size()) {
    std::size_t p = hay.find(needle, from);
    if (p == std::string_view::npos) return p;
    std::size_t e = p + needle.size();
    bool left_ok = p == 0 || is_space(hay[p - 1]);
    bool right_ok = e == hay.size() || is_space(hay[e]) || is_glue_punct(hay[e]);
    if (left_ok && right_ok) return p;
    from = p + 1;
  }
  return std::string_view::npos;
}

inline bool contains_word(std::string_view hay, std::string_view needle) {
  return find_word(hay, needle) != std::string_view::npos;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace morphnli::text

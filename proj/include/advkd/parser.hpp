// Copyright 2026 The advkd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Extraction of subtopic lists, code-completion exercises and [PROBLEM]
// blocks from raw model output. All functions are pure and report where in
// the raw text each piece came from.

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advkd/errors.hpp"
#include "advkd/hash.hpp"

namespace advkd::parser {

enum class ExerciseFormat { CodeCompletion, NaturalLanguage };

inline std::string_view format_name(ExerciseFormat f) {
  return f == ExerciseFormat::CodeCompletion ? "code_completion"
                                             : "natural_language";
}

inline ExerciseFormat format_from_name(std::string_view name) {
  if (name == "code_completion") return ExerciseFormat::CodeCompletion;
  if (name == "natural_language") return ExerciseFormat::NaturalLanguage;
  throw DomainError("unknown exercise format '" + std::string(name) + "'");
}

/// Half-open byte range into the raw generation.
struct SourceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::string_view slice(std::string_view raw) const {
    return raw.substr(begin, end - begin);
  }
  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

struct ExerciseDraft {
  /// Signature plus docstring (delimiters included), or a problem statement.
  std::string prompt_text;
  std::optional<std::string> solution_text;
  ExerciseFormat format = ExerciseFormat::CodeCompletion;
  /// Covers prompt_text exactly.
  SourceSpan source_span;
  /// Covers solution_text exactly, when present.
  std::optional<SourceSpan> solution_span;

  friend bool operator==(const ExerciseDraft&, const ExerciseDraft&) = default;
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline std::string excerpt(std::string_view raw, std::size_t limit = 120) {
  if (raw.size() <= limit) return std::string(raw);
  return std::string(raw.substr(0, limit)) + "...";
}

/// Shrinks [begin, end) past surrounding whitespace.
inline SourceSpan trimmed(std::string_view raw, std::size_t begin,
                          std::size_t end) {
  while (begin < end && is_space(raw[begin])) ++begin;
  while (end > begin && is_space(raw[end - 1])) --end;
  return {begin, end};
}

inline std::size_t line_end(std::string_view raw, std::size_t pos) {
  const std::size_t nl = raw.find('\n', pos);
  return nl == std::string_view::npos ? raw.size() : nl;
}

inline std::size_t next_line(std::string_view raw, std::size_t pos) {
  const std::size_t e = line_end(raw, pos);
  return e == raw.size() ? raw.size() : e + 1;
}

inline bool blank_line(std::string_view raw, std::size_t start) {
  const std::size_t e = line_end(raw, start);
  for (std::size_t i = start; i < e; ++i) {
    if (!is_space(raw[i])) return false;
  }
  return true;
}

// Parses one Python string literal starting at raw[pos] (a quote). Returns
// the decoded value and advances pos past the closing quote.
inline std::optional<std::string> python_string(std::string_view raw,
                                                std::size_t& pos) {
  const char quote = raw[pos];
  std::string value;
  std::size_t i = pos + 1;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == quote) {
      pos = i + 1;
      return value;
    }
    if (c == '\n') return std::nullopt;
    if (c == '\\' && i + 1 < raw.size()) {
      const char e = raw[i + 1];
      switch (e) {
        case 'n': value += '\n'; break;
        case 't': value += '\t'; break;
        case 'r': value += '\r'; break;
        case '\\': value += '\\'; break;
        case '\'': value += '\''; break;
        case '"': value += '"'; break;
        default:
          value += '\\';
          value += e;
          break;
      }
      i += 2;
      continue;
    }
    value += c;
    ++i;
  }
  return std::nullopt;
}

// Attempts a list literal of strings at raw[open] == '['.
inline std::optional<std::vector<std::string>> string_list_at(
    std::string_view raw, std::size_t open) {
  std::size_t i = open + 1;
  auto skip_ws = [&] {
    while (i < raw.size() && is_space(raw[i])) ++i;
  };
  std::vector<std::string> items;
  skip_ws();
  if (i < raw.size() && raw[i] == ']') return items;
  while (i < raw.size()) {
    skip_ws();
    if (i >= raw.size() || (raw[i] != '\'' && raw[i] != '"')) {
      return std::nullopt;
    }
    auto item = python_string(raw, i);
    if (!item) return std::nullopt;
    items.push_back(std::move(*item));
    skip_ws();
    if (i >= raw.size()) return std::nullopt;
    if (raw[i] == ']') return items;
    if (raw[i] != ',') return std::nullopt;
    ++i;
    skip_ws();
    if (i < raw.size() && raw[i] == ']') return items;  // trailing comma
  }
  return std::nullopt;
}

// End of a `def` header: index just past the ':' that closes the signature,
// or npos when the line does not hold a well-formed header.
inline std::size_t signature_end(std::string_view raw, std::size_t start) {
  int depth = 0;
  bool seen_paren = false;
  std::size_t i = start;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == '\'' || c == '"') {
      std::size_t j = i;
      if (!python_string(raw, j)) return std::string_view::npos;
      i = j;
      continue;
    }
    if (c == '#' && depth == 0) return std::string_view::npos;
    if (c == '\n' && depth == 0) return std::string_view::npos;
    if (c == '(' || c == '[' || c == '{') {
      ++depth;
      if (c == '(') seen_paren = true;
    } else if (c == ')' || c == ']' || c == '}') {
      if (--depth < 0) return std::string_view::npos;
    } else if (c == ':' && depth == 0 && seen_paren) {
      return i + 1;
    }
    ++i;
  }
  return std::string_view::npos;
}

inline bool starts_top_level_def(std::string_view raw, std::size_t ls) {
  const std::string_view rest = raw.substr(ls);
  return rest.starts_with("def ") || rest.starts_with("async def ");
}

// Position of an opening triple quote (after an optional r/u/b prefix) at
// pos, with the quote kind written to `delim`.
inline std::optional<std::size_t> docstring_open(std::string_view raw,
                                                 std::size_t pos,
                                                 std::string_view& delim) {
  std::size_t i = pos;
  for (int k = 0; k < 2 && i < raw.size() &&
                  std::string_view("rRuUbB").find(raw[i]) != std::string_view::npos;
       ++k) {
    ++i;
  }
  for (std::string_view d : {std::string_view("\"\"\""), std::string_view("'''")}) {
    if (raw.substr(i, 3) == d) {
      delim = d;
      return i;
    }
  }
  return std::nullopt;
}

inline std::size_t docstring_close(std::string_view raw, std::size_t from,
                                   std::string_view delim) {
  std::size_t i = from;
  while (i + 3 <= raw.size()) {
    if (raw[i] == '\\') {
      i += 2;
      continue;
    }
    if (raw.substr(i, 3) == delim) return i;
    ++i;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// First bracketed list of quoted strings anywhere in the text.
inline std::vector<std::string> parse_string_list(std::string_view raw) {
  for (std::size_t pos = raw.find('['); pos != std::string_view::npos;
       pos = raw.find('[', pos + 1)) {
    auto items = detail::string_list_at(raw, pos);
    if (!items) continue;
    if (items->empty()) {
      throw ParseError("list literal is empty", detail::excerpt(raw));
    }
    return *items;
  }
  throw ParseError("no list of strings found", detail::excerpt(raw));
}

/// Top-level functions with a docstring, split at the end of the docstring.
/// Functions without a docstring, one-line defs, and anything indented
/// (class methods, nested functions) are skipped.
inline std::vector<ExerciseDraft> parse_code_completion(std::string_view raw) {
  std::vector<ExerciseDraft> drafts;
  std::size_t ls = 0;
  while (ls < raw.size()) {
    if (!detail::starts_top_level_def(raw, ls)) {
      ls = detail::next_line(raw, ls);
      continue;
    }
    const std::size_t sig_end = detail::signature_end(raw, ls);
    if (sig_end == std::string_view::npos) {
      ls = detail::next_line(raw, ls);
      continue;
    }
    // Anything but whitespace or a comment after the colon is a one-line body.
    const std::size_t header_line_end = detail::line_end(raw, sig_end);
    const SourceSpan after = detail::trimmed(raw, sig_end, header_line_end);
    if (after.begin != after.end && raw[after.begin] != '#') {
      ls = detail::next_line(raw, ls);
      continue;
    }

    // First non-blank line of the body must open an indented docstring.
    std::size_t body_line = detail::next_line(raw, sig_end);
    while (body_line < raw.size() && detail::blank_line(raw, body_line)) {
      body_line = detail::next_line(raw, body_line);
    }
    std::size_t indent = body_line;
    while (indent < raw.size() && (raw[indent] == ' ' || raw[indent] == '\t')) {
      ++indent;
    }
    std::string_view delim;
    const auto open = indent > body_line
                          ? detail::docstring_open(raw, indent, delim)
                          : std::nullopt;
    if (!open) {
      ls = detail::next_line(raw, sig_end);
      continue;
    }
    const std::size_t close = detail::docstring_close(raw, *open + 3, delim);
    if (close == std::string_view::npos) {
      ls = detail::next_line(raw, sig_end);
      continue;
    }
    const std::size_t prompt_end = close + 3;

    // Body runs until the first non-blank line that starts at column 0.
    std::size_t body_end = detail::next_line(raw, prompt_end);
    while (body_end < raw.size()) {
      const char c = raw[body_end];
      if (!detail::blank_line(raw, body_end) && c != ' ' && c != '\t') break;
      body_end = detail::next_line(raw, body_end);
    }

    ExerciseDraft draft;
    draft.format = ExerciseFormat::CodeCompletion;
    draft.source_span = {ls, prompt_end};
    draft.prompt_text = std::string(draft.source_span.slice(raw));
    const SourceSpan solution = detail::trimmed(raw, prompt_end, body_end);
    if (solution.begin != solution.end) {
      draft.solution_span = solution;
      draft.solution_text = std::string(solution.slice(raw));
    }
    drafts.push_back(std::move(draft));
    ls = body_end;
  }
  if (drafts.empty()) {
    throw ParseError("no function with a docstring found", detail::excerpt(raw));
  }
  return drafts;
}

inline constexpr std::string_view kProblemToken = "[PROBLEM]";

/// Text between consecutive [PROBLEM] token pairs. A trailing unpaired token
/// and blank blocks are dropped.
inline std::vector<ExerciseDraft> parse_problem_blocks(std::string_view raw) {
  std::vector<std::size_t> tokens;
  for (std::size_t pos = raw.find(kProblemToken); pos != std::string_view::npos;
       pos = raw.find(kProblemToken, pos + kProblemToken.size())) {
    tokens.push_back(pos);
  }
  std::vector<ExerciseDraft> drafts;
  for (std::size_t i = 0; i + 1 < tokens.size(); i += 2) {
    const SourceSpan span = detail::trimmed(
        raw, tokens[i] + kProblemToken.size(), tokens[i + 1]);
    if (span.begin == span.end) continue;
    ExerciseDraft draft;
    draft.format = ExerciseFormat::NaturalLanguage;
    draft.source_span = span;
    draft.prompt_text = std::string(span.slice(raw));
    drafts.push_back(std::move(draft));
  }
  if (drafts.empty()) {
    throw ParseError("no complete [PROBLEM] block found", detail::excerpt(raw));
  }
  return drafts;
}

/// Lowercased, whitespace-collapsed prompt text, hashed.
inline std::string dedupe_key(std::string_view prompt_text) {
  std::string normalized;
  normalized.reserve(prompt_text.size());
  bool pending_space = false;
  for (char c : prompt_text) {
    if (detail::is_space(c)) {
      pending_space = !normalized.empty();
      continue;
    }
    if (pending_space) normalized += ' ';
    pending_space = false;
    normalized += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return hex64(fnv1a64(normalized));
}

}  // namespace advkd::parser

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Source code as a token sequence plus the table of user-defined
// identifiers. Identifiers are the only perturbation surface of the
// smoothing defense, so everything downstream works on IdentifierTable
// entries rather than raw token positions.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codecert/error.hpp"
#include "codecert/language_tables.hpp"

namespace codecert {

enum class Language { c, java, generic };

inline std::string_view to_string(Language lang) noexcept {
  switch (lang) {
    case Language::c: return "c";
    case Language::java: return "java";
    case Language::generic: return "generic";
  }
  return "generic";
}

inline Language language_from_string(std::string_view name) {
  if (name == "c") return Language::c;
  if (name == "java") return Language::java;
  if (name == "generic") return Language::generic;
  throw DataError("unknown language '" + std::string(name) + "' (expected c, java or generic)");
}

enum class TokenKind {
  identifier,
  keyword,
  string_literal,
  char_literal,
  numeric_literal,
  comment,
  punctuation,
  whitespace,
};

inline std::string_view to_string(TokenKind kind) noexcept {
  switch (kind) {
    case TokenKind::identifier: return "identifier";
    case TokenKind::keyword: return "keyword";
    case TokenKind::string_literal: return "string-literal";
    case TokenKind::char_literal: return "char-literal";
    case TokenKind::numeric_literal: return "numeric-literal";
    case TokenKind::comment: return "comment";
    case TokenKind::punctuation: return "punctuation";
    case TokenKind::whitespace: return "whitespace";
  }
  return "punctuation";
}

struct Token {
  std::string text;
  TokenKind kind = TokenKind::punctuation;
  std::size_t start = 0;  // byte offsets [start, end) into the source
  std::size_t end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

using WordSet = std::set<std::string, std::less<>>;

/// Parses a word list: one word per line, '#' starts a comment.
inline WordSet parse_word_list(std::string_view text) {
  WordSet words;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    if (!line.empty()) words.emplace(line);
    pos = eol + 1;
  }
  return words;
}

inline WordSet load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read word list " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_word_list(buf.str());
}

namespace detail {

template <std::size_t N>
WordSet to_word_set(const std::array<std::string_view, N>& words) {
  return WordSet(words.begin(), words.end());
}

inline bool is_ascii_letter(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
inline bool is_ascii_digit(char c) noexcept { return c >= '0' && c <= '9'; }
inline bool is_ident_start(char c) noexcept { return is_ascii_letter(c) || c == '_'; }
inline bool is_ident_char(char c) noexcept { return is_ident_start(c) || is_ascii_digit(c); }
inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace detail

inline const WordSet& keywords(Language lang) {
  static const WordSet c = detail::to_word_set(tables::kCKeywords);
  static const WordSet java = detail::to_word_set(tables::kJavaKeywords);
  static const WordSet none;
  switch (lang) {
    case Language::c: return c;
    case Language::java: return java;
    case Language::generic: return none;
  }
  return none;
}

/// Standard-library and preprocessor names excluded from the identifier
/// table by default. Generic mode excludes nothing.
inline const std::shared_ptr<const WordSet>& default_denylist(Language lang) {
  static const auto c = std::make_shared<const WordSet>(detail::to_word_set(tables::kCDenylist));
  static const auto java =
      std::make_shared<const WordSet>(detail::to_word_set(tables::kJavaDenylist));
  static const auto none = std::make_shared<const WordSet>();
  switch (lang) {
    case Language::c: return c;
    case Language::java: return java;
    case Language::generic: return none;
  }
  return none;
}

inline bool is_identifier_name(std::string_view name) noexcept {
  if (name.empty() || !detail::is_ident_start(name.front())) return false;
  return std::all_of(name.begin() + 1, name.end(), detail::is_ident_char);
}

inline bool is_keyword(std::string_view word, Language lang) {
  return keywords(lang).contains(word);
}

namespace detail {

class Lexer {
 public:
  Lexer(std::string_view src, Language lang) : src_(src), lang_(lang) {}

  std::vector<Token> run() {
    while (pos_ < src_.size()) step();
    return std::move(tokens_);
  }

 private:
  char peek(std::size_t ahead = 0) const noexcept {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void emit(TokenKind kind, std::size_t start, std::size_t end) {
    tokens_.push_back(Token{std::string(src_.substr(start, end - start)), kind, start, end});
    pos_ = end;
  }

  // Scans a quoted literal whose opening quote is at `quote_pos`.
  std::size_t scan_quoted(std::size_t literal_start, std::size_t quote_pos, char quote) const {
    std::size_t i = quote_pos + 1;
    while (i < src_.size()) {
      char c = src_[i];
      if (c == '\\') {
        i += 2;
        continue;
      }
      if (c == quote) return i + 1;
      if (c == '\n') break;
      ++i;
    }
    throw LexError(literal_start, quote == '"' ? "unterminated string literal"
                                               : "unterminated character literal");
  }

  std::size_t scan_text_block(std::size_t start) const {
    std::size_t i = start + 3;
    while (i + 3 <= src_.size()) {
      if (src_[i] == '\\') {
        i += 2;
        continue;
      }
      if (src_.compare(i, 3, R"(""")") == 0) return i + 3;
      ++i;
    }
    throw LexError(start, "unterminated text block");
  }

  bool previous_significant_is_hash() const {
    for (auto it = tokens_.rbegin(); it != tokens_.rend(); ++it) {
      if (it->kind == TokenKind::whitespace && it->text.find('\n') == std::string::npos) continue;
      return it->kind == TokenKind::punctuation && it->text == "#";
    }
    return false;
  }

  void step() {
    const std::size_t start = pos_;
    const char c = peek();

    if (is_space(c)) {
      std::size_t i = start;
      while (i < src_.size() && is_space(src_[i])) ++i;
      emit(TokenKind::whitespace, start, i);
      return;
    }
    if (c == '/' && peek(1) == '/') {
      std::size_t eol = src_.find('\n', start);
      emit(TokenKind::comment, start, eol == std::string_view::npos ? src_.size() : eol);
      return;
    }
    if (c == '/' && peek(1) == '*') {
      std::size_t close = src_.find("*/", start + 2);
      if (close == std::string_view::npos) throw LexError(start, "unterminated block comment");
      emit(TokenKind::comment, start, close + 2);
      return;
    }
    if (c == '"') {
      if (lang_ == Language::java && peek(1) == '"' && peek(2) == '"') {
        emit(TokenKind::string_literal, start, scan_text_block(start));
        return;
      }
      emit(TokenKind::string_literal, start, scan_quoted(start, start, '"'));
      return;
    }
    if (c == '\'') {
      emit(TokenKind::char_literal, start, scan_quoted(start, start, '\''));
      return;
    }
    if (is_ascii_digit(c) || (c == '.' && is_ascii_digit(peek(1)))) {
      std::size_t i = start + 1;
      while (i < src_.size()) {
        char d = src_[i];
        if ((d == '+' || d == '-') && (src_[i - 1] == 'e' || src_[i - 1] == 'E' ||
                                       src_[i - 1] == 'p' || src_[i - 1] == 'P')) {
          ++i;
          continue;
        }
        if (!is_ident_char(d) && d != '.') break;
        ++i;
      }
      emit(TokenKind::numeric_literal, start, i);
      return;
    }
    if (is_ident_start(c)) {
      std::size_t i = start + 1;
      while (i < src_.size() && is_ident_char(src_[i])) ++i;
      std::string_view word = src_.substr(start, i - start);
      const char next = i < src_.size() ? src_[i] : '\0';
      if (lang_ != Language::java && (next == '"' || next == '\'') &&
          (word == "L" || word == "u" || word == "U" || word == "u8")) {
        emit(next == '"' ? TokenKind::string_literal : TokenKind::char_literal, start,
             scan_quoted(start, i, next));
        return;
      }
      const bool include_directive = lang_ != Language::java && word == "include" &&
                                     previous_significant_is_hash();
      emit(is_keyword(word, lang_) ? TokenKind::keyword : TokenKind::identifier, start, i);
      if (include_directive) lex_header_name();
      return;
    }
    if (static_cast<unsigned char>(c) >= 0x80) {
      const auto lead = static_cast<unsigned char>(c);
      std::size_t len = lead >= 0xf0 ? 4 : lead >= 0xe0 ? 3 : lead >= 0xc0 ? 2 : 1;
      emit(TokenKind::punctuation, start, std::min(src_.size(), start + len));
      return;
    }
    emit(TokenKind::punctuation, start, start + 1);
  }

  // `#include <path>`: the bracketed path is one literal token, so header
  // names never leak into the identifier table.
  void lex_header_name() {
    std::size_t i = pos_;
    while (i < src_.size() && (src_[i] == ' ' || src_[i] == '\t')) ++i;
    if (i >= src_.size() || src_[i] != '<') return;
    std::size_t close = i + 1;
    while (close < src_.size() && src_[close] != '>' && src_[close] != '\n') ++close;
    if (close >= src_.size() || src_[close] != '>') return;
    if (i > pos_) emit(TokenKind::whitespace, pos_, i);
    emit(TokenKind::string_literal, i, close + 1);
  }

  std::string_view src_;
  Language lang_;
  std::size_t pos_ = 0;
  std::vector<Token> tokens_;
};

}  // namespace detail

/// Splits `source` into tokens whose texts concatenate back to the source.
/// Throws LexError for unterminated comments and literals.
inline std::vector<Token> tokenize(std::string_view source, Language lang) {
  return detail::Lexer(source, lang).run();
}

struct IdentifierEntry {
  std::string name;
  std::vector<std::size_t> occurrences;  // token indices, ascending

  friend bool operator==(const IdentifierEntry&, const IdentifierEntry&) = default;
};

/// User-defined identifiers in first-occurrence order. The entry count is
/// the identifier count h used by certification.
class IdentifierTable {
 public:
  IdentifierTable() = default;
  explicit IdentifierTable(std::vector<IdentifierEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const IdentifierEntry& operator[](std::size_t i) const { return entries_.at(i); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const std::vector<IdentifierEntry>& entries() const noexcept { return entries_; }

  std::optional<std::size_t> find(std::string_view name) const {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    return std::nullopt;
  }

  friend bool operator==(const IdentifierTable& a, const IdentifierTable& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<IdentifierEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

inline IdentifierTable extract_identifiers(std::span<const Token> tokens, Language lang,
                                           const WordSet& denylist) {
  std::vector<IdentifierEntry> entries;
  std::map<std::string_view, std::size_t> slot;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (t.kind != TokenKind::identifier || denylist.contains(t.text) || is_keyword(t.text, lang))
      continue;
    auto [it, inserted] = slot.emplace(t.text, entries.size());
    if (inserted) entries.push_back(IdentifierEntry{t.text, {}});
    entries[it->second].occurrences.push_back(i);
  }
  return IdentifierTable(std::move(entries));
}

/// Tokenized source plus its identifier table. Immutable once built; the
/// denylist is shared between copies.
class CodeSnippet {
 public:
  static CodeSnippet parse(std::string source, Language lang,
                           std::shared_ptr<const WordSet> denylist = nullptr) {
    if (!denylist) denylist = default_denylist(lang);
    auto tokens = tokenize(source, lang);
    auto table = extract_identifiers(tokens, lang, *denylist);
    return CodeSnippet(lang, std::move(source), std::move(tokens), std::move(table),
                       std::move(denylist));
  }

  Language language() const noexcept { return lang_; }
  const std::string& source() const noexcept { return source_; }
  const std::vector<Token>& tokens() const noexcept { return tokens_; }
  const IdentifierTable& identifiers() const noexcept { return table_; }
  const WordSet& denylist() const noexcept { return *denylist_; }
  const std::shared_ptr<const WordSet>& shared_denylist() const noexcept { return denylist_; }
  std::size_t identifier_count() const noexcept { return table_.size(); }

  /// Every identifier-kind token text, including denylisted words. A new
  /// name must avoid all of them or it would merge with an existing name.
  WordSet word_names() const {
    WordSet names;
    for (const auto& t : tokens_)
      if (t.kind == TokenKind::identifier) names.insert(t.text);
    return names;
  }

 private:
  CodeSnippet(Language lang, std::string source, std::vector<Token> tokens, IdentifierTable table,
              std::shared_ptr<const WordSet> denylist)
      : lang_(lang),
        source_(std::move(source)),
        tokens_(std::move(tokens)),
        table_(std::move(table)),
        denylist_(std::move(denylist)) {}

  friend CodeSnippet rename_entries(const CodeSnippet&,
                                    std::span<const std::pair<std::size_t, std::string>>);

  Language lang_;
  std::string source_;
  std::vector<Token> tokens_;
  IdentifierTable table_;
  std::shared_ptr<const WordSet> denylist_;
};

/// Renames several identifier entries at once (entry index, new name).
/// Entry indices and occurrence lists are preserved. The final names must
/// be pairwise distinct, lexically valid, not keywords, not denylisted and
/// distinct from every word that is not being renamed.
inline CodeSnippet rename_entries(const CodeSnippet& snippet,
                                  std::span<const std::pair<std::size_t, std::string>> renames) {
  const auto& table = snippet.identifiers();
  std::vector<std::string> names;
  names.reserve(table.size());
  for (const auto& e : table) names.push_back(e.name);

  std::vector<bool> renamed(table.size(), false);
  for (const auto& [entry, name] : renames) {
    if (entry >= table.size())
      throw IdentifierError("identifier entry " + std::to_string(entry) + " out of range");
    if (renamed[entry])
      throw IdentifierError("identifier entry " + std::to_string(entry) + " renamed twice");
    renamed[entry] = true;
    if (name == names[entry]) continue;
    if (!is_identifier_name(name))
      throw IdentifierError("'" + name + "' is not a valid identifier name");
    if (is_keyword(name, snippet.language()))
      throw IdentifierError("'" + name + "' is a keyword");
    if (snippet.denylist().contains(name))
      throw IdentifierError("'" + name + "' is a reserved library name");
    names[entry] = name;
  }

  WordSet taken;
  for (const auto& t : snippet.tokens())
    if (t.kind == TokenKind::identifier) taken.insert(t.text);
  for (std::size_t i = 0; i < table.size(); ++i)
    if (renamed[i]) taken.erase(table[i].name);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!renamed[i]) continue;
    if (!taken.insert(names[i]).second)
      throw IdentifierError("renaming '" + table[i].name + "' to '" + names[i] +
                            "' collides with an existing identifier");
  }

  std::vector<Token> tokens = snippet.tokens();
  std::vector<IdentifierEntry> entries = table.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!renamed[i]) continue;
    entries[i].name = names[i];
    for (std::size_t occ : entries[i].occurrences) tokens[occ].text = names[i];
  }
  std::string source;
  source.reserve(snippet.source().size());
  for (auto& t : tokens) {
    t.start = source.size();
    source += t.text;
    t.end = source.size();
  }
  return CodeSnippet(snippet.language(), std::move(source), std::move(tokens),
                     IdentifierTable(std::move(entries)), snippet.shared_denylist());
}

inline CodeSnippet rename_identifier(const CodeSnippet& snippet, std::string_view old_name,
                                     std::string_view new_name) {
  auto entry = snippet.identifiers().find(old_name);
  if (!entry) throw IdentifierError("unknown identifier '" + std::string(old_name) + "'");
  const std::pair<std::size_t, std::string> rename{*entry, std::string(new_name)};
  return rename_entries(snippet, std::span(&rename, 1));
}

/// Token-index mask of identifier occurrences.
inline std::vector<bool> identifier_token_mask(const CodeSnippet& snippet) {
  std::vector<bool> mask(snippet.tokens().size(), false);
  for (const auto& e : snippet.identifiers())
    for (std::size_t occ : e.occurrences) mask[occ] = true;
  return mask;
}

/// L0 distance at identifier granularity: the number of table entries whose
/// names differ. The snippets must be structurally aligned.
inline std::size_t identifier_distance(const CodeSnippet& a, const CodeSnippet& b) {
  const auto& ta = a.identifiers();
  const auto& tb = b.identifiers();
  if (ta.size() != tb.size())
    throw AlignmentError("identifier counts differ (" + std::to_string(ta.size()) + " vs " +
                         std::to_string(tb.size()) + ")");
  if (a.tokens().size() != b.tokens().size())
    throw AlignmentError("token counts differ");
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].occurrences != tb[i].occurrences)
      throw AlignmentError("occurrence structure of identifier entry " + std::to_string(i) +
                           " differs");
  const auto mask = identifier_token_mask(a);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) continue;
    const Token& x = a.tokens()[i];
    const Token& y = b.tokens()[i];
    if (x.kind != y.kind || x.text != y.text)
      throw AlignmentError("non-identifier token " + std::to_string(i) + " differs");
  }
  std::size_t distance = 0;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].name != tb[i].name) ++distance;
  return distance;
}

}  // namespace codecert

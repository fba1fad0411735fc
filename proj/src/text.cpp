#include "plotforge/text.hpp"

#include <cctype>

namespace plotforge::text {

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '\'' || u >= 0x80;
}

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

// Uppercase ASCII letter, straight quote, or a UTF-8 curly opening quote
// (U+2018 / U+201C, encoded E2 80 98 / E2 80 9C).
bool opens_sentence(std::string_view text, std::size_t i) {
  const char c = text[i];
  if (c >= 'A' && c <= 'Z') return true;
  if (c == '"' || c == '\'') return true;
  if (static_cast<unsigned char>(c) == 0xE2 && i + 2 < text.size() &&
      static_cast<unsigned char>(text[i + 1]) == 0x80) {
    const auto third = static_cast<unsigned char>(text[i + 2]);
    return third == 0x98 || third == 0x9C;
  }
  return false;
}

}  // namespace

std::vector<Span> split_sentences(std::string_view text, const WordList& abbreviations) {
  std::vector<Span> out;
  bool any_content = false;
  for (char c : text) {
    if (!is_space(c)) {
      any_content = true;
      break;
    }
  }
  if (!any_content) return out;

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminator(text[i])) {
      ++i;
      continue;
    }
    const std::size_t first_term = i;
    std::size_t j = i;
    while (j < text.size() && is_terminator(text[j])) ++j;
    while (j < text.size() && is_closer(text[j])) ++j;
    std::size_t k = j;
    while (k < text.size() && is_space(text[k])) ++k;
    if (k == j || k >= text.size() || !opens_sentence(text, k)) {
      i = j;
      continue;
    }
    if (j == first_term + 1 && text[first_term] == '.') {
      std::size_t w = first_term;
      while (w > start && !is_space(text[w - 1])) --w;
      if (abbreviations.contains(to_lower_ascii(text.substr(w, first_term + 1 - w)))) {
        i = j;
        continue;
      }
    }
    out.push_back(Span{start, j});
    start = j;
    i = k;
  }
  out.push_back(Span{start, text.size()});
  return out;
}

std::string_view sentence_text(std::string_view text, Span span) {
  auto s = text.substr(span.begin, span.size());
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<Word> scan_words(std::string_view text, Span range) {
  std::vector<Word> out;
  std::size_t i = range.begin;
  while (i < range.end) {
    if (!is_word_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < range.end && is_word_byte(text[j])) ++j;
    // Quotes hugging a word are punctuation, not part of it.
    std::size_t b = i;
    std::size_t e = j;
    while (b < e && text[b] == '\'') ++b;
    while (e > b && text[e - 1] == '\'') --e;
    if (b < e) out.push_back(Word{Span{b, e}, to_lower_ascii(text.substr(b, e - b))});
    i = j;
  }
  return out;
}

}  // namespace plotforge::text

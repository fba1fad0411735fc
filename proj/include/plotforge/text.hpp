#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "plotforge/types.hpp"

namespace plotforge::text {

// Set of lowercase entries loaded from one of the shipped word-list files.
class WordList {
 public:
  WordList() = default;
  explicit WordList(std::string_view file_contents);

  bool contains(std::string_view lowercase_word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

const WordList& english_stopwords();
const WordList& male_names();
const WordList& female_names();
const WordList& default_abbreviations();

std::string to_lower_ascii(std::string_view s);
bool is_space(char c);

// Sentence boundaries as a partition of `text`: consecutive spans with no gap
// or overlap whose concatenation is the input. Whitespace between sentences
// belongs to the following sentence. A boundary is a run of . ! ? (plus any
// closing quotes or brackets) followed by whitespace and then an uppercase
// letter or an opening quote, unless the word ending in '.' is in the
// abbreviation list. Text without any non-space character yields no spans.
std::vector<Span> split_sentences(std::string_view text, const WordList& abbreviations = default_abbreviations());

// Sentence text with surrounding whitespace removed.
std::string_view sentence_text(std::string_view text, Span span);

struct Word {
  Span chars;
  std::string lower;
};

// Word tokens: maximal runs of ASCII letters, digits, apostrophes and
// non-ASCII bytes. Everything else is either whitespace or punctuation.
std::vector<Word> scan_words(std::string_view text, Span range);
inline std::vector<Word> scan_words(std::string_view text) { return scan_words(text, Span{0, text.size()}); }

bool is_word_byte(char c);

}  // namespace plotforge::text

#include <string_view>

#include "plotforge/text.hpp"

namespace plotforge::data {
extern const std::string_view stopwords_en;
extern const std::string_view names_male;
extern const std::string_view names_female;
extern const std::string_view abbreviations_en;
}  // namespace plotforge::data

namespace plotforge::text {

WordList::WordList(std::string_view contents) {
  std::size_t pos = 0;
  while (pos < contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    auto line = contents.substr(pos, nl - pos);
    while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    if (!line.empty() && line.front() != '#') words_.insert(to_lower_ascii(line));
    pos = nl + 1;
  }
}

bool WordList::contains(std::string_view w) const { return words_.find(std::string(w)) != words_.end(); }

const WordList& english_stopwords() {
  static const WordList list(data::stopwords_en);
  return list;
}

const WordList& male_names() {
  static const WordList list(data::names_male);
  return list;
}

const WordList& female_names() {
  static const WordList list(data::names_female);
  return list;
}

const WordList& default_abbreviations() {
  static const WordList list(data::abbreviations_en);
  return list;
}

}  // namespace plotforge::text

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "plotforge/text.hpp"
#include "plotforge/types.hpp"

namespace plotforge::outline {

enum class Mode { keyword, abstract };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);

struct OutlineConfig {
  Mode mode = Mode::abstract;
  std::size_t n_keywords = 10;
  double abstract_ratio = 0.30;
  double damping = 0.85;
  double tolerance = 1e-6;
  std::size_t max_iterations = 100;
  // Weight sentence overlap with BM25 term scores instead of raw counts.
  bool bm25 = false;
  std::size_t max_story_words = 500;

  // Throws ContractError on an out-of-range field.
  void validate() const;
};

struct Keyword {
  std::string phrase;  // surface form of the first occurrence
  double score = 0;
  Span first;          // byte range of the first occurrence
};

struct KeywordResult {
  std::vector<Keyword> keywords;  // in order of first occurrence
  bool no_candidates = false;     // story held only stopwords and punctuation
};

// RAKE. Candidates are maximal runs of non-stopword words not interrupted by
// punctuation; word score deg/freq where deg sums the lengths of the phrase
// occurrences containing the word; phrase score is the sum over its words.
// Phrases are compared case-insensitively.
KeywordResult rake_keywords(std::string_view story, const OutlineConfig& cfg,
                            const text::WordList& stopwords = text::english_stopwords());

// Per-word deg/freq table used by rake_keywords, exposed for inspection.
struct RakeCandidate {
  std::vector<std::string> words;  // lowercase
  Span chars;
};
std::vector<RakeCandidate> rake_candidates(std::string_view story, const text::WordList& stopwords);

// Damped weighted PageRank: s_i = (1-d) + d * sum_j w_ji / out(j) * s_j, with
// the mass of nodes without outgoing weight spread evenly over all nodes.
// Scores sum to n.
std::vector<double> weighted_pagerank(const std::vector<std::vector<double>>& weights, double damping,
                                      double tolerance, std::size_t max_iterations);

// |shared content words| / (log(1+|a|) + log(1+|b|)), |.| in words.
double sentence_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const text::WordList& stopwords);

struct AbstractResult {
  std::vector<Span> sentences;  // kept spans, story order
  std::vector<double> scores;   // PageRank score of every sentence
  std::string text;             // kept sentences joined by single spaces
};

// max(1, round-half-up(ratio * n)).
std::size_t abstract_size(std::size_t n_sentences, double ratio);

AbstractResult textrank_abstract(std::string_view story, const OutlineConfig& cfg,
                                 const text::WordList& stopwords = text::english_stopwords());

// Keeps the first max_words whitespace-separated words, cutting right after
// the last kept word.
std::string truncate_words(std::string_view text, std::size_t max_words);

inline constexpr std::string_view kKeywordSeparator = " # ";

struct StoryTriple {
  std::string prompt;
  std::string outline;
  std::string story;  // already truncated
};

// Throws ValidationError on an empty prompt or story, or when the extractor
// yields no outline.
StoryTriple build_triple(std::string_view prompt, std::string_view story, const OutlineConfig& cfg);

}  // namespace plotforge::outline

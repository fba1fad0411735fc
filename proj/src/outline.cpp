#include "plotforge/outline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "plotforge/errors.hpp"

namespace plotforge::outline {

Mode parse_mode(std::string_view name) {
  if (name == "keyword") return Mode::keyword;
  if (name == "abstract") return Mode::abstract;
  throw ValidationError("unknown outline mode '" + std::string(name) + "' (expected keyword or abstract)");
}

std::string_view mode_name(Mode mode) { return mode == Mode::keyword ? "keyword" : "abstract"; }

void OutlineConfig::validate() const {
  if (n_keywords < 1) throw ContractError("outline config: n_keywords must be >= 1");
  if (!(abstract_ratio > 0 && abstract_ratio <= 1)) throw ContractError("outline config: abstract_ratio must be in (0, 1]");
  if (!(damping > 0 && damping < 1)) throw ContractError("outline config: damping must be in (0, 1)");
  if (!(tolerance > 0)) throw ContractError("outline config: tolerance must be positive");
  if (max_iterations < 1) throw ContractError("outline config: max_iterations must be >= 1");
  if (max_story_words < 1) throw ContractError("outline config: max_story_words must be >= 1");
}

namespace {

bool gap_is_blank(std::string_view text, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to; ++i) {
    if (!text::is_space(text[i])) return false;
  }
  return true;
}

std::string join_key(const std::vector<std::string>& words) {
  std::string key;
  for (const auto& w : words) {
    if (!key.empty()) key += ' ';
    key += w;
  }
  return key;
}

}  // namespace

std::vector<RakeCandidate> rake_candidates(std::string_view story, const text::WordList& stopwords) {
  std::vector<RakeCandidate> out;
  RakeCandidate current;
  std::size_t prev_end = 0;
  auto flush = [&] {
    if (!current.words.empty()) out.push_back(std::move(current));
    current = RakeCandidate{};
  };
  for (const auto& w : text::scan_words(story)) {
    if (!current.words.empty() && !gap_is_blank(story, prev_end, w.chars.begin)) flush();
    prev_end = w.chars.end;
    if (stopwords.contains(w.lower)) {
      flush();
      continue;
    }
    if (current.words.empty()) current.chars.begin = w.chars.begin;
    current.words.push_back(w.lower);
    current.chars.end = w.chars.end;
  }
  flush();
  return out;
}

KeywordResult rake_keywords(std::string_view story, const OutlineConfig& cfg, const text::WordList& stopwords) {
  cfg.validate();
  if (story.empty()) throw ValidationError("rake_keywords: empty story");
  const auto candidates = rake_candidates(story, stopwords);
  KeywordResult result;
  if (candidates.empty()) {
    result.no_candidates = true;
    return result;
  }

  std::unordered_map<std::string, double> deg, freq;
  for (const auto& c : candidates) {
    for (const auto& w : c.words) {
      deg[w] += static_cast<double>(c.words.size());
      freq[w] += 1;
    }
  }

  struct Phrase {
    std::size_t first;  // index into candidates
    double score;
  };
  std::vector<Phrase> phrases;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto key = join_key(candidates[i].words);
    if (seen.count(key)) continue;
    double score = 0;
    for (const auto& w : candidates[i].words) score += deg[w] / freq[w];
    seen.emplace(key, phrases.size());
    phrases.push_back({i, score});
  }

  std::vector<std::size_t> order(phrases.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return phrases[a].score > phrases[b].score; });
  order.resize(std::min(order.size(), cfg.n_keywords));
  std::sort(order.begin(), order.end());
  for (auto idx : order) {
    const auto& c = candidates[phrases[idx].first];
    result.keywords.push_back(
        Keyword{std::string(story.substr(c.chars.begin, c.chars.size())), phrases[idx].score, c.chars});
  }
  return result;
}

std::vector<double> weighted_pagerank(const std::vector<std::vector<double>>& weights, double damping,
                                      double tolerance, std::size_t max_iterations) {
  const std::size_t n = weights.size();
  for (const auto& row : weights) {
    if (row.size() != n) throw DimensionError("weighted_pagerank: weight matrix is not square");
  }
  std::vector<double> out_weight(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != j) out_weight[j] += weights[j][i];
    }
  }
  std::vector<double> s(n, 1.0), next(n);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    double dangling = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (out_weight[j] == 0) dangling += s[j];
    }
    double delta = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double in = dangling / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && out_weight[j] > 0) in += weights[j][i] / out_weight[j] * s[j];
      }
      next[i] = (1 - damping) + damping * in;
      delta = std::max(delta, std::abs(next[i] - s[i]));
    }
    s.swap(next);
    if (delta < tolerance) break;
  }
  return s;
}

double sentence_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const text::WordList& stopwords) {
  std::set<std::string> sa, sb;
  for (const auto& w : a) {
    if (!stopwords.contains(w)) sa.insert(w);
  }
  for (const auto& w : b) {
    if (!stopwords.contains(w)) sb.insert(w);
  }
  std::size_t shared = 0;
  for (const auto& w : sa) shared += sb.count(w);
  if (shared == 0) return 0.0;
  const double denom = std::log(1.0 + static_cast<double>(a.size())) + std::log(1.0 + static_cast<double>(b.size()));
  return static_cast<double>(shared) / denom;
}

std::size_t abstract_size(std::size_t n_sentences, double ratio) {
  // The epsilon keeps exact halves such as 0.3 * 15 from rounding down.
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_sentences) + 0.5 + 1e-9));
  return std::min(n_sentences, std::max<std::size_t>(1, k));
}

namespace {

// Okapi BM25 weight of sentence `query` against sentence `doc`, restricted to
// content words; idf floors at a small positive value as in common variants.
std::vector<std::vector<double>> bm25_weights(const std::vector<std::vector<std::string>>& sents,
                                              const text::WordList& stopwords) {
  constexpr double k1 = 1.2, b = 0.75, eps = 0.25;
  const std::size_t n = sents.size();
  std::vector<std::map<std::string, double>> tf(n);
  std::map<std::string, double> df;
  double total_len = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_len += static_cast<double>(sents[i].size());
    for (const auto& w : sents[i]) {
      if (!stopwords.contains(w)) tf[i][w] += 1;
    }
    for (const auto& [w, c] : tf[i]) df[w] += 1;
  }
  const double avg_len = n ? total_len / static_cast<double>(n) : 0;
  std::map<std::string, double> idf;
  double idf_sum = 0;
  for (const auto& [w, d] : df) {
    idf[w] = std::log((static_cast<double>(n) - d + 0.5) / (d + 0.5));
    idf_sum += idf[w];
  }
  const double floor = df.empty() ? 0 : eps * idf_sum / static_cast<double>(df.size());
  for (auto& [w, v] : idf) {
    if (v < 0) v = floor;
  }
  std::vector<std::vector<double>> wts(n, std::vector<double>(n, 0.0));
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t d = 0; d < n; ++d) {
      if (q == d) continue;
      const double len = static_cast<double>(sents[d].size());
      double score = 0;
      for (const auto& [w, c] : tf[q]) {
        auto it = tf[d].find(w);
        if (it == tf[d].end()) continue;
        const double f = it->second;
        score += idf[w] * f * (k1 + 1) / (f + k1 * (1 - b + b * len / (avg_len > 0 ? avg_len : 1)));
      }
      wts[q][d] = std::max(score, 0.0);
    }
  }
  return wts;
}

}  // namespace

AbstractResult textrank_abstract(std::string_view story, const OutlineConfig& cfg, const text::WordList& stopwords) {
  cfg.validate();
  const auto spans = text::split_sentences(story);
  if (spans.empty()) throw ValidationError("textrank_abstract: story has no sentences");
  const std::size_t n = spans.size();
  std::vector<std::vector<std::string>> words(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& w : text::scan_words(story, spans[i])) words[i].push_back(std::move(w.lower));
  }

  std::vector<std::vector<double>> weights;
  if (cfg.bm25) {
    weights = bm25_weights(words, stopwords);
  } else {
    weights.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        weights[i][j] = weights[j][i] = sentence_similarity(words[i], words[j], stopwords);
      }
    }
  }

  AbstractResult result;
  result.scores = weighted_pagerank(weights, cfg.damping, cfg.tolerance, cfg.max_iterations);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return result.scores[a] > result.scores[b]; });
  order.resize(abstract_size(n, cfg.abstract_ratio));
  std::sort(order.begin(), order.end());
  for (auto i : order) {
    result.sentences.push_back(spans[i]);
    if (!result.text.empty()) result.text += ' ';
    result.text += text::sentence_text(story, spans[i]);
  }
  return result;
}

std::string truncate_words(std::string_view text, std::size_t max_words) {
  std::size_t words = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text::is_space(text[i])) ++i;
    if (i == text.size()) break;
    while (i < text.size() && !text::is_space(text[i])) ++i;
    if (++words == max_words) return std::string(text.substr(0, i));
  }
  return std::string(text);
}

StoryTriple build_triple(std::string_view prompt, std::string_view story, const OutlineConfig& cfg) {
  auto blank = [](std::string_view s) { return std::all_of(s.begin(), s.end(), text::is_space); };
  if (blank(prompt)) throw ValidationError("build_triple: empty prompt");
  if (blank(story)) throw ValidationError("build_triple: empty story");
  StoryTriple t;
  t.prompt = std::string(prompt);
  t.story = truncate_words(story, cfg.max_story_words);
  if (cfg.mode == Mode::keyword) {
    const auto kw = rake_keywords(t.story, cfg);
    for (const auto& k : kw.keywords) {
      if (!t.outline.empty()) t.outline += kKeywordSeparator;
      t.outline += k.phrase;
    }
  } else {
    t.outline = textrank_abstract(t.story, cfg).text;
  }
  if (t.outline.empty()) throw ValidationError("build_triple: extractor produced an empty outline");
  return t;
}

}  // namespace plotforge::outline

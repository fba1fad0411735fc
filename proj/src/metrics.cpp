#include "plotforge/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "plotforge/errors.hpp"
#include "plotforge/logging.hpp"
#include "plotforge/ops.hpp"
#include "plotforge/text.hpp"
#include "plotforge/trainer.hpp"

namespace plotforge::eval {

template <class Real>
double perplexity(const lm::TransformerLM<Real>& model, std::span<const train::Sequence> data, std::size_t batch_size) {
  if (data.empty()) throw ValidationError("perplexity: empty evaluation set");
  if (batch_size == 0) batch_size = 1;
  ad::NoGradGuard<Real> guard;
  double nll = 0, tokens = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = train::collate(data, idx);
    const auto out = model.forward(batch.ids, batch.size, false, nullptr, lm::LogitRows::all);
    std::vector<Real> mask(batch.mask.begin(), batch.mask.end());
    double m = 0;
    for (auto v : batch.mask) m += v;
    if (m == 0) continue;
    const auto loss = ad::cross_entropy_masked(out.logits, std::span<const TokenId>(batch.targets),
                                               std::span<const Real>(mask));
    nll += static_cast<double>(loss.item()) * m;
    tokens += m;
  }
  if (tokens == 0) throw ValidationError("perplexity: no scored tokens in the evaluation set");
  return std::exp(nll / tokens);
}

namespace {

std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !text::is_space(s[j])) ++j;
    if (j > i) out.push_back(text::to_lower_ascii(s.substr(i, j - i)));
    i = j;
  }
  return out;
}

}  // namespace

Percent distinct_n(std::span<const std::string> stories, std::size_t n) {
  if (n == 0) throw ContractError("distinct_n: n must be >= 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& s : stories) {
    const auto toks = whitespace_tokens(s);
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      unique.emplace(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  if (total == 0) {
    logging::warn("distinct-{}: no {}-grams in {} stories, reporting 0", n, n, stories.size());
    return {0.0, true};
  }
  return {100.0 * static_cast<double>(unique.size()) / static_cast<double>(total), false};
}

Percent unknown_rate(const aux::DiscourseTagger& tagger, std::span<const std::string> stories, double tau) {
  std::size_t pairs = 0, unknown = 0;
  for (const auto& s : stories) {
    const auto sents = aux::story_sentences(s);
    for (auto l : aux::tag_story_pairs(tagger, sents, tau)) {
      ++pairs;
      if (l == aux::Label::unknown) ++unknown;
    }
  }
  if (pairs == 0) {
    logging::warn("unknown rate: no adjacent sentence pairs in {} stories, reporting 0", stories.size());
    return {0.0, true};
  }
  return {100.0 * static_cast<double>(unknown) / static_cast<double>(pairs), false};
}

double coref_chain_count(std::span<const std::string> stories,
                         std::span<const std::optional<std::vector<aux::Cluster>>> given) {
  if (stories.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < stories.size(); ++i) {
    if (i < given.size() && given[i]) {
      for (const auto& c : *given[i]) total += c.size() >= 2 ? 1 : 0;
    } else {
      total += static_cast<double>(aux::heuristic_coref(stories[i]).size());
    }
  }
  return total / static_cast<double>(stories.size());
}

template <class Real>
AttentionMap attention_map(const lm::TransformerLM<Real>& model, const train::Sequence& ex,
                           const text::Tokenizer& tokenizer) {
  if (ex.outline.empty()) throw ContractError("attention_map: example has no outline region");
  if (ex.story.empty()) throw ContractError("attention_map: example has no story region");
  ad::NoGradGuard<Real> guard;
  const auto out = model.forward(ex.ids, lm::LogitRows::none);
  const std::size_t t = ex.ids.size();
  const auto a = out.attention.data();
  AttentionMap map;
  auto label = [&](TokenId id) { return tokenizer.decode(std::span<const TokenId>(&id, 1)); };
  for (std::size_t c = ex.outline.begin; c < ex.outline.end; ++c) map.col_labels.push_back(label(ex.ids[c]));
  for (std::size_t r = ex.story.begin; r < ex.story.end; ++r) {
    map.row_labels.push_back(label(ex.ids[r]));
    for (std::size_t c = ex.outline.begin; c < ex.outline.end; ++c) map.values.push_back(static_cast<double>(a[r * t + c]));
  }
  return map;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r ") == std::string::npos && !s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const AttentionMap& map) {
  std::string out;
  for (const auto& c : map.col_labels) out += "," + csv_field(c);
  out += "\n";
  char buf[32];
  for (std::size_t r = 0; r < map.rows(); ++r) {
    out += csv_field(map.row_labels[r]);
    for (std::size_t c = 0; c < map.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.6f", map.at(r, c));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

AttentionAccumulator::AttentionAccumulator(std::size_t row_buckets, std::size_t col_buckets)
    : row_buckets_(row_buckets), col_buckets_(col_buckets), sum_(row_buckets * col_buckets, 0.0),
      count_(row_buckets * col_buckets, 0) {
  if (row_buckets == 0 || col_buckets == 0) throw ContractError("attention buckets must be >= 1");
}

void AttentionAccumulator::add(const AttentionMap& map) {
  const std::size_t rows = map.rows(), cols = map.cols();
  if (rows == 0 || cols == 0) return;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t br = r * row_buckets_ / rows;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t bc = c * col_buckets_ / cols;
      sum_[br * col_buckets_ + bc] += map.at(r, c);
      ++count_[br * col_buckets_ + bc];
    }
  }
  ++maps_;
}

AttentionMap AttentionAccumulator::mean() const {
  AttentionMap m;
  for (std::size_t r = 0; r < row_buckets_; ++r) m.row_labels.push_back("story_bucket_" + std::to_string(r));
  for (std::size_t c = 0; c < col_buckets_; ++c) m.col_labels.push_back("outline_bucket_" + std::to_string(c));
  m.values.resize(sum_.size());
  for (std::size_t i = 0; i < sum_.size(); ++i) m.values[i] = count_[i] ? sum_[i] / static_cast<double>(count_[i]) : 0.0;
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["perplexity"] = perplexity ? nlohmann::json(*perplexity) : nlohmann::json(nullptr);
  j["distinct1"] = distinct1;
  j["distinct2"] = distinct2;
  j["unknown_rate"] = unknown_rate ? nlohmann::json(*unknown_rate) : nlohmann::json(nullptr);
  j["mean_coref_chains"] = mean_coref_chains;
  j["n_stories"] = n_stories;
  j["config"] = config;
  j["warnings"] = warnings;
  return j;
}

template double perplexity(const lm::TransformerLM<float>&, std::span<const train::Sequence>, std::size_t);
template double perplexity(const lm::TransformerLM<double>&, std::span<const train::Sequence>, std::size_t);
template AttentionMap attention_map(const lm::TransformerLM<float>&, const train::Sequence&, const text::Tokenizer&);
template AttentionMap attention_map(const lm::TransformerLM<double>&, const train::Sequence&, const text::Tokenizer&);

}  // namespace plotforge::eval

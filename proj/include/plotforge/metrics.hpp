#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotforge/coref.hpp"
#include "plotforge/discourse.hpp"
#include "plotforge/examples.hpp"
#include "plotforge/tokenizer.hpp"
#include "plotforge/transformer.hpp"

namespace plotforge::eval {

// exp of the mean masked NLL per scored token over the whole set, using each
// sequence's own mask (stage 2 therefore skips the outline). Throws
// ValidationError on an empty set.
template <class Real>
double perplexity(const lm::TransformerLM<Real>& model, std::span<const train::Sequence> data,
                  std::size_t batch_size = 8);

// Percent value plus a flag raised when the denominator was zero.
struct Percent {
  double value = 0;
  bool empty = false;
};

// 100 * |distinct n-grams| / |n-grams| over all stories, whitespace tokens,
// ASCII case-folded. n-grams never cross story boundaries.
Percent distinct_n(std::span<const std::string> stories, std::size_t n);

// 100 * (#adjacent pairs tagged unknown) / (#adjacent pairs).
Percent unknown_rate(const aux::DiscourseTagger& tagger, std::span<const std::string> stories, double tau);

// Mean number of clusters with at least two mentions per story. Clusters come
// from `given[i]` when present, otherwise from heuristic_coref.
double coref_chain_count(std::span<const std::string> stories,
                         std::span<const std::optional<std::vector<aux::Cluster>>> given = {});

struct AttentionMap {
  std::vector<std::string> row_labels;  // story tokens
  std::vector<std::string> col_labels;  // outline tokens
  std::vector<double> values;           // rows x cols, row-major
  std::size_t rows() const { return row_labels.size(); }
  std::size_t cols() const { return col_labels.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

// Last-layer head-averaged attention from every story position onto the
// outline positions (an unnormalized slice of each row). Throws ContractError
// when the example has no outline or story region.
template <class Real>
AttentionMap attention_map(const lm::TransformerLM<Real>& model, const train::Sequence& example,
                           const text::Tokenizer& tokenizer);

// Header row: empty corner then outline tokens; one row per story token;
// cells with 6 decimals. Labels are CSV-quoted.
std::string to_csv(const AttentionMap& map);

// Averages maps of different sizes on a fixed grid: cell (r, c) of a map with
// R rows and C columns lands in bucket (r * row_buckets / R, c * col_buckets / C).
class AttentionAccumulator {
 public:
  AttentionAccumulator(std::size_t row_buckets, std::size_t col_buckets);
  void add(const AttentionMap& map);
  AttentionMap mean() const;
  std::size_t maps() const { return maps_; }

 private:
  std::size_t row_buckets_, col_buckets_;
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
  std::size_t maps_ = 0;
};

struct MetricsReport {
  std::optional<double> perplexity;
  double distinct1 = 0;
  double distinct2 = 0;
  std::optional<double> unknown_rate;
  double mean_coref_chains = 0;
  std::size_t n_stories = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

}  // namespace plotforge::eval

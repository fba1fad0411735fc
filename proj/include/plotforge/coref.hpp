#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "plotforge/tensor.hpp"
#include "plotforge/text.hpp"
#include "plotforge/types.hpp"

namespace plotforge::aux {

// A cluster is a list of mention spans in document order. Depending on the
// context the spans are byte ranges, story token ranges or positions in a
// full training sequence.
using Cluster = std::vector<Span>;

// Per-token view of the clusters. Every token inside a mention span carries
// its cluster label; a token is supervised when at least one token of an
// earlier mention of the same cluster precedes it.
struct CorefSupervision {
  std::vector<std::size_t> positions;                // supervised token positions
  std::vector<std::vector<std::size_t>> antecedents;  // N_i earlier same-cluster tokens for each
  std::size_t mention_tokens = 0;                     // every token inside any mention span
  std::size_t seq_len = 0;
};

// Throws ContractError when a span is empty, reaches past seq_len or overlaps
// another span.
CorefSupervision build_supervision(std::span<const Cluster> clusters, std::size_t seq_len);

enum class CorefNormalizer {
  supervised_tokens,  // 1/M over supervised tokens
  mention_tokens,     // 1/(pq): every mention token, including first mentions
};

// -(1/Z) sum_i (1/N_i) sum_k log alpha[i, k], alpha [batch x T x T] with
// sup[b] describing sequence b. Z is the normalizer summed over the batch.
// Zero when nothing is supervised.
template <class Real>
ad::Tensor<Real> coref_loss(const ad::Tensor<Real>& attention, std::span<const CorefSupervision> sup,
                            CorefNormalizer normalizer = CorefNormalizer::supervised_tokens);

// Mean attention mass a supervised token puts on its same-cluster
// antecedents, averaged over every supervised token in `sup`. NaN when
// nothing is supervised.
template <class Real>
double antecedent_mass(const ad::Tensor<Real>& attention, std::span<const CorefSupervision> sup);

// Rule-based resolver over raw text. Capitalized non-stopword words are name
// mentions (a sentence-initial word only when it is a known first name or
// also appears capitalized mid-sentence); identical names share a cluster.
// he/him/his/himself and she/her/hers/herself join the nearest preceding name
// of compatible gender within the current or the two previous sentences.
// Returns byte-range clusters with at least two mentions, ordered by first
// mention.
std::vector<Cluster> heuristic_coref(std::string_view story, std::span<const Span> sentences);
std::vector<Cluster> heuristic_coref(std::string_view story);

// Maps byte-range clusters onto token ranges using per-token byte offsets.
// A mention covers every token it overlaps; mentions whose token range
// overlaps an earlier one are dropped, as are clusters left with fewer than
// two mentions.
std::vector<Cluster> char_to_token_clusters(std::span<const Cluster> clusters, std::span<const Span> token_offsets);

}  // namespace plotforge::aux

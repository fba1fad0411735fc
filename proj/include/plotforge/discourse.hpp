#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plotforge/adam.hpp"
#include "plotforge/tensor.hpp"
#include "plotforge/tokenizer.hpp"
#include "plotforge/transformer.hpp"

namespace plotforge::aux {

enum class Label : int { and_ = 0, but, because, when, if_, so, before, though, unknown };

inline constexpr std::size_t kNumMarkers = 8;
inline constexpr std::array<std::string_view, kNumMarkers + 1> kLabelNames = {
    "and", "but", "because", "when", "if", "so", "before", "though", "unknown"};

std::string_view label_name(Label label);
// Throws ValidationError for anything outside kLabelNames.
Label parse_label(std::string_view name);

struct MarkerPair {
  std::string s1;
  std::string s2;  // leading marker and the comma/space after it removed
  Label label = Label::unknown;
};

struct MarkerMatch {
  Label label;
  std::size_t strip;  // bytes to drop from the front of the sentence
};

// A sentence opens with a marker when it starts with one of the eight words
// (any case) immediately followed by a space or a comma.
std::optional<MarkerMatch> match_marker(std::string_view sentence);

std::vector<MarkerPair> mine_marker_pairs(std::span<const std::string> stories);

// [h_i; h_j] -> tanh(W_f x + b_f) -> W_o f + b_o, eight logits per pair.
template <class Real>
class DiscourseHead {
 public:
  DiscourseHead(std::size_t d_model, std::size_t d_hidden, std::uint64_t seed, double init_std = 0.02);

  // left, right: [P x d]. Returns [P x 8].
  ad::Tensor<Real> logits(const ad::Tensor<Real>& left, const ad::Tensor<Real>& right) const;

  const ad::ParameterList<Real>& parameters() const { return params_; }
  std::size_t d_model() const { return d_model_; }
  std::size_t d_hidden() const { return d_hidden_; }

 private:
  std::size_t d_model_, d_hidden_;
  ad::Tensor<Real> wf_, bf_, wo_, bo_;
  ad::ParameterList<Real> params_;
};

// Coordinatewise max over the rows of `span` in hidden [N x d]; [1 x d].
template <class Real>
ad::Tensor<Real> sentence_repr(const ad::Tensor<Real>& hidden, Span span);

// Mean cross-entropy of the head over pairs whose label is not unknown.
// Unknown pairs are masked out and receive exactly zero gradient; with no
// supervised pair the loss is 0.
template <class Real>
ad::Tensor<Real> discourse_loss(const DiscourseHead<Real>& head, const ad::Tensor<Real>& left,
                                const ad::Tensor<Real>& right, std::span<const Label> labels);

struct TaggerConfig {
  lm::ModelConfig model = tagger_model();
  std::size_t d_hidden = 64;
  std::size_t steps = 400;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // Token budget per side of the pair.
  std::size_t max_side_tokens = 48;

  static lm::ModelConfig tagger_model();
};

struct TaggerTrainLog {
  std::vector<double> losses;
  std::array<std::size_t, kNumMarkers> class_counts{};
  bool missing_classes = false;
};

using LabelProbs = std::array<double, kNumMarkers>;

// Sentence-pair classifier: the shared decoder architecture reads
// "s1 <SEP> s2", its final hidden states are max-pooled over every position
// and a tanh MLP maps the result to the eight marker classes.
class DiscourseTagger {
 public:
  DiscourseTagger(TaggerConfig config, text::Tokenizer tokenizer);

  // Throws TrainingError on an empty pair list.
  static DiscourseTagger train(std::span<const MarkerPair> pairs, const text::Tokenizer& tokenizer,
                               TaggerConfig config, TaggerTrainLog* log = nullptr);

  LabelProbs predict(std::string_view s1, std::string_view s2) const;
  std::vector<LabelProbs> predict_batch(std::span<const std::pair<std::string, std::string>> pairs) const;

  std::vector<TokenId> encode_pair(std::string_view s1, std::string_view s2) const;

  const TaggerConfig& config() const { return config_; }
  const text::Tokenizer& tokenizer() const { return tokenizer_; }
  // Encoder parameters followed by "head.*".
  const ad::ParameterList<float>& parameters() const { return params_; }

 private:
  ad::Tensor<float> batch_logits(const std::vector<std::vector<TokenId>>& seqs, bool train, Rng* rng) const;

  TaggerConfig config_;
  text::Tokenizer tokenizer_;
  lm::TransformerLM<float> encoder_;
  ad::Tensor<float> w1_, b1_, w2_, b2_;
  ad::ParameterList<float> params_;
};

// Label per adjacent sentence pair: the argmax class when its probability is
// at least tau, otherwise unknown. Fewer than two sentences yields nothing.
std::vector<Label> tag_story_pairs(const DiscourseTagger& tagger, std::span<const std::string> sentences, double tau);

// Sentences of a story as trimmed strings (split_sentences + sentence_text).
std::vector<std::string> story_sentences(std::string_view story);

}  // namespace plotforge::aux

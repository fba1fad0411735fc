#pragma once

// Model-ready sequences for the two stages.
//
//   stage 1:  prompt <SEP> outline <EOS>
//   stage 2:  prompt <S> outline <SEP> story <EOS>
//
// mask[t] weights the prediction of ids[t + 1]; the final entry is 0. Stage 1
// scores every target. Stage 2 scores prompt targets, story targets and the
// closing <EOS>, never <S>, the outline or <SEP>.

#include <optional>
#include <string>
#include <vector>

#include "plotforge/corpus.hpp"
#include "plotforge/coref.hpp"
#include "plotforge/discourse.hpp"
#include "plotforge/outline.hpp"
#include "plotforge/tokenizer.hpp"

namespace plotforge::train {

struct Sequence {
  std::vector<TokenId> ids;
  std::vector<float> mask;
  Span prompt;
  Span outline;
  Span story;                          // empty in stage 1
  std::vector<Span> sentences;         // story sentences as sequence positions
  std::vector<aux::Label> labels;      // one per adjacent sentence pair
  std::vector<aux::Cluster> clusters;  // sequence positions
};

using Stage1Example = Sequence;
using Stage2Example = Sequence;

// Story-side annotations in story token coordinates.
struct StoryAnnotations {
  std::vector<aux::Cluster> clusters;
  std::vector<aux::Label> labels;
};

// Story token span of every sentence. Tokens belong to the sentence their
// first byte falls in.
std::vector<Span> sentence_token_spans(std::string_view story, const text::Tokenizer::Encoding& enc);

// Fills whatever the record lacks: clusters from heuristic_coref, labels from
// the tagger (or all unknown without one).
StoryAnnotations resolve_annotations(std::string_view story, const text::Tokenizer& tokenizer,
                                     const data::Annotations& given, const aux::DiscourseTagger* tagger, double tau);

// nullopt, with the reason in *skip_reason, when the prompt leaves no room
// for any outline token. An over-long outline is cut and loses its <EOS>.
std::optional<Stage1Example> build_stage1_example(const outline::StoryTriple& triple, const text::Tokenizer& tokenizer,
                                                  std::size_t max_positions, std::string* skip_reason = nullptr);

// The story is cut to fit max_positions (dropping <EOS>, sentences past the
// cut and mentions that no longer fit). Throws ContractError naming `record`
// when annotations do not match the story.
std::optional<Stage2Example> build_stage2_example(const outline::StoryTriple& triple, const text::Tokenizer& tokenizer,
                                                  const StoryAnnotations& annotations, std::size_t max_positions,
                                                  const std::string& record, std::string* skip_reason = nullptr);

// Stage-2 context up to and including <SEP>, used for generation.
std::vector<TokenId> stage2_context(const std::vector<TokenId>& prompt, const std::vector<TokenId>& outline);
std::vector<TokenId> stage1_context(const std::vector<TokenId>& prompt);

}  // namespace plotforge::train

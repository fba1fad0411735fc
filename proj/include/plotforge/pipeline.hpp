#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plotforge/sampling.hpp"
#include "plotforge/tokenizer.hpp"
#include "plotforge/transformer.hpp"

namespace plotforge::pipeline {

struct GenerateRequest {
  std::string prompt;
  std::size_t k = 20;
  std::uint64_t seed = 0;
  std::size_t max_outline_tokens = 128;
  std::size_t max_story_tokens = 400;
  std::optional<std::string> gold_outline;
  // Share of gold outline tokens forced before stage 1 samples on its own.
  double gold_fraction = 0;
};

struct GenerateResult {
  std::vector<TokenId> outline_ids;
  std::vector<TokenId> story_ids;
  std::string outline;
  std::string story;
  std::size_t forced_tokens = 0;
};

// ceil(p * n) with p in [0, 1].
std::size_t forced_prefix_length(double fraction, std::size_t n_tokens);

// Stage 1 samples an outline after "prompt <SEP>", starting from the forced
// gold prefix; with the whole gold outline forced it is used as is. Stage 2
// then samples the story after "prompt <S> outline <SEP>". Each stage draws
// from its own stream derived from the seed. Throws ValidationError when a
// gold fraction is requested without a gold outline.
GenerateResult generate(const lm::TransformerLM<float>& stage1, const lm::TransformerLM<float>& stage2,
                        const text::Tokenizer& tokenizer, const GenerateRequest& req);

// Stage 1 only: the outline token ids.
std::vector<TokenId> generate_outline(const lm::TransformerLM<float>& stage1, const text::Tokenizer& tokenizer,
                                      const GenerateRequest& req, std::size_t* forced = nullptr);

// Stage 2 only, given outline ids.
std::vector<TokenId> generate_story(const lm::TransformerLM<float>& stage2, const text::Tokenizer& tokenizer,
                                    const std::string& prompt, const std::vector<TokenId>& outline_ids,
                                    const GenerateRequest& req);

}  // namespace plotforge::pipeline

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plotforge/rng.hpp"
#include "plotforge/tokenizer.hpp"
#include "plotforge/transformer.hpp"

namespace plotforge::lm {

struct SamplingConfig {
  std::size_t k = 20;
  std::size_t max_new_tokens = 200;
  std::uint64_t seed = 0;
  TokenId stop_token = text::kEos;
};

// softmax(g(h_T)) for the last context position, in double precision.
template <class Real>
std::vector<double> next_token_dist(const TransformerLM<Real>& model, std::span<const TokenId> context);

// Indices of the k largest entries; ties at equal probability go to the lower id.
std::vector<TokenId> top_k_ids(std::span<const double> probs, std::size_t k);

// Draws from the renormalized top-k of `probs` using one uniform01 draw.
TokenId sample_from_top_k(std::span<const double> probs, std::size_t k, Rng& rng);

struct SampleStep {
  std::vector<TokenId> candidates;  // the top-k set at this step
  TokenId chosen = text::kPad;
};

struct SampleResult {
  std::vector<TokenId> tokens;  // newly generated ids, stop token excluded
  bool stopped = false;         // true when the stop token ended generation
  std::vector<SampleStep> trace;
};

// Autoregressive top-k sampling. `forced` tokens are emitted first without
// consulting the model (they still count toward max_new_tokens). The context
// window slides when it would exceed max_positions.
template <class Real>
SampleResult sample_top_k(const TransformerLM<Real>& model, std::span<const TokenId> context,
                          const SamplingConfig& cfg, Rng& rng, std::span<const TokenId> forced = {},
                          bool keep_trace = false);

template <class Real>
SampleResult sample_top_k(const TransformerLM<Real>& model, std::span<const TokenId> context,
                          const SamplingConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "sample");
  return sample_top_k(model, context, cfg, rng);
}

}  // namespace plotforge::lm

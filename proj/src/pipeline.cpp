#include "plotforge/pipeline.hpp"

#include <cmath>

#include "plotforge/errors.hpp"
#include "plotforge/examples.hpp"

namespace plotforge::pipeline {

std::size_t forced_prefix_length(double fraction, std::size_t n_tokens) {
  if (!(fraction >= 0 && fraction <= 1)) throw ValidationError("gold fraction must be in [0, 1]");
  // The epsilon keeps products such as 0.3 * 10 from rounding up to 4.
  const double raw = fraction * static_cast<double>(n_tokens) - 1e-9;
  return std::min(n_tokens, static_cast<std::size_t>(std::max(0.0, std::ceil(raw))));
}

std::vector<TokenId> generate_outline(const lm::TransformerLM<float>& stage1, const text::Tokenizer& tokenizer,
                                      const GenerateRequest& req, std::size_t* forced) {
  if (req.gold_fraction > 0 && !req.gold_outline) {
    throw ValidationError("--gold-fraction needs --gold-outline");
  }
  const auto prompt = tokenizer.encode(req.prompt);
  if (prompt.empty()) throw ValidationError("prompt is empty");
  std::vector<TokenId> gold;
  if (req.gold_outline) gold = tokenizer.encode(*req.gold_outline);
  const std::size_t n_forced = forced_prefix_length(req.gold_fraction, gold.size());
  if (forced) *forced = n_forced;
  if (n_forced == gold.size() && !gold.empty() && req.gold_fraction > 0) return gold;

  lm::SamplingConfig cfg;
  cfg.k = req.k;
  cfg.max_new_tokens = std::max(req.max_outline_tokens, n_forced);
  cfg.seed = req.seed;
  Rng rng = make_rng(req.seed, "stage1-sample");
  const auto ctx = train::stage1_context(prompt);
  const std::span<const TokenId> prefix(gold.data(), n_forced);
  return lm::sample_top_k(stage1, ctx, cfg, rng, prefix).tokens;
}

std::vector<TokenId> generate_story(const lm::TransformerLM<float>& stage2, const text::Tokenizer& tokenizer,
                                    const std::string& prompt, const std::vector<TokenId>& outline_ids,
                                    const GenerateRequest& req) {
  lm::SamplingConfig cfg;
  cfg.k = req.k;
  cfg.max_new_tokens = req.max_story_tokens;
  cfg.seed = req.seed;
  Rng rng = make_rng(req.seed, "stage2-sample");
  const auto ctx = train::stage2_context(tokenizer.encode(prompt), outline_ids);
  return lm::sample_top_k(stage2, ctx, cfg, rng).tokens;
}

GenerateResult generate(const lm::TransformerLM<float>& stage1, const lm::TransformerLM<float>& stage2,
                        const text::Tokenizer& tokenizer, const GenerateRequest& req) {
  GenerateResult r;
  r.outline_ids = generate_outline(stage1, tokenizer, req, &r.forced_tokens);
  r.story_ids = generate_story(stage2, tokenizer, req.prompt, r.outline_ids, req);
  r.outline = tokenizer.decode(r.outline_ids);
  r.story = tokenizer.decode(r.story_ids);
  return r;
}

}  // namespace plotforge::pipeline

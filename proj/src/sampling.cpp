#include "plotforge/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plotforge/errors.hpp"

namespace plotforge::lm {

template <class Real>
std::vector<double> next_token_dist(const TransformerLM<Real>& model, std::span<const TokenId> context) {
  if (context.empty()) throw ContractError("next_token_dist: empty context");
  ad::NoGradGuard<Real> guard;
  const auto out = model.forward(context, LogitRows::last);
  const auto logits = out.logits.data();
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<TokenId> top_k_ids(std::span<const double> probs, std::size_t k) {
  if (k == 0 || k > probs.size()) {
    throw ContractError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(probs.size()) + "]");
  }
  std::vector<TokenId> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto better = [&](TokenId a, TokenId b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  return ids;
}

namespace {

TokenId draw(std::span<const double> probs, const std::vector<TokenId>& top, Rng& rng) {
  double mass = 0;
  for (auto id : top) mass += probs[id];
  const double u = uniform01(rng) * mass;
  double acc = 0;
  for (auto id : top) {
    acc += probs[id];
    if (u < acc) return id;
  }
  return top.back();
}

}  // namespace

TokenId sample_from_top_k(std::span<const double> probs, std::size_t k, Rng& rng) {
  return draw(probs, top_k_ids(probs, k), rng);
}

template <class Real>
SampleResult sample_top_k(const TransformerLM<Real>& model, std::span<const TokenId> context,
                          const SamplingConfig& cfg, Rng& rng, std::span<const TokenId> forced, bool keep_trace) {
  if (context.empty()) throw ContractError("sample_top_k: empty context");
  const std::size_t window = model.config().max_positions;
  std::vector<TokenId> seq(context.begin(), context.end());
  SampleResult result;
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    TokenId next;
    if (step < forced.size()) {
      next = forced[step];
    } else {
      const std::size_t start = seq.size() > window ? seq.size() - window : 0;
      const auto probs = next_token_dist(model, std::span<const TokenId>(seq).subspan(start));
      auto top = top_k_ids(probs, cfg.k);
      next = draw(probs, top, rng);
      if (keep_trace) result.trace.push_back(SampleStep{std::move(top), next});
    }
    if (next == cfg.stop_token) {
      result.stopped = true;
      break;
    }
    seq.push_back(next);
    result.tokens.push_back(next);
  }
  return result;
}

template std::vector<double> next_token_dist(const TransformerLM<float>&, std::span<const TokenId>);
template std::vector<double> next_token_dist(const TransformerLM<double>&, std::span<const TokenId>);
template SampleResult sample_top_k(const TransformerLM<float>&, std::span<const TokenId>, const SamplingConfig&, Rng&,
                                   std::span<const TokenId>, bool);
template SampleResult sample_top_k(const TransformerLM<double>&, std::span<const TokenId>, const SamplingConfig&,
                                   Rng&, std::span<const TokenId>, bool);

}  // namespace plotforge::lm

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plotforge/ops.hpp"
#include "plotforge/rng.hpp"
#include "plotforge/tensor.hpp"
#include "plotforge/types.hpp"

namespace plotforge::lm {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t max_positions = 512;
  std::size_t vocab_size = 8000;
  double dropout = 0.3;
  // Pre-norm blocks with a final layer norm; false selects the post-norm
  // "LN(x + sublayer(x))" arrangement.
  bool pre_norm = true;
  // Reuse the token embedding as the output projection.
  bool tie_embeddings = false;
  double init_std = 0.02;

  std::size_t d_k() const { return d_model / n_heads; }
  // Throws ContractError describing the first inconsistent field.
  void validate() const;

  static ModelConfig full_scale();
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class LogitRows {
  all,   // one row per position
  last,  // only the final position of each sequence
  none,
};

template <class Real>
struct ForwardOutput {
  ad::Tensor<Real> logits;     // [batch*seq x V], or [batch x V] for LogitRows::last
  ad::Tensor<Real> hidden;     // [batch*seq x d], final block output before the projection
  ad::Tensor<Real> attention;  // [batch x seq x seq], last layer, head-averaged, pre-dropout
  std::size_t batch = 0;
  std::size_t seq = 0;
};

// Causal Transformer decoder. Parameters are owned through tensor handles;
// forward() reads them and, when the tape records, wires their gradients.
template <class Real>
class TransformerLM {
 public:
  TransformerLM(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // ids holds `batch` sequences of equal length back to back. train enables
  // dropout and requires dropout_rng. Throws LengthError when the sequence
  // is longer than max_positions.
  ForwardOutput<Real> forward(std::span<const TokenId> ids, std::size_t batch, bool train, Rng* dropout_rng,
                              LogitRows rows = LogitRows::all) const;

  // Single sequence, eval mode.
  ForwardOutput<Real> forward(std::span<const TokenId> ids, LogitRows rows = LogitRows::all) const {
    return forward(ids, 1, false, nullptr, rows);
  }

  // Stable, name-addressable parameter list (the checkpoint order).
  const ad::ParameterList<Real>& parameters() const { return params_; }
  std::size_t parameter_count() const;

 private:
  struct Layer {
    ad::Tensor<Real> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Tensor<Real> ln2_g, ln2_b, w1, b1, w2, b2;
  };

  ad::Tensor<Real> attention_block(const Layer& layer, const ad::Tensor<Real>& x, std::size_t batch,
                                   std::size_t seq, bool train, Rng* rng, ad::Tensor<Real>* head_avg) const;
  ad::Tensor<Real> ffn_block(const Layer& layer, const ad::Tensor<Real>& x) const;

  ModelConfig config_;
  ad::Tensor<Real> tok_emb_, pos_emb_, lnf_g_, lnf_b_, out_w_, out_b_;
  std::vector<Layer> layers_;
  ad::ParameterList<Real> params_;
};

// Next-token targets for a sequence: targets[t] = ids[t+1]; the final
// position gets <PAD> and should be masked out by the caller.
std::vector<TokenId> shift_targets(std::span<const TokenId> ids);

// Per-token average NLL over unmasked positions (cross_entropy_masked).
template <class Real>
ad::Tensor<Real> lm_loss(const ForwardOutput<Real>& out, std::span<const TokenId> targets, std::span<const Real> mask);

}  // namespace plotforge::lm

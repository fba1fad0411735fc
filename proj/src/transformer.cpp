#include "plotforge/transformer.hpp"

#include <random>

#include "plotforge/errors.hpp"
#include "plotforge/tokenizer.hpp"

namespace plotforge::lm {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("model config: " + msg); };
  if (n_layers == 0) fail("n_layers must be >= 1");
  if (n_heads == 0) fail("n_heads must be >= 1");
  if (d_model == 0 || d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " must be a positive multiple of n_heads " + std::to_string(n_heads));
  }
  if (d_ff == 0) fail("d_ff must be >= 1");
  if (max_positions == 0) fail("max_positions must be >= 1");
  if (vocab_size <= text::kNumReserved) fail("vocab_size must exceed the reserved token count");
  if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
  if (init_std <= 0) fail("init_std must be positive");
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_model = 768;
  c.d_ff = 3072;
  c.max_positions = 1024;
  c.vocab_size = 50527;
  return c;
}

template <class Real>
TransformerLM<Real>::TransformerLM(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = make_rng(seed, "init");
  std::normal_distribution<double> normal(0.0, config_.init_std);
  const auto d = config_.d_model;

  auto add = [&](const std::string& name, ad::Shape shape, double fill, bool random) {
    std::vector<Real> values(ad::numel(shape));
    for (auto& v : values) v = random ? static_cast<Real>(normal(rng)) : static_cast<Real>(fill);
    ad::Tensor<Real> t(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  };
  auto weight = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    return add(name, {rows, cols}, 0.0, true);
  };
  auto bias = [&](const std::string& name, std::size_t n) { return add(name, {n}, 0.0, false); };
  auto gain = [&](const std::string& name, std::size_t n) { return add(name, {n}, 1.0, false); };

  tok_emb_ = weight("tok_emb", config_.vocab_size, d);
  pos_emb_ = weight("pos_emb", config_.max_positions, d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_g = gain(p + "ln1.gamma", d);
    layer.ln1_b = bias(p + "ln1.beta", d);
    layer.wq = weight(p + "attn.wq", d, d);
    layer.bq = bias(p + "attn.bq", d);
    layer.wk = weight(p + "attn.wk", d, d);
    layer.bk = bias(p + "attn.bk", d);
    layer.wv = weight(p + "attn.wv", d, d);
    layer.bv = bias(p + "attn.bv", d);
    layer.wo = weight(p + "attn.wo", d, d);
    layer.bo = bias(p + "attn.bo", d);
    layer.ln2_g = gain(p + "ln2.gamma", d);
    layer.ln2_b = bias(p + "ln2.beta", d);
    layer.w1 = weight(p + "ffn.w1", d, config_.d_ff);
    layer.b1 = bias(p + "ffn.b1", config_.d_ff);
    layer.w2 = weight(p + "ffn.w2", config_.d_ff, d);
    layer.b2 = bias(p + "ffn.b2", d);
    layers_.push_back(std::move(layer));
  }
  if (config_.pre_norm) {
    lnf_g_ = gain("ln_f.gamma", d);
    lnf_b_ = bias("ln_f.beta", d);
  }
  if (!config_.tie_embeddings) out_w_ = weight("out.w", d, config_.vocab_size);
  out_b_ = bias("out.b", config_.vocab_size);
}

template <class Real>
std::size_t TransformerLM<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <class Real>
ad::Tensor<Real> TransformerLM<Real>::attention_block(const Layer& layer, const ad::Tensor<Real>& x,
                                                      std::size_t batch, std::size_t seq, bool train, Rng* rng,
                                                      ad::Tensor<Real>* head_avg) const {
  const auto q = ad::add_bias(ad::matmul(x, layer.wq), layer.bq);
  const auto k = ad::add_bias(ad::matmul(x, layer.wk), layer.bk);
  const auto v = ad::add_bias(ad::matmul(x, layer.wv), layer.bv);
  auto probs = ad::causal_attention_probs(q, k, batch, seq, config_.n_heads);
  if (head_avg) *head_avg = ad::head_mean(probs);
  if (train) probs = ad::dropout(probs, static_cast<Real>(config_.dropout), *rng);
  const auto ctx = ad::attend(probs, v);
  return ad::add_bias(ad::matmul(ctx, layer.wo), layer.bo);
}

template <class Real>
ad::Tensor<Real> TransformerLM<Real>::ffn_block(const Layer& layer, const ad::Tensor<Real>& x) const {
  const auto h = ad::relu(ad::add_bias(ad::matmul(x, layer.w1), layer.b1));
  return ad::add_bias(ad::matmul(h, layer.w2), layer.b2);
}

template <class Real>
ForwardOutput<Real> TransformerLM<Real>::forward(std::span<const TokenId> ids, std::size_t batch, bool train,
                                                 Rng* rng, LogitRows rows) const {
  if (batch == 0 || ids.empty() || ids.size() % batch != 0) {
    throw ContractError("forward: " + std::to_string(ids.size()) + " ids do not split into " +
                        std::to_string(batch) + " equal sequences");
  }
  const std::size_t seq = ids.size() / batch;
  if (seq > config_.max_positions) {
    throw LengthError("forward: sequence length " + std::to_string(seq) + " exceeds max_positions " +
                      std::to_string(config_.max_positions));
  }
  if (train && config_.dropout > 0 && rng == nullptr) throw ContractError("forward: train mode needs a dropout RNG");
  const bool use_dropout = train && config_.dropout > 0;
  const Real rate = static_cast<Real>(config_.dropout);

  std::vector<TokenId> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<TokenId>(i % seq);

  auto x = ad::add(ad::embedding_lookup(tok_emb_, ids), ad::embedding_lookup(pos_emb_, positions));
  if (use_dropout) x = ad::dropout(x, rate, *rng);

  ForwardOutput<Real> out;
  out.batch = batch;
  out.seq = seq;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    ad::Tensor<Real>* avg = l + 1 == layers_.size() ? &out.attention : nullptr;
    if (config_.pre_norm) {
      auto a = attention_block(layer, ad::layer_norm(x, layer.ln1_g, layer.ln1_b), batch, seq, use_dropout, rng, avg);
      if (use_dropout) a = ad::dropout(a, rate, *rng);
      x = ad::add(x, a);
      auto f = ffn_block(layer, ad::layer_norm(x, layer.ln2_g, layer.ln2_b));
      if (use_dropout) f = ad::dropout(f, rate, *rng);
      x = ad::add(x, f);
    } else {
      auto a = attention_block(layer, x, batch, seq, use_dropout, rng, avg);
      if (use_dropout) a = ad::dropout(a, rate, *rng);
      x = ad::layer_norm(ad::add(x, a), layer.ln1_g, layer.ln1_b);
      auto f = ffn_block(layer, x);
      if (use_dropout) f = ad::dropout(f, rate, *rng);
      x = ad::layer_norm(ad::add(x, f), layer.ln2_g, layer.ln2_b);
    }
  }
  if (config_.pre_norm) x = ad::layer_norm(x, lnf_g_, lnf_b_);
  out.hidden = x;

  if (rows == LogitRows::none) return out;
  ad::Tensor<Real> source = x;
  if (rows == LogitRows::last) {
    // Gather the last row of every sequence through an index table.
    std::vector<TokenId> last(batch);
    for (std::size_t b = 0; b < batch; ++b) last[b] = static_cast<TokenId>((b + 1) * seq - 1);
    source = ad::embedding_lookup(x, last);
  }
  const auto proj = config_.tie_embeddings ? ad::matmul(source, ad::transpose(tok_emb_)) : ad::matmul(source, out_w_);
  out.logits = ad::add_bias(proj, out_b_);
  return out;
}

std::vector<TokenId> shift_targets(std::span<const TokenId> ids) {
  std::vector<TokenId> t(ids.size(), text::kPad);
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) t[i] = ids[i + 1];
  return t;
}

template <class Real>
ad::Tensor<Real> lm_loss(const ForwardOutput<Real>& out, std::span<const TokenId> targets, std::span<const Real> mask) {
  return ad::cross_entropy_masked(out.logits, targets, mask);
}

template class TransformerLM<float>;
template class TransformerLM<double>;
template ad::Tensor<float> lm_loss(const ForwardOutput<float>&, std::span<const TokenId>, std::span<const float>);
template ad::Tensor<double> lm_loss(const ForwardOutput<double>&, std::span<const TokenId>, std::span<const double>);

}  // namespace plotforge::lm

#pragma once

// Differentiable operations. Each returns a fresh tensor and, when any input
// requires a gradient and the tape is recording, registers its backward rule.
// Broadcasting is limited to leading batch dimensions (matmul) and a trailing
// bias vector (add_bias).

#include <span>

#include "plotforge/rng.hpp"
#include "plotforge/tensor.hpp"
#include "plotforge/types.hpp"

namespace plotforge::ad {

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

// x[..., d] + bias[d]
template <class Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias);

// [m x k]·[k x n], [B x m x k]·[k x n] or [B x m x k]·[B x k x n].
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a);

// Max-subtracted softmax along `axis` (negative counts from the back).
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis = -1);

// Log-softmax along the last axis, computed directly (not log of softmax).
template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& x);

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps = Real(1e-5));

// Subgradient at 0 is 0.
template <class Real>
Tensor<Real> relu(const Tensor<Real>& x);

template <class Real>
Tensor<Real> tanh(const Tensor<Real>& x);

// Row gather; backward scatter-adds into the table gradient.
template <class Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, std::span<const TokenId> ids);

// -(sum_t mask_t * log_softmax(logits_t)[target_t]) / sum_t mask_t.
// An all-zero mask yields 0 with zero gradient. Targets at masked positions
// are ignored and may be out of range.
template <class Real>
Tensor<Real> cross_entropy_masked(const Tensor<Real>& logits, std::span<const TokenId> targets,
                                  std::span<const Real> mask);

// Inverted dropout; a rate of 0 returns the input unchanged.
template <class Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real rate, Rng& rng);

// q, k: [batch*seq x d] with heads packed along columns. Returns the causal
// attention distributions [batch x heads x seq x seq]; entries above the
// diagonal are exactly 0.
template <class Real>
Tensor<Real> causal_attention_probs(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t batch,
                                    std::size_t seq, std::size_t heads);

// probs [batch x heads x seq x seq], v [batch*seq x d] -> [batch*seq x d].
template <class Real>
Tensor<Real> attend(const Tensor<Real>& probs, const Tensor<Real>& v);

// Mean over the heads axis: [B x H x T x T] -> [B x T x T].
template <class Real>
Tensor<Real> head_mean(const Tensor<Real>& probs);

// Coordinatewise max over each row span of x [N x d]; ties pick the first row.
template <class Real>
Tensor<Real> max_pool_rows(const Tensor<Real>& x, std::span<const Span> spans);

template <class Real>
Tensor<Real> concat_cols(const Tensor<Real>& a, const Tensor<Real>& b);

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x);

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x);

// -sum_j weights[j] * log(max(x.flat[indices[j]], floor)). The clamp has zero
// gradient.
template <class Real>
Tensor<Real> weighted_neg_log(const Tensor<Real>& x, std::span<const std::size_t> indices,
                              std::span<const Real> weights, Real floor = Real(1e-12));

}  // namespace plotforge::ad

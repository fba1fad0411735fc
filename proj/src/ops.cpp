#include "plotforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "plotforge/errors.hpp"
#include "plotforge/kernels.hpp"

namespace plotforge::ad {

namespace {

template <class Real>
using NodePtr = std::shared_ptr<Node<Real>>;

template <class Real>
bool tracking(std::initializer_list<const Tensor<Real>*> inputs) {
  if (!Tape<Real>::active().recording()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class Real>
Tensor<Real> make_output(Shape shape, std::vector<Real> values, bool track) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = track;
  node->leaf = !track;
  return Tensor<Real>::from_node(std::move(node));
}

template <class Real>
void record(const Tensor<Real>& out, typename Tape<Real>::BackwardFn fn) {
  Tape<Real>::active().record(out.node(), std::move(fn));
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(s));
  }
}

kernels::GemmArgs gemm_args(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                            std::size_t lda, std::size_t ldb, std::size_t ldc, bool acc) {
  kernels::GemmArgs g;
  g.trans_a = ta;
  g.trans_b = tb;
  g.m = m;
  g.n = n;
  g.k = k;
  g.lda = lda;
  g.ldb = ldb;
  g.ldc = ldc;
  g.accumulate = acc;
  return g;
}

}  // namespace

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("add", a.shape(), b.shape());
  std::vector<Real> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool track = tracking({&a, &b});
  auto y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record(y, [an = a.node(), bn = b.node(), yn = y.node()] {
      for (auto* in : {an.get(), bn.get()}) {
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  std::vector<Real> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = tracking({&a, &b});
  auto y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record(y, [an = a.node(), bn = b.node(), yn = y.node()] {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * an->value[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const bool track = tracking({&a});
  auto y = make_output(a.shape(), std::move(out), track);
  if (track) {
    record(y, [an = a.node(), yn = y.node(), factor] {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * factor;
    });
  }
  return y;
}

template <class Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias) {
  const std::size_t d = x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                         to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<Real> out(x.size());
  auto xv = x.data();
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] + bv[j];
  }
  const bool track = tracking({&x, &bias});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), bn = bias.node(), yn = y.node(), rows, d] {
      if (xn->requires_grad) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) g[j] += yn->grad[r * d + j];
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: cannot multiply " + to_string(as) + " by " + to_string(bs));
  };
  if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3) throw mismatch();
  if (bs.size() == 3 && as.size() != 3) throw mismatch();

  const bool batched = bs.size() == 3;
  const std::size_t k = as.back();
  if (bs[bs.size() - 2] != k) throw mismatch();
  if (batched && as[0] != bs[0]) throw mismatch();
  const std::size_t n = bs.back();
  const std::size_t batches = batched ? as[0] : 1;
  // Without a batched right operand every leading dim of `a` folds into rows.
  const std::size_t m = batched ? as[1] : a.size() / k;

  Shape out_shape = as;
  out_shape.back() = n;
  std::vector<Real> out(batches * m * n);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    kernels::gemm(gemm_args(false, false, m, n, k, k, n, n, false), a.data().data() + bi * m * k,
                  b.data().data() + (batched ? bi * k * n : 0), out.data() + bi * m * n);
  }
  const bool track = tracking({&a, &b});
  auto y = make_output(std::move(out_shape), std::move(out), track);
  if (track) {
    record(y, [an = a.node(), bn = b.node(), yn = y.node(), batches, batched, m, n, k] {
      for (std::size_t bi = 0; bi < batches; ++bi) {
        const Real* gy = yn->grad.data() + bi * m * n;
        const std::size_t boff = batched ? bi * k * n : 0;
        if (an->requires_grad) {
          // dA = dC · B^T
          auto& ga = an->ensure_grad();
          kernels::gemm(gemm_args(false, true, m, k, n, n, n, k, true), gy, bn->value.data() + boff,
                        ga.data() + bi * m * k);
        }
        if (bn->requires_grad) {
          // dB = A^T · dC
          auto& gb = bn->ensure_grad();
          kernels::gemm(gemm_args(true, false, k, n, m, k, n, n, true), an->value.data() + bi * m * k,
                        gy, gb.data() + boff);
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_rank("transpose", a.shape(), 2);
  const std::size_t r = a.dim(0);
  const std::size_t c = a.dim(1);
  std::vector<Real> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  const bool track = tracking({&a});
  auto y = make_output(Shape{c, r}, std::move(out), track);
  if (track) {
    record(y, [an = a.node(), yn = y.node(), r, c] {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += yn->grad[j * r + i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
  const auto& s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError("softmax: axis out of range for " + to_string(s));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::size_t len = s[static_cast<std::size_t>(axis)];

  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      Real total = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const Real e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  const bool track = tracking({&x});
  auto y = make_output(s, std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node(), outer, inner, len] {
      auto& g = xn->ensure_grad();
      const auto& yv = yn->value;
      const auto& gy = yn->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          Real dot = 0;
          for (std::size_t l = 0; l < len; ++l) dot += gy[base + l * inner] * yv[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t i = base + l * inner;
            g[i] += yv[i] * (gy[i] - dot);
          }
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / len;
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * len;
    const Real mx = *std::max_element(row, row + len);
    Real total = 0;
    for (std::size_t l = 0; l < len; ++l) total += std::exp(row[l] - mx);
    const Real lse = mx + std::log(total);
    for (std::size_t l = 0; l < len; ++l) out[r * len + l] = row[l] - lse;
  }
  const bool track = tracking({&x});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node(), rows, len] {
      auto& g = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * len;
        Real total = 0;
        for (std::size_t l = 0; l < len; ++l) total += yn->grad[base + l];
        for (std::size_t l = 0; l < len; ++l) {
          g[base + l] += yn->grad[base + l] - std::exp(yn->value[base + l]) * total;
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps) {
  const std::size_t d = x.shape().back();
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                         to_string(beta.shape()) + " do not match " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<Real> out(x.size());
  std::vector<Real> xhat(x.size());
  std::vector<Real> rstd(rows);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(d);
    rstd[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      xhat[i] = (row[j] - mu) * rstd[r];
      out[i] = gv[j] * xhat[i] + bv[j];
    }
  }
  const bool track = tracking({&x, &gamma, &beta});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node(),
               xhat = std::move(xhat), rstd = std::move(rstd), rows, d] {
      const auto& gy = yn->grad;
      if (gn->requires_grad) {
        auto& g = gn->ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) g[i % d] += gy[i] * xhat[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) g[i % d] += gy[i];
      }
      if (xn->requires_grad) {
        auto& g = xn->ensure_grad();
        const Real inv_d = Real(1) / static_cast<Real>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          Real mean_g = 0;
          Real mean_gx = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const Real gh = gy[r * d + j] * gn->value[j];
            mean_g += gh;
            mean_gx += gh * xhat[r * d + j];
          }
          mean_g *= inv_d;
          mean_gx *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            const Real gh = gy[i] * gn->value[j];
            g[i] += rstd[r] * (gh - mean_g - xhat[i] * mean_gx);
          }
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > Real(0) ? xv[i] : Real(0);
  const bool track = tracking({&x});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node()] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xn->value[i] > Real(0)) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> tanh(const Tensor<Real>& x) {
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  const bool track = tracking({&x});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node()] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real t = yn->value[i];
        g[i] += yn->grad[i] * (Real(1) - t * t);
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, std::span<const TokenId> ids) {
  require_rank("embedding_lookup", table.shape(), 2);
  if (ids.empty()) throw ContractError("embedding_lookup: empty id sequence");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<Real> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range [0, " +
                       std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  const bool track = tracking({&table});
  auto y = make_output(Shape{ids.size(), d}, std::move(out), track);
  if (track) {
    record(y, [tn = table.node(), yn = y.node(), rows = std::vector<TokenId>(ids.begin(), ids.end()), d] {
      auto& g = tn->ensure_grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        Real* dst = g.data() + static_cast<std::size_t>(rows[i]) * d;
        const Real* src = yn->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> cross_entropy_masked(const Tensor<Real>& logits, std::span<const TokenId> targets,
                                  std::span<const Real> mask) {
  require_rank("cross_entropy_masked", logits.shape(), 2);
  const std::size_t rows = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  if (targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy_masked: logits " + to_string(logits.shape()) + " with " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(mask.size()) + " mask entries");
  }
  auto lv = logits.data();
  double denom = 0;
  double total = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (mask[t] == Real(0)) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw IndexError("cross_entropy_masked: target " + std::to_string(targets[t]) +
                       " out of range [0, " + std::to_string(vocab) + ")");
    }
    const Real* row = lv.data() + t * vocab;
    const Real mx = *std::max_element(row, row + vocab);
    double se = 0;
    for (std::size_t v = 0; v < vocab; ++v) se += std::exp(static_cast<double>(row[v] - mx));
    const double logp = static_cast<double>(row[targets[t]] - mx) - std::log(se);
    total -= static_cast<double>(mask[t]) * logp;
    denom += static_cast<double>(mask[t]);
  }
  const Real loss = denom > 0 ? static_cast<Real>(total / denom) : Real(0);
  const bool track = tracking({&logits});
  auto y = make_output(Shape{1}, std::vector<Real>{loss}, track);
  if (track) {
    record(y, [ln = logits.node(), yn = y.node(), tg = std::vector<TokenId>(targets.begin(), targets.end()),
               mk = std::vector<Real>(mask.begin(), mask.end()), rows, vocab, denom] {
      auto& g = ln->ensure_grad();
      if (denom <= 0) return;
      const double upstream = static_cast<double>(yn->grad[0]);
      for (std::size_t t = 0; t < rows; ++t) {
        if (mk[t] == Real(0)) continue;
        const Real* row = ln->value.data() + t * vocab;
        const Real mx = *std::max_element(row, row + vocab);
        double se = 0;
        for (std::size_t v = 0; v < vocab; ++v) se += std::exp(static_cast<double>(row[v] - mx));
        const double w = upstream * static_cast<double>(mk[t]) / denom;
        Real* grow = g.data() + t * vocab;
        for (std::size_t v = 0; v < vocab; ++v) {
          double p = std::exp(static_cast<double>(row[v] - mx)) / se;
          if (static_cast<TokenId>(v) == tg[t]) p -= 1.0;
          grow[v] += static_cast<Real>(w * p);
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real rate, Rng& rng) {
  if (rate <= Real(0)) return x;
  if (rate >= Real(1)) throw ContractError("dropout: rate must be < 1");
  const Real keep_scale = Real(1) / (Real(1) - rate);
  std::vector<Real> mask(x.size());
  std::vector<Real> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = uniform01(rng) < static_cast<double>(rate) ? Real(0) : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  const bool track = tracking({&x});
  auto y = make_output(x.shape(), std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node(), mask = std::move(mask)] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * mask[i];
    });
  }
  return y;
}

template <class Real>
Tensor<Real> causal_attention_probs(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t batch,
                                    std::size_t seq, std::size_t heads) {
  require_rank("causal_attention_probs", q.shape(), 2);
  require_same_shape("causal_attention_probs", q.shape(), k.shape());
  const std::size_t d = q.dim(1);
  if (q.dim(0) != batch * seq || heads == 0 || d % heads != 0) {
    throw DimensionError("causal_attention_probs: " + to_string(q.shape()) + " is not [" +
                         std::to_string(batch) + "*" + std::to_string(seq) + " x d] with d divisible by " +
                         std::to_string(heads));
  }
  const std::size_t dk = d / heads;
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(dk));
  const std::size_t tt = seq * seq;
  std::vector<Real> probs(batch * heads * tt, Real(0));
  std::vector<Real> scores(tt);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Real* qh = q.data().data() + b * seq * d + h * dk;
      const Real* kh = k.data().data() + b * seq * d + h * dk;
      kernels::gemm(gemm_args(false, true, seq, seq, dk, d, d, seq, false), qh, kh, scores.data());
      Real* p = probs.data() + (b * heads + h) * tt;
      for (std::size_t i = 0; i < seq; ++i) {
        const Real* srow = scores.data() + i * seq;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, srow[j] * scale_factor);
        Real total = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          const Real e = std::exp(srow[j] * scale_factor - mx);
          p[i * seq + j] = e;
          total += e;
        }
        for (std::size_t j = 0; j <= i; ++j) p[i * seq + j] /= total;
      }
    }
  }
  const bool track = tracking({&q, &k});
  auto y = make_output(Shape{batch, heads, seq, seq}, std::move(probs), track);
  if (track) {
    record(y, [qn = q.node(), kn = k.node(), yn = y.node(), batch, seq, heads, d, dk, scale_factor] {
      const std::size_t tt = seq * seq;
      std::vector<Real> gs(tt);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const Real* p = yn->value.data() + (b * heads + h) * tt;
          const Real* gp = yn->grad.data() + (b * heads + h) * tt;
          // Gradient w.r.t. the scaled scores, restricted to the causal band.
          for (std::size_t i = 0; i < seq; ++i) {
            Real dot = 0;
            for (std::size_t j = 0; j <= i; ++j) dot += gp[i * seq + j] * p[i * seq + j];
            for (std::size_t j = 0; j < seq; ++j) {
              gs[i * seq + j] = j <= i ? p[i * seq + j] * (gp[i * seq + j] - dot) * scale_factor : Real(0);
            }
          }
          const std::size_t off = b * seq * d + h * dk;
          if (qn->requires_grad) {
            auto& gq = qn->ensure_grad();
            kernels::gemm(gemm_args(false, false, seq, dk, seq, seq, d, d, true), gs.data(),
                          kn->value.data() + off, gq.data() + off);
          }
          if (kn->requires_grad) {
            auto& gk = kn->ensure_grad();
            kernels::gemm(gemm_args(true, false, seq, dk, seq, seq, d, d, true), gs.data(),
                          qn->value.data() + off, gk.data() + off);
          }
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> attend(const Tensor<Real>& probs, const Tensor<Real>& v) {
  require_rank("attend", probs.shape(), 4);
  require_rank("attend", v.shape(), 2);
  const std::size_t batch = probs.dim(0);
  const std::size_t heads = probs.dim(1);
  const std::size_t seq = probs.dim(2);
  const std::size_t d = v.dim(1);
  if (probs.dim(3) != seq || v.dim(0) != batch * seq || d % heads != 0) {
    throw DimensionError("attend: probs " + to_string(probs.shape()) + " incompatible with values " +
                         to_string(v.shape()));
  }
  const std::size_t dk = d / heads;
  const std::size_t tt = seq * seq;
  std::vector<Real> out(batch * seq * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * seq * d + h * dk;
      kernels::gemm(gemm_args(false, false, seq, dk, seq, seq, d, d, false),
                    probs.data().data() + (b * heads + h) * tt, v.data().data() + off, out.data() + off);
    }
  }
  const bool track = tracking({&probs, &v});
  auto y = make_output(Shape{batch * seq, d}, std::move(out), track);
  if (track) {
    record(y, [pn = probs.node(), vn = v.node(), yn = y.node(), batch, heads, seq, d, dk] {
      const std::size_t tt = seq * seq;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = b * seq * d + h * dk;
          const std::size_t poff = (b * heads + h) * tt;
          if (pn->requires_grad) {
            auto& gp = pn->ensure_grad();
            kernels::gemm(gemm_args(false, true, seq, seq, dk, d, d, seq, true), yn->grad.data() + off,
                          vn->value.data() + off, gp.data() + poff);
          }
          if (vn->requires_grad) {
            auto& gv = vn->ensure_grad();
            kernels::gemm(gemm_args(true, false, seq, dk, seq, seq, d, d, true), pn->value.data() + poff,
                          yn->grad.data() + off, gv.data() + off);
          }
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> head_mean(const Tensor<Real>& probs) {
  require_rank("head_mean", probs.shape(), 4);
  const std::size_t batch = probs.dim(0);
  const std::size_t heads = probs.dim(1);
  const std::size_t tt = probs.dim(2) * probs.dim(3);
  const Real inv = Real(1) / static_cast<Real>(heads);
  std::vector<Real> out(batch * tt, Real(0));
  auto pv = probs.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Real* src = pv.data() + (b * heads + h) * tt;
      Real* dst = out.data() + b * tt;
      for (std::size_t i = 0; i < tt; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < tt; ++i) out[b * tt + i] *= inv;
  }
  const bool track = tracking({&probs});
  auto y = make_output(Shape{batch, probs.dim(2), probs.dim(3)}, std::move(out), track);
  if (track) {
    record(y, [pn = probs.node(), yn = y.node(), batch, heads, tt, inv] {
      auto& g = pn->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          Real* dst = g.data() + (b * heads + h) * tt;
          const Real* src = yn->grad.data() + b * tt;
          for (std::size_t i = 0; i < tt; ++i) dst[i] += src[i] * inv;
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> max_pool_rows(const Tensor<Real>& x, std::span<const Span> spans) {
  require_rank("max_pool_rows", x.shape(), 2);
  if (spans.empty()) throw ContractError("max_pool_rows: no spans");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  std::vector<Real> out(spans.size() * d);
  std::vector<std::size_t> argmax(spans.size() * d);
  auto xv = x.data();
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto& sp = spans[s];
    if (sp.empty()) throw ContractError("max_pool_rows: empty span at index " + std::to_string(s));
    if (sp.end > n) {
      throw IndexError("max_pool_rows: span [" + std::to_string(sp.begin) + ", " + std::to_string(sp.end) +
                       ") exceeds " + std::to_string(n) + " rows");
    }
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = sp.begin;
      for (std::size_t r = sp.begin + 1; r < sp.end; ++r) {
        if (xv[r * d + j] > xv[best * d + j]) best = r;
      }
      out[s * d + j] = xv[best * d + j];
      argmax[s * d + j] = best;
    }
  }
  const bool track = tracking({&x});
  auto y = make_output(Shape{spans.size(), d}, std::move(out), track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node(), argmax = std::move(argmax), d] {
      auto& g = xn->ensure_grad();
      for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i] * d + i % d] += yn->grad[i];
    });
  }
  return y;
}

template <class Real>
Tensor<Real> concat_cols(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank("concat_cols", a.shape(), 2);
  require_rank("concat_cols", b.shape(), 2);
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t n = a.dim(0);
  const std::size_t p = a.dim(1);
  const std::size_t q = b.dim(1);
  std::vector<Real> out(n * (p + q));
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data().data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(b.data().data() + r * q, q, out.data() + r * (p + q) + p);
  }
  const bool track = tracking({&a, &b});
  auto y = make_output(Shape{n, p + q}, std::move(out), track);
  if (track) {
    record(y, [an = a.node(), bn = b.node(), yn = y.node(), n, p, q] {
      for (std::size_t r = 0; r < n; ++r) {
        const Real* src = yn->grad.data() + r * (p + q);
        if (an->requires_grad) {
          auto& g = an->ensure_grad();
          for (std::size_t j = 0; j < p; ++j) g[r * p + j] += src[j];
        }
        if (bn->requires_grad) {
          auto& g = bn->ensure_grad();
          for (std::size_t j = 0; j < q; ++j) g[r * q + j] += src[p + j];
        }
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (auto v : x.data()) total += v;
  const bool track = tracking({&x});
  auto y = make_output(Shape{1}, std::vector<Real>{total}, track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node()] {
      auto& g = xn->ensure_grad();
      for (auto& gi : g) gi += yn->grad[0];
    });
  }
  return y;
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

template <class Real>
Tensor<Real> weighted_neg_log(const Tensor<Real>& x, std::span<const std::size_t> indices,
                              std::span<const Real> weights, Real floor) {
  if (indices.size() != weights.size()) {
    throw DimensionError("weighted_neg_log: " + std::to_string(indices.size()) + " indices but " +
                         std::to_string(weights.size()) + " weights");
  }
  auto xv = x.data();
  Real total = 0;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= xv.size()) {
      throw IndexError("weighted_neg_log: index " + std::to_string(indices[j]) + " out of range " +
                       std::to_string(xv.size()));
    }
    total -= weights[j] * std::log(std::max(xv[indices[j]], floor));
  }
  const bool track = tracking({&x});
  auto y = make_output(Shape{1}, std::vector<Real>{total}, track);
  if (track) {
    record(y, [xn = x.node(), yn = y.node(), idx = std::vector<std::size_t>(indices.begin(), indices.end()),
               w = std::vector<Real>(weights.begin(), weights.end()), floor] {
      auto& g = xn->ensure_grad();
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const Real v = xn->value[idx[j]];
        if (v > floor) g[idx[j]] -= yn->grad[0] * w[j] / v;
      }
    });
  }
  return y;
}

#define PLOTFORGE_INSTANTIATE_OPS(R)                                                                  \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                         \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                         \
  template Tensor<R> scale(const Tensor<R>&, R);                                                      \
  template Tensor<R> add_bias(const Tensor<R>&, const Tensor<R>&);                                    \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                      \
  template Tensor<R> transpose(const Tensor<R>&);                                                     \
  template Tensor<R> softmax(const Tensor<R>&, int);                                                  \
  template Tensor<R> log_softmax(const Tensor<R>&);                                                   \
  template Tensor<R> layer_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);             \
  template Tensor<R> relu(const Tensor<R>&);                                                          \
  template Tensor<R> tanh(const Tensor<R>&);                                                          \
  template Tensor<R> embedding_lookup(const Tensor<R>&, std::span<const TokenId>);                    \
  template Tensor<R> cross_entropy_masked(const Tensor<R>&, std::span<const TokenId>,                 \
                                          std::span<const R>);                                        \
  template Tensor<R> dropout(const Tensor<R>&, R, Rng&);                                              \
  template Tensor<R> causal_attention_probs(const Tensor<R>&, const Tensor<R>&, std::size_t,          \
                                            std::size_t, std::size_t);                                \
  template Tensor<R> attend(const Tensor<R>&, const Tensor<R>&);                                      \
  template Tensor<R> head_mean(const Tensor<R>&);                                                     \
  template Tensor<R> max_pool_rows(const Tensor<R>&, std::span<const Span>);                          \
  template Tensor<R> concat_cols(const Tensor<R>&, const Tensor<R>&);                                 \
  template Tensor<R> sum(const Tensor<R>&);                                                           \
  template Tensor<R> mean(const Tensor<R>&);                                                          \
  template Tensor<R> weighted_neg_log(const Tensor<R>&, std::span<const std::size_t>,                 \
                                      std::span<const R>, R);

PLOTFORGE_INSTANTIATE_OPS(float)
PLOTFORGE_INSTANTIATE_OPS(double)

}  // namespace plotforge::ad

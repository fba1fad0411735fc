// Reference vs OpenMP GEMM at the shapes a desk-scale model produces, plus a
// full forward/backward step on the default model under each backend.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "plotforge/kernels.hpp"
#include "plotforge/ops.hpp"
#include "plotforge/transformer.hpp"

using namespace plotforge;

namespace {

struct Operands {
  std::vector<float> a, b, c;
};

Operands operands(std::size_t m, std::size_t n, std::size_t k) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 1.0f);
  Operands o{std::vector<float>(m * k), std::vector<float>(k * n), std::vector<float>(m * n)};
  for (auto& x : o.a) x = d(rng);
  for (auto& x : o.b) x = d(rng);
  return o;
}

template <kernels::Backend B>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const bool trans_b = state.range(3) != 0;
  auto o = operands(m, n, k);
  kernels::GemmArgs args;
  args.trans_b = trans_b;
  args.m = m;
  args.n = n;
  args.k = k;
  args.lda = k;
  args.ldb = trans_b ? k : n;
  args.ldc = n;
  for (auto _ : state) {
    if constexpr (B == kernels::Backend::reference) {
      kernels::reference::gemm(args, o.a.data(), o.b.data(), o.c.data());
    } else {
      kernels::parallel::gemm(args, o.a.data(), o.b.data(), o.c.data());
    }
    benchmark::DoNotOptimize(o.c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k * 2));
  state.counters["threads"] = kernels::parallel::max_threads();
}

// {m, n, k, trans_b}: attention projections, FFN, output layer, scores.
void shapes(benchmark::internal::Benchmark* b) {
  b->Args({960, 128, 128, 0});
  b->Args({960, 512, 128, 0});
  b->Args({960, 128, 512, 0});
  b->Args({960, 8000, 128, 0});
  b->Args({60, 60, 32, 1});
  b->Unit(benchmark::kMicrosecond);
}

BENCHMARK(BM_gemm<kernels::Backend::reference>)->Name("gemm/reference")->Apply(shapes);
BENCHMARK(BM_gemm<kernels::Backend::parallel>)->Name("gemm/parallel")->Apply(shapes);

template <kernels::Backend B>
void BM_train_step(benchmark::State& state) {
  kernels::set_backend(B);
  lm::ModelConfig cfg;
  cfg.vocab_size = 2000;
  cfg.dropout = 0.0;
  lm::TransformerLM<float> model(cfg, 1);
  auto params = model.parameters();
  std::mt19937_64 rng(2);
  std::vector<TokenId> ids(8 * 60);
  for (auto& id : ids) id = static_cast<TokenId>(rng() % cfg.vocab_size);
  const auto targets = lm::shift_targets(ids);
  const std::vector<float> mask(ids.size(), 1.0f);
  for (auto _ : state) {
    ad::zero_grads(params);
    const auto out = model.forward(ids, 8, false, nullptr);
    ad::backward(lm::lm_loss(out, std::span<const TokenId>(targets), std::span<const float>(mask)));
    ad::Tape<float>::active().clear();
  }
  kernels::set_backend(kernels::Backend::parallel);
}

BENCHMARK(BM_train_step<kernels::Backend::reference>)->Name("train_step/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_step<kernels::Backend::parallel>)->Name("train_step/parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

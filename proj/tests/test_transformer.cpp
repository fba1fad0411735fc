#include <doctest.h>

#include <cmath>
#include <cstring>

#include "plotforge/errors.hpp"
#include "plotforge/grad_check.hpp"
#include "plotforge/ops.hpp"
#include "plotforge/sampling.hpp"
#include "plotforge/transformer.hpp"
#include "support.hpp"

using namespace plotforge;
using testing::random_ids;
using testing::tiny_model;

TEST_SUITE("transformer") {
  TEST_CASE("config validation") {
    auto c = tiny_model(20);
    c.n_heads = 3;
    CHECK_THROWS_AS(c.validate(), ContractError);
    CHECK(lm::ModelConfig{}.d_k() == 32);
    const auto full = lm::ModelConfig::full_scale();
    CHECK(full.n_layers == 12);
    CHECK(full.d_model == 768);
    CHECK(full.vocab_size == 50527);
  }

  TEST_CASE("causality: later tokens never change earlier logits") {
    const auto cfg = tiny_model(30);
    lm::TransformerLM<float> model(cfg, 1);
    Rng rng(2);
    ad::NoGradGuard<float> guard;
    for (int trial = 0; trial < 50; ++trial) {
      auto ids = random_ids(12, 30, rng);
      const auto base = model.forward(ids);
      const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, 11)(rng);
      ids[pos] = (ids[pos] + 1) % 30;
      const auto changed = model.forward(ids);
      const std::size_t prefix = pos * 30;
      CHECK(std::memcmp(base.logits.data().data(), changed.logits.data().data(), prefix * sizeof(float)) == 0);
    }
  }

  TEST_CASE("attention rows are causal distributions") {
    const auto cfg = tiny_model(30);
    lm::TransformerLM<float> model(cfg, 3);
    Rng rng(4);
    ad::NoGradGuard<float> guard;
    const auto ids = random_ids(2 * 9, 30, rng);
    const auto out = model.forward(ids, 2, false, nullptr);
    const auto a = out.attention.data();
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 9; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 9; ++j) {
          const float v = a[(b * 9 + i) * 9 + j];
          if (j > i) CHECK(v == 0.0f);
          s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
    const std::vector<TokenId> one = {7};
    const auto single = model.forward(one);
    CHECK(single.attention.size() == 1);
    CHECK(single.attention.data()[0] == 1.0f);
  }

  TEST_CASE("eval forward is deterministic and length is enforced") {
    const auto cfg = tiny_model(30);
    lm::TransformerLM<float> model(cfg, 5);
    Rng rng(6);
    ad::NoGradGuard<float> guard;
    const auto ids = random_ids(10, 30, rng);
    const auto a = model.forward(ids);
    const auto b = model.forward(ids);
    CHECK(std::memcmp(a.logits.data().data(), b.logits.data().data(), a.logits.size() * sizeof(float)) == 0);
    const auto too_long = random_ids(cfg.max_positions + 1, 30, rng);
    CHECK_THROWS_AS(model.forward(too_long), LengthError);
  }

  TEST_CASE("last-row logits equal the full forward's final row") {
    const auto cfg = tiny_model(30);
    lm::TransformerLM<float> model(cfg, 7);
    Rng rng(8);
    ad::NoGradGuard<float> guard;
    const auto ids = random_ids(3 * 6, 30, rng);
    const auto all = model.forward(ids, 3, false, nullptr, lm::LogitRows::all);
    const auto last = model.forward(ids, 3, false, nullptr, lm::LogitRows::last);
    for (std::size_t b = 0; b < 3; ++b) {
      CHECK(std::memcmp(all.logits.data().data() + (b * 6 + 5) * 30, last.logits.data().data() + b * 30,
                        30 * sizeof(float)) == 0);
    }
  }

  TEST_CASE("untrained loss is near ln V") {
    auto cfg = tiny_model(200);
    cfg.init_std = 0.002;
    lm::TransformerLM<float> model(cfg, 9);
    Rng rng(10);
    ad::NoGradGuard<float> guard;
    const auto ids = random_ids(20, 200, rng);
    const auto out = model.forward(ids);
    const auto targets = lm::shift_targets(ids);
    std::vector<float> mask(20, 1.0f);
    mask.back() = 0;
    const double loss = lm::lm_loss(out, std::span<const TokenId>(targets), std::span<const float>(mask)).item();
    CHECK(loss == doctest::Approx(std::log(200.0)).epsilon(0.01));
    std::vector<float> none(20, 0.0f);
    CHECK(lm::lm_loss(out, std::span<const TokenId>(targets), std::span<const float>(none)).item() == 0.0f);
  }

  TEST_CASE("loss equals the product of next-token probabilities") {
    const auto cfg = tiny_model(12);
    lm::TransformerLM<double> model(cfg, 11);
    const std::vector<TokenId> ids = {3, 7, 1, 9, 4};
    ad::NoGradGuard<double> guard;
    const auto out = model.forward(ids);
    const auto targets = lm::shift_targets(ids);
    std::vector<double> mask = {1, 1, 1, 1, 0};
    const double loss = lm::lm_loss(out, std::span<const TokenId>(targets), std::span<const double>(mask)).item();
    // Oracle: rerun the model on each prefix and read the probability of the next token.
    double log_prod = 0;
    for (std::size_t t = 1; t < ids.size(); ++t) {
      const auto p = lm::next_token_dist(model, std::span<const TokenId>(ids).first(t));
      log_prod += std::log(p[static_cast<std::size_t>(ids[t])]);
    }
    CHECK(loss == doctest::Approx(-log_prod / 4).epsilon(1e-10));
  }

  TEST_CASE("post-norm variant and tied embeddings run") {
    auto cfg = tiny_model(15);
    cfg.pre_norm = false;
    cfg.tie_embeddings = true;
    lm::TransformerLM<float> model(cfg, 12);
    for (const auto& p : model.parameters()) CHECK(p.name != "out.w");
    const std::vector<TokenId> ids = {1, 2, 3};
    ad::NoGradGuard<float> guard;
    CHECK(model.forward(ids).logits.shape() == ad::Shape{3, 15});
  }

  TEST_CASE("full two-layer model gradient matches finite differences") {
    auto cfg = tiny_model(10);
    cfg.d_model = 4;
    cfg.d_ff = 6;
    lm::TransformerLM<double> model(cfg, 13);
    const std::vector<TokenId> ids = {1, 4, 2, 8, 3, 5};
    const auto targets = lm::shift_targets(ids);
    const std::vector<double> mask = {1, 1, 1, 1, 1, 0};
    std::vector<ad::Tensor<double>> inputs;
    for (const auto& p : model.parameters()) inputs.push_back(p.tensor);
    const auto r = ad::grad_check(
        [&] {
          const auto out = model.forward(ids);
          return lm::lm_loss(out, std::span<const TokenId>(targets), std::span<const double>(mask));
        },
        inputs);
    INFO("worst " << model.parameters()[r.worst_input].name << "[" << r.worst_index << "] " << r.analytic << " vs "
                  << r.numeric);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("top-k ids break ties toward lower ids") {
    const std::vector<double> p = {0.1, 0.3, 0.3, 0.2, 0.1};
    CHECK(lm::top_k_ids(p, 2) == std::vector<TokenId>{1, 2});
    CHECK(lm::top_k_ids(p, 4) == std::vector<TokenId>{1, 2, 3, 0});
    CHECK_THROWS_AS(lm::top_k_ids(p, 0), ContractError);
    CHECK_THROWS_AS(lm::top_k_ids(p, 6), ContractError);
  }

  TEST_CASE("next-token distribution sums to one and ignores logit shifts") {
    const auto cfg = tiny_model(25);
    lm::TransformerLM<float> model(cfg, 14);
    const std::vector<TokenId> ctx = {3, 4, 5};
    const auto p = lm::next_token_dist(model, ctx);
    double s = 0;
    for (auto v : p) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    // Shifting the output bias by a constant shifts every logit equally.
    auto bias = model.parameters().back().tensor;
    REQUIRE(model.parameters().back().name == "out.b");
    for (auto& b : bias.data()) b += 3.0f;
    const auto q = lm::next_token_dist(model, ctx);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-5));
  }

  TEST_CASE("k=1 is greedy decoding and seeds reproduce") {
    const auto cfg = tiny_model(25);
    lm::TransformerLM<float> model(cfg, 15);
    const std::vector<TokenId> ctx = {6, 7};
    lm::SamplingConfig sc;
    sc.k = 1;
    sc.max_new_tokens = 8;
    sc.stop_token = -1;
    const auto s = lm::sample_top_k(model, ctx, sc);
    std::vector<TokenId> seq = ctx;
    for (std::size_t i = 0; i < 8; ++i) {
      const auto p = lm::next_token_dist(model, seq);
      seq.push_back(static_cast<TokenId>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    CHECK(s.tokens == std::vector<TokenId>(seq.begin() + 2, seq.end()));

    sc.k = 10;
    sc.seed = 44;
    CHECK(lm::sample_top_k(model, ctx, sc).tokens == lm::sample_top_k(model, ctx, sc).tokens);
  }

  TEST_CASE("forced prefix and stop token") {
    const auto cfg = tiny_model(25);
    lm::TransformerLM<float> model(cfg, 16);
    const std::vector<TokenId> ctx = {6};
    const std::vector<TokenId> forced = {9, 10, 11};
    lm::SamplingConfig sc;
    sc.max_new_tokens = 5;
    sc.k = 5;
    Rng rng(1);
    const auto r = lm::sample_top_k(model, ctx, sc, rng, forced);
    REQUIRE(r.tokens.size() >= 3);
    CHECK(std::vector<TokenId>(r.tokens.begin(), r.tokens.begin() + 3) == forced);
    const std::vector<TokenId> stop_first = {text::kEos};
    Rng rng2(1);
    const auto s = lm::sample_top_k(model, ctx, sc, rng2, stop_first);
    CHECK(s.tokens.empty());
    CHECK(s.stopped);
  }
}

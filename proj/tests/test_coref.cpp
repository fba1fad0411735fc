#include <doctest.h>

#include <cmath>

#include "plotforge/coref.hpp"
#include "plotforge/errors.hpp"
#include "plotforge/grad_check.hpp"
#include "plotforge/joint_loss.hpp"
#include "plotforge/transformer.hpp"
#include "support.hpp"

using namespace plotforge;
using namespace plotforge::aux;

namespace {

// One sequence, T positions, attention rows given explicitly.
ad::Tensor<double> attention(std::size_t t, const std::vector<double>& values) {
  return ad::Tensor<double>({1, t, t}, values);
}

std::vector<double> uniform_causal(std::size_t t) {
  std::vector<double> a(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t k = 0; k <= i; ++k) a[i * t + k] = 1.0 / static_cast<double>(i + 1);
  }
  return a;
}

}  // namespace

TEST_SUITE("coref") {
  TEST_CASE("supervision lists earlier same-cluster tokens") {
    const std::vector<Cluster> clusters = {{{1, 3}, {5, 6}}, {{3, 4}, {7, 8}}};
    const auto sup = build_supervision(clusters, 9);
    // Tokens of a first mention are never supervised, even after the first
    // token of that mention.
    CHECK(sup.mention_tokens == 5);
    CHECK(sup.positions == std::vector<std::size_t>{5, 7});
    CHECK(sup.antecedents[0] == std::vector<std::size_t>{1, 2});
    CHECK(sup.antecedents[1] == std::vector<std::size_t>{3});
    const std::vector<Cluster> overlap = {{{1, 3}, {2, 4}}};
    CHECK_THROWS_AS(build_supervision(overlap, 9), ContractError);
    const std::vector<Cluster> past = {{{1, 2}, {8, 10}}};
    CHECK_THROWS_AS(build_supervision(past, 9), ContractError);
    const std::vector<Cluster> empty_span = {{{1, 2}, {4, 4}}};
    CHECK_THROWS_AS(build_supervision(empty_span, 9), ContractError);
  }

  TEST_CASE("full attention on the antecedent costs nothing") {
    std::vector<double> a(9, 0.0);
    a[0] = 1;
    a[3] = 1;
    a[6] = 1;  // row 2 attends fully to position 0
    const std::vector<Cluster> clusters = {{{0, 1}, {2, 3}}};
    const std::vector<CorefSupervision> sup = {build_supervision(clusters, 3)};
    CHECK(coref_loss(attention(3, a), std::span<const CorefSupervision>(sup)).item() == 0.0);
  }

  TEST_CASE("uniform attention costs ln of the visible width") {
    for (std::size_t t = 3; t <= 8; ++t) {
      // Mention at position t-1 with a single antecedent at 0; uniform row
      // over the t visible positions including itself. The closed form counts
      // only previous positions, so build rows over t-1 predecessors.
      std::vector<double> a(t * t, 0.0);
      for (std::size_t i = 0; i < t; ++i) {
        if (i == 0) {
          a[0] = 1;
          continue;
        }
        for (std::size_t k = 0; k < i; ++k) a[i * t + k] = 1.0 / static_cast<double>(i);
      }
      const std::vector<Cluster> clusters = {{{0, 1}, {t - 1, t}}};
      const std::vector<CorefSupervision> sup = {build_supervision(clusters, t)};
      CHECK(coref_loss(attention(t, a), std::span<const CorefSupervision>(sup)).item() ==
            doctest::Approx(std::log(static_cast<double>(t - 1))).epsilon(1e-12));
    }
  }

  TEST_CASE("normalizers and averaging over antecedents") {
    const std::size_t t = 6;
    const auto a = uniform_causal(t);
    const std::vector<Cluster> clusters = {{{0, 2}, {3, 5}}};
    const std::vector<CorefSupervision> sup = {build_supervision(clusters, t)};
    // Supervised: positions 3 and 4, each with antecedents 0 and 1.
    const double c3 = -(std::log(0.25) + std::log(0.25)) / 2;
    const double c4 = -(std::log(0.2) + std::log(0.2)) / 2;
    CHECK(coref_loss(attention(t, a), std::span<const CorefSupervision>(sup)).item() ==
          doctest::Approx((c3 + c4) / 2).epsilon(1e-12));
    CHECK(coref_loss(attention(t, a), std::span<const CorefSupervision>(sup), CorefNormalizer::mention_tokens).item() ==
          doctest::Approx((c3 + c4) / 4).epsilon(1e-12));
    CHECK(antecedent_mass(attention(t, a), std::span<const CorefSupervision>(sup)) ==
          doctest::Approx((0.5 + 0.4) / 2).epsilon(1e-12));
  }

  TEST_CASE("no supervised tokens gives zero") {
    const std::vector<CorefSupervision> sup = {build_supervision({}, 4)};
    CHECK(coref_loss(attention(4, uniform_causal(4)), std::span<const CorefSupervision>(sup)).item() == 0.0);
    CHECK(std::isnan(antecedent_mass(attention(4, uniform_causal(4)), std::span<const CorefSupervision>(sup))));
  }

  TEST_CASE("loss is non-negative on random attention") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t t = 8;
      std::vector<double> a(t * t, 0.0);
      std::uniform_real_distribution<double> u(0.01, 1.0);
      for (std::size_t i = 0; i < t; ++i) {
        double s = 0;
        for (std::size_t k = 0; k <= i; ++k) s += a[i * t + k] = u(rng);
        for (std::size_t k = 0; k <= i; ++k) a[i * t + k] /= s;
      }
      const std::vector<Cluster> clusters = {{{1, 2}, {3, 5}, {6, 8}}};
      const std::vector<CorefSupervision> sup = {build_supervision(clusters, t)};
      CHECK(coref_loss(attention(t, a), std::span<const CorefSupervision>(sup)).item() >= 0.0);
    }
  }

  TEST_CASE("gradient through a two-layer model matches finite differences") {
    auto cfg = testing::tiny_model(10);
    cfg.n_layers = 2;
    cfg.d_model = 4;
    cfg.d_ff = 6;
    cfg.init_std = 0.5;
    lm::TransformerLM<double> model(cfg, 17);
    const std::vector<TokenId> ids = {5, 6, 7, 8, 5, 9, 6};
    const std::vector<Cluster> clusters = {{{0, 2}, {4, 5}, {6, 7}}};
    const std::vector<CorefSupervision> sup = {build_supervision(clusters, ids.size())};
    std::vector<ad::Tensor<double>> inputs;
    for (const auto& p : model.parameters()) inputs.push_back(p.tensor);
    const auto r = ad::grad_check(
        [&] {
          return coref_loss(model.forward(ids, lm::LogitRows::none).attention,
                            std::span<const CorefSupervision>(sup));
        },
        inputs);
    CHECK(r.max_rel_error < 1e-3);
  }

  TEST_CASE("heuristic links a pronoun to the preceding name") {
    const std::string story = "John ran. He fell.";
    const auto clusters = heuristic_coref(story);
    REQUIRE(clusters.size() == 1);
    REQUIRE(clusters[0].size() == 2);
    CHECK(story.substr(clusters[0][0].begin, clusters[0][0].size()) == "John");
    CHECK(story.substr(clusters[0][1].begin, clusters[0][1].size()) == "He");
  }

  TEST_CASE("heuristic rules: gender, distance and repeats") {
    CHECK(heuristic_coref("The dog barked. A cat slept.").empty());
    CHECK(heuristic_coref("Mary ran. He fell.").empty());
    const std::string far = "John ran. The sky was grey. Rain came. Wind blew. He fell.";
    CHECK(heuristic_coref(far).empty());
    const std::string two = "Mary met John. She smiled at him. Later John left.";
    const auto c = heuristic_coref(two);
    REQUIRE(c.size() == 2);
    auto text_of = [&](const Span& s) { return two.substr(s.begin, s.size()); };
    CHECK(text_of(c[0][0]) == "Mary");
    CHECK(text_of(c[0][1]) == "She");
    CHECK(text_of(c[1][0]) == "John");
    CHECK(text_of(c[1][1]) == "him");
    CHECK(text_of(c[1][2]) == "John");
    for (const auto& cl : c) {
      for (std::size_t i = 1; i < cl.size(); ++i) CHECK(cl[i - 1].end <= cl[i].begin);
    }
  }

  TEST_CASE("character clusters map onto token ranges") {
    const std::vector<Span> offsets = {{0, 4}, {4, 8}, {8, 9}, {9, 12}, {12, 17}};
    const std::vector<Cluster> chars = {{{0, 4}, {9, 12}}, {{5, 7}, {6, 9}}};
    const auto tokens = char_to_token_clusters(chars, offsets);
    REQUIRE(tokens.size() == 1);
    CHECK(tokens[0] == Cluster{{0, 1}, {3, 4}});
  }
}

TEST_SUITE("joint-loss") {
  TEST_CASE("weighted sum arithmetic") {
    const auto b = combine(1, 2, 3, 0.1, 0.3);
    CHECK(b.total == doctest::Approx(2.1).epsilon(1e-15));
    CHECK(combine(1.5, 2, 3, 0, 0).total == 1.5);
    CHECK_THROWS_AS(combine(1, 2, 3, -0.1, 0.3), ContractError);
  }

  TEST_CASE("differentiable total matches the breakdown") {
    auto lm = ad::Tensor<double>::scalar(1.0).set_requires_grad();
    auto dis = ad::Tensor<double>::scalar(2.0).set_requires_grad();
    auto coref = ad::Tensor<double>::scalar(3.0).set_requires_grad();
    const auto j = joint_loss(lm, dis, coref, 0.1, 0.3);
    CHECK(j.total.item() == doctest::Approx(2.1).epsilon(1e-15));
    CHECK(j.parts.total == doctest::Approx(2.1).epsilon(1e-15));
    ad::backward(j.total);
    CHECK(lm.grad()[0] == 1.0);
    CHECK(dis.grad()[0] == doctest::Approx(0.1));
    CHECK(coref.grad()[0] == doctest::Approx(0.3));
    ad::Tape<double>::active().clear();

    const auto only = joint_loss(lm, dis, coref, 0.0, 0.0);
    CHECK(only.total.item() == 1.0);
    CHECK(only.total.node() == lm.node());
    const auto missing = joint_loss(lm, ad::Tensor<double>(), coref, 0.1, 0.3);
    CHECK(missing.total.item() == doctest::Approx(1.9));
    ad::Tape<double>::active().clear();
  }
}

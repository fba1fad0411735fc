#include <doctest.h>

#include <cmath>

#include "plotforge/errors.hpp"
#include "plotforge/grad_check.hpp"
#include "plotforge/ops.hpp"
#include "support.hpp"

using namespace plotforge;
using testing::probe;
using testing::random_tensor;
using T = ad::Tensor<double>;

namespace {

double check(const std::function<T()>& f, std::vector<T> inputs, ad::GradCheckOptions opts = {}) {
  const auto r = ad::grad_check(f, std::move(inputs), opts);
  INFO("worst input " << r.worst_input << " index " << r.worst_index << " analytic " << r.analytic << " numeric "
                      << r.numeric);
  CHECK(r.coordinates > 0);
  return r.max_rel_error;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("elementwise ops match finite differences") {
    Rng rng(1);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    CHECK(check([&] { return probe(ad::add(a, b)); }, {a, b}) < 1e-4);
    CHECK(check([&] { return probe(ad::mul(a, b)); }, {a, b}) < 1e-4);
    CHECK(check([&] { return probe(ad::scale(a, 0.37)); }, {a}) < 1e-4);
    CHECK(check([&] { return probe(ad::tanh(a)); }, {a}) < 1e-4);
    ad::GradCheckOptions near_zero;
    near_zero.skip = [&](std::size_t, std::size_t i) { return std::abs(a.data()[i]) < 1e-3; };
    CHECK(check([&] { return probe(ad::relu(a)); }, {a}, near_zero) < 1e-4);
  }

  TEST_CASE("bias, transpose and concat") {
    Rng rng(2);
    auto x = random_tensor({2, 3, 4}, rng);
    auto bias = random_tensor({4}, rng);
    auto m = random_tensor({3, 5}, rng);
    auto n = random_tensor({3, 2}, rng);
    CHECK(check([&] { return probe(ad::add_bias(x, bias)); }, {x, bias}) < 1e-4);
    CHECK(check([&] { return probe(ad::transpose(m)); }, {m}) < 1e-4);
    CHECK(check([&] { return probe(ad::concat_cols(m, n)); }, {m, n}) < 1e-4);
  }

  TEST_CASE("matmul in all three forms") {
    Rng rng(3);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto a3 = random_tensor({2, 3, 4}, rng);
    auto b3 = random_tensor({2, 4, 5}, rng);
    CHECK(check([&] { return probe(ad::matmul(a, b)); }, {a, b}) < 1e-4);
    CHECK(check([&] { return probe(ad::matmul(a3, b)); }, {a3, b}) < 1e-4);
    CHECK(check([&] { return probe(ad::matmul(a3, b3)); }, {a3, b3}) < 1e-4);
  }

  TEST_CASE("matmul shape errors name both shapes") {
    T a({2, 3}), b({4, 5});
    CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
  }

  TEST_CASE("softmax family") {
    Rng rng(4);
    auto x = random_tensor({3, 5}, rng);
    CHECK(check([&] { return probe(ad::softmax(x)); }, {x}) < 1e-4);
    CHECK(check([&] { return probe(ad::softmax(x, 0)); }, {x}) < 1e-4);
    CHECK(check([&] { return probe(ad::log_softmax(x)); }, {x}) < 1e-4);
  }

  TEST_CASE("softmax rows sum to one and survive large logits") {
    T x({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
    const auto p = ad::softmax(x);
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += p.data()[r * 3 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(std::isfinite(ad::log_softmax(x).data()[0]));
  }

  TEST_CASE("layer norm") {
    Rng rng(5);
    auto x = random_tensor({4, 6}, rng);
    auto g = random_tensor({6}, rng);
    auto b = random_tensor({6}, rng);
    CHECK(check([&] { return probe(ad::layer_norm(x, g, b)); }, {x, g, b}) < 1e-4);
  }

  TEST_CASE("embedding lookup scatters into the table") {
    Rng rng(6);
    auto table = random_tensor({5, 3}, rng);
    const std::vector<TokenId> ids = {1, 4, 1, 0};
    CHECK(check([&] { return probe(ad::embedding_lookup(table, std::span<const TokenId>(ids))); }, {table}) < 1e-4);
    const std::vector<TokenId> bad = {5};
    CHECK_THROWS_WITH_AS(ad::embedding_lookup(table, std::span<const TokenId>(bad)), doctest::Contains("5"),
                         IndexError);
  }

  TEST_CASE("masked cross entropy") {
    Rng rng(7);
    auto logits = random_tensor({4, 6}, rng);
    const std::vector<TokenId> targets = {2, 5, 99, 0};
    const std::vector<double> mask = {1, 0.5, 0, 1};
    auto f = [&] { return ad::cross_entropy_masked(logits, std::span<const TokenId>(targets), std::span<const double>(mask)); };
    CHECK(check(f, {logits}) < 1e-4);

    // Direct oracle: -(sum m_t log p_t) / sum m_t.
    double num = 0, den = 0;
    for (std::size_t r = 0; r < 4; ++r) {
      if (mask[r] == 0) continue;
      double mx = -1e300, z = 0;
      for (std::size_t c = 0; c < 6; ++c) mx = std::max(mx, logits.data()[r * 6 + c]);
      for (std::size_t c = 0; c < 6; ++c) z += std::exp(logits.data()[r * 6 + c] - mx);
      num += mask[r] * -(logits.data()[r * 6 + static_cast<std::size_t>(targets[r])] - mx - std::log(z));
      den += mask[r];
    }
    CHECK(f().item() == doctest::Approx(num / den).epsilon(1e-12));

    ad::Tape<double>::active().clear();
    logits.zero_grad();
    const auto loss = f();
    ad::backward(loss);
    for (std::size_t c = 0; c < 6; ++c) CHECK(logits.grad()[2 * 6 + c] == 0.0);
    ad::Tape<double>::active().clear();
  }

  TEST_CASE("cross entropy with an all-zero mask is zero with zero gradient") {
    Rng rng(8);
    auto logits = random_tensor({3, 4}, rng);
    const std::vector<TokenId> targets = {0, 1, 2};
    const std::vector<double> mask = {0, 0, 0};
    logits.zero_grad();
    const auto loss = ad::cross_entropy_masked(logits, std::span<const TokenId>(targets), std::span<const double>(mask));
    CHECK(loss.item() == 0.0);
    ad::backward(loss);
    for (auto g : logits.grad()) CHECK(g == 0.0);
    ad::Tape<double>::active().clear();
  }

  TEST_CASE("dropout with a fixed stream") {
    Rng rng(9);
    auto x = random_tensor({4, 5}, rng);
    auto f = [&] {
      Rng drop(123);
      return probe(ad::dropout(x, 0.3, drop));
    };
    CHECK(check(f, {x}) < 1e-4);
    Rng drop(5);
    const auto y = ad::dropout(x, 0.0, drop);
    CHECK(y.node() == x.node());
  }

  TEST_CASE("causal attention probabilities") {
    Rng rng(10);
    const std::size_t b = 2, t = 4, h = 2, d = 6;
    auto q = random_tensor({b * t, d}, rng);
    auto k = random_tensor({b * t, d}, rng);
    auto v = random_tensor({b * t, d}, rng);
    CHECK(check([&] { return probe(ad::causal_attention_probs(q, k, b, t, h)); }, {q, k}) < 1e-4);
    CHECK(check([&] { return probe(ad::attend(ad::causal_attention_probs(q, k, b, t, h), v)); }, {q, k, v}) < 1e-4);
    CHECK(check([&] { return probe(ad::head_mean(ad::causal_attention_probs(q, k, b, t, h))); }, {q, k}) < 1e-4);

    const auto p = ad::causal_attention_probs(q, k, b, t, h);
    for (std::size_t row = 0; row < b * h * t; ++row) {
      const std::size_t i = row % t;
      double s = 0;
      for (std::size_t j = 0; j < t; ++j) {
        const double a = p.data()[row * t + j];
        if (j > i) CHECK(a == 0.0);
        s += a;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("max pooling over row spans") {
    Rng rng(11);
    auto x = random_tensor({6, 3}, rng);
    const std::vector<Span> spans = {{0, 2}, {2, 6}, {3, 4}};
    CHECK(check([&] { return probe(ad::max_pool_rows(x, std::span<const Span>(spans))); }, {x}) < 1e-4);

    T pair({2, 2}, std::vector<double>{1, 0, 0, 1});
    const std::vector<Span> whole = {{0, 2}};
    const auto m = ad::max_pool_rows(pair, std::span<const Span>(whole));
    CHECK(m.data()[0] == 1.0);
    CHECK(m.data()[1] == 1.0);
    const std::vector<Span> empty = {{1, 1}};
    CHECK_THROWS_AS(ad::max_pool_rows(pair, std::span<const Span>(empty)), ContractError);
  }

  TEST_CASE("reductions and weighted negative log") {
    Rng rng(12);
    auto x = random_tensor({3, 4}, rng);
    CHECK(check([&] { return ad::scale(ad::sum(ad::tanh(x)), 0.5); }, {x}) < 1e-4);
    CHECK(check([&] { return ad::mean(ad::tanh(x)); }, {x}) < 1e-4);
    const std::vector<std::size_t> idx = {0, 5, 11, 5};
    const std::vector<double> w = {0.5, 1.0, 2.0, 0.25};
    CHECK(check([&] { return ad::weighted_neg_log(ad::softmax(x), std::span<const std::size_t>(idx), std::span<const double>(w)); },
                {x}) < 1e-4);
  }
}

TEST_SUITE("tape") {
  TEST_CASE("leaf gradients accumulate across backward calls") {
    T x({2}, std::vector<double>{1.0, 2.0});
    x.set_requires_grad(true);
    x.zero_grad();
    for (int i = 0; i < 2; ++i) {
      const auto y = ad::sum(ad::mul(x, x));
      ad::backward(y);
    }
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(8.0));
    ad::Tape<double>::active().clear();
  }

  TEST_CASE("no-grad guard records nothing") {
    T x({2}, 1.0);
    x.set_requires_grad(true);
    const auto before = ad::Tape<double>::active().size();
    {
      ad::NoGradGuard<double> guard;
      (void)ad::sum(ad::mul(x, x));
    }
    CHECK(ad::Tape<double>::active().size() == before);
  }

  TEST_CASE("backward rejects non-scalar losses") {
    T x({2}, 1.0);
    x.set_requires_grad(true);
    const auto y = ad::mul(x, x);
    CHECK_THROWS_AS(ad::backward(y), ContractError);
    ad::Tape<double>::active().clear();
  }
}

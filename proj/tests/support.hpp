#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "plotforge/rng.hpp"
#include "plotforge/tensor.hpp"
#include "plotforge/tokenizer.hpp"
#include "plotforge/examples.hpp"
#include "plotforge/outline.hpp"
#include "plotforge/transformer.hpp"

namespace testing {

using plotforge::Rng;
namespace ad = plotforge::ad;

inline ad::Tensor<double> random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = n(rng);
  ad::Tensor<double> t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

// sum(w * x) with fixed random weights, so every output coordinate carries a
// distinct, nonzero upstream gradient.
inline ad::Tensor<double> probe(const ad::Tensor<double>& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = random_tensor(x.shape(), rng, 1.0, false);
  return ad::sum(ad::mul(x, w));
}

inline plotforge::lm::ModelConfig tiny_model(std::size_t vocab, std::size_t layers = 2) {
  plotforge::lm::ModelConfig c;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.max_positions = 32;
  c.vocab_size = vocab;
  c.dropout = 0.0;
  return c;
}

inline std::vector<plotforge::TokenId> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(vocab) - 1);
  std::vector<plotforge::TokenId> ids(n);
  for (auto& i : ids) i = d(rng);
  return ids;
}

// Short stories with named characters, pronouns and sentence-initial
// connectives, so every annotation path has something to find.
inline std::vector<plotforge::outline::StoryTriple> toy_triples(std::size_t n, Rng& rng,
                                                               plotforge::outline::Mode mode =
                                                                   plotforge::outline::Mode::abstract) {
  static const std::vector<std::pair<std::string, std::string>> people = {
      {"John", "He"}, {"Mary", "She"}, {"Peter", "He"}, {"Anna", "She"}};
  static const std::vector<std::string> places = {"forest", "castle", "river", "market"};
  static const std::vector<std::string> things = {"sword", "lamp", "map", "coin"};
  static const std::vector<std::string> markers = {"But", "So", "Because", "When"};
  std::vector<plotforge::outline::StoryTriple> out;
  plotforge::outline::OutlineConfig cfg;
  cfg.mode = mode;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [name, pron] = people[rng() % people.size()];
    const auto& place = places[rng() % places.size()];
    const auto& thing = things[rng() % things.size()];
    const auto& marker = markers[rng() % markers.size()];
    const std::string prompt = "A tale of the " + place;
    const std::string story = name + " went to the " + place + ". " + pron + " found a " + thing + ". " + marker +
                              " the " + thing + " was old, " + name + " kept it.";
    out.push_back(plotforge::outline::build_triple(prompt, story, cfg));
  }
  return out;
}

inline std::vector<std::string> triple_texts(const std::vector<plotforge::outline::StoryTriple>& triples) {
  std::vector<std::string> texts;
  for (const auto& t : triples) {
    texts.push_back(t.prompt);
    texts.push_back(t.outline);
    texts.push_back(t.story);
  }
  return texts;
}

}  // namespace testing

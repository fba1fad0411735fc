#pragma once

// Synthetic corpora for the desk-scale experiments. Every generator is a pure
// function of its RNG.

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plotforge/discourse.hpp"
#include "plotforge/rng.hpp"

namespace testing {

struct PromptStory {
  std::string prompt;
  std::string story;
};

template <class T>
const T& pick(const std::vector<T>& v, plotforge::Rng& rng) {
  return v[rng() % v.size()];
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Four-sentence adventure stories. The prompt names the hero and the object;
// the remaining slots vary independently, so stories are distinct but share
// most of their vocabulary.
inline std::vector<PromptStory> adventure_stories(std::size_t n, plotforge::Rng& rng) {
  static const std::vector<std::pair<std::string, std::string>> heroes = {
      {"John", "he"}, {"Mary", "she"}, {"Peter", "he"}, {"Anna", "she"}, {"David", "he"}, {"Sarah", "she"}};
  static const std::vector<std::string> places = {"forest", "castle", "river", "market", "harbor", "mountain"};
  static const std::vector<std::string> objects = {"sword", "lamp", "map", "coin", "book", "key"};
  static const std::vector<std::string> creatures = {"wolf", "dragon", "crow", "giant", "ghost", "snake"};
  static const std::vector<std::string> moods = {"brave", "tired", "curious", "angry", "quiet", "proud"};
  static const std::vector<std::string> endings = {"went home at dawn", "sold it to a merchant",
                                                   "hid it under a stone", "gave it to the king",
                                                   "threw it into the sea", "kept it forever"};
  std::vector<PromptStory> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [hero, pron] = pick(heroes, rng);
    const auto& place = pick(places, rng);
    const auto& object = pick(objects, rng);
    const auto& creature = pick(creatures, rng);
    const auto& mood = pick(moods, rng);
    const auto& ending = pick(endings, rng);
    PromptStory ps;
    ps.prompt = "A " + mood + " traveler finds a " + object;
    ps.story = hero + " walked to the " + place + " with a " + mood + " heart. " + capitalize(pron) +
               " found an old " + object + " near a sleeping " + creature + ". The " + creature +
               " woke up and chased " + hero + ". " + "In the end " + hero + " " + ending + ".";
    out.push_back(ps);
  }
  return out;
}

// Two characters of different gender who keep referring to each other, so
// every story has two name clusters with pronoun mentions.
inline std::vector<PromptStory> coref_stories(std::size_t n, plotforge::Rng& rng) {
  static const std::vector<std::string> men = {"John", "Peter", "David", "Paul", "Mark", "James"};
  static const std::vector<std::string> women = {"Mary", "Anna", "Sarah", "Emma", "Laura", "Julia"};
  static const std::vector<std::string> places = {"river", "market", "garden", "station", "library", "bridge"};
  static const std::vector<std::string> gifts = {"lamp", "letter", "ring", "basket", "scarf", "book"};
  static const std::vector<std::string> verbs = {"thanked", "hugged", "praised", "warned", "teased", "followed"};
  std::vector<PromptStory> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& man = pick(men, rng);
    const auto& woman = pick(women, rng);
    const auto& place = pick(places, rng);
    const auto& gift = pick(gifts, rng);
    const auto& verb = pick(verbs, rng);
    PromptStory ps;
    ps.prompt = "Two friends meet at the " + place;
    if (rng() % 2) {
      ps.story = woman + " met " + man + " at the " + place + ". She gave him a " + gift + ". " + man + " " +
                 verb + " her. Then " + woman + " smiled and " + man + " walked home.";
    } else {
      ps.story = man + " met " + woman + " at the " + place + ". He gave her a " + gift + ". " + woman + " " +
                 verb + " him. Then " + man + " smiled and " + woman + " walked home.";
    }
    out.push_back(ps);
  }
  return out;
}

// Each marker owns a small content vocabulary; a sentence following the
// marker draws only from it.
inline const std::array<std::vector<std::string>, plotforge::aux::kNumMarkers>& marker_vocab() {
  static const std::array<std::vector<std::string>, plotforge::aux::kNumMarkers> words = {{
      {"apples", "pears", "plums", "grapes"},
      {"rivers", "lakes", "ponds", "streams"},
      {"stones", "rocks", "pebbles", "boulders"},
      {"clouds", "storms", "winds", "rains"},
      {"horses", "mules", "ponies", "donkeys"},
      {"breads", "cakes", "pies", "buns"},
      {"cups", "jars", "bowls", "mugs"},
      {"wolves", "bears", "foxes", "lynxes"},
  }};
  return words;
}

inline std::string marker_word(std::size_t label) {
  return capitalize(std::string(plotforge::aux::kLabelNames[label]));
}

// Sentence pair as mined: s1 is neutral filler, s2 (marker already removed)
// uses only the label's vocabulary.
inline std::vector<plotforge::aux::MarkerPair> separable_pairs(std::size_t per_label, plotforge::Rng& rng) {
  static const std::vector<std::string> fillers = {"The day was long.", "Night fell slowly.", "We waited there.",
                                                   "It was late.", "Nobody spoke."};
  std::vector<plotforge::aux::MarkerPair> out;
  for (std::size_t i = 0; i < per_label; ++i) {
    for (std::size_t c = 0; c < plotforge::aux::kNumMarkers; ++c) {
      const auto& w = marker_vocab()[c];
      plotforge::aux::MarkerPair p;
      p.s1 = pick(fillers, rng);
      p.s2 = "the " + pick(w, rng) + " and the " + pick(w, rng) + " were there.";
      p.label = static_cast<plotforge::aux::Label>(c);
      out.push_back(p);
    }
  }
  return out;
}

// Stories made of a neutral opening followed by marker sentences whose
// content words all come from the marker's vocabulary.
inline std::vector<PromptStory> marker_stories(std::size_t n, plotforge::Rng& rng) {
  static const std::vector<std::string> openings = {"The day was long.", "Night fell slowly.", "We waited there.",
                                                    "It was late.", "Nobody spoke."};
  std::vector<PromptStory> out;
  for (std::size_t i = 0; i < n; ++i) {
    PromptStory ps;
    ps.story = pick(openings, rng);
    std::vector<std::size_t> labels;
    for (int s = 0; s < 3; ++s) {
      const std::size_t c = rng() % plotforge::aux::kNumMarkers;
      labels.push_back(c);
      const auto& w = marker_vocab()[c];
      ps.story += " " + marker_word(c) + " the " + pick(w, rng) + " and the " + pick(w, rng) + " were there.";
    }
    ps.prompt = "A story about " + marker_vocab()[labels[0]][0];
    out.push_back(ps);
  }
  return out;
}

}  // namespace testing

#include "plotforge/coref.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "plotforge/errors.hpp"
#include "plotforge/ops.hpp"

namespace plotforge::aux {

CorefSupervision build_supervision(std::span<const Cluster> clusters, std::size_t seq_len) {
  struct Tagged {
    Span span;
    std::size_t cluster;
  };
  std::vector<Tagged> all;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& m : clusters[c]) {
      if (m.empty() || m.end > seq_len) {
        throw ContractError("coref mention [" + std::to_string(m.begin) + ", " + std::to_string(m.end) +
                            ") is empty or outside a sequence of length " + std::to_string(seq_len));
      }
      all.push_back({m, c});
    }
  }
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.span.begin < b.span.begin; });
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].span.begin < all[i - 1].span.end) {
      throw ContractError("coref mentions [" + std::to_string(all[i - 1].span.begin) + ", " +
                          std::to_string(all[i - 1].span.end) + ") and [" + std::to_string(all[i].span.begin) + ", " +
                          std::to_string(all[i].span.end) + ") overlap");
    }
  }

  CorefSupervision sup;
  sup.seq_len = seq_len;
  std::vector<std::vector<std::size_t>> seen(clusters.size());
  for (const auto& t : all) {
    // Tokens of the same mention are not antecedents of each other.
    const auto earlier = seen[t.cluster];
    for (std::size_t pos = t.span.begin; pos < t.span.end; ++pos) {
      ++sup.mention_tokens;
      if (!earlier.empty()) {
        sup.positions.push_back(pos);
        sup.antecedents.push_back(earlier);
      }
    }
    for (std::size_t pos = t.span.begin; pos < t.span.end; ++pos) seen[t.cluster].push_back(pos);
  }
  return sup;
}

template <class Real>
ad::Tensor<Real> coref_loss(const ad::Tensor<Real>& attention, std::span<const CorefSupervision> sup,
                            CorefNormalizer normalizer) {
  if (attention.rank() != 3 || attention.dim(1) != attention.dim(2) || attention.dim(0) != sup.size()) {
    throw DimensionError("coref_loss: attention " + ad::to_string(attention.shape()) + " does not match " +
                         std::to_string(sup.size()) + " supervision records");
  }
  const std::size_t t = attention.dim(1);
  std::size_t z = 0;
  for (const auto& s : sup) z += normalizer == CorefNormalizer::supervised_tokens ? s.positions.size() : s.mention_tokens;
  std::vector<std::size_t> idx;
  std::vector<Real> w;
  for (std::size_t b = 0; b < sup.size(); ++b) {
    const auto& s = sup[b];
    for (std::size_t j = 0; j < s.positions.size(); ++j) {
      const std::size_t i = s.positions[j];
      if (i >= t) {
        throw ContractError("coref_loss: supervised position " + std::to_string(i) + " outside sequence length " +
                            std::to_string(t));
      }
      const double n_i = static_cast<double>(s.antecedents[j].size());
      for (auto k : s.antecedents[j]) {
        if (k >= i) throw ContractError("coref_loss: antecedent " + std::to_string(k) + " does not precede " + std::to_string(i));
        idx.push_back(b * t * t + i * t + k);
        w.push_back(static_cast<Real>(1.0 / (n_i * static_cast<double>(z))));
      }
    }
  }
  if (idx.empty()) return ad::Tensor<Real>::scalar(Real(0));
  return ad::weighted_neg_log(attention, std::span<const std::size_t>(idx), std::span<const Real>(w));
}

template <class Real>
double antecedent_mass(const ad::Tensor<Real>& attention, std::span<const CorefSupervision> sup) {
  const std::size_t t = attention.dim(1);
  const auto a = attention.data();
  double total = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < sup.size(); ++b) {
    for (std::size_t j = 0; j < sup[b].positions.size(); ++j) {
      const std::size_t i = sup[b].positions[j];
      double mass = 0;
      for (auto k : sup[b].antecedents[j]) mass += static_cast<double>(a[b * t * t + i * t + k]);
      total += mass;
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : std::nan("");
}

namespace {

enum class Gender { male, female, either };

std::optional<Gender> pronoun_gender(const std::string& lower) {
  static const std::set<std::string> male = {"he", "him", "his", "himself"};
  static const std::set<std::string> female = {"she", "her", "hers", "herself"};
  if (male.count(lower)) return Gender::male;
  if (female.count(lower)) return Gender::female;
  return std::nullopt;
}

bool is_pronoun(const std::string& lower) {
  static const std::set<std::string> all = {"he",   "him",     "his",  "himself", "she",  "her",    "hers",
                                            "herself", "it",   "its",  "itself",  "they", "them",   "their",
                                            "theirs", "themselves", "i", "me",    "my",   "mine",   "myself",
                                            "we",   "us",      "our",  "ours",    "you",  "your",   "yours"};
  return all.count(lower) > 0;
}

Gender name_gender(const std::string& lower) {
  const bool m = text::male_names().contains(lower);
  const bool f = text::female_names().contains(lower);
  if (m && !f) return Gender::male;
  if (f && !m) return Gender::female;
  return Gender::either;
}

bool compatible(Gender name, Gender pronoun) { return name == Gender::either || name == pronoun; }

bool capitalized(std::string_view s) { return !s.empty() && s[0] >= 'A' && s[0] <= 'Z'; }

}  // namespace

std::vector<Cluster> heuristic_coref(std::string_view story, std::span<const Span> sentences) {
  struct Tok {
    text::Word word;
    std::string surface;
    std::size_t sentence;
    bool initial;
  };
  std::vector<Tok> toks;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    bool first = true;
    for (auto& w : text::scan_words(story, sentences[s])) {
      std::string surface(story.substr(w.chars.begin, w.chars.size()));
      toks.push_back({std::move(w), std::move(surface), s, first});
      first = false;
    }
  }
  auto name_candidate = [](const Tok& t) {
    return capitalized(t.surface) && !text::english_stopwords().contains(t.word.lower) && !is_pronoun(t.word.lower);
  };
  std::set<std::string> mid_sentence_caps;
  for (const auto& t : toks) {
    if (!t.initial && name_candidate(t)) mid_sentence_caps.insert(t.surface);
  }

  std::map<std::string, std::size_t> cluster_of;  // surface -> cluster index
  std::vector<Cluster> clusters;
  struct NameMention {
    std::size_t cluster;
    std::size_t sentence;
    Gender gender;
  };
  std::vector<NameMention> names;  // in text order
  for (const auto& t : toks) {
    if (name_candidate(t)) {
      const bool known = text::male_names().contains(t.word.lower) || text::female_names().contains(t.word.lower);
      if (t.initial && !known && !mid_sentence_caps.count(t.surface)) continue;
      auto [it, inserted] = cluster_of.emplace(t.surface, clusters.size());
      if (inserted) clusters.emplace_back();
      clusters[it->second].push_back(t.word.chars);
      names.push_back({it->second, t.sentence, name_gender(t.word.lower)});
      continue;
    }
    const auto g = pronoun_gender(t.word.lower);
    if (!g) continue;
    for (auto n = names.rbegin(); n != names.rend(); ++n) {
      if (t.sentence - n->sentence > 2) break;
      if (compatible(n->gender, *g)) {
        clusters[n->cluster].push_back(t.word.chars);
        break;
      }
    }
  }
  std::vector<Cluster> out;
  for (auto& c : clusters) {
    if (c.size() >= 2) out.push_back(std::move(c));
  }
  return out;
}

std::vector<Cluster> heuristic_coref(std::string_view story) {
  const auto sents = text::split_sentences(story);
  return heuristic_coref(story, sents);
}

std::vector<Cluster> char_to_token_clusters(std::span<const Cluster> clusters, std::span<const Span> token_offsets) {
  struct Item {
    Span tokens;
    std::size_t cluster;
    std::size_t order;
  };
  std::vector<Item> items;
  std::size_t order = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& m : clusters[c]) {
      // First token ending after the mention start, last token starting before its end.
      auto first = std::find_if(token_offsets.begin(), token_offsets.end(),
                                [&](const Span& t) { return t.end > m.begin; });
      std::size_t b = static_cast<std::size_t>(first - token_offsets.begin());
      std::size_t e = b;
      while (e < token_offsets.size() && token_offsets[e].begin < m.end) ++e;
      if (e > b) items.push_back({Span{b, e}, c, order});
      ++order;
    }
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.tokens.begin != b.tokens.begin ? a.tokens.begin < b.tokens.begin : a.order < b.order;
  });
  std::vector<Cluster> out(clusters.size());
  std::size_t last_end = 0;
  for (const auto& it : items) {
    if (it.tokens.begin < last_end) continue;
    out[it.cluster].push_back(it.tokens);
    last_end = it.tokens.end;
  }
  std::vector<Cluster> kept;
  for (auto& c : out) {
    if (c.size() >= 2) kept.push_back(std::move(c));
  }
  return kept;
}

template ad::Tensor<float> coref_loss(const ad::Tensor<float>&, std::span<const CorefSupervision>, CorefNormalizer);
template ad::Tensor<double> coref_loss(const ad::Tensor<double>&, std::span<const CorefSupervision>, CorefNormalizer);
template double antecedent_mass(const ad::Tensor<float>&, std::span<const CorefSupervision>);
template double antecedent_mass(const ad::Tensor<double>&, std::span<const CorefSupervision>);

}  // namespace plotforge::aux

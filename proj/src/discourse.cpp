#include "plotforge/discourse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "plotforge/errors.hpp"
#include "plotforge/logging.hpp"
#include "plotforge/ops.hpp"
#include "plotforge/text.hpp"

namespace plotforge::aux {

std::string_view label_name(Label label) { return kLabelNames.at(static_cast<std::size_t>(label)); }

Label parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<Label>(i);
  }
  throw ValidationError("unknown discourse label '" + std::string(name) + "'");
}

std::optional<MarkerMatch> match_marker(std::string_view sentence) {
  for (std::size_t i = 0; i < kNumMarkers; ++i) {
    const auto marker = kLabelNames[i];
    if (sentence.size() <= marker.size()) continue;
    if (text::to_lower_ascii(sentence.substr(0, marker.size())) != marker) continue;
    const char next = sentence[marker.size()];
    if (next != ' ' && next != ',') continue;
    std::size_t strip = marker.size();
    while (strip < sentence.size() && (sentence[strip] == ' ' || sentence[strip] == ',')) ++strip;
    return MarkerMatch{static_cast<Label>(i), strip};
  }
  return std::nullopt;
}

std::vector<std::string> story_sentences(std::string_view story) {
  std::vector<std::string> out;
  for (const auto& span : text::split_sentences(story)) out.emplace_back(text::sentence_text(story, span));
  return out;
}

std::vector<MarkerPair> mine_marker_pairs(std::span<const std::string> stories) {
  std::vector<MarkerPair> out;
  for (const auto& story : stories) {
    const auto sents = story_sentences(story);
    for (std::size_t i = 0; i + 1 < sents.size(); ++i) {
      const auto m = match_marker(sents[i + 1]);
      if (!m) continue;
      auto rest = sents[i + 1].substr(m->strip);
      if (rest.empty()) continue;
      out.push_back(MarkerPair{sents[i], std::move(rest), m->label});
    }
  }
  return out;
}

namespace {

template <class Real>
ad::Tensor<Real> make_param(ad::ParameterList<Real>& params, const std::string& name, ad::Shape shape, Rng* rng,
                            double init_std, double fill = 0.0) {
  std::vector<Real> values(ad::numel(shape), static_cast<Real>(fill));
  if (rng) {
    std::normal_distribution<double> normal(0.0, init_std);
    for (auto& v : values) v = static_cast<Real>(normal(*rng));
  }
  ad::Tensor<Real> t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  params.push_back({name, t});
  return t;
}

}  // namespace

template <class Real>
DiscourseHead<Real>::DiscourseHead(std::size_t d_model, std::size_t d_hidden, std::uint64_t seed, double init_std)
    : d_model_(d_model), d_hidden_(d_hidden) {
  if (d_model == 0 || d_hidden == 0) throw ContractError("discourse head: dimensions must be positive");
  Rng rng = make_rng(seed, "discourse-head");
  wf_ = make_param(params_, "head.wf", {2 * d_model, d_hidden}, &rng, init_std);
  bf_ = make_param<Real>(params_, "head.bf", {d_hidden}, nullptr, 0);
  wo_ = make_param(params_, "head.wo", {d_hidden, kNumMarkers}, &rng, init_std);
  bo_ = make_param<Real>(params_, "head.bo", {kNumMarkers}, nullptr, 0);
}

template <class Real>
ad::Tensor<Real> DiscourseHead<Real>::logits(const ad::Tensor<Real>& left, const ad::Tensor<Real>& right) const {
  const auto f = ad::tanh(ad::add_bias(ad::matmul(ad::concat_cols(left, right), wf_), bf_));
  return ad::add_bias(ad::matmul(f, wo_), bo_);
}

template <class Real>
ad::Tensor<Real> sentence_repr(const ad::Tensor<Real>& hidden, Span span) {
  const Span spans[] = {span};
  return ad::max_pool_rows(hidden, std::span<const Span>(spans));
}

template <class Real>
ad::Tensor<Real> discourse_loss(const DiscourseHead<Real>& head, const ad::Tensor<Real>& left,
                                const ad::Tensor<Real>& right, std::span<const Label> labels) {
  if (left.rank() != 2 || right.rank() != 2 || left.dim(0) != labels.size() || right.dim(0) != labels.size()) {
    throw DimensionError("discourse_loss: " + std::to_string(labels.size()) + " labels for representations " +
                         ad::to_string(left.shape()) + " and " + ad::to_string(right.shape()));
  }
  if (labels.empty()) return ad::Tensor<Real>::scalar(Real(0));
  std::vector<TokenId> targets(labels.size());
  std::vector<Real> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool known = labels[i] != Label::unknown;
    targets[i] = known ? static_cast<TokenId>(labels[i]) : 0;
    mask[i] = known ? Real(1) : Real(0);
  }
  return ad::cross_entropy_masked(head.logits(left, right), std::span<const TokenId>(targets), std::span<const Real>(mask));
}

lm::ModelConfig TaggerConfig::tagger_model() {
  lm::ModelConfig m;
  m.n_layers = 2;
  m.n_heads = 2;
  m.d_model = 64;
  m.d_ff = 128;
  m.max_positions = 128;
  m.dropout = 0.1;
  return m;
}

DiscourseTagger::DiscourseTagger(TaggerConfig config, text::Tokenizer tokenizer)
    : config_(std::move(config)),
      tokenizer_(std::move(tokenizer)),
      encoder_(
          [&] {
            auto m = config_.model;
            m.vocab_size = tokenizer_.vocab_size();
            if (m.max_positions < 2 * config_.max_side_tokens + 1) m.max_positions = 2 * config_.max_side_tokens + 1;
            config_.model = m;
            return m;
          }(),
          derive_seed(config_.seed, "tagger-init")) {
  params_ = encoder_.parameters();
  Rng rng = make_rng(config_.seed, "tagger-head");
  const auto d = config_.model.d_model;
  w1_ = make_param(params_, "head.w1", {d, config_.d_hidden}, &rng, config_.model.init_std);
  b1_ = make_param<float>(params_, "head.b1", {config_.d_hidden}, nullptr, 0);
  w2_ = make_param(params_, "head.w2", {config_.d_hidden, kNumMarkers}, &rng, config_.model.init_std);
  b2_ = make_param<float>(params_, "head.b2", {kNumMarkers}, nullptr, 0);
}

std::vector<TokenId> DiscourseTagger::encode_pair(std::string_view s1, std::string_view s2) const {
  auto a = tokenizer_.encode(s1);
  auto b = tokenizer_.encode(s2);
  // Keep the end of s1 and the start of s2, the parts next to the boundary.
  if (a.size() > config_.max_side_tokens) a.erase(a.begin(), a.end() - static_cast<std::ptrdiff_t>(config_.max_side_tokens));
  if (b.size() > config_.max_side_tokens) b.resize(config_.max_side_tokens);
  std::vector<TokenId> ids = std::move(a);
  ids.push_back(text::kSep);
  ids.insert(ids.end(), b.begin(), b.end());
  return ids;
}

ad::Tensor<float> DiscourseTagger::batch_logits(const std::vector<std::vector<TokenId>>& seqs, bool train,
                                                Rng* rng) const {
  std::size_t len = 0;
  for (const auto& s : seqs) len = std::max(len, s.size());
  std::vector<TokenId> flat(seqs.size() * len, text::kPad);
  std::vector<Span> spans;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::copy(seqs[b].begin(), seqs[b].end(), flat.begin() + static_cast<std::ptrdiff_t>(b * len));
    spans.push_back(Span{b * len, b * len + seqs[b].size()});
  }
  const auto out = encoder_.forward(flat, seqs.size(), train, rng, lm::LogitRows::none);
  const auto pooled = ad::max_pool_rows(out.hidden, std::span<const Span>(spans));
  const auto h = ad::tanh(ad::add_bias(ad::matmul(pooled, w1_), b1_));
  return ad::add_bias(ad::matmul(h, w2_), b2_);
}

DiscourseTagger DiscourseTagger::train(std::span<const MarkerPair> pairs, const text::Tokenizer& tokenizer,
                                       TaggerConfig config, TaggerTrainLog* log) {
  if (pairs.empty()) throw TrainingError("discourse tagger: no marker pairs to train on");
  if (config.batch_size == 0) throw ContractError("discourse tagger: batch_size must be >= 1");
  std::vector<MarkerPair> usable;
  for (const auto& p : pairs) {
    if (p.label != Label::unknown) usable.push_back(p);
  }
  if (usable.empty()) throw TrainingError("discourse tagger: every pair is labelled unknown");

  TaggerTrainLog local;
  TaggerTrainLog& lg = log ? *log : local;
  for (const auto& p : usable) ++lg.class_counts[static_cast<std::size_t>(p.label)];
  for (std::size_t c = 0; c < kNumMarkers; ++c) {
    if (lg.class_counts[c] == 0) {
      lg.missing_classes = true;
      logging::warn("discourse tagger: no training pairs for marker '{}'", kLabelNames[c]);
    }
  }

  DiscourseTagger tagger(config, tokenizer);
  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(usable.size());
  for (const auto& p : usable) encoded.push_back(tagger.encode_pair(p.s1, p.s2));

  ad::Adam<float> adam(tagger.params_, ad::AdamConfig{config.lr});
  Rng order_rng = make_rng(config.seed, "tagger-batches");
  Rng dropout_rng = make_rng(config.seed, "tagger-dropout");
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto& tape = ad::Tape<float>::active();
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::vector<TokenId>> batch;
    std::vector<TokenId> targets;
    while (batch.size() < config.batch_size && batch.size() < usable.size()) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(encoded[order[cursor]]);
      targets.push_back(static_cast<TokenId>(usable[order[cursor]].label));
      ++cursor;
    }
    ad::zero_grads(tagger.params_);
    const auto logits = tagger.batch_logits(batch, true, &dropout_rng);
    const std::vector<float> mask(batch.size(), 1.0f);
    const auto loss = ad::cross_entropy_masked(logits, std::span<const TokenId>(targets), std::span<const float>(mask));
    ad::backward(loss);
    adam.step();
    tape.clear();
    lg.losses.push_back(loss.item());
    logging::debug("tagger step {} loss {:.4f}", step, loss.item());
  }
  return tagger;
}

std::vector<LabelProbs> DiscourseTagger::predict_batch(std::span<const std::pair<std::string, std::string>> pairs) const {
  std::vector<LabelProbs> out;
  out.reserve(pairs.size());
  ad::NoGradGuard<float> guard;
  constexpr std::size_t chunk = 32;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = start; i < std::min(pairs.size(), start + chunk); ++i) {
      seqs.push_back(encode_pair(pairs[i].first, pairs[i].second));
    }
    const auto logits = batch_logits(seqs, false, nullptr);
    const auto v = logits.data();
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      LabelProbs p{};
      double mx = -INFINITY, z = 0;
      for (std::size_t c = 0; c < kNumMarkers; ++c) mx = std::max(mx, static_cast<double>(v[r * kNumMarkers + c]));
      for (std::size_t c = 0; c < kNumMarkers; ++c) {
        p[c] = std::exp(static_cast<double>(v[r * kNumMarkers + c]) - mx);
        z += p[c];
      }
      for (auto& x : p) x /= z;
      out.push_back(p);
    }
  }
  return out;
}

LabelProbs DiscourseTagger::predict(std::string_view s1, std::string_view s2) const {
  const std::pair<std::string, std::string> one[] = {{std::string(s1), std::string(s2)}};
  return predict_batch(one).front();
}

std::vector<Label> tag_story_pairs(const DiscourseTagger& tagger, std::span<const std::string> sentences, double tau) {
  std::vector<Label> out;
  if (sentences.size() < 2) return out;
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i + 1 < sentences.size(); ++i) pairs.emplace_back(sentences[i], sentences[i + 1]);
  for (const auto& p : tagger.predict_batch(pairs)) {
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    out.push_back(p[best] >= tau ? static_cast<Label>(best) : Label::unknown);
  }
  return out;
}

template class DiscourseHead<float>;
template class DiscourseHead<double>;
template ad::Tensor<float> sentence_repr(const ad::Tensor<float>&, Span);
template ad::Tensor<double> sentence_repr(const ad::Tensor<double>&, Span);
template ad::Tensor<float> discourse_loss(const DiscourseHead<float>&, const ad::Tensor<float>&,
                                          const ad::Tensor<float>&, std::span<const Label>);
template ad::Tensor<double> discourse_loss(const DiscourseHead<double>&, const ad::Tensor<double>&,
                                           const ad::Tensor<double>&, std::span<const Label>);

}  // namespace plotforge::aux

#include "plotforge/examples.hpp"

#include <algorithm>

#include "plotforge/errors.hpp"
#include "plotforge/text.hpp"

namespace plotforge::train {

std::vector<Span> sentence_token_spans(std::string_view story, const text::Tokenizer::Encoding& enc) {
  const auto sents = text::split_sentences(story);
  std::vector<Span> out(sents.size(), Span{0, 0});
  std::size_t s = 0;
  for (std::size_t t = 0; t < enc.offsets.size(); ++t) {
    while (s + 1 < sents.size() && enc.offsets[t].begin >= sents[s + 1].begin) ++s;
    if (out[s].empty()) out[s] = Span{t, t + 1};
    else out[s].end = t + 1;
  }
  return out;
}

StoryAnnotations resolve_annotations(std::string_view story, const text::Tokenizer& tokenizer,
                                     const data::Annotations& given, const aux::DiscourseTagger* tagger, double tau) {
  StoryAnnotations out;
  if (given.coref_clusters) {
    out.clusters = *given.coref_clusters;
  } else {
    const auto enc = tokenizer.encode_with_offsets(story);
    const auto chars = aux::heuristic_coref(story);
    out.clusters = aux::char_to_token_clusters(chars, enc.offsets);
  }
  const auto n_sent = text::split_sentences(story).size();
  if (given.discourse_labels) {
    out.labels = *given.discourse_labels;
  } else if (tagger) {
    out.labels = aux::tag_story_pairs(*tagger, aux::story_sentences(story), tau);
  } else {
    out.labels.assign(n_sent > 0 ? n_sent - 1 : 0, aux::Label::unknown);
  }
  return out;
}

std::vector<TokenId> stage1_context(const std::vector<TokenId>& prompt) {
  auto ids = prompt;
  ids.push_back(text::kSep);
  return ids;
}

std::vector<TokenId> stage2_context(const std::vector<TokenId>& prompt, const std::vector<TokenId>& outline) {
  auto ids = prompt;
  ids.push_back(text::kStart);
  ids.insert(ids.end(), outline.begin(), outline.end());
  ids.push_back(text::kSep);
  return ids;
}

namespace {

void skip(std::string* reason, std::string msg) {
  if (reason) *reason = std::move(msg);
}

}  // namespace

std::optional<Stage1Example> build_stage1_example(const outline::StoryTriple& triple, const text::Tokenizer& tokenizer,
                                                  std::size_t max_positions, std::string* skip_reason) {
  const auto prompt = tokenizer.encode(triple.prompt);
  auto outline = tokenizer.encode(triple.outline);
  if (prompt.empty() || outline.empty()) {
    skip(skip_reason, "empty prompt or outline after tokenization");
    return std::nullopt;
  }
  if (prompt.size() + 2 > max_positions) {
    skip(skip_reason, "prompt of " + std::to_string(prompt.size()) + " tokens exceeds max_positions " +
                          std::to_string(max_positions));
    return std::nullopt;
  }
  const std::size_t room = max_positions - prompt.size() - 1;
  const bool complete = outline.size() + 1 <= room;
  if (!complete) outline.resize(room);

  Sequence ex;
  ex.ids = stage1_context(prompt);
  ex.prompt = Span{0, prompt.size()};
  ex.outline = Span{ex.ids.size(), ex.ids.size() + outline.size()};
  ex.ids.insert(ex.ids.end(), outline.begin(), outline.end());
  if (complete) ex.ids.push_back(text::kEos);
  ex.story = Span{ex.ids.size(), ex.ids.size()};
  ex.mask.assign(ex.ids.size(), 1.0f);
  ex.mask.back() = 0.0f;
  return ex;
}

std::optional<Stage2Example> build_stage2_example(const outline::StoryTriple& triple, const text::Tokenizer& tokenizer,
                                                  const StoryAnnotations& annotations, std::size_t max_positions,
                                                  const std::string& record, std::string* skip_reason) {
  const auto prompt = tokenizer.encode(triple.prompt);
  const auto outline = tokenizer.encode(triple.outline);
  const auto enc = tokenizer.encode_with_offsets(triple.story);
  if (prompt.empty() || outline.empty() || enc.ids.empty()) {
    skip(skip_reason, "empty prompt, outline or story after tokenization");
    return std::nullopt;
  }
  const std::size_t n_story = enc.ids.size();
  for (const auto& c : annotations.clusters) {
    for (const auto& m : c) {
      if (m.empty() || m.end > n_story) {
        throw ContractError(record + ": coref span [" + std::to_string(m.begin) + ", " + std::to_string(m.end) +
                            ") outside the story's " + std::to_string(n_story) + " tokens");
      }
    }
  }
  auto sentences = sentence_token_spans(triple.story, enc);
  const std::size_t expected = sentences.empty() ? 0 : sentences.size() - 1;
  if (annotations.labels.size() != expected) {
    throw ContractError(record + ": " + std::to_string(annotations.labels.size()) + " discourse labels for " +
                        std::to_string(sentences.size()) + " sentences");
  }

  const std::size_t head = prompt.size() + outline.size() + 2;
  if (head + 1 >= max_positions) {
    skip(skip_reason, "prompt and outline (" + std::to_string(head) + " tokens) leave no room in max_positions " +
                          std::to_string(max_positions));
    return std::nullopt;
  }
  const std::size_t room = max_positions - head;
  const bool complete = n_story + 1 <= room;
  const std::size_t kept = complete ? n_story : room;

  Sequence ex;
  ex.ids = stage2_context(prompt, outline);
  ex.prompt = Span{0, prompt.size()};
  ex.outline = Span{prompt.size() + 1, prompt.size() + 1 + outline.size()};
  ex.story = Span{head, head + kept};
  ex.ids.insert(ex.ids.end(), enc.ids.begin(), enc.ids.begin() + static_cast<std::ptrdiff_t>(kept));
  if (complete) ex.ids.push_back(text::kEos);

  ex.mask.assign(ex.ids.size(), 0.0f);
  for (std::size_t t = 0; t + 1 < ex.ids.size(); ++t) {
    const std::size_t p = t + 1;
    const bool scored = p < ex.prompt.end || (p >= ex.story.begin && p < ex.story.end) ||
                        (complete && p == ex.ids.size() - 1);
    ex.mask[t] = scored ? 1.0f : 0.0f;
  }

  // Sentences: drop empty ones and those past the cut, clip the last.
  std::vector<int> keep_index(sentences.size(), -1);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto sp = sentences[s];
    if (sp.empty() || sp.begin >= kept) continue;
    keep_index[s] = static_cast<int>(ex.sentences.size());
    ex.sentences.push_back(Span{head + sp.begin, head + std::min(sp.end, kept)});
  }
  for (std::size_t s = 0; s + 1 < sentences.size(); ++s) {
    if (keep_index[s] >= 0 && keep_index[s + 1] == keep_index[s] + 1) ex.labels.push_back(annotations.labels[s]);
  }
  if (ex.labels.size() + 1 != ex.sentences.size() && !ex.sentences.empty()) {
    // A dropped sentence in the middle breaks adjacency; fall back to unknown.
    ex.labels.assign(ex.sentences.size() - 1, aux::Label::unknown);
  }

  for (const auto& c : annotations.clusters) {
    aux::Cluster moved;
    for (const auto& m : c) {
      if (m.end <= kept) moved.push_back(Span{head + m.begin, head + m.end});
    }
    if (moved.size() >= 2) ex.clusters.push_back(std::move(moved));
  }
  return ex;
}

}  // namespace plotforge::train

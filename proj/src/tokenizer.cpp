#include "plotforge/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "plotforge/errors.hpp"
#include "plotforge/text.hpp"

namespace plotforge::text {

namespace {

std::uint64_t pair_key(TokenId l, TokenId r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) | static_cast<std::uint32_t>(r);
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

TokenId special_at(std::string_view text, std::size_t pos) {
  if (text[pos] != '<') return -1;
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (text.substr(pos, kReservedLiterals[i].size()) == kReservedLiterals[i]) return static_cast<TokenId>(i);
  }
  return -1;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto lit : kReservedLiterals) add(std::string(lit));
}

TokenId Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

TokenId Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of range [0, " + std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string_view> code_points(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    if (i + len > text.size()) len = 1;
    for (std::size_t c = 1; c < len; ++c) {
      if ((static_cast<unsigned char>(text[i + c]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<Segment> segment_text(std::string_view text) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const TokenId special = special_at(text, i);
    if (special >= 0) {
      const auto len = kReservedLiterals[static_cast<std::size_t>(special)].size();
      out.push_back(Segment{text.substr(i, len), i, true});
      i += len;
      continue;
    }
    if (text[i] != ' ' && is_space(text[i])) {
      out.push_back(Segment{text.substr(i, 1), i, false});
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && !is_space(text[j]) && special_at(text, j) < 0) ++j;
    out.push_back(Segment{text.substr(i, j - i), i, false});
    i = j;
  }
  return out;
}

std::pair<Vocabulary, MergeTable> train_bpe(std::span<const std::string> corpus, std::size_t vocab_size) {
  std::map<std::string, long> segment_counts;
  for (const auto& doc : corpus) {
    for (const auto& seg : segment_text(doc)) {
      if (!seg.special) segment_counts[std::string(seg.text)] += 1;
    }
  }
  if (segment_counts.empty()) throw TrainingError("train_bpe: empty corpus");

  std::set<std::string> alphabet;
  for (const auto& [seg, count] : segment_counts) {
    for (auto cp : code_points(seg)) alphabet.insert(std::string(cp));
  }
  Vocabulary vocab;
  if (vocab_size < kNumReserved + alphabet.size()) {
    throw TrainingError("train_bpe: vocab_size " + std::to_string(vocab_size) + " is smaller than " +
                        std::to_string(kNumReserved) + " reserved + " + std::to_string(alphabet.size()) +
                        " base symbols");
  }
  for (const auto& s : alphabet) vocab.add(s);

  struct Word {
    std::vector<TokenId> symbols;
    long count;
  };
  std::vector<Word> words;
  for (const auto& [seg, count] : segment_counts) {
    Word w{{}, count};
    for (auto cp : code_points(seg)) w.symbols.push_back(vocab.find(cp));
    words.push_back(std::move(w));
  }

  struct Candidate {
    long count;
    TokenId left;
    TokenId right;
  };
  struct ByPriority {
    const Vocabulary* vocab;
    bool operator()(const Candidate& a, const Candidate& b) const {
      if (a.count != b.count) return a.count > b.count;
      const auto& al = vocab->token(a.left);
      const auto& bl = vocab->token(b.left);
      if (al != bl) return al < bl;
      return vocab->token(a.right) < vocab->token(b.right);
    }
  };
  std::set<Candidate, ByPriority> queue(ByPriority{&vocab});
  std::unordered_map<std::uint64_t, long> counts;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> where;

  auto bump = [&](TokenId l, TokenId r, long delta) {
    const auto key = pair_key(l, r);
    auto it = counts.find(key);
    const long old = it == counts.end() ? 0 : it->second;
    if (old > 0) queue.erase(Candidate{old, l, r});
    const long now = old + delta;
    if (now > 0) {
      counts[key] = now;
      queue.insert(Candidate{now, l, r});
    } else if (it != counts.end()) {
      counts.erase(it);
    }
  };

  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    const auto& s = words[wi].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      bump(s[i], s[i + 1], words[wi].count);
      where[pair_key(s[i], s[i + 1])].push_back(wi);
    }
  }

  MergeTable merges;
  std::vector<std::size_t> seen(words.size(), 0);
  std::size_t stamp = 0;
  while (vocab.size() < vocab_size && !queue.empty()) {
    const Candidate best = *queue.begin();
    if (best.count < 2) break;
    const std::string merged_text = vocab.token(best.left) + vocab.token(best.right);
    const TokenId merged = vocab.add(merged_text);
    merges.push_back(Merge{vocab.token(best.left), vocab.token(best.right)});

    ++stamp;
    const auto key = pair_key(best.left, best.right);
    auto affected = std::move(where[key]);
    where.erase(key);
    for (auto wi : affected) {
      if (seen[wi] == stamp) continue;
      seen[wi] = stamp;
      auto& w = words[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        if (w.symbols[i] == best.left && w.symbols[i + 1] == best.right) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) bump(w.symbols[i], w.symbols[i + 1], -w.count);
      std::vector<TokenId> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size();) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == best.left && w.symbols[i + 1] == best.right) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(w.symbols[i]);
          i += 1;
        }
      }
      w.symbols = std::move(next);
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        bump(w.symbols[i], w.symbols[i + 1], w.count);
        where[pair_key(w.symbols[i], w.symbols[i + 1])].push_back(wi);
      }
    }
  }
  return {std::move(vocab), std::move(merges)};
}

Tokenizer::Tokenizer() = default;

Tokenizer::Tokenizer(Vocabulary vocab, MergeTable merges) : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  index_merges();
}

Tokenizer Tokenizer::train(std::span<const std::string> corpus, std::size_t vocab_size) {
  auto [vocab, merges] = train_bpe(corpus, vocab_size);
  return Tokenizer(std::move(vocab), std::move(merges));
}

void Tokenizer::index_merges() {
  merge_rank_.clear();
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& m = merges_[rank];
    const TokenId l = vocab_.find(m.left);
    const TokenId r = vocab_.find(m.right);
    const TokenId out = vocab_.find(m.left + m.right);
    if (l < 0 || r < 0 || out < 0) {
      throw LoadError("merge " + std::to_string(rank) + " ('" + m.left + "', '" + m.right +
                      "') refers to tokens missing from the vocabulary");
    }
    if (!merge_rank_.emplace(pair_key(l, r), std::make_pair(rank, out)).second) {
      throw LoadError("duplicate merge ('" + m.left + "', '" + m.right + "')");
    }
  }
}

void Tokenizer::encode_segment(std::string_view seg, std::size_t offset, Encoding& out) const {
  std::vector<TokenId> ids;
  std::vector<Span> spans;
  std::size_t pos = offset;
  for (auto cp : code_points(seg)) {
    const TokenId id = vocab_.find(cp);
    ids.push_back(id < 0 ? kUnk : id);
    spans.push_back(Span{pos, pos + cp.size()});
    pos += cp.size();
  }
  while (ids.size() > 1) {
    std::size_t best_rank = merges_.size();
    TokenId best_l = -1;
    TokenId best_r = -1;
    TokenId best_out = -1;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_rank_.find(pair_key(ids[i], ids[i + 1]));
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_l = ids[i];
        best_r = ids[i + 1];
        best_out = it->second.second;
      }
    }
    if (best_out < 0) break;
    std::vector<TokenId> next_ids;
    std::vector<Span> next_spans;
    for (std::size_t i = 0; i < ids.size();) {
      if (i + 1 < ids.size() && ids[i] == best_l && ids[i + 1] == best_r) {
        next_ids.push_back(best_out);
        next_spans.push_back(Span{spans[i].begin, spans[i + 1].end});
        i += 2;
      } else {
        next_ids.push_back(ids[i]);
        next_spans.push_back(spans[i]);
        i += 1;
      }
    }
    ids = std::move(next_ids);
    spans = std::move(next_spans);
  }
  out.ids.insert(out.ids.end(), ids.begin(), ids.end());
  out.offsets.insert(out.offsets.end(), spans.begin(), spans.end());
}

Tokenizer::Encoding Tokenizer::encode_with_offsets(std::string_view text) const {
  Encoding out;
  for (const auto& seg : segment_text(text)) {
    if (seg.special) {
      out.ids.push_back(vocab_.find(seg.text));
      out.offsets.push_back(Span{seg.offset, seg.offset + seg.text.size()});
    } else {
      encode_segment(seg.text, seg.offset, out);
    }
  }
  return out;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const { return encode_with_offsets(text).ids; }

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) out += vocab_.token(id);
  return out;
}

std::string escape_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case ' ': out += "\\s"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_token(std::string_view field) {
  std::string out;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\') {
      out += field[i];
      continue;
    }
    if (i + 1 >= field.size()) throw LoadError("dangling escape in token field '" + std::string(field) + "'");
    switch (field[++i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 's': out += ' '; break;
      default: throw LoadError("unknown escape in token field '" + std::string(field) + "'");
    }
  }
  return out;
}

void Tokenizer::write_vocab(std::ostream& out) const {
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    out << escape_token(vocab_.token(static_cast<TokenId>(id))) << '\t' << id << '\n';
  }
}

void Tokenizer::write_merges(std::ostream& out) const {
  for (const auto& m : merges_) out << escape_token(m.left) << ' ' << escape_token(m.right) << '\n';
}

Tokenizer Tokenizer::read(std::istream& vocab_in, std::istream& merges_in) {
  Vocabulary vocab;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(vocab_in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw LoadError("vocabulary line without TAB: '" + line + "'");
    const auto token = unescape_token(std::string_view(line).substr(0, tab));
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw LoadError("vocabulary line with bad id: '" + line + "'");
    }
    if (id != expected) throw LoadError("vocabulary ids must be contiguous; expected " + std::to_string(expected));
    if (id < kNumReserved) {
      if (token != kReservedLiterals[id]) throw LoadError("reserved id " + std::to_string(id) + " must be " +
                                                          std::string(kReservedLiterals[id]));
    } else if (vocab.add(token) != static_cast<TokenId>(id)) {
      throw LoadError("duplicate vocabulary token '" + token + "'");
    }
    ++expected;
  }
  MergeTable merges;
  while (std::getline(merges_in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
      throw LoadError("merges line must be 'left right': '" + line + "'");
    }
    merges.push_back(Merge{unescape_token(std::string_view(line).substr(0, sp)),
                           unescape_token(std::string_view(line).substr(sp + 1))});
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

void Tokenizer::save(const std::string& vocab_path, const std::string& merges_path) const {
  std::ofstream v(vocab_path, std::ios::binary);
  std::ofstream m(merges_path, std::ios::binary);
  if (!v || !m) throw Error("io", "cannot write tokenizer files " + vocab_path + ", " + merges_path);
  write_vocab(v);
  write_merges(m);
}

Tokenizer Tokenizer::load(const std::string& vocab_path, const std::string& merges_path) {
  std::ifstream v(vocab_path, std::ios::binary);
  std::ifstream m(merges_path, std::ios::binary);
  if (!v) throw LoadError("cannot open vocabulary file " + vocab_path);
  if (!m) throw LoadError("cannot open merges file " + merges_path);
  return read(v, m);
}

}  // namespace plotforge::text

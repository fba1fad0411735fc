#pragma once

// Byte-pair-encoding tokenizer over Unicode code points.
//
// Text is pre-segmented before merging: every ' ' starts a new segment and
// stays attached to the characters after it ("a big dog" -> "a", " big",
// " dog"); any other whitespace character is a segment of its own; the
// literal markers <PAD> <UNK> <S> <SEP> <EOS> are cut out and map straight to
// the reserved ids 0..4. Merges never cross a segment boundary, so
// decode(encode(s)) == s for any s whose characters were seen in training.
// Characters outside the trained alphabet encode to <UNK>.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plotforge/types.hpp"

namespace plotforge::text {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kStart = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kEos = 4;
inline constexpr std::size_t kNumReserved = 5;
inline constexpr std::array<std::string_view, kNumReserved> kReservedLiterals = {"<PAD>", "<UNK>", "<S>", "<SEP>",
                                                                                 "<EOS>"};

class Vocabulary {
 public:
  // Starts with the five reserved tokens.
  Vocabulary();

  // Returns the existing id when the token is already present.
  TokenId add(const std::string& token);
  // -1 when absent.
  TokenId find(std::string_view token) const;
  // Throws IndexError for ids outside [0, size()).
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct Merge {
  std::string left;
  std::string right;
  friend bool operator==(const Merge&, const Merge&) = default;
};

// Priority is the list index.
using MergeTable = std::vector<Merge>;

// Greedy BPE: repeatedly merge the most frequent adjacent pair (ties broken by
// the lexicographically smallest (left, right)) until the vocabulary holds
// vocab_size tokens or no pair occurs at least twice. Throws TrainingError on
// an empty corpus or when vocab_size cannot hold the reserved tokens plus the
// base alphabet.
std::pair<Vocabulary, MergeTable> train_bpe(std::span<const std::string> corpus, std::size_t vocab_size);

// Pre-segmentation used by both training and encoding. Reserved markers come
// back as their literal text with `special` set.
struct Segment {
  std::string_view text;
  std::size_t offset = 0;
  bool special = false;
};
std::vector<Segment> segment_text(std::string_view text);

// Splits UTF-8 into code points; an invalid byte is its own symbol.
std::vector<std::string_view> code_points(std::string_view text);

class Tokenizer {
 public:
  Tokenizer();
  Tokenizer(Vocabulary vocab, MergeTable merges);

  static Tokenizer train(std::span<const std::string> corpus, std::size_t vocab_size);

  struct Encoding {
    std::vector<TokenId> ids;
    std::vector<Span> offsets;  // byte range of each token in the input
  };

  std::vector<TokenId> encode(std::string_view text) const;
  Encoding encode_with_offsets(std::string_view text) const;
  // Concatenation of token strings; reserved ids render as their markers.
  std::string decode(std::span<const TokenId> ids) const;

  const Vocabulary& vocab() const { return vocab_; }
  const MergeTable& merges() const { return merges_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  // Vocabulary file: "token<TAB>id" per line. Merges file: "left right" per
  // line in priority order. Inside tokens, backslash, tab, newline, carriage
  // return and space are written as \\ \t \n \r \s.
  void write_vocab(std::ostream& out) const;
  void write_merges(std::ostream& out) const;
  static Tokenizer read(std::istream& vocab_in, std::istream& merges_in);
  void save(const std::string& vocab_path, const std::string& merges_path) const;
  static Tokenizer load(const std::string& vocab_path, const std::string& merges_path);

 private:
  void index_merges();
  void encode_segment(std::string_view seg, std::size_t offset, Encoding& out) const;

  Vocabulary vocab_;
  MergeTable merges_;
  // (left id, right id) -> (rank, merged id)
  std::unordered_map<std::uint64_t, std::pair<std::size_t, TokenId>> merge_rank_;
};

std::string escape_token(std::string_view token);
std::string unescape_token(std::string_view field);

}  // namespace plotforge::text

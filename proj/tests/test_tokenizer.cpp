#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <random>
#include <sstream>

#include "plotforge/errors.hpp"
#include "plotforge/tokenizer.hpp"

using namespace plotforge;
using namespace plotforge::text;

namespace {

// Straightforward BPE: recount every adjacent pair from scratch each round.
std::vector<Merge> naive_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size, std::size_t* final_vocab) {
  std::vector<std::vector<std::string>> words;
  std::set<std::string> vocab;
  for (const auto& doc : corpus) {
    for (const auto& seg : segment_text(doc)) {
      if (seg.special) continue;
      std::vector<std::string> w;
      for (auto cp : code_points(seg.text)) {
        w.emplace_back(cp);
        vocab.insert(std::string(cp));
      }
      words.push_back(std::move(w));
    }
  }
  std::vector<Merge> merges;
  while (vocab.size() + kNumReserved < vocab_size) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    std::pair<std::string, std::string> best;
    long best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c > best_count) {  // map order makes the first maximum the smallest pair
        best = p;
        best_count = c;
      }
    }
    if (best_count < 2) break;
    merges.push_back({best.first, best.second});
    vocab.insert(best.first + best.second);
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size();) {
        if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          i += 2;
        } else {
          next.push_back(w[i++]);
        }
      }
      w = std::move(next);
    }
  }
  *final_vocab = vocab.size() + kNumReserved;
  return merges;
}

std::string random_text(std::mt19937_64& rng, std::size_t words) {
  static const char* syll[] = {"ka", "lo", "mi", "to", "ra", "ne", "su", "a", "o", "aa"};
  std::uniform_int_distribution<int> s(0, 9), len(1, 3), punct(0, 6);
  std::string out;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out += ' ';
    for (int i = len(rng); i > 0; --i) out += syll[s(rng)];
    if (punct(rng) == 0) out += '.';
  }
  return out;
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("segmentation keeps the space with the following word") {
    std::vector<std::string> got;
    for (const auto& s : segment_text("a big  dog\n<SEP>x")) got.emplace_back(s.text);
    CHECK(got == std::vector<std::string>{"a", " big", " ", " dog", "\n", "<SEP>", "x"});
  }

  TEST_CASE("training matches a from-scratch merge simulator") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> corpus;
      for (int d = 0; d < 5; ++d) corpus.push_back(random_text(rng, 30));
      const std::size_t target = 20 + static_cast<std::size_t>(trial) * 5;
      std::size_t oracle_vocab = 0;
      const auto expected = naive_bpe(corpus, target, &oracle_vocab);
      const auto [vocab, merges] = train_bpe(corpus, target);
      CHECK(merges == expected);
      CHECK(vocab.size() == oracle_vocab);
    }
  }

  TEST_CASE("vocabulary size bounds") {
    const std::vector<std::string> corpus = {"abab abab"};
    CHECK_THROWS_AS(train_bpe(corpus, kNumReserved + 2), TrainingError);  // alphabet {a, b, ' '}
    const auto [vocab, merges] = train_bpe(corpus, kNumReserved + 3);
    CHECK(merges.empty());
    CHECK(vocab.size() == kNumReserved + 3);
    CHECK_THROWS_AS(train_bpe(std::vector<std::string>{}, 100), TrainingError);
  }

  TEST_CASE("reserved ids are fixed") {
    const auto tok = Tokenizer::train(std::vector<std::string>{"hello world"}, 50);
    for (std::size_t i = 0; i < kNumReserved; ++i) CHECK(tok.vocab().token(static_cast<TokenId>(i)) == kReservedLiterals[i]);
    CHECK(tok.encode("he<SEP>lo<EOS>") ==
          std::vector<TokenId>{tok.vocab().find("h"), tok.vocab().find("e"), kSep, tok.vocab().find("l"),
                               tok.vocab().find("o"), kEos});
  }

  TEST_CASE("encode/decode round trip and unknown characters") {
    std::mt19937_64 rng(5);
    std::vector<std::string> corpus;
    for (int d = 0; d < 10; ++d) corpus.push_back(random_text(rng, 40));
    const auto tok = Tokenizer::train(corpus, 120);
    for (const auto& doc : corpus) CHECK(tok.decode(tok.encode(doc)) == doc);
    const auto ids = tok.encode("ka Z");
    CHECK(std::find(ids.begin(), ids.end(), kUnk) != ids.end());
  }

  TEST_CASE("offsets cover the input") {
    const std::vector<std::string> corpus = {"the cat sat on the mat. the cat ran."};
    const auto tok = Tokenizer::train(corpus, 40);
    const std::string s = "the cat ran.";
    const auto enc = tok.encode_with_offsets(s);
    REQUIRE(enc.ids.size() == enc.offsets.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < enc.ids.size(); ++i) {
      CHECK(enc.offsets[i].begin == pos);
      CHECK(s.substr(enc.offsets[i].begin, enc.offsets[i].size()) == tok.vocab().token(enc.ids[i]));
      pos = enc.offsets[i].end;
    }
    CHECK(pos == s.size());
  }

  TEST_CASE("files round trip, including awkward characters") {
    const std::vector<std::string> corpus = {"a\\b \\t\ttab\r\n new  line a\\b \\t\ttab"};
    const auto tok = Tokenizer::train(corpus, 60);
    std::stringstream v, m;
    tok.write_vocab(v);
    tok.write_merges(m);
    const auto back = Tokenizer::read(v, m);
    CHECK(back.vocab() == tok.vocab());
    CHECK(back.merges() == tok.merges());
    CHECK(back.encode(corpus[0]) == tok.encode(corpus[0]));
    CHECK(unescape_token(escape_token(" \\\t\n\r")) == " \\\t\n\r");
  }

  TEST_CASE("corrupt vocabulary files are rejected") {
    std::stringstream v("<PAD>\t0\n<UNK>\t1\n<S>\t2\n<SEP>\t3\n<EOS>\t4\na\t6\n"), m("");
    CHECK_THROWS_AS(Tokenizer::read(v, m), LoadError);
  }
}

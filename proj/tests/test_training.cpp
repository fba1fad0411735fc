#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plotforge/checkpoint.hpp"
#include "plotforge/config.hpp"
#include "plotforge/corpus.hpp"
#include "plotforge/errors.hpp"
#include "plotforge/examples.hpp"
#include "plotforge/trainer.hpp"
#include "support.hpp"

using namespace plotforge;
using namespace plotforge::train;

namespace {

struct ToyData {
  text::Tokenizer tok;
  std::vector<outline::StoryTriple> triples;
  std::vector<Sequence> stage1;
  std::vector<Sequence> stage2;
};

ToyData toy_data(std::size_t n, std::uint64_t seed = 1, std::size_t max_pos = 64) {
  Rng rng(seed);
  ToyData d;
  d.triples = testing::toy_triples(n, rng);
  d.tok = text::Tokenizer::train(testing::triple_texts(d.triples), 90);
  for (std::size_t i = 0; i < d.triples.size(); ++i) {
    const auto& t = d.triples[i];
    d.stage1.push_back(*build_stage1_example(t, d.tok, max_pos));
    auto ann = resolve_annotations(t.story, d.tok, {}, nullptr, 0.7);
    // Plant a known label on the first pair so the discourse loss is active.
    if (!ann.labels.empty()) ann.labels[0] = aux::Label::and_;
    d.stage2.push_back(*build_stage2_example(t, d.tok, ann, max_pos, "record " + std::to_string(i)));
  }
  return d;
}

lm::ModelConfig toy_model(const ToyData& d) {
  auto m = testing::tiny_model(d.tok.vocab_size());
  m.max_positions = 64;
  m.d_model = 16;
  m.d_ff = 32;
  return m;
}

TrainingConfig toy_config(const std::string& stage) {
  TrainingConfig c;
  c.stage = stage;
  c.batch_size = 4;
  c.lr = 0.003;
  c.dropout = 0.1;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("plotforge_test_" + name)).string();
}

}  // namespace

TEST_SUITE("examples") {
  TEST_CASE("stage-1 layout and mask") {
    const auto d = toy_data(5);
    for (std::size_t i = 0; i < d.stage1.size(); ++i) {
      const auto& ex = d.stage1[i];
      CHECK(std::count(ex.ids.begin(), ex.ids.end(), text::kSep) == 1);
      CHECK(ex.ids.back() == text::kEos);
      CHECK(ex.mask.size() == ex.ids.size());
      CHECK(std::count(ex.mask.begin(), ex.mask.end(), 0.0f) == 1);
      CHECK(d.tok.decode(ex.ids) == d.triples[i].prompt + "<SEP>" + d.triples[i].outline + "<EOS>");
    }
  }

  TEST_CASE("stage-2 layout masks the outline and separators") {
    const auto d = toy_data(5);
    for (std::size_t i = 0; i < d.stage2.size(); ++i) {
      const auto& ex = d.stage2[i];
      const auto& t = d.triples[i];
      CHECK(d.tok.decode(ex.ids) == t.prompt + "<S>" + t.outline + "<SEP>" + t.story + "<EOS>");
      CHECK(ex.ids[ex.prompt.end] == text::kStart);
      CHECK(ex.ids[ex.outline.end] == text::kSep);
      for (std::size_t p = 1; p < ex.ids.size(); ++p) {
        const bool expect = p < ex.prompt.end || p >= ex.story.begin;
        CHECK(ex.mask[p - 1] == (expect ? 1.0f : 0.0f));
      }
      CHECK(ex.mask.back() == 0.0f);
      CHECK(ex.labels.size() + 1 == ex.sentences.size());
      for (const auto& s : ex.sentences) CHECK((s.begin >= ex.story.begin && s.end <= ex.story.end));
      for (const auto& c : ex.clusters) {
        for (const auto& m : c) CHECK((m.begin >= ex.story.begin && m.end <= ex.story.end));
      }
    }
  }

  TEST_CASE("story truncation drops the end marker") {
    const auto d = toy_data(1);
    const auto& t = d.triples[0];
    auto ann = resolve_annotations(t.story, d.tok, {}, nullptr, 0.7);
    const std::size_t head = d.tok.encode(t.prompt).size() + d.tok.encode(t.outline).size() + 2;
    const auto ex = build_stage2_example(t, d.tok, ann, head + 3, "r");
    REQUIRE(ex);
    CHECK(ex->ids.size() == head + 3);
    CHECK(ex->ids.back() != text::kEos);
    CHECK(ex->story.size() == 3);
    std::string reason;
    CHECK_FALSE(build_stage2_example(t, d.tok, ann, head, "r", &reason));
    CHECK_FALSE(reason.empty());
    CHECK_FALSE(build_stage1_example(t, d.tok, 2, &reason));
  }

  TEST_CASE("bad annotations name the record") {
    const auto d = toy_data(1);
    const auto& t = d.triples[0];
    StoryAnnotations ann;
    ann.labels.assign(2, aux::Label::unknown);
    ann.clusters = {{{0, 1}, {1000, 1001}}};
    CHECK_THROWS_WITH_AS(build_stage2_example(t, d.tok, ann, 64, "line 7"), doctest::Contains("line 7"),
                         ContractError);
    ann.clusters.clear();
    ann.labels.assign(5, aux::Label::unknown);
    CHECK_THROWS_AS(build_stage2_example(t, d.tok, ann, 64, "line 7"), ContractError);
  }

  TEST_CASE("given annotations win over the heuristic") {
    const auto d = toy_data(1);
    data::Annotations given;
    given.coref_clusters = std::vector<aux::Cluster>{};
    given.discourse_labels = std::vector<aux::Label>{aux::Label::so, aux::Label::if_};
    const auto ann = resolve_annotations(d.triples[0].story, d.tok, given, nullptr, 0.7);
    CHECK(ann.clusters.empty());
    CHECK(ann.labels == *given.discourse_labels);
    const auto fallback = resolve_annotations(d.triples[0].story, d.tok, {}, nullptr, 0.7);
    CHECK_FALSE(fallback.clusters.empty());
    CHECK(fallback.labels == std::vector<aux::Label>(2, aux::Label::unknown));
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("collate pads right and masks padding") {
    const auto d = toy_data(3);
    const std::vector<std::size_t> idx = {0, 1, 2};
    const auto b = collate(d.stage2, idx);
    for (std::size_t r = 0; r < 3; ++r) {
      const auto& s = d.stage2[r];
      for (std::size_t t = 0; t < b.seq; ++t) {
        if (t >= s.ids.size()) {
          CHECK(b.ids[r * b.seq + t] == text::kPad);
          CHECK(b.mask[r * b.seq + t] == 0.0f);
        } else if (t + 1 < s.ids.size()) {
          CHECK(b.targets[r * b.seq + t] == s.ids[t + 1]);
        }
      }
    }
  }

  TEST_CASE("outline targets get exactly zero logit gradient") {
    const auto d = toy_data(6);
    auto m = toy_model(d);
    lm::TransformerLM<float> model(m, 3);
    aux::DiscourseHead<float> head(m.d_model, m.d_model, 3);
    const std::vector<std::size_t> idx = {0, 1, 2, 3};
    const auto b = collate(d.stage2, idx);
    auto cfg = toy_config("story");
    cfg.dropout = 0;
    const auto g = batch_loss<float>(model, &head, b, cfg, false, nullptr);
    REQUIRE(g.dis.defined());
    REQUIRE(g.coref.defined());
    ad::backward(g.joint.total);
    const auto grad = g.out.logits.grad();
    const std::size_t v = m.vocab_size;
    for (std::size_t r = 0; r < b.size; ++r) {
      for (std::size_t t = 0; t < b.seq; ++t) {
        const auto row = grad.subspan((r * b.seq + t) * v, v);
        const bool any = std::any_of(row.begin(), row.end(), [](float x) { return x != 0.0f; });
        CHECK(any == (b.mask[r * b.seq + t] > 0));
      }
    }
    ad::Tape<float>::active().clear();
  }

  TEST_CASE("logged total equals the weighted parts") {
    const auto d = toy_data(8);
    Trainer tr(toy_model(d), toy_config("story"), d.stage2);
    tr.run(10, [](const StepReport& r) {
      CHECK(r.loss.total == doctest::Approx(r.loss.lm + 0.1 * r.loss.dis + 0.3 * r.loss.coref).epsilon(1e-12));
      CHECK(r.loss.coref > 0);
      CHECK(r.loss.dis > 0);
    });
  }

  TEST_CASE("initial loss is near ln V") {
    const auto d = toy_data(8);
    auto m = toy_model(d);
    m.init_std = 0.002;
    Trainer tr(m, toy_config("outline"), d.stage1);
    const auto r = tr.step();
    CHECK(r.loss.lm == doctest::Approx(std::log(static_cast<double>(d.tok.vocab_size()))).epsilon(0.1));
  }

  TEST_CASE("same seed reproduces the loss sequence") {
    const auto d = toy_data(8);
    auto losses = [&](std::uint64_t seed) {
      auto cfg = toy_config("story");
      cfg.seed = seed;
      Trainer tr(toy_model(d), cfg, d.stage2);
      std::vector<double> out;
      tr.run(100, [&](const StepReport& r) { out.push_back(r.loss.total); });
      return out;
    };
    const auto a = losses(5);
    CHECK(a == losses(5));
    CHECK(a != losses(6));
    CHECK(a.back() < a.front());
  }

  TEST_CASE("zero auxiliary weights reduce to plain LM training") {
    const auto d = toy_data(8);
    auto story = toy_config("story");
    story.lambda1 = 0;
    story.lambda2 = 0;
    Trainer a(toy_model(d), story, d.stage2);
    Trainer b(toy_model(d), toy_config("outline"), d.stage2);
    for (int i = 0; i < 30; ++i) CHECK(a.step().loss.total == b.step().loss.total);
  }

  TEST_CASE("resume continues the exact trajectory") {
    const auto d = toy_data(8);
    Trainer full(toy_model(d), toy_config("story"), d.stage2);
    full.run(15);
    std::vector<double> expected;
    full.run(20, [&](const StepReport& r) { expected.push_back(r.loss.total); });

    Trainer first(toy_model(d), toy_config("story"), d.stage2);
    first.run(15);
    const auto path = temp_path("resume.ckpt");
    save_checkpoint(path, first.to_checkpoint("", ""));
    auto resumed = Trainer::from_checkpoint(load_checkpoint(path), d.stage2);
    CHECK(resumed.steps_done() == 15);
    std::vector<double> got;
    resumed.run(20, [&](const StepReport& r) { got.push_back(r.loss.total); });
    CHECK(got == expected);
    std::filesystem::remove(path);
  }

  TEST_CASE("empty or oversized data is rejected") {
    const auto d = toy_data(2);
    CHECK_THROWS_AS(Trainer(toy_model(d), toy_config("story"), {}), TrainingError);
    auto small = toy_model(d);
    small.max_positions = 8;
    CHECK_THROWS_AS(Trainer(small, toy_config("story"), d.stage2), TrainingError);
  }

  TEST_CASE("schedule is a pure function of seed and step") {
    const auto d = toy_data(10);
    BatchSchedule a(d.stage2, 3, 4), b(d.stage2, 3, 4);
    std::vector<std::vector<std::size_t>> seen;
    for (std::uint64_t s = 0; s < 12; ++s) {
      const auto x = a.at(s);
      seen.emplace_back(x.begin(), x.end());
    }
    for (std::uint64_t s = 12; s-- > 0;) {
      const auto y = b.at(s);
      CHECK(std::vector<std::size_t>(y.begin(), y.end()) == seen[s]);
    }
    // Each epoch covers every example once.
    std::vector<int> hits(10, 0);
    for (std::uint64_t s = 0; s < a.batches_per_epoch(); ++s) {
      for (auto i : a.at(s)) ++hits[i];
    }
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load, save is byte-identical and forward is unchanged") {
    const auto d = toy_data(6);
    Trainer tr(toy_model(d), toy_config("story"), d.stage2);
    tr.run(5);
    const auto path = temp_path("a.ckpt");
    const auto path2 = temp_path("b.ckpt");
    const auto ckpt = tr.to_checkpoint("", "");
    save_checkpoint(path, ckpt);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded == ckpt);
    save_checkpoint(path2, loaded);
    std::ifstream fa(path, std::ios::binary), fb(path2, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {}), bb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ba == bb);

    const auto m = load_model(loaded);
    REQUIRE(m.head);
    ad::NoGradGuard<float> guard;
    for (const auto& ex : d.stage2) {
      const auto x = tr.model().forward(ex.ids);
      const auto y = m.model->forward(ex.ids);
      CHECK(std::memcmp(x.logits.data().data(), y.logits.data().data(), x.logits.size() * sizeof(float)) == 0);
    }
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
  }

  TEST_CASE("corrupt files are rejected") {
    const auto d = toy_data(2);
    Trainer tr(toy_model(d), toy_config("outline"), d.stage1);
    std::ostringstream out;
    write_checkpoint(out, tr.to_checkpoint("", ""));
    const std::string bytes = out.str();
    auto read = [](const std::string& b) {
      std::istringstream in(b);
      return read_checkpoint(in);
    };
    CHECK_NOTHROW(read(bytes));
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(read(bad), LoadError);
    std::string version = bytes;
    version[5] = 9;
    CHECK_THROWS_AS(read(version), LoadError);
    CHECK_THROWS_AS(read(bytes.substr(0, bytes.size() / 2)), LoadError);
    CHECK_THROWS_AS(read(bytes + "x"), LoadError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), LoadError);
  }

  TEST_CASE("parameter restore checks names and shapes") {
    const auto d = toy_data(2);
    Trainer tr(toy_model(d), toy_config("outline"), d.stage1);
    auto stored = store_parameters(tr.parameters());
    stored[0].name = "renamed";
    CHECK_THROWS_AS(restore_parameters(stored, tr.parameters()), LoadError);
    stored = store_parameters(tr.parameters());
    stored[1].shape = {1};
    CHECK_THROWS_AS(restore_parameters(stored, tr.parameters()), LoadError);
  }

  TEST_CASE("restored RNG state gives the same next draw") {
    const auto d = toy_data(4);
    Trainer tr(toy_model(d), toy_config("outline"), d.stage1);
    tr.run(3);
    auto copy = tr.dropout_rng();
    auto restored = Trainer::from_checkpoint(tr.to_checkpoint("", ""), d.stage1).dropout_rng();
    CHECK(copy() == restored());
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const TrainingConfig c;
    CHECK(c.lr == 0.0005);
    CHECK(c.dropout == 0.3);
    CHECK(c.lambda1 == 0.1);
    CHECK(c.lambda2 == 0.3);
    CHECK(c.tau == 0.7);
  }

  TEST_CASE("key-value round trip") {
    TrainingConfig c;
    c.lr = 0.1 + 0.2;
    c.stage = "outline";
    c.seed = 42;
    CHECK(TrainingConfig::from_key_values(c.to_key_values()) == c);
    const auto m = testing::tiny_model(77);
    CHECK(model_from_key_values(model_to_key_values(m)) == m);
    const auto kv = parse_key_values("# comment\n\nlr = 0.01\nseed=3\n");
    CHECK(kv.at("lr") == "0.01");
    CHECK(parse_key_values(format_key_values(kv)) == kv);
  }

  TEST_CASE("bad input is rejected with the field name") {
    TrainingConfig c;
    CHECK_THROWS_WITH_AS(c.set("lr", "fast"), doctest::Contains("lr"), ValidationError);
    CHECK_THROWS_AS(c.set("learning_rate", "1"), ValidationError);
    CHECK_THROWS_AS(parse_key_values("lr 0.1"), ValidationError);
    c.batch_size = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("batch_size"), ValidationError);
    c = TrainingConfig{};
    c.stage = "poem";
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(parse_uint("steps", "-3"), ValidationError);
    CHECK(parse_bool("bm25", "true"));
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("strict and lenient reading") {
    const auto path = temp_path("corpus.jsonl");
    {
      std::ofstream out(path);
      out << R"({"prompt": "P1", "story": "S one."})" << "\n";
      out << "not json\n";
      out << R"({"prompt": "P2", "story": "S two.", "coref_clusters": [[[0, 1], [2, 3]]], "discourse_labels": ["but"]})"
          << "\n";
      out << R"({"prompt": "P3"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(data::read_corpus(path), doctest::Contains(":2:"), ValidationError);
    data::ReadReport report;
    const auto recs = data::read_corpus(path, true, &report);
    REQUIRE(recs.size() == 2);
    CHECK(report.skipped == 2);
    CHECK(recs[1].line == 3);
    REQUIRE(recs[1].annotations.coref_clusters);
    CHECK((*recs[1].annotations.coref_clusters)[0][1] == Span{2, 3});
    CHECK((*recs[1].annotations.discourse_labels)[0] == aux::Label::but);
    CHECK_FALSE(recs[0].annotations.coref_clusters);
    std::filesystem::remove(path);
  }

  TEST_CASE("triples, sidecars and pairs round-trip") {
    const auto tp = temp_path("triples.jsonl"), sp = temp_path("sidecar.jsonl"), pp = temp_path("pairs.jsonl");
    const std::vector<outline::StoryTriple> triples = {{"p \"q\"", "o\n2", "s é"}};
    data::write_triples(tp, triples);
    const auto t = data::read_triples(tp);
    REQUIRE(t.size() == 1);
    CHECK((t[0].prompt == triples[0].prompt && t[0].outline == triples[0].outline && t[0].story == triples[0].story));

    std::vector<data::Annotations> side(2);
    side[0].coref_clusters = std::vector<aux::Cluster>{{{1, 2}, {4, 6}}};
    side[0].discourse_labels = std::vector<aux::Label>{aux::Label::unknown, aux::Label::when};
    data::write_sidecar(sp, side);
    const auto s = data::read_sidecar(sp);
    REQUIRE(s.size() == 2);
    CHECK(*s[0].coref_clusters == *side[0].coref_clusters);
    CHECK(*s[0].discourse_labels == *side[0].discourse_labels);
    CHECK_FALSE(s[1].discourse_labels);

    const std::vector<aux::MarkerPair> pairs = {{"a.", "b.", aux::Label::though}};
    data::write_pairs(pp, pairs);
    const auto p = data::read_pairs(pp);
    REQUIRE(p.size() == 1);
    CHECK(p[0].label == aux::Label::though);
    for (const auto& f : {tp, sp, pp}) std::filesystem::remove(f);
  }

  TEST_CASE("story lines accept plain text and JSON") {
    const auto path = temp_path("stories.txt");
    {
      std::ofstream out(path);
      out << "plain story.\n\n" << R"({"story": "json story."})" << "\n";
    }
    CHECK(data::read_story_lines(path) == std::vector<std::string>{"plain story.", "json story."});
    std::filesystem::remove(path);
  }
}

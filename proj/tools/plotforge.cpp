// plotforge command-line tool.
//
//   prepare        corpus JSONL -> triples, tokenizer, marker pairs, coref sidecar, stats
//   train-tagger   discourse tagger from mined marker pairs
//   train-outline  stage-1 model: prompt -> outline
//   train-story    stage-2 model: prompt + outline -> story, with auxiliary losses
//   generate       two-stage sampling, optionally forcing a gold outline prefix
//   evaluate       metrics report for a file of stories
//   attention-map  story-to-outline attention as CSV

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plotforge/checkpoint.hpp"
#include "plotforge/config.hpp"
#include "plotforge/corpus.hpp"
#include "plotforge/discourse.hpp"
#include "plotforge/errors.hpp"
#include "plotforge/examples.hpp"
#include "plotforge/logging.hpp"
#include "plotforge/metrics.hpp"
#include "plotforge/outline.hpp"
#include "plotforge/pipeline.hpp"
#include "plotforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace plotforge;
using nlohmann::json;

namespace {

// Flag errors detected after CLI11 parsing but before any file I/O.
class FlagError : public Error {
 public:
  explicit FlagError(const std::string& message) : Error("flag", message) {}
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

// Paths written by prepare inside a data directory.
struct DataDir {
  fs::path root;
  fs::path triples() const { return root / "triples.jsonl"; }
  fs::path pairs() const { return root / "pairs.jsonl"; }
  fs::path sidecar() const { return root / "sidecar.jsonl"; }
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path merges() const { return root / "merges.txt"; }
  fs::path stats() const { return root / "stats.json"; }
};

text::Tokenizer tokenizer_for(const train::Checkpoint& ckpt, const std::string& vocab, const std::string& merges) {
  const auto v = vocab.empty() ? ckpt.vocab_path : vocab;
  const auto m = merges.empty() ? ckpt.merges_path : merges;
  if (v.empty() || m.empty()) throw LoadError("checkpoint names no tokenizer; pass --vocab and --merges");
  return text::Tokenizer::load(v, m);
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string corpus;
  std::string out;
  std::string mode = "abstract";
  std::size_t n_keywords = 10;
  double ratio = 0.3;
  std::size_t vocab_size = 8000;
  bool lenient = false;
};

void add_prepare(CLI::App& app, PrepareArgs& a, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("prepare", "Build (prompt, outline, story) triples and annotations from a corpus");
  cmd->add_option("--corpus", a.corpus, "Corpus JSONL with prompt and story fields")->required();
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--mode", a.mode, "Outline extractor: keyword or abstract");
  cmd->add_option("--n-keywords", a.n_keywords, "Keywords per story in keyword mode");
  cmd->add_option("--ratio", a.ratio, "Share of sentences kept in abstract mode");
  cmd->add_option("--vocab-size", a.vocab_size, "BPE vocabulary size");
  cmd->add_flag("--lenient", a.lenient, "Skip malformed records instead of failing");
  cmd->callback([&] {
    run = [&a] {
      outline::OutlineConfig ocfg;
      ocfg.mode = outline::parse_mode(a.mode);
      ocfg.n_keywords = a.n_keywords;
      ocfg.abstract_ratio = a.ratio;
      ocfg.validate();

      data::ReadReport report;
      const auto records = data::read_corpus(a.corpus, a.lenient, &report);
      for (const auto& m : report.messages) logging::warn("skipped {}", m);

      std::vector<outline::StoryTriple> triples;
      std::vector<const data::CorpusRecord*> kept;
      std::size_t no_outline = 0;
      for (const auto& r : records) {
        try {
          triples.push_back(outline::build_triple(r.prompt, r.story, ocfg));
          kept.push_back(&r);
        } catch (const ValidationError& e) {
          if (!a.lenient) throw ValidationError(a.corpus + ":" + std::to_string(r.line) + ": " + e.what());
          logging::warn("skipped {}:{}: {}", a.corpus, r.line, e.what());
          ++no_outline;
        }
      }
      if (triples.empty()) throw ValidationError(a.corpus + ": no usable records");

      std::vector<std::string> texts;
      for (const auto& t : triples) {
        texts.push_back(t.prompt);
        texts.push_back(t.outline);
        texts.push_back(t.story);
      }
      const auto tok = text::Tokenizer::train(texts, a.vocab_size);

      std::vector<data::Annotations> sidecar;
      std::size_t ingested = 0, chains = 0;
      for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& given = kept[i]->annotations;
        const auto& story = triples[i].story;
        data::Annotations ann;
        if (given.coref_clusters) {
          // Drop mentions that fell past the word cut.
          const auto n_tokens = tok.encode(story).size();
          std::vector<aux::Cluster> clusters;
          for (const auto& c : *given.coref_clusters) {
            aux::Cluster kept_mentions;
            for (const auto& m : c) {
              if (m.end <= n_tokens) kept_mentions.push_back(m);
            }
            if (kept_mentions.size() >= 2) clusters.push_back(std::move(kept_mentions));
          }
          ann.coref_clusters = std::move(clusters);
          ++ingested;
        } else {
          const auto enc = tok.encode_with_offsets(story);
          ann.coref_clusters = aux::char_to_token_clusters(aux::heuristic_coref(story), enc.offsets);
        }
        chains += ann.coref_clusters->size();
        if (given.discourse_labels) {
          const auto n_sent = text::split_sentences(story).size();
          auto labels = *given.discourse_labels;
          labels.resize(std::min(labels.size(), n_sent > 0 ? n_sent - 1 : 0));
          ann.discourse_labels = std::move(labels);
        }
        sidecar.push_back(std::move(ann));
      }

      std::vector<std::string> stories;
      for (const auto& t : triples) stories.push_back(t.story);
      const auto pairs = aux::mine_marker_pairs(stories);
      std::map<std::string, std::size_t> label_counts;
      for (std::size_t c = 0; c < aux::kNumMarkers; ++c) label_counts[std::string(aux::kLabelNames[c])] = 0;
      for (const auto& p : pairs) ++label_counts[std::string(aux::label_name(p.label))];

      std::size_t outline_words = 0;
      for (const auto& t : triples) outline_words += text::scan_words(t.outline).size();

      const DataDir dir{a.out};
      fs::create_directories(dir.root);
      data::write_triples(dir.triples().string(), triples);
      data::write_sidecar(dir.sidecar().string(), sidecar);
      data::write_pairs(dir.pairs().string(), pairs);
      tok.save(dir.vocab().string(), dir.merges().string());

      json stats;
      stats["records_read"] = records.size() + report.skipped;
      stats["records_skipped"] = report.skipped + no_outline;
      stats["triples"] = triples.size();
      stats["mode"] = std::string(outline::mode_name(ocfg.mode));
      stats["mean_outline_words"] = static_cast<double>(outline_words) / static_cast<double>(triples.size());
      stats["vocab_size"] = tok.vocab_size();
      stats["marker_pairs"] = pairs.size();
      stats["marker_counts"] = label_counts;
      stats["ingested_coref"] = ingested;
      stats["mean_coref_chains"] = static_cast<double>(chains) / static_cast<double>(triples.size());
      write_text(dir.stats(), stats.dump(2) + "\n");
      logging::info("prepared {} triples and {} marker pairs in {}", triples.size(), pairs.size(), a.out);
    };
  });
}

// ---------------------------------------------------------------- train-tagger

struct TaggerArgs {
  std::string data;
  std::string out;
  aux::TaggerConfig cfg;
};

void add_train_tagger(CLI::App& app, TaggerArgs& a, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("train-tagger", "Train the discourse marker tagger on mined pairs");
  cmd->add_option("--data", a.data, "Directory written by prepare")->required();
  cmd->add_option("--out", a.out, "Checkpoint to write")->required();
  cmd->add_option("--steps", a.cfg.steps, "Optimizer steps");
  cmd->add_option("--batch-size", a.cfg.batch_size, "Pairs per batch");
  cmd->add_option("--lr", a.cfg.lr, "Adam learning rate");
  cmd->add_option("--seed", a.cfg.seed, "Random seed");
  cmd->add_option("--d-hidden", a.cfg.d_hidden, "Classifier hidden width");
  cmd->add_option("--max-side-tokens", a.cfg.max_side_tokens, "Token budget per sentence");
  cmd->callback([&] {
    run = [&a] {
      const DataDir dir{a.data};
      const auto tok = text::Tokenizer::load(dir.vocab().string(), dir.merges().string());
      const auto pairs = data::read_pairs(dir.pairs().string());
      aux::TaggerTrainLog log;
      const auto tagger = aux::DiscourseTagger::train(pairs, tok, a.cfg, &log);
      if (log.missing_classes) logging::warn("some marker classes have no training pairs");
      if (!log.losses.empty()) {
        logging::info("tagger trained on {} pairs, final loss {:.4f}", pairs.size(), log.losses.back());
      }
      train::save_checkpoint(a.out, train::tagger_to_checkpoint(tagger, dir.vocab().string(), dir.merges().string()));
    };
  });
}

// ---------------------------------------------------------------- train-outline / train-story

struct TrainArgs {
  std::string stage;
  std::string data;
  std::string out;
  std::string config;
  std::string resume;
  std::string valid;
  std::string tagger;
  std::map<std::string, std::string> training;  // flags given on the command line
  std::map<std::string, std::string> model;
};

void add_train(CLI::App& app, const std::string& stage, TrainArgs& a, std::function<void()>& run) {
  const bool story = stage == "story";
  auto* cmd = app.add_subcommand("train-" + stage, story ? "Train the stage-2 story model"
                                                         : "Train the stage-1 outline model");
  a.stage = stage;
  cmd->add_option("--data", a.data, "Directory written by prepare")->required();
  cmd->add_option("--out", a.out, "Checkpoint to write")->required();
  cmd->add_option("--config", a.config, "key=value training config file; flags override it");
  cmd->add_option("--resume", a.resume, "Continue from a checkpoint of the same stage");
  cmd->add_option("--valid", a.valid, "Held-out triples JSONL scored every eval-interval steps");
  if (story) cmd->add_option("--tagger", a.tagger, "Tagger checkpoint labelling pairs the sidecar leaves open");

  const train::TrainingConfig defaults;
  for (const auto& [key, value] : defaults.to_key_values()) {
    if (key == "stage") continue;
    if (!story && (key == "lambda1" || key == "lambda2" || key == "tau" || key == "coref_normalizer")) continue;
    cmd->add_option_function<std::string>(
           flag_name(key), [&a, key = key](const std::string& v) { a.training[key] = v; }, "Training config " + key)
        ->default_str(value);
  }
  for (const auto& [key, value] : train::model_to_key_values(lm::ModelConfig{})) {
    if (key == "vocab_size" || key == "dropout") continue;  // dropout comes from the training config
    cmd->add_option_function<std::string>(
           flag_name(key), [&a, key = key](const std::string& v) { a.model[key] = v; }, "Model config " + key)
        ->default_str(value);
  }

  cmd->callback([&] {
    run = [&a] {
      train::TrainingConfig cfg = a.config.empty() ? train::TrainingConfig{} : train::load_training_config(a.config);
      for (const auto& [k, v] : a.training) cfg.set(k, v);
      cfg.stage = a.stage;
      cfg.validate();

      const DataDir dir{a.data};
      const auto tok = text::Tokenizer::load(dir.vocab().string(), dir.merges().string());
      lm::ModelConfig model;
      for (const auto& [k, v] : a.model) train::set_model_field(model, k, v);
      model.vocab_size = tok.vocab_size();
      model.validate();

      std::optional<aux::DiscourseTagger> tagger;
      if (!a.tagger.empty()) {
        const auto ckpt = train::load_checkpoint(a.tagger);
        tagger.emplace(train::tagger_from_checkpoint(ckpt, tok));
      }

      auto build = [&](const std::vector<outline::StoryTriple>& triples, const std::vector<data::Annotations>* side,
                       const std::string& source) {
        std::vector<train::Sequence> out;
        std::size_t skipped = 0;
        for (std::size_t i = 0; i < triples.size(); ++i) {
          const std::string record = source + ":" + std::to_string(i + 1);
          std::string reason;
          std::optional<train::Sequence> ex;
          if (a.stage == "outline") {
            ex = train::build_stage1_example(triples[i], tok, model.max_positions, &reason);
          } else {
            const data::Annotations given = side ? (*side)[i] : data::Annotations{};
            const auto ann = train::resolve_annotations(triples[i].story, tok, given,
                                                        tagger ? &*tagger : nullptr, cfg.tau);
            ex = train::build_stage2_example(triples[i], tok, ann, model.max_positions, record, &reason);
          }
          if (ex) {
            out.push_back(std::move(*ex));
          } else {
            logging::debug("skipped {}: {}", record, reason);
            ++skipped;
          }
        }
        if (skipped) logging::warn("{}: {} of {} triples did not fit max_positions", source, skipped, triples.size());
        return out;
      };

      const auto triples = data::read_triples(dir.triples().string());
      std::vector<data::Annotations> sidecar;
      if (a.stage == "story" && fs::exists(dir.sidecar())) {
        sidecar = data::read_sidecar(dir.sidecar().string());
        if (sidecar.size() != triples.size()) {
          throw ValidationError(dir.sidecar().string() + ": " + std::to_string(sidecar.size()) + " lines for " +
                                std::to_string(triples.size()) + " triples");
        }
      }
      if (a.stage == "story" && cfg.lambda1 > 0 && !tagger) {
        const bool labelled = !sidecar.empty() && std::all_of(sidecar.begin(), sidecar.end(), [](const auto& s) {
          return s.discourse_labels.has_value();
        });
        if (!labelled) logging::warn("no tagger given: unlabelled sentence pairs are unknown and carry no loss");
      }
      auto data = build(triples, sidecar.empty() ? nullptr : &sidecar, dir.triples().string());
      std::vector<train::Sequence> valid;
      if (!a.valid.empty()) valid = build(data::read_triples(a.valid), nullptr, a.valid);

      auto trainer = a.resume.empty() ? train::Trainer(model, cfg, std::move(data))
                                      : train::Trainer::from_checkpoint(train::load_checkpoint(a.resume),
                                                                        std::move(data));
      // A resumed run keeps its stored config; only the step target may move.
      std::uint64_t target = trainer.config().max_steps;
      if (!a.resume.empty()) {
        if (const auto it = a.training.find("max_steps"); it != a.training.end()) {
          target = train::parse_uint("max_steps", it->second);
        }
        for (const auto& [k, v] : a.training) {
          if (k != "max_steps") logging::warn("--resume keeps the stored {}; ignoring {}", k, flag_name(k));
        }
        if (!a.model.empty()) logging::warn("--resume keeps the stored model config; ignoring model flags");
      }
      const auto save = [&] {
        train::save_checkpoint(a.out, trainer.to_checkpoint(dir.vocab().string(), dir.merges().string()));
      };
      const auto eval_every = trainer.config().eval_interval;
      const auto ckpt_every = trainer.config().checkpoint_interval;
      while (trainer.steps_done() < target) {
        const auto r = trainer.step();
        const auto step = trainer.steps_done();
        if (eval_every && (step % eval_every == 0 || step == target)) {
          if (valid.empty()) {
            logging::info("step {} loss {:.4f} (lm {:.4f} dis {:.4f} coref {:.4f})", step, r.loss.total, r.loss.lm,
                          r.loss.dis, r.loss.coref);
          } else {
            const double ppl = eval::perplexity(trainer.model(), std::span<const train::Sequence>(valid));
            logging::info("step {} loss {:.4f} (lm {:.4f} dis {:.4f} coref {:.4f}) valid ppl {:.3f}", step,
                          r.loss.total, r.loss.lm, r.loss.dis, r.loss.coref, ppl);
          }
        }
        if (ckpt_every && step % ckpt_every == 0) save();
      }
      save();
      logging::info("wrote {} after {} steps", a.out, trainer.steps_done());
    };
  });
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  pipeline::GenerateRequest req;
  std::string stage1;
  std::string stage2;
  std::string vocab;
  std::string merges;
  std::string gold_outline;
  std::optional<double> gold_fraction;
  bool json_out = false;
};

void add_generate(CLI::App& app, GenerateArgs& a, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("generate", "Sample an outline and then a story for a prompt");
  cmd->add_option("--prompt", a.req.prompt, "Prompt text")->required();
  cmd->add_option("--stage1", a.stage1, "Stage-1 (outline) checkpoint")->required();
  cmd->add_option("--stage2", a.stage2, "Stage-2 (story) checkpoint")->required();
  cmd->add_option("--k", a.req.k, "Top-k sampling width")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.req.seed, "Random seed");
  cmd->add_option("--gold-outline", a.gold_outline, "Ground-truth outline text");
  cmd->add_option("--gold-fraction", a.gold_fraction, "Share of gold outline tokens forced as prefix, in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-outline-tokens", a.req.max_outline_tokens, "Outline token budget");
  cmd->add_option("--max-story-tokens", a.req.max_story_tokens, "Story token budget");
  cmd->add_option("--vocab", a.vocab, "Vocabulary file (default: the one named in the checkpoint)");
  cmd->add_option("--merges", a.merges, "Merges file (default: the one named in the checkpoint)");
  cmd->add_flag("--json", a.json_out, "Print one JSON object instead of text");
  cmd->callback([&] {
    if (a.gold_fraction && a.gold_outline.empty()) throw FlagError("--gold-fraction requires --gold-outline");
    run = [&a] {
      if (!a.gold_outline.empty()) {
        a.req.gold_outline = a.gold_outline;
        a.req.gold_fraction = a.gold_fraction.value_or(1.0);
      }
      const auto c1 = train::load_checkpoint(a.stage1);
      const auto c2 = train::load_checkpoint(a.stage2);
      const auto m1 = train::load_model(c1);
      const auto m2 = train::load_model(c2);
      if (m1.kind != "outline") throw LoadError(a.stage1 + ": expected an outline checkpoint, found " + m1.kind);
      if (m2.kind != "story") throw LoadError(a.stage2 + ": expected a story checkpoint, found " + m2.kind);
      const auto tok = tokenizer_for(c2, a.vocab, a.merges);
      const auto r = pipeline::generate(*m1.model, *m2.model, tok, a.req);
      if (a.json_out) {
        json j;
        j["prompt"] = a.req.prompt;
        j["outline"] = r.outline;
        j["story"] = r.story;
        j["forced_tokens"] = r.forced_tokens;
        j["seed"] = a.req.seed;
        j["k"] = a.req.k;
        std::cout << j.dump() << "\n";
      } else {
        std::cout << "outline: " << r.outline << "\nstory: " << r.story << "\n";
      }
    };
  });
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string stories;
  std::string stage2;
  std::string reference;
  std::string tagger;
  std::string vocab;
  std::string merges;
  double tau = 0.7;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("evaluate", "Compute the metrics report for a file of stories");
  cmd->add_option("--stories", a.stories, "One story per line, or JSONL with a story field")->required();
  cmd->add_option("--stage2", a.stage2, "Stage-2 checkpoint for perplexity");
  cmd->add_option("--reference", a.reference, "Held-out triples JSONL scored for perplexity");
  cmd->add_option("--tagger", a.tagger, "Tagger checkpoint for the unknown rate");
  cmd->add_option("--tau", a.tau, "Tagger confidence threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--vocab", a.vocab, "Vocabulary file (default: the one named in the checkpoint)");
  cmd->add_option("--merges", a.merges, "Merges file (default: the one named in the checkpoint)");
  cmd->callback([&] {
    run = [&a] {
      const auto stories = data::read_story_lines(a.stories);
      if (stories.empty()) throw ValidationError(a.stories + ": no stories");
      eval::MetricsReport report;
      report.n_stories = stories.size();
      report.config = {{"stories", a.stories}, {"tau", a.tau}, {"stage2", a.stage2}, {"reference", a.reference},
                       {"tagger", a.tagger}};

      const auto d1 = eval::distinct_n(stories, 1);
      const auto d2 = eval::distinct_n(stories, 2);
      if (d1.empty) report.warnings.push_back("distinct-1: no unigrams, reported as 0");
      if (d2.empty) report.warnings.push_back("distinct-2: no bigrams, reported as 0");
      report.distinct1 = d1.value;
      report.distinct2 = d2.value;
      report.mean_coref_chains = eval::coref_chain_count(stories);

      if (a.stage2.empty() || a.reference.empty()) {
        report.warnings.push_back("perplexity: needs --stage2 and --reference, reported as null");
      } else {
        const auto ckpt = train::load_checkpoint(a.stage2);
        const auto m = train::load_model(ckpt);
        if (m.kind != "story") throw LoadError(a.stage2 + ": expected a story checkpoint, found " + m.kind);
        const auto tok = tokenizer_for(ckpt, a.vocab, a.merges);
        const auto triples = data::read_triples(a.reference);
        std::vector<train::Sequence> seqs;
        for (std::size_t i = 0; i < triples.size(); ++i) {
          const auto ann = train::resolve_annotations(triples[i].story, tok, {}, nullptr, a.tau);
          auto ex = train::build_stage2_example(triples[i], tok, ann, m.model_config.max_positions,
                                                a.reference + ":" + std::to_string(i + 1));
          if (ex) seqs.push_back(std::move(*ex));
        }
        report.perplexity = eval::perplexity(*m.model, std::span<const train::Sequence>(seqs));
      }

      if (a.tagger.empty()) {
        report.warnings.push_back("unknown_rate: needs --tagger, reported as null");
      } else {
        const auto ckpt = train::load_checkpoint(a.tagger);
        const auto tok = tokenizer_for(ckpt, a.vocab, a.merges);
        const auto tagger = train::tagger_from_checkpoint(ckpt, tok);
        const auto u = eval::unknown_rate(tagger, stories, a.tau);
        if (u.empty) report.warnings.push_back("unknown_rate: no adjacent sentence pairs, reported as 0");
        report.unknown_rate = u.value;
      }
      for (const auto& w : report.warnings) logging::warn("{}", w);
      std::cout << report.to_json().dump(2) << "\n";
    };
  });
}

// ---------------------------------------------------------------- attention-map

struct AttentionArgs {
  std::string stage2;
  std::string triples;
  std::string out;
  std::string vocab;
  std::string merges;
  std::optional<std::size_t> index;
  std::vector<std::size_t> grid = {20, 10};
};

void add_attention(CLI::App& app, AttentionArgs& a, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("attention-map", "Export story-to-outline attention as CSV");
  cmd->add_option("--stage2", a.stage2, "Stage-2 checkpoint")->required();
  cmd->add_option("--triples", a.triples, "Triples JSONL")->required();
  cmd->add_option("--index", a.index, "Export this triple (0-based); without it, average all triples on a grid");
  cmd->add_option("--grid", a.grid, "Rows and columns of the averaging grid")->expected(2);
  cmd->add_option("--out", a.out, "CSV file (default: stdout)");
  cmd->add_option("--vocab", a.vocab, "Vocabulary file (default: the one named in the checkpoint)");
  cmd->add_option("--merges", a.merges, "Merges file (default: the one named in the checkpoint)");
  cmd->callback([&] {
    if (a.grid.size() != 2 || a.grid[0] == 0 || a.grid[1] == 0) throw FlagError("--grid needs two positive sizes");
    run = [&a] {
      const auto ckpt = train::load_checkpoint(a.stage2);
      const auto m = train::load_model(ckpt);
      if (m.kind != "story") throw LoadError(a.stage2 + ": expected a story checkpoint, found " + m.kind);
      const auto tok = tokenizer_for(ckpt, a.vocab, a.merges);
      const auto triples = data::read_triples(a.triples);
      auto example = [&](std::size_t i) {
        const auto ann = train::resolve_annotations(triples[i].story, tok, {}, nullptr, 0.7);
        return train::build_stage2_example(triples[i], tok, ann, m.model_config.max_positions,
                                           a.triples + ":" + std::to_string(i + 1));
      };
      eval::AttentionMap map;
      if (a.index) {
        if (*a.index >= triples.size()) {
          throw IndexError("--index " + std::to_string(*a.index) + " but " + a.triples + " holds " +
                           std::to_string(triples.size()) + " triples");
        }
        const auto ex = example(*a.index);
        if (!ex) throw LengthError("triple " + std::to_string(*a.index) + " does not fit max_positions");
        map = eval::attention_map(*m.model, *ex, tok);
      } else {
        eval::AttentionAccumulator acc(a.grid[0], a.grid[1]);
        for (std::size_t i = 0; i < triples.size(); ++i) {
          if (const auto ex = example(i)) acc.add(eval::attention_map(*m.model, *ex, tok));
        }
        if (acc.maps() == 0) throw ValidationError(a.triples + ": no triple fits the model");
        map = acc.mean();
      }
      const auto csv = eval::to_csv(map);
      if (a.out.empty()) {
        std::cout << csv;
      } else {
        write_text(a.out, csv);
      }
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plotforge: outline-conditioned two-stage story generation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::function<void()> run;
  PrepareArgs prepare;
  TaggerArgs tagger;
  TrainArgs outline_args, story_args;
  GenerateArgs generate;
  EvaluateArgs evaluate;
  AttentionArgs attention;
  add_prepare(app, prepare, run);
  add_train_tagger(app, tagger, run);
  add_train(app, "outline", outline_args, run);
  add_train(app, "story", story_args, run);
  add_generate(app, generate, run);
  add_evaluate(app, evaluate, run);
  add_attention(app, attention, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: flag: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return 2;
  }

  try {
    logging::init();
    run();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}

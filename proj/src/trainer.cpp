#include "plotforge/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "plotforge/errors.hpp"
#include "plotforge/logging.hpp"
#include "plotforge/ops.hpp"

namespace plotforge::train {

Batch collate(std::span<const Sequence> data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("collate: empty batch");
  Batch b;
  b.size = indices.size();
  for (auto i : indices) {
    if (i >= data.size()) throw IndexError("collate: example " + std::to_string(i) + " out of range");
    b.seq = std::max(b.seq, data[i].ids.size());
  }
  b.ids.assign(b.size * b.seq, text::kPad);
  b.targets.assign(b.size * b.seq, text::kPad);
  b.mask.assign(b.size * b.seq, 0.0f);
  for (std::size_t r = 0; r < b.size; ++r) {
    const auto& s = data[indices[r]];
    const std::size_t off = r * b.seq;
    std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(off));
    for (std::size_t t = 0; t + 1 < s.ids.size(); ++t) {
      b.targets[off + t] = s.ids[t + 1];
      b.mask[off + t] = s.mask[t];
    }
    b.rows.push_back(&s);
  }
  return b;
}

BatchSchedule::BatchSchedule(std::span<const Sequence> data, std::size_t batch_size, std::uint64_t seed)
    : seed_(seed) {
  if (data.empty()) throw TrainingError("batch schedule: empty data set");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].ids.size() < data[b].ids.size(); });
  for (std::size_t s = 0; s < idx.size(); s += batch_size) {
    batches_.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                          idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + batch_size)));
  }
}

std::span<const std::size_t> BatchSchedule::at(std::uint64_t step) {
  const std::uint64_t epoch = step / batches_.size();
  if (epoch != epoch_) {
    order_.resize(batches_.size());
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng = make_rng(seed_, "batches:" + std::to_string(epoch));
    std::shuffle(order_.begin(), order_.end(), rng);
    epoch_ = epoch;
  }
  return batches_[order_[step % batches_.size()]];
}

template <class Real>
BatchGraph<Real> batch_loss(const lm::TransformerLM<Real>& model, const aux::DiscourseHead<Real>* head,
                            const Batch& batch, const TrainingConfig& cfg, bool train, Rng* dropout_rng) {
  BatchGraph<Real> g;
  g.out = model.forward(batch.ids, batch.size, train, dropout_rng, lm::LogitRows::all);
  std::vector<Real> mask(batch.mask.begin(), batch.mask.end());
  g.lm = ad::cross_entropy_masked(g.out.logits, std::span<const TokenId>(batch.targets), std::span<const Real>(mask));

  const bool story = cfg.stage == "story";
  if (story && cfg.lambda1 > 0 && head != nullptr) {
    std::vector<Span> left, right;
    std::vector<aux::Label> labels;
    for (std::size_t r = 0; r < batch.size; ++r) {
      const auto& s = *batch.rows[r];
      const std::size_t off = r * batch.seq;
      for (std::size_t p = 0; p < s.labels.size(); ++p) {
        if (s.labels[p] == aux::Label::unknown) continue;
        left.push_back(Span{off + s.sentences[p].begin, off + s.sentences[p].end});
        right.push_back(Span{off + s.sentences[p + 1].begin, off + s.sentences[p + 1].end});
        labels.push_back(s.labels[p]);
      }
    }
    if (!labels.empty()) {
      const auto l = ad::max_pool_rows(g.out.hidden, std::span<const Span>(left));
      const auto rr = ad::max_pool_rows(g.out.hidden, std::span<const Span>(right));
      g.dis = aux::discourse_loss(*head, l, rr, std::span<const aux::Label>(labels));
    }
  }
  if (story && cfg.lambda2 > 0) {
    for (std::size_t r = 0; r < batch.size; ++r) {
      g.supervision.push_back(aux::build_supervision(batch.rows[r]->clusters, batch.seq));
    }
    const auto norm = cfg.coref_normalizer == "mentions" ? aux::CorefNormalizer::mention_tokens
                                                         : aux::CorefNormalizer::supervised_tokens;
    g.coref = aux::coref_loss(g.out.attention, std::span<const aux::CorefSupervision>(g.supervision), norm);
  }
  g.joint = aux::joint_loss(g.lm, g.dis, g.coref, story ? cfg.lambda1 : 0.0, story ? cfg.lambda2 : 0.0);
  return g;
}

Trainer::Trainer(lm::ModelConfig model, TrainingConfig cfg, std::vector<Sequence> data)
    : model_cfg_([&] {
        model.dropout = cfg.dropout;
        model.validate();
        return model;
      }()),
      cfg_(std::move(cfg)),
      data_([&] {
        if (data.empty()) throw TrainingError("training set is empty");
        return std::move(data);
      }()),
      schedule_(data_, cfg_.batch_size, cfg_.seed),
      dropout_rng_(make_rng(cfg_.seed, "dropout")) {
  cfg_.validate();
  for (const auto& s : data_) {
    if (s.ids.size() > model_cfg_.max_positions) {
      throw TrainingError("training sequence of " + std::to_string(s.ids.size()) + " tokens exceeds max_positions " +
                          std::to_string(model_cfg_.max_positions));
    }
    for (auto id : s.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= model_cfg_.vocab_size) {
        throw TrainingError("token id " + std::to_string(id) + " outside the model vocabulary of " +
                            std::to_string(model_cfg_.vocab_size));
      }
    }
  }
  model_ = std::make_unique<lm::TransformerLM<float>>(model_cfg_, cfg_.seed);
  params_ = model_->parameters();
  if (cfg_.stage == "story") {
    head_ = std::make_unique<aux::DiscourseHead<float>>(model_cfg_.d_model, model_cfg_.d_model, cfg_.seed,
                                                        model_cfg_.init_std);
    params_.insert(params_.end(), head_->parameters().begin(), head_->parameters().end());
  }
  adam_ = std::make_unique<ad::Adam<float>>(params_, ad::AdamConfig{cfg_.lr});
  adam_->set_max_grad_norm(cfg_.max_grad_norm);
}

StepReport Trainer::step() {
  const auto idx = schedule_.at(step_);
  const auto batch = collate(data_, idx);
  ad::zero_grads(params_);
  auto& tape = ad::Tape<float>::active();
  StepReport report;
  {
    const auto g = batch_loss<float>(*model_, head_.get(), batch, cfg_, true, &dropout_rng_);
    ad::backward(g.joint.total);
    report.loss = g.joint.parts;
  }
  adam_->step();
  tape.clear();
  report.step = step_;
  for (auto m : batch.mask) report.scored_tokens += m > 0 ? 1 : 0;
  ++step_;
  return report;
}

void Trainer::run(std::uint64_t steps, const std::function<void(const StepReport&)>& on_step) {
  for (std::uint64_t i = 0; i < steps; ++i) {
    const auto r = step();
    if (on_step) on_step(r);
  }
}

namespace {

std::string absolute_or_empty(const std::string& p) {
  if (p.empty()) return p;
  return std::filesystem::absolute(p).lexically_normal().string();
}

}  // namespace

Checkpoint Trainer::to_checkpoint(const std::string& vocab_path, const std::string& merges_path) const {
  Checkpoint c;
  c.kind = cfg_.stage;
  c.training_config = format_key_values(cfg_.to_key_values());
  c.model_config = format_key_values(model_to_key_values(model_cfg_));
  c.vocab_path = absolute_or_empty(vocab_path);
  c.merges_path = absolute_or_empty(merges_path);
  c.step = step_;
  c.rng_state = serialize_rng(dropout_rng_);
  c.params = store_parameters(params_);
  store_adam(adam_->state(), c);
  return c;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt, std::vector<Sequence> data) {
  const auto cfg = TrainingConfig::from_key_values(parse_key_values(ckpt.training_config));
  const auto model = model_from_key_values(parse_key_values(ckpt.model_config));
  if (ckpt.kind != cfg.stage) throw LoadError("checkpoint kind '" + ckpt.kind + "' does not match its stage '" + cfg.stage + "'");
  Trainer t(model, cfg, std::move(data));
  restore_parameters(ckpt.params, t.params_);
  restore_adam(ckpt, t.adam_->state());
  t.step_ = ckpt.step;
  t.dropout_rng_ = deserialize_rng(ckpt.rng_state);
  return t;
}

LoadedModel load_model(const Checkpoint& ckpt) {
  if (ckpt.kind != "outline" && ckpt.kind != "story") {
    throw LoadError("checkpoint of kind '" + ckpt.kind + "' is not a stage model");
  }
  LoadedModel m;
  m.kind = ckpt.kind;
  m.training_config = TrainingConfig::from_key_values(parse_key_values(ckpt.training_config));
  m.model_config = model_from_key_values(parse_key_values(ckpt.model_config));
  m.vocab_path = ckpt.vocab_path;
  m.merges_path = ckpt.merges_path;
  m.model = std::make_shared<lm::TransformerLM<float>>(m.model_config, m.training_config.seed);
  auto params = m.model->parameters();
  if (ckpt.kind == "story") {
    m.head = std::make_shared<aux::DiscourseHead<float>>(m.model_config.d_model, m.model_config.d_model,
                                                         m.training_config.seed, m.model_config.init_std);
    params.insert(params.end(), m.head->parameters().begin(), m.head->parameters().end());
  }
  restore_parameters(ckpt.params, params);
  return m;
}

LoadedModel load_model(const std::string& path) { return load_model(load_checkpoint(path)); }

Checkpoint tagger_to_checkpoint(const aux::DiscourseTagger& tagger, const std::string& vocab_path,
                                const std::string& merges_path) {
  const auto& cfg = tagger.config();
  Checkpoint c;
  c.kind = "tagger";
  c.training_config = format_key_values({{"d_hidden", std::to_string(cfg.d_hidden)},
                                         {"steps", std::to_string(cfg.steps)},
                                         {"batch_size", std::to_string(cfg.batch_size)},
                                         {"lr", format_double(cfg.lr)},
                                         {"seed", std::to_string(cfg.seed)},
                                         {"max_side_tokens", std::to_string(cfg.max_side_tokens)}});
  c.model_config = format_key_values(model_to_key_values(cfg.model));
  c.vocab_path = absolute_or_empty(vocab_path);
  c.merges_path = absolute_or_empty(merges_path);
  c.step = cfg.steps;
  c.rng_state = serialize_rng(make_rng(cfg.seed, "tagger-dropout"));
  c.params = store_parameters(tagger.parameters());
  return c;
}

aux::DiscourseTagger tagger_from_checkpoint(const Checkpoint& ckpt, const text::Tokenizer& tokenizer) {
  if (ckpt.kind != "tagger") throw LoadError("checkpoint of kind '" + ckpt.kind + "' is not a discourse tagger");
  const auto kv = parse_key_values(ckpt.training_config);
  aux::TaggerConfig cfg;
  cfg.model = model_from_key_values(parse_key_values(ckpt.model_config));
  for (const auto& [k, v] : kv) {
    if (k == "d_hidden") cfg.d_hidden = parse_uint(k, v);
    else if (k == "steps") cfg.steps = parse_uint(k, v);
    else if (k == "batch_size") cfg.batch_size = parse_uint(k, v);
    else if (k == "lr") cfg.lr = parse_double(k, v);
    else if (k == "seed") cfg.seed = parse_uint(k, v);
    else if (k == "max_side_tokens") cfg.max_side_tokens = parse_uint(k, v);
    else throw LoadError("tagger checkpoint: unknown key '" + k + "'");
  }
  if (cfg.model.vocab_size != tokenizer.vocab_size()) {
    throw LoadError("tagger was trained with a vocabulary of " + std::to_string(cfg.model.vocab_size) +
                    " tokens, tokenizer has " + std::to_string(tokenizer.vocab_size()));
  }
  aux::DiscourseTagger tagger(cfg, tokenizer);
  restore_parameters(ckpt.params, tagger.parameters());
  return tagger;
}

template BatchGraph<float> batch_loss(const lm::TransformerLM<float>&, const aux::DiscourseHead<float>*, const Batch&,
                                      const TrainingConfig&, bool, Rng*);
template BatchGraph<double> batch_loss(const lm::TransformerLM<double>&, const aux::DiscourseHead<double>*,
                                       const Batch&, const TrainingConfig&, bool, Rng*);

}  // namespace plotforge::train

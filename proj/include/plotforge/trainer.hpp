#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "plotforge/adam.hpp"
#include "plotforge/checkpoint.hpp"
#include "plotforge/config.hpp"
#include "plotforge/coref.hpp"
#include "plotforge/discourse.hpp"
#include "plotforge/examples.hpp"
#include "plotforge/joint_loss.hpp"
#include "plotforge/transformer.hpp"

namespace plotforge::train {

// A padded batch: `size` sequences of `seq` positions back to back, padding
// with <PAD> on the right. Because attention is causal, right padding never
// influences real positions; padded targets carry mask 0.
struct Batch {
  std::vector<TokenId> ids;
  std::vector<TokenId> targets;
  std::vector<float> mask;
  std::size_t size = 0;
  std::size_t seq = 0;
  std::vector<const Sequence*> rows;
};

Batch collate(std::span<const Sequence> data, std::span<const std::size_t> indices);

// Length-bucketed schedule: examples sorted by length are cut into fixed
// batches, and each epoch visits those batches in an order drawn from
// (seed, epoch). The batch for a step is therefore a pure function of
// (seed, step), which is what makes resumed runs line up.
class BatchSchedule {
 public:
  BatchSchedule(std::span<const Sequence> data, std::size_t batch_size, std::uint64_t seed);
  std::span<const std::size_t> at(std::uint64_t step);
  std::size_t batches_per_epoch() const { return batches_.size(); }

 private:
  std::vector<std::vector<std::size_t>> batches_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = ~std::uint64_t{0};
  std::vector<std::size_t> order_;
};

struct StepReport {
  std::uint64_t step = 0;
  aux::LossBreakdown loss;
  std::size_t scored_tokens = 0;
};

// The differentiable pieces of one batch, kept so tests can inspect
// intermediate gradients after backward().
template <class Real>
struct BatchGraph {
  lm::ForwardOutput<Real> out;
  ad::Tensor<Real> lm;
  ad::Tensor<Real> dis;    // undefined when lambda1 == 0 or no pair is labelled
  ad::Tensor<Real> coref;  // undefined when lambda2 == 0
  aux::JointLoss<Real> joint;
  std::vector<aux::CorefSupervision> supervision;
};

// Builds the stage loss for a collated batch. The head is only consulted in
// the story stage.
template <class Real>
BatchGraph<Real> batch_loss(const lm::TransformerLM<Real>& model, const aux::DiscourseHead<Real>* head,
                            const Batch& batch, const TrainingConfig& cfg, bool train, Rng* dropout_rng);

class Trainer {
 public:
  // The training config's dropout overrides the model config's. Throws
  // TrainingError on an empty data set.
  Trainer(lm::ModelConfig model, TrainingConfig cfg, std::vector<Sequence> data);

  StepReport step();
  // Runs until `steps` more updates are done; the callback sees every report.
  void run(std::uint64_t steps, const std::function<void(const StepReport&)>& on_step = {});

  std::uint64_t steps_done() const { return step_; }
  const lm::TransformerLM<float>& model() const { return *model_; }
  const aux::DiscourseHead<float>* head() const { return head_.get(); }
  const TrainingConfig& config() const { return cfg_; }
  const std::vector<Sequence>& data() const { return data_; }
  std::span<const std::size_t> batch_indices(std::uint64_t step) { return schedule_.at(step); }
  const ad::ParameterList<float>& parameters() const { return params_; }
  const Rng& dropout_rng() const { return dropout_rng_; }

  Checkpoint to_checkpoint(const std::string& vocab_path, const std::string& merges_path) const;
  // Restores weights, optimizer moments, step counter and RNG state.
  static Trainer from_checkpoint(const Checkpoint& ckpt, std::vector<Sequence> data);

 private:
  lm::ModelConfig model_cfg_;
  TrainingConfig cfg_;
  std::vector<Sequence> data_;
  std::unique_ptr<lm::TransformerLM<float>> model_;
  std::unique_ptr<aux::DiscourseHead<float>> head_;
  ad::ParameterList<float> params_;
  std::unique_ptr<ad::Adam<float>> adam_;
  BatchSchedule schedule_;
  Rng dropout_rng_;
  std::uint64_t step_ = 0;
};

// Weights-only loading for inference.
struct LoadedModel {
  lm::ModelConfig model_config;
  TrainingConfig training_config;
  std::string kind;
  std::string vocab_path;
  std::string merges_path;
  std::shared_ptr<lm::TransformerLM<float>> model;
  std::shared_ptr<aux::DiscourseHead<float>> head;
};
LoadedModel load_model(const Checkpoint& ckpt);
LoadedModel load_model(const std::string& path);

Checkpoint tagger_to_checkpoint(const aux::DiscourseTagger& tagger, const std::string& vocab_path,
                                const std::string& merges_path);
// The tokenizer is the one named in the checkpoint, loaded by the caller.
aux::DiscourseTagger tagger_from_checkpoint(const Checkpoint& ckpt, const text::Tokenizer& tokenizer);

}  // namespace plotforge::train

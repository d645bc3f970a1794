#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "gpgan/data.hpp"
#include "gpgan/losses.hpp"
#include "gpgan/nn/network.hpp"

namespace gpgan::training {

struct TrainConfig {
  // Schedule and optimizer.
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  int epochs = 200;
  int decay_start = 100;
  double decay_per_epoch = 2e-6;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t max_steps = 0;  // 0 = run every epoch to the end

  losses::LossWeights weights;
  bool gender_hard_labels = false;
  bool gender_literal = false;

  // Conditioning.
  double sigma = 2.0;
  std::string sigma_unit = "px";  // "px" or "normalized"

  // Model sizes. Divisors shrink channel widths; 1 builds the full networks.
  int g_width_divisor = 1;
  int d_width_divisor = 1;
  int vgg_width_divisor = 1;
  int perceptual_size = 224;
  int classifier_size = 224;
  int classifier_hidden = 512;

  // Gender classifier pretraining on the train split.
  int classifier_epochs = 20;
  double classifier_lr = 1e-4;
  int classifier_batch_size = 16;

  // I/O.
  std::string manifest;
  std::string out_dir = "runs/gpgan";
  std::string vgg_weights;            // converted VGG-16 checkpoint; empty = He-initialized
  std::string classifier_checkpoint;  // skip pretraining and load this
  int checkpoint_every = 10;

  landmarks::HeatmapOptions heatmap() const;
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);  // unknown keys raise ArgumentError

// "key=value" with the value typed after the field it replaces.
void apply_override(TrainConfig& cfg, const std::string& assignment);

// JSON object, or one key=value per line ('#' comments allowed).
TrainConfig load_config(const std::string& path);

/// Learning rate for a 0-based epoch: base until decay_start, then reduced
/// by decay_per_epoch per epoch, never below 0.
double lr_at_epoch(const TrainConfig& cfg, double base, int epoch);

struct Models {
  nn::Network g, d, v, c;
};

nn::NetworkSpec generator_spec(const TrainConfig& cfg);
nn::NetworkSpec discriminator_spec(const TrainConfig& cfg);
nn::NetworkSpec perceptual_spec(const TrainConfig& cfg);
nn::NetworkSpec classifier_spec(const TrainConfig& cfg);

// Fresh G and D, plus V and C backbones from vgg_weights when given. V is
// frozen; C stays trainable until pretrain_classifier freezes it.
Models build_models(const TrainConfig& cfg);

struct ClassifierReport {
  int epochs = 0;
  double final_loss = 0;
  double train_accuracy = 0;
};

/// BCE on dataset labels, then freezes every classifier tensor.
ClassifierReport pretrain_classifier(nn::Network& c, const std::vector<data::Pair>& pairs, const TrainConfig& cfg);

// Classifier P(male) for a batch of [-1, 1] images.
torch::Tensor classify(const nn::Network& c, const torch::Tensor& images);

struct StepResult {
  losses::LossReport report;
  double l_d = 0;
};

/// Owns the networks and both optimizers. One step is one D update on
/// d_loss followed by one G update on the composite loss.
class Trainer {
 public:
  Trainer(TrainConfig cfg, Models models);

  StepResult step(const data::Batch& batch);
  void set_epoch(int epoch);  // applies lr_at_epoch to both optimizers

  void save(const std::string& dir) const;
  static Trainer resume(const std::string& dir);

  const TrainConfig& config() const { return cfg_; }
  Models& models() { return m_; }
  const Models& models() const { return m_; }
  int epoch() const { return epoch_; }
  std::int64_t steps() const { return step_; }
  double lr_g() const;

 private:
  void make_optimizers();

  TrainConfig cfg_;
  Models m_;
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
};

struct TrainSummary {
  std::vector<std::string> checkpoints;
  std::string log_path;
  std::int64_t steps = 0;
  int epochs_run = 0;
  StepResult last;
  ClassifierReport classifier;
};

using EventSink = std::function<void(const nlohmann::json&)>;

/// Full run: loads the manifest's train split, pretrains C, trains G/D and
/// writes <out_dir>/train_log.jsonl plus <out_dir>/checkpoints/epoch_NNNN.
/// Epoch summaries and checkpoint notices go to `events`. A non-finite loss
/// raises TrainingError naming the last good checkpoint.
TrainSummary train(const TrainConfig& cfg, const EventSink& events = {});

// Continues a run from a checkpoint directory written by train().
TrainSummary resume_training(const std::string& checkpoint_dir, const EventSink& events = {});

/// Frozen G and C plus the config they were trained with, for synthesis and
/// scoring. `dir` is a checkpoint directory or a run directory, in which case
/// checkpoints/latest is followed.
struct InferenceModels {
  TrainConfig cfg;
  nn::Network g, c;
  std::string checkpoint;  // resolved directory
  std::string digest;      // generator checkpoint digest
};
InferenceModels load_inference(const std::string& dir);

/// Eval-mode generator output for each landmark set, N x 3 x 64 x 64.
torch::Tensor synthesize(const nn::Network& g, const std::vector<landmarks::LandmarkSet>& lms,
                         const landmarks::HeatmapOptions& opts);

}  // namespace gpgan::training

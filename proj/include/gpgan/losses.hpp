#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "json.hpp"

#include "gpgan/nn/network.hpp"

namespace gpgan::losses {

// Probabilities are clamped to [kEps, 1 - kEps] before every log.
inline constexpr double kEps = 1e-7;

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_c = 1.0;
  double lambda_1 = 100.0;

  // Throws ArgumentError unless all three are finite and >= 0.
  void validate() const;
};

struct LossReport {
  std::int64_t step = 0;
  double l_adv = 0, l_perc = 0, l_gender = 0, l_l1 = 0, l_total = 0;

  nlohmann::json to_json() const;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

// -log D(real) - log(1 - D(fake)), each averaged over batch and patch grid.
torch::Tensor d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

// -mean log D(fake).
torch::Tensor g_adv_loss(const torch::Tensor& fake_scores);

torch::Tensor l1_loss(const torch::Tensor& fake, const torch::Tensor& real);

// Mean |a - b| over equally shaped feature tensors.
torch::Tensor feature_l1(const torch::Tensor& a, const torch::Tensor& b);

/// Binary cross-entropy of `probs` against `targets` (soft or hard). With
/// `literal` the second term uses log(p) in place of log(1 - p), so the
/// loss reduces to -mean log p.
torch::Tensor bce(const torch::Tensor& targets, const torch::Tensor& probs, bool literal = false);

// Maps [-1, 1] RGB batches to the VGG input contract: bilinear resize to
// `size` and ImageNet mean/std normalization.
torch::Tensor vgg_input(const torch::Tensor& images, int size);

// D scores for (heatmap, image) pairs; the two are stacked along channels.
torch::Tensor discriminator_scores(const nn::Network& d, const torch::Tensor& heatmaps, const torch::Tensor& images,
                                   nn::Mode mode);

/// L1 distance between conv4_3 features of fake and real batches.
class PerceptualLoss {
 public:
  explicit PerceptualLoss(const nn::Network* extractor) : v_(extractor) {}
  torch::Tensor operator()(const torch::Tensor& fake, const torch::Tensor& real) const;
  torch::Tensor features(const torch::Tensor& images) const;

 private:
  const nn::Network* v_;
};

struct GenderLossOptions {
  bool hard_labels = false;      // targets from dataset labels instead of C(real)
  bool literal_formula = false;  // see bce()
};

/// BCE between classifier outputs on real (target, no gradient) and fake
/// batches. `labels` (1 = male) is required when hard_labels is set.
class GenderLoss {
 public:
  GenderLoss(const nn::Network* classifier, GenderLossOptions opts = {}) : c_(classifier), opts_(opts) {}
  torch::Tensor operator()(const torch::Tensor& real, const torch::Tensor& fake,
                           const std::optional<torch::Tensor>& labels = std::nullopt) const;
  torch::Tensor probabilities(const torch::Tensor& images) const;

 private:
  const nn::Network* c_;
  GenderLossOptions opts_;
};

struct LossTerms {
  torch::Tensor adv, perc, gender, l1;
};

struct Composite {
  torch::Tensor total;
  LossReport report;
};

/// L_A + lambda_p L_P + lambda_c L_C + lambda_1 L_1. The report's l_total is
/// that sum evaluated in double from the reported terms. A non-finite term
/// raises TrainingError naming it.
Composite composite_loss(const LossTerms& terms, const LossWeights& w, std::int64_t step = 0);

}  // namespace gpgan::losses

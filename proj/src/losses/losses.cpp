#include "gpgan/losses.hpp"

#include <cmath>

#include "gpgan/errors.hpp"

namespace gpgan::losses {

namespace {

torch::Tensor clamped(const torch::Tensor& p) { return p.clamp(kEps, 1.0 - kEps); }

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ArgumentError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_p, lambda_c, lambda_1}) {
    if (!std::isfinite(v) || v < 0) throw ArgumentError("loss weights must be finite and non-negative");
  }
}

nlohmann::json LossReport::to_json() const {
  return {{"step", step}, {"l_adv", l_adv}, {"l_perc", l_perc}, {"l_gender", l_gender}, {"l_l1", l_l1},
          {"l_total", l_total}};
}

torch::Tensor d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return -torch::log(clamped(real_scores)).mean() - torch::log(1.0 - clamped(fake_scores)).mean();
}

torch::Tensor g_adv_loss(const torch::Tensor& fake_scores) { return -torch::log(clamped(fake_scores)).mean(); }

torch::Tensor l1_loss(const torch::Tensor& fake, const torch::Tensor& real) {
  same_shape(fake, real, "l1_loss");
  return (fake - real).abs().mean();
}

torch::Tensor feature_l1(const torch::Tensor& a, const torch::Tensor& b) {
  same_shape(a, b, "perceptual_loss");
  return (a - b).abs().mean();
}

torch::Tensor bce(const torch::Tensor& targets, const torch::Tensor& probs, bool literal) {
  same_shape(targets, probs, "gender_loss");
  const auto p = clamped(probs);
  const auto second = literal ? torch::log(p) : torch::log(1.0 - p);
  return -(targets * torch::log(p) + (1.0 - targets) * second).mean();
}

torch::Tensor vgg_input(const torch::Tensor& images, int size) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ArgumentError("expected an N x 3 x H x W image batch, got " + c10::str(images.sizes()));
  }
  auto x = (images + 1.0) * 0.5;
  if (x.size(2) != size || x.size(3) != size) {
    x = torch::upsample_bilinear2d(x, {size, size}, false);
  }
  const auto opts = x.options();
  const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  const auto stdev = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  return (x - mean) / stdev;
}

torch::Tensor discriminator_scores(const nn::Network& d, const torch::Tensor& heatmaps, const torch::Tensor& images,
                                   nn::Mode mode) {
  return d.forward(torch::cat({heatmaps, images}, 1), mode);
}

torch::Tensor PerceptualLoss::features(const torch::Tensor& images) const {
  return v_->forward(vgg_input(images, v_->spec().input.height), nn::Mode::Eval);
}

torch::Tensor PerceptualLoss::operator()(const torch::Tensor& fake, const torch::Tensor& real) const {
  same_shape(fake, real, "perceptual_loss");
  torch::Tensor target;
  {
    torch::NoGradGuard no_grad;
    target = features(real);
  }
  return feature_l1(features(fake), target);
}

torch::Tensor GenderLoss::probabilities(const torch::Tensor& images) const {
  return c_->forward(vgg_input(images, c_->spec().input.height), nn::Mode::Eval);
}

torch::Tensor GenderLoss::operator()(const torch::Tensor& real, const torch::Tensor& fake,
                                     const std::optional<torch::Tensor>& labels) const {
  same_shape(real, fake, "gender_loss");
  torch::Tensor targets;
  if (opts_.hard_labels) {
    if (!labels) throw ArgumentError("gender_loss: hard-label mode needs dataset labels");
    targets = labels->to(fake.scalar_type()).reshape({-1, 1});
  } else {
    torch::NoGradGuard no_grad;
    targets = probabilities(real);
  }
  return bce(targets, probabilities(fake), opts_.literal_formula);
}

Composite composite_loss(const LossTerms& t, const LossWeights& w, std::int64_t step) {
  w.validate();
  Composite out;
  auto& r = out.report;
  r.step = step;
  const std::pair<const torch::Tensor*, double*> fields[] = {
      {&t.adv, &r.l_adv}, {&t.perc, &r.l_perc}, {&t.gender, &r.l_gender}, {&t.l1, &r.l_l1}};
  const char* names[] = {"l_adv", "l_perc", "l_gender", "l_l1"};
  for (std::size_t i = 0; i < 4; ++i) {
    const double v = fields[i].first->defined() ? fields[i].first->item<double>() : 0.0;
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite " + std::string(names[i]) + " at step " + std::to_string(step));
    }
    *fields[i].second = v;
  }
  r.l_total = r.l_adv + w.lambda_p * r.l_perc + w.lambda_c * r.l_gender + w.lambda_1 * r.l_l1;

  auto add = [&](const torch::Tensor& term, double weight) {
    if (!term.defined() || weight == 0.0) return;
    out.total = out.total.defined() ? out.total + weight * term : weight * term;
  };
  add(t.adv, 1.0);
  add(t.perc, w.lambda_p);
  add(t.gender, w.lambda_c);
  add(t.l1, w.lambda_1);
  if (!out.total.defined()) out.total = torch::zeros({});
  return out;
}

}  // namespace gpgan::losses

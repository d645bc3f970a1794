#pragma once

// Central finite-difference gradient oracle. Test-only; it never calls
// backward on the perturbed evaluations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace gpgan::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-tensor relative error
  std::string worst_tensor;
  std::size_t entries_checked = 0;
};

/// Compares autograd gradients of `loss()` w.r.t. double-precision `params`
/// with central differences on up to `max_entries` sampled entries per
/// tensor. Per-tensor error is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||); tensors whose gradients are both below `floor` count as
/// agreeing.
// He-scaled weights and non-zero biases keep pre-activations O(1), away
// from ReLU kinks that a finite-difference step could straddle. BN-free
// stacks collapse towards 0 under the default init otherwise.
template <class Params>
void recondition(Params& params, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  torch::manual_seed(seed);
  for (const auto& n : params.names()) {
    if (params.is_buffer(n)) continue;
    auto& t = params.at(n);
    if (t.dim() >= 2) {
      t.normal_(0.0, std::sqrt(2.0 / static_cast<double>(t.numel() / t.size(0))));
    } else if (n.ends_with("bias")) {
      t.uniform_(-0.2, 0.2);
    }
  }
}

inline GradCheckResult gradient_check(const std::function<torch::Tensor()>& loss,
                                      const std::vector<torch::Tensor>& params,
                                      const std::vector<std::string>& names, std::size_t max_entries,
                                      std::uint64_t seed = 1, double h = 1e-6, double floor = 1e-9) {
  auto value = loss();
  auto analytic = torch::autograd::grad({value}, params, {}, false, false, true);

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t].detach();
    TORCH_CHECK(p.scalar_type() == torch::kFloat64, "gradient check needs double tensors");
    auto* data = p.data_ptr<double>();
    const auto n = static_cast<std::size_t>(p.numel());
    auto grad = analytic[t].defined() ? analytic[t].detach().contiguous() : torch::zeros_like(p);
    const auto* g = grad.data_ptr<double>();

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double saved = data[i];
      double plus = 0.0, minus = 0.0;
      {
        torch::NoGradGuard no_grad;
        data[i] = saved + h;
        plus = loss().item<double>();
        data[i] = saved - h;
        minus = loss().item<double>();
        data[i] = saved;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      diff2 += (numeric - g[i]) * (numeric - g[i]);
      a2 += g[i] * g[i];
      n2 += numeric * numeric;
    }
    result.entries_checked += idx.size();
    const double denom = std::sqrt(std::max(a2, n2));
    const double rel = denom < floor ? 0.0 : std::sqrt(diff2) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_tensor = t < names.size() ? names[t] : std::to_string(t);
    }
  }
  return result;
}

}  // namespace gpgan::testing

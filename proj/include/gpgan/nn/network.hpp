#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "gpgan/nn/params.hpp"
#include "gpgan/nn/spec.hpp"

namespace gpgan::nn {

enum class Mode { Train, Eval };

/// Interprets a NetworkSpec over a ParameterSet.
///
/// Train mode normalizes with batch statistics and updates the running
/// buffers in place; eval mode only reads parameters, so concurrent eval
/// forwards on one Network are safe as long as nothing mutates the
/// parameters meanwhile.
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, ParameterSet params);

  torch::Tensor forward(const torch::Tensor& input, Mode mode) const;

  // Output of stage `last` (inclusive), skipping everything after it.
  torch::Tensor forward_until(const torch::Tensor& input, int last, Mode mode) const;

  const NetworkSpec& spec() const { return spec_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const std::vector<StageShape>& table() const { return table_; }

 private:
  torch::Tensor run_layer(const LayerSpec& layer, const std::string& prefix, torch::Tensor x, Mode mode) const;
  torch::Tensor norm(const std::string& prefix, const torch::Tensor& x, Mode mode) const;

  NetworkSpec spec_;
  ParameterSet params_;
  std::vector<StageShape> table_;
};

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json + <dir>/tensors.bin (raw little-endian).

void save_parameters(const NetworkSpec& spec, const ParameterSet& params, const std::string& dir);

/// Loads parameters saved for `spec`. Throws LoadError when the stored spec
/// hash differs from spec_hash(spec), when a tensor is missing or
/// mis-shaped, or when the tensor file fails its content digest.
ParameterSet load_parameters(const NetworkSpec& spec, const std::string& dir);

// Rebuilds both spec and parameters from the manifest alone.
Network load_network(const std::string& dir);

// Loose named tensors (optimizer state and the like) in the same on-disk
// layout, tagged "gpgan-tensors/1" with free-form metadata.
struct NamedTensor {
  std::string name;
  torch::Tensor value;
};
void save_tensors(const std::string& dir, const std::vector<NamedTensor>& tensors, const nlohmann::json& meta);
std::vector<NamedTensor> load_tensors(const std::string& dir, nlohmann::json* meta = nullptr);

// Content digest recorded in a checkpoint manifest.
std::string checkpoint_digest(const std::string& dir);

}  // namespace gpgan::nn

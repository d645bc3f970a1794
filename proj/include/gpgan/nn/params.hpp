#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gpgan/nn/spec.hpp"

namespace gpgan::nn {

enum class ParamRole {
  ConvWeight,
  Bias,
  NormScale,
  NormShift,
  RunningMean,
  RunningVar,
  AffineWeight,
};

struct ParamDesc {
  std::string name;
  std::vector<std::int64_t> shape;
  ParamRole role;

  bool is_buffer() const { return role == ParamRole::RunningMean || role == ParamRole::RunningVar; }
};

// Every tensor a spec needs, in a fixed order. Names are
// "s<stage>.l<layer>.<part>", with dense blocks nesting "d<unit>.".
std::vector<ParamDesc> parameter_layout(const NetworkSpec& spec);

// Gan: weights ~ N(0, 0.02). He: weights ~ N(0, 2 / fan_in), for deep
// stacks without normalization.
enum class Init { Gan, He };

struct ParamMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string spec_hash;
};

/// Named tensors owned by one network, plus which of them an optimizer may
/// touch. Batch-norm running statistics are stored here as buffers.
class ParameterSet {
 public:
  ParameterSet() = default;

  // Conv/affine weights per `init`, norm scales ~ N(1, 0.02), biases and
  // shifts 0, running mean 0 / var 1.
  static ParameterSet initialize(const NetworkSpec& spec, std::uint64_t seed, torch::Dtype dtype = torch::kFloat32,
                                 Init init = Init::Gan);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const torch::Tensor& at(const std::string& name) const;
  torch::Tensor& at(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  bool is_buffer(const std::string& name) const;
  bool is_frozen(const std::string& name) const;

  /// Trainable tensors: not buffers, not frozen. These require grad.
  std::vector<torch::Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;

  // Freezes every parameter whose stage index is < first_trainable_stage.
  void freeze_stages_before(int first_trainable_stage);
  void freeze_all();

  // Copies every tensor of `src` whose name also exists here. Shape
  // mismatches raise LoadError. Returns the number of tensors copied.
  std::size_t assign_from(const ParameterSet& src, int max_stage = -1);

  ParameterSet clone() const;
  ParameterSet to(torch::Dtype dtype) const;

  ParamMeta meta;

  // Bitwise tensor-for-tensor equality including names and buffers.
  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  void add(const ParamDesc& desc, torch::Tensor value);
  void refresh_grad_flags();

  std::vector<std::string> order_;
  std::map<std::string, torch::Tensor> tensors_;
  std::map<std::string, bool> buffer_;
  std::map<std::string, bool> frozen_;
};

// Stage index encoded in a parameter name ("s12.l3.weight" -> 12).
int stage_of(const std::string& name);

}  // namespace gpgan::nn

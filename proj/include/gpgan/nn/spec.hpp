#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace gpgan::nn {

enum class LayerKind {
  Conv,
  TransposedConv,
  MaxPool,
  AvgPool,
  BatchNorm,
  Relu,
  LeakyRelu,
  Tanh,
  Sigmoid,
  DenseBlock,
  Transition,
  GlobalPool,
  Affine,
};

enum class MergeKind { Add, Concat };
enum class Resample { Down, Up };

/// n_layers bottleneck units (BN-ReLU-1x1 conv to factor*k, BN-ReLU-3x3 conv
/// to k), each fed the concatenation of everything before it. The optional
/// compression is a BN-ReLU-1x1 conv applied to the block output.
struct DenseBlockSpec {
  int n_layers = 0;
  int growth_rate = 0;
  int bottleneck_factor = 4;
  std::optional<int> compress_to;

  int output_channels(int in_channels) const {
    return compress_to.value_or(in_channels + n_layers * growth_rate);
  }
  friend bool operator==(const DenseBlockSpec&, const DenseBlockSpec&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  bool bias = true;
  double negative_slope = 0.2;
  DenseBlockSpec dense{};
  Resample resample = Resample::Down;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// A labelled group of primitive layers, e.g. "D(256)" or "conv4_3".
struct Stage {
  std::string label;
  std::vector<LayerSpec> layers;
  friend bool operator==(const Stage&, const Stage&) = default;
};

// Output of stage `from` is merged into the output of stage `to`.
struct SkipEdge {
  int from = 0;
  int to = 0;
  MergeKind merge = MergeKind::Add;
  friend bool operator==(const SkipEdge&, const SkipEdge&) = default;
};

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct NetworkSpec {
  std::string name;
  Shape input;
  std::vector<Stage> stages;
  std::vector<SkipEdge> skips;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct StageShape {
  std::string label;
  Shape shape;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Walks the spec and returns the output shape of every stage. Throws
/// BuildError naming the first stage whose channels or spatial size do not
/// chain, or whose additive skip merges tensors of different shapes.
std::vector<StageShape> layer_table(const NetworkSpec& spec);
Shape output_shape(const NetworkSpec& spec);

// Spec truncated after stage `last` (inclusive); skips into dropped stages go.
NetworkSpec truncated(const NetworkSpec& spec, int last);
int find_stage(const NetworkSpec& spec, const std::string& label);

const char* to_string(LayerKind kind);
nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);
std::string spec_hash(const NetworkSpec& spec);

}  // namespace gpgan::nn

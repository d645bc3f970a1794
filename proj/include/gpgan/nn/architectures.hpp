#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gpgan/nn/spec.hpp"

namespace gpgan::nn {

/// UDeNet channel string. C = conv-BN-ReLU, M = max-pool, D = dense block,
/// T = downsampling transition, DT = upsampling transition.
inline constexpr std::string_view kUDeNetArchitecture =
    "C(64)-M(64)-D(256)-T(128)-D(512)-T(256)-D(1024)-T(512)-D(1024)-DT(256)-D(512)-DT(128)-D(256)-DT(64)-"
    "D(64)-D(32)-D(32)-DT(16)-C(3)";

struct ArchToken {
  std::string op;  // "C", "M", "D", "T", "DT"
  int channels = 0;
  std::string label() const { return op + "(" + std::to_string(channels) + ")"; }
};
std::vector<ArchToken> parse_architecture(std::string_view arch);

struct GeneratorConfig {
  int input_size = 64;
  int in_channels = 1;
  int out_channels = 3;
  int growth_rate = 32;
  int bottleneck_factor = 4;
  // Layers in a dense block whose printed width is not above its input
  // width; such blocks end in a 1x1 compression to the printed width.
  int compressed_block_layers = 2;
  // Divides every printed channel count and the growth rate. 1 = as printed.
  int width_divisor = 1;
  std::string architecture{kUDeNetArchitecture};
};

/// Builds the generator from the architecture string. Dense-block depths
/// follow from channel arithmetic, (K - in) / growth_rate; every M/T stage
/// is joined additively to the DT stage producing the same shape.
NetworkSpec build_generator(const GeneratorConfig& cfg = {});

struct DiscriminatorConfig {
  int input_size = 64;
  int heatmap_channels = 1;
  int image_channels = 3;
  int width_divisor = 1;
};

/// Conditional patch discriminator over heatmap ++ image: 4x4 convs
/// 64-128-256 (stride 2), 512 (stride 1), 1 (stride 1), LeakyReLU(0.2),
/// batch norm on the inner three, sigmoid patch map.
NetworkSpec build_discriminator(const DiscriminatorConfig& cfg = {});

struct VggConfig {
  int input_size = 224;
  int width_divisor = 1;
};

// The 13-conv / 5-pool VGG-16 feature stack. Stages are labelled conv1_1 ..
// conv5_3 (conv + ReLU) and pool1 .. pool5.
NetworkSpec build_vgg16_backbone(const VggConfig& cfg = {});

// Backbone truncated after conv4_3 (post-ReLU): 512 x 28 x 28 at 224 input.
NetworkSpec build_perceptual_extractor(const VggConfig& cfg = {});
inline constexpr const char* kPerceptualLayer = "conv4_3";

struct ClassifierConfig {
  VggConfig backbone{};
  int hidden = 512;
};

/// VGG-16 conv stack + global average pool + affine(hidden) + ReLU +
/// affine(1) + sigmoid. Output is N x 1, read as P(male).
NetworkSpec build_gender_classifier(const ClassifierConfig& cfg = {});
int classifier_backbone_stages(const NetworkSpec& classifier);

}  // namespace gpgan::nn

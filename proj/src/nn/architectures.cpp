#include "gpgan/nn/architectures.hpp"

#include <cctype>

#include "gpgan/errors.hpp"

namespace gpgan::nn {

namespace {

LayerSpec conv(int in, int out, int kernel, int stride, int pad, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = pad;
  l.bias = bias;
  return l;
}

LayerSpec simple(LayerKind kind, int channels = 0) {
  LayerSpec l;
  l.kind = kind;
  l.in_channels = channels;
  l.out_channels = channels;
  return l;
}

LayerSpec pool(LayerKind kind, int kernel, int stride) {
  LayerSpec l = simple(kind);
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec leaky(double slope) {
  LayerSpec l = simple(LayerKind::LeakyRelu);
  l.negative_slope = slope;
  return l;
}

LayerSpec transition(int in, int out, Resample r) {
  LayerSpec l;
  l.kind = LayerKind::Transition;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = r == Resample::Down ? 1 : 4;
  l.stride = 2;
  l.padding = r == Resample::Down ? 0 : 1;
  l.bias = false;
  l.resample = r;
  return l;
}

LayerSpec dense(int in, DenseBlockSpec d) {
  LayerSpec l;
  l.kind = LayerKind::DenseBlock;
  l.in_channels = in;
  l.dense = d;
  l.out_channels = d.output_channels(in);
  l.bias = false;
  return l;
}

LayerSpec affine(int in, int out) {
  LayerSpec l;
  l.kind = LayerKind::Affine;
  l.in_channels = in;
  l.out_channels = out;
  return l;
}

int scaled(int channels, int divisor, const std::string& what) {
  if (divisor < 1 || channels % divisor != 0) {
    throw BuildError(what + ": " + std::to_string(channels) + " channels not divisible by width divisor " +
                     std::to_string(divisor));
  }
  return channels / divisor;
}

}  // namespace

std::vector<ArchToken> parse_architecture(std::string_view arch) {
  std::vector<ArchToken> out;
  std::size_t pos = 0;
  while (pos < arch.size()) {
    const std::size_t dash = arch.find('-', pos);
    const std::string_view tok = arch.substr(pos, dash == std::string_view::npos ? arch.size() - pos : dash - pos);
    const std::size_t open = tok.find('(');
    if (open == std::string_view::npos || tok.back() != ')' || open == 0) {
      throw BuildError("malformed architecture token '" + std::string(tok) + "'");
    }
    ArchToken t;
    t.op = std::string(tok.substr(0, open));
    const std::string num(tok.substr(open + 1, tok.size() - open - 2));
    if (num.empty() || !std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(c); })) {
      throw BuildError("malformed channel count in '" + std::string(tok) + "'");
    }
    t.channels = std::stoi(num);
    if (t.op != "C" && t.op != "M" && t.op != "D" && t.op != "T" && t.op != "DT") {
      throw BuildError("unknown architecture op '" + t.op + "'");
    }
    out.push_back(t);
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  return out;
}

NetworkSpec build_generator(const GeneratorConfig& cfg) {
  const auto tokens = parse_architecture(cfg.architecture);
  if (tokens.empty()) throw BuildError("generator: empty architecture");
  const int k = scaled(cfg.growth_rate, cfg.width_divisor, "generator growth rate");

  NetworkSpec spec;
  spec.name = "generator";
  spec.input = {cfg.in_channels, cfg.input_size, cfg.input_size};

  struct Encoded {
    int stage, channels, resolution;
    bool used = false;
  };
  std::vector<Encoded> encoder;
  std::vector<int> expected;
  int channels = cfg.in_channels, res = cfg.input_size;

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const ArchToken& tok = tokens[i];
    const std::string where = "generator stage " + std::to_string(i) + " '" + tok.label() + "'";
    const bool last = i + 1 == tokens.size();
    if (last && (tok.op != "C" || tok.channels != cfg.out_channels)) {
      throw BuildError(where + ": final stage must be C(" + std::to_string(cfg.out_channels) + ")");
    }
    // The image stage is not subject to the width divisor.
    const int K = last ? tok.channels : scaled(tok.channels, cfg.width_divisor, where);
    Stage st{tok.op + "(" + std::to_string(K) + ")", {}};

    if (tok.op == "C") {
      if (last) {
        st.layers = {simple(LayerKind::BatchNorm, channels), simple(LayerKind::Relu), conv(channels, K, 3, 1, 1, true),
                     simple(LayerKind::Tanh)};
      } else {
        st.layers = {conv(channels, K, 3, 1, 1, false), simple(LayerKind::BatchNorm, K), simple(LayerKind::Relu)};
      }
    } else if (tok.op == "M") {
      if (K != channels) {
        throw BuildError(where + ": max-pool cannot change channels " + std::to_string(channels) + " -> " +
                         std::to_string(K));
      }
      st.layers = {pool(LayerKind::MaxPool, 2, 2)};
      res /= 2;
    } else if (tok.op == "D") {
      DenseBlockSpec d{0, k, cfg.bottleneck_factor, std::nullopt};
      if (K > channels) {
        if ((K - channels) % k != 0) {
          throw BuildError(where + ": " + std::to_string(K) + " - " + std::to_string(channels) +
                           " input channels is not a multiple of growth rate " + std::to_string(k));
        }
        d.n_layers = (K - channels) / k;
      } else {
        d.n_layers = cfg.compressed_block_layers;
        d.compress_to = K;
      }
      st.layers = {dense(channels, d)};
    } else if (tok.op == "T") {
      st.layers = {transition(channels, K, Resample::Down)};
      res /= 2;
    } else {  // DT
      st.layers = {transition(channels, K, Resample::Up)};
      res *= 2;
    }
    channels = K;
    spec.stages.push_back(std::move(st));
    expected.push_back(K);

    const int idx = static_cast<int>(i);
    if (tok.op == "M" || tok.op == "T") encoder.push_back({idx, K, res});
    if (tok.op == "DT") {
      for (auto& e : encoder) {
        if (!e.used && e.channels == K && e.resolution == res) {
          spec.skips.push_back({e.stage, idx, MergeKind::Add});
          e.used = true;
          break;
        }
      }
    }
  }

  const auto table = layer_table(spec);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].shape.channels != expected[i]) {
      throw BuildError("generator stage " + std::to_string(i) + " '" + table[i].label + "' produces " +
                       std::to_string(table[i].shape.channels) + " channels");
    }
  }
  const Shape out = table.back().shape;
  if (out != Shape{cfg.out_channels, cfg.input_size, cfg.input_size}) {
    throw BuildError("generator output is " + std::to_string(out.channels) + "x" + std::to_string(out.height) + "x" +
                     std::to_string(out.width) + ", expected " + std::to_string(cfg.out_channels) + "x" +
                     std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
  }
  return spec;
}

NetworkSpec build_discriminator(const DiscriminatorConfig& cfg) {
  NetworkSpec spec;
  spec.name = "discriminator";
  const int in = cfg.heatmap_channels + cfg.image_channels;
  spec.input = {in, cfg.input_size, cfg.input_size};

  struct Row {
    int channels, stride;
    bool norm;
  };
  constexpr Row kRows[] = {{64, 2, false}, {128, 2, true}, {256, 2, true}, {512, 1, true}};
  int c = in;
  for (const Row& r : kRows) {
    const int out = scaled(r.channels, cfg.width_divisor, "discriminator");
    Stage st{"C(" + std::to_string(out) + ")", {conv(c, out, 4, r.stride, 1, !r.norm)}};
    if (r.norm) st.layers.push_back(simple(LayerKind::BatchNorm, out));
    st.layers.push_back(leaky(0.2));
    spec.stages.push_back(std::move(st));
    c = out;
  }
  spec.stages.push_back({"C(1)", {conv(c, 1, 4, 1, 1, true), simple(LayerKind::Sigmoid)}});
  layer_table(spec);
  return spec;
}

NetworkSpec build_vgg16_backbone(const VggConfig& cfg) {
  NetworkSpec spec;
  spec.name = "vgg16";
  spec.input = {3, cfg.input_size, cfg.input_size};
  constexpr int kBlocks[5][2] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  int c = 3;
  for (int b = 0; b < 5; ++b) {
    const int out = scaled(kBlocks[b][0], cfg.width_divisor, "vgg16");
    for (int i = 0; i < kBlocks[b][1]; ++i) {
      spec.stages.push_back({"conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1),
                             {conv(c, out, 3, 1, 1, true), simple(LayerKind::Relu)}});
      c = out;
    }
    spec.stages.push_back({"pool" + std::to_string(b + 1), {pool(LayerKind::MaxPool, 2, 2)}});
  }
  layer_table(spec);
  return spec;
}

NetworkSpec build_perceptual_extractor(const VggConfig& cfg) {
  const auto full = build_vgg16_backbone(cfg);
  auto spec = truncated(full, find_stage(full, kPerceptualLayer));
  spec.name = "vgg16_conv4_3";
  return spec;
}

NetworkSpec build_gender_classifier(const ClassifierConfig& cfg) {
  NetworkSpec spec = build_vgg16_backbone(cfg.backbone);
  spec.name = "gender_classifier";
  const int features = output_shape(spec).channels;
  const int hidden = scaled(cfg.hidden, cfg.backbone.width_divisor, "classifier hidden layer");
  spec.stages.push_back({"gap", {simple(LayerKind::GlobalPool)}});
  spec.stages.push_back({"fc1", {affine(features, hidden), simple(LayerKind::Relu)}});
  spec.stages.push_back({"fc2", {affine(hidden, 1), simple(LayerKind::Sigmoid)}});
  layer_table(spec);
  return spec;
}

int classifier_backbone_stages(const NetworkSpec& classifier) { return find_stage(classifier, "gap"); }

}  // namespace gpgan::nn

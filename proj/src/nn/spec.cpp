#include "gpgan/nn/spec.hpp"

#include <array>
#include <string_view>

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"

namespace gpgan::nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 13> kKindNames{{
    {LayerKind::Conv, "conv"},
    {LayerKind::TransposedConv, "transposed-conv"},
    {LayerKind::MaxPool, "max-pool"},
    {LayerKind::AvgPool, "avg-pool"},
    {LayerKind::BatchNorm, "batch-norm"},
    {LayerKind::Relu, "relu"},
    {LayerKind::LeakyRelu, "leaky-relu"},
    {LayerKind::Tanh, "tanh"},
    {LayerKind::Sigmoid, "sigmoid"},
    {LayerKind::DenseBlock, "dense-block"},
    {LayerKind::Transition, "transition"},
    {LayerKind::GlobalPool, "global-pool"},
    {LayerKind::Affine, "affine"},
}};

LayerKind kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  throw BuildError("unknown layer kind '" + std::string(s) + "'");
}

std::string where(const NetworkSpec& spec, std::size_t stage, std::size_t layer) {
  return spec.name + ": stage " + std::to_string(stage) + " '" + spec.stages[stage].label +
         "', layer " + std::to_string(layer) + " (" + to_string(spec.stages[stage].layers[layer].kind) +
         ")";
}

int conv_out(int size, int kernel, int stride, int pad) { return (size + 2 * pad - kernel) / stride + 1; }

Shape apply_layer(const NetworkSpec& spec, std::size_t si, std::size_t li, Shape s) {
  const LayerSpec& l = spec.stages[si].layers[li];
  auto fail = [&](const std::string& what) { throw BuildError(where(spec, si, li) + ": " + what); };
  auto expect_channels = [&](int want) {
    if (want != s.channels) {
      fail("expects " + std::to_string(want) + " input channels but receives " + std::to_string(s.channels));
    }
  };
  auto spatial = [&](int h, int w) {
    if (h < 1 || w < 1) fail("spatial size collapses to " + std::to_string(h) + "x" + std::to_string(w));
    s.height = h;
    s.width = w;
  };

  switch (l.kind) {
    case LayerKind::Conv:
      expect_channels(l.in_channels);
      if (l.kernel < 1 || l.stride < 1 || l.out_channels < 1) fail("invalid conv parameters");
      spatial(conv_out(s.height, l.kernel, l.stride, l.padding), conv_out(s.width, l.kernel, l.stride, l.padding));
      s.channels = l.out_channels;
      break;
    case LayerKind::TransposedConv:
      expect_channels(l.in_channels);
      if (l.kernel < 1 || l.stride < 1 || l.out_channels < 1) fail("invalid transposed-conv parameters");
      spatial((s.height - 1) * l.stride - 2 * l.padding + l.kernel,
              (s.width - 1) * l.stride - 2 * l.padding + l.kernel);
      s.channels = l.out_channels;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      if (l.kernel < 1 || l.stride < 1) fail("invalid pooling parameters");
      spatial(conv_out(s.height, l.kernel, l.stride, l.padding), conv_out(s.width, l.kernel, l.stride, l.padding));
      break;
    case LayerKind::BatchNorm:
      expect_channels(l.in_channels);
      break;
    case LayerKind::Relu:
    case LayerKind::LeakyRelu:
    case LayerKind::Tanh:
    case LayerKind::Sigmoid:
      break;
    case LayerKind::DenseBlock:
      expect_channels(l.in_channels);
      if (l.dense.n_layers < 1 || l.dense.growth_rate < 1 || l.dense.bottleneck_factor < 1) {
        fail("dense block needs n_layers, growth_rate, bottleneck_factor >= 1");
      }
      if (l.dense.compress_to && *l.dense.compress_to < 1) fail("compress_to must be positive");
      s.channels = l.dense.output_channels(l.in_channels);
      if (l.out_channels != 0 && l.out_channels != s.channels) {
        fail("declares " + std::to_string(l.out_channels) + " output channels but produces " +
             std::to_string(s.channels));
      }
      break;
    case LayerKind::Transition:
      expect_channels(l.in_channels);
      if (l.out_channels < 1) fail("transition needs out_channels >= 1");
      if (l.resample == Resample::Down) {
        if (s.height % 2 || s.width % 2) fail("downsampling transition needs even spatial size");
        spatial(s.height / 2, s.width / 2);
      } else {
        spatial(s.height * 2, s.width * 2);
      }
      s.channels = l.out_channels;
      break;
    case LayerKind::GlobalPool:
      spatial(1, 1);
      break;
    case LayerKind::Affine:
      if (s.height != 1 || s.width != 1) fail("affine layer needs a pooled 1x1 input");
      expect_channels(l.in_channels);
      s.channels = l.out_channels;
      break;
  }
  return s;
}

std::string shape_str(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

}  // namespace

const char* to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name.data();
  }
  return "?";
}

std::vector<StageShape> layer_table(const NetworkSpec& spec) {
  if (spec.input.channels < 1 || spec.input.height < 1 || spec.input.width < 1) {
    throw BuildError(spec.name + ": invalid input shape");
  }
  for (const SkipEdge& e : spec.skips) {
    if (e.from < 0 || e.to < 0 || e.from >= e.to || e.to >= static_cast<int>(spec.stages.size())) {
      throw BuildError(spec.name + ": skip edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                       " must point forward between existing stages");
    }
  }
  std::vector<StageShape> table;
  table.reserve(spec.stages.size());
  Shape s = spec.input;
  for (std::size_t si = 0; si < spec.stages.size(); ++si) {
    for (std::size_t li = 0; li < spec.stages[si].layers.size(); ++li) s = apply_layer(spec, si, li, s);
    for (const SkipEdge& e : spec.skips) {
      if (e.to != static_cast<int>(si)) continue;
      const Shape& src = table[static_cast<std::size_t>(e.from)].shape;
      const std::string edge = spec.name + ": skip " + spec.stages[e.from].label + " -> " + spec.stages[si].label;
      if (e.merge == MergeKind::Add) {
        if (!(src == s)) throw BuildError(edge + " adds " + shape_str(src) + " to " + shape_str(s));
      } else {
        if (src.height != s.height || src.width != s.width) {
          throw BuildError(edge + " concatenates mismatched spatial sizes");
        }
        s.channels += src.channels;
      }
    }
    table.push_back({spec.stages[si].label, s});
  }
  return table;
}

Shape output_shape(const NetworkSpec& spec) {
  const auto table = layer_table(spec);
  return table.empty() ? spec.input : table.back().shape;
}

NetworkSpec truncated(const NetworkSpec& spec, int last) {
  if (last < 0 || last >= static_cast<int>(spec.stages.size())) {
    throw BuildError(spec.name + ": cannot truncate at stage " + std::to_string(last));
  }
  NetworkSpec out = spec;
  out.stages.resize(static_cast<std::size_t>(last) + 1);
  std::erase_if(out.skips, [&](const SkipEdge& e) { return e.to > last; });
  return out;
}

int find_stage(const NetworkSpec& spec, const std::string& label) {
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    if (spec.stages[i].label == label) return static_cast<int>(i);
  }
  throw BuildError(spec.name + ": no stage labelled '" + label + "'");
}

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  for (const Stage& st : spec.stages) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& l : st.layers) {
      nlohmann::json j{{"kind", to_string(l.kind)},
                       {"in", l.in_channels},
                       {"out", l.out_channels},
                       {"kernel", l.kernel},
                       {"stride", l.stride},
                       {"pad", l.padding},
                       {"bias", l.bias}};
      if (l.kind == LayerKind::LeakyRelu) j["slope"] = l.negative_slope;
      if (l.kind == LayerKind::Transition) j["resample"] = l.resample == Resample::Down ? "down" : "up";
      if (l.kind == LayerKind::DenseBlock) {
        j["dense"] = {{"n_layers", l.dense.n_layers},
                      {"growth_rate", l.dense.growth_rate},
                      {"bottleneck_factor", l.dense.bottleneck_factor}};
        if (l.dense.compress_to) j["dense"]["compress_to"] = *l.dense.compress_to;
      }
      layers.push_back(std::move(j));
    }
    stages.push_back({{"label", st.label}, {"layers", std::move(layers)}});
  }
  nlohmann::json skips = nlohmann::json::array();
  for (const SkipEdge& e : spec.skips) {
    skips.push_back({{"from", e.from}, {"to", e.to}, {"merge", e.merge == MergeKind::Add ? "add" : "concat"}});
  }
  return {{"name", spec.name},
          {"input", {spec.input.channels, spec.input.height, spec.input.width}},
          {"stages", std::move(stages)},
          {"skips", std::move(skips)}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    spec.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    for (const auto& st : j.at("stages")) {
      Stage stage{st.at("label").get<std::string>(), {}};
      for (const auto& lj : st.at("layers")) {
        LayerSpec l;
        l.kind = kind_from_string(lj.at("kind").get<std::string>());
        l.in_channels = lj.at("in").get<int>();
        l.out_channels = lj.at("out").get<int>();
        l.kernel = lj.at("kernel").get<int>();
        l.stride = lj.at("stride").get<int>();
        l.padding = lj.at("pad").get<int>();
        l.bias = lj.at("bias").get<bool>();
        if (lj.contains("slope")) l.negative_slope = lj.at("slope").get<double>();
        if (lj.contains("resample")) l.resample = lj.at("resample") == "up" ? Resample::Up : Resample::Down;
        if (lj.contains("dense")) {
          const auto& d = lj.at("dense");
          l.dense.n_layers = d.at("n_layers").get<int>();
          l.dense.growth_rate = d.at("growth_rate").get<int>();
          l.dense.bottleneck_factor = d.at("bottleneck_factor").get<int>();
          if (d.contains("compress_to")) l.dense.compress_to = d.at("compress_to").get<int>();
        }
        stage.layers.push_back(l);
      }
      spec.stages.push_back(std::move(stage));
    }
    for (const auto& e : j.at("skips")) {
      spec.skips.push_back({e.at("from").get<int>(), e.at("to").get<int>(),
                            e.at("merge") == "concat" ? MergeKind::Concat : MergeKind::Add});
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw BuildError(std::string("malformed network spec: ") + e.what());
  }
}

std::string spec_hash(const NetworkSpec& spec) { return io::hex64(io::fnv1a64(to_json(spec).dump())); }

}  // namespace gpgan::nn

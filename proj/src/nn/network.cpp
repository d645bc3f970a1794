#include "gpgan/nn/network.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <set>

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"

namespace gpgan::nn {

namespace {

std::string prefix_of(std::size_t stage, std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu.l%zu.", stage, layer);
  return buf;
}

constexpr const char* kFormat = "gpgan-checkpoint/1";
constexpr const char* kDataFile = "tensors.bin";

const char* dtype_name(torch::Dtype t) {
  if (t == torch::kFloat32) return "float32";
  if (t == torch::kFloat64) return "float64";
  throw ArgumentError("unsupported tensor dtype for checkpoints");
}

torch::Dtype dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  throw LoadError("unsupported dtype '" + s + "' in checkpoint");
}

void byteswap_inplace(char* data, std::size_t nbytes, std::size_t width) {
  for (std::size_t i = 0; i + width <= nbytes; i += width) std::reverse(data + i, data + i + width);
}

}  // namespace

Network::Network(NetworkSpec spec, ParameterSet params)
    : spec_(std::move(spec)), params_(std::move(params)), table_(layer_table(spec_)) {
  for (const ParamDesc& d : parameter_layout(spec_)) {
    const auto& t = params_.at(d.name);
    if (t.sizes() != c10::IntArrayRef(d.shape)) {
      throw LoadError(spec_.name + ": parameter '" + d.name + "' has shape " + c10::str(t.sizes()));
    }
  }
}

torch::Tensor Network::norm(const std::string& prefix, const torch::Tensor& x, Mode mode) const {
  return torch::batch_norm(x, params_.at(prefix + "weight"), params_.at(prefix + "bias"),
                           params_.at(prefix + "running_mean"), params_.at(prefix + "running_var"),
                           mode == Mode::Train, kBatchNormMomentum, kBatchNormEps, false);
}

torch::Tensor Network::run_layer(const LayerSpec& l, const std::string& p, torch::Tensor x, Mode mode) const {
  auto bias = [&]() -> torch::Tensor { return l.bias ? params_.at(p + "bias") : torch::Tensor(); };
  switch (l.kind) {
    case LayerKind::Conv:
      return torch::conv2d(x, params_.at(p + "weight"), bias(), l.stride, l.padding);
    case LayerKind::TransposedConv:
      return torch::conv_transpose2d(x, params_.at(p + "weight"), bias(), l.stride, l.padding);
    case LayerKind::MaxPool:
      return torch::max_pool2d(x, l.kernel, l.stride, l.padding);
    case LayerKind::AvgPool:
      return torch::avg_pool2d(x, l.kernel, l.stride, l.padding);
    case LayerKind::BatchNorm:
      return norm(p, x, mode);
    case LayerKind::Relu:
      return torch::relu(x);
    case LayerKind::LeakyRelu:
      return torch::leaky_relu(x, l.negative_slope);
    case LayerKind::Tanh:
      return torch::tanh(x);
    case LayerKind::Sigmoid:
      return torch::sigmoid(x);
    case LayerKind::DenseBlock: {
      std::vector<torch::Tensor> features{x};
      features.reserve(static_cast<std::size_t>(l.dense.n_layers) + 1);
      for (int u = 0; u < l.dense.n_layers; ++u) {
        const std::string d = p + "d" + std::to_string(u) + ".";
        auto h = features.size() == 1 ? features[0] : torch::cat(features, 1);
        h = torch::conv2d(torch::relu(norm(d + "bn1.", h, mode)), params_.at(d + "conv1.weight"));
        h = torch::conv2d(torch::relu(norm(d + "bn2.", h, mode)), params_.at(d + "conv2.weight"), {}, 1, 1);
        features.push_back(h);
      }
      auto out = torch::cat(features, 1);
      if (l.dense.compress_to) {
        out = torch::conv2d(torch::relu(norm(p + "cmp.bn.", out, mode)), params_.at(p + "cmp.conv.weight"));
      }
      return out;
    }
    case LayerKind::Transition: {
      auto h = torch::relu(norm(p + "bn.", x, mode));
      if (l.resample == Resample::Down) {
        return torch::avg_pool2d(torch::conv2d(h, params_.at(p + "conv.weight")), 2, 2);
      }
      return torch::conv_transpose2d(h, params_.at(p + "conv.weight"), {}, 2, 1);
    }
    case LayerKind::GlobalPool:
      return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    case LayerKind::Affine:
      return torch::linear(x, params_.at(p + "weight"), bias());
  }
  return x;
}

torch::Tensor Network::forward(const torch::Tensor& input, Mode mode) const {
  return forward_until(input, static_cast<int>(spec_.stages.size()) - 1, mode);
}

torch::Tensor Network::forward_until(const torch::Tensor& input, int last, Mode mode) const {
  if (input.dim() != 4 || input.size(1) != spec_.input.channels || input.size(2) != spec_.input.height ||
      input.size(3) != spec_.input.width) {
    throw ArgumentError(spec_.name + ": expected input N x " + std::to_string(spec_.input.channels) + " x " +
                        std::to_string(spec_.input.height) + " x " + std::to_string(spec_.input.width) +
                        ", got " + c10::str(input.sizes()));
  }
  if (last < 0 || last >= static_cast<int>(spec_.stages.size())) {
    throw ArgumentError(spec_.name + ": stage " + std::to_string(last) + " out of range");
  }
  std::set<int> sources;
  for (const SkipEdge& e : spec_.skips) {
    if (e.to <= last) sources.insert(e.from);
  }
  std::vector<torch::Tensor> saved(static_cast<std::size_t>(last) + 1);
  torch::Tensor x = input;
  for (int si = 0; si <= last; ++si) {
    const auto& layers = spec_.stages[static_cast<std::size_t>(si)].layers;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      x = run_layer(layers[li], prefix_of(static_cast<std::size_t>(si), li), x, mode);
    }
    for (const SkipEdge& e : spec_.skips) {
      if (e.to != si) continue;
      const auto& src = saved[static_cast<std::size_t>(e.from)];
      x = e.merge == MergeKind::Add ? x + src : torch::cat({x, src}, 1);
    }
    if (sources.count(si)) saved[static_cast<std::size_t>(si)] = x;
  }
  return x;
}

// ---------------------------------------------------------------------------

void save_parameters(const NetworkSpec& spec, const ParameterSet& params, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string blob;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& name : params.names()) {
    auto t = params.at(name).detach().cpu().contiguous();
    const std::size_t offset = blob.size(), nbytes = t.nbytes();
    blob.append(static_cast<const char*>(t.data_ptr()), nbytes);
    if constexpr (std::endian::native == std::endian::big) {
      byteswap_inplace(blob.data() + offset, nbytes, t.element_size());
    }
    tensors.push_back({{"name", name},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"shape", t.sizes().vec()},
                       {"file", kDataFile},
                       {"offset", offset},
                       {"nbytes", nbytes},
                       {"buffer", params.is_buffer(name)},
                       {"frozen", params.is_frozen(name)}});
  }
  const nlohmann::json manifest{
      {"format", kFormat},
      {"network", spec.name},
      {"spec", to_json(spec)},
      {"spec_hash", spec_hash(spec)},
      {"epoch", params.meta.epoch},
      {"seed", params.meta.seed},
      {"content_digest", io::hex64(io::fnv1a64(blob))},
      {"tensors", std::move(tensors)},
  };
  io::write_file_atomic((std::filesystem::path(dir) / kDataFile).string(), blob);
  io::write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(1));
}

namespace {

nlohmann::json read_manifest(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "manifest.json";
  if (!std::filesystem::exists(path)) throw LoadError("no checkpoint manifest at " + path.string());
  try {
    auto j = nlohmann::json::parse(io::read_file(path.string()));
    if (j.value("format", "") != kFormat) throw LoadError(path.string() + ": unknown checkpoint format");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string checkpoint_digest(const std::string& dir) { return read_manifest(dir).at("content_digest"); }

ParameterSet load_parameters(const NetworkSpec& spec, const std::string& dir) {
  const auto manifest = read_manifest(dir);
  const std::string want = spec_hash(spec);
  if (manifest.at("spec_hash") != want) {
    throw LoadError(dir + ": spec hash " + manifest.at("spec_hash").get<std::string>() +
                    " does not match network '" + spec.name + "' (" + want + ")");
  }
  const auto data_path = (std::filesystem::path(dir) / kDataFile).string();
  if (!std::filesystem::exists(data_path)) throw LoadError("missing tensor file " + data_path);
  std::string blob = io::read_file(data_path);
  if (io::hex64(io::fnv1a64(blob)) != manifest.at("content_digest")) {
    throw LoadError(dir + ": tensor file digest mismatch (corrupt checkpoint)");
  }

  const auto& entries = manifest.at("tensors");
  const torch::Dtype dtype =
      entries.empty() ? torch::kFloat32 : dtype_from(entries.at(0).at("dtype").get<std::string>());
  ParameterSet ps = ParameterSet::initialize(spec, manifest.at("seed").get<std::uint64_t>(), dtype);
  std::set<std::string> seen;
  std::vector<std::string> frozen;
  torch::NoGradGuard no_grad;
  for (const auto& e : entries) {
    const std::string name = e.at("name");
    if (!ps.contains(name)) throw LoadError(dir + ": unexpected tensor '" + name + "'");
    auto& dst = ps.at(name);
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    if (dst.sizes() != c10::IntArrayRef(shape) || dtype_from(e.at("dtype")) != dst.scalar_type()) {
      throw LoadError(dir + ": tensor '" + name + "' has mismatched shape or dtype");
    }
    const std::size_t offset = e.at("offset"), nbytes = e.at("nbytes");
    if (offset + nbytes > blob.size() || nbytes != dst.nbytes()) {
      throw LoadError(dir + ": tensor '" + name + "' extends past the data file");
    }
    char* src = blob.data() + offset;
    if constexpr (std::endian::native == std::endian::big) byteswap_inplace(src, nbytes, dst.element_size());
    std::memcpy(dst.data_ptr(), src, nbytes);
    seen.insert(name);
    if (e.value("frozen", false)) frozen.push_back(name);
  }
  if (seen.size() != ps.size()) throw LoadError(dir + ": checkpoint is missing tensors");
  if (!frozen.empty()) {
    int first_trainable = 0;
    for (const auto& n : frozen) first_trainable = std::max(first_trainable, stage_of(n) + 1);
    ps.freeze_stages_before(first_trainable);
  }
  ps.meta.epoch = manifest.at("epoch");
  ps.meta.seed = manifest.at("seed");
  ps.meta.spec_hash = want;
  return ps;
}

namespace {

constexpr const char* kTensorFormat = "gpgan-tensors/1";

}  // namespace

void save_tensors(const std::string& dir, const std::vector<NamedTensor>& tensors, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  std::string blob;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& nt : tensors) {
    auto t = nt.value.detach().cpu().contiguous();
    const std::size_t offset = blob.size(), nbytes = t.nbytes();
    blob.append(static_cast<const char*>(t.data_ptr()), nbytes);
    if constexpr (std::endian::native == std::endian::big) {
      byteswap_inplace(blob.data() + offset, nbytes, t.element_size());
    }
    entries.push_back({{"name", nt.name},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"shape", t.sizes().vec()},
                       {"offset", offset},
                       {"nbytes", nbytes}});
  }
  const nlohmann::json manifest{{"format", kTensorFormat},
                                {"meta", meta},
                                {"content_digest", io::hex64(io::fnv1a64(blob))},
                                {"tensors", std::move(entries)}};
  io::write_file_atomic((std::filesystem::path(dir) / kDataFile).string(), blob);
  io::write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(1));
}

std::vector<NamedTensor> load_tensors(const std::string& dir, nlohmann::json* meta) {
  const auto path = std::filesystem::path(dir) / "manifest.json";
  if (!std::filesystem::exists(path)) throw LoadError("no tensor manifest at " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kTensorFormat) throw LoadError(path.string() + ": unknown tensor format");
  const auto data_path = (std::filesystem::path(dir) / kDataFile).string();
  if (!std::filesystem::exists(data_path)) throw LoadError("missing tensor file " + data_path);
  std::string blob = io::read_file(data_path);
  if (io::hex64(io::fnv1a64(blob)) != manifest.at("content_digest")) {
    throw LoadError(dir + ": tensor file digest mismatch (corrupt checkpoint)");
  }
  std::vector<NamedTensor> out;
  for (const auto& e : manifest.at("tensors")) {
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(e.at("dtype"))));
    const std::size_t offset = e.at("offset"), nbytes = e.at("nbytes");
    if (offset + nbytes > blob.size() || nbytes != t.nbytes()) {
      throw LoadError(dir + ": tensor '" + e.at("name").get<std::string>() + "' extends past the data file");
    }
    char* src = blob.data() + offset;
    if constexpr (std::endian::native == std::endian::big) byteswap_inplace(src, nbytes, t.element_size());
    std::memcpy(t.data_ptr(), src, nbytes);
    out.push_back({e.at("name"), t});
  }
  if (meta) *meta = manifest.at("meta");
  return out;
}

Network load_network(const std::string& dir) {
  const auto manifest = read_manifest(dir);
  NetworkSpec spec = spec_from_json(manifest.at("spec"));
  auto params = load_parameters(spec, dir);
  return Network(std::move(spec), std::move(params));
}

}  // namespace gpgan::nn

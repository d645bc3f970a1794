#include "gpgan/nn/params.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstring>

#include "gpgan/errors.hpp"

namespace gpgan::nn {

namespace {

std::string stage_prefix(std::size_t stage, std::size_t layer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu.l%zu.", stage, layer);
  return buf;
}

void add_norm(std::vector<ParamDesc>& out, const std::string& p, std::int64_t c) {
  out.push_back({p + "weight", {c}, ParamRole::NormScale});
  out.push_back({p + "bias", {c}, ParamRole::NormShift});
  out.push_back({p + "running_mean", {c}, ParamRole::RunningMean});
  out.push_back({p + "running_var", {c}, ParamRole::RunningVar});
}

}  // namespace

std::vector<ParamDesc> parameter_layout(const NetworkSpec& spec) {
  std::vector<ParamDesc> out;
  for (std::size_t si = 0; si < spec.stages.size(); ++si) {
    const auto& layers = spec.stages[si].layers;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const LayerSpec& l = layers[li];
      const std::string p = stage_prefix(si, li);
      const std::int64_t in = l.in_channels, o = l.out_channels, k = l.kernel;
      switch (l.kind) {
        case LayerKind::Conv:
          out.push_back({p + "weight", {o, in, k, k}, ParamRole::ConvWeight});
          if (l.bias) out.push_back({p + "bias", {o}, ParamRole::Bias});
          break;
        case LayerKind::TransposedConv:
          out.push_back({p + "weight", {in, o, k, k}, ParamRole::ConvWeight});
          if (l.bias) out.push_back({p + "bias", {o}, ParamRole::Bias});
          break;
        case LayerKind::BatchNorm:
          add_norm(out, p, in);
          break;
        case LayerKind::DenseBlock: {
          const std::int64_t g = l.dense.growth_rate, mid = l.dense.bottleneck_factor * g;
          for (int u = 0; u < l.dense.n_layers; ++u) {
            const std::string d = p + "d" + std::to_string(u) + ".";
            const std::int64_t c = in + u * g;
            add_norm(out, d + "bn1.", c);
            out.push_back({d + "conv1.weight", {mid, c, 1, 1}, ParamRole::ConvWeight});
            add_norm(out, d + "bn2.", mid);
            out.push_back({d + "conv2.weight", {g, mid, 3, 3}, ParamRole::ConvWeight});
          }
          if (l.dense.compress_to) {
            const std::int64_t total = in + l.dense.n_layers * g;
            add_norm(out, p + "cmp.bn.", total);
            out.push_back({p + "cmp.conv.weight", {*l.dense.compress_to, total, 1, 1}, ParamRole::ConvWeight});
          }
          break;
        }
        case LayerKind::Transition:
          add_norm(out, p + "bn.", in);
          if (l.resample == Resample::Down) {
            out.push_back({p + "conv.weight", {o, in, 1, 1}, ParamRole::ConvWeight});
          } else {
            out.push_back({p + "conv.weight", {in, o, 4, 4}, ParamRole::ConvWeight});
          }
          break;
        case LayerKind::Affine:
          out.push_back({p + "weight", {o, in}, ParamRole::AffineWeight});
          if (l.bias) out.push_back({p + "bias", {o}, ParamRole::Bias});
          break;
        default:
          break;
      }
    }
  }
  return out;
}

int stage_of(const std::string& name) {
  if (name.size() < 2 || name[0] != 's') return -1;
  return std::atoi(name.c_str() + 1);
}

ParameterSet ParameterSet::initialize(const NetworkSpec& spec, std::uint64_t seed, torch::Dtype dtype, Init init) {
  layer_table(spec);  // reject inconsistent specs before allocating
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
  ParameterSet ps;
  for (const ParamDesc& d : parameter_layout(spec)) {
    torch::Tensor t;
    switch (d.role) {
      case ParamRole::ConvWeight:
      case ParamRole::AffineWeight:
        if (init == Init::He) {
          const double fan_in = static_cast<double>(c10::multiply_integers(d.shape) / d.shape[0]);
          t = at::normal(0.0, std::sqrt(2.0 / fan_in), d.shape, gen, f64);
        } else {
          t = at::normal(0.0, 0.02, d.shape, gen, f64);
        }
        break;
      case ParamRole::NormScale:
        t = at::normal(1.0, 0.02, d.shape, gen, f64);
        break;
      case ParamRole::RunningVar:
        t = torch::ones(d.shape, f64);
        break;
      default:
        t = torch::zeros(d.shape, f64);
        break;
    }
    ps.add(d, t.to(dtype));
  }
  ps.meta.seed = seed;
  ps.meta.spec_hash = spec_hash(spec);
  ps.refresh_grad_flags();
  return ps;
}

void ParameterSet::add(const ParamDesc& desc, torch::Tensor value) {
  order_.push_back(desc.name);
  tensors_[desc.name] = std::move(value);
  buffer_[desc.name] = desc.is_buffer();
  frozen_[desc.name] = false;
}

const torch::Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("no parameter named '" + name + "'");
  return it->second;
}

torch::Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError("no parameter named '" + name + "'");
  return it->second;
}

bool ParameterSet::is_buffer(const std::string& name) const { return buffer_.at(name); }
bool ParameterSet::is_frozen(const std::string& name) const { return frozen_.at(name); }

std::vector<torch::Tensor> ParameterSet::trainable() const {
  std::vector<torch::Tensor> out;
  for (const auto& n : order_) {
    if (!buffer_.at(n) && !frozen_.at(n)) out.push_back(tensors_.at(n));
  }
  return out;
}

std::vector<std::string> ParameterSet::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (!buffer_.at(n) && !frozen_.at(n)) out.push_back(n);
  }
  return out;
}

void ParameterSet::freeze_stages_before(int first_trainable_stage) {
  for (const auto& n : order_) frozen_[n] = stage_of(n) < first_trainable_stage;
  refresh_grad_flags();
}

void ParameterSet::freeze_all() {
  for (auto& [n, f] : frozen_) f = true;
  refresh_grad_flags();
}

void ParameterSet::refresh_grad_flags() {
  for (const auto& n : order_) {
    tensors_[n].set_requires_grad(!buffer_[n] && !frozen_[n]);
  }
}

std::size_t ParameterSet::assign_from(const ParameterSet& src, int max_stage) {
  torch::NoGradGuard no_grad;
  std::size_t copied = 0;
  for (const auto& n : order_) {
    if (max_stage >= 0 && stage_of(n) > max_stage) continue;
    if (!src.contains(n)) continue;
    const auto& from = src.at(n);
    auto& to = tensors_[n];
    if (from.sizes() != to.sizes()) {
      throw LoadError("shape mismatch for '" + n + "': asset " + c10::str(from.sizes()) + " vs network " +
                      c10::str(to.sizes()));
    }
    to.copy_(from);
    ++copied;
  }
  return copied;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out = *this;
  for (auto& [n, t] : out.tensors_) t = t.detach().clone();
  out.refresh_grad_flags();
  return out;
}

ParameterSet ParameterSet::to(torch::Dtype dtype) const {
  ParameterSet out = *this;
  for (auto& [n, t] : out.tensors_) t = t.detach().to(dtype).clone();
  out.refresh_grad_flags();
  return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.order_ != b.order_) return false;
  for (const auto& n : a.order_) {
    const auto ta = a.tensors_.at(n).detach().contiguous();
    const auto tb = b.tensors_.at(n).detach().contiguous();
    if (ta.scalar_type() != tb.scalar_type() || ta.sizes() != tb.sizes()) return false;
    if (std::memcmp(ta.data_ptr(), tb.data_ptr(), ta.nbytes()) != 0) return false;
  }
  return true;
}

}  // namespace gpgan::nn

#include "gpgan/training.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"
#include "gpgan/nn/architectures.hpp"

namespace gpgan::training {

namespace fs = std::filesystem;
using nn::Mode;
using nn::Network;
using nn::ParameterSet;

landmarks::HeatmapOptions TrainConfig::heatmap() const {
  return {landmarks::kImageSize, sigma,
          sigma_unit == "normalized" ? landmarks::SigmaUnit::Normalized : landmarks::SigmaUnit::Pixels};
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("invalid training config: " + what);
  };
  need(lr_g > 0 && lr_d > 0, "learning rates must be positive");
  need(epochs >= 0 && decay_start >= 0 && decay_per_epoch >= 0, "schedule values must be non-negative");
  need(batch_size >= 1 && classifier_batch_size >= 1, "batch sizes must be >= 1");
  need(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0, "bad Adam settings");
  need(sigma > 0, "sigma must be positive");
  need(sigma_unit == "px" || sigma_unit == "normalized", "sigma_unit must be px or normalized");
  need(g_width_divisor >= 1 && d_width_divisor >= 1 && vgg_width_divisor >= 1, "width divisors must be >= 1");
  need(perceptual_size >= 32 && classifier_size >= 32, "VGG input sizes must be >= 32");
  need(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  need(max_steps >= 0 && classifier_epochs >= 0 && classifier_lr > 0, "bad step or classifier settings");
  weights.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"lr_g", c.lr_g},
      {"lr_d", c.lr_d},
      {"epochs", c.epochs},
      {"decay_start", c.decay_start},
      {"decay_per_epoch", c.decay_per_epoch},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"max_steps", c.max_steps},
      {"lambda_p", c.weights.lambda_p},
      {"lambda_c", c.weights.lambda_c},
      {"lambda_1", c.weights.lambda_1},
      {"gender_hard_labels", c.gender_hard_labels},
      {"gender_literal", c.gender_literal},
      {"sigma", c.sigma},
      {"sigma_unit", c.sigma_unit},
      {"g_width_divisor", c.g_width_divisor},
      {"d_width_divisor", c.d_width_divisor},
      {"vgg_width_divisor", c.vgg_width_divisor},
      {"perceptual_size", c.perceptual_size},
      {"classifier_size", c.classifier_size},
      {"classifier_hidden", c.classifier_hidden},
      {"classifier_epochs", c.classifier_epochs},
      {"classifier_lr", c.classifier_lr},
      {"classifier_batch_size", c.classifier_batch_size},
      {"manifest", c.manifest},
      {"out_dir", c.out_dir},
      {"vgg_weights", c.vgg_weights},
      {"classifier_checkpoint", c.classifier_checkpoint},
      {"checkpoint_every", c.checkpoint_every},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("training config must be a JSON object");
  nlohmann::json m = to_json(TrainConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!m.contains(key)) throw ArgumentError("unknown config key '" + key + "'");
    const auto& want = m[key];
    const bool ok = (want.is_number() && value.is_number()) || (want.is_boolean() && value.is_boolean()) ||
                    (want.is_string() && value.is_string());
    if (!ok) throw ArgumentError("config key '" + key + "' has the wrong type");
    m[key] = value;
  }
  TrainConfig c;
  c.lr_g = m["lr_g"];
  c.lr_d = m["lr_d"];
  c.epochs = m["epochs"];
  c.decay_start = m["decay_start"];
  c.decay_per_epoch = m["decay_per_epoch"];
  c.batch_size = m["batch_size"];
  c.seed = m["seed"];
  c.adam_beta1 = m["adam_beta1"];
  c.adam_beta2 = m["adam_beta2"];
  c.adam_eps = m["adam_eps"];
  c.max_steps = m["max_steps"];
  c.weights = {m["lambda_p"], m["lambda_c"], m["lambda_1"]};
  c.gender_hard_labels = m["gender_hard_labels"];
  c.gender_literal = m["gender_literal"];
  c.sigma = m["sigma"];
  c.sigma_unit = m["sigma_unit"];
  c.g_width_divisor = m["g_width_divisor"];
  c.d_width_divisor = m["d_width_divisor"];
  c.vgg_width_divisor = m["vgg_width_divisor"];
  c.perceptual_size = m["perceptual_size"];
  c.classifier_size = m["classifier_size"];
  c.classifier_hidden = m["classifier_hidden"];
  c.classifier_epochs = m["classifier_epochs"];
  c.classifier_lr = m["classifier_lr"];
  c.classifier_batch_size = m["classifier_batch_size"];
  c.manifest = m["manifest"];
  c.out_dir = m["out_dir"];
  c.vgg_weights = m["vgg_weights"];
  c.classifier_checkpoint = m["classifier_checkpoint"];
  c.checkpoint_every = m["checkpoint_every"];
  return c;
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ArgumentError("expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json j = to_json(cfg);
  if (!j.contains(key)) throw ArgumentError("unknown config key '" + key + "'");
  if (j[key].is_string()) {
    j[key] = text;
  } else if (j[key].is_boolean()) {
    if (text == "true" || text == "1") {
      j[key] = true;
    } else if (text == "false" || text == "0") {
      j[key] = false;
    } else {
      throw ArgumentError("config key '" + key + "' expects true/false");
    }
  } else {
    nlohmann::json v = nlohmann::json::parse(text, nullptr, false);
    if (!v.is_number()) throw ArgumentError("config key '" + key + "' expects a number, got '" + text + "'");
    j[key] = v;
  }
  cfg = config_from_json(j);
}

TrainConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ArgumentError("config file not found: " + path);
  const std::string text = io::read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return config_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ArgumentError(path + ": " + e.what());
    }
  }
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::string kv = line.substr(b, e - b + 1);
    const auto eq = kv.find('=');
    if (eq != std::string::npos) {
      auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
      k.erase(k.find_last_not_of(" \t") + 1);
      v.erase(0, v.find_first_not_of(" \t"));
      kv = k + "=" + v;
    }
    apply_override(cfg, kv);
  }
  return cfg;
}

double lr_at_epoch(const TrainConfig& cfg, double base, int epoch) {
  if (epoch <= cfg.decay_start) return base;
  const double k = epoch - cfg.decay_start;
  // On a decimal integer grid, so 2e-4 - 50 * 2e-6 lands on 1e-4 exactly.
  for (double scale = 1e6; scale <= 1e15; scale *= 10) {
    const double b = std::round(base * scale), d = std::round(cfg.decay_per_epoch * scale);
    if (std::abs(b - base * scale) < 1e-6 && std::abs(d - cfg.decay_per_epoch * scale) < 1e-6) {
      return std::max(0.0, b - k * d) / scale;
    }
  }
  return std::max(0.0, base - cfg.decay_per_epoch * k);
}

// ---------------------------------------------------------------------------

nn::NetworkSpec generator_spec(const TrainConfig& cfg) {
  nn::GeneratorConfig g;
  g.width_divisor = cfg.g_width_divisor;
  return nn::build_generator(g);
}

nn::NetworkSpec discriminator_spec(const TrainConfig& cfg) {
  return nn::build_discriminator({landmarks::kImageSize, 1, 3, cfg.d_width_divisor});
}

nn::NetworkSpec perceptual_spec(const TrainConfig& cfg) {
  return nn::build_perceptual_extractor({cfg.perceptual_size, cfg.vgg_width_divisor});
}

nn::NetworkSpec classifier_spec(const TrainConfig& cfg) {
  return nn::build_gender_classifier({{cfg.classifier_size, cfg.vgg_width_divisor}, cfg.classifier_hidden});
}

Models build_models(const TrainConfig& cfg) {
  cfg.validate();
  const auto gs = generator_spec(cfg), ds = discriminator_spec(cfg);
  const auto vs = perceptual_spec(cfg), cs = classifier_spec(cfg);
  auto vp = ParameterSet::initialize(vs, cfg.seed + 2, torch::kFloat32, nn::Init::He);
  auto cp = ParameterSet::initialize(cs, cfg.seed + 3, torch::kFloat32, nn::Init::He);
  if (!cfg.vgg_weights.empty()) {
    const Network vgg = nn::load_network(cfg.vgg_weights);
    vp.assign_from(vgg.params());
    cp.assign_from(vgg.params(), nn::classifier_backbone_stages(cs) - 1);
  }
  vp.freeze_all();
  return {Network(gs, ParameterSet::initialize(gs, cfg.seed)), Network(ds, ParameterSet::initialize(ds, cfg.seed + 1)),
          Network(vs, std::move(vp)), Network(cs, std::move(cp))};
}

torch::Tensor classify(const Network& c, const torch::Tensor& images) {
  return c.forward(losses::vgg_input(images, c.spec().input.height), Mode::Eval).view({-1});
}

ClassifierReport pretrain_classifier(Network& c, const std::vector<data::Pair>& pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw ValidationError("classifier pretraining needs at least one pair");
  std::vector<std::size_t> all(pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto full = data::make_batch(pairs, all, cfg.heatmap());

  torch::optim::Adam opt(c.params().trainable(), torch::optim::AdamOptions(cfg.classifier_lr));
  ClassifierReport rep;
  const auto n = static_cast<std::size_t>(full.images.size(0));
  const auto bs = static_cast<std::size_t>(cfg.classifier_batch_size);
  for (int e = 0; e < cfg.classifier_epochs; ++e) {
    const auto order = data::permutation(n, cfg.seed * 7919 + 1000 + static_cast<std::uint64_t>(e));
    double sum = 0;
    int batches = 0;
    for (std::size_t at = 0; at < n; at += bs) {
      std::vector<std::int64_t> idx;
      for (std::size_t k = at; k < std::min(n, at + bs); ++k) idx.push_back(static_cast<std::int64_t>(order[k]));
      const auto sel = torch::tensor(idx);
      auto loss = losses::bce(full.labels.index_select(0, sel), classify(c, full.images.index_select(0, sel)));
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += loss.item<double>();
      ++batches;
    }
    rep.final_loss = sum / std::max(1, batches);
    rep.epochs = e + 1;
  }
  {
    torch::NoGradGuard no_grad;
    const auto pred = classify(c, full.images).gt(0.5).to(full.labels.scalar_type());
    rep.train_accuracy = pred.eq(full.labels).to(torch::kFloat64).mean().item<double>();
  }
  c.params().freeze_all();
  return rep;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, Models models) : cfg_(std::move(cfg)), m_(std::move(models)) {
  cfg_.validate();
  m_.v.params().freeze_all();
  m_.c.params().freeze_all();
  make_optimizers();
  set_epoch(0);
}

void Trainer::make_optimizers() {
  auto opts = [&](double lr) {
    return torch::optim::AdamOptions(lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}).eps(cfg_.adam_eps);
  };
  opt_g_ = std::make_unique<torch::optim::Adam>(m_.g.params().trainable(), opts(cfg_.lr_g));
  opt_d_ = std::make_unique<torch::optim::Adam>(m_.d.params().trainable(), opts(cfg_.lr_d));
}

void Trainer::set_epoch(int epoch) {
  epoch_ = epoch;
  for (auto& g : opt_g_->param_groups()) g.options().set_lr(lr_at_epoch(cfg_, cfg_.lr_g, epoch));
  for (auto& g : opt_d_->param_groups()) g.options().set_lr(lr_at_epoch(cfg_, cfg_.lr_d, epoch));
  for (auto* n : {&m_.g, &m_.d, &m_.v, &m_.c}) n->params().meta.epoch = epoch;
}

double Trainer::lr_g() const { return opt_g_->param_groups().front().options().get_lr(); }

StepResult Trainer::step(const data::Batch& b) {
  StepResult out;
  const auto fake = m_.g.forward(b.heatmaps, Mode::Train);

  const auto real_scores = losses::discriminator_scores(m_.d, b.heatmaps, b.images, Mode::Train);
  const auto fake_scores = losses::discriminator_scores(m_.d, b.heatmaps, fake.detach(), Mode::Train);
  auto ld = losses::d_loss(real_scores, fake_scores);
  out.l_d = ld.item<double>();
  if (!std::isfinite(out.l_d)) throw TrainingError("non-finite l_d at step " + std::to_string(step_));
  opt_d_->zero_grad();
  ld.backward();
  opt_d_->step();

  losses::LossTerms t;
  t.adv = losses::g_adv_loss(losses::discriminator_scores(m_.d, b.heatmaps, fake, Mode::Train));
  if (cfg_.weights.lambda_p > 0) t.perc = losses::PerceptualLoss(&m_.v)(fake, b.images);
  if (cfg_.weights.lambda_c > 0) {
    losses::GenderLoss lc(&m_.c, {cfg_.gender_hard_labels, cfg_.gender_literal});
    t.gender = lc(b.images, fake, b.labels);
  }
  t.l1 = losses::l1_loss(fake, b.images);
  auto comp = losses::composite_loss(t, cfg_.weights, step_);
  opt_g_->zero_grad();
  comp.total.backward({}, std::nullopt, false, m_.g.params().trainable());
  opt_g_->step();

  out.report = comp.report;
  ++step_;
  return out;
}

namespace {

constexpr const char* kStateFormat = "gpgan-train-state/1";

std::vector<nn::NamedTensor> adam_state(torch::optim::Adam& opt, const ParameterSet& ps, nlohmann::json& steps) {
  std::vector<nn::NamedTensor> out;
  const auto names = ps.trainable_names();
  const auto params = ps.trainable();
  steps = nlohmann::json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    out.push_back({names[i] + ".exp_avg", s.exp_avg()});
    out.push_back({names[i] + ".exp_avg_sq", s.exp_avg_sq()});
    steps[names[i]] = s.step();
  }
  return out;
}

void restore_adam(torch::optim::Adam& opt, const ParameterSet& ps, const std::string& dir) {
  nlohmann::json meta;
  const auto tensors = nn::load_tensors(dir, &meta);
  std::map<std::string, torch::Tensor> by_name;
  for (const auto& t : tensors) by_name[t.name] = t.value;
  const auto names = ps.trainable_names();
  const auto params = ps.trainable();
  const auto& steps = meta.at("steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!steps.contains(names[i])) continue;
    auto avg = by_name.find(names[i] + ".exp_avg"), sq = by_name.find(names[i] + ".exp_avg_sq");
    if (avg == by_name.end() || sq == by_name.end()) throw LoadError(dir + ": incomplete optimizer state");
    if (avg->second.sizes() != params[i].sizes()) throw LoadError(dir + ": optimizer state shape mismatch");
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(steps[names[i]].get<std::int64_t>());
    s->exp_avg(avg->second.to(params[i].scalar_type()));
    s->exp_avg_sq(sq->second.to(params[i].scalar_type()));
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace

void Trainer::save(const std::string& dir) const {
  const fs::path root(dir);
  nn::save_parameters(m_.g.spec(), m_.g.params(), (root / "generator").string());
  nn::save_parameters(m_.d.spec(), m_.d.params(), (root / "discriminator").string());
  nn::save_parameters(m_.v.spec(), m_.v.params(), (root / "perceptual").string());
  nn::save_parameters(m_.c.spec(), m_.c.params(), (root / "classifier").string());
  nlohmann::json steps_g, steps_d;
  auto sg = adam_state(*opt_g_, m_.g.params(), steps_g);
  auto sd = adam_state(*opt_d_, m_.d.params(), steps_d);
  nn::save_tensors((root / "optim_g").string(), sg, {{"steps", steps_g}});
  nn::save_tensors((root / "optim_d").string(), sd, {{"steps", steps_d}});
  const nlohmann::json state{{"format", kStateFormat},
                             {"epoch", epoch_},
                             {"step", step_},
                             {"generator_digest", nn::checkpoint_digest((root / "generator").string())},
                             {"config", to_json(cfg_)}};
  io::write_file_atomic((root / "state.json").string(), state.dump(1));
}

Trainer Trainer::resume(const std::string& dir) {
  const fs::path root(dir);
  const auto state_path = root / "state.json";
  if (!fs::exists(state_path)) throw LoadError("no training state at " + state_path.string());
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(io::read_file(state_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(state_path.string() + ": " + e.what());
  }
  if (state.value("format", "") != kStateFormat) throw LoadError(state_path.string() + ": unknown format");
  const TrainConfig cfg = config_from_json(state.at("config"));
  auto load = [&](const nn::NetworkSpec& spec, const char* sub) {
    return Network(spec, nn::load_parameters(spec, (root / sub).string()));
  };
  Models m{load(generator_spec(cfg), "generator"), load(discriminator_spec(cfg), "discriminator"),
           load(perceptual_spec(cfg), "perceptual"), load(classifier_spec(cfg), "classifier")};
  Trainer t(cfg, std::move(m));
  restore_adam(*t.opt_g_, t.m_.g.params(), (root / "optim_g").string());
  restore_adam(*t.opt_d_, t.m_.d.params(), (root / "optim_d").string());
  t.step_ = state.at("step");
  t.set_epoch(state.at("epoch"));
  return t;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<data::Pair> training_pairs(const TrainConfig& cfg, const EventSink& events) {
  if (cfg.manifest.empty()) throw ValidationError("no manifest configured");
  const auto manifest = data::load_manifest(cfg.manifest);
  auto ps = data::make_pairs(manifest, "train");
  for (const auto& w : ps.warnings) {
    if (events) events({{"event", "warning"}, {"message", w}});
  }
  if (ps.pairs.empty()) throw ValidationError("training split of " + cfg.manifest + " is empty");
  if (ps.pairs.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw ValidationError("training split has " + std::to_string(ps.pairs.size()) + " pairs, fewer than one batch of " +
                          std::to_string(cfg.batch_size));
  }
  return std::move(ps.pairs);
}

std::string epoch_dir(const TrainConfig& cfg, int epochs_done) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d", epochs_done);
  return (fs::path(cfg.out_dir) / "checkpoints" / name).string();
}

void run(Trainer& tr, const std::vector<data::Pair>& pairs, bool append_log, const EventSink& events,
         TrainSummary& summary) {
  const TrainConfig& cfg = tr.config();
  fs::create_directories(cfg.out_dir);
  summary.log_path = (fs::path(cfg.out_dir) / "train_log.jsonl").string();
  std::ofstream log(summary.log_path, append_log ? std::ios::app : std::ios::trunc);

  std::vector<std::size_t> all(pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const data::Batch full = data::make_batch(pairs, all, cfg.heatmap());
  const auto n = pairs.size(), bs = static_cast<std::size_t>(cfg.batch_size);

  std::string last_good = summary.checkpoints.empty() ? "none" : summary.checkpoints.back();
  bool stop = false;
  for (int e = tr.epoch(); e < cfg.epochs && !stop; ++e) {
    tr.set_epoch(e);
    const auto order = data::permutation(n, cfg.seed * 1000003 + static_cast<std::uint64_t>(e) + 1);
    double sum_total = 0, sum_l1 = 0, sum_d = 0;
    int count = 0;
    for (std::size_t at = 0; at < n; at += bs) {
      if (cfg.max_steps > 0 && tr.steps() >= cfg.max_steps) {
        stop = true;
        break;
      }
      std::vector<std::int64_t> idx;
      for (std::size_t k = at; k < std::min(n, at + bs); ++k) idx.push_back(static_cast<std::int64_t>(order[k]));
      const auto sel = torch::tensor(idx);
      const data::Batch b{full.heatmaps.index_select(0, sel), full.images.index_select(0, sel),
                          full.labels.index_select(0, sel)};
      StepResult r;
      try {
        r = tr.step(b);
      } catch (const TrainingError& err) {
        throw TrainingError(std::string(err.what()) + "; last good checkpoint: " + last_good);
      }
      auto line = r.report.to_json();
      line["epoch"] = e;
      line["l_d"] = r.l_d;
      line["lr_g"] = tr.lr_g();
      log << line.dump() << "\n";
      log.flush();
      sum_total += r.report.l_total;
      sum_l1 += r.report.l_l1;
      sum_d += r.l_d;
      ++count;
      summary.last = r;
    }
    if (count == 0) break;
    summary.steps = tr.steps();
    ++summary.epochs_run;
    if (events) {
      events({{"event", "epoch"},
              {"epoch", e},
              {"steps", tr.steps()},
              {"lr_g", tr.lr_g()},
              {"mean_l_total", sum_total / count},
              {"mean_l_l1", sum_l1 / count},
              {"mean_l_d", sum_d / count}});
    }
    tr.set_epoch(e + 1);
    const bool last = e + 1 == cfg.epochs || stop || (cfg.max_steps > 0 && tr.steps() >= cfg.max_steps);
    if ((e + 1) % cfg.checkpoint_every == 0 || last) {
      const std::string dir = epoch_dir(cfg, e + 1);
      tr.save(dir);
      io::write_file_atomic((fs::path(cfg.out_dir) / "checkpoints" / "latest").string(), dir + "\n");
      summary.checkpoints.push_back(dir);
      last_good = dir;
      if (events) events({{"event", "checkpoint"}, {"path", dir}, {"epoch", e + 1}});
    }
    if (last) break;
  }
}

}  // namespace

TrainSummary train(const TrainConfig& cfg, const EventSink& events) {
  cfg.validate();
  const auto pairs = training_pairs(cfg, events);
  Models models = build_models(cfg);
  TrainSummary summary;
  if (!cfg.classifier_checkpoint.empty()) {
    models.c = Network(classifier_spec(cfg), nn::load_parameters(classifier_spec(cfg), cfg.classifier_checkpoint));
  } else {
    summary.classifier = pretrain_classifier(models.c, pairs, cfg);
    if (events) {
      events({{"event", "classifier"},
              {"epochs", summary.classifier.epochs},
              {"final_loss", summary.classifier.final_loss},
              {"train_accuracy", summary.classifier.train_accuracy}});
    }
  }
  Trainer tr(cfg, std::move(models));
  run(tr, pairs, false, events, summary);
  return summary;
}

TrainSummary resume_training(const std::string& checkpoint_dir, const EventSink& events) {
  Trainer tr = Trainer::resume(checkpoint_dir);
  const auto pairs = training_pairs(tr.config(), events);
  TrainSummary summary;
  summary.checkpoints.push_back(checkpoint_dir);
  run(tr, pairs, true, events, summary);
  summary.checkpoints.erase(summary.checkpoints.begin());
  return summary;
}

InferenceModels load_inference(const std::string& dir) {
  fs::path root(dir);
  const auto latest = root / "checkpoints" / "latest";
  if (!fs::exists(root / "state.json") && fs::exists(latest)) {
    std::string target = io::read_file(latest.string());
    while (!target.empty() && std::isspace(static_cast<unsigned char>(target.back()))) target.pop_back();
    root = target;
  }
  const auto state_path = root / "state.json";
  if (!fs::exists(state_path)) throw LoadError("no checkpoint at " + dir);
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(io::read_file(state_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(state_path.string() + ": " + e.what());
  }
  if (state.value("format", "") != kStateFormat) throw LoadError(state_path.string() + ": unknown format");
  const TrainConfig cfg = config_from_json(state.at("config"));
  auto load = [&](const nn::NetworkSpec& spec, const char* sub) {
    Network net(spec, nn::load_parameters(spec, (root / sub).string()));
    net.params().freeze_all();
    return net;
  };
  return InferenceModels{cfg, load(generator_spec(cfg), "generator"), load(classifier_spec(cfg), "classifier"),
                         root.string(), nn::checkpoint_digest((root / "generator").string())};
}

torch::Tensor synthesize(const Network& g, const std::vector<landmarks::LandmarkSet>& lms,
                         const landmarks::HeatmapOptions& opts) {
  if (lms.empty()) throw ArgumentError("synthesize: no landmark sets");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> h;
  for (const auto& lm : lms) h.push_back(data::heatmap_tensor(lm, opts));
  const auto dtype = g.params().at(g.params().names().front()).scalar_type();
  return g.forward(torch::stack(h).to(dtype), Mode::Eval);
}

}  // namespace gpgan::training

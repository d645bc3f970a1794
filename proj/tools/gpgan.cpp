#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"

#include "gpgan/data.hpp"
#include "gpgan/errors.hpp"
#include "gpgan/evaluation.hpp"
#include "gpgan/io_util.hpp"
#include "gpgan/nn/architectures.hpp"
#include "gpgan/service.hpp"
#include "gpgan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpgan;

namespace {

constexpr const char* kSchema = "gpgan-cli/1";

void log_event(const json& e) { std::cerr << e.dump() << std::endl; }

json summary(const std::string& command) { return {{"schema", kSchema}, {"command", command}, {"ok", true}}; }

std::string dashed(std::string key) {
  for (auto& ch : key) {
    if (ch == '_') ch = '-';
  }
  return key;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string resume;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> flag value
};

json run_train(const TrainArgs& a) {
  training::TrainSummary s;
  if (!a.resume.empty()) {
    if (!a.config.empty() || !a.sets.empty() || !a.flags.empty()) {
      throw ArgumentError("--resume continues a run with its saved config; drop the other options");
    }
    s = training::resume_training(a.resume, log_event);
  } else {
    training::TrainConfig cfg = a.config.empty() ? training::TrainConfig{} : training::load_config(a.config);
    for (const auto& [key, value] : a.flags) training::apply_override(cfg, key + "=" + value);
    for (const auto& kv : a.sets) training::apply_override(cfg, kv);
    s = training::train(cfg, log_event);
  }
  auto out = summary("train");
  out["checkpoints"] = s.checkpoints;
  out["log"] = s.log_path;
  out["steps"] = s.steps;
  out["epochs_run"] = s.epochs_run;
  out["last"] = s.last.report.to_json();
  out["last"]["l_d"] = s.last.l_d;
  return out;
}

struct SynthArgs {
  std::string checkpoint, manifest, split = "test", out;
  std::vector<std::string> landmarks;
  double sigma = 0;
  std::string sigma_unit;
};

json run_synthesize(const SynthArgs& a) {
  if (a.landmarks.empty() == a.manifest.empty()) throw ArgumentError("give either --landmarks or --manifest");
  const auto models = training::load_inference(a.checkpoint);
  auto hm = models.cfg.heatmap();
  if (a.sigma > 0) hm.sigma = a.sigma;
  if (!a.sigma_unit.empty()) {
    if (a.sigma_unit != "px" && a.sigma_unit != "normalized") throw ArgumentError("--sigma-unit must be px or normalized");
    hm.unit = a.sigma_unit == "px" ? landmarks::SigmaUnit::Pixels : landmarks::SigmaUnit::Normalized;
  }

  std::vector<std::string> names;
  std::vector<landmarks::LandmarkSet> sets;
  if (!a.manifest.empty()) {
    const auto m = data::load_manifest(a.manifest);
    for (const auto* r : m.split(a.split)) {
      try {
        sets.push_back(r->landmarks.is_string() ? landmarks::load_landmarks(r->landmarks.get<std::string>())
                                                : landmarks::landmarks_from_json(r->landmarks));
        names.push_back(r->id);
      } catch (const std::exception& e) {
        log_event({{"event", "warning"}, {"message", "skipping record '" + r->id + "': " + e.what()}});
      }
    }
    if (sets.empty()) throw ValidationError("split '" + a.split + "' of " + a.manifest + " has no usable landmarks");
  } else {
    for (const auto& path : a.landmarks) {
      sets.push_back(landmarks::load_landmarks(path));
      names.push_back(fs::path(path).stem().string());
    }
  }

  fs::create_directories(a.out);
  json files = json::array();
  constexpr std::size_t kChunk = 32;
  for (std::size_t at = 0; at < sets.size(); at += kChunk) {
    const auto end = std::min(sets.size(), at + kChunk);
    const std::vector<landmarks::LandmarkSet> part(sets.begin() + static_cast<std::ptrdiff_t>(at),
                                                   sets.begin() + static_cast<std::ptrdiff_t>(end));
    const auto imgs = training::synthesize(models.g, part, hm).to(torch::kFloat32);
    for (std::size_t i = at; i < end; ++i) {
      const auto path = (fs::path(a.out) / (names[i] + ".png")).string();
      data::save_face_image(data::to_face_image(imgs[static_cast<std::int64_t>(i - at)]), path);
      files.push_back(path);
    }
  }
  auto out = summary("synthesize");
  out["checkpoint"] = models.checkpoint;
  out["sigma_px"] = hm.sigma_px();
  out["count"] = files.size();
  out["files"] = files;
  return out;
}

struct EvalArgs {
  std::string checkpoint, manifest, out, protocol;
  std::optional<int> folds, grid, svm_epochs;
  std::optional<double> fraction, svm_lambda;
  std::optional<std::uint64_t> seed;
};

json run_evaluate(const EvalArgs& a) {
  eval::Protocol p;
  if (!a.protocol.empty()) {
    json j;
    try {
      j = json::parse(io::read_file(a.protocol));
    } catch (const std::exception& e) {
      throw ArgumentError("--protocol " + a.protocol + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (k == "folds") p.folds = v;
      else if (k == "fraction") p.fraction = v;
      else if (k == "seed") p.seed = v;
      else if (k == "grid") p.grid = v;
      else if (k == "svm_lambda") p.svm.lambda = v;
      else if (k == "svm_epochs") p.svm.epochs = v;
      else throw ArgumentError("unknown protocol key '" + k + "'");
    }
  }
  if (a.folds) p.folds = *a.folds;
  if (a.fraction) p.fraction = *a.fraction;
  if (a.seed) p.seed = *a.seed;
  if (a.grid) p.grid = *a.grid;
  if (a.svm_lambda) p.svm.lambda = *a.svm_lambda;
  if (a.svm_epochs) p.svm.epochs = *a.svm_epochs;

  const auto rep = eval::recognition_report(a.checkpoint, a.manifest, p);
  auto out = summary("evaluate");
  out["report"] = rep.to_json();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto jp = (fs::path(a.out) / "report.json").string(), cp = (fs::path(a.out) / "report.csv").string();
    io::write_file_atomic(jp, rep.to_json().dump(1) + "\n");
    io::write_file_atomic(cp, rep.to_csv());
    out["files"] = {jp, cp};
  }
  return out;
}

struct ServeArgs {
  std::string checkpoint, host = "127.0.0.1", static_dir, cors = "*";
  int port = 0;
};

httplib::Server* g_server = nullptr;

json run_serve(const ServeArgs& a) {
  int port = a.port;
  if (port == 0) {
    const char* env = std::getenv("GPGAN_PORT");
    port = env ? std::atoi(env) : 8080;
  }
  service::Service svc({a.cors, a.static_dir});
  svc.load(a.checkpoint);
  httplib::Server server;
  svc.mount(server);
  if (!server.bind_to_port(a.host, port)) throw ArgumentError("cannot bind " + a.host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  auto ready = summary("serve");
  ready["listening"] = "http://" + a.host + ":" + std::to_string(port);
  ready["checkpoint_hash"] = svc.health().body["checkpoint_hash"];
  std::cout << ready.dump() << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  auto out = summary("serve");
  out["stopped"] = true;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-to-face synthesis: preprocessing, training, synthesis, evaluation and serving."};
  app.require_subcommand(1);

  // make-fixtures
  auto* fx = app.add_subcommand("make-fixtures", "Write a procedurally drawn face dataset with landmarks");
  std::string fx_out;
  data::FixtureOptions fx_opts;
  fx->add_option("--out", fx_out, "Output directory")->required();
  fx->add_option("--train", fx_opts.n_train, "Train records")->capture_default_str();
  fx->add_option("--test", fx_opts.n_test, "Test records")->capture_default_str();
  fx->add_option("--seed", fx_opts.seed, "Drawing seed")->capture_default_str();

  // preprocess
  auto* pp = app.add_subcommand("preprocess", "Crop raw/<person>/<image> trees with sidecar landmarks into a manifest");
  std::string pp_raw, pp_out;
  data::ConvertOptions pp_opts;
  pp->add_option("--raw", pp_raw, "Raw directory")->required()->check(CLI::ExistingDirectory);
  pp->add_option("--out", pp_out, "Output directory")->required();
  pp->add_option("--margin", pp_opts.margin, "Box margin around the landmarks")->capture_default_str();
  pp->add_option("--test-fraction", pp_opts.test_fraction, "Share of people in the test split")->capture_default_str();
  pp->add_option("--seed", pp_opts.seed, "Split seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train G and D; flags override the config file");
  TrainArgs ta;
  tr->add_option("config", ta.config, "Config file (JSON or key=value lines)")->check(CLI::ExistingFile);
  tr->add_option("--resume", ta.resume, "Continue from a checkpoint directory")->check(CLI::ExistingDirectory);
  tr->add_option("--set", ta.sets, "Extra key=value overrides, applied last");
  const json defaults = training::to_json(training::TrainConfig{});
  std::map<std::string, std::string> flag_values;
  for (const auto& [key, value] : defaults.items()) {
    tr->add_option("--" + dashed(key), flag_values[key], "default " + value.dump());
  }

  // synthesize
  auto* sy = app.add_subcommand("synthesize", "Render faces from landmark files or a manifest split");
  SynthArgs sa;
  sy->add_option("--checkpoint", sa.checkpoint, "Checkpoint or run directory")->required();
  sy->add_option("--landmarks", sa.landmarks, "Landmark JSON files")->check(CLI::ExistingFile);
  sy->add_option("--manifest", sa.manifest, "Manifest to read landmarks from")->check(CLI::ExistingFile);
  sy->add_option("--split", sa.split, "Manifest split")->capture_default_str();
  sy->add_option("--out", sa.out, "Output directory")->required();
  sy->add_option("--sigma", sa.sigma, "Heatmap sigma (default: the checkpoint's)");
  sy->add_option("--sigma-unit", sa.sigma_unit, "px or normalized");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Gender-recognition report on a manifest's test split");
  EvalArgs ea;
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint or run directory")->required();
  ev->add_option("--manifest", ea.manifest, "Manifest with train and test splits")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ea.out, "Directory for report.json and report.csv");
  ev->add_option("--protocol", ea.protocol, "JSON protocol file")->check(CLI::ExistingFile);
  ev->add_option("--folds", ea.folds, "Resampled folds (10)");
  ev->add_option("--fraction", ea.fraction, "Test share per fold (0.8)");
  ev->add_option("--seed", ea.seed, "Fold seed (1)");
  ev->add_option("--grid", ea.grid, "LBP cell grid per side (8)");
  ev->add_option("--svm-lambda", ea.svm_lambda, "SVM L2 strength (1e-3)");
  ev->add_option("--svm-epochs", ea.svm_epochs, "SVM passes (30)");

  // serve
  auto* sv = app.add_subcommand("serve", "Start the HTTP inference service");
  ServeArgs va;
  sv->add_option("--checkpoint", va.checkpoint, "Checkpoint or run directory")->required();
  sv->add_option("--port", va.port, "Port (default $GPGAN_PORT or 8080)");
  sv->add_option("--host", va.host, "Bind address")->capture_default_str();
  sv->add_option("--static", va.static_dir, "Directory served at /")->check(CLI::ExistingDirectory);
  sv->add_option("--cors-origin", va.cors, "Access-Control-Allow-Origin value")->capture_default_str();

  // vgg-template
  auto* vt = app.add_subcommand("vgg-template", "Write an empty VGG-16 backbone checkpoint for weight conversion");
  std::string vt_out;
  int vt_size = 224;
  vt->add_option("--out", vt_out, "Output directory")->required();
  vt->add_option("--input-size", vt_size, "Backbone input size")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    json out;
    if (*fx) {
      out = summary(command);
      out["manifest"] = data::make_fixtures(fx_out, fx_opts);
      out["train"] = fx_opts.n_train;
      out["test"] = fx_opts.n_test;
    } else if (*pp) {
      const auto s = data::convert_raw_directory(pp_raw, pp_out, pp_opts);
      for (const auto& w : s.warnings) log_event({{"event", "warning"}, {"message", w}});
      out = summary(command);
      out["manifest"] = s.manifest;
      out["converted"] = s.converted;
      out["skipped"] = s.skipped;
    } else if (*tr) {
      for (const auto& [key, value] : defaults.items()) {
        if (tr->get_option("--" + dashed(key))->count() > 0) ta.flags[key] = flag_values[key];
      }
      out = run_train(ta);
    } else if (*sy) {
      out = run_synthesize(sa);
    } else if (*ev) {
      out = run_evaluate(ea);
    } else if (*sv) {
      out = run_serve(va);
    } else if (*vt) {
      const auto spec = nn::build_vgg16_backbone({vt_size, 1});
      nn::save_parameters(spec, nn::ParameterSet::initialize(spec, 0, torch::kFloat32, nn::Init::He), vt_out);
      out = summary(command);
      out["checkpoint"] = vt_out;
    }
    std::cout << out.dump() << std::endl;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    std::cout << json{{"schema", kSchema}, {"command", command}, {"ok", false}, {"error", e.what()}}.dump() << std::endl;
    return 1;
  }
}

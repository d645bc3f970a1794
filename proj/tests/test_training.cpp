#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/torch_doctest.hpp"
#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"
#include "gpgan/training.hpp"

using namespace gpgan::training;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("gpgan_train_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.g_width_divisor = 8;
  c.d_width_divisor = 8;
  c.vgg_width_divisor = 16;
  c.perceptual_size = 32;
  c.classifier_size = 32;
  c.batch_size = 4;
  c.classifier_epochs = 1;
  c.seed = 5;
  return c;
}

std::vector<gpgan::data::Pair> fixture_pairs(int n, std::uint64_t seed) {
  std::vector<gpgan::data::Pair> out;
  for (int i = 0; i < n; ++i) {
    const auto g = i % 2 ? gpgan::data::Gender::Female : gpgan::data::Gender::Male;
    auto f = gpgan::data::draw_fixture_face(g, seed + static_cast<std::uint64_t>(i));
    std::vector<gpgan::landmarks::Point> px;
    for (const auto& p : f.landmarks.points()) px.push_back({p.x * 64, p.y * 64});
    auto c = gpgan::data::crop_and_normalize(f.rgb, px, {0, 0, 64, 64});
    out.push_back({"f" + std::to_string(i), c.landmarks, c.image, g});
  }
  return out;
}

gpgan::data::Batch batch_of(const std::vector<gpgan::data::Pair>& pairs, std::size_t first, std::size_t n,
                            const TrainConfig& cfg) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) idx.push_back((first + i) % pairs.size());
  return gpgan::data::make_batch(pairs, idx, cfg.heatmap());
}

}  // namespace

TEST_CASE("learning-rate schedule anchors") {
  TrainConfig c;
  CHECK(lr_at_epoch(c, c.lr_g, 0) == 2e-4);
  CHECK(lr_at_epoch(c, c.lr_g, 100) == 2e-4);
  CHECK(lr_at_epoch(c, c.lr_g, 150) == 1e-4);
  CHECK(lr_at_epoch(c, c.lr_g, 200) == 0.0);
  CHECK(lr_at_epoch(c, c.lr_g, 260) == 0.0);
  double prev = 1;
  for (int e = 0; e <= 220; ++e) {
    const double lr = lr_at_epoch(c, c.lr_g, e);
    CHECK(lr >= 0);
    CHECK(lr <= prev);
    prev = lr;
  }
  c.decay_per_epoch = 1.0 / 3.0 * 1e-6;
  CHECK(lr_at_epoch(c, 2e-4, 130) == doctest::Approx(2e-4 - 1e-5));
}

TEST_CASE("config files and overrides") {
  TrainConfig c;
  CHECK(c.weights.lambda_1 == 100);
  CHECK(c.adam_beta1 == 0.5);
  CHECK(c.adam_beta2 == 0.999);
  apply_override(c, "epochs=3");
  apply_override(c, "lambda_c=0");
  apply_override(c, "sigma_unit=normalized");
  apply_override(c, "sigma=0.2");
  apply_override(c, "gender_literal=true");
  CHECK(c.epochs == 3);
  CHECK(c.weights.lambda_c == 0);
  CHECK(c.heatmap().sigma_px() == doctest::Approx(12.8));
  CHECK(c.gender_literal);
  CHECK_THROWS_AS(apply_override(c, "nope=1"), gpgan::ArgumentError);
  CHECK_THROWS_AS(apply_override(c, "epochs=abc"), gpgan::ArgumentError);
  CHECK_THROWS_AS(apply_override(c, "gender_literal=maybe"), gpgan::ArgumentError);

  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(config_from_json({{"epochs", "three"}}), gpgan::ArgumentError);

  const auto dir = scratch("config");
  std::ofstream(dir / "a.cfg") << "# comment\nepochs = 7\nbatch_size=2\n\nmanifest=data/m.jsonl\n";
  auto kv = load_config((dir / "a.cfg").string());
  CHECK(kv.epochs == 7);
  CHECK(kv.batch_size == 2);
  CHECK(kv.manifest == "data/m.jsonl");
  std::ofstream(dir / "b.json") << R"({"epochs": 9, "lambda_p": 0.5})";
  auto js = load_config((dir / "b.json").string());
  CHECK(js.epochs == 9);
  CHECK(js.weights.lambda_p == 0.5);
  CHECK_THROWS_AS(load_config((dir / "missing.cfg").string()), gpgan::ArgumentError);
}

TEST_CASE("first step with a zeroed final D layer scores every patch 0.5") {
  const auto cfg = tiny_config();
  auto models = build_models(cfg);
  {
    torch::NoGradGuard no_grad;
    models.d.params().at("s04.l0.weight").zero_();
    models.d.params().at("s04.l0.bias").zero_();
  }
  Trainer tr(cfg, std::move(models));
  const auto pairs = fixture_pairs(4, 1);
  const auto r = tr.step(batch_of(pairs, 0, 4, cfg));
  CHECK(r.l_d == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
  CHECK(tr.steps() == 1);
}

TEST_CASE("a step changes both G and D and keeps C and V fixed") {
  const auto cfg = tiny_config();
  Trainer tr(cfg, build_models(cfg));
  const auto before = tr.models().g.params().clone();
  const auto d_before = tr.models().d.params().clone();
  const auto v_before = tr.models().v.params().clone();
  const auto c_before = tr.models().c.params().clone();
  tr.step(batch_of(fixture_pairs(4, 2), 0, 4, cfg));
  CHECK_FALSE(tr.models().g.params() == before);
  CHECK_FALSE(tr.models().d.params() == d_before);
  CHECK(tr.models().v.params() == v_before);
  CHECK(tr.models().c.params() == c_before);
}

TEST_CASE("identical seeds give bit-identical loss reports for 50 steps") {
  const auto cfg = tiny_config();
  const auto pairs = fixture_pairs(8, 3);
  Trainer a(cfg, build_models(cfg)), b(cfg, build_models(cfg));
  for (int s = 0; s < 50; ++s) {
    const auto batch = batch_of(pairs, static_cast<std::size_t>(s) * 4, 4, cfg);
    const auto ra = a.step(batch), rb = b.step(batch);
    REQUIRE(ra.report == rb.report);
    REQUIRE(ra.l_d == rb.l_d);
  }
}

TEST_CASE("checkpoint and resume are observationally equivalent") {
  const auto cfg = tiny_config();
  const auto pairs = fixture_pairs(8, 4);
  Trainer a(cfg, build_models(cfg));
  for (int s = 0; s < 3; ++s) a.step(batch_of(pairs, static_cast<std::size_t>(s) * 4, 4, cfg));
  a.set_epoch(2);
  const auto dir = scratch("resume");
  a.save(dir.string());
  Trainer b = Trainer::resume(dir.string());
  CHECK(b.steps() == 3);
  CHECK(b.epoch() == 2);

  const auto probe = batch_of(pairs, 5, 3, cfg);
  torch::NoGradGuard no_grad;
  CHECK(torch::equal(a.models().g.forward(probe.heatmaps, gpgan::nn::Mode::Eval),
                     b.models().g.forward(probe.heatmaps, gpgan::nn::Mode::Eval)));
  CHECK(torch::equal(a.models().d.forward(torch::cat({probe.heatmaps, probe.images}, 1), gpgan::nn::Mode::Eval),
                     b.models().d.forward(torch::cat({probe.heatmaps, probe.images}, 1), gpgan::nn::Mode::Eval)));
  CHECK(torch::equal(classify(a.models().c, probe.images), classify(b.models().c, probe.images)));
}

TEST_CASE("continuing after resume matches an uninterrupted run") {
  const auto cfg = tiny_config();
  const auto pairs = fixture_pairs(8, 6);
  Trainer a(cfg, build_models(cfg));
  for (int s = 0; s < 2; ++s) a.step(batch_of(pairs, static_cast<std::size_t>(s) * 4, 4, cfg));
  const auto dir = scratch("resume_continue");
  a.save(dir.string());
  Trainer b = Trainer::resume(dir.string());
  for (int s = 2; s < 5; ++s) {
    const auto batch = batch_of(pairs, static_cast<std::size_t>(s) * 4, 4, cfg);
    CHECK(a.step(batch).report == b.step(batch).report);
  }
}

TEST_CASE("non-finite losses abort the step") {
  const auto cfg = tiny_config();
  Trainer tr(cfg, build_models(cfg));
  {
    torch::NoGradGuard no_grad;
    tr.models().g.params().at("s18.l2.bias").fill_(std::nan(""));
  }
  CHECK_THROWS_AS(tr.step(batch_of(fixture_pairs(4, 7), 0, 4, cfg)), gpgan::TrainingError);
}

TEST_CASE("adversarial-plus-L1 ablation skips the perceptual and gender terms") {
  auto cfg = tiny_config();
  cfg.weights = {0, 0, 100};
  Trainer tr(cfg, build_models(cfg));
  const auto r = tr.step(batch_of(fixture_pairs(4, 8), 0, 4, cfg));
  CHECK(r.report.l_perc == 0);
  CHECK(r.report.l_gender == 0);
  CHECK(r.report.l_total == doctest::Approx(r.report.l_adv + 100 * r.report.l_l1));
}

TEST_CASE("classifier pretraining separates a red-vs-blue toy set") {
  auto cfg = tiny_config();
  cfg.classifier_epochs = 15;
  cfg.classifier_lr = 1e-3;
  cfg.classifier_batch_size = 8;
  std::vector<gpgan::data::Pair> pairs;
  torch::manual_seed(9);
  const auto lm = gpgan::landmarks::frontal_template();
  for (int i = 0; i < 64; ++i) {
    const bool male = i % 2 == 0;
    auto img = torch::rand({3, 64, 64}) * 0.6 - 0.8;
    img[male ? 0 : 2] += 1.2;
    pairs.push_back({"t" + std::to_string(i), lm, gpgan::data::to_face_image(img),
                     male ? gpgan::data::Gender::Male : gpgan::data::Gender::Female});
  }
  auto models = build_models(cfg);
  const auto rep = pretrain_classifier(models.c, pairs, cfg);
  CHECK(rep.train_accuracy >= 0.99);
  CHECK(models.c.params().trainable().empty());

  torch::manual_seed(10);
  auto red = torch::rand({20, 3, 64, 64}) * 0.6 - 0.8, blue = red.clone();
  red.select(1, 0).add_(1.2);
  blue.select(1, 2).add_(1.2);
  torch::NoGradGuard no_grad;
  const double acc = (classify(models.c, red).gt(0.5).sum().item<double>() +
                      classify(models.c, blue).le(0.5).sum().item<double>()) / 40.0;
  CHECK(acc >= 0.99);
}

TEST_CASE("train: empty manifest fails before any step") {
  const auto dir = scratch("empty");
  std::ofstream(dir / "m.jsonl") << "";
  auto cfg = tiny_config();
  cfg.manifest = (dir / "m.jsonl").string();
  cfg.out_dir = (dir / "out").string();
  CHECK_THROWS_AS(train(cfg), gpgan::ValidationError);
  CHECK_FALSE(fs::exists(dir / "out" / "train_log.jsonl"));
  cfg.manifest.clear();
  CHECK_THROWS_AS(train(cfg), gpgan::ValidationError);
}

TEST_CASE("two-epoch run on 32 fixture pairs logs, summarizes and checkpoints") {
  const auto dir = scratch("two_epochs");
  auto cfg = tiny_config();
  cfg.manifest = gpgan::data::make_fixtures((dir / "data").string(), {32, 4, 11});
  cfg.out_dir = (dir / "run").string();
  cfg.epochs = 2;
  cfg.batch_size = 8;
  int epoch_events = 0;
  const auto summary = train(cfg, [&](const nlohmann::json& e) {
    if (e["event"] == "epoch") ++epoch_events;
  });
  CHECK(epoch_events == 2);
  CHECK(summary.epochs_run == 2);
  CHECK(summary.steps == 8);
  REQUIRE(summary.checkpoints.size() >= 1);
  CHECK(fs::exists(fs::path(summary.checkpoints.back()) / "state.json"));

  std::ifstream log(summary.log_path);
  std::string line;
  std::int64_t prev = -1;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["step"].get<std::int64_t>() > prev);
    prev = j["step"];
    ++lines;
  }
  CHECK(lines == 8);

  const auto state = nlohmann::json::parse(gpgan::io::read_file(summary.checkpoints.back() + "/state.json"));
  CHECK(state["epoch"] == 2);
  CHECK(state["step"] == 8);
}

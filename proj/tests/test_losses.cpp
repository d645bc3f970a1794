#include <cmath>
#include <limits>

#include "support/torch_doctest.hpp"
#include "gpgan/errors.hpp"
#include "gpgan/losses.hpp"
#include "gpgan/nn/architectures.hpp"
#include "support/gradcheck.hpp"

using namespace gpgan::losses;
using gpgan::nn::Mode;
using gpgan::nn::Network;
using gpgan::nn::ParameterSet;

namespace {

constexpr double kTol = 1e-6;

torch::Tensor full(std::vector<std::int64_t> shape, double v) {
  return torch::full(shape, v, torch::kFloat64);
}

double brute_mean_log(const torch::Tensor& t, bool complement) {
  auto flat = t.contiguous().view(-1);
  auto a = flat.accessor<double, 1>();
  double s = 0;
  for (int64_t i = 0; i < flat.size(0); ++i) {
    double p = std::clamp(a[i], kEps, 1 - kEps);
    s += std::log(complement ? 1 - p : p);
  }
  return s / static_cast<double>(flat.size(0));
}

double brute_mean_abs(const torch::Tensor& a, const torch::Tensor& b) {
  auto fa = a.contiguous().view(-1).to(torch::kFloat64);
  auto fb = b.contiguous().view(-1).to(torch::kFloat64);
  auto pa = fa.accessor<double, 1>();
  auto pb = fb.accessor<double, 1>();
  double s = 0;
  for (int64_t i = 0; i < fa.size(0); ++i) s += std::abs(pa[i] - pb[i]);
  return s / static_cast<double>(fa.size(0));
}

struct TinyModels {
  Network g, d, v, c;
};

TinyModels tiny_models() {
  gpgan::nn::GeneratorConfig gc;
  gc.input_size = 32;
  gc.growth_rate = 2;
  gc.bottleneck_factor = 2;
  gc.architecture = "C(4)-M(4)-D(8)-T(4)-DT(4)-D(4)-DT(4)-C(3)";
  auto gs = gpgan::nn::build_generator(gc);
  auto ds = gpgan::nn::build_discriminator({32, 1, 3, 16});
  auto vs = gpgan::nn::build_perceptual_extractor({16, 16});
  auto cs = gpgan::nn::build_gender_classifier({{32, 16}, 512});
  TinyModels m{Network(gs, ParameterSet::initialize(gs, 1, torch::kFloat64)),
               Network(ds, ParameterSet::initialize(ds, 2, torch::kFloat64)),
               Network(vs, ParameterSet::initialize(vs, 3, torch::kFloat64)),
               Network(cs, ParameterSet::initialize(cs, 4, torch::kFloat64))};
  gpgan::testing::recondition(m.v.params(), 5);
  gpgan::testing::recondition(m.c.params(), 6);
  m.v.params().freeze_all();
  m.c.params().freeze_all();
  return m;
}

}  // namespace

TEST_CASE("d_loss analytic values and brute-force patch sum") {
  CHECK(std::abs(gpgan::losses::d_loss(full({2, 1, 6, 6}, 1 - kEps), full({2, 1, 6, 6}, kEps)).item<double>()) < kTol);
  CHECK(std::abs(gpgan::losses::d_loss(full({2, 1, 6, 6}, 0.5), full({2, 1, 6, 6}, 0.5)).item<double>() - 2 * std::log(2.0)) < kTol);

  torch::manual_seed(3);
  auto real = torch::rand({3, 1, 6, 6}, torch::kFloat64);
  auto fake = torch::rand({3, 1, 6, 6}, torch::kFloat64);
  const double oracle = -brute_mean_log(real, false) - brute_mean_log(fake, true);
  CHECK(std::abs(gpgan::losses::d_loss(real, fake).item<double>() - oracle) < 1e-12);
}

TEST_CASE("g_adv_loss analytic values") {
  CHECK(std::abs(gpgan::losses::g_adv_loss(full({4, 1, 6, 6}, 1 - kEps)).item<double>()) < kTol);
  CHECK(std::abs(gpgan::losses::g_adv_loss(full({4, 1, 6, 6}, std::exp(-1.0))).item<double>() - 1.0) < kTol);
  auto mixed = torch::tensor({0.5, 0.25}, torch::kFloat64);
  CHECK(std::abs(gpgan::losses::g_adv_loss(mixed).item<double>() - (std::log(2.0) + std::log(4.0)) / 2) < kTol);
  CHECK(std::abs(gpgan::losses::g_adv_loss(mixed).item<double>() - 1.0397) < 1e-4);
}

TEST_CASE("clamping keeps every adversarial and gender loss finite") {
  auto extremes = torch::tensor({0.0, 1.0, 0.0, 1.0}, torch::kFloat64);
  CHECK(std::isfinite(gpgan::losses::d_loss(extremes, extremes).item<double>()));
  CHECK(std::isfinite(gpgan::losses::g_adv_loss(extremes).item<double>()));
  CHECK(std::isfinite(gpgan::losses::bce(extremes, extremes.flip(0)).item<double>()));
  auto f = torch::tensor({0.0, 1.0}, torch::kFloat32);
  CHECK(std::isfinite(gpgan::losses::d_loss(f, f).item<double>()));
}

TEST_CASE("l1_loss analytic values and brute-force sum") {
  torch::manual_seed(4);
  auto real = torch::rand({2, 3, 64, 64}, torch::kFloat64) * 2 - 1;
  CHECK(gpgan::losses::l1_loss(real, real).item<double>() == 0.0);
  CHECK(std::abs(gpgan::losses::l1_loss(real + 0.1, real).item<double>() - 0.1) < kTol);
  auto fake = torch::rand({2, 3, 64, 64}, torch::kFloat64) * 2 - 1;
  CHECK(std::abs(gpgan::losses::l1_loss(fake, real).item<double>() - brute_mean_abs(fake, real)) < 1e-12);
  CHECK(gpgan::losses::l1_loss(fake, real).item<double>() >= 0);
  CHECK_THROWS_AS(gpgan::losses::l1_loss(fake, real.narrow(2, 0, 32)), gpgan::ArgumentError);
}

TEST_CASE("gender BCE analytic values") {
  auto one = full({3, 1}, 1 - kEps);
  // A soft target keeps its own entropy: -(1-e)ln(1-e) - e ln e, about 1.7e-6.
  const double floor = -(1 - kEps) * std::log(1 - kEps) - kEps * std::log(kEps);
  CHECK(std::abs(gpgan::losses::bce(one, one).item<double>() - floor) < kTol);
  CHECK(gpgan::losses::bce(one, one).item<double>() < 1e-5);
  CHECK(std::abs(gpgan::losses::bce(full({3, 1}, 1.0), full({3, 1}, std::exp(-1.0))).item<double>() - 1.0) < kTol);

  // Soft target 0.5: minimum over p sits at p = 0.5 with value ln 2.
  auto half = full({5, 1}, 0.5);
  const double at_half = gpgan::losses::bce(half, half).item<double>();
  CHECK(std::abs(at_half - std::log(2.0)) < kTol);
  for (double p = 0.01; p < 1.0; p += 0.01) {
    if (std::abs(p - 0.5) < 1e-9) continue;
    CHECK(gpgan::losses::bce(half, full({5, 1}, p)).item<double>() > at_half);
  }

  // The printed variant collapses to -mean log p.
  auto t = torch::tensor({{0.2}, {0.9}}, torch::kFloat64);
  auto p = torch::tensor({{0.3}, {0.6}}, torch::kFloat64);
  CHECK(std::abs(gpgan::losses::bce(t, p, true).item<double>() + (std::log(0.3) + std::log(0.6)) / 2) < 1e-12);
  const double standard = -(0.2 * std::log(0.3) + 0.8 * std::log(0.7) + 0.9 * std::log(0.6) + 0.1 * std::log(0.4)) / 2;
  CHECK(std::abs(gpgan::losses::bce(t, p).item<double>() - standard) < 1e-12);
}

TEST_CASE("composite arithmetic") {
  auto s = [](double v) { return torch::tensor(v, torch::kFloat64); };
  LossWeights w;
  CHECK(w.lambda_1 == 100);
  CHECK(w.lambda_p == 1);
  CHECK(w.lambda_c == 1);

  auto r = composite_loss({s(1), s(2), s(3), s(4)}, w, 7);
  CHECK(r.report.l_total == 406.0);
  CHECK(r.total.item<double>() == 406.0);
  CHECK(r.report.step == 7);

  CHECK(composite_loss({s(0), s(0), s(0), s(0)}, w).report.l_total == 0.0);
  auto zero_w = composite_loss({s(1.5), s(2), s(3), s(4)}, {0, 0, 0});
  CHECK(zero_w.report.l_total == 1.5);
  CHECK(zero_w.total.item<double>() == 1.5);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    composite_loss({s(1), s(nan), s(3), s(4)}, w);
    FAIL("expected TrainingError");
  } catch (const gpgan::TrainingError& e) {
    CHECK(std::string(e.what()).find("l_perc") != std::string::npos);
  }
  CHECK_THROWS_AS(composite_loss({s(1), s(2), s(3), s(INFINITY)}, w), gpgan::TrainingError);
  CHECK_THROWS_AS(composite_loss({s(1), s(2), s(3), s(4)}, {-1, 1, 1}), gpgan::ArgumentError);

  auto j = r.report.to_json();
  for (const char* k : {"step", "l_adv", "l_perc", "l_gender", "l_l1", "l_total"}) CHECK(j.contains(k));
}

TEST_CASE("perceptual loss on full-size conv4_3 features matches brute force") {
  auto spec = gpgan::nn::build_perceptual_extractor();
  Network v(spec, ParameterSet::initialize(spec, 21));
  v.params().freeze_all();
  PerceptualLoss lp(&v);

  torch::manual_seed(22);
  auto a = torch::rand({2, 3, 64, 64}) * 2 - 1;
  auto b = torch::rand({2, 3, 64, 64}) * 2 - 1;
  torch::NoGradGuard no_grad;
  CHECK(lp(a, a).item<double>() == 0.0);
  const double ab = lp(a, b).item<double>();
  CHECK(ab == lp(b, a).item<double>());
  auto fa = lp.features(a), fb = lp.features(b);
  CHECK(fa.sizes() == c10::IntArrayRef({2, 512, 28, 28}));
  CHECK(std::abs(ab - brute_mean_abs(fa, fb)) < 1e-6 * std::max(1.0, ab));
  CHECK_THROWS_AS(lp(a, b.narrow(0, 0, 1)), gpgan::ArgumentError);
}

TEST_CASE("gender loss with a classifier: soft and hard targets") {
  auto m = tiny_models();
  GenderLoss soft(&m.c);
  torch::manual_seed(31);
  auto real = torch::rand({3, 3, 32, 32}, torch::kFloat64) * 2 - 1;
  auto fake = torch::rand({3, 3, 32, 32}, torch::kFloat64) * 2 - 1;
  auto pr = soft.probabilities(real), pf = soft.probabilities(fake);
  CHECK(pr.sizes() == c10::IntArrayRef({3, 1}));
  CHECK(std::abs(soft(real, fake).item<double>() - gpgan::losses::bce(pr, pf).item<double>()) < 1e-12);
  CHECK(soft(real, fake).item<double>() >= 0);

  GenderLoss hard(&m.c, {true, false});
  auto labels = torch::tensor({1.0, 0.0, 1.0}, torch::kFloat64);
  CHECK(std::abs(hard(real, fake, labels).item<double>() - gpgan::losses::bce(labels.view({3, 1}), pf).item<double>()) < 1e-12);
  CHECK_THROWS_AS(hard(real, fake), gpgan::ArgumentError);
}

TEST_CASE("gradient routing between G and D") {
  auto m = tiny_models();
  torch::manual_seed(41);
  auto heat = torch::rand({2, 1, 32, 32}, torch::kFloat64);
  auto real = torch::rand({2, 3, 32, 32}, torch::kFloat64) * 2 - 1;
  auto fake = m.g.forward(heat, Mode::Train);
  auto d_params = m.d.params().trainable();
  auto g_params = m.g.params().trainable();

  auto all_zero = [](const std::vector<torch::Tensor>& grads) {
    for (const auto& g : grads) {
      if (g.defined() && g.abs().max().item<double>() != 0.0) return false;
    }
    return true;
  };

  SUBCASE("perceptual and gender terms leave D untouched") {
    auto loss = PerceptualLoss(&m.v)(fake, real) + GenderLoss(&m.c)(real, fake);
    auto grads = torch::autograd::grad({loss}, d_params, {}, true, false, true);
    CHECK(all_zero(grads));
    auto g_grads = torch::autograd::grad({loss}, g_params, {}, false, false, true);
    CHECK_FALSE(all_zero(g_grads));
  }
  SUBCASE("d_loss sends nothing to G") {
    auto loss = gpgan::losses::d_loss(discriminator_scores(m.d, heat, real, Mode::Train),
                       discriminator_scores(m.d, heat, fake.detach(), Mode::Train));
    auto grads = torch::autograd::grad({loss}, g_params, {}, true, false, true);
    CHECK(all_zero(grads));
    CHECK_FALSE(all_zero(torch::autograd::grad({loss}, d_params, {}, false, false, true)));
  }
}

TEST_CASE("composite gradient w.r.t. G matches finite differences") {
  auto m = tiny_models();
  m.d.params().freeze_all();
  torch::manual_seed(51);
  auto heat = torch::rand({2, 1, 32, 32}, torch::kFloat64);
  auto real = torch::rand({2, 3, 32, 32}, torch::kFloat64) * 2 - 1;
  PerceptualLoss lp(&m.v);
  GenderLoss lc(&m.c);
  auto objective = [&] {
    auto fake = m.g.forward(heat, Mode::Train);
    LossTerms t{gpgan::losses::g_adv_loss(discriminator_scores(m.d, heat, fake, Mode::Eval)), lp(fake, real), lc(real, fake),
                gpgan::losses::l1_loss(fake, real)};
    return composite_loss(t, {1, 1, 100}).total;
  };
  auto result = gpgan::testing::gradient_check(objective, m.g.params().trainable(), m.g.params().trainable_names(), 16);
  INFO("worst " << result.worst_tensor << " rel " << result.max_rel_error);
  CHECK(result.max_rel_error < 1e-3);
  CHECK(result.entries_checked > 100);
}

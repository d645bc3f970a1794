#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "support/torch_doctest.hpp"
#include "gpgan/errors.hpp"
#include "gpgan/evaluation.hpp"
#include "gpgan/training.hpp"

using namespace gpgan::eval;
using gpgan::landmarks::Point;
namespace fs = std::filesystem;

namespace {

// Independent reference: count bit flips around the byte one bit at a time.
bool is_uniform_ref(int code) {
  int flips = 0;
  for (int i = 0; i < 8; ++i) flips += ((code >> i) & 1) != ((code >> ((i + 1) % 8)) & 1);
  return flips <= 2;
}

int bin_ref(int code) {
  if (!is_uniform_ref(code)) return 58;
  int rank = 0;
  for (int c = 0; c < code; ++c) rank += is_uniform_ref(c);
  return rank;
}

// Per-pixel recomputation: gather the clamped 3x3 patch, call lbp_code, and
// find the owning cell by scanning the cell bounds.
std::vector<double> brute_descriptor(const GrayImage& img, int gr, int gc) {
  std::vector<double> h(static_cast<std::size_t>(gr) * gc * 59, 0.0);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      std::array<double, 9> patch{};
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = std::min(std::max(r + dr, 0), img.rows - 1);
          const int cc = std::min(std::max(c + dc, 0), img.cols - 1);
          patch[(dr + 1) * 3 + (dc + 1)] = img.at(rr, cc);
        }
      }
      int ci = -1, cj = -1;
      for (int i = 0; i < gr; ++i) {
        if (r >= i * img.rows / gr && r < (i + 1) * img.rows / gr) ci = i;
      }
      for (int j = 0; j < gc; ++j) {
        if (c >= j * img.cols / gc && c < (j + 1) * img.cols / gc) cj = j;
      }
      h[(static_cast<std::size_t>(ci) * gc + cj) * 59 + bin_ref(lbp_code(patch))] += 1.0;
    }
  }
  return h;
}

GrayImage random_gray(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 12);  // few levels, many ties
  GrayImage g{rows, cols, {}};
  for (int i = 0; i < rows * cols; ++i) g.px.push_back(level(rng) * 20.0);
  return g;
}

}  // namespace

TEST_CASE("lbp_code bit convention") {
  std::array<double, 9> flat{};
  flat.fill(7.0);
  CHECK(lbp_code(flat) == 255);

  // clockwise from top-left: 6,1,1,1,1,1,1,6 around a center of 5
  const std::array<double, 9> p{6, 1, 1,  //
                                6, 5, 1,  //
                                1, 1, 1};
  CHECK(lbp_code(p) == 129);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 200);
  for (int t = 0; t < 100; ++t) {
    std::array<double, 9> a{}, b{};
    for (int k = 0; k < 9; ++k) {
      a[k] = std::round(u(rng));
      b[k] = a[k] + 10;
    }
    CHECK(lbp_code(a) == lbp_code(b));
  }
}

TEST_CASE("uniform pattern census") {
  int uniform = 0;
  for (int code = 0; code < 256; ++code) {
    uniform += is_uniform_ref(code);
    CHECK((circular_transitions(code) <= 2) == is_uniform_ref(code));
    CHECK(uniform_bins()[code] == bin_ref(code));
  }
  CHECK(uniform == 58);
  CHECK(uniform_bins()[0] == 0);
  CHECK(uniform_bins()[255] == 57);
}

TEST_CASE("descriptor matches per-pixel recomputation") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto img = random_gray(16, 16, rng);
    const auto d = lbp_descriptor(img, 8, 8);
    REQUIRE(d.size() == 8u * 8u * 59u);
    CHECK(d.histogram == brute_descriptor(img, 8, 8));
  }
  // uneven cells
  const auto odd = random_gray(15, 13, rng);
  const auto d = lbp_descriptor(odd, 4, 3);
  CHECK(d.histogram == brute_descriptor(odd, 4, 3));
}

TEST_CASE("descriptor cell totals and constant images") {
  GrayImage flat{64, 64, std::vector<double>(64 * 64, 90.0)};
  const auto d = lbp_descriptor(flat);
  for (int cell = 0; cell < 64; ++cell) {
    for (int b = 0; b < 59; ++b) CHECK(d.histogram[cell * 59 + b] == (b == 57 ? 64.0 : 0.0));
  }
  std::mt19937_64 rng(2);
  const auto img = random_gray(64, 64, rng);
  const auto r = lbp_descriptor(img);
  for (int cell = 0; cell < 64; ++cell) {
    double s = 0;
    for (int b = 0; b < 59; ++b) s += r.histogram[cell * 59 + b];
    CHECK(s == 64.0);
  }
  const auto f = lbp_feature(r);
  double total = 0;
  for (const auto v : f) total += v;
  CHECK(total == doctest::Approx(64.0).epsilon(1e-12));
  CHECK_THROWS_AS(lbp_descriptor(img, 0, 8), gpgan::ArgumentError);
}

TEST_CASE("gray conversion uses 601 luma on 8-bit levels") {
  std::vector<float> chw(3 * 64 * 64, -1.0f);
  for (int i = 0; i < 64 * 64; ++i) chw[i] = 1.0f;  // pure red
  const auto g = to_gray(gpgan::landmarks::FaceImage(chw));
  CHECK(g.at(5, 5) == std::round(0.299 * 255));
  CHECK(g.rows == 64);
}

TEST_CASE("landmark features") {
  const auto lm = gpgan::landmarks::frontal_template();
  const auto d = landmark_features(lm, FeatureMode::Distance);
  const auto a = landmark_features(lm, FeatureMode::Angle);
  REQUIRE(d.size() == 2278);
  REQUIRE(a.size() == 2278);
  for (const auto v : d) CHECK(v >= 0);
  for (const auto v : a) CHECK((v > -std::numbers::pi && v <= std::numbers::pi));

  // pair_index addresses the i<j enumeration
  const auto& p = lm.points();
  const double iod = std::hypot(lm.right_eye_center().x - lm.left_eye_center().x,
                                lm.right_eye_center().y - lm.left_eye_center().y);
  CHECK(d[pair_index(0, 16)] == doctest::Approx(std::hypot(p[16].x - p[0].x, p[16].y - p[0].y) / iod));
  CHECK(d[pair_index(66, 67)] == doctest::Approx(std::hypot(p[67].x - p[66].x, p[67].y - p[66].y) / iod));
  CHECK(pair_index(66, 67) == 2277);

  // similarity transforms leave distance features unchanged
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 25; ++t) {
    const double th = u(rng) * std::numbers::pi, s = std::exp(2 * u(rng)), tx = 50 * u(rng), ty = 50 * u(rng);
    std::vector<Point> q;
    for (const auto& pt : p) {
      q.push_back({s * (std::cos(th) * pt.x - std::sin(th) * pt.y) + tx, s * (std::sin(th) * pt.x + std::cos(th) * pt.y) + ty});
    }
    const auto dq = landmark_features(q, FeatureMode::Distance);
    double worst = 0;
    for (std::size_t k = 0; k < dq.size(); ++k) worst = std::max(worst, std::abs(dq[k] - d[k]));
    CHECK(worst < 1e-12);

    // angles rotate with the set
    const auto aq = landmark_features(q, FeatureMode::Angle);
    for (std::size_t k = 0; k < aq.size(); k += 97) {
      const double diff = std::remainder(aq[k] - a[k] - th, 2 * std::numbers::pi);
      CHECK(std::abs(diff) < 1e-9);
    }
  }

  std::vector<Point> same(68, Point{0.3, 0.3});
  CHECK_THROWS_AS(landmark_features(same, FeatureMode::Distance), gpgan::DegenerateInputError);
  CHECK(landmark_features(same, FeatureMode::Angle).size() == 2278);
  CHECK_THROWS_AS(landmark_features(std::vector<Point>(67), FeatureMode::Angle), gpgan::ArgumentError);

  // a straight leftward pair reads +pi, never -pi
  std::vector<Point> line(p.begin(), p.end());
  line[1] = {line[0].x - 0.1, line[0].y};
  CHECK(landmark_features(line, FeatureMode::Angle)[pair_index(0, 1)] == std::numbers::pi);
}

TEST_CASE("linear classifier on separable blobs") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 0.25);
  auto blobs = [&](int count, std::vector<std::vector<double>>& X, std::vector<int>& y) {
    for (int i = 0; i < count; ++i) {
      const int label = i % 2;
      const double c = label ? 1.0 : -1.0;  // centers two units apart on the diagonal
      X.push_back({c / std::sqrt(2.0) + n(rng), c / std::sqrt(2.0) + n(rng)});
      y.push_back(label);
    }
  };
  std::vector<std::vector<double>> X, Xt;
  std::vector<int> y, yt;
  blobs(200, X, y);
  blobs(200, Xt, yt);
  const auto clf = train_classifier(X, y);
  CHECK(clf.dim() == 2);
  const double acc = evaluate(clf, Xt, yt);
  CHECK(acc >= 0.99);

  std::vector<int> flipped;
  for (const auto v : yt) flipped.push_back(1 - v);
  CHECK(evaluate(clf, Xt, flipped) == doctest::Approx(1.0 - acc).epsilon(1e-15));

  LinearClassifier random;
  std::uniform_real_distribution<double> u(-1, 1);
  random.w = {u(rng), u(rng)};
  random.bias = u(rng);
  CHECK(evaluate(clf, X, y) >= evaluate(random, X, y));

  const auto again = train_classifier(X, y);
  CHECK(again.w == clf.w);
  CHECK(again.bias == clf.bias);

  CHECK_THROWS_AS(train_classifier(X, std::vector<int>(X.size(), 1)), gpgan::ValidationError);
  CHECK_THROWS_AS(train_classifier({}, {}), gpgan::ArgumentError);
  CHECK_THROWS_AS(clf.decision(std::vector<double>{1, 2, 3}), gpgan::ArgumentError);
}

TEST_CASE("recognition report is deterministic and well formed") {
  const auto dir = fs::temp_directory_path() / "gpgan_eval_report";
  fs::remove_all(dir);
  const auto manifest_path = gpgan::data::make_fixtures(dir.string(), {24, 12, 3});
  const auto manifest = gpgan::data::load_manifest(manifest_path);

  gpgan::training::TrainConfig cfg;
  cfg.g_width_divisor = 8;
  const gpgan::nn::Network g(gpgan::training::generator_spec(cfg),
                             gpgan::nn::ParameterSet::initialize(gpgan::training::generator_spec(cfg), 1));
  Protocol p;
  p.svm.epochs = 5;
  const auto r1 = recognition_report(g, cfg.heatmap(), manifest, p);
  const auto r2 = recognition_report(g, cfg.heatmap(), manifest, p);
  CHECK(r1.to_json() == r2.to_json());
  CHECK(r1.to_csv() == r2.to_csv());
  CHECK(r1.n_train == 24);
  CHECK(r1.n_test == 12);
  for (const char* m : {"GP-GAN", "LM(D)", "LM(A)", "Real"}) {
    const auto& row = r1.row(m);
    CHECK(row.folds.size() == 10);
    CHECK((row.mean >= 0 && row.mean <= 100));
    CHECK(row.std >= 0);
  }
  CHECK(r1.to_csv().rfind("method,dataset,mean,std,n_folds\n", 0) == 0);
  CHECK(r1.to_json()["dataset"] == "procedural-fixture");

  p.seed = 2;
  const auto r3 = recognition_report(g, cfg.heatmap(), manifest, p);
  CHECK(r3.row("LM(D)").mean >= 0);

  gpgan::data::DatasetManifest empty;
  CHECK_THROWS_AS(recognition_report(g, cfg.heatmap(), empty, p), gpgan::ValidationError);
}

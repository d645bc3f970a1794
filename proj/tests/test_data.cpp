#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "support/torch_doctest.hpp"
#include "gpgan/data.hpp"
#include "gpgan/errors.hpp"

using namespace gpgan::data;
using gpgan::landmarks::Point;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("gpgan_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

cv::Mat gradient_image(int w, int h) {
  cv::Mat img(h, w, CV_8UC3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img.at<cv::Vec3b>(r, c) = cv::Vec3b(c * 3 % 256, r * 5 % 256, (r * c) % 256);
  }
  return img;
}

std::vector<Point> template_pixels(double scale, double ox = 0, double oy = 0) {
  const auto t = gpgan::landmarks::frontal_template();
  std::vector<Point> p;
  for (const auto& q : t.points()) p.push_back({ox + q.x * scale, oy + q.y * scale});
  return p;
}

}  // namespace

TEST_CASE("crop identity: full-frame box keeps pixels and halves the centre") {
  cv::Mat img = gradient_image(64, 64);
  auto pts = template_pixels(64);
  pts[30] = {32, 32};
  const auto r = crop_and_normalize(img, pts, {0, 0, 64, 64});
  for (int row = 0; row < 64; ++row) {
    for (int col = 0; col < 64; ++col) {
      for (int c = 0; c < 3; ++c) {
        CHECK(r.image.at(c, row, col) == static_cast<float>(img.at<cv::Vec3b>(row, col)[c] / 127.5 - 1.0));
      }
    }
  }
  CHECK(r.landmarks[30].x == 0.5);
  CHECK(r.landmarks[30].y == 0.5);
  CHECK(r.clamped.empty());
}

TEST_CASE("crop of the left half maps the image centre column to x = 1") {
  cv::Mat img = gradient_image(64, 64);
  auto pts = template_pixels(32);
  pts[0] = {32, 10};
  const auto r = crop_and_normalize(img, pts, {0, 0, 32, 64});
  CHECK(r.landmarks[0].x == 1.0);
  CHECK(r.landmarks[0].y == doctest::Approx(10.0 / 64));
}

TEST_CASE("normalized landmarks map back to pixels within half a pixel") {
  cv::Mat img = gradient_image(200, 150);
  const BBox box{23.5, 11.25, 120, 130};
  const auto pts = template_pixels(110, 28, 17);
  const auto r = crop_and_normalize(img, pts, box);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point back = to_pixels(r.landmarks[i], box);
    CHECK(std::abs(back.x - pts[i].x) < 0.5);
    CHECK(std::abs(back.y - pts[i].y) < 0.5);
  }
}

TEST_CASE("crop errors and clamping") {
  cv::Mat img = gradient_image(64, 64);
  auto pts = template_pixels(64);
  CHECK_THROWS_AS(crop_and_normalize(img, pts, {10, 10, 0, 20}), gpgan::ArgumentError);
  CHECK_THROWS_AS(crop_and_normalize(img, pts, {70, 10, 20, 20}), gpgan::ArgumentError);
  const auto r = crop_and_normalize(img, pts, {0, 0, 32, 32});
  CHECK_FALSE(r.clamped.empty());
  for (const auto& p : r.landmarks.points()) {
    CHECK(p.x >= 0);
    CHECK(p.x <= 1);
  }
}

TEST_CASE("manifest round trip, pairs, corrupt records and ordering") {
  const auto dir = scratch("pairs");
  const std::string manifest = make_fixtures(dir.string(), {10, 4, 3});
  auto m = load_manifest(manifest);
  CHECK(m.records.size() == 14);
  CHECK(m.split("train").size() == 10);
  CHECK(m.provenance.at("source") == "procedural-fixture");

  auto ps = make_pairs(m, "train");
  CHECK(ps.pairs.size() == 10);
  CHECK(ps.skipped == 0);
  for (const auto& p : ps.pairs) {
    const auto h = p.heatmap({64, 2.0});
    for (std::size_t i = 0; i < gpgan::landmarks::kNumPoints; ++i) {
      const auto px = gpgan::landmarks::nearest_pixel(p.landmarks[i], 64);
      if (px[0] < 64 && px[1] < 64) CHECK(h.at(px[1], px[0]) == 1.0);
    }
  }

  auto a = make_pairs(m, "train", 9), b = make_pairs(m, "train", 9), c = make_pairs(m, "train", 10);
  std::vector<std::string> ia, ib, ic;
  for (std::size_t i = 0; i < 10; ++i) {
    ia.push_back(a.pairs[i].id);
    ib.push_back(b.pairs[i].id);
    ic.push_back(c.pairs[i].id);
  }
  CHECK(ia == ib);
  CHECK(ia != ic);

  // Corrupt one image of ten.
  { std::ofstream(m.split("train")[3]->image, std::ios::trunc) << "not a png"; }
  auto skipped = make_pairs(m, "train");
  CHECK(skipped.pairs.size() == 9);
  CHECK(skipped.skipped == 1);
  CHECK(skipped.warnings.size() == 1);

  // Two of ten is over the 10% budget.
  { std::ofstream(m.split("train")[4]->landmarks.get<std::string>(), std::ios::trunc) << "{"; }
  CHECK_THROWS_AS(make_pairs(m, "train"), gpgan::ValidationError);
}

TEST_CASE("manifest validation") {
  const auto dir = scratch("manifest");
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "m.jsonl") << text;
    return (dir / "m.jsonl").string();
  };
  CHECK_THROWS_AS(load_manifest(write(R"({"image":"a.png","landmarks":"a.json","gender":"X"})")),
                  gpgan::ValidationError);
  CHECK_THROWS_AS(load_manifest(write("{oops\n")), gpgan::ValidationError);
  CHECK_THROWS_AS(
      load_manifest(write(R"({"id":"a","image":"a.png","landmarks":"a.json","gender":"M","split":"train"})"
                          "\n"
                          R"({"id":"a","image":"a.png","landmarks":"a.json","gender":"M","split":"test"})")),
      gpgan::ValidationError);
  CHECK(load_manifest(write("")).records.empty());
  CHECK_THROWS_AS(load_manifest((dir / "missing.jsonl").string()), gpgan::ValidationError);
}

TEST_CASE("batches and image conversion") {
  const auto f = draw_fixture_face(Gender::Female, 5);
  cv::Mat rgb = f.rgb;
  const auto crop = crop_and_normalize(rgb, {f.landmarks.points().begin(), f.landmarks.points().end()}, {0, 0, 1, 1});
  CHECK(crop.image.data().size() == 3u * 64 * 64);

  std::vector<Pair> pairs{{"m", draw_fixture_face(Gender::Male, 1).landmarks, gpgan::landmarks::FaceImage::zeros(),
                           Gender::Male},
                          {"f", f.landmarks, gpgan::landmarks::FaceImage::zeros(), Gender::Female}};
  auto b = make_batch(pairs, {1, 0}, {64, 2.0});
  CHECK(b.heatmaps.sizes() == c10::IntArrayRef({2, 1, 64, 64}));
  CHECK(b.images.sizes() == c10::IntArrayRef({2, 3, 64, 64}));
  CHECK(b.labels[0].item<float>() == 0.0f);
  CHECK(b.labels[1].item<float>() == 1.0f);
  CHECK(b.heatmaps.max().item<float>() == 1.0f);
  CHECK_THROWS_AS(make_batch(pairs, {}, {64, 2.0}), gpgan::ArgumentError);

  auto t = torch::rand({3, 64, 64}) * 2 - 1;
  auto img = to_face_image(t);
  CHECK(torch::equal(image_tensor(img), t));
  const std::string png = encode_png(img);
  CHECK(png.substr(1, 3) == "PNG");
}

TEST_CASE("raw directory conversion keeps people within one split") {
  const auto raw = scratch("raw"), out = scratch("raw_out");
  for (int person = 0; person < 6; ++person) {
    fs::create_directories(raw / ("p" + std::to_string(person)));
    for (int k = 0; k < 3; ++k) {
      const auto f = draw_fixture_face(person % 2 ? Gender::Female : Gender::Male, 100 + person * 10 + k);
      cv::Mat big, bgr;
      cv::copyMakeBorder(f.rgb, big, 20, 20, 30, 30, cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
      cv::cvtColor(big, bgr, cv::COLOR_RGB2BGR);
      const auto stem = raw / ("p" + std::to_string(person)) / ("img" + std::to_string(k));
      cv::imwrite(stem.string() + ".png", bgr);
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : f.landmarks.points()) pts.push_back({30 + p.x * 64, 20 + p.y * 64});
      nlohmann::json side{{"points", pts}, {"gender", person % 2 ? "F" : "M"}, {"bbox", {30, 20, 64, 64}}};
      std::ofstream(stem.string() + ".json") << side.dump();
    }
  }
  std::ofstream(raw / "p0" / "orphan.png") << "x";
  const auto s = convert_raw_directory(raw.string(), out.string(), {0.25, 0.5, 3});
  CHECK(s.converted == 18);
  CHECK(s.skipped == 1);
  auto m = load_manifest(s.manifest);
  CHECK(m.records.size() == 18);
  std::map<std::string, std::set<std::string>> splits;
  for (const auto& r : m.records) splits[r.id.substr(0, 2)].insert(r.split);
  for (const auto& [person, sp] : splits) CHECK(sp.size() == 1);
  auto ps = make_pairs(m, "train");
  for (const auto& p : ps.pairs) CHECK(gpgan::landmarks::validate(p.landmarks).valid);
}

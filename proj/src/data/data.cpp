#include "gpgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"

namespace gpgan::data {

namespace fs = std::filesystem;
using landmarks::FaceImage;
using landmarks::kImageSize;
using landmarks::LandmarkSet;
using landmarks::Point;

Gender gender_from_string(const std::string& s) {
  if (s == "M") return Gender::Male;
  if (s == "F") return Gender::Female;
  throw ValidationError("gender must be \"M\" or \"F\", got \"" + s + "\"");
}

const char* to_string(Gender g) { return g == Gender::Male ? "M" : "F"; }

std::vector<const Record*> DatasetManifest::split(const std::string& name) const {
  std::vector<const Record*> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(&r);
  }
  return out;
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path);
  DatasetManifest m;
  m.base_dir = fs::absolute(path).parent_path().string();
  std::map<std::string, std::string> split_of;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (j.contains("provenance") && !j.contains("image")) {
      m.provenance = j["provenance"];
      continue;
    }
    if (!j.contains("image") || !j.contains("landmarks") || !j.contains("gender")) {
      throw ValidationError(where + ": record needs image, landmarks and gender");
    }
    Record r;
    r.image = resolve(m.base_dir, j["image"].get<std::string>());
    r.landmarks = j["landmarks"];
    if (r.landmarks.is_string()) r.landmarks = resolve(m.base_dir, r.landmarks.get<std::string>());
    try {
      r.gender = gender_from_string(j["gender"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    r.split = j.value("split", "train");
    r.id = j.value("id", j["image"].get<std::string>());
    auto [it, fresh] = split_of.emplace(r.id, r.split);
    if (!fresh && it->second != r.split) {
      throw ValidationError(where + ": record '" + r.id + "' appears in splits " + it->second + " and " + r.split);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  const fs::path dir = fs::absolute(path).parent_path();
  auto rel = [&](const std::string& p) {
    const auto r = fs::absolute(p).lexically_normal().lexically_relative(dir);
    return r.empty() || r.string().starts_with("..") ? p : r.string();
  };
  std::ostringstream out;
  if (!m.provenance.empty()) out << nlohmann::json{{"provenance", m.provenance}}.dump() << "\n";
  for (const auto& r : m.records) {
    nlohmann::json j{{"id", r.id},
                     {"image", rel(r.image)},
                     {"landmarks", r.landmarks.is_string() ? nlohmann::json(rel(r.landmarks)) : r.landmarks},
                     {"gender", to_string(r.gender)},
                     {"split", r.split}};
    out << j.dump() << "\n";
  }
  io::write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------

namespace {

double sample(const cv::Mat& img, int c, double y, double x) {
  const int h = img.rows, w = img.cols;
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) { return static_cast<double>(img.at<cv::Vec3b>(yy, xx)[c]); };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) + fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
}

}  // namespace

CropResult crop_and_normalize(const cv::Mat& rgb, const std::vector<Point>& pts, BBox box) {
  if (rgb.empty() || rgb.type() != CV_8UC3) throw ArgumentError("crop_and_normalize: expected an 8-bit RGB image");
  if (pts.size() != landmarks::kNumPoints) {
    throw ValidationError("crop_and_normalize: expected 68 landmarks, got " + std::to_string(pts.size()));
  }
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(rgb.cols));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(rgb.rows));
  const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(rgb.cols));
  const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(rgb.rows));
  box = {x0, y0, x1 - x0, y1 - y0};
  if (!(box.w > 0 && box.h > 0)) throw ArgumentError("crop_and_normalize: bounding box has zero area");

  std::vector<float> chw(3u * kImageSize * kImageSize);
  const double sx = box.w / kImageSize, sy = box.h / kImageSize;
  for (int r = 0; r < kImageSize; ++r) {
    const double y = box.y + (r + 0.5) * sy - 0.5;
    for (int col = 0; col < kImageSize; ++col) {
      const double x = box.x + (col + 0.5) * sx - 0.5;
      for (int c = 0; c < 3; ++c) {
        const double v = sample(rgb, c, y, x) / 127.5 - 1.0;
        chw[(static_cast<std::size_t>(c) * kImageSize + r) * kImageSize + col] =
            static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }

  std::vector<Point> norm(pts.size());
  std::vector<int> clamped;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!std::isfinite(pts[i].x) || !std::isfinite(pts[i].y)) {
      throw ValidationError("crop_and_normalize: landmark " + std::to_string(i) + " is not finite");
    }
    Point q{(pts[i].x - box.x) / box.w, (pts[i].y - box.y) / box.h};
    if (q.x < 0 || q.x > 1 || q.y < 0 || q.y > 1) {
      clamped.push_back(static_cast<int>(i));
      q = {std::clamp(q.x, 0.0, 1.0), std::clamp(q.y, 0.0, 1.0)};
    }
    norm[i] = q;
  }
  return {FaceImage(std::move(chw)), LandmarkSet(norm), std::move(clamped)};
}

Point to_pixels(const Point& p, const BBox& box) { return {box.x + p.x * box.w, box.y + p.y * box.h}; }

BBox landmark_box(const std::vector<Point>& pts, double margin) {
  if (pts.empty()) throw ArgumentError("landmark_box: no points");
  double x0 = pts[0].x, x1 = x0, y0 = pts[0].y, y1 = y0;
  for (const auto& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double side = std::max(x1 - x0, y1 - y0) * (1.0 + 2.0 * margin);
  const double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
  return {cx - side / 2, cy - side / 2, side, side};
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

FaceImage load_face_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("cannot read image " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.rows != kImageSize || rgb.cols != kImageSize) {
    cv::resize(rgb, rgb, {kImageSize, kImageSize}, 0, 0, cv::INTER_LINEAR);
  }
  std::vector<float> chw(3u * kImageSize * kImageSize);
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      const auto& px = rgb.at<cv::Vec3b>(r, c);
      for (int ch = 0; ch < 3; ++ch) {
        chw[(static_cast<std::size_t>(ch) * kImageSize + r) * kImageSize + c] = static_cast<float>(px[ch] / 127.5 - 1.0);
      }
    }
  }
  return FaceImage(std::move(chw));
}

namespace {

cv::Mat to_bgr(const FaceImage& img) {
  cv::Mat bgr(kImageSize, kImageSize, CV_8UC3);
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::round((img.at(ch, r, c) + 1.0) * 127.5);
        bgr.at<cv::Vec3b>(r, c)[2 - ch] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return bgr;
}

}  // namespace

std::string encode_png(const FaceImage& img) {
  std::vector<std::uint8_t> buf;
  cv::imencode(".png", to_bgr(img), buf);
  return {buf.begin(), buf.end()};
}

void save_face_image(const FaceImage& img, const std::string& path) { io::write_file_atomic(path, encode_png(img)); }

PairSet make_pairs(const DatasetManifest& manifest, const std::string& split, std::uint64_t seed) {
  const auto records = manifest.split(split);
  PairSet out;
  for (const Record* r : records) {
    try {
      LandmarkSet lm = r->landmarks.is_string() ? landmarks::load_landmarks(r->landmarks.get<std::string>())
                                                : landmarks::landmarks_from_json(r->landmarks);
      out.pairs.push_back({r->id, std::move(lm), load_face_image(r->image), r->gender});
    } catch (const std::exception& e) {
      ++out.skipped;
      out.warnings.push_back("skipping record '" + r->id + "': " + e.what());
    }
  }
  if (out.skipped * 10 > records.size()) {
    throw ValidationError("split '" + split + "': " + std::to_string(out.skipped) + " of " +
                          std::to_string(records.size()) + " records unreadable (more than 10%)");
  }
  if (seed != 0) {
    const auto order = permutation(out.pairs.size(), seed);
    std::vector<Pair> shuffled;
    shuffled.reserve(order.size());
    for (std::size_t i : order) shuffled.push_back(out.pairs[i]);
    out.pairs = std::move(shuffled);
  }
  return out;
}

torch::Tensor heatmap_tensor(const LandmarkSet& lm, const landmarks::HeatmapOptions& opts) {
  const auto h = landmarks::render_heatmap(lm, opts);
  return torch::tensor(h.data, torch::kFloat64).view({1, h.size, h.size});
}

torch::Tensor image_tensor(const FaceImage& img) {
  return torch::from_blob(const_cast<float*>(img.data().data()), {3, kImageSize, kImageSize}, torch::kFloat32).clone();
}

FaceImage to_face_image(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kCPU, torch::kFloat32).clamp(-1.0, 1.0).contiguous();
  if (t.dim() != 3 || t.size(0) != 3 || t.size(1) != kImageSize || t.size(2) != kImageSize) {
    throw ArgumentError("expected a 3x64x64 image tensor, got " + c10::str(t.sizes()));
  }
  return FaceImage(std::vector<float>(t.data_ptr<float>(), t.data_ptr<float>() + t.numel()));
}

Batch make_batch(const std::vector<Pair>& pairs, const std::vector<std::size_t>& indices,
                 const landmarks::HeatmapOptions& opts, torch::Dtype dtype) {
  std::vector<torch::Tensor> h, x;
  std::vector<float> y;
  for (std::size_t i : indices) {
    const Pair& p = pairs.at(i);
    h.push_back(heatmap_tensor(p.landmarks, opts));
    x.push_back(image_tensor(p.image));
    y.push_back(label_of(p.gender));
  }
  if (h.empty()) throw ArgumentError("make_batch: empty batch");
  return {torch::stack(h).to(dtype), torch::stack(x).to(dtype), torch::tensor(y).to(dtype)};
}

// ---------------------------------------------------------------------------
// Procedural fixtures

namespace {

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(engine); }
};

constexpr int kCanvas = 256;

cv::Point px(const Point& p) {
  return {static_cast<int>(std::lround(p.x * kCanvas * 16)), static_cast<int>(std::lround(p.y * kCanvas * 16))};
}

std::vector<cv::Point> range(const LandmarkSet& lm, int begin, int end) {
  std::vector<cv::Point> out;
  for (int i = begin; i < end; ++i) out.push_back(px(lm[static_cast<std::size_t>(i)]));
  return out;
}

cv::Scalar shade(const cv::Scalar& c, double f) { return {c[0] * f, c[1] * f, c[2] * f}; }

void fill(cv::Mat& img, const std::vector<cv::Point>& pts, const cv::Scalar& color) {
  std::vector<std::vector<cv::Point>> polys{pts};
  cv::fillPoly(img, polys, color, cv::LINE_AA, 4);
}

void ellipse(cv::Mat& img, Point c, double ax, double ay, const cv::Scalar& color) {
  cv::ellipse(img, px(c), {static_cast<int>(ax * kCanvas * 16), static_cast<int>(ay * kCanvas * 16)}, 0, 0, 360,
              color, cv::FILLED, cv::LINE_AA, 4);
}

}  // namespace

FixtureFace draw_fixture_face(Gender g, std::uint64_t seed) {
  Rng rng(seed);
  const bool male = g == Gender::Male;

  landmarks::FaceShape s;
  s.eye_spacing = rng.normal(0.36, 0.015);
  s.eye_width = rng.normal(0.12, 0.01);
  s.eye_height = rng.normal(male ? 0.040 : 0.048, 0.006);
  s.brow_y = s.eye_y - rng.normal(male ? 0.075 : 0.092, 0.012);
  s.brow_arch = rng.normal(male ? 0.012 : 0.024, 0.006);
  s.nose_length = rng.normal(0.15, 0.012);
  s.mouth_y = rng.normal(0.74, 0.015);
  s.mouth_width = rng.normal(0.26, 0.02);
  s.mouth_open = std::max(0.0, rng.normal(0.03, 0.02));
  s.jaw_half_width = rng.normal(male ? 0.37 : 0.345, 0.018);
  s.jaw_depth = rng.normal(male ? 0.53 : 0.50, 0.02);
  s.smile = rng.normal(0.0, 0.01);
  const LandmarkSet base = landmarks::frontal_template(s);

  // Global similarity: males are drawn larger in the crop.
  const double scale = rng.normal(male ? 1.0 : 0.9, 0.035);
  const double angle = rng.normal(0.0, 0.04);
  const double tx = rng.normal(0.0, 0.015), ty = rng.normal(0.0, 0.015);
  std::array<Point, landmarks::kNumPoints> pts{};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = base[i].x - 0.5, dy = base[i].y - 0.55;
    pts[i] = {std::clamp(0.5 + tx + scale * (std::cos(angle) * dx - std::sin(angle) * dy), 0.0, 1.0),
              std::clamp(0.55 + ty + scale * (std::sin(angle) * dx + std::cos(angle) * dy), 0.0, 1.0)};
  }
  const LandmarkSet lm(pts);

  const double tone = rng.uniform(0.55, 1.0);
  const cv::Scalar skin{230 * tone, 180 * tone, 150 * tone};
  const double hv = rng.uniform(0.12, 0.5);
  const cv::Scalar hair{140 * hv, 100 * hv, 70 * hv};
  const cv::Scalar bg{rng.uniform(60, 220), rng.uniform(60, 220), rng.uniform(60, 220)};

  cv::Mat img(kCanvas, kCanvas, CV_8UC3, bg);
  const Point top{(lm[0].x + lm[16].x) / 2, (lm[0].y + lm[16].y) / 2};
  const double half_w = std::hypot(lm[16].x - lm[0].x, lm[16].y - lm[0].y) / 2;
  const double brow_y = std::min(lm[19].y, lm[24].y);

  if (!male) {
    // Long hair framing the face down to the shoulders.
    ellipse(img, {top.x, top.y + 0.12}, half_w * rng.uniform(1.25, 1.45), rng.uniform(0.5, 0.62), hair);
  }
  // Neck.
  fill(img,
       {px({lm[6].x, lm[6].y}), px({lm[10].x, lm[10].y}), px({lm[10].x + 0.02, 1.0}), px({lm[6].x - 0.02, 1.0})},
       shade(skin, 0.85));
  // Short crown hair for males, drawn under the face so only the top shows.
  if (male) ellipse(img, {top.x, brow_y - 0.02}, half_w * rng.uniform(1.0, 1.08), rng.uniform(0.16, 0.22), hair);

  // Face: jaw contour closed by a forehead arc.
  std::vector<cv::Point> face = range(lm, 0, 17);
  const double forehead = brow_y - top.y - rng.uniform(0.10, 0.14);
  for (int i = 1; i < 16; ++i) {
    const double t = std::numbers::pi * i / 16.0;
    face.push_back(px({top.x + half_w * std::cos(t), top.y + forehead * std::sin(t)}));
  }
  fill(img, face, skin);

  if (male) {
    // Beard shadow over the lower jaw, random density.
    cv::Mat overlay = img.clone();
    std::vector<cv::Point> beard = range(lm, 3, 14);
    beard.push_back(px(lm[54]));
    beard.push_back(px({lm[33].x, lm[33].y + 0.015}));
    beard.push_back(px(lm[48]));
    fill(overlay, beard, shade(hair, 0.9));
    const double a = rng.uniform(0.15, 0.6);
    cv::addWeighted(overlay, a, img, 1 - a, 0, img);
  } else {
    // Fringe over the forehead.
    ellipse(img, {top.x, top.y + forehead * 0.85}, half_w * 0.95, std::abs(forehead) * 0.45, hair);
  }

  const int brow_w = static_cast<int>((male ? rng.uniform(9, 14) : rng.uniform(5, 8)));
  const cv::Scalar brow_c = shade(hair, 0.8);
  for (int b : {17, 22}) {
    const auto pts_b = range(lm, b, b + 5);
    cv::polylines(img, pts_b, false, brow_c, brow_w, cv::LINE_AA, 4);
  }
  for (int e : {36, 42}) {
    fill(img, range(lm, e, e + 6), {235, 235, 230});
    const Point c = lm.centroid(static_cast<std::size_t>(e), static_cast<std::size_t>(e + 6));
    ellipse(img, c, 0.018, 0.018, {40, 30, 25});
  }
  cv::polylines(img, range(lm, 27, 31), false, shade(skin, 0.75), 4, cv::LINE_AA, 4);
  cv::polylines(img, range(lm, 31, 36), false, shade(skin, 0.7), 4, cv::LINE_AA, 4);

  const cv::Scalar lips = male ? cv::Scalar(skin[0] * 0.85, skin[1] * 0.65, skin[2] * 0.65)
                               : cv::Scalar(rng.uniform(170, 220), rng.uniform(40, 80), rng.uniform(60, 100));
  fill(img, range(lm, 48, 60), lips);
  fill(img, range(lm, 60, 68), {60, 20, 25});

  cv::Mat small;
  cv::resize(img, small, {kImageSize, kImageSize}, 0, 0, cv::INTER_AREA);
  cv::Mat noise(small.size(), CV_16SC3);
  cv::RNG cvrng(seed ^ 0x9e3779b97f4a7c15ULL);
  cvrng.fill(noise, cv::RNG::NORMAL, 0, 3);
  cv::Mat out;
  small.convertTo(out, CV_16SC3);
  out += noise;
  out.convertTo(small, CV_8UC3);
  return {lm, small};
}

std::string make_fixtures(const std::string& dir, const FixtureOptions& opts) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "landmarks");
  DatasetManifest m;
  m.provenance = {{"source", "procedural-fixture"}, {"seed", opts.seed}, {"version", 1}};
  std::mt19937_64 rng(opts.seed);
  const int total = opts.n_train + opts.n_test;
  for (int i = 0; i < total; ++i) {
    const Gender g = i % 2 == 0 ? Gender::Male : Gender::Female;
    const std::uint64_t face_seed = rng();
    FixtureFace f = draw_fixture_face(g, face_seed);
    char name[32];
    std::snprintf(name, sizeof name, "face_%05d", i);
    const std::string image = (fs::path(dir) / "images" / (std::string(name) + ".png")).string();
    const std::string lm = (fs::path(dir) / "landmarks" / (std::string(name) + ".json")).string();
    cv::Mat bgr;
    cv::cvtColor(f.rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> png;
    cv::imencode(".png", bgr, png);
    io::write_file_atomic(image, std::string(png.begin(), png.end()));
    landmarks::save_landmarks(f.landmarks, lm);
    m.records.push_back({name, image, lm, g, i < opts.n_train ? "train" : "test"});
  }
  const std::string path = (fs::path(dir) / "manifest.jsonl").string();
  save_manifest(m, path);
  return path;
}

// ---------------------------------------------------------------------------

ConvertSummary convert_raw_directory(const std::string& raw_dir, const std::string& out_dir,
                                     const ConvertOptions& opts) {
  if (!fs::is_directory(raw_dir)) throw ValidationError("not a directory: " + raw_dir);
  std::vector<fs::path> images;
  for (const auto& e : fs::recursive_directory_iterator(raw_dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());

  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "landmarks");
  ConvertSummary summary;
  DatasetManifest m;
  m.provenance = {{"source", fs::absolute(raw_dir).string()}, {"preprocess", "crop64-bilinear/1"},
                  {"margin", opts.margin}};
  for (const auto& img_path : images) {
    const std::string rel = fs::relative(img_path, raw_dir).string();
    try {
      auto side = img_path;
      side.replace_extension(".json");
      if (!fs::exists(side)) throw ValidationError("no landmark sidecar");
      const auto j = nlohmann::json::parse(io::read_file(side.string()));
      const auto pts = landmarks::points_from_json(j.at("points"));
      const Gender g = gender_from_string(j.at("gender").get<std::string>());
      BBox box = landmark_box(pts, opts.margin);
      if (j.contains("bbox")) {
        const auto b = j["bbox"].get<std::vector<double>>();
        if (b.size() != 4) throw ValidationError("bbox needs 4 numbers");
        box = {b[0], b[1], b[2], b[3]};
      }
      cv::Mat bgr = cv::imread(img_path.string(), cv::IMREAD_COLOR);
      if (bgr.empty()) throw ValidationError("unreadable image");
      cv::Mat rgb;
      cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
      const CropResult crop = crop_and_normalize(rgb, pts, box);
      if (!crop.clamped.empty()) {
        summary.warnings.push_back(rel + ": " + std::to_string(crop.clamped.size()) + " landmarks clamped to the crop");
      }

      std::string id = rel;
      std::replace(id.begin(), id.end(), '/', '_');
      id = fs::path(id).replace_extension().string();
      const std::string person = img_path.parent_path().filename().string();
      const double u = static_cast<double>(io::fnv1a64(person + "#" + std::to_string(opts.seed)) >> 11) * 0x1.0p-53;
      const std::string split = u < opts.test_fraction ? "test" : "train";

      const std::string out_img = (fs::path(out_dir) / "images" / (id + ".png")).string();
      const std::string out_lm = (fs::path(out_dir) / "landmarks" / (id + ".json")).string();
      save_face_image(crop.image, out_img);
      landmarks::save_landmarks(crop.landmarks, out_lm);
      m.records.push_back({id, out_img, out_lm, g, split});
      ++summary.converted;
    } catch (const std::exception& e) {
      ++summary.skipped;
      summary.warnings.push_back(rel + ": skipped (" + e.what() + ")");
    }
  }
  summary.manifest = (fs::path(out_dir) / "manifest.jsonl").string();
  save_manifest(m, summary.manifest);
  return summary;
}

}  // namespace gpgan::data

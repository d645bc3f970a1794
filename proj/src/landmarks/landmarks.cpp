#include "gpgan/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"

namespace gpgan::landmarks {

namespace {

bool in_unit_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

LandmarkSet::LandmarkSet(std::span<const Point> points, std::string schema)
    : schema_(std::move(schema)) {
  if (points.size() != kNumPoints) {
    throw ValidationError("landmark set needs exactly 68 points, got " +
                          std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < kNumPoints; ++i) {
    const Point& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValidationError("point " + std::to_string(i) + " is not finite");
    }
    if (!in_unit_range(p.x) || !in_unit_range(p.y)) {
      throw ValidationError("point " + std::to_string(i) + " outside [0,1]: (" +
                            std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
    }
    points_[i] = p;
  }
}

Point LandmarkSet::centroid(std::size_t begin, std::size_t end) const {
  Point c;
  for (std::size_t i = begin; i < end; ++i) {
    c.x += points_[i].x;
    c.y += points_[i].y;
  }
  const double n = static_cast<double>(end - begin);
  return {c.x / n, c.y / n};
}

// ---------------------------------------------------------------------------

std::array<int, 2> nearest_pixel(const Point& p, int size) {
  return {static_cast<int>(std::floor(p.x * size + 0.5)),
          static_cast<int>(std::floor(p.y * size + 0.5))};
}

HeatmapTensor render_heatmap(const LandmarkSet& lm, int size, double sigma_px) {
  if (size < 8) throw ArgumentError("heatmap size must be >= 8");
  if (!(sigma_px > 0.0) || !std::isfinite(sigma_px)) {
    throw ArgumentError("sigma_px must be a positive finite number");
  }
  HeatmapTensor out{size, sigma_px, std::vector<double>(static_cast<std::size_t>(size) * size, 0.0)};
  const double inv_two_var = 1.0 / (2.0 * sigma_px * sigma_px);
  // Bumps below this are exactly representable as 0 in double anyway; the
  // cutoff only bounds the per-landmark window.
  const int radius = static_cast<int>(std::ceil(sigma_px * 40.0));
  for (const Point& p : lm.points()) {
    const auto [cx, cy] = nearest_pixel(p, size);
    const int r0 = std::max(0, cy - radius), r1 = std::min(size - 1, cy + radius);
    const int c0 = std::max(0, cx - radius), c1 = std::min(size - 1, cx + radius);
    for (int row = r0; row <= r1; ++row) {
      const double dy = row - cy;
      for (int col = c0; col <= c1; ++col) {
        const double dx = col - cx;
        const double v = std::exp(-(dx * dx + dy * dy) * inv_two_var);
        double& cell = out.data[static_cast<std::size_t>(row) * size + col];
        cell = std::max(cell, v);
      }
    }
  }
  return out;
}

HeatmapTensor render_heatmap(const LandmarkSet& lm, const HeatmapOptions& opts) {
  return render_heatmap(lm, opts.size, opts.sigma_px());
}

// ---------------------------------------------------------------------------

LandmarkSet manipulate(const LandmarkSet& lm, const EditMap& edits) {
  std::array<Point, kNumPoints> pts = lm.points();
  for (const auto& [index, p] : edits) {
    if (index < 0 || index >= static_cast<int>(kNumPoints)) {
      throw ArgumentError("landmark index " + std::to_string(index) + " out of range [0,67]");
    }
    if (!in_unit_range(p.x) || !in_unit_range(p.y)) {
      throw ArgumentError("edited coordinate for point " + std::to_string(index) +
                          " outside [0,1]");
    }
    pts[static_cast<std::size_t>(index)] = p;
  }
  return LandmarkSet(pts, lm.schema());
}

EditMap close_mouth_edits(const LandmarkSet& lm) {
  EditMap edits;
  for (int k = 0; k < 3; ++k) {
    const int top = 61 + k, bottom = 67 - k;
    edits[top] = {lm[top].x, lm[bottom].y};
  }
  return edits;
}

double mouth_gap(const LandmarkSet& lm) {
  double gap = 0.0;
  for (int k = 0; k < 3; ++k) gap += std::abs(lm[61 + k].y - lm[67 - k].y);
  return gap / 3.0;
}

ValidityReport validate(std::span<const Point> points) {
  ValidityReport report;
  if (points.size() != kNumPoints) {
    report.valid = false;
    report.warnings.push_back("expected 68 points, got " + std::to_string(points.size()));
    return report;
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!in_unit_range(points[i].x) || !in_unit_range(points[i].y)) {
      report.range_violations.push_back(static_cast<int>(i));
      report.warnings.push_back("point " + std::to_string(i) + " outside [0,1]");
    }
  }
  auto mean_x = [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += points[i].x;
    return s / static_cast<double>(e - b);
  };
  if (!(mean_x(36, 42) < mean_x(42, 48))) {
    report.eye_order_anomaly = true;
    report.warnings.push_back("image-left eye (36-41) is not left of image-right eye (42-47)");
  }
  report.valid = report.warnings.empty();
  return report;
}

ValidityReport validate(const LandmarkSet& lm) { return validate(std::span(lm.points())); }

// ---------------------------------------------------------------------------

LandmarkSet frontal_template(const FaceShape& s) {
  std::array<Point, kNumPoints> p{};
  const double cx = s.center_x;

  for (int i = 0; i < 17; ++i) {
    const double theta = std::numbers::pi - i * std::numbers::pi / 16.0;
    p[i] = {cx + s.jaw_half_width * std::cos(theta), s.jaw_top + s.jaw_depth * std::sin(theta)};
  }

  const double left_eye_x = cx - s.eye_spacing / 2.0;
  const double right_eye_x = cx + s.eye_spacing / 2.0;
  for (int i = 0; i < 5; ++i) {
    const double t = (i - 2) / 2.0;  // -1..1
    const double dy = -s.brow_arch * (1.0 - t * t);
    p[17 + i] = {left_eye_x + 0.09 * t, s.brow_y + dy};
    p[22 + i] = {right_eye_x + 0.09 * t, s.brow_y + dy};
  }

  for (int i = 0; i < 4; ++i) p[27 + i] = {cx, s.eye_y + s.nose_length * i / 3.0};
  const double base_y = s.eye_y + s.nose_length + 0.05;
  for (int i = 0; i < 5; ++i) {
    const double t = (i - 2) / 2.0;
    p[31 + i] = {cx + 0.07 * t, base_y + 0.02 * (1.0 - t * t)};
  }

  // Eye contours: outer/inner corner, two upper, two lower points.
  const double w = s.eye_width, h = s.eye_height, ey = s.eye_y;
  auto eye = [&](std::size_t first, double ex) {
    p[first + 0] = {ex - w / 2, ey};
    p[first + 1] = {ex - w / 6, ey - h / 2};
    p[first + 2] = {ex + w / 6, ey - h / 2};
    p[first + 3] = {ex + w / 2, ey};
    p[first + 4] = {ex + w / 6, ey + h / 2};
    p[first + 5] = {ex - w / 6, ey + h / 2};
  };
  eye(36, left_eye_x);
  eye(42, right_eye_x);

  const double half = s.mouth_width / 2.0, my = s.mouth_y;
  p[48] = {cx - half, my - s.smile};
  p[54] = {cx + half, my - s.smile};
  constexpr double kLipX[5] = {-2.0 / 3, -1.0 / 3, 0.0, 1.0 / 3, 2.0 / 3};
  constexpr double kLipDepth[5] = {0.7, 1.0, 0.9, 1.0, 0.7};
  for (int i = 0; i < 5; ++i) {
    p[49 + i] = {cx + half * kLipX[i], my - s.upper_lip * kLipDepth[i]};
    p[55 + i] = {cx - half * kLipX[i], my + s.lower_lip * kLipDepth[i]};
  }
  p[60] = {cx - 0.7 * half, my - 0.7 * s.smile};
  p[64] = {cx + 0.7 * half, my - 0.7 * s.smile};
  for (int i = 0; i < 3; ++i) {
    const double x = cx + half * 0.35 * (i - 1);
    p[61 + i] = {x, my - s.mouth_open / 2.0};
    p[67 - i] = {x, my + s.mouth_open / 2.0};
  }
  return LandmarkSet(p);
}

LandmarkSet mirrored(const LandmarkSet& lm) {
  std::array<Point, kNumPoints> p = lm.points();
  for (auto& q : p) q.x = 1.0 - q.x;
  return LandmarkSet(p, lm.schema());
}

std::vector<NamedTemplate> builtin_templates() {
  FaceShape male;
  male.jaw_half_width = 0.38;
  male.brow_y = 0.32;
  male.brow_arch = 0.01;
  male.nose_length = 0.16;
  male.mouth_width = 0.28;

  FaceShape female;
  female.jaw_half_width = 0.33;
  female.jaw_depth = 0.50;
  female.brow_y = 0.30;
  female.brow_arch = 0.03;
  female.eye_height = 0.05;
  female.mouth_width = 0.24;

  FaceShape open = female;
  open.mouth_open = 0.10;
  open.lower_lip = 0.11;

  FaceShape closed = male;
  closed.mouth_open = 0.0;

  FaceShape smile = female;
  smile.smile = 0.03;

  return {
      {"frontal", frontal_template()},
      {"frontal-M", frontal_template(male)},
      {"frontal-F", frontal_template(female)},
      {"mouth-open", frontal_template(open)},
      {"mouth-closed", frontal_template(closed)},
      {"smile", frontal_template(smile)},
  };
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LandmarkSet& lm) {
  nlohmann::json pts = nlohmann::json::array();
  for (const Point& p : lm.points()) pts.push_back({p.x, p.y});
  return {{"schema", lm.schema()}, {"points", pts}};
}

std::vector<Point> points_from_json(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    if (!j.contains("points")) throw ValidationError("landmark object has no \"points\" field");
    arr = &j.at("points");
  }
  if (!arr->is_array()) throw ValidationError("\"points\" must be an array");
  std::vector<Point> out;
  out.reserve(arr->size());
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto& e = (*arr)[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw ValidationError("points[" + std::to_string(i) + "] must be [x, y]");
    }
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

LandmarkSet landmarks_from_json(const nlohmann::json& j) {
  std::string schema = kSchemaId;
  if (j.is_object() && j.contains("schema")) {
    schema = j.at("schema").get<std::string>();
    if (schema != kSchemaId) throw ValidationError("unsupported landmark schema '" + schema + "'");
  }
  return LandmarkSet(points_from_json(j), schema);
}

LandmarkSet load_landmarks(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ValidationError(e.what());
  }
  return landmarks_from_json(j);
}

void save_landmarks(const LandmarkSet& lm, const std::string& path) {
  io::write_file_atomic(path, to_json(lm).dump());
}

// ---------------------------------------------------------------------------

FaceImage::FaceImage(std::vector<float> chw) : data_(std::move(chw)) {
  if (data_.size() != 3u * kImageSize * kImageSize) {
    throw ValidationError("face image must be 3x64x64");
  }
  for (float v : data_) {
    if (!(v >= -1.0f && v <= 1.0f)) throw ValidationError("face image value outside [-1,1]");
  }
}

FaceImage FaceImage::zeros() { return FaceImage(std::vector<float>(3u * kImageSize * kImageSize)); }

}  // namespace gpgan::landmarks

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gpgan::landmarks {

inline constexpr std::size_t kNumPoints = 68;
inline constexpr std::size_t kNumPairs = kNumPoints * (kNumPoints - 1) / 2;  // 2278
inline constexpr const char* kSchemaId = "ibug68";

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Index ranges of the 68-point convention, half-open.
struct Group {
  const char* name;
  std::size_t begin;
  std::size_t end;
};
inline constexpr std::array<Group, 9> kGroups{{
    {"jaw", 0, 17},
    {"brow_left", 17, 22},
    {"brow_right", 22, 27},
    {"nose_bridge", 27, 31},
    {"nose_base", 31, 36},
    {"eye_left", 36, 42},
    {"eye_right", 42, 48},
    {"mouth_outer", 48, 60},
    {"mouth_inner", 60, 68},
}};

/// 68 keypoints in crop-normalized coordinates.
///
/// "Left" and "right" refer to image sides: the image-left eye is points
/// 36-41. Construction rejects anything other than 68 finite points in
/// [0,1]; geometric plausibility is checked separately by validate().
class LandmarkSet {
 public:
  explicit LandmarkSet(std::span<const Point> points, std::string schema = kSchemaId);

  const std::array<Point, kNumPoints>& points() const { return points_; }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  const std::string& schema() const { return schema_; }

  Point centroid(std::size_t begin, std::size_t end) const;
  Point left_eye_center() const { return centroid(36, 42); }
  Point right_eye_center() const { return centroid(42, 48); }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;

 private:
  std::array<Point, kNumPoints> points_{};
  std::string schema_;
};

// ---------------------------------------------------------------------------
// Heatmap rendering

enum class SigmaUnit { Pixels, Normalized };

struct HeatmapOptions {
  int size = 64;
  double sigma = 2.0;
  SigmaUnit unit = SigmaUnit::Pixels;

  double sigma_px() const { return unit == SigmaUnit::Pixels ? sigma : sigma * size; }
};

struct HeatmapTensor {
  int size = 0;
  double sigma_px = 0.0;
  std::vector<double> data;  // row-major, data[row * size + col]

  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * size + col]; }
};

/// Max-composite of unnormalized Gaussian bumps, one per landmark.
///
/// Each bump is centred on the landmark's nearest pixel, round(p * size),
/// so an on-grid landmark contributes exactly 1.0 at that pixel.
HeatmapTensor render_heatmap(const LandmarkSet& lm, int size, double sigma_px);
HeatmapTensor render_heatmap(const LandmarkSet& lm, const HeatmapOptions& opts);

// Nearest pixel (col, row) of a normalized point on a size x size grid.
std::array<int, 2> nearest_pixel(const Point& p, int size);

// ---------------------------------------------------------------------------
// Manipulation and validation

using EditMap = std::map<int, Point>;

LandmarkSet manipulate(const LandmarkSet& lm, const EditMap& edits);

// Edits that drop the inner upper lip (61-63) onto the inner lower lip (67-65).
EditMap close_mouth_edits(const LandmarkSet& lm);

// Mean vertical gap between paired inner-lip points (61,67), (62,66), (63,65).
double mouth_gap(const LandmarkSet& lm);

struct ValidityReport {
  bool valid = true;
  bool eye_order_anomaly = false;
  std::vector<int> range_violations;  // point indices
  std::vector<std::string> warnings;
};

ValidityReport validate(std::span<const Point> points);
ValidityReport validate(const LandmarkSet& lm);

// ---------------------------------------------------------------------------
// Templates

/// Shape parameters of the procedural frontal template. All values are in
/// normalized crop units.
struct FaceShape {
  double center_x = 0.5;
  double eye_y = 0.40;
  double eye_spacing = 0.36;
  double eye_width = 0.12;
  double eye_height = 0.045;
  double brow_y = 0.31;
  double brow_arch = 0.02;
  double nose_length = 0.15;
  double mouth_y = 0.74;
  double mouth_width = 0.26;
  double mouth_open = 0.04;
  double upper_lip = 0.06;
  double lower_lip = 0.07;
  double jaw_half_width = 0.36;
  double jaw_top = 0.40;
  double jaw_depth = 0.52;
  double smile = 0.0;  // raises mouth corners
};

LandmarkSet frontal_template(const FaceShape& shape = {});
LandmarkSet mirrored(const LandmarkSet& lm);  // x -> 1 - x, indices unchanged

struct NamedTemplate {
  std::string name;
  LandmarkSet landmarks;
};
std::vector<NamedTemplate> builtin_templates();

// ---------------------------------------------------------------------------
// Serialization: {"schema": "ibug68", "points": [[x, y], ...]}

nlohmann::json to_json(const LandmarkSet& lm);
LandmarkSet landmarks_from_json(const nlohmann::json& j);
std::vector<Point> points_from_json(const nlohmann::json& j);
LandmarkSet load_landmarks(const std::string& path);
void save_landmarks(const LandmarkSet& lm, const std::string& path);

// ---------------------------------------------------------------------------
// Face image value type

inline constexpr int kImageSize = 64;

/// 3 x 64 x 64 RGB image, channel-major, values in [-1, 1].
class FaceImage {
 public:
  explicit FaceImage(std::vector<float> chw);
  static FaceImage zeros();

  const std::vector<float>& data() const { return data_; }
  float at(int c, int row, int col) const {
    return data_[(static_cast<std::size_t>(c) * kImageSize + row) * kImageSize + col];
  }

 private:
  std::vector<float> data_;
};

}  // namespace gpgan::landmarks

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "json.hpp"

#include "gpgan/landmarks.hpp"

namespace gpgan::data {

enum class Gender { Male, Female };

Gender gender_from_string(const std::string& s);  // "M" / "F", else ValidationError
const char* to_string(Gender g);
inline float label_of(Gender g) { return g == Gender::Male ? 1.0f : 0.0f; }

struct Record {
  std::string id;
  std::string image;          // resolved against the manifest directory
  nlohmann::json landmarks;   // path string or inline {"schema", "points"}
  Gender gender = Gender::Male;
  std::string split;          // "train" / "test" / ...
};

struct DatasetManifest {
  std::vector<Record> records;
  nlohmann::json provenance = nlohmann::json::object();
  std::string base_dir;

  std::vector<const Record*> split(const std::string& name) const;
};

/// Reads a JSON-lines manifest. A line holding only {"provenance": {...}}
/// is metadata. Throws ValidationError on malformed lines, bad gender
/// labels, or a record id present in two splits.
DatasetManifest load_manifest(const std::string& path);

// Writes records back out; relative image/landmark paths are kept relative.
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// ---------------------------------------------------------------------------
// Cropping

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
};

struct CropResult {
  landmarks::FaceImage image;
  landmarks::LandmarkSet landmarks;
  std::vector<int> clamped;  // landmark indices pushed back into [0,1]
};

/// Bilinear crop of `rgb` (8-bit, 3 channels) to 64x64, values remapped by
/// v / 127.5 - 1. Landmarks go from absolute pixels to (p - origin) / extent.
/// The box is clamped to the image first; zero area raises ArgumentError.
CropResult crop_and_normalize(const cv::Mat& rgb, const std::vector<landmarks::Point>& pixel_points, BBox box);

// Inverse of the landmark part of crop_and_normalize.
landmarks::Point to_pixels(const landmarks::Point& normalized, const BBox& box);

// Square box around the landmarks, grown by `margin` of its side on each edge.
BBox landmark_box(const std::vector<landmarks::Point>& pixel_points, double margin);

// ---------------------------------------------------------------------------
// Pairs

struct Pair {
  std::string id;
  landmarks::LandmarkSet landmarks;
  landmarks::FaceImage image;
  Gender gender;

  landmarks::HeatmapTensor heatmap(const landmarks::HeatmapOptions& opts) const {
    return landmarks::render_heatmap(landmarks, opts);
  }
};

struct PairSet {
  std::vector<Pair> pairs;
  std::vector<std::string> warnings;
  std::size_t skipped = 0;
};

/// Loads every record of `split` in an order fixed by `seed` (seed 0 keeps
/// manifest order). Unreadable images and malformed landmarks are skipped
/// with a warning; more than 10% skipped raises ValidationError.
PairSet make_pairs(const DatasetManifest& manifest, const std::string& split, std::uint64_t seed = 0);

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

// Loads an image file as 64x64 RGB in [-1, 1], resizing bilinearly if needed.
landmarks::FaceImage load_face_image(const std::string& path);
void save_face_image(const landmarks::FaceImage& img, const std::string& path);
std::string encode_png(const landmarks::FaceImage& img);

struct Batch {
  torch::Tensor heatmaps;  // N x 1 x S x S
  torch::Tensor images;    // N x 3 x 64 x 64
  torch::Tensor labels;    // N, 1 = male
};

torch::Tensor heatmap_tensor(const landmarks::LandmarkSet& lm, const landmarks::HeatmapOptions& opts);
torch::Tensor image_tensor(const landmarks::FaceImage& img);
landmarks::FaceImage to_face_image(const torch::Tensor& chw);  // clamps into [-1, 1]

Batch make_batch(const std::vector<Pair>& pairs, const std::vector<std::size_t>& indices,
                 const landmarks::HeatmapOptions& opts, torch::Dtype dtype = torch::kFloat32);

// ---------------------------------------------------------------------------
// Fixtures and raw-directory conversion

struct FixtureOptions {
  int n_train = 32;
  int n_test = 16;
  std::uint64_t seed = 1;
};

/// Writes procedurally drawn faces with matching landmarks under `dir`
/// (images/, landmarks/, manifest.jsonl) and returns the manifest path.
/// Gender shifts face geometry, size, and appearance (hair, beard shade,
/// lip colour), with per-face noise on all of them.
std::string make_fixtures(const std::string& dir, const FixtureOptions& opts);

struct FixtureFace {
  landmarks::LandmarkSet landmarks;
  cv::Mat rgb;  // 64x64 CV_8UC3
};
FixtureFace draw_fixture_face(Gender g, std::uint64_t seed);

struct ConvertOptions {
  double margin = 0.25;
  double test_fraction = 0.3;
  std::uint64_t seed = 1;
};

struct ConvertSummary {
  std::string manifest;
  std::size_t converted = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Converts an identity-per-directory tree (raw/<person>/<name>.{jpg,png})
/// with sidecar <name>.json files {"points": [[x, y] x 68] in pixels,
/// "gender": "M"|"F", optional "bbox": [x, y, w, h]} into 64x64 crops plus
/// a manifest. All images of one person land in the same split.
ConvertSummary convert_raw_directory(const std::string& raw_dir, const std::string& out_dir,
                                     const ConvertOptions& opts);

}  // namespace gpgan::data

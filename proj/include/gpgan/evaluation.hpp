#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpgan/data.hpp"
#include "gpgan/landmarks.hpp"
#include "gpgan/nn/network.hpp"

namespace gpgan::eval {

// ---------------------------------------------------------------------------
// LBP

inline constexpr int kUniformPatterns = 58;
inline constexpr int kLbpBins = 59;  // uniform patterns plus one catch-all

/// 8-bit code of a row-major 3x3 patch. Bit i is set iff neighbor i is >= the
/// center, neighbors taken clockwise from the top-left corner.
int lbp_code(std::span<const double, 9> patch);

// Number of 0/1 changes walking once around the circular byte.
int circular_transitions(int code);

// code -> bin: uniform codes get 0..57 in increasing code order, the rest 58.
const std::array<int, 256>& uniform_bins();

struct GrayImage {
  int rows = 0, cols = 0;
  std::vector<double> px;  // row-major

  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * cols + c]; }
};

// ITU-R 601 luma of the 8-bit quantized image, rounded to integer levels.
GrayImage to_gray(const landmarks::FaceImage& img);

struct LbpDescriptor {
  int rows = 0, cols = 0;         // cell grid
  std::vector<double> histogram;  // rows * cols * 59 counts

  std::size_t size() const { return histogram.size(); }
};

/// Per-cell uniform-LBP histograms with replicated borders. Cell (i, j)
/// covers rows [i*H/rows, (i+1)*H/rows) and likewise for columns.
LbpDescriptor lbp_descriptor(const GrayImage& img, int grid_rows = 8, int grid_cols = 8);

// Histograms scaled so each cell sums to 1.
std::vector<double> lbp_feature(const LbpDescriptor& d);

// ---------------------------------------------------------------------------
// Landmark-only features

enum class FeatureMode { Distance, Angle };
const char* to_string(FeatureMode m);

/// One entry per point pair (i < j, row-major over i): Euclidean distance
/// over the inter-ocular distance, or atan2 of the connecting vector in
/// (-pi, pi]. Coincident eye centers raise DegenerateInputError in distance
/// mode.
std::vector<double> landmark_features(std::span<const landmarks::Point> points, FeatureMode mode);
std::vector<double> landmark_features(const landmarks::LandmarkSet& lm, FeatureMode mode);

// Position of pair (i, j), i < j, in the feature vector.
std::size_t pair_index(std::size_t i, std::size_t j);

// ---------------------------------------------------------------------------
// Linear max-margin classifier

struct SvmOptions {
  double lambda = 1e-3;
  int epochs = 30;
  std::uint64_t seed = 1;
  bool standardize = true;
};

/// Features are standardized with training mean/scale, then a weight vector
/// and bias are fit by Pegasos on hinge loss + lambda/2 |w|^2.
struct LinearClassifier {
  std::vector<double> mean, scale;  // empty when not standardized
  std::vector<double> w;
  double bias = 0;
  double lambda = 0;

  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return decision(x) >= 0 ? 1 : 0; }
  std::size_t dim() const { return w.size(); }
};

/// labels are 0/1. Fewer than two classes raise ValidationError; ragged or
/// empty input raises ArgumentError.
LinearClassifier train_classifier(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                                  const SvmOptions& opts = {});

double evaluate(const LinearClassifier& clf, const std::vector<std::vector<double>>& features,
                const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Recognition report

struct Protocol {
  int folds = 10;
  double fraction = 0.8;  // share of the test pool drawn per fold
  std::uint64_t seed = 1;
  int grid = 8;
  SvmOptions svm;
};

struct MethodRow {
  std::string method;
  double mean = 0, std = 0;  // accuracy in percent; sample std over folds
  std::vector<double> folds;
};

struct RecognitionReport {
  std::string dataset;
  std::size_t n_train = 0, n_test = 0;
  int n_folds = 0;
  std::vector<MethodRow> rows;

  const MethodRow& row(const std::string& method) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Trains one classifier per column on the train split (LBP of real faces
/// for GP-GAN and Real, landmark features for LM(D) / LM(A)), then scores
/// each on `folds` random subsets of the test split. The GP-GAN column is
/// measured on faces synthesized by `g` from the test landmarks.
RecognitionReport recognition_report(const nn::Network& g, const landmarks::HeatmapOptions& heatmap,
                                     const data::DatasetManifest& manifest, const Protocol& protocol);

// Loads the generator and its heatmap settings from a training checkpoint.
RecognitionReport recognition_report(const std::string& checkpoint, const std::string& manifest_path,
                                     const Protocol& protocol);

}  // namespace gpgan::eval

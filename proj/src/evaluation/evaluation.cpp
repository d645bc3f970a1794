#include "gpgan/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gpgan/errors.hpp"
#include "gpgan/training.hpp"

namespace gpgan::eval {

namespace {

// Neighbor offsets (drow, dcol), clockwise from the top-left corner.
constexpr std::array<std::array<int, 2>, 8> kRing{{{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}}};

}  // namespace

int lbp_code(std::span<const double, 9> patch) {
  const double center = patch[4];
  int code = 0;
  for (int i = 0; i < 8; ++i) {
    const int r = 1 + kRing[i][0], c = 1 + kRing[i][1];
    if (patch[r * 3 + c] >= center) code |= 1 << i;
  }
  return code;
}

int circular_transitions(int code) {
  const int rotated = ((code >> 1) | (code << 7)) & 0xff;
  return std::popcount(static_cast<unsigned>(code ^ rotated));
}

const std::array<int, 256>& uniform_bins() {
  static const std::array<int, 256> bins = [] {
    std::array<int, 256> b{};
    int next = 0;
    for (int code = 0; code < 256; ++code) b[code] = circular_transitions(code) <= 2 ? next++ : kUniformPatterns;
    return b;
  }();
  return bins;
}

GrayImage to_gray(const landmarks::FaceImage& img) {
  constexpr int n = landmarks::kImageSize;
  GrayImage g{n, n, std::vector<double>(static_cast<std::size_t>(n) * n)};
  auto q = [](float v) { return std::clamp(std::round((static_cast<double>(v) + 1.0) * 127.5), 0.0, 255.0); };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double y = 0.299 * q(img.at(0, r, c)) + 0.587 * q(img.at(1, r, c)) + 0.114 * q(img.at(2, r, c));
      g.px[static_cast<std::size_t>(r) * n + c] = std::round(y);
    }
  }
  return g;
}

LbpDescriptor lbp_descriptor(const GrayImage& img, int grid_rows, int grid_cols) {
  if (grid_rows <= 0 || grid_cols <= 0 || grid_rows > img.rows || grid_cols > img.cols) {
    throw ArgumentError("lbp grid " + std::to_string(grid_rows) + "x" + std::to_string(grid_cols) +
                        " does not fit a " + std::to_string(img.rows) + "x" + std::to_string(img.cols) + " image");
  }
  const int H = img.rows, W = img.cols;
  // Replicated border, one pixel wide.
  std::vector<double> pad(static_cast<std::size_t>(H + 2) * (W + 2));
  for (int r = 0; r < H + 2; ++r) {
    for (int c = 0; c < W + 2; ++c) {
      pad[static_cast<std::size_t>(r) * (W + 2) + c] = img.at(std::clamp(r - 1, 0, H - 1), std::clamp(c - 1, 0, W - 1));
    }
  }
  std::vector<int> row_cell(H), col_cell(W);
  for (int i = 0; i < grid_rows; ++i) {
    for (int r = i * H / grid_rows; r < (i + 1) * H / grid_rows; ++r) row_cell[r] = i;
  }
  for (int j = 0; j < grid_cols; ++j) {
    for (int c = j * W / grid_cols; c < (j + 1) * W / grid_cols; ++c) col_cell[c] = j;
  }

  const auto& bins = uniform_bins();
  LbpDescriptor d{grid_rows, grid_cols, std::vector<double>(static_cast<std::size_t>(grid_rows) * grid_cols * kLbpBins)};
  for (int r = 0; r < H; ++r) {
    const double* above = &pad[static_cast<std::size_t>(r) * (W + 2)];
    const double* mid = above + (W + 2);
    const double* below = mid + (W + 2);
    for (int c = 0; c < W; ++c) {
      const double x = mid[c + 1];
      const int code = (above[c] >= x) | (above[c + 1] >= x) << 1 | (above[c + 2] >= x) << 2 |
                       (mid[c + 2] >= x) << 3 | (below[c + 2] >= x) << 4 | (below[c + 1] >= x) << 5 |
                       (below[c] >= x) << 6 | (mid[c] >= x) << 7;
      const std::size_t cell = static_cast<std::size_t>(row_cell[r]) * grid_cols + col_cell[c];
      d.histogram[cell * kLbpBins + bins[code]] += 1.0;
    }
  }
  return d;
}

std::vector<double> lbp_feature(const LbpDescriptor& d) {
  std::vector<double> f = d.histogram;
  for (std::size_t cell = 0; cell * kLbpBins < f.size(); ++cell) {
    double sum = 0;
    for (int b = 0; b < kLbpBins; ++b) sum += f[cell * kLbpBins + b];
    if (sum > 0) {
      for (int b = 0; b < kLbpBins; ++b) f[cell * kLbpBins + b] /= sum;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------

const char* to_string(FeatureMode m) { return m == FeatureMode::Distance ? "distance" : "angle"; }

std::size_t pair_index(std::size_t i, std::size_t j) {
  constexpr std::size_t n = landmarks::kNumPoints;
  if (i >= j || j >= n) throw ArgumentError("pair_index needs i < j < 68");
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

std::vector<double> landmark_features(std::span<const landmarks::Point> pts, FeatureMode mode) {
  constexpr std::size_t n = landmarks::kNumPoints;
  if (pts.size() != n) throw ArgumentError("landmark_features needs 68 points, got " + std::to_string(pts.size()));
  std::vector<double> f;
  f.reserve(landmarks::kNumPairs);
  if (mode == FeatureMode::Distance) {
    auto centroid = [&](std::size_t b, std::size_t e) {
      landmarks::Point p;
      for (std::size_t i = b; i < e; ++i) {
        p.x += pts[i].x;
        p.y += pts[i].y;
      }
      return landmarks::Point{p.x / static_cast<double>(e - b), p.y / static_cast<double>(e - b)};
    };
    const auto l = centroid(36, 42), r = centroid(42, 48);
    const double iod = std::hypot(r.x - l.x, r.y - l.y);
    if (!(iod > 0)) throw DegenerateInputError("eye centers coincide; inter-ocular distance is zero");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) f.push_back(std::hypot(pts[j].x - pts[i].x, pts[j].y - pts[i].y) / iod);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double a = std::atan2(pts[j].y - pts[i].y, pts[j].x - pts[i].x);
        if (a <= -std::numbers::pi) a = std::numbers::pi;
        f.push_back(a);
      }
    }
  }
  return f;
}

std::vector<double> landmark_features(const landmarks::LandmarkSet& lm, FeatureMode mode) {
  return landmark_features(std::span<const landmarks::Point>(lm.points()), mode);
}

// ---------------------------------------------------------------------------

double LinearClassifier::decision(std::span<const double> x) const {
  if (x.size() != w.size()) {
    throw ArgumentError("feature has " + std::to_string(x.size()) + " entries, classifier expects " +
                        std::to_string(w.size()));
  }
  double s = bias;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double v = mean.empty() ? x[k] : (x[k] - mean[k]) / scale[k];
    s += w[k] * v;
  }
  return s;
}

LinearClassifier train_classifier(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                                  const SvmOptions& opts) {
  if (X.empty() || X.size() != y.size()) throw ArgumentError("train_classifier: empty or mismatched data");
  if (!(opts.lambda > 0) || opts.epochs <= 0) throw ArgumentError("train_classifier: lambda and epochs must be > 0");
  const std::size_t n = X.size(), dim = X.front().size();
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (X[i].size() != dim) throw ArgumentError("train_classifier: ragged feature rows");
    if (y[i] != 0 && y[i] != 1) throw ArgumentError("train_classifier: labels must be 0 or 1");
    (y[i] ? pos : neg) = true;
  }
  if (!pos || !neg) throw ValidationError("train_classifier: training labels hold a single class");

  LinearClassifier clf;
  clf.lambda = opts.lambda;
  std::vector<std::vector<double>> Z = X;
  if (opts.standardize) {
    clf.mean.assign(dim, 0.0);
    clf.scale.assign(dim, 0.0);
    for (const auto& x : X) {
      for (std::size_t k = 0; k < dim; ++k) clf.mean[k] += x[k];
    }
    for (auto& m : clf.mean) m /= static_cast<double>(n);
    for (const auto& x : X) {
      for (std::size_t k = 0; k < dim; ++k) clf.scale[k] += (x[k] - clf.mean[k]) * (x[k] - clf.mean[k]);
    }
    for (auto& s : clf.scale) {
      s = std::sqrt(s / static_cast<double>(n));
      if (s < 1e-12) s = 1.0;
    }
    for (auto& z : Z) {
      for (std::size_t k = 0; k < dim; ++k) z[k] = (z[k] - clf.mean[k]) / clf.scale[k];
    }
  }

  // Pegasos on [z, 1]; the last weight is the bias. Iterates from the second
  // half of training are averaged.
  std::vector<double> w(dim + 1, 0.0), avg(dim + 1, 0.0);
  const double radius = 1.0 / std::sqrt(opts.lambda);
  const std::int64_t total = static_cast<std::int64_t>(opts.epochs) * static_cast<std::int64_t>(n);
  std::int64_t t = 0, averaged = 0;
  for (int e = 0; e < opts.epochs; ++e) {
    const auto order = data::permutation(n, opts.seed * 7919 + static_cast<std::uint64_t>(e));
    for (const auto i : order) {
      ++t;
      const double eta = 1.0 / (opts.lambda * static_cast<double>(t));
      const double yi = y[i] ? 1.0 : -1.0;
      double margin = w[dim];
      for (std::size_t k = 0; k < dim; ++k) margin += w[k] * Z[i][k];
      margin *= yi;
      const double shrink = 1.0 - eta * opts.lambda;
      for (auto& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) w[k] += eta * yi * Z[i][k];
        w[dim] += eta * yi;
      }
      double norm = 0;
      for (const auto v : w) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > radius) {
        for (auto& v : w) v *= radius / norm;
      }
      if (2 * t > total) {
        ++averaged;
        for (std::size_t k = 0; k <= dim; ++k) avg[k] += (w[k] - avg[k]) / static_cast<double>(averaged);
      }
    }
  }
  clf.bias = avg[dim];
  avg.pop_back();
  clf.w = std::move(avg);
  return clf;
}

double evaluate(const LinearClassifier& clf, const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
  if (X.empty() || X.size() != y.size()) throw ArgumentError("evaluate: empty or mismatched data");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < X.size(); ++i) correct += clf.predict(X[i]) == (y[i] ? 1 : 0);
  return static_cast<double>(correct) / static_cast<double>(X.size());
}

// ---------------------------------------------------------------------------

const MethodRow& RecognitionReport::row(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  throw ArgumentError("no report row " + method);
}

nlohmann::json RecognitionReport::to_json() const {
  nlohmann::json j{{"format", "gpgan-recognition/1"},
                   {"dataset", dataset},
                   {"n_train", n_train},
                   {"n_test", n_test},
                   {"n_folds", n_folds},
                   {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    j["rows"].push_back({{"method", r.method}, {"mean", r.mean}, {"std", r.std}, {"folds", r.folds}});
  }
  return j;
}

std::string RecognitionReport::to_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "method,dataset,mean,std,n_folds\n";
  for (const auto& r : rows) out << r.method << "," << dataset << "," << r.mean << "," << r.std << "," << n_folds << "\n";
  return out.str();
}

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> face_feature(const landmarks::FaceImage& img, int grid) {
  return lbp_feature(lbp_descriptor(to_gray(img), grid, grid));
}

MethodRow score_folds(const std::string& method, const LinearClassifier& clf, const Matrix& X,
                      const std::vector<int>& y, const Protocol& p) {
  std::vector<int> hit(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) hit[i] = clf.predict(X[i]) == y[i];
  const std::size_t take = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.fraction * X.size())));
  MethodRow row{method, 0, 0, {}};
  for (int f = 0; f < p.folds; ++f) {
    const auto order = data::permutation(X.size(), p.seed * 1000033 + static_cast<std::uint64_t>(f));
    std::size_t correct = 0;
    for (std::size_t k = 0; k < take; ++k) correct += hit[order[k]];
    row.folds.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(take));
  }
  row.mean = std::accumulate(row.folds.begin(), row.folds.end(), 0.0) / static_cast<double>(row.folds.size());
  double ss = 0;
  for (const auto v : row.folds) ss += (v - row.mean) * (v - row.mean);
  row.std = row.folds.size() > 1 ? std::sqrt(ss / static_cast<double>(row.folds.size() - 1)) : 0.0;
  return row;
}

}  // namespace

RecognitionReport recognition_report(const nn::Network& g, const landmarks::HeatmapOptions& heatmap,
                                     const data::DatasetManifest& manifest, const Protocol& p) {
  if (p.folds <= 0 || !(p.fraction > 0 && p.fraction <= 1)) throw ArgumentError("protocol needs folds > 0 and 0 < fraction <= 1");
  if (manifest.records.empty()) throw ValidationError("recognition_report: manifest is empty");
  const auto train = data::make_pairs(manifest, "train");
  const auto test = data::make_pairs(manifest, "test");
  if (train.pairs.empty()) throw ValidationError("recognition_report: manifest has no train records");
  if (test.pairs.empty()) throw ValidationError("recognition_report: manifest has no test records");

  std::vector<int> y_train, y_test;
  Matrix lbp_train, dist_train, ang_train;
  for (const auto& pr : train.pairs) {
    y_train.push_back(pr.gender == data::Gender::Male);
    lbp_train.push_back(face_feature(pr.image, p.grid));
    dist_train.push_back(landmark_features(pr.landmarks, FeatureMode::Distance));
    ang_train.push_back(landmark_features(pr.landmarks, FeatureMode::Angle));
  }

  Matrix lbp_real, lbp_fake, dist_test, ang_test;
  std::vector<landmarks::LandmarkSet> lms;
  for (const auto& pr : test.pairs) {
    y_test.push_back(pr.gender == data::Gender::Male);
    lbp_real.push_back(face_feature(pr.image, p.grid));
    dist_test.push_back(landmark_features(pr.landmarks, FeatureMode::Distance));
    ang_test.push_back(landmark_features(pr.landmarks, FeatureMode::Angle));
    lms.push_back(pr.landmarks);
  }
  constexpr std::size_t kChunk = 32;
  for (std::size_t at = 0; at < lms.size(); at += kChunk) {
    const std::vector<landmarks::LandmarkSet> part(lms.begin() + static_cast<std::ptrdiff_t>(at),
                                                   lms.begin() + static_cast<std::ptrdiff_t>(std::min(lms.size(), at + kChunk)));
    const auto out = training::synthesize(g, part, heatmap).to(torch::kFloat32);
    for (std::int64_t i = 0; i < out.size(0); ++i) lbp_fake.push_back(face_feature(data::to_face_image(out[i]), p.grid));
  }

  const auto lbp_clf = train_classifier(lbp_train, y_train, p.svm);
  const auto dist_clf = train_classifier(dist_train, y_train, p.svm);
  const auto ang_clf = train_classifier(ang_train, y_train, p.svm);

  RecognitionReport rep;
  rep.dataset = manifest.provenance.value("source", std::string("dataset"));
  rep.n_train = train.pairs.size();
  rep.n_test = test.pairs.size();
  rep.n_folds = p.folds;
  rep.rows.push_back(score_folds("GP-GAN", lbp_clf, lbp_fake, y_test, p));
  rep.rows.push_back(score_folds("LM(D)", dist_clf, dist_test, y_test, p));
  rep.rows.push_back(score_folds("LM(A)", ang_clf, ang_test, y_test, p));
  rep.rows.push_back(score_folds("Real", lbp_clf, lbp_real, y_test, p));
  return rep;
}

RecognitionReport recognition_report(const std::string& checkpoint, const std::string& manifest_path,
                                     const Protocol& protocol) {
  const auto manifest = data::load_manifest(manifest_path);
  if (manifest.records.empty()) throw ValidationError("recognition_report: manifest " + manifest_path + " is empty");
  const auto models = training::load_inference(checkpoint);
  return recognition_report(models.g, models.cfg.heatmap(), manifest, protocol);
}

}  // namespace gpgan::eval

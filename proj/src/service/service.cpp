#include "gpgan/service.hpp"

#include <chrono>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

#include "httplib.h"

#include "gpgan/errors.hpp"
#include "gpgan/io_util.hpp"

namespace gpgan::service {

namespace {

Reply bad_request(const std::string& field, const std::string& message) {
  return {400, {{"error", message}, {"field", field}}};
}

Reply not_loaded() { return {503, {{"status", "not_loaded"}, {"error", "no checkpoint loaded"}}}; }

}  // namespace

std::string encode_heatmap_png(const landmarks::HeatmapTensor& h) {
  cv::Mat m(h.size, h.size, CV_8UC1);
  for (int r = 0; r < h.size; ++r) {
    for (int c = 0; c < h.size; ++c) m.at<std::uint8_t>(r, c) = cv::saturate_cast<std::uint8_t>(std::round(255.0 * h.at(r, c)));
  }
  std::vector<std::uint8_t> buf;
  cv::imencode(".png", m, buf);
  return {buf.begin(), buf.end()};
}

Service::Service(ServiceOptions opts) : opts_(std::move(opts)) {}

void Service::load(const std::string& checkpoint) {
  auto fresh = std::make_shared<const training::InferenceModels>(training::load_inference(checkpoint));
  std::lock_guard lock(mu_);
  models_ = std::move(fresh);
}

bool Service::loaded() const { return snapshot() != nullptr; }

std::shared_ptr<const training::InferenceModels> Service::snapshot() const {
  std::lock_guard lock(mu_);
  return models_;
}

Reply Service::synthesize(const std::string& body) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto models = snapshot();
  if (!models) return not_loaded();

  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return bad_request("body", std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return bad_request("body", "request must be a JSON object");
  if (!req.contains("landmarks")) return bad_request("landmarks", "missing field");

  std::optional<landmarks::LandmarkSet> lm;
  try {
    const auto pts = landmarks::points_from_json(req["landmarks"]);
    if (pts.size() != landmarks::kNumPoints) {
      return bad_request("landmarks", "expected 68 points, got " + std::to_string(pts.size()));
    }
    const auto report = landmarks::validate(pts);
    if (!report.valid) {
      std::string msg;
      for (const auto& w : report.warnings) msg += (msg.empty() ? "" : "; ") + w;
      return bad_request("landmarks", msg);
    }
    lm.emplace(pts);
  } catch (const std::exception& e) {
    return bad_request("landmarks", e.what());
  }

  auto hm = models->cfg.heatmap();
  if (req.contains("sigma_px") && !req["sigma_px"].is_null()) {
    if (!req["sigma_px"].is_number()) return bad_request("sigma_px", "must be a number");
    const double s = req["sigma_px"].get<double>();
    if (!(s > 0) || !std::isfinite(s)) return bad_request("sigma_px", "must be positive and finite");
    hm.sigma = s;
    hm.unit = landmarks::SigmaUnit::Pixels;
  }
  bool want_heatmap = false;
  if (req.contains("return_heatmap")) {
    if (!req["return_heatmap"].is_boolean()) return bad_request("return_heatmap", "must be a boolean");
    want_heatmap = req["return_heatmap"].get<bool>();
  }

  const auto out = training::synthesize(models->g, {*lm}, hm);
  double score;
  {
    torch::NoGradGuard no_grad;
    score = training::classify(models->c, out).item<double>();
  }
  score = std::clamp(score, losses::kEps, 1.0 - losses::kEps);
  nlohmann::json res{{"image", io::base64_encode(data::encode_png(data::to_face_image(out[0].to(torch::kFloat32))))},
                     {"gender_score", score},
                     {"sigma_px", hm.sigma_px()}};
  if (want_heatmap) res["heatmap"] = io::base64_encode(encode_heatmap_png(landmarks::render_heatmap(*lm, hm)));
  res["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return {200, res};
}

Reply Service::templates() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : landmarks::builtin_templates()) list.push_back({{"name", t.name}, {"landmarks", landmarks::to_json(t.landmarks)}});
  return {200, {{"templates", list}}};
}

Reply Service::health() const {
  const auto models = snapshot();
  if (!models) return not_loaded();
  return {200, {{"status", "ok"}, {"checkpoint", models->checkpoint}, {"checkpoint_hash", models->digest}}};
}

void Service::mount(httplib::Server& server) const {
  const std::string origin = opts_.cors_origin;
  auto send = [origin](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_content(r.body.dump(), "application/json");
  };
  server.Post("/api/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
    Reply r;
    try {
      r = synthesize(req.body);
    } catch (const std::exception& e) {
      r = {500, {{"error", e.what()}}};
    }
    send(res, r);
  });
  server.Get("/api/templates", [this, send](const httplib::Request&, httplib::Response& res) { send(res, templates()); });
  server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  server.Options(R"(/api/.*)", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  if (!opts_.static_dir.empty() && !server.set_mount_point("/", opts_.static_dir)) {
    throw ArgumentError("static directory " + opts_.static_dir + " does not exist");
  }
}

}  // namespace gpgan::service

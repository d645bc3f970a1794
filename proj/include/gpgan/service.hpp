#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "json.hpp"

#include "gpgan/training.hpp"

namespace httplib {
class Server;
}

namespace gpgan::service {

struct Reply {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string cors_origin = "*";
  std::string static_dir;  // editor bundle; empty = no static route
};

/// JSON handlers over an immutable model snapshot. load() swaps the
/// snapshot between requests; in-flight requests keep the one they started
/// with.
class Service {
 public:
  explicit Service(ServiceOptions opts = {});

  void load(const std::string& checkpoint);
  bool loaded() const;

  // {"landmarks": [[x, y] x 68] | {"points": ...}, "sigma_px"?: real, "return_heatmap"?: bool}
  Reply synthesize(const std::string& body) const;
  Reply templates() const;
  Reply health() const;

  // Registers /api routes, CORS headers, and the static route on `server`.
  void mount(httplib::Server& server) const;

 private:
  std::shared_ptr<const training::InferenceModels> snapshot() const;

  ServiceOptions opts_;
  mutable std::mutex mu_;
  std::shared_ptr<const training::InferenceModels> models_;
};

// Grayscale PNG of a heatmap, values scaled by 255.
std::string encode_heatmap_png(const landmarks::HeatmapTensor& h);

}  // namespace gpgan::service

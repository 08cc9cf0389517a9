#pragma once

#include "deskwarp/config.hpp"
#include "deskwarp/denoiser.hpp"
#include "deskwarp/infer.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dw {

enum class CameraCommand { forward, back, left, right, yaw_plus, yaw_minus, pitch_plus, pitch_minus, orbit };

std::string to_string(CameraCommand c);
/// Accepts "yaw+", "yaw-", "pitch+", "pitch-" and the plain names.
CameraCommand camera_command_from_string(const std::string& s);

struct ServiceOptions {
  /// Largest accepted magnitude: world units for translations, degrees for rotations.
  double max_translation = 1.0;
  double max_rotation_degrees = 45.0;
  /// Orbit pivot distance along the current optical axis.
  double orbit_pivot = 2.0;
  SessionConfig session;
  int scene_complexity = 3;
  TrajectoryOptions trajectory;
  double upload_depth = 2.0;
  /// Denoiser used by every session; a fresh initialization when empty.
  std::optional<DenoiserState> model;
};

/// Per-frame camera-space motion that reaches `magnitude` after `n` frames,
/// evaluated at frame i in [1, n].
CameraPose command_delta(CameraCommand c, double magnitude, int i, int n, double orbit_pivot);

/// Target poses for the next `count` frames: the extrapolated continuation
/// of `history` (or a repeat of its last pose when shorter than two frames)
/// composed with the command's camera-space motion.
Trajectory command_targets(const Trajectory& history, int count, int extrapolation_window, CameraCommand c,
                           double magnitude, double orbit_pivot);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request handling for the /v1 API.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  HttpResponse create_session(const std::string& body);
  HttpResponse step(const std::string& id, const std::string& body);
  HttpResponse get_frame(const std::string& ref) const;
  HttpResponse get_state(const std::string& id) const;

  /// Routes a request by method and path.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  const ServiceOptions& options() const { return options_; }

 private:
  struct Record;

  std::shared_ptr<Record> find(const std::string& id) const;
  std::string store(std::vector<std::uint8_t> bytes, const std::string& content_type);

  ServiceOptions options_;
  DenoiserState model_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Record>> sessions_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::pair<std::string, std::vector<std::uint8_t>>> blobs_;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_blob_ = 1;
};

/// Blocks serving the API on host:port.
void serve(Service& service, const std::string& host, int port);

}  // namespace dw

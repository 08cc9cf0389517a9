#include "deskwarp/service.hpp"

#include "deskwarp/geometry.hpp"
#include "deskwarp/image.hpp"
#include "deskwarp/scene.hpp"

#include <httplib.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dw {

namespace {

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

HttpResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error_response(int status, const std::string& reason) {
  return json_response(status, {{"error", reason}});
}

json pose_json(const CameraPose& p) {
  const Quat& q = p.rotation;
  return {{"quaternion", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

CameraPose pose_from_json(const json& j) {
  const auto& q = j.at("quaternion");
  const auto& t = j.at("translation");
  if (q.size() != 4 || t.size() != 3) throw BadRequest("pose needs a 4-element quaternion and 3-element translation");
  CameraPose p(Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()),
               Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
  if (std::abs(p.rotation.norm() - 1.0) > 1e-6) throw BadRequest("pose quaternion must be unit length");
  p.rotation.normalize();
  return p;
}

json schedule_json(const ScheduleMatrix& m) {
  json rows = json::array();
  for (const auto& r : m.rows)
    rows.push_back({{"token", r.token}, {"role", to_string(r.role)}, {"sigma_init", r.sigma_init}, {"sigma", r.sigma}});
  return {{"steps", m.steps}, {"rows", rows}};
}

Image mask_image(const Mask& m) {
  Image img(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0 : 0.0;
  return img;
}

}  // namespace

std::string to_string(CameraCommand c) {
  switch (c) {
    case CameraCommand::forward: return "forward";
    case CameraCommand::back: return "back";
    case CameraCommand::left: return "left";
    case CameraCommand::right: return "right";
    case CameraCommand::yaw_plus: return "yaw+";
    case CameraCommand::yaw_minus: return "yaw-";
    case CameraCommand::pitch_plus: return "pitch+";
    case CameraCommand::pitch_minus: return "pitch-";
    case CameraCommand::orbit: return "orbit";
  }
  return "forward";
}

CameraCommand camera_command_from_string(const std::string& s) {
  static const std::pair<const char*, CameraCommand> kNames[] = {
      {"forward", CameraCommand::forward},     {"back", CameraCommand::back},
      {"left", CameraCommand::left},           {"right", CameraCommand::right},
      {"yaw+", CameraCommand::yaw_plus},       {"yaw-", CameraCommand::yaw_minus},
      {"pitch+", CameraCommand::pitch_plus},   {"pitch-", CameraCommand::pitch_minus},
      {"orbit", CameraCommand::orbit}};
  for (const auto& [name, c] : kNames)
    if (s == name) return c;
  throw std::domain_error("unknown camera command '" + s + "'");
}

CameraPose command_delta(CameraCommand c, double magnitude, int i, int n, double orbit_pivot) {
  if (n < 1 || i < 0 || i > n) throw std::domain_error("command_delta: frame index out of range");
  const double a = magnitude * static_cast<double>(i) / n;
  const double rad = a * std::numbers::pi / 180.0;
  switch (c) {
    case CameraCommand::forward: return {Quat::Identity(), Vec3(0, 0, a)};
    case CameraCommand::back: return {Quat::Identity(), Vec3(0, 0, -a)};
    case CameraCommand::left: return {Quat::Identity(), Vec3(-a, 0, 0)};
    case CameraCommand::right: return {Quat::Identity(), Vec3(a, 0, 0)};
    case CameraCommand::yaw_plus: return {axis_angle(Vec3::UnitY(), rad), Vec3::Zero()};
    case CameraCommand::yaw_minus: return {axis_angle(Vec3::UnitY(), -rad), Vec3::Zero()};
    case CameraCommand::pitch_plus: return {axis_angle(Vec3::UnitX(), rad), Vec3::Zero()};
    case CameraCommand::pitch_minus: return {axis_angle(Vec3::UnitX(), -rad), Vec3::Zero()};
    case CameraCommand::orbit: {
      const Quat q = axis_angle(Vec3::UnitY(), rad);
      const Vec3 pivot(0, 0, orbit_pivot);
      return {q, pivot - q * pivot};
    }
  }
  return {};
}

Trajectory command_targets(const Trajectory& history, int count, int extrapolation_window, CameraCommand c,
                           double magnitude, double orbit_pivot) {
  if (history.empty()) throw std::domain_error("command_targets: empty history");
  if (count < 1) throw std::domain_error("command_targets: count must be >= 1");
  Trajectory base;
  if (history.size() >= 2) {
    const Trajectory ext = extrapolate_trajectory(history, count, extrapolation_window);
    base = ext.slice(history.size(), ext.size());
  } else {
    for (int i = 0; i < count; ++i)
      base.push_back({static_cast<int>(history.size()) + i, history.back().pose, history.back().intrinsics});
  }
  if (magnitude == 0.0) return base;
  Trajectory out;
  for (int i = 0; i < count; ++i) {
    TrajectoryFrame f = base[i];
    f.pose = f.pose.compose(command_delta(c, magnitude, i + 1, count, orbit_pivot));
    out.push_back(f);
  }
  return out;
}

struct Service::Record {
  std::string id;
  std::unique_ptr<GenerationSession> session;
  std::mutex step_mutex;
  mutable std::mutex state_mutex;
  // Last committed state, readable while a step runs.
  std::size_t history_length = 0;
  CameraPose current_pose;
  int chunk_counter = 0;
  std::vector<std::string> frame_refs;
  std::chrono::system_clock::time_point created;
  std::chrono::system_clock::time_point updated;
};

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  options_.session.validate();
  if (!(options_.max_translation >= 0.0) || !(options_.max_rotation_degrees >= 0.0))
    throw std::domain_error("service: magnitude bounds must be non-negative");
  if (options_.model) {
    model_ = *options_.model;
  } else {
    DenoiserConfig cfg;
    cfg.patch = options_.session.patch;
    cfg.latent_channels = 3 * cfg.patch * cfg.patch;
    cfg.frames = options_.session.chunk;
    model_ = init_denoiser(cfg, options_.session.seed);
  }
  if (model_.config.patch != options_.session.patch)
    throw std::domain_error("service: model patch differs from the session patch");
}

Service::~Service() = default;

std::shared_ptr<Service::Record> Service::find(const std::string& id) const {
  std::lock_guard lock(registry_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::string Service::store(std::vector<std::uint8_t> bytes, const std::string& content_type) {
  std::lock_guard lock(store_mutex_);
  const std::string ref = "b" + std::to_string(next_blob_++);
  blobs_[ref] = {content_type, std::move(bytes)};
  return ref;
}

HttpResponse Service::create_session(const std::string& body) {
  json req;
  try {
    req = body.empty() ? json::object() : json::parse(body);
    if (!req.is_object()) throw BadRequest("request body must be a JSON object");
    SessionConfig cfg = options_.session;
    if (req.contains("session")) from_json(req.at("session"), cfg);
    cfg.validate();
    if (cfg.patch != model_.config.patch) throw BadRequest("session patch must match the model patch");
    if (model_.config.mixing == FrameMixing::temporal_conv && cfg.chunk != model_.config.frames)
      throw BadRequest("session chunk must match the model frame count");

    std::vector<RgbdFrame> initial;
    DepthSource depth;
    if (req.contains("upload")) {
      const json& up = req.at("upload");
      const int w = up.at("width").get<int>();
      const int h = up.at("height").get<int>();
      const auto rgb = up.at("rgb").get<std::vector<double>>();
      if (w < 1 || h < 1 || rgb.size() != static_cast<std::size_t>(w) * h * 3)
        throw BadRequest("upload.rgb must hold width * height * 3 values");
      TrajectoryOptions topts = options_.trajectory;
      topts.width = w;
      topts.height = h;
      const double d = up.value("depth", options_.upload_depth);
      RgbdFrame f;
      f.rgb = Image(w, h, 3);
      for (std::size_t i = 0; i < rgb.size(); ++i) {
        if (!std::isfinite(rgb[i])) throw BadRequest("upload.rgb holds a non-finite value");
        f.rgb.data[i] = std::clamp(rgb[i], 0.0, 1.0);
      }
      f.intrinsics = default_intrinsics(topts);
      f.depth = Image(w, h, 1, d);
      initial.push_back(std::move(f));
      depth = constant_depth(d);
    } else {
      const std::uint64_t seed = req.value("scene_seed", std::uint64_t{0});
      const auto kind = trajectory_kind_from_string(req.value("trajectory", std::string("dolly")));
      const std::uint64_t traj_seed = req.value("trajectory_seed", seed);
      const SyntheticScene scene = generate_scene(seed, req.value("complexity", options_.scene_complexity));
      const Trajectory traj = sample_trajectory(scene, kind, cfg.overlap, traj_seed, options_.trajectory);
      for (const auto& f : traj.frames()) initial.push_back(render_gt(scene, f.pose, f.intrinsics));
      depth = scene_depth(scene);
    }

    auto rec = std::make_shared<Record>();
    rec->session = std::make_unique<GenerationSession>(initial, cfg, denoiser_velocity(model_), depth);
    for (const auto& f : initial) rec->frame_refs.push_back(store(encode_png(f.rgb), "image/png"));
    rec->history_length = initial.size();
    rec->current_pose = initial.back().pose;
    rec->created = rec->updated = std::chrono::system_clock::now();
    {
      std::lock_guard lock(registry_mutex_);
      rec->id = "s" + std::to_string(next_session_++);
      sessions_[rec->id] = rec;
    }
    return json_response(201, {{"session_id", rec->id}, {"frames", rec->frame_refs}});
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const std::domain_error& e) {
    return error_response(400, e.what());
  }
}

HttpResponse Service::step(const std::string& id, const std::string& body) {
  const auto rec = find(id);
  if (!rec) return error_response(404, "unknown session '" + id + "'");
  std::unique_lock step_lock(rec->step_mutex, std::try_to_lock);
  if (!step_lock.owns_lock()) return error_response(409, "a step is already in flight for this session");
  try {
    const json req = body.empty() ? json::object() : json::parse(body);
    if (!req.is_object()) throw BadRequest("request body must be a JSON object");
    GenerationSession& s = *rec->session;
    const Trajectory past = s.trajectory();
    const int n_new = s.next_chunk_new_frames();
    Trajectory targets;
    if (req.contains("poses")) {
      const json& poses = req.at("poses");
      if (!poses.is_array() || poses.empty() || static_cast<int>(poses.size()) > n_new)
        throw BadRequest("poses must list between 1 and " + std::to_string(n_new) + " poses");
      for (const auto& p : poses)
        targets.push_back({static_cast<int>(past.size() + targets.size()), pose_from_json(p), past.back().intrinsics});
    } else {
      const std::string name = req.value("command", std::string("forward"));
      CameraCommand c;
      try {
        c = camera_command_from_string(name);
      } catch (const std::domain_error& e) {
        throw BadRequest(e.what());
      }
      const double mag = req.value("magnitude", 0.0);
      const bool rotation = c != CameraCommand::forward && c != CameraCommand::back && c != CameraCommand::left &&
                            c != CameraCommand::right;
      const double bound = rotation ? options_.max_rotation_degrees : options_.max_translation;
      if (!std::isfinite(mag) || mag < 0.0 || mag > bound)
        throw BadRequest("magnitude must lie in [0, " + std::to_string(bound) + "] for " + name);
      targets = command_targets(past, n_new, s.config().extrapolation_window, c, mag, options_.orbit_pivot);
    }

    const ChunkResult r = s.step_chunk(targets);
    const ChunkDiagnostics& d = r.diagnostics;
    json frames = json::array(), priors = json::array(), masks = json::array(), poses = json::array();
    std::vector<std::string> new_refs;
    for (const auto& f : r.frames) {
      new_refs.push_back(store(encode_png(f.rgb), "image/png"));
      frames.push_back(new_refs.back());
    }
    for (std::size_t t = d.history_tokens; t < d.priors.warped.size(); ++t) {
      priors.push_back(store(encode_png(d.priors.warped[t]), "image/png"));
      masks.push_back(store(encode_png(mask_image(d.priors.masks[t])), "image/png"));
    }
    for (const auto& p : d.poses) poses.push_back(pose_json(p));
    const std::string sched = store(encode_png(schedule_heatmap(d.schedule)), "image/png");
    const std::string csv = schedule_to_csv(d.schedule);
    const std::string sched_csv = store(std::vector<std::uint8_t>(csv.begin(), csv.end()), "text/csv");
    {
      std::lock_guard lock(rec->state_mutex);
      rec->frame_refs.insert(rec->frame_refs.end(), new_refs.begin(), new_refs.end());
      rec->history_length = s.history().size();
      rec->current_pose = s.history().back().pose;
      rec->chunk_counter = s.chunk_counter();
      rec->updated = std::chrono::system_clock::now();
    }
    return json_response(200, {{"chunk_index", d.chunk_index},
                               {"history_tokens", d.history_tokens},
                               {"frames", frames},
                               {"priors", priors},
                               {"masks", masks},
                               {"schedule", sched},
                               {"schedule_csv", sched_csv},
                               {"schedule_matrix", schedule_json(d.schedule)},
                               {"poses", poses}});
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const std::domain_error& e) {
    return error_response(400, e.what());
  }
}

HttpResponse Service::get_frame(const std::string& ref) const {
  std::lock_guard lock(store_mutex_);
  const auto it = blobs_.find(ref);
  if (it == blobs_.end()) return error_response(404, "unknown frame ref '" + ref + "'");
  return {200, it->second.first, std::string(it->second.second.begin(), it->second.second.end())};
}

HttpResponse Service::get_state(const std::string& id) const {
  const auto rec = find(id);
  if (!rec) return error_response(404, "unknown session '" + id + "'");
  std::lock_guard lock(rec->state_mutex);
  const auto ms = [](auto tp) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count();
  };
  return json_response(200, {{"session_id", rec->id},
                             {"history_length", rec->history_length},
                             {"current_pose", pose_json(rec->current_pose)},
                             {"chunk_counter", rec->chunk_counter},
                             {"frames", rec->frame_refs},
                             {"created_ms", ms(rec->created)},
                             {"updated_ms", ms(rec->updated)}});
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const std::string prefix = "/v1/";
  if (path.rfind(prefix, 0) != 0) return error_response(404, "unknown path");
  std::vector<std::string> parts;
  std::size_t start = prefix.size();
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    parts.push_back(path.substr(start, slash == std::string::npos ? std::string::npos : slash - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (parts.size() == 1 && parts[0] == "sessions" && method == "POST") return create_session(body);
  if (parts.size() == 2 && parts[0] == "sessions" && method == "GET") return get_state(parts[1]);
  if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "step" && method == "POST")
    return step(parts[1], body);
  if (parts.size() == 2 && parts[0] == "frames" && method == "GET") return get_frame(parts[1]);
  return error_response(404, "unknown route " + method + " " + path);
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  const auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    HttpResponse r;
    try {
      r = service.handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = error_response(500, e.what());
    }
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(R"(/v1/.*)", bridge);
  server.Post(R"(/v1/.*)", bridge);
  if (!server.listen(host, port)) throw std::runtime_error("serve: cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace dw

#include "deskwarp/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dw {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw std::domain_error(std::string(what) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw std::domain_error(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void to_json(json& j, const DenoiserConfig& c) {
  j = {{"latent_channels", c.latent_channels}, {"base_channels", c.base_channels}, {"depth", c.depth},
       {"mixing", to_string(c.mixing)},        {"sigma_dim", c.sigma_dim},         {"patch", c.patch},
       {"frames", c.frames},
       {"data_mean", c.data_mean},
       {"data_std", c.data_std}};
}

void from_json(const json& j, DenoiserConfig& c) {
  reject_unknown(j,
                 {"latent_channels", "base_channels", "depth", "mixing", "sigma_dim", "patch", "frames", "data_mean",
                  "data_std"},
                 "model");
  read(j, "latent_channels", c.latent_channels);
  read(j, "base_channels", c.base_channels);
  read(j, "depth", c.depth);
  if (j.contains("mixing")) c.mixing = frame_mixing_from_string(j.at("mixing"));
  read(j, "sigma_dim", c.sigma_dim);
  read(j, "patch", c.patch);
  read(j, "frames", c.frames);
  read(j, "data_mean", c.data_mean);
  read(j, "data_std", c.data_std);
  if (j.contains("patch") && !j.contains("latent_channels")) c.latent_channels = 3 * c.patch * c.patch;
}

void to_json(json& j, const TrajectoryOptions& c) {
  j = {{"width", c.width}, {"height", c.height}, {"focal_scale", c.focal_scale}, {"orbit_degrees", c.orbit_degrees},
       {"travel", c.travel}};
}

void from_json(const json& j, TrajectoryOptions& c) {
  reject_unknown(j, {"width", "height", "focal_scale", "orbit_degrees", "travel"}, "trajectory");
  read(j, "width", c.width);
  read(j, "height", c.height);
  read(j, "focal_scale", c.focal_scale);
  read(j, "orbit_degrees", c.orbit_degrees);
  read(j, "travel", c.travel);
}

void to_json(json& j, const InferenceNoiseConfig& c) {
  j = {{"tau", c.tau}, {"steps", c.steps}, {"sigma_max", c.sigma_max}};
}

void from_json(const json& j, InferenceNoiseConfig& c) {
  reject_unknown(j, {"tau", "steps", "sigma_max"}, "noise");
  read(j, "tau", c.tau);
  read(j, "steps", c.steps);
  read(j, "sigma_max", c.sigma_max);
}

void to_json(json& j, const CacheConfig& c) {
  j = {{"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"init_radius_px", c.init_radius_px},
       {"stride", c.stride},
       {"cutoff_sigma", c.cutoff_sigma},
       {"alpha_threshold", c.alpha_threshold}};
}

void from_json(const json& j, CacheConfig& c) {
  reject_unknown(j, {"steps", "learning_rate", "init_radius_px", "stride", "cutoff_sigma", "alpha_threshold"},
                 "cache");
  read(j, "steps", c.steps);
  read(j, "learning_rate", c.learning_rate);
  read(j, "init_radius_px", c.init_radius_px);
  read(j, "stride", c.stride);
  read(j, "cutoff_sigma", c.cutoff_sigma);
  read(j, "alpha_threshold", c.alpha_threshold);
}

void to_json(json& j, const SessionConfig& c) {
  j = {{"chunk", c.chunk},
       {"overlap", c.overlap},
       {"noise", c.noise},
       {"cache", c.cache},
       {"cache_mode", to_string(c.cache_mode)},
       {"variant", to_string(c.variant)},
       {"cache_window", c.cache_window},
       {"point_radius_px", c.point_radius_px},
       {"extrapolation_window", c.extrapolation_window},
       {"patch", c.patch},
       {"seed", c.seed}};
}

void from_json(const json& j, SessionConfig& c) {
  reject_unknown(j, {"chunk", "overlap", "noise", "cache", "cache_mode", "variant", "cache_window", "point_radius_px",
                     "extrapolation_window", "patch", "seed"},
                 "session");
  read(j, "chunk", c.chunk);
  read(j, "overlap", c.overlap);
  if (j.contains("noise")) from_json(j.at("noise"), c.noise);
  if (j.contains("cache")) from_json(j.at("cache"), c.cache);
  if (j.contains("cache_mode")) c.cache_mode = cache_mode_from_string(j.at("cache_mode"));
  if (j.contains("variant")) c.variant = noise_variant_from_string(j.at("variant"));
  read(j, "cache_window", c.cache_window);
  read(j, "point_radius_px", c.point_radius_px);
  read(j, "extrapolation_window", c.extrapolation_window);
  read(j, "patch", c.patch);
  read(j, "seed", c.seed);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch", c.batch},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"scene_pool", c.scene_pool},
       {"clips_per_scene", c.clips_per_scene},
       {"chunk", c.chunk},
       {"scene_complexity", c.scene_complexity},
       {"variant", to_string(c.variant)},
       {"model", c.model},
       {"trajectory", c.trajectory},
       {"warp_radius_px", c.warp_radius_px}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j, {"steps", "batch", "learning_rate", "seed", "scene_pool", "clips_per_scene", "chunk",
                     "scene_complexity", "variant", "model", "trajectory", "warp_radius_px"},
                 "train");
  read(j, "steps", c.steps);
  read(j, "batch", c.batch);
  read(j, "learning_rate", c.learning_rate);
  read(j, "seed", c.seed);
  read(j, "scene_pool", c.scene_pool);
  read(j, "clips_per_scene", c.clips_per_scene);
  read(j, "chunk", c.chunk);
  read(j, "scene_complexity", c.scene_complexity);
  if (j.contains("variant")) c.variant = noise_variant_from_string(j.at("variant"));
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("trajectory")) from_json(j.at("trajectory"), c.trajectory);
  read(j, "warp_radius_px", c.warp_radius_px);
}

void to_json(json& j, const PoseRecoveryOptions& c) {
  j = {{"grid_degrees", c.grid_degrees},
       {"initial_rotation_step", c.initial_rotation_step},
       {"initial_translation_step", c.initial_translation_step},
       {"min_step", c.min_step},
       {"max_evaluations", c.max_evaluations},
       {"random_probes", c.random_probes},
       {"refine_iterations", c.refine_iterations},
       {"residual_threshold", c.residual_threshold}};
}

void from_json(const json& j, PoseRecoveryOptions& c) {
  reject_unknown(j, {"grid_degrees", "initial_rotation_step", "initial_translation_step", "min_step",
                     "max_evaluations", "random_probes", "refine_iterations", "residual_threshold"},
                 "pose");
  read(j, "grid_degrees", c.grid_degrees);
  read(j, "initial_rotation_step", c.initial_rotation_step);
  read(j, "initial_translation_step", c.initial_translation_step);
  read(j, "min_step", c.min_step);
  read(j, "max_evaluations", c.max_evaluations);
  read(j, "random_probes", c.random_probes);
  read(j, "refine_iterations", c.refine_iterations);
  read(j, "residual_threshold", c.residual_threshold);
}

void to_json(json& j, const AblationConfig& c) {
  j = {{"train", c.train},
       {"seeds", c.seeds},
       {"heldout_clips", c.heldout_clips},
       {"total_frames", c.total_frames},
       {"session", c.session},
       {"pose_metrics", c.pose_metrics},
       {"pose", c.pose}};
}

void from_json(const json& j, AblationConfig& c) {
  reject_unknown(j, {"train", "seeds", "heldout_clips", "total_frames", "session", "pose_metrics", "pose"},
                 "ablation");
  if (j.contains("train")) from_json(j.at("train"), c.train);
  read(j, "seeds", c.seeds);
  read(j, "heldout_clips", c.heldout_clips);
  read(j, "total_frames", c.total_frames);
  if (j.contains("session")) from_json(j.at("session"), c.session);
  read(j, "pose_metrics", c.pose_metrics);
  if (j.contains("pose")) from_json(j.at("pose"), c.pose);
}

void set_dotted(json& j, const std::string& path, const json& value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw std::domain_error("config: empty key in '" + path + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    if (!cur->is_null() && !cur->is_object()) throw std::domain_error("config: '" + path + "' crosses a value");
    start = dot + 1;
  }
}

json parse_config_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return json::parse(text);
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::domain_error("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    set_dotted(out, key, value);
  }
  return out;
}

json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string version_string() { return "deskwarp 0.1.0"; }

void write_run_config(const std::string& dir, const RunConfig& rc) {
  std::filesystem::create_directories(dir);
  json j = {{"command", rc.command}, {"seed", rc.seed}, {"version", version_string()}, {"config", rc.config}};
  std::ofstream(dir + "/run.json") << j.dump(2) << "\n";
}

}  // namespace dw

#include "deskwarp/infer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace dw {

std::string to_string(CacheMode m) {
  switch (m) {
    case CacheMode::none: return "none";
    case CacheMode::point_cloud: return "point_cloud";
    case CacheMode::splats: return "splats";
  }
  return "unknown";
}

CacheMode cache_mode_from_string(const std::string& s) {
  if (s == "none") return CacheMode::none;
  if (s == "point_cloud") return CacheMode::point_cloud;
  if (s == "splats") return CacheMode::splats;
  throw std::domain_error("unknown cache mode: " + s);
}

void SessionConfig::validate() const {
  if (chunk < 2) throw std::domain_error("session: chunk must be >= 2");
  if (overlap < 1 || overlap >= chunk) throw std::domain_error("session: overlap must lie in [1, chunk)");
  noise.validate();
  cache.validate();
  if (cache_window < 1) throw std::domain_error("session: cache window must be >= 1");
  if (!(point_radius_px >= 0.5)) throw std::domain_error("session: point radius must be >= 0.5 px");
  if (extrapolation_window < 1) throw std::domain_error("session: extrapolation window must be >= 1");
  if (patch < 1) throw std::domain_error("session: patch must be >= 1");
}

VelocityFn denoiser_velocity(const DenoiserState& state) {
  return [&state](const DenoiserInput& in, int) { return predict(state, in); };
}

VelocityFn oracle_velocity(const LatentChunk& z_true) {
  return [z_true](const DenoiserInput& in, int) {
    if (!in.z_noisy.same_shape(z_true)) throw std::domain_error("oracle_velocity: shape mismatch");
    LatentChunk v = in.z_noisy;
    for (int t = 0; t < v.frames; ++t)
      for (int c = 0; c < v.channels; ++c)
        for (int y = 0; y < v.height; ++y)
          for (int x = 0; x < v.width; ++x) {
            const double s = in.sigma.at(t, y, x);
            v.at(t, c, y, x) = s > 0.0 ? (in.z_noisy.at(t, c, y, x) - z_true.at(t, c, y, x)) / s : 0.0;
          }
    return v;
  };
}

DepthSource scene_depth(const SyntheticScene& scene) {
  return [scene](const CameraPose& pose, const CameraIntrinsics& k) { return render_gt(scene, pose, k).depth; };
}

DepthSource constant_depth(double depth) {
  if (!(depth > 0.0)) throw std::domain_error("constant_depth: depth must be positive");
  return [depth](const CameraPose&, const CameraIntrinsics& k) { return Image(k.width, k.height, 1, depth); };
}

namespace {

SigmaMap levels_at(const SigmaMap& start, int column, int steps) {
  SigmaMap s = start;
  const double l = ladder(column, steps);
  for (double& v : s.data) v = std::min(l, v);
  return s;
}

void impose_history(LatentChunk& z, const LatentChunk& history, const LatentChunk& eps, const SigmaMap& sigma,
                    int history_tokens) {
  for (int t = 0; t < history_tokens; ++t)
    for (int c = 0; c < z.channels; ++c)
      for (int y = 0; y < z.height; ++y)
        for (int x = 0; x < z.width; ++x) {
          const double s = sigma.at(t, y, x);
          z.at(t, c, y, x) = (1.0 - s) * history.at(t, c, y, x) + s * eps.at(t, c, y, x);
        }
}

}  // namespace

LatentChunk integrate_reverse(const DenoiserInput& cond, const LatentChunk& z_start, const SigmaMap& start,
                              const LatentChunk& eps, int history_tokens, int steps, const VelocityFn& velocity,
                              const SolverObserver& observer) {
  if (steps < 1) throw std::domain_error("integrate_reverse: steps must be >= 1");
  if (!z_start.same_shape(eps) || !cond.z_warp.same_shape(z_start))
    throw std::domain_error("integrate_reverse: latent shapes differ");
  if (history_tokens < 0 || history_tokens > z_start.frames)
    throw std::domain_error("integrate_reverse: bad history token count");
  DenoiserInput in = cond;
  in.z_noisy = z_start;
  // History latents are the clean conditioning latents of those tokens.
  const LatentChunk& history = cond.z_warp;
  for (int j = 0; j < steps; ++j) {
    SigmaMap cur = levels_at(start, j, steps);
    const SigmaMap next = levels_at(start, j + 1, steps);
    if (observer) observer(j, cur);
    bool moving = false;
    for (std::size_t i = 0; i < cur.data.size() && !moving; ++i) moving = next.data[i] != cur.data[i];
    if (moving) {
      in.sigma = cur;
      const LatentChunk v = velocity(in, j);
      if (!v.same_shape(in.z_noisy)) throw std::domain_error("integrate_reverse: velocity shape mismatch");
      for (int t = 0; t < v.frames; ++t)
        for (int c = 0; c < v.channels; ++c)
          for (int y = 0; y < v.height; ++y)
            for (int x = 0; x < v.width; ++x) {
              const double d = next.at(t, y, x) - cur.at(t, y, x);
              if (d != 0.0) in.z_noisy.at(t, c, y, x) += d * v.at(t, c, y, x);
            }
    }
    impose_history(in.z_noisy, history, eps, next, history_tokens);
  }
  in.z_noisy.provenance = Provenance::generated;
  return in.z_noisy;
}

GenerationSession::GenerationSession(std::vector<RgbdFrame> initial, SessionConfig cfg, VelocityFn velocity,
                                     DepthSource depth)
    : cfg_(std::move(cfg)), velocity_(std::move(velocity)), depth_(std::move(depth)), history_(std::move(initial)) {
  cfg_.validate();
  if (history_.empty()) throw std::domain_error("session: need at least one initial frame");
  if (!velocity_) throw std::domain_error("session: missing velocity field");
  if (!depth_) throw std::domain_error("session: missing depth source");
  for (const auto& f : history_) {
    f.intrinsics.validate();
    if (f.intrinsics.width % cfg_.patch != 0 || f.intrinsics.height % cfg_.patch != 0)
      throw std::domain_error("session: patch size must divide the frame size");
  }
  initial_count_ = history_.size();
}

Trajectory GenerationSession::trajectory() const {
  Trajectory t;
  for (std::size_t i = 0; i < history_.size(); ++i)
    t.push_back({static_cast<int>(i), history_[i].pose, history_[i].intrinsics});
  return t;
}

int GenerationSession::next_chunk_new_frames() const {
  const int h = std::min<int>(cfg_.overlap, static_cast<int>(history_.size()));
  return cfg_.chunk - h;
}

WarpedPriorChunk GenerationSession::priors_for(const Trajectory& poses, std::vector<double>& cache_loss) const {
  std::vector<RgbdFrame> window;
  const std::size_t recent_begin =
      std::max(initial_count_, history_.size() - std::min<std::size_t>(history_.size(), cfg_.cache_window));
  if (cfg_.cache_mode == CacheMode::none) {
    window.assign(history_.begin(), history_.begin() + initial_count_);
  } else {
    window.assign(history_.begin(), history_.begin() + initial_count_);
    window.insert(window.end(), history_.begin() + recent_begin, history_.end());
  }
  if (cfg_.cache_mode == CacheMode::splats) {
    bool any_depth = false;
    for (const auto& f : window) any_depth = any_depth || f.finite_depth_count() > 0;
    if (any_depth) {
      const CacheOptimization opt = optimize_cache(init_cache(window, cfg_.cache), window, cfg_.cache);
      cache_loss = opt.loss_trace;
      return render_priors(opt.cloud, poses, cfg_.cache.alpha_threshold, cfg_.cache.cutoff_sigma);
    }
  }
  RgbPointCloud cloud;
  for (const auto& f : window) cloud.append(lift(f, cfg_.cache.stride));
  WarpedPriorChunk out;
  for (const auto& f : poses.frames()) {
    WarpedView v = splat_render(cloud, f.pose, f.intrinsics, cfg_.point_radius_px);
    out.warped.push_back(std::move(v.rgb));
    out.masks.push_back(std::move(v.mask));
    out.poses.push_back(f.pose);
    out.intrinsics.push_back(f.intrinsics);
  }
  return out;
}

ChunkResult GenerationSession::step_chunk(const std::optional<Trajectory>& targets, int max_new) {
  const int h = std::min<int>(cfg_.overlap, static_cast<int>(history_.size()));
  int n_new = cfg_.chunk - h;
  if (max_new >= 0) n_new = std::min(n_new, max_new);
  if (targets) {
    if (targets->empty() || static_cast<int>(targets->size()) > cfg_.chunk - h)
      throw std::domain_error("step_chunk: target pose count must lie in [1, chunk - history tokens]");
    n_new = static_cast<int>(targets->size());
  }
  if (n_new < 1) throw std::domain_error("step_chunk: nothing to generate");

  const Trajectory past = trajectory();
  Trajectory new_poses;
  if (targets) {
    new_poses = *targets;
  } else if (past.size() >= 2) {
    const Trajectory ext = extrapolate_trajectory(past, n_new, cfg_.extrapolation_window);
    new_poses = ext.slice(past.size(), ext.size());
  } else {
    for (int i = 0; i < n_new; ++i) new_poses.push_back({static_cast<int>(past.size()) + i, past.back().pose,
                                                         past.back().intrinsics});
  }

  Trajectory chunk_poses = past.slice(past.size() - h, past.size());
  for (const auto& f : new_poses.frames()) chunk_poses.push_back(f);
  const int t_count = static_cast<int>(chunk_poses.size());

  ChunkResult result;
  ChunkDiagnostics& d = result.diagnostics;
  d.chunk_index = chunk_counter_;
  d.history_tokens = h;
  d.poses = chunk_poses.poses();
  d.priors = priors_for(chunk_poses, d.cache_loss);

  // History tokens are conditioned on their own clean frames.
  std::vector<Image> cond_images;
  std::vector<Mask> masks;
  for (int t = 0; t < t_count; ++t) {
    if (t < h) {
      const RgbdFrame& f = history_[history_.size() - h + t];
      cond_images.push_back(f.rgb);
      masks.emplace_back(f.rgb.width / cfg_.patch, f.rgb.height / cfg_.patch, 1);
    } else {
      cond_images.push_back(d.priors.warped[t]);
      masks.push_back(downsample_mask(d.priors.masks[t], cfg_.patch));
    }
  }
  d.empty_priors = true;
  for (int t = h; t < t_count; ++t) d.empty_priors = d.empty_priors && d.priors.masks[t].count() == 0;

  DenoiserInput cond;
  cond.z_warp = encode(cond_images, cfg_.patch);
  cond.mask = LatentMask::from_masks(masks);
  cond.plucker = latent_plucker(d.poses, chunk_poses[0].intrinsics, cfg_.patch);
  d.mask = cond.mask;
  d.start = build_variant_start_map(cond.mask, cfg_.noise, h, cfg_.variant);
  d.schedule = schedule_matrix(d.start, cond.mask, h, cfg_.noise);

  std::mt19937_64 rng(cfg_.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(chunk_counter_ + 1)));
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentChunk eps(cond.z_warp.frames, cond.z_warp.channels, cond.z_warp.height, cond.z_warp.width, cfg_.patch,
                  Provenance::noisy);
  for (double& v : eps.data) v = normal(rng);

  const LatentChunk z_c = composite(cond.z_warp, LatentChunk(eps.frames, eps.channels, eps.height, eps.width,
                                                             cfg_.patch),
                                    cond.mask);
  const LatentChunk z_start = apply_noise(z_c, d.start, eps);
  const LatentChunk z0 = integrate_reverse(cond, z_start, d.start, eps, h, cfg_.noise.steps, velocity_);

  const std::vector<Image> decoded = decode(z0);
  for (int t = h; t < t_count; ++t) {
    RgbdFrame f;
    f.rgb = decoded[t];
    for (double& v : f.rgb.data) v = std::clamp(v, 0.0, 1.0);
    f.pose = chunk_poses[t].pose;
    f.intrinsics = chunk_poses[t].intrinsics;
    f.depth = depth_(f.pose, f.intrinsics);
    result.frames.push_back(f);
  }
  history_.insert(history_.end(), result.frames.begin(), result.frames.end());
  ++chunk_counter_;
  return result;
}

RunResult run(GenerationSession& session, int total_frames, const std::optional<Trajectory>& targets) {
  if (total_frames < session.config().chunk) throw std::domain_error("run: total frames must be >= chunk length");
  if (static_cast<int>(session.history().size()) > total_frames)
    throw std::domain_error("run: history already longer than the requested total");
  if (targets && static_cast<int>(targets->size()) < total_frames)
    throw std::domain_error("run: target trajectory shorter than the requested total");
  RunResult r;
  while (static_cast<int>(session.history().size()) < total_frames) {
    const int have = static_cast<int>(session.history().size());
    const int n_new = std::min(session.next_chunk_new_frames(), total_frames - have);
    std::optional<Trajectory> t;
    if (targets) t = targets->slice(have, have + n_new);
    ChunkResult c = session.step_chunk(t, n_new);
    r.chunks.push_back(std::move(c.diagnostics));
  }
  r.frames = session.history();
  return r;
}

void save_diagnostics(const std::string& dir, const ChunkDiagnostics& d) {
  std::filesystem::create_directories(dir);
  save_warped_chunk(dir + "/priors", d.priors);
  std::ofstream(dir + "/schedule.csv") << schedule_to_csv(d.schedule);
  write_png(dir + "/schedule.png", schedule_heatmap(d.schedule));
  for (int t = 0; t < d.mask.frames; ++t) {
    Mask m(d.mask.width, d.mask.height);
    std::copy_n(d.mask.data.begin() + static_cast<std::size_t>(t) * m.data.size(), m.data.size(), m.data.begin());
    char name[32];
    std::snprintf(name, sizeof(name), "/latent_mask_%04d.png", t);
    write_mask_png(dir + name, m);
  }
  if (!d.cache_loss.empty()) {
    std::ofstream f(dir + "/cache_loss.csv");
    f.precision(17);
    f << "step,loss\n";
    for (std::size_t i = 0; i < d.cache_loss.size(); ++i) f << i << "," << d.cache_loss[i] << "\n";
  }
}

}  // namespace dw

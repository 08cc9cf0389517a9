#include "deskwarp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dw {

Clip render_clip(const SyntheticScene& scene, const Trajectory& trajectory) {
  Clip c{scene, trajectory, {}};
  for (const auto& f : trajectory.frames()) c.frames.push_back(render_gt(scene, f.pose, f.intrinsics));
  return c;
}

TrainingExample make_training_example(const Clip& clip, int source_index, NoiseVariant variant, int patch,
                                      std::mt19937_64& rng, double warp_radius_px) {
  const int t_count = static_cast<int>(clip.frames.size());
  if (source_index < 0 || source_index >= t_count) throw std::domain_error("training example: source index out of range");
  TrainingExample ex;
  ex.source_index = source_index;
  const WarpedPriorChunk pri = one_to_all(clip.frames[source_index], clip.trajectory, warp_radius_px);
  std::vector<Image> gt;
  std::vector<Mask> masks;
  for (int t = 0; t < t_count; ++t) {
    gt.push_back(clip.frames[t].rgb);
    masks.push_back(downsample_mask(pri.masks[t], patch));
  }
  ex.z = encode(gt, patch);
  ex.z_warp = encode(pri.warped, patch);
  ex.z_warp.provenance = Provenance::warped;
  ex.mask = LatentMask::from_masks(masks);
  ex.z_c = composite(ex.z_warp, ex.z, ex.mask);

  const FrameSigmas s = sample_training_sigmas(variant, t_count, rng);
  ex.sigma_warped = s.warped;
  ex.sigma_filled = s.filled;
  ex.sigma = build_sigma_map(ex.mask, ex.sigma_warped, ex.sigma_filled);

  ex.eps = LatentChunk(ex.z.frames, ex.z.channels, ex.z.height, ex.z.width, patch, Provenance::noisy);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : ex.eps.data) v = n(rng);

  ex.input.z_noisy = apply_noise(ex.z_c, ex.sigma, ex.eps);
  ex.input.sigma = ex.sigma;
  ex.input.mask = ex.mask;
  ex.input.z_warp = ex.z_warp;
  ex.input.plucker = latent_plucker(clip.trajectory.poses(), clip.trajectory[0].intrinsics, patch);
  return ex;
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::domain_error("train: steps must be >= 0");
  if (batch < 1) throw std::domain_error("train: batch must be >= 1");
  if (!(learning_rate > 0.0)) throw std::domain_error("train: learning rate must be positive");
  if (scene_pool < 1 || clips_per_scene < 1) throw std::domain_error("train: empty scene pool");
  if (chunk < 2) throw std::domain_error("train: chunk must be >= 2");
  model.validate();
  if (model.mixing == FrameMixing::temporal_conv && model.frames != chunk)
    throw std::domain_error("train: temporal-conv mixer frames must equal chunk");
}

std::vector<SyntheticScene> pool_scenes(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x5ce9e5ull);
  std::vector<SyntheticScene> scenes;
  for (int s = 0; s < cfg.scene_pool; ++s) scenes.push_back(generate_scene(rng(), cfg.scene_complexity));
  return scenes;
}

std::vector<Clip> build_scene_pool(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x7a1ec7ull);
  std::vector<Clip> pool;
  static const TrajectoryKind kKinds[] = {TrajectoryKind::dolly, TrajectoryKind::orbit, TrajectoryKind::lateral,
                                          TrajectoryKind::mixed};
  const std::vector<SyntheticScene> scenes = pool_scenes(cfg);
  for (int s = 0; s < cfg.scene_pool; ++s) {
    const SyntheticScene& scene = scenes[s];
    for (int c = 0; c < cfg.clips_per_scene; ++c) {
      const TrajectoryKind kind = kKinds[(s + c) % 4];
      const Trajectory traj = sample_trajectory(scene, kind, cfg.chunk, rng(), cfg.trajectory);
      pool.push_back(render_clip(scene, traj));
    }
  }
  return pool;
}

TrainResult train_loop(const TrainConfig& cfg, const std::vector<Clip>& pool, const TrainProgress& progress) {
  return train_loop(cfg, pool, init_denoiser(cfg.model, cfg.seed), progress);
}

TrainResult train_loop(const TrainConfig& cfg, const std::vector<Clip>& pool, DenoiserState init,
                       const TrainProgress& progress) {
  cfg.validate();
  if (pool.empty()) throw std::domain_error("train: empty scene pool");
  if (!(init.config == cfg.model)) throw std::domain_error("train: initial state config differs from cfg.model");
  TrainResult r{std::move(init), {}};
  if (cfg.steps == 0) return r;
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 1);
  ad::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> slots;
  for (const auto& p : r.state.params) slots.push_back(adam.add_slot(p.second.size()));
  int above = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<TrainingExample> examples;
    examples.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      const Clip& clip = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      const int src = std::uniform_int_distribution<int>(0, static_cast<int>(clip.frames.size()) - 1)(rng);
      examples.push_back(make_training_example(clip, src, cfg.variant, cfg.model.patch, rng, cfg.warp_radius_px));
    }
    std::vector<LossItem> items;
    for (const auto& ex : examples) items.push_back({&ex.z, &ex.eps, &ex.input});
    for (auto& p : r.state.params) p.second.zero_grad();
    ad::Tape tape;
    const ad::Tensor loss = denoiser_loss(tape, r.state, items);
    tape.backward(loss);
    const double l = loss.item();
    r.loss_trace.push_back(l);
    if (progress) progress(step, l);
    above = l > 10.0 * r.loss_trace.front() ? above + 1 : 0;
    if (above >= 100)
      throw TrainingDiverged("train: loss above 10x its initial value for 100 consecutive steps at step " +
                                 std::to_string(step),
                             r.loss_trace);
    adam.begin_step();
    for (std::size_t i = 0; i < r.state.params.size(); ++i) {
      ad::Tensor& t = r.state.params[i].second;
      for (double g : t.grad())
        if (!std::isfinite(g)) throw TrainingDiverged("train: non-finite gradient in " + r.state.params[i].first, r.loss_trace);
      adam.update(slots[i], t.values(), t.grad());
    }
    ++r.state.step;
  }
  return r;
}

std::string loss_trace_csv(const std::vector<double>& trace) {
  std::ostringstream o;
  o.precision(17);
  o << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) o << i << "," << trace[i] << "\n";
  return o.str();
}

std::pair<double, double> smoothed_endpoints(const std::vector<double>& trace, int window) {
  if (trace.empty() || window < 1) throw std::domain_error("smoothed_endpoints: empty trace or window");
  const std::size_t w = std::min<std::size_t>(window, trace.size());
  const double first = std::accumulate(trace.begin(), trace.begin() + w, 0.0) / w;
  const double last = std::accumulate(trace.end() - w, trace.end(), 0.0) / w;
  return {first, last};
}

}  // namespace dw

#pragma once

#include "deskwarp/denoiser.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/schedule.hpp"
#include "deskwarp/warp.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dw {

/// A rendered trajectory through one scene.
struct Clip {
  SyntheticScene scene;
  Trajectory trajectory;
  std::vector<RgbdFrame> frames;
};

Clip render_clip(const SyntheticScene& scene, const Trajectory& trajectory);

struct TrainingExample {
  int source_index = 0;
  LatentChunk z;        // ground truth
  LatentChunk z_warp;   // encoded warped priors
  LatentChunk z_c;      // composite
  LatentChunk eps;
  LatentMask mask;
  std::vector<double> sigma_warped;
  std::vector<double> sigma_filled;
  SigmaMap sigma;
  DenoiserInput input;  // z_noisy = apply_noise(z_c, sigma, eps)
};

/// Warps frame `source_index` to every pose of the clip, encodes, composites
/// and noises. Draw order from `rng`: sigma levels, then eps.
TrainingExample make_training_example(const Clip& clip, int source_index, NoiseVariant variant, int patch,
                                      std::mt19937_64& rng, double warp_radius_px = 1.0);

struct TrainConfig {
  int steps = 2000;
  int batch = 4;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
  int scene_pool = 4;
  int clips_per_scene = 4;
  int chunk = 8;
  int scene_complexity = 3;
  NoiseVariant variant = NoiseVariant::spatio_temporal;
  DenoiserConfig model;
  TrajectoryOptions trajectory;
  double warp_radius_px = 1.0;

  void validate() const;
};

/// The scene pool alone, drawn from cfg.seed.
std::vector<SyntheticScene> pool_scenes(const TrainConfig& cfg);

/// Scene seeds and trajectories drawn deterministically from cfg.seed. The
/// pool depends only on (seed, scene_pool, clips_per_scene, chunk,
/// complexity, trajectory options), never on the noise variant.
std::vector<Clip> build_scene_pool(const TrainConfig& cfg);

struct TrainResult {
  DenoiserState state;
  std::vector<double> loss_trace;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

using TrainProgress = std::function<void(int step, double loss)>;

/// Adam on the velocity loss. Throws TrainingDiverged when the loss stays
/// above 10x its first value for 100 consecutive steps.
TrainResult train_loop(const TrainConfig& cfg, const std::vector<Clip>& pool, const TrainProgress& progress = {});
TrainResult train_loop(const TrainConfig& cfg, const std::vector<Clip>& pool, DenoiserState init,
                       const TrainProgress& progress = {});

std::string loss_trace_csv(const std::vector<double>& trace);

/// Mean of the first and last `window` entries.
std::pair<double, double> smoothed_endpoints(const std::vector<double>& trace, int window);

}  // namespace dw

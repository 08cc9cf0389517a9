#pragma once

#include "deskwarp/cache.hpp"
#include "deskwarp/denoiser.hpp"
#include "deskwarp/latent.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/schedule.hpp"
#include "deskwarp/warp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dw {

/// Where warped priors come from at inference time.
enum class CacheMode {
  none,         // point cloud of the initial frames only
  point_cloud,  // point cloud of the recent history, fixed radius
  splats        // optimized splat cloud of the recent history
};

std::string to_string(CacheMode m);
CacheMode cache_mode_from_string(const std::string& s);

struct SessionConfig {
  int chunk = 8;
  int overlap = 2;
  InferenceNoiseConfig noise;
  CacheConfig cache;
  CacheMode cache_mode = CacheMode::splats;
  /// Start levels follow this variant's region rule.
  NoiseVariant variant = NoiseVariant::spatio_temporal;
  /// Most recent history frames fed to the cache, on top of the initial frames.
  int cache_window = 8;
  double point_radius_px = 1.0;
  int extrapolation_window = 20;
  int patch = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Velocity for the current state `in.z_noisy` at levels `in.sigma`;
/// `column` is the solver step index.
using VelocityFn = std::function<LatentChunk(const DenoiserInput& in, int column)>;

VelocityFn denoiser_velocity(const DenoiserState& state);

/// (z - z_true) / sigma wherever sigma > 0, else 0. Along the linear path this
/// equals eps - z_true.
VelocityFn oracle_velocity(const LatentChunk& z_true);

/// Depth for a generated frame at a given camera.
using DepthSource = std::function<Image(const CameraPose&, const CameraIntrinsics&)>;

DepthSource scene_depth(const SyntheticScene& scene);
DepthSource constant_depth(double depth);

/// Called once per solver column with the levels in use.
using SolverObserver = std::function<void(int column, const SigmaMap& sigma)>;

/// Reverse Euler over columns 0..N-1 with per-element level
/// min((N - j) / N, start). History tokens are re-imposed after every step as
/// (1 - sigma) * z_history + sigma * eps.
LatentChunk integrate_reverse(const DenoiserInput& cond, const LatentChunk& z_start, const SigmaMap& start,
                              const LatentChunk& eps, int history_tokens, int steps, const VelocityFn& velocity,
                              const SolverObserver& observer = {});

struct ChunkDiagnostics {
  int chunk_index = 0;
  int history_tokens = 0;
  std::vector<CameraPose> poses;
  WarpedPriorChunk priors;
  LatentMask mask;
  SigmaMap start;
  ScheduleMatrix schedule;
  bool empty_priors = false;
  std::vector<double> cache_loss;
};

struct ChunkResult {
  std::vector<RgbdFrame> frames;
  ChunkDiagnostics diagnostics;
};

class GenerationSession {
 public:
  GenerationSession(std::vector<RgbdFrame> initial, SessionConfig cfg, VelocityFn velocity, DepthSource depth);

  /// Generates the next chunk. Without targets, poses continue the history by
  /// extrapolation; `max_new` caps the number of new frames.
  ChunkResult step_chunk(const std::optional<Trajectory>& targets = std::nullopt, int max_new = -1);

  const std::vector<RgbdFrame>& history() const { return history_; }
  Trajectory trajectory() const;
  int chunk_counter() const { return chunk_counter_; }
  std::size_t initial_count() const { return initial_count_; }
  const SessionConfig& config() const { return cfg_; }
  /// New frames the next step produces when uncapped.
  int next_chunk_new_frames() const;

 private:
  WarpedPriorChunk priors_for(const Trajectory& poses, std::vector<double>& cache_loss) const;

  SessionConfig cfg_;
  VelocityFn velocity_;
  DepthSource depth_;
  std::vector<RgbdFrame> history_;
  std::size_t initial_count_ = 0;
  int chunk_counter_ = 0;
};

struct RunResult {
  std::vector<RgbdFrame> frames;  // full stitched sequence including the initial frames
  std::vector<ChunkDiagnostics> chunks;
};

/// Steps until the history holds exactly `total_frames` frames. Optional
/// `targets` supplies the full trajectory (initial frames included).
RunResult run(GenerationSession& session, int total_frames, const std::optional<Trajectory>& targets = std::nullopt);

void save_diagnostics(const std::string& dir, const ChunkDiagnostics& d);

}  // namespace dw

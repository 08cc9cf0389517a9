#pragma once

#include "deskwarp/geometry.hpp"
#include "deskwarp/image.hpp"
#include "deskwarp/infer.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/train.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dw {

/// Raised when a point set or image carries too little structure to fit.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double peak = 1.0);

struct SsimOptions {
  int window = 7;
  double c1 = 1e-4;  // (0.01 * L)^2 with L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
};

/// Mean SSIM over all valid uniform windows, averaged across channels.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Least-squares dst ~ R * src + t with det(R) = +1. Throws DegenerateInput
/// when the centered cross-covariance has rank below 2.
RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

/// Geodesic distance in [0, pi]; equals arccos((tr(Rg Rt^T) - 1) / 2).
double r_dist(const Mat3& rg, const Mat3& rt);
double t_dist(const Vec3& tg, const Vec3& tt);

struct TrajectoryError {
  double rotation = 0.0;     // mean r_dist over frames
  double translation = 0.0;  // mean t_dist over frames, normalized
};

/// Both trajectories are expressed relative to their first frame and each is
/// scaled by its own furthest-frame translation norm.
TrajectoryError trajectory_error(const std::vector<CameraPose>& generated, const std::vector<CameraPose>& truth);

struct PoseRecoveryOptions {
  double grid_degrees = 2.0;          // rotation grid spacing (3 values per axis)
  double initial_rotation_step = 1.0; // degrees
  double initial_translation_step = 0.02;
  double min_step = 1e-7;
  int max_evaluations = 20000;
  int random_probes = 2000;  // per round, after the pattern search stalls
  int refine_iterations = 30;
  double residual_threshold = 0.02;  // RMS above this flags non-convergence
};

struct PoseRecovery {
  CameraPose pose;
  double residual = 0.0;  // RMS photometric error
  bool converged = false;
  int evaluations = 0;
};

/// Photometric pose fit against render_gt: a 3-axis rotation grid around
/// `init`, then a 6-DOF pattern search and Levenberg-Marquardt refinement.
PoseRecovery recover_pose(const Image& generated, const SyntheticScene& scene, const CameraPose& init,
                          const CameraIntrinsics& k, const PoseRecoveryOptions& opts = {});

/// Row labels of the ablation table, in order.
const std::vector<std::string>& ablation_row_names();

struct AblationConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int heldout_clips = 4;
  int total_frames = 20;
  SessionConfig session;
  bool pose_metrics = true;
  PoseRecoveryOptions pose;
};

struct AblationMetrics {
  double psnr_all = 0.0;  // every generated frame
  double psnr_short = 0.0, ssim_short = 0.0, r_short = 0.0, t_short = 0.0;  // first chunk
  double psnr_long = 0.0, ssim_long = 0.0, r_long = 0.0, t_long = 0.0;      // last chunk
};

struct AblationRow {
  std::string name;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string reason;
  AblationMetrics metrics;
};

struct Verdict {
  std::vector<bool> per_seed;
  bool majority = false;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  /// Spatio-temporal best on psnr_all and full-sequence not above it.
  Verdict noise;
  /// Optimized splat cache above no-cache on psnr_long.
  Verdict cache;

  const AblationRow* find(const std::string& name, std::uint64_t seed) const;
};

/// Supplies the trained denoiser for a noise variant and seed, or nothing.
using CheckpointProvider = std::function<std::optional<DenoiserState>(NoiseVariant, std::uint64_t seed)>;

/// Held-out clips for a seed: the training scenes with freshly drawn
/// trajectories of cfg.total_frames frames.
std::vector<Clip> heldout_clips(const AblationConfig& cfg, std::uint64_t seed);

/// Metrics of one generation setup averaged over held-out clips.
AblationMetrics evaluate_setup(const AblationConfig& cfg, const DenoiserState& model, NoiseVariant variant,
                               CacheMode cache, const std::vector<Clip>& clips);

AblationReport ablation_suite(const AblationConfig& cfg, const CheckpointProvider& checkpoints,
                              const std::function<void(const std::string&)>& log = {});

std::string report_to_json(const AblationReport& r);
AblationReport report_from_json(const std::string& text);
/// One line per row and seed plus a mean row per name.
std::string report_to_csv(const AblationReport& r);

}  // namespace dw

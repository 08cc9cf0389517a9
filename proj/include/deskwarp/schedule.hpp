#pragma once

#include "deskwarp/latent.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dw {

/// Per-token noise levels, T x H x W, all in [0, 1].
struct SigmaMap {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  SigmaMap() = default;
  SigmaMap(int t, int h, int w, double fill = 0.0)
      : frames(t), height(h), width(w), data(static_cast<std::size_t>(t) * h * w, fill) {}

  double& at(int t, int y, int x) { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
  double at(int t, int y, int x) const { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
};

/// Which axes the noise level may vary along, during training and inference.
enum class NoiseVariant { full_sequence, spatial, temporal, spatio_temporal };

std::string to_string(NoiseVariant v);
NoiseVariant noise_variant_from_string(const std::string& s);
const std::vector<NoiseVariant>& all_noise_variants();

struct InferenceNoiseConfig {
  double tau = 0.8;
  int steps = 50;
  double sigma_max = 1.0;

  void validate() const;
};

/// Independent Uniform[0, 1] draws (sigma_warped, sigma_filled).
std::pair<double, double> sample_training_pair(std::mt19937_64& rng);

struct FrameSigmas {
  std::vector<double> warped;
  std::vector<double> filled;
};

/// Training noise levels for `frames` tokens under a variant: spatio-temporal
/// draws a pair per frame, spatial one pair per chunk, temporal one level per
/// frame shared by both regions, full-sequence a single level.
FrameSigmas sample_training_sigmas(NoiseVariant variant, int frames, std::mt19937_64& rng);

/// Sigma_t = m * sigma_w,t + (1 - m) * sigma_f,t.
SigmaMap build_sigma_map(const LatentMask& m, const std::vector<double>& sigma_warped,
                         const std::vector<double>& sigma_filled);

/// (1 - Sigma) * z + Sigma * eps, Sigma broadcast over channels.
LatentChunk apply_noise(const LatentChunk& z, const SigmaMap& sigma, const LatentChunk& eps);

/// Initial levels for the reverse process: history tokens 0, generated tokens
/// tau where the mask is valid and sigma_max elsewhere.
SigmaMap build_start_map(const LatentMask& m, const InferenceNoiseConfig& cfg, int history_tokens);

/// Per-region starting levels for a variant at inference time.
struct RegionStartLevels {
  double history = 0.0;
  double warped = 0.8;
  double blank = 1.0;
};

RegionStartLevels region_start_levels(NoiseVariant variant, const InferenceNoiseConfig& cfg);

/// Start map for any variant; equals build_start_map for spatio_temporal.
SigmaMap build_variant_start_map(const LatentMask& m, const InferenceNoiseConfig& cfg, int history_tokens,
                                 NoiseVariant variant);

enum class TokenRole { history, warped, blank };
std::string to_string(TokenRole r);

struct ScheduleRow {
  int token = 0;
  TokenRole role = TokenRole::history;
  double sigma_init = 0.0;
  std::vector<double> sigma;  // N + 1 columns
};

/// Row r, column j holds min((N - j) / N, sigma_init of row r).
struct ScheduleMatrix {
  int steps = 0;
  std::vector<ScheduleRow> rows;

  /// Level of (token, role) at solver column j; throws if no such row.
  double level(int token, TokenRole role, int column) const;
  const ScheduleRow* find(int token, TokenRole role) const;
};

double ladder(int step_index, int steps);

/// One row per history token and one per region present in each generated
/// token. `start` supplies the starting level of each region.
ScheduleMatrix schedule_matrix(const SigmaMap& start, const LatentMask& m, int history_tokens,
                               const InferenceNoiseConfig& cfg);

/// Chunk layout used for visualization: every generated token carries both
/// a warped and a blank region.
ScheduleMatrix schedule_matrix_for_layout(int tokens, int history_tokens, const InferenceNoiseConfig& cfg);

std::string schedule_to_csv(const ScheduleMatrix& s);
/// Rows = schedule rows, columns = solver steps, viridis-like colormap.
Image schedule_heatmap(const ScheduleMatrix& s, int cell_px = 6);

/// Sinusoidal features of sigma * 1000: [sin(f_0 x) .. sin(f_{d/2-1} x),
/// cos(f_0 x) .. cos(f_{d/2-1} x)] with f_i = 10000^(-i / (d/2)). Output is
/// T x dim x H x W.
std::vector<double> sigma_embedding(const SigmaMap& sigma, int dim);

/// Embedding of a single level, dim values.
std::vector<double> sigma_embedding_vector(double sigma, int dim);

}  // namespace dw

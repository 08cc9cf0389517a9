#pragma once

#include "deskwarp/autodiff.hpp"
#include "deskwarp/geometry.hpp"
#include "deskwarp/latent.hpp"
#include "deskwarp/schedule.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dw {

enum class FrameMixing { attention, temporal_conv };

std::string to_string(FrameMixing m);
FrameMixing frame_mixing_from_string(const std::string& s);

struct DenoiserConfig {
  int latent_channels = 48;
  int base_channels = 32;
  int depth = 2;
  FrameMixing mixing = FrameMixing::attention;
  int sigma_dim = 16;
  int patch = 4;
  /// Chunk length; only the temporal-conv mixer depends on it.
  int frames = 8;
  /// Latent statistics for the analytic skip path.
  double data_mean = 0.5;
  double data_std = 0.17;

  void validate() const;
  int input_channels() const { return 2 * latent_channels + 1 + 6 + sigma_dim; }
  bool operator==(const DenoiserConfig&) const = default;
};

/// Named parameters in a fixed order.
struct DenoiserState {
  DenoiserConfig config;
  std::vector<std::pair<std::string, ad::Tensor>> params;
  long step = 0;

  const ad::Tensor& param(const std::string& name) const;
  std::size_t parameter_count() const;
  DenoiserState clone() const;
  /// Bitwise equality of config and parameter values.
  bool same_values(const DenoiserState& other) const;
};

DenoiserState init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

/// Everything the network sees for one chunk.
struct DenoiserInput {
  LatentChunk z_noisy;
  SigmaMap sigma;
  LatentMask mask;
  LatentChunk z_warp;
  /// One map per token at latent resolution.
  std::vector<PluckerMap> plucker;
};

/// Plücker maps for each pose at latent resolution.
std::vector<PluckerMap> latent_plucker(const std::vector<CameraPose>& poses, const CameraIntrinsics& k, int patch);

struct NetworkInput {
  /// [z_noisy, z_warp, mask, plucker, sigma embedding], [B * T, C_in, H, W].
  ad::Tensor stack;
  /// The sigma embedding channels alone, [B * T, sigma_dim, H, W].
  ad::Tensor sigma_embedding;
  /// Linear-Gaussian velocity estimate from z_noisy and sigma, [B * T, C, H, W].
  ad::Tensor skip;
  int frames = 0;
};

NetworkInput assemble_input(const DenoiserConfig& cfg, const std::vector<const DenoiserInput*>& batch);

/// Velocity prediction, [B * T, C, H, W], recorded on `tape`.
ad::Tensor forward(ad::Tape& tape, const DenoiserState& state, const NetworkInput& input);

/// Untracked single-chunk prediction.
LatentChunk predict(const DenoiserState& state, const DenoiserInput& input);

/// One supervised chunk: ground truth z, noise eps and the network input.
struct LossItem {
  const LatentChunk* z;
  const LatentChunk* eps;
  const DenoiserInput* input;
};

/// (1 / B) * sum over items and entries of (v - (eps - z))^2.
ad::Tensor denoiser_loss(ad::Tape& tape, const DenoiserState& state, const std::vector<LossItem>& batch);

/// Velocity target eps - z.
LatentChunk velocity_target(const LatentChunk& z, const LatentChunk& eps);

void save_denoiser(const std::string& path, const DenoiserState& state);
DenoiserState load_denoiser(const std::string& path);

}  // namespace dw

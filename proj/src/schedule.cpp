#include "deskwarp/schedule.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dw {

std::string to_string(NoiseVariant v) {
  switch (v) {
    case NoiseVariant::full_sequence: return "full_sequence";
    case NoiseVariant::spatial: return "spatial";
    case NoiseVariant::temporal: return "temporal";
    case NoiseVariant::spatio_temporal: return "spatio_temporal";
  }
  return "unknown";
}

NoiseVariant noise_variant_from_string(const std::string& s) {
  for (auto v : all_noise_variants())
    if (to_string(v) == s) return v;
  throw std::domain_error("unknown noise variant: " + s);
}

const std::vector<NoiseVariant>& all_noise_variants() {
  static const std::vector<NoiseVariant> kAll = {NoiseVariant::full_sequence, NoiseVariant::spatial,
                                                 NoiseVariant::temporal, NoiseVariant::spatio_temporal};
  return kAll;
}

void InferenceNoiseConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("tau must lie in [0, 1]");
  if (steps < 1) throw std::domain_error("steps must be >= 1");
  if (!(sigma_max > 0.0 && sigma_max <= 1.0)) throw std::domain_error("sigma_max must lie in (0, 1]");
}

std::pair<double, double> sample_training_pair(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = u(rng);
  const double f = u(rng);
  return {w, f};
}

FrameSigmas sample_training_sigmas(NoiseVariant variant, int frames, std::mt19937_64& rng) {
  FrameSigmas out;
  out.warped.resize(frames);
  out.filled.resize(frames);
  switch (variant) {
    case NoiseVariant::spatio_temporal:
      for (int t = 0; t < frames; ++t) std::tie(out.warped[t], out.filled[t]) = sample_training_pair(rng);
      break;
    case NoiseVariant::spatial: {
      const auto [w, f] = sample_training_pair(rng);
      std::fill(out.warped.begin(), out.warped.end(), w);
      std::fill(out.filled.begin(), out.filled.end(), f);
      break;
    }
    case NoiseVariant::temporal:
      for (int t = 0; t < frames; ++t) {
        const double s = sample_training_pair(rng).first;
        out.warped[t] = out.filled[t] = s;
      }
      break;
    case NoiseVariant::full_sequence: {
      const double s = sample_training_pair(rng).first;
      std::fill(out.warped.begin(), out.warped.end(), s);
      std::fill(out.filled.begin(), out.filled.end(), s);
      break;
    }
  }
  return out;
}

SigmaMap build_sigma_map(const LatentMask& m, const std::vector<double>& sigma_warped,
                         const std::vector<double>& sigma_filled) {
  if (sigma_warped.size() != static_cast<std::size_t>(m.frames) || sigma_filled.size() != sigma_warped.size())
    throw std::domain_error("build_sigma_map: need one level pair per frame");
  for (std::size_t t = 0; t < sigma_warped.size(); ++t) {
    const double w = sigma_warped[t], f = sigma_filled[t];
    if (!(w >= 0.0 && w <= 1.0) || !(f >= 0.0 && f <= 1.0))
      throw std::domain_error("build_sigma_map: noise levels must lie in [0, 1]");
  }
  SigmaMap s(m.frames, m.height, m.width);
  for (int t = 0; t < m.frames; ++t)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        const double mv = m.at(t, y, x) ? 1.0 : 0.0;
        s.at(t, y, x) = mv * sigma_warped[t] + (1.0 - mv) * sigma_filled[t];
      }
  return s;
}

LatentChunk apply_noise(const LatentChunk& z, const SigmaMap& sigma, const LatentChunk& eps) {
  if (!z.same_shape(eps)) throw std::domain_error("apply_noise: noise shape does not match latent");
  if (sigma.frames != z.frames || sigma.height != z.height || sigma.width != z.width)
    throw std::domain_error("apply_noise: sigma map shape does not match latent");
  LatentChunk out = z;
  out.provenance = Provenance::noisy;
  for (int t = 0; t < z.frames; ++t)
    for (int c = 0; c < z.channels; ++c)
      for (int y = 0; y < z.height; ++y)
        for (int x = 0; x < z.width; ++x) {
          const double s = sigma.at(t, y, x);
          out.at(t, c, y, x) = (1.0 - s) * z.at(t, c, y, x) + s * eps.at(t, c, y, x);
        }
  return out;
}

SigmaMap build_start_map(const LatentMask& m, const InferenceNoiseConfig& cfg, int history_tokens) {
  return build_variant_start_map(m, cfg, history_tokens, NoiseVariant::spatio_temporal);
}

RegionStartLevels region_start_levels(NoiseVariant variant, const InferenceNoiseConfig& cfg) {
  switch (variant) {
    case NoiseVariant::spatio_temporal: return {0.0, cfg.tau, cfg.sigma_max};
    case NoiseVariant::spatial: return {cfg.tau, cfg.tau, cfg.sigma_max};
    case NoiseVariant::temporal: return {0.0, cfg.sigma_max, cfg.sigma_max};
    case NoiseVariant::full_sequence: return {cfg.sigma_max, cfg.sigma_max, cfg.sigma_max};
  }
  return {};
}

SigmaMap build_variant_start_map(const LatentMask& m, const InferenceNoiseConfig& cfg, int history_tokens,
                                 NoiseVariant variant) {
  cfg.validate();
  if (history_tokens < 0 || history_tokens >= m.frames)
    throw std::domain_error("build_start_map: history token count must be below the chunk length");
  const RegionStartLevels lv = region_start_levels(variant, cfg);
  SigmaMap s(m.frames, m.height, m.width);
  for (int t = 0; t < m.frames; ++t)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        s.at(t, y, x) = t < history_tokens ? lv.history : (m.at(t, y, x) ? lv.warped : lv.blank);
  return s;
}

std::string to_string(TokenRole r) {
  switch (r) {
    case TokenRole::history: return "history";
    case TokenRole::warped: return "warped";
    case TokenRole::blank: return "blank";
  }
  return "unknown";
}

double ladder(int step_index, int steps) { return static_cast<double>(steps - step_index) / steps; }

const ScheduleRow* ScheduleMatrix::find(int token, TokenRole role) const {
  for (const auto& r : rows)
    if (r.token == token && r.role == role) return &r;
  return nullptr;
}

double ScheduleMatrix::level(int token, TokenRole role, int column) const {
  const ScheduleRow* r = find(token, role);
  if (!r) throw std::out_of_range("schedule: no row for token " + std::to_string(token) + " / " + to_string(role));
  return r->sigma.at(column);
}

namespace {

ScheduleRow make_row(int token, TokenRole role, double sigma_init, int steps) {
  ScheduleRow row{token, role, sigma_init, std::vector<double>(steps + 1)};
  for (int j = 0; j <= steps; ++j) row.sigma[j] = std::min(ladder(j, steps), sigma_init);
  return row;
}

}  // namespace

ScheduleMatrix schedule_matrix(const SigmaMap& start, const LatentMask& m, int history_tokens,
                               const InferenceNoiseConfig& cfg) {
  cfg.validate();
  ScheduleMatrix s;
  s.steps = cfg.steps;
  for (int t = 0; t < start.frames; ++t) {
    if (t < history_tokens) {
      s.rows.push_back(make_row(t, TokenRole::history, start.at(t, 0, 0), cfg.steps));
      continue;
    }
    bool has_warped = false, has_blank = false;
    double warped = 0.0, blank = 0.0;
    for (int y = 0; y < start.height; ++y)
      for (int x = 0; x < start.width; ++x) {
        if (m.at(t, y, x) && !has_warped) {
          has_warped = true;
          warped = start.at(t, y, x);
        } else if (!m.at(t, y, x) && !has_blank) {
          has_blank = true;
          blank = start.at(t, y, x);
        }
      }
    if (has_warped) s.rows.push_back(make_row(t, TokenRole::warped, warped, cfg.steps));
    if (has_blank) s.rows.push_back(make_row(t, TokenRole::blank, blank, cfg.steps));
  }
  return s;
}

ScheduleMatrix schedule_matrix_for_layout(int tokens, int history_tokens, const InferenceNoiseConfig& cfg) {
  cfg.validate();
  ScheduleMatrix s;
  s.steps = cfg.steps;
  for (int t = 0; t < tokens; ++t) {
    if (t < history_tokens) {
      s.rows.push_back(make_row(t, TokenRole::history, 0.0, cfg.steps));
    } else {
      s.rows.push_back(make_row(t, TokenRole::warped, cfg.tau, cfg.steps));
      s.rows.push_back(make_row(t, TokenRole::blank, cfg.sigma_max, cfg.steps));
    }
  }
  return s;
}

std::string schedule_to_csv(const ScheduleMatrix& s) {
  std::ostringstream out;
  out.precision(17);
  out << "token,role";
  for (int j = 0; j <= s.steps; ++j) out << ",k" << (s.steps - j);
  out << "\n";
  for (const auto& r : s.rows) {
    out << r.token << "," << to_string(r.role);
    for (double v : r.sigma) out << "," << v;
    out << "\n";
  }
  return out.str();
}

namespace {

std::array<double, 3> viridis(double v) {
  static constexpr std::array<std::array<double, 3>, 5> kStops = {{{0.267, 0.005, 0.329},
                                                                   {0.229, 0.322, 0.546},
                                                                   {0.128, 0.567, 0.551},
                                                                   {0.370, 0.789, 0.383},
                                                                   {0.993, 0.906, 0.144}}};
  v = std::clamp(v, 0.0, 1.0) * (kStops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(v), kStops.size() - 2);
  const double f = v - static_cast<double>(i);
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = (1.0 - f) * kStops[i][k] + f * kStops[i + 1][k];
  return c;
}

}  // namespace

Image schedule_heatmap(const ScheduleMatrix& s, int cell_px) {
  const int cols = s.steps + 1;
  const int rows = static_cast<int>(s.rows.size());
  Image img(cols * cell_px, rows * cell_px, 3);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) {
      const auto c = viridis(s.rows[r].sigma[j]);
      for (int y = 0; y < cell_px; ++y)
        for (int x = 0; x < cell_px; ++x)
          for (int k = 0; k < 3; ++k) img.at(j * cell_px + x, r * cell_px + y, k) = c[k];
    }
  return img;
}

std::vector<double> sigma_embedding_vector(double sigma, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::domain_error("sigma_embedding: dim must be positive and even");
  const int half = dim / 2;
  const double x = sigma * 1000.0;
  std::vector<double> e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e[i] = std::sin(freq * x);
    e[half + i] = std::cos(freq * x);
  }
  return e;
}

std::vector<double> sigma_embedding(const SigmaMap& sigma, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::domain_error("sigma_embedding: dim must be positive and even");
  const std::size_t plane = static_cast<std::size_t>(sigma.height) * sigma.width;
  std::vector<double> out(static_cast<std::size_t>(sigma.frames) * dim * plane);
  for (int t = 0; t < sigma.frames; ++t)
    for (std::size_t p = 0; p < plane; ++p) {
      const auto e = sigma_embedding_vector(sigma.data[t * plane + p], dim);
      for (int c = 0; c < dim; ++c) out[(static_cast<std::size_t>(t) * dim + c) * plane + p] = e[c];
    }
  return out;
}

}  // namespace dw

#include "deskwarp/denoiser.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dw {

std::string to_string(FrameMixing m) { return m == FrameMixing::attention ? "attention" : "temporal_conv"; }

FrameMixing frame_mixing_from_string(const std::string& s) {
  if (s == "attention") return FrameMixing::attention;
  if (s == "temporal_conv") return FrameMixing::temporal_conv;
  throw std::domain_error("unknown frame mixing: " + s);
}

void DenoiserConfig::validate() const {
  if (latent_channels < 1 || base_channels < 1) throw std::domain_error("denoiser: channel counts must be positive");
  if (depth < 1) throw std::domain_error("denoiser: depth must be >= 1");
  if (sigma_dim < 2 || sigma_dim % 2 != 0) throw std::domain_error("denoiser: sigma_dim must be even and >= 2");
  if (patch < 1 || latent_channels != 3 * patch * patch)
    throw std::domain_error("denoiser: latent channels must equal 3 * patch^2");
  if (frames < 1) throw std::domain_error("denoiser: frames must be >= 1");
  if (!std::isfinite(data_mean) || !(data_std > 0.0)) throw std::domain_error("denoiser: bad data statistics");
}

const ad::Tensor& DenoiserState::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::out_of_range("denoiser: no parameter named " + name);
}

std::size_t DenoiserState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.second.size();
  return n;
}

DenoiserState DenoiserState::clone() const {
  DenoiserState s;
  s.config = config;
  s.step = step;
  for (const auto& [n, t] : params) s.params.emplace_back(n, t.clone(true));
  return s;
}

bool DenoiserState::same_values(const DenoiserState& other) const {
  if (!(config == other.config) || params.size() != other.params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params[i].second.values();
    const auto& b = other.params[i].second.values();
    if (params[i].first != other.params[i].first || a.size() != b.size()) return false;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

DenoiserState init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DenoiserState s;
  s.config = cfg;
  std::mt19937_64 rng(seed);
  auto add = [&](const std::string& name, const ad::Shape& shape, double stddev) {
    std::vector<double> v(ad::numel(shape), 0.0);
    if (stddev > 0.0) {
      std::normal_distribution<double> n(0.0, stddev);
      for (double& x : v) x = n(rng);
    }
    s.params.emplace_back(name, ad::Tensor::from(shape, std::move(v), true));
  };
  const int b = cfg.base_channels, cin = cfg.input_channels(), sd = cfg.sigma_dim;
  add("in.w", {b, cin, 1, 1}, std::sqrt(1.0 / cin));
  add("in.b", {b}, 0.0);
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string p = "block" + std::to_string(d) + ".";
    add(p + "conv1.w", {b, b, 3, 3}, std::sqrt(2.0 / (9 * b)));
    add(p + "conv1.b", {b}, 0.0);
    add(p + "gamma.w", {b, sd, 1, 1}, 0.1 * std::sqrt(1.0 / sd));
    add(p + "gamma.b", {b}, 0.0);
    add(p + "beta.w", {b, sd, 1, 1}, std::sqrt(1.0 / sd));
    add(p + "beta.b", {b}, 0.0);
    add(p + "conv2.w", {b, b, 3, 3}, 0.5 * std::sqrt(1.0 / (9 * b)));
    add(p + "conv2.b", {b}, 0.0);
    if (cfg.mixing == FrameMixing::attention) {
      add(p + "q.w", {b, b, 1, 1}, std::sqrt(1.0 / b));
      add(p + "k.w", {b, b, 1, 1}, std::sqrt(1.0 / b));
      add(p + "v.w", {b, b, 1, 1}, std::sqrt(1.0 / b));
    } else {
      add(p + "mix", {cfg.frames, cfg.frames}, std::sqrt(1.0 / cfg.frames));
    }
    add(p + "out.w", {b, b, 1, 1}, 0.5 * std::sqrt(1.0 / b));
    add(p + "out.b", {b}, 0.0);
  }
  add("head.w", {cfg.latent_channels, b, 1, 1}, 0.0);
  add("head.b", {cfg.latent_channels}, 0.0);
  add("skip.w", {cfg.latent_channels, cfg.latent_channels, 1, 1}, 0.0);
  return s;
}

std::vector<PluckerMap> latent_plucker(const std::vector<CameraPose>& poses, const CameraIntrinsics& k, int patch) {
  const CameraIntrinsics kl = k.downscaled(patch);
  std::vector<PluckerMap> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(plucker_map(p, kl));
  return out;
}

NetworkInput assemble_input(const DenoiserConfig& cfg, const std::vector<const DenoiserInput*>& batch) {
  cfg.validate();
  if (batch.empty()) throw std::domain_error("denoiser: empty batch");
  const DenoiserInput& first = *batch.front();
  const int t_count = first.z_noisy.frames, h = first.z_noisy.height, w = first.z_noisy.width;
  const int c = cfg.latent_channels, cin = cfg.input_channels(), sd = cfg.sigma_dim;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int n = static_cast<int>(batch.size()) * t_count;
  NetworkInput out;
  out.frames = t_count;
  out.stack = ad::Tensor::zeros({n, cin, h, w});
  out.sigma_embedding = ad::Tensor::zeros({n, sd, h, w});
  out.skip = ad::Tensor::zeros({n, c, h, w});
  auto x = out.stack.values();
  auto e = out.sigma_embedding.values();
  auto k = out.skip.values();
  const double mu = cfg.data_mean, var = cfg.data_std * cfg.data_std;
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const DenoiserInput& in = *batch[bi];
    if (in.z_noisy.channels != c) throw std::domain_error("denoiser: latent channel count differs from config");
    if (in.z_noisy.frames != t_count || in.z_noisy.height != h || in.z_noisy.width != w)
      throw std::domain_error("denoiser: batch items differ in shape");
    if (!in.z_warp.same_shape(in.z_noisy)) throw std::domain_error("denoiser: warped latent shape mismatch");
    if (in.sigma.frames != t_count || in.sigma.height != h || in.sigma.width != w)
      throw std::domain_error("denoiser: sigma map shape mismatch");
    if (in.mask.frames != t_count || in.mask.height != h || in.mask.width != w)
      throw std::domain_error("denoiser: mask shape mismatch");
    if (in.plucker.size() != static_cast<std::size_t>(t_count))
      throw std::domain_error("denoiser: need one Plücker map per token");
    const std::vector<double> emb = sigma_embedding(in.sigma, sd);
    for (int t = 0; t < t_count; ++t) {
      const PluckerMap& pl = in.plucker[t];
      if (pl.width != w || pl.height != h) throw std::domain_error("denoiser: Plücker map resolution mismatch");
      const std::size_t row = static_cast<std::size_t>(bi) * t_count + t;
      double* dst = x.data() + row * cin * plane;
      const std::size_t tok = static_cast<std::size_t>(t) * c * plane;
      std::copy_n(in.z_noisy.data.begin() + tok, c * plane, dst);
      std::copy_n(in.z_warp.data.begin() + tok, c * plane, dst + c * plane);
      for (std::size_t p = 0; p < plane; ++p) dst[2 * c * plane + p] = in.mask.data[t * plane + p] ? 1.0 : 0.0;
      std::copy_n(pl.data.begin(), 6 * plane, dst + (2 * c + 1) * plane);
      const double* es = emb.data() + static_cast<std::size_t>(t) * sd * plane;
      std::copy_n(es, sd * plane, dst + (2 * c + 7) * plane);
      std::copy_n(es, sd * plane, e.data() + row * sd * plane);
      // E[eps - z | z_noisy] for z ~ N(mu, var) elementwise.
      for (std::size_t p = 0; p < plane; ++p) {
        const double s = in.sigma.data[t * plane + p], a = 1.0 - s;
        const double gain = (s - a * var) / (a * a * var + s * s);
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
          k[row * c * plane + i] = gain * (in.z_noisy.data[tok + i] - a * mu) - mu;
        }
      }
    }
  }
  return out;
}

ad::Tensor forward(ad::Tape& tape, const DenoiserState& state, const NetworkInput& input) {
  const DenoiserConfig& cfg = state.config;
  if (input.stack.dim(1) != cfg.input_channels()) throw std::domain_error("denoiser: input channel mismatch");
  if (cfg.mixing == FrameMixing::temporal_conv && input.frames != cfg.frames)
    throw std::domain_error("denoiser: temporal-conv mixer needs exactly config.frames tokens");
  auto P = [&](const std::string& n) -> const ad::Tensor& { return state.param(n); };
  ad::Tensor h = ad::conv2d(tape, input.stack, P("in.w"), P("in.b"));
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string p = "block" + std::to_string(d) + ".";
    ad::Tensor a = ad::conv2d(tape, h, P(p + "conv1.w"), P(p + "conv1.b"));
    const ad::Tensor gamma = ad::conv2d(tape, input.sigma_embedding, P(p + "gamma.w"), P(p + "gamma.b"));
    const ad::Tensor beta = ad::conv2d(tape, input.sigma_embedding, P(p + "beta.w"), P(p + "beta.b"));
    a = ad::add(tape, ad::add(tape, a, ad::mul(tape, a, gamma)), beta);
    a = ad::conv2d(tape, ad::silu(tape, a), P(p + "conv2.w"), P(p + "conv2.b"));
    h = ad::add(tape, h, a);
    ad::Tensor m;
    if (cfg.mixing == FrameMixing::attention) {
      const ad::Tensor q = ad::conv2d(tape, h, P(p + "q.w"), {});
      const ad::Tensor k = ad::conv2d(tape, h, P(p + "k.w"), {});
      const ad::Tensor v = ad::conv2d(tape, h, P(p + "v.w"), {});
      m = ad::frame_attention(tape, q, k, v, input.frames);
    } else {
      m = ad::frame_mix(tape, h, P(p + "mix"), input.frames);
    }
    h = ad::add(tape, h, ad::conv2d(tape, ad::silu(tape, m), P(p + "out.w"), P(p + "out.b")));
  }
  const ad::Tensor out = ad::conv2d(tape, ad::silu(tape, h), P("head.w"), P("head.b"));
  return ad::add(tape, out, ad::conv2d(tape, input.skip, P("skip.w"), {}));
}

LatentChunk predict(const DenoiserState& state, const DenoiserInput& input) {
  ad::Tape tape;
  const NetworkInput x = assemble_input(state.config, {&input});
  const ad::Tensor v = forward(tape, state, x);
  LatentChunk out(input.z_noisy.frames, input.z_noisy.channels, input.z_noisy.height, input.z_noisy.width,
                  input.z_noisy.patch, Provenance::generated);
  std::copy(v.values().begin(), v.values().end(), out.data.begin());
  return out;
}

LatentChunk velocity_target(const LatentChunk& z, const LatentChunk& eps) {
  if (!z.same_shape(eps)) throw std::domain_error("velocity_target: shape mismatch");
  LatentChunk out = z;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = eps.data[i] - z.data[i];
  return out;
}

ad::Tensor denoiser_loss(ad::Tape& tape, const DenoiserState& state, const std::vector<LossItem>& batch) {
  if (batch.empty()) throw std::domain_error("denoiser_loss: empty batch");
  std::vector<const DenoiserInput*> inputs;
  std::vector<double> target;
  for (const auto& item : batch) {
    if (!item.z->same_shape(item.input->z_noisy)) throw std::domain_error("denoiser_loss: target shape mismatch");
    inputs.push_back(item.input);
    const LatentChunk v = velocity_target(*item.z, *item.eps);
    target.insert(target.end(), v.data.begin(), v.data.end());
  }
  const NetworkInput x = assemble_input(state.config, inputs);
  const ad::Tensor v = forward(tape, state, x);
  const ad::Tensor diff = ad::sub(tape, v, ad::Tensor::from(v.shape(), std::move(target)));
  const ad::Tensor loss = ad::scale(tape, ad::sum(tape, ad::mul(tape, diff, diff)), 1.0 / batch.size());
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("denoiser_loss: non-finite loss (step " + std::to_string(state.step) + ")");
  return loss;
}

void save_denoiser(const std::string& path, const DenoiserState& state) {
  nlohmann::json manifest;
  const auto& c = state.config;
  manifest["config"] = {{"latent_channels", c.latent_channels}, {"base_channels", c.base_channels},
                        {"depth", c.depth},
                        {"mixing", to_string(c.mixing)},
                        {"sigma_dim", c.sigma_dim},
                        {"patch", c.patch},
                        {"frames", c.frames},
                        {"data_mean", c.data_mean},
                        {"data_std", c.data_std}};
  manifest["step"] = state.step;
  manifest["dtype"] = "float32";
  manifest["endianness"] = "little";
  std::vector<double> flat;
  std::size_t offset = 0;
  for (const auto& [name, t] : state.params) {
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    flat.insert(flat.end(), t.values().begin(), t.values().end());
    offset += t.size();
  }
  const auto bytes = to_float32_le(flat);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_denoiser: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::ofstream mf(path + ".json");
  mf << manifest.dump(2) << "\n";
}

DenoiserState load_denoiser(const std::string& path) {
  std::ifstream mf(path + ".json");
  if (!mf) throw std::runtime_error("load_denoiser: missing manifest " + path + ".json");
  const auto manifest = nlohmann::json::parse(mf);
  DenoiserState s;
  const auto& c = manifest.at("config");
  s.config.latent_channels = c.at("latent_channels");
  s.config.base_channels = c.at("base_channels");
  s.config.depth = c.at("depth");
  s.config.mixing = frame_mixing_from_string(c.at("mixing"));
  s.config.sigma_dim = c.at("sigma_dim");
  s.config.patch = c.at("patch");
  s.config.frames = c.at("frames");
  s.config.data_mean = c.value("data_mean", s.config.data_mean);
  s.config.data_std = c.value("data_std", s.config.data_std);
  s.config.validate();
  s.step = manifest.at("step");
  std::ifstream f(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto flat = from_float32_le(bytes.data(), bytes.size() / 4);
  for (const auto& t : manifest.at("tensors")) {
    const ad::Shape shape = t.at("shape").get<ad::Shape>();
    const std::size_t off = t.at("offset"), count = t.at("count");
    if (off + count > flat.size() || count != ad::numel(shape))
      throw std::runtime_error("load_denoiser: tensor " + t.at("name").get<std::string>() + " out of range");
    s.params.emplace_back(t.at("name").get<std::string>(),
                          ad::Tensor::from(shape, std::vector<double>(flat.begin() + off, flat.begin() + off + count),
                                           true));
  }
  return s;
}

}  // namespace dw

#include "deskwarp/eval.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace dw {

double psnr(const Image& a, const Image& b, double peak) {
  if (!a.same_shape(b)) throw std::domain_error("psnr: image shapes differ");
  if (!(peak > 0.0)) throw std::domain_error("psnr: peak must be positive");
  if (a.data.empty()) throw std::domain_error("psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b, const SsimOptions& opts) {
  if (!a.same_shape(b)) throw std::domain_error("ssim: image shapes differ");
  const int win = opts.window;
  if (win < 1 || win > std::min(a.width, a.height)) throw std::domain_error("ssim: window larger than the image");
  const double n = static_cast<double>(win) * win;
  double total = 0.0;
  long count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y0 = 0; y0 + win <= a.height; ++y0)
      for (int x0 = 0; x0 + win <= a.width; ++x0) {
        double sa = 0.0, sb = 0.0;
        for (int y = y0; y < y0 + win; ++y)
          for (int x = x0; x < x0 + win; ++x) {
            sa += a.at(x, y, c);
            sb += b.at(x, y, c);
          }
        const double ma = sa / n, mb = sb / n;
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (int y = y0; y < y0 + win; ++y)
          for (int x = x0; x < x0 + win; ++x) {
            const double da = a.at(x, y, c) - ma, db = b.at(x, y, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= n, vb /= n, cov /= n;
        total += ((2.0 * ma * mb + opts.c1) * (2.0 * cov + opts.c2)) /
                 ((ma * ma + mb * mb + opts.c1) * (va + vb + opts.c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw std::domain_error("kabsch: point sets differ in size");
  if (src.size() < 3) throw DegenerateInput("kabsch: need at least 3 points");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0]) throw DegenerateInput("kabsch: point spread is rank deficient");
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

double r_dist(const Mat3& rg, const Mat3& rt) {
  const Mat3 m = rg * rt.transpose();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const Vec3 axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  return std::atan2(0.5 * axis.norm(), c);
}

double t_dist(const Vec3& tg, const Vec3& tt) { return (tt - tg).norm(); }

namespace {

std::vector<CameraPose> relative_normalized(const std::vector<CameraPose>& poses) {
  std::vector<CameraPose> out;
  const CameraPose inv0 = poses.front().inverse();
  double furthest = 0.0;
  for (const auto& p : poses) {
    out.push_back(inv0.compose(p));
    furthest = std::max(furthest, out.back().translation.norm());
  }
  if (furthest > 0.0)
    for (auto& p : out) p.translation /= furthest;
  return out;
}

}  // namespace

TrajectoryError trajectory_error(const std::vector<CameraPose>& generated, const std::vector<CameraPose>& truth) {
  if (generated.size() != truth.size() || generated.empty())
    throw std::domain_error("trajectory_error: trajectories must be non-empty and equally long");
  const auto g = relative_normalized(generated);
  const auto t = relative_normalized(truth);
  TrajectoryError e;
  for (std::size_t i = 0; i < g.size(); ++i) {
    e.rotation += r_dist(g[i].rotation_matrix(), t[i].rotation_matrix());
    e.translation += t_dist(g[i].translation, t[i].translation);
  }
  e.rotation /= static_cast<double>(g.size());
  e.translation /= static_cast<double>(g.size());
  return e;
}

namespace {

using Params = std::array<double, 6>;

CameraPose perturbed(const CameraPose& base, const Params& p) {
  const Vec3 w(p[0], p[1], p[2]);
  const double angle = w.norm();
  Quat q = base.rotation;
  if (angle > 0.0) q = base.rotation * axis_angle(w / angle, angle);
  q.normalize();
  return {q, base.translation + Vec3(p[3], p[4], p[5])};
}

double photometric_rms(const Image& target, const SyntheticScene& scene, const CameraPose& pose,
                       const CameraIntrinsics& k) {
  const RgbdFrame f = render_gt(scene, pose, k);
  double sse = 0.0;
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const double d = f.rgb.data[i] - target.data[i];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(target.data.size()));
}

}  // namespace

PoseRecovery recover_pose(const Image& generated, const SyntheticScene& scene, const CameraPose& init,
                          const CameraIntrinsics& k, const PoseRecoveryOptions& opts) {
  k.validate();
  if (generated.width != k.width || generated.height != k.height || generated.channels != 3)
    throw std::domain_error("recover_pose: image does not match the intrinsics");
  PoseRecovery r;
  auto f = [&](const CameraPose& p) {
    ++r.evaluations;
    return photometric_rms(generated, scene, p, k);
  };

  CameraPose base = init;
  double best = f(base);
  const double g = opts.grid_degrees * std::numbers::pi / 180.0;
  if (g > 0.0 && best > 0.0) {
    CameraPose grid_best = base;
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c) {
          if (a == 0 && b == 0 && c == 0) continue;
          const Quat q = init.rotation * axis_angle(Vec3::UnitX(), a * g) * axis_angle(Vec3::UnitY(), b * g) *
                         axis_angle(Vec3::UnitZ(), c * g);
          const CameraPose p(q.normalized(), init.translation);
          const double v = f(p);
          if (v < best) {
            best = v;
            grid_best = p;
          }
        }
    base = grid_best;
  }

  // Hooke-Jeeves pattern search in a local chart around `base`, restarted from the incumbent while it improves.
  Params x{};
  double step_r = 0.0, step_t = 0.0;
  auto value = [&](const Params& p) { return f(perturbed(base, p)); };
  auto explore = [&](Params p, double& fp) {
    for (int i = 0; i < 6; ++i) {
      const double s = i < 3 ? step_r : step_t;
      for (double dir : {1.0, -1.0}) {
        Params q = p;
        q[i] += dir * s;
        const double fq = value(q);
        if (fq < fp) {
          p = q;
          fp = fq;
          break;
        }
      }
    }
    return p;
  };
  auto search = [&] {
    step_r = opts.initial_rotation_step * std::numbers::pi / 180.0;
    step_t = opts.initial_translation_step;
    while (best > 0.0 && (step_r > opts.min_step || step_t > opts.min_step) && r.evaluations < opts.max_evaluations) {
      double fn = best;
      Params xn = explore(x, fn);
      if (fn >= best) {
        step_r *= 0.5;
        step_t *= 0.5;
        continue;
      }
      // Pattern moves while they keep paying off.
      while (r.evaluations < opts.max_evaluations) {
        Params xp;
        for (int i = 0; i < 6; ++i) xp[i] = 2.0 * xn[i] - x[i];
        x = xn;
        best = fn;
        double fp = value(xp);
        const Params xe = explore(xp, fp);
        if (fp >= best) break;
        xn = xe;
        fn = fp;
      }
    }
  };
  // Edge pixels make the objective piecewise constant, so random probes at several scales hop between cells.
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto probe = [&] {
    const double rot = opts.initial_rotation_step * std::numbers::pi / 180.0;
    for (int i = 0; i < opts.random_probes && r.evaluations < opts.max_evaluations; ++i) {
      const double scale = std::pow(0.5, i % 8);
      Params q;
      for (int d = 0; d < 6; ++d) q[d] = gauss(rng) * scale * (d < 3 ? rot : opts.initial_translation_step);
      const double v = f(perturbed(base, q));
      if (v < best) {
        best = v;
        base = perturbed(base, q);
        return true;
      }
    }
    return false;
  };
  // Levenberg-Marquardt on per-pixel residuals, ignoring values off by more than kOutlier (silhouette and
  // checker edges). Steps are judged by this robust cost; the end point is kept only if the full error drops.
  constexpr double kH = 1e-6, kOutlier = 0.01;
  auto residuals = [&](const CameraPose& p) {
    ++r.evaluations;
    std::vector<double> out = render_gt(scene, p, k).rgb.data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= generated.data[i];
    return out;
  };
  auto robust = [&](const std::vector<double>& res) {
    double s = 0.0;
    for (double d : res)
      if (std::abs(d) <= kOutlier) s += d * d;
    return s;
  };
  auto refine = [&] {
    CameraPose cur = base;
    std::vector<double> r0 = residuals(cur);
    double cost = robust(r0);
    double lambda = 1e-3;
    for (int it = 0; it < opts.refine_iterations && cost > 0.0 && r.evaluations < opts.max_evaluations; ++it) {
      const auto n = static_cast<Eigen::Index>(r0.size());
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, 6);
      for (int d = 0; d < 6; ++d) {
        Params e{};
        e[d] = kH;
        const std::vector<double> rp = residuals(perturbed(cur, e));
        e[d] = -kH;
        const std::vector<double> rm = residuals(perturbed(cur, e));
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dp = (rp[i] - r0[i]) / kH, dm = (r0[i] - rm[i]) / kH;
          if (std::abs(dp - dm) <= 0.25 * (std::abs(dp) + std::abs(dm)) + 1e-6) jac(i, d) = 0.5 * (dp + dm);
        }
      }
      Eigen::VectorXd res(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        res[i] = std::abs(r0[i]) > kOutlier ? 0.0 : r0[i];
        if (res[i] == 0.0) jac.row(i).setZero();
      }
      const Eigen::Matrix<double, 6, 6> a = jac.transpose() * jac;
      const Eigen::Matrix<double, 6, 1> grad = jac.transpose() * res;
      if (grad.norm() == 0.0) break;
      bool accepted = false;
      while (!accepted && lambda < 1e10 && r.evaluations < opts.max_evaluations) {
        Eigen::Matrix<double, 6, 6> damped = a;
        for (int d = 0; d < 6; ++d) damped(d, d) += lambda * a(d, d) + 1e-12;
        const Eigen::Matrix<double, 6, 1> delta = -damped.ldlt().solve(grad);
        Params q;
        for (int d = 0; d < 6; ++d) q[d] = delta[d];
        const CameraPose next = perturbed(cur, q);
        std::vector<double> rn = residuals(next);
        const double c = robust(rn);
        if (c < cost) {
          cur = next;
          r0 = std::move(rn);
          cost = c;
          lambda = std::max(lambda * 0.1, 1e-9);
          accepted = true;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted) break;
    }
    const double v = f(cur);
    if (v < best) {
      best = v;
      base = cur;
    }
  };
  do {
    search();
    base = perturbed(base, x);
    x = Params{};
    refine();
  } while (best > 0.0 && r.evaluations < opts.max_evaluations && probe());
  r.pose = perturbed(base, x);
  r.residual = best;
  r.converged = best <= opts.residual_threshold;
  return r;
}

const std::vector<std::string>& ablation_row_names() {
  static const std::vector<std::string> kNames = {"No Cache",
                                                  "Caching by RGB point cloud",
                                                  "Caching by online optimized 3DGS",
                                                  "Full sequence noise",
                                                  "Spatial-varying noise",
                                                  "Temporal-varying noise",
                                                  "Spatial-temporal-varying noise"};
  return kNames;
}

const AblationRow* AblationReport::find(const std::string& name, std::uint64_t seed) const {
  for (const auto& r : rows)
    if (r.name == name && r.seed == seed) return &r;
  return nullptr;
}

std::vector<Clip> heldout_clips(const AblationConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const std::vector<SyntheticScene> scenes = pool_scenes(tc);
  std::mt19937_64 rng(seed ^ 0x4e1d07ull);
  static const TrajectoryKind kKinds[] = {TrajectoryKind::orbit, TrajectoryKind::lateral, TrajectoryKind::dolly,
                                          TrajectoryKind::mixed};
  std::vector<Clip> clips;
  for (int i = 0; i < cfg.heldout_clips; ++i) {
    const SyntheticScene& scene = scenes[i % scenes.size()];
    clips.push_back(render_clip(scene, sample_trajectory(scene, kKinds[i % 4], cfg.total_frames, rng(),
                                                         cfg.train.trajectory)));
  }
  return clips;
}

namespace {

constexpr double kPsnrCap = 100.0;

double capped_psnr(const Image& a, const Image& b) { return std::min(psnr(a, b), kPsnrCap); }

struct WindowMetrics {
  double psnr = 0.0, ssim = 0.0, r = 0.0, t = 0.0;
};

WindowMetrics window_metrics(const AblationConfig& cfg, const Clip& clip, const std::vector<RgbdFrame>& frames,
                             std::size_t begin, std::size_t end) {
  WindowMetrics m;
  std::vector<CameraPose> recovered, truth;
  for (std::size_t i = begin; i < end; ++i) {
    m.psnr += capped_psnr(frames[i].rgb, clip.frames[i].rgb);
    m.ssim += ssim(frames[i].rgb, clip.frames[i].rgb);
    if (cfg.pose_metrics) {
      recovered.push_back(
          recover_pose(frames[i].rgb, clip.scene, clip.trajectory[i].pose, clip.trajectory[i].intrinsics, cfg.pose)
              .pose);
      truth.push_back(clip.trajectory[i].pose);
    }
  }
  const double n = static_cast<double>(end - begin);
  m.psnr /= n;
  m.ssim /= n;
  if (cfg.pose_metrics && recovered.size() >= 2) {
    const TrajectoryError e = trajectory_error(recovered, truth);
    m.r = e.rotation;
    m.t = e.translation;
  }
  return m;
}

}  // namespace

AblationMetrics evaluate_setup(const AblationConfig& cfg, const DenoiserState& model, NoiseVariant variant,
                               CacheMode cache, const std::vector<Clip>& clips) {
  AblationMetrics out;
  if (clips.empty()) throw std::domain_error("evaluate_setup: no held-out clips");
  for (const auto& clip : clips) {
    SessionConfig sc = cfg.session;
    sc.variant = variant;
    sc.cache_mode = cache;
    const std::size_t initial = static_cast<std::size_t>(sc.overlap);
    std::vector<RgbdFrame> init(clip.frames.begin(), clip.frames.begin() + initial);
    GenerationSession session(init, sc, denoiser_velocity(model), scene_depth(clip.scene));
    const RunResult r = run(session, cfg.total_frames, clip.trajectory);
    const std::size_t first_end = initial + (r.chunks.front().poses.size() - r.chunks.front().history_tokens);
    const std::size_t last_begin =
        r.frames.size() - (r.chunks.back().poses.size() - r.chunks.back().history_tokens);
    double all = 0.0;
    for (std::size_t i = initial; i < r.frames.size(); ++i) all += capped_psnr(r.frames[i].rgb, clip.frames[i].rgb);
    out.psnr_all += all / static_cast<double>(r.frames.size() - initial);
    const WindowMetrics s = window_metrics(cfg, clip, r.frames, initial, first_end);
    const WindowMetrics l = window_metrics(cfg, clip, r.frames, last_begin, r.frames.size());
    out.psnr_short += s.psnr, out.ssim_short += s.ssim, out.r_short += s.r, out.t_short += s.t;
    out.psnr_long += l.psnr, out.ssim_long += l.ssim, out.r_long += l.r, out.t_long += l.t;
  }
  const double n = static_cast<double>(clips.size());
  for (double* v : {&out.psnr_all, &out.psnr_short, &out.ssim_short, &out.r_short, &out.t_short, &out.psnr_long,
                    &out.ssim_long, &out.r_long, &out.t_long})
    *v /= n;
  return out;
}

AblationReport ablation_suite(const AblationConfig& cfg, const CheckpointProvider& checkpoints,
                              const std::function<void(const std::string&)>& log) {
  const auto& names = ablation_row_names();
  const std::vector<NoiseVariant> variants = {NoiseVariant::full_sequence, NoiseVariant::spatial,
                                              NoiseVariant::temporal, NoiseVariant::spatio_temporal};
  AblationReport report;
  report.seeds = cfg.seeds;
  for (std::uint64_t seed : cfg.seeds) {
    const std::vector<Clip> clips = heldout_clips(cfg, seed);
    std::vector<AblationRow> rows(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      rows[i].name = names[i];
      rows[i].seed = seed;
    }
    std::optional<DenoiserState> st;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      AblationRow& row = rows[3 + v];
      std::optional<DenoiserState> model = checkpoints(variants[v], seed);
      if (!model) {
        row.skipped = true;
        row.reason = "missing checkpoint for " + to_string(variants[v]);
        if (log) log("seed " + std::to_string(seed) + ": " + row.name + " skipped (" + row.reason + ")");
        continue;
      }
      if (log) log("seed " + std::to_string(seed) + ": evaluating " + row.name);
      row.metrics = evaluate_setup(cfg, *model, variants[v], CacheMode::splats, clips);
      if (variants[v] == NoiseVariant::spatio_temporal) st = std::move(model);
    }
    const CacheMode modes[] = {CacheMode::none, CacheMode::point_cloud};
    for (int c = 0; c < 2; ++c) {
      if (!st) {
        rows[c].skipped = true;
        rows[c].reason = "missing checkpoint for spatio_temporal";
        continue;
      }
      if (log) log("seed " + std::to_string(seed) + ": evaluating " + rows[c].name);
      rows[c].metrics = evaluate_setup(cfg, *st, NoiseVariant::spatio_temporal, modes[c], clips);
    }
    // The full model appears in both halves of the table.
    rows[2].metrics = rows[6].metrics;
    rows[2].skipped = rows[6].skipped;
    rows[2].reason = rows[6].reason;

    bool noise_ok = !rows[6].skipped;
    for (int v = 3; v < 6 && noise_ok; ++v)
      if (!rows[v].skipped && rows[v].metrics.psnr_all >= rows[6].metrics.psnr_all) noise_ok = false;
    report.noise.per_seed.push_back(noise_ok);
    report.cache.per_seed.push_back(!rows[0].skipped && !rows[2].skipped &&
                                    rows[2].metrics.psnr_long > rows[0].metrics.psnr_long);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  auto majority = [](const std::vector<bool>& v) {
    return 2 * static_cast<std::size_t>(std::count(v.begin(), v.end(), true)) > v.size();
  };
  report.noise.majority = majority(report.noise.per_seed);
  report.cache.majority = majority(report.cache.per_seed);
  return report;
}

namespace {

nlohmann::json metrics_json(const AblationMetrics& m) {
  return {{"psnr_all", m.psnr_all},   {"psnr_short", m.psnr_short}, {"ssim_short", m.ssim_short},
          {"r_dist_short", m.r_short}, {"t_dist_short", m.t_short},  {"psnr_long", m.psnr_long},
          {"ssim_long", m.ssim_long},  {"r_dist_long", m.r_long},    {"t_dist_long", m.t_long}};
}

AblationMetrics metrics_from(const nlohmann::json& j) {
  AblationMetrics m;
  m.psnr_all = j.at("psnr_all");
  m.psnr_short = j.at("psnr_short");
  m.ssim_short = j.at("ssim_short");
  m.r_short = j.at("r_dist_short");
  m.t_short = j.at("t_dist_short");
  m.psnr_long = j.at("psnr_long");
  m.ssim_long = j.at("ssim_long");
  m.r_long = j.at("r_dist_long");
  m.t_long = j.at("t_dist_long");
  return m;
}

nlohmann::json verdict_json(const Verdict& v) { return {{"per_seed", v.per_seed}, {"majority", v.majority}}; }

Verdict verdict_from(const nlohmann::json& j) {
  return {j.at("per_seed").get<std::vector<bool>>(), j.at("majority").get<bool>()};
}

}  // namespace

std::string report_to_json(const AblationReport& r) {
  nlohmann::json j;
  j["seeds"] = r.seeds;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"name", row.name},
                         {"seed", row.seed},
                         {"skipped", row.skipped},
                         {"reason", row.reason},
                         {"metrics", metrics_json(row.metrics)}});
  j["verdicts"] = {{"noise", verdict_json(r.noise)}, {"cache", verdict_json(r.cache)}};
  return j.dump(2);
}

AblationReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  AblationReport r;
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& row : j.at("rows")) {
    AblationRow a;
    a.name = row.at("name");
    a.seed = row.at("seed");
    a.skipped = row.at("skipped");
    a.reason = row.at("reason");
    a.metrics = metrics_from(row.at("metrics"));
    r.rows.push_back(a);
  }
  r.noise = verdict_from(j.at("verdicts").at("noise"));
  r.cache = verdict_from(j.at("verdicts").at("cache"));
  return r;
}

std::string report_to_csv(const AblationReport& r) {
  std::ostringstream o;
  o.precision(6);
  o << "row,seed,psnr_short,ssim_short,r_dist_short,t_dist_short,psnr_long,ssim_long,r_dist_long,t_dist_long,"
       "psnr_all\n";
  auto line = [&](const std::string& name, const std::string& seed, const AblationMetrics& m) {
    o << '"' << name << "\"," << seed << "," << m.psnr_short << "," << m.ssim_short << "," << m.r_short << ","
      << m.t_short << "," << m.psnr_long << "," << m.ssim_long << "," << m.r_long << "," << m.t_long << ","
      << m.psnr_all << "\n";
  };
  for (const auto& row : r.rows) {
    if (row.skipped)
      o << '"' << row.name << "\"," << row.seed << ",skipped,,,,,,,,\n";
    else
      line(row.name, std::to_string(row.seed), row.metrics);
  }
  for (const auto& name : ablation_row_names()) {
    AblationMetrics mean;
    int n = 0;
    for (const auto& row : r.rows) {
      if (row.name != name || row.skipped) continue;
      const auto& m = row.metrics;
      mean.psnr_all += m.psnr_all, mean.psnr_short += m.psnr_short, mean.ssim_short += m.ssim_short;
      mean.r_short += m.r_short, mean.t_short += m.t_short, mean.psnr_long += m.psnr_long;
      mean.ssim_long += m.ssim_long, mean.r_long += m.r_long, mean.t_long += m.t_long;
      ++n;
    }
    if (n == 0) continue;
    for (double* v : {&mean.psnr_all, &mean.psnr_short, &mean.ssim_short, &mean.r_short, &mean.t_short,
                      &mean.psnr_long, &mean.ssim_long, &mean.r_long, &mean.t_long})
      *v /= n;
    line(name, "mean", mean);
  }
  return o.str();
}

}  // namespace dw

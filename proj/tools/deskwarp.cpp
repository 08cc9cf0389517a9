#include "deskwarp/config.hpp"
#include "deskwarp/eval.hpp"
#include "deskwarp/infer.hpp"
#include "deskwarp/service.hpp"
#include "deskwarp/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using dw::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config_path, "Config file (JSON object or key = value lines)")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override a dotted config key, e.g. --set train.steps=100");
  if (needs_out) app->add_option("--out", c.out, "Run directory")->required();
}

/// Config file, then --set overrides.
json resolve(const Common& c) {
  json j = c.config_path.empty() ? json::object() : dw::load_config_file(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::domain_error("--set expects key=value, got '" + kv + "'");
    json v = json::parse(kv.substr(eq + 1), nullptr, false);
    if (v.is_discarded()) v = kv.substr(eq + 1);
    dw::set_dotted(j, kv.substr(0, eq), v);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* kSections[] = {"scene", "train", "session", "generate", "ablation", "serve"};
    bool known = false;
    for (const char* s : kSections) known = known || it.key() == s;
    if (!known) throw std::domain_error("config: unknown section '" + it.key() + "'");
  }
  return j;
}

json section(const json& j, const char* name) { return j.contains(name) ? j.at(name) : json::object(); }

std::string frame_name(const std::string& dir, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/frame_%04d", i);
  return dir + buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunk-wise novel view generation with warped priors and spatio-temporal noise"};
  app.set_version_flag("--version", dw::version_string());
  app.require_subcommand(1);

  // scene gen
  auto* scene_cmd = app.add_subcommand("scene", "Synthetic scenes");
  scene_cmd->require_subcommand(1);
  auto* scene_gen = scene_cmd->add_subcommand("gen", "Generate a scene and render a trajectory through it");
  Common scene_common;
  std::uint64_t scene_seed = 0;
  int scene_complexity = 3, scene_frames = 8;
  std::string scene_kind = "dolly";
  add_common(scene_gen, scene_common);
  scene_gen->add_option("--seed", scene_seed, "Scene and trajectory seed");
  scene_gen->add_option("--complexity", scene_complexity, "Number of surfaces beyond the room");
  scene_gen->add_option("--frames", scene_frames, "Trajectory length");
  scene_gen->add_option("--trajectory", scene_kind, "dolly, orbit, lateral or mixed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the denoiser");
  Common train_common;
  add_common(train_cmd, train_common);
  std::optional<int> train_steps;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> train_variant;
  train_cmd->add_option("--steps", train_steps, "Optimizer steps");
  train_cmd->add_option("--seed", train_seed, "Seed");
  train_cmd->add_option("--variant", train_variant, "full_sequence, spatial, temporal or spatio_temporal");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate frames chunk by chunk");
  Common gen_common;
  add_common(gen_cmd, gen_common);
  std::string gen_checkpoint;
  int gen_frames = 20;
  std::optional<int> gen_chunk, gen_overlap;
  std::optional<std::string> gen_cache, gen_variant;
  std::optional<double> gen_tau;
  std::uint64_t gen_scene_seed = 0;
  std::string gen_kind = "dolly";
  bool gen_extrapolate = false, gen_diag = false;
  gen_cmd->add_option("--checkpoint", gen_checkpoint, "Denoiser checkpoint; a fresh initialization when omitted");
  gen_cmd->add_option("--frames", gen_frames, "Total frames including the initial ones");
  gen_cmd->add_option("--chunk", gen_chunk, "Frames per chunk");
  gen_cmd->add_option("--overlap", gen_overlap, "History frames per chunk");
  gen_cmd->add_option("--cache-mode", gen_cache, "none, point_cloud or splats");
  gen_cmd->add_option("--variant", gen_variant, "Start-level rule");
  gen_cmd->add_option("--tau", gen_tau, "Warped-region start level");
  gen_cmd->add_option("--scene-seed", gen_scene_seed, "Scene seed");
  gen_cmd->add_option("--trajectory", gen_kind, "Trajectory kind for the target poses");
  gen_cmd->add_flag("--extrapolate", gen_extrapolate, "Ignore the target trajectory and extrapolate poses");
  gen_cmd->add_flag("--diagnostics", gen_diag, "Write priors, masks and schedules per chunk");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a generate run against ground truth");
  std::string eval_run;
  bool eval_pose = false;
  eval_cmd->add_option("--run", eval_run, "Directory written by generate")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_flag("--pose", eval_pose, "Also recover poses of generated frames");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Noise-variant and cache ablation");
  Common ablate_common;
  add_common(ablate_cmd, ablate_common);
  std::vector<std::uint64_t> ablate_seeds;
  std::optional<int> ablate_steps;
  ablate_cmd->add_option("--seeds", ablate_seeds, "Seeds");
  ablate_cmd->add_option("--steps", ablate_steps, "Training steps per variant");

  // schedule viz
  auto* sched_cmd = app.add_subcommand("schedule", "Noise schedules");
  sched_cmd->require_subcommand(1);
  auto* sched_viz = sched_cmd->add_subcommand("viz", "Export the schedule matrix as CSV");
  double viz_tau = 0.8;
  int viz_steps = 50, viz_history = 2, viz_tokens = 8;
  std::string viz_out, viz_png;
  sched_viz->add_option("--tau", viz_tau, "Warped-region start level");
  sched_viz->add_option("--steps", viz_steps, "Solver steps");
  sched_viz->add_option("--history", viz_history, "History tokens");
  sched_viz->add_option("--tokens", viz_tokens, "Tokens per chunk");
  sched_viz->add_option("--out", viz_out, "CSV path; stdout when omitted");
  sched_viz->add_option("--png", viz_png, "Heatmap PNG path");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP session API under /v1");
  Common serve_common;
  add_common(serve_cmd, serve_common, false);
  std::string serve_host = "127.0.0.1", serve_checkpoint;
  int serve_port = 8080;
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--port", serve_port, "Port");
  serve_cmd->add_option("--checkpoint", serve_checkpoint, "Denoiser checkpoint")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (scene_gen->parsed()) {
      json j = resolve(scene_common);
      dw::TrajectoryOptions topts;
      if (j.contains("scene")) {
        json s = j.at("scene");
        if (s.contains("seed")) scene_seed = s.at("seed").get<std::uint64_t>(), s.erase("seed");
        if (s.contains("complexity")) scene_complexity = s.at("complexity").get<int>(), s.erase("complexity");
        if (s.contains("trajectory")) dw::from_json(s.at("trajectory"), topts), s.erase("trajectory");
        if (!s.empty()) throw std::domain_error("scene: unknown key '" + s.begin().key() + "'");
      }
      const auto scene = dw::generate_scene(scene_seed, scene_complexity);
      const auto traj =
          dw::sample_trajectory(scene, dw::trajectory_kind_from_string(scene_kind), scene_frames, scene_seed, topts);
      fs::create_directories(scene_common.out + "/frames");
      dw::save_scene(scene_common.out + "/scene.json", scene);
      dw::save_trajectory(scene_common.out + "/trajectory.json", traj);
      for (std::size_t i = 0; i < traj.size(); ++i)
        dw::save_frame(frame_name(scene_common.out + "/frames", static_cast<int>(i)),
                       dw::render_gt(scene, traj[i].pose, traj[i].intrinsics));
      json resolved = {{"seed", scene_seed}, {"complexity", scene_complexity}, {"frames", scene_frames},
                       {"trajectory_kind", scene_kind}, {"trajectory", topts}};
      dw::write_run_config(scene_common.out, {"scene gen", scene_seed, resolved});
      std::cout << "wrote " << traj.size() << " frames to " << scene_common.out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      json j = resolve(train_common);
      dw::TrainConfig cfg;
      dw::from_json(section(j, "train"), cfg);
      if (train_steps) cfg.steps = *train_steps;
      if (train_seed) cfg.seed = *train_seed;
      if (train_variant) cfg.variant = dw::noise_variant_from_string(*train_variant);
      cfg.validate();
      fs::create_directories(train_common.out);
      dw::write_run_config(train_common.out, {"train", cfg.seed, {{"train", cfg}}});
      const auto pool = dw::build_scene_pool(cfg);
      const int every = std::max(1, cfg.steps / 20);
      const auto r = dw::train_loop(cfg, pool, [&](int step, double loss) {
        if (step % every == 0 || step + 1 == cfg.steps) std::cerr << "step " << step << " loss " << loss << "\n";
      });
      dw::save_denoiser(train_common.out + "/model.bin", r.state);
      write_text(train_common.out + "/loss.csv", dw::loss_trace_csv(r.loss_trace));
      std::cout << "checkpoint " << train_common.out << "/model.bin\n";
      return 0;
    }

    if (gen_cmd->parsed()) {
      json j = resolve(gen_common);
      dw::SessionConfig cfg;
      dw::from_json(section(j, "session"), cfg);
      if (gen_chunk) cfg.chunk = *gen_chunk;
      if (gen_overlap) cfg.overlap = *gen_overlap;
      if (gen_cache) cfg.cache_mode = dw::cache_mode_from_string(*gen_cache);
      if (gen_variant) cfg.variant = dw::noise_variant_from_string(*gen_variant);
      if (gen_tau) cfg.noise.tau = *gen_tau;
      dw::TrajectoryOptions topts;
      int complexity = 3;
      if (j.contains("generate")) {
        json g = j.at("generate");
        if (g.contains("trajectory")) dw::from_json(g.at("trajectory"), topts), g.erase("trajectory");
        if (g.contains("complexity")) complexity = g.at("complexity").get<int>(), g.erase("complexity");
        if (!g.empty()) throw std::domain_error("generate: unknown key '" + g.begin().key() + "'");
      }
      cfg.validate();
      if (gen_frames < cfg.chunk) throw std::domain_error("--frames must be at least --chunk");

      dw::DenoiserState model;
      if (!gen_checkpoint.empty()) {
        model = dw::load_denoiser(gen_checkpoint);
      } else {
        dw::DenoiserConfig mc;
        mc.patch = cfg.patch;
        mc.latent_channels = 3 * cfg.patch * cfg.patch;
        mc.frames = cfg.chunk;
        model = dw::init_denoiser(mc, cfg.seed);
      }
      if (model.config.patch != cfg.patch) throw std::domain_error("checkpoint patch differs from session patch");

      const auto scene = dw::generate_scene(gen_scene_seed, complexity);
      const auto traj = dw::sample_trajectory(scene, dw::trajectory_kind_from_string(gen_kind), gen_frames,
                                              gen_scene_seed, topts);
      std::vector<dw::RgbdFrame> initial;
      for (int i = 0; i < cfg.overlap; ++i) initial.push_back(dw::render_gt(scene, traj[i].pose, traj[i].intrinsics));
      dw::GenerationSession session(initial, cfg, dw::denoiser_velocity(model), dw::scene_depth(scene));
      std::optional<dw::Trajectory> targets;
      if (!gen_extrapolate) targets = traj;
      const dw::RunResult r = dw::run(session, gen_frames, targets);

      const std::string out = gen_common.out;
      fs::create_directories(out + "/frames");
      for (std::size_t i = 0; i < r.frames.size(); ++i) {
        dw::write_png(frame_name(out + "/frames", static_cast<int>(i)) + ".png", r.frames[i].rgb);
      }
      dw::save_trajectory(out + "/trajectory.json", session.trajectory());
      dw::save_trajectory(out + "/target_trajectory.json", traj);
      dw::save_scene(out + "/scene.json", scene);
      if (gen_diag)
        for (const auto& d : r.chunks) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "/chunks/chunk_%03d", d.chunk_index);
          dw::save_diagnostics(out + buf, d);
        }
      json resolved = {{"session", cfg},
                       {"frames", gen_frames},
                       {"initial_frames", cfg.overlap},
                       {"scene_seed", gen_scene_seed},
                       {"complexity", complexity},
                       {"trajectory_kind", gen_kind},
                       {"trajectory", topts},
                       {"extrapolate", gen_extrapolate},
                       {"checkpoint", gen_checkpoint}};
      dw::write_run_config(out, {"generate", cfg.seed, resolved});
      std::cout << "wrote " << r.frames.size() << " frames to " << out << "/frames\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const json run = json::parse(read_text(eval_run + "/run.json"));
      if (run.at("command") != "generate") throw std::domain_error("eval: run directory was not written by generate");
      const int initial = run.at("config").at("initial_frames").get<int>();
      const auto scene = dw::load_scene(eval_run + "/scene.json");
      const auto traj = dw::load_trajectory(eval_run + "/trajectory.json");
      json frames = json::array();
      double psnr_sum = 0.0, ssim_sum = 0.0;
      int n = 0;
      std::vector<dw::CameraPose> recovered, truth;
      for (std::size_t i = initial; i < traj.size(); ++i) {
        const dw::Image gen = dw::read_png(frame_name(eval_run + "/frames", static_cast<int>(i)) + ".png");
        const dw::RgbdFrame gt = dw::render_gt(scene, traj[i].pose, traj[i].intrinsics);
        const double p = std::min(100.0, dw::psnr(gen, gt.rgb));
        const double s = dw::ssim(gen, gt.rgb);
        json fj = {{"frame", i}, {"psnr", p}, {"ssim", s}};
        if (eval_pose) {
          const auto rec = dw::recover_pose(gen, scene, traj[i].pose, traj[i].intrinsics);
          fj["pose_residual"] = rec.residual;
          fj["pose_converged"] = rec.converged;
          recovered.push_back(rec.pose);
          truth.push_back(traj[i].pose);
        }
        frames.push_back(fj);
        psnr_sum += p;
        ssim_sum += s;
        ++n;
      }
      json metrics = {{"frames", frames}, {"psnr", n ? psnr_sum / n : 0.0}, {"ssim", n ? ssim_sum / n : 0.0}};
      if (eval_pose && recovered.size() >= 2) {
        const auto e = dw::trajectory_error(recovered, truth);
        metrics["r_dist"] = e.rotation;
        metrics["t_dist"] = e.translation;
      }
      write_text(eval_run + "/metrics.json", metrics.dump(2) + "\n");
      std::cout << "psnr " << metrics["psnr"].get<double>() << " ssim " << metrics["ssim"].get<double>() << "\n";
      return 0;
    }

    if (ablate_cmd->parsed()) {
      json j = resolve(ablate_common);
      dw::AblationConfig cfg;
      dw::from_json(section(j, "ablation"), cfg);
      if (!ablate_seeds.empty()) cfg.seeds = ablate_seeds;
      if (ablate_steps) cfg.train.steps = *ablate_steps;
      const std::string out = ablate_common.out;
      fs::create_directories(out + "/checkpoints");
      dw::write_run_config(out, {"ablate", cfg.seeds.empty() ? 0 : cfg.seeds.front(), {{"ablation", cfg}}});
      const auto provider = [&](dw::NoiseVariant v, std::uint64_t seed) -> std::optional<dw::DenoiserState> {
        dw::TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.variant = v;
        std::cerr << "training " << dw::to_string(v) << " seed " << seed << "\n";
        const auto r = dw::train_loop(tc, dw::build_scene_pool(tc));
        const std::string stem = out + "/checkpoints/" + dw::to_string(v) + "_seed" + std::to_string(seed);
        dw::save_denoiser(stem + ".bin", r.state);
        write_text(stem + "_loss.csv", dw::loss_trace_csv(r.loss_trace));
        return r.state;
      };
      const auto report = dw::ablation_suite(cfg, provider, [](const std::string& m) { std::cerr << m << "\n"; });
      write_text(out + "/report.json", dw::report_to_json(report));
      write_text(out + "/report.csv", dw::report_to_csv(report));
      std::cout << "noise verdict " << (report.noise.majority ? "pass" : "fail") << ", cache verdict "
                << (report.cache.majority ? "pass" : "fail") << "\n";
      return 0;
    }

    if (sched_viz->parsed()) {
      dw::InferenceNoiseConfig nc;
      nc.tau = viz_tau;
      nc.steps = viz_steps;
      nc.validate();
      const auto m = dw::schedule_matrix_for_layout(viz_tokens, viz_history, nc);
      const std::string csv = dw::schedule_to_csv(m);
      if (viz_out.empty())
        std::cout << csv;
      else
        write_text(viz_out, csv);
      if (!viz_png.empty()) dw::write_png(viz_png, dw::schedule_heatmap(m));
      return 0;
    }

    if (serve_cmd->parsed()) {
      json j = resolve(serve_common);
      dw::ServiceOptions opts;
      dw::from_json(section(j, "session"), opts.session);
      if (j.contains("serve")) {
        json s = j.at("serve");
        for (auto it = s.begin(); it != s.end(); ++it) {
          if (it.key() == "max_translation") opts.max_translation = it->get<double>();
          else if (it.key() == "max_rotation_degrees") opts.max_rotation_degrees = it->get<double>();
          else if (it.key() == "orbit_pivot") opts.orbit_pivot = it->get<double>();
          else if (it.key() == "scene_complexity") opts.scene_complexity = it->get<int>();
          else if (it.key() == "upload_depth") opts.upload_depth = it->get<double>();
          else if (it.key() == "trajectory") dw::from_json(*it, opts.trajectory);
          else throw std::domain_error("serve: unknown key '" + it.key() + "'");
        }
      }
      if (!serve_checkpoint.empty()) opts.model = dw::load_denoiser(serve_checkpoint);
      dw::Service service(std::move(opts));
      std::cerr << "listening on http://" << serve_host << ":" << serve_port << "/v1\n";
      dw::serve(service, serve_host, serve_port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

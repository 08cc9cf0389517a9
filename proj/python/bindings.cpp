#include "deskwarp/config.hpp"
#include "deskwarp/eval.hpp"
#include "deskwarp/infer.hpp"
#include "deskwarp/train.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dw;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

void require_ndim(const py::buffer_info& b, py::ssize_t ndim, const char* what) {
  if (b.ndim != ndim) throw std::domain_error(std::string(what) + ": expected a " + std::to_string(ndim) + "-d array");
}

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Image image_from(const Array& a) {
  const auto b = a.request();
  require_ndim(b, 3, "image");
  Image img(static_cast<int>(b.shape[1]), static_cast<int>(b.shape[0]), static_cast<int>(b.shape[2]));
  std::copy_n(a.data(), img.data.size(), img.data.begin());
  return img;
}

Array image_to(const Image& img) { return to_array(img.data, {img.height, img.width, img.channels}); }

std::vector<Image> images_from(const Array& a) {
  const auto b = a.request();
  require_ndim(b, 4, "frames");
  std::vector<Image> out;
  const std::size_t stride = static_cast<std::size_t>(b.shape[1] * b.shape[2] * b.shape[3]);
  for (py::ssize_t t = 0; t < b.shape[0]; ++t) {
    Image img(static_cast<int>(b.shape[2]), static_cast<int>(b.shape[1]), static_cast<int>(b.shape[3]));
    std::copy_n(a.data() + t * stride, stride, img.data.begin());
    out.push_back(std::move(img));
  }
  return out;
}

Array images_to(const std::vector<Image>& imgs) {
  if (imgs.empty()) return Array(std::vector<py::ssize_t>{0, 0, 0, 0});
  const Image& f = imgs.front();
  Array out({static_cast<py::ssize_t>(imgs.size()), static_cast<py::ssize_t>(f.height),
             static_cast<py::ssize_t>(f.width), static_cast<py::ssize_t>(f.channels)});
  double* dst = out.mutable_data();
  for (const auto& img : imgs) dst = std::copy(img.data.begin(), img.data.end(), dst);
  return out;
}

LatentChunk latent_from(const Array& a, int patch) {
  const auto b = a.request();
  require_ndim(b, 4, "latent");
  LatentChunk z(static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]), static_cast<int>(b.shape[2]),
                static_cast<int>(b.shape[3]), patch);
  std::copy_n(a.data(), z.data.size(), z.data.begin());
  return z;
}

Array latent_to(const LatentChunk& z) { return to_array(z.data, {z.frames, z.channels, z.height, z.width}); }

LatentMask mask_from(const ByteArray& a) {
  const auto b = a.request();
  require_ndim(b, 3, "mask");
  LatentMask m(static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]), static_cast<int>(b.shape[2]));
  std::copy_n(a.data(), m.data.size(), m.data.begin());
  return m;
}

SigmaMap sigma_from(const Array& a) {
  const auto b = a.request();
  require_ndim(b, 3, "sigma");
  SigmaMap s(static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]), static_cast<int>(b.shape[2]));
  std::copy_n(a.data(), s.data.size(), s.data.begin());
  return s;
}

Array sigma_to(const SigmaMap& s) { return to_array(s.data, {s.frames, s.height, s.width}); }

Mat3 mat3_from(const Array& a) {
  const auto b = a.request();
  if (b.ndim != 2 || b.shape[0] != 3 || b.shape[1] != 3) throw std::domain_error("expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = a.data()[r * 3 + c];
  return m;
}

CameraPose pose_from(const Array& a) {
  const auto b = a.request();
  if (b.ndim != 2 || b.shape[0] != 4 || b.shape[1] != 4) throw std::domain_error("pose: expected a 4x4 matrix");
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = a.data()[i * 4 + j];
    t[i] = a.data()[i * 4 + 3];
  }
  return CameraPose::from_matrix(r, t);
}

Array pose_to(const CameraPose& p) {
  Array out({4, 4});
  double* d = out.mutable_data();
  std::fill_n(d, 16, 0.0);
  const Mat3 r = p.rotation_matrix();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d[i * 4 + j] = r(i, j);
    d[i * 4 + 3] = p.translation[i];
  }
  d[15] = 1.0;
  return out;
}

py::dict intrinsics_to(const CameraIntrinsics& k) {
  py::dict d;
  d["fx"] = k.fx, d["fy"] = k.fy, d["cx"] = k.cx, d["cy"] = k.cy, d["width"] = k.width, d["height"] = k.height;
  return d;
}

CameraIntrinsics intrinsics_from(const py::dict& d) {
  CameraIntrinsics k{d["fx"].cast<double>(), d["fy"].cast<double>(), d["cx"].cast<double>(),
                     d["cy"].cast<double>(), d["width"].cast<int>(),  d["height"].cast<int>()};
  k.validate();
  return k;
}

py::tuple trajectory_to(const Trajectory& traj) {
  py::list poses;
  for (const auto& f : traj.frames()) poses.append(pose_to(f.pose));
  return py::make_tuple(poses, intrinsics_to(traj[0].intrinsics));
}

Trajectory trajectory_from(const std::vector<Array>& poses, const py::dict& intrinsics) {
  const CameraIntrinsics k = intrinsics_from(intrinsics);
  Trajectory traj;
  for (std::size_t i = 0; i < poses.size(); ++i) traj.push_back({static_cast<int>(i), pose_from(poses[i]), k});
  return traj;
}

std::vector<Vec3> points_from(const Array& a) {
  const auto b = a.request();
  if (b.ndim != 2 || b.shape[1] != 3) throw std::domain_error("points: expected an (n, 3) array");
  std::vector<Vec3> out;
  for (py::ssize_t i = 0; i < b.shape[0]; ++i) out.emplace_back(a.data()[3 * i], a.data()[3 * i + 1], a.data()[3 * i + 2]);
  return out;
}

template <class T>
T config_from(const std::string& text) {
  T c;
  if (!text.empty()) from_json(parse_config_text(text), c);
  c.validate();
  return c;
}

py::dict run_generation(const SyntheticScene& scene, const std::string& checkpoint, const std::string& session_json,
                        const std::string& trajectory_kind, int total_frames, int initial_frames,
                        std::uint64_t trajectory_seed) {
  const SessionConfig cfg = config_from<SessionConfig>(session_json);
  const DenoiserState model = checkpoint.empty() ? init_denoiser(DenoiserConfig{}, 0) : load_denoiser(checkpoint);
  const Trajectory traj = sample_trajectory(scene, trajectory_kind_from_string(trajectory_kind), total_frames,
                                            trajectory_seed, TrajectoryOptions{});
  if (initial_frames < 1 || initial_frames > total_frames) throw std::domain_error("generate: bad initial frame count");
  std::vector<RgbdFrame> init;
  for (int i = 0; i < initial_frames; ++i) init.push_back(render_gt(scene, traj[i].pose, traj[i].intrinsics));
  RunResult r;
  {
    py::gil_scoped_release release;
    GenerationSession session(init, cfg, denoiser_velocity(model), scene_depth(scene));
    r = run(session, total_frames, traj);
  }
  std::vector<Image> frames, truth;
  py::list poses;
  for (std::size_t i = 0; i < r.frames.size(); ++i) {
    frames.push_back(r.frames[i].rgb);
    truth.push_back(render_gt(scene, traj[i].pose, traj[i].intrinsics).rgb);
    poses.append(pose_to(r.frames[i].pose));
  }
  py::dict out;
  out["frames"] = images_to(frames);
  out["ground_truth"] = images_to(truth);
  out["poses"] = poses;
  out["chunks"] = r.chunks.size();
  return out;
}

}  // namespace

PYBIND11_MODULE(_deskwarp, m) {
  m.doc() = "Desk-scale warp-and-denoise novel view generation";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const std::domain_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  py::class_<SyntheticScene>(m, "Scene")
      .def_property_readonly("seed", [](const SyntheticScene& s) { return s.seed; })
      .def_property_readonly("surface_count", [](const SyntheticScene& s) { return s.surfaces.size(); })
      .def("to_json", [](const SyntheticScene& s) { return scene_to_json(s); })
      .def_static("from_json", [](const std::string& text) { return scene_from_json(text); });

  m.def("generate_scene", &generate_scene, py::arg("seed"), py::arg("complexity") = 3);
  m.def(
      "sample_trajectory",
      [](const SyntheticScene& s, const std::string& kind, int length, std::uint64_t seed) {
        return trajectory_to(sample_trajectory(s, trajectory_kind_from_string(kind), length, seed, TrajectoryOptions{}));
      },
      py::arg("scene"), py::arg("kind"), py::arg("length"), py::arg("seed") = 0,
      "Returns (list of 4x4 camera-to-world poses, intrinsics dict).");
  m.def(
      "render",
      [](const SyntheticScene& s, const Array& pose, const py::dict& k) {
        const RgbdFrame f = render_gt(s, pose_from(pose), intrinsics_from(k));
        Array depth = to_array(f.depth.data, {f.depth.height, f.depth.width});
        return py::make_tuple(image_to(f.rgb), depth);
      },
      py::arg("scene"), py::arg("pose"), py::arg("intrinsics"), "Returns (rgb [H, W, 3], depth [H, W]).");
  m.def(
      "extrapolate",
      [](const std::vector<Array>& poses, const py::dict& k, int count, int window) {
        const Trajectory out = extrapolate_trajectory(trajectory_from(poses, k), count, window);
        py::list ahead;
        for (std::size_t i = poses.size(); i < out.size(); ++i) ahead.append(pose_to(out[i].pose));
        return ahead;
      },
      py::arg("poses"), py::arg("intrinsics"), py::arg("count"), py::arg("window") = 20,
      "Continues the poses by `count` frames at their mean velocity.");
  m.def(
      "plucker",
      [](const Array& pose, const py::dict& k) {
        const PluckerMap p = plucker_map(pose_from(pose), intrinsics_from(k));
        return to_array(p.data, {6, p.height, p.width});
      },
      py::arg("pose"), py::arg("intrinsics"));

  m.def(
      "encode", [](const Array& frames, int patch) { return latent_to(encode(images_from(frames), patch)); },
      py::arg("frames"), py::arg("patch") = 4, "[T, H, W, 3] images to [T, 3 s^2, H / s, W / s] latents.");
  m.def(
      "decode", [](const Array& z, int patch) { return images_to(decode(latent_from(z, patch))); }, py::arg("latent"),
      py::arg("patch") = 4);
  m.def(
      "composite",
      [](const Array& z_warp, const Array& z_gt, const ByteArray& mask) {
        return latent_to(composite(latent_from(z_warp, 1), latent_from(z_gt, 1), mask_from(mask)));
      },
      py::arg("z_warp"), py::arg("z_gt"), py::arg("mask"));
  m.def(
      "build_sigma_map",
      [](const ByteArray& mask, const std::vector<double>& warped, const std::vector<double>& filled) {
        return sigma_to(build_sigma_map(mask_from(mask), warped, filled));
      },
      py::arg("mask"), py::arg("sigma_warped"), py::arg("sigma_filled"));
  m.def(
      "apply_noise",
      [](const Array& z, const Array& sigma, const Array& eps) {
        return latent_to(apply_noise(latent_from(z, 1), sigma_from(sigma), latent_from(eps, 1)));
      },
      py::arg("z"), py::arg("sigma"), py::arg("eps"));
  m.def(
      "build_start_map",
      [](const ByteArray& mask, double tau, double sigma_max, int history) {
        InferenceNoiseConfig cfg;
        cfg.tau = tau;
        cfg.sigma_max = sigma_max;
        return sigma_to(build_start_map(mask_from(mask), cfg, history));
      },
      py::arg("mask"), py::arg("tau") = 0.8, py::arg("sigma_max") = 1.0, py::arg("history") = 0);
  m.def(
      "schedule_csv",
      [](int tokens, int history, double tau, int steps) {
        InferenceNoiseConfig cfg;
        cfg.tau = tau;
        cfg.steps = steps;
        return schedule_to_csv(schedule_matrix_for_layout(tokens, history, cfg));
      },
      py::arg("tokens") = 8, py::arg("history") = 2, py::arg("tau") = 0.8, py::arg("steps") = 50);

  m.def(
      "psnr", [](const Array& a, const Array& b) { return psnr(image_from(a), image_from(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "ssim", [](const Array& a, const Array& b) { return ssim(image_from(a), image_from(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "kabsch",
      [](const Array& src, const Array& dst) {
        const RigidTransform t = kabsch(points_from(src), points_from(dst));
        Array r({3, 3});
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) r.mutable_data()[i * 3 + j] = t.rotation(i, j);
        return py::make_tuple(r, to_array({t.translation[0], t.translation[1], t.translation[2]}, {3}));
      },
      py::arg("src"), py::arg("dst"), "Returns (R, t) minimizing |R src + t - dst|.");
  m.def(
      "r_dist", [](const Array& a, const Array& b) { return r_dist(mat3_from(a), mat3_from(b)); }, py::arg("rg"),
      py::arg("rt"));
  m.def(
      "recover_pose",
      [](const Array& image, const SyntheticScene& s, const Array& init, const py::dict& k) {
        const PoseRecovery r = recover_pose(image_from(image), s, pose_from(init), intrinsics_from(k));
        return py::make_tuple(pose_to(r.pose), r.residual, r.converged);
      },
      py::arg("image"), py::arg("scene"), py::arg("init"), py::arg("intrinsics"));

  m.def(
      "train",
      [](const std::string& config_json, const std::string& checkpoint,
         const std::function<void(int, double)>& progress) {
        const TrainConfig cfg = config_from<TrainConfig>(config_json);
        TrainResult r;
        {
          py::gil_scoped_release release;
          const auto pool = build_scene_pool(cfg);
          TrainProgress cb;
          if (progress)
            cb = [&](int step, double loss) {
              py::gil_scoped_acquire acquire;
              progress(step, loss);
            };
          r = train_loop(cfg, pool, cb);
        }
        if (!checkpoint.empty()) save_denoiser(checkpoint, r.state);
        return r.loss_trace;
      },
      py::arg("config_json") = "", py::arg("checkpoint") = "", py::arg("progress") = nullptr,
      "Trains a denoiser and returns the loss trace; saves it when `checkpoint` is set.");
  m.def("generate", &run_generation, py::arg("scene"), py::arg("checkpoint") = "", py::arg("session_json") = "",
        py::arg("trajectory") = "dolly", py::arg("total_frames") = 14, py::arg("initial_frames") = 2,
        py::arg("trajectory_seed") = 0,
        "Generates a sequence along a sampled trajectory. An empty checkpoint uses a fresh network.");
  m.def("version", &version_string);
}

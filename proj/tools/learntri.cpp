// learntri command-line tool.
//
// Exit codes: 0 success, 1 runtime failure (every joint failed, gradcheck
// over tolerance, ...), 2 bad flags or arguments, 3 unreadable or malformed
// files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "learntri/error.hpp"
#include "learntri/eval.hpp"
#include "learntri/gradcheck.hpp"
#include "learntri/io.hpp"
#include "learntri/learn.hpp"
#include "learntri/parallel.hpp"
#include "learntri/pipeline.hpp"
#include "learntri/random.hpp"
#include "learntri/synth.hpp"

#ifndef LEARNTRI_VERSION
#define LEARNTRI_VERSION "unknown"
#endif

namespace {

namespace fs = std::filesystem;
using learntri::Error;
using learntri::ErrorCode;
using learntri::io::Json;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::BadConfidence:
    case ErrorCode::SpecMismatch:
      return kExitUsage;
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
      return kExitIo;
    default:
      return kExitFailure;
  }
}

[[noreturn]] void usage_error(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, what);
}

// Manifest written beside every output.
class Manifest {
 public:
  Manifest(const CLI::App& app, std::string command)
      : app_(app), command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write(const fs::path& path) const {
    Json config = Json::object();
    for (const CLI::Option* opt : app_.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->get_expected_max() == 0) {
        config[name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        const auto& r = opt->results();
        config[name] = r.size() == 1 ? Json(r.front()) : Json(r);
      } else if (!opt->get_default_str().empty()) {
        config[name] = opt->get_default_str();
      }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json m{{"command", command_},
           {"tool_version", LEARNTRI_VERSION},
           {"seed", seed_ ? Json(*seed_) : Json(nullptr)},
           {"config", std::move(config)},
           {"inputs", inputs_},
           {"outputs", outputs_},
           {"wall_clock_s", seconds}};
    learntri::io::write_json(path, m);
  }

 private:
  const CLI::App& app_;
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

fs::path manifest_for(const fs::path& output) {
  return output.parent_path() / (output.stem().string() + ".manifest.json");
}

// Flags shared by commands running the volumetric pipeline.
struct VolumeFlags {
  std::string aggregation = "softmax";
  double side_length = 2.5;
  int resolution = 64;
  double temperature = 0.0;
  double heatmap_sigma = learntri::kDefaultHeatmapSigma;
  int heatmap_size = learntri::kDefaultHeatmapSize;
  bool refine = false;
  CLI::Option* temperature_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--aggregation", aggregation, "sum, conf or softmax")
        ->check(CLI::IsMember({"sum", "conf", "softmax"}))
        ->capture_default_str();
    cmd.add_option("--L,--side-length", side_length, "Cube side in meters")->capture_default_str();
    cmd.add_option("--N,--resolution", resolution, "Voxels per side")->capture_default_str();
    temperature_opt = cmd.add_option("--temperature", temperature,
                                     "Volumetric inverse temperature (default depends on mode)");
    cmd.add_option("--heatmap-sigma", heatmap_sigma, "Rendered Gaussian sigma in heatmap pixels")
        ->capture_default_str();
    cmd.add_option("--heatmap-size", heatmap_size, "Rendered heatmap side in pixels")
        ->capture_default_str();
    cmd.add_flag("--refine", refine, "Apply the smoothing refiner to the aggregated volume");
  }

  learntri::VolumetricOptions options() const {
    learntri::VolumetricOptions o;
    o.volume.aggregation = learntri::parse_aggregation(aggregation);
    o.volume.side_length = side_length;
    o.volume.resolution = resolution;
    if (temperature_opt->count() > 0) o.volume.inverse_temperature = temperature;
    if (refine) o.volume.refiner = learntri::refine_volume;
    o.heatmap_sigma = heatmap_sigma;
    o.crop.heatmap_width = heatmap_size;
    o.crop.heatmap_height = heatmap_size;
    return o;
  }
};

struct RansacFlags {
  learntri::RansacConfig cfg;

  void add(CLI::App& cmd) {
    cmd.add_option("--ransac-iterations", cfg.iterations)->capture_default_str();
    cmd.add_option("--huber-delta", cfg.huber_delta, "Huber threshold in pixels")
        ->capture_default_str();
    cmd.add_option("--inlier-threshold", cfg.inlier_threshold, "Inlier residual in pixels")
        ->capture_default_str();
  }
};

struct Dataset {
  learntri::Rig rig;
  std::vector<learntri::Frame> frames;
};

Dataset load_dataset(const fs::path& cameras, const fs::path& keypoints, Manifest& m) {
  Dataset d;
  d.rig = learntri::io::rig_from_json(learntri::io::read_json(cameras));
  m.input(cameras);
  d.frames = learntri::io::frames_from_json(learntri::io::read_json(keypoints), d.rig);
  m.input(keypoints);
  return d;
}

void load_ground_truth(Dataset& d, const fs::path& gt, Manifest& m) {
  learntri::io::attach_ground_truth(d.frames, learntri::io::poses_from_json(learntri::io::read_json(gt)));
  m.input(gt);
}

std::size_t total_joints(const std::vector<learntri::FrameEstimate>& est) {
  std::size_t n = 0;
  for (const auto& e : est) n += e.joints.size();
  return n;
}

std::size_t total_failures(const std::vector<learntri::FrameEstimate>& est) {
  std::size_t n = 0;
  for (const auto& e : est) n += e.failed_joints();
  return n;
}

int finish_estimates(const std::vector<learntri::FrameEstimate>& est, const learntri::Rig& rig,
                     std::size_t pelvis, const fs::path& out, Manifest& m) {
  learntri::io::write_json(out, learntri::io::estimates_to_json(est, rig, pelvis));
  m.output(out);
  m.write(manifest_for(out));
  const std::size_t joints = total_joints(est);
  const std::size_t failed = total_failures(est);
  std::printf("%zu frames, %zu/%zu joints estimated\n", est.size(), joints - failed, joints);
  if (joints > 0 && failed == joints) {
    std::fprintf(stderr, "error: every joint failed\n");
    return kExitFailure;
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateCmd {
  learntri::SceneConfig scene;
  double radius = 4.0;
  double height = 1.5;
  int image_size = learntri::kDefaultImageSize;
  bool heatmaps = false;
  int heatmap_size = learntri::kDefaultHeatmapSize;
  double heatmap_sigma = learntri::kDefaultHeatmapSigma;
  double heatmap_support = learntri::kDefaultHeatmapSupport;
  fs::path out;
  int threads = 1;

  void add(CLI::App& cmd) {
    cmd.add_option("--cameras", scene.num_cameras, "Cameras on the ring")->capture_default_str();
    cmd.add_option("--frames", scene.num_frames)->capture_default_str();
    cmd.add_option("--joints", scene.num_joints)->capture_default_str();
    cmd.add_option("--noise", scene.pixel_noise_sigma, "Keypoint noise sigma in pixels")
        ->capture_default_str();
    cmd.add_option("--outlier-rate", scene.outlier_rate)->capture_default_str();
    cmd.add_option("--outlier-shift", scene.outlier_shift, "Outlier displacement in pixels")
        ->capture_default_str();
    cmd.add_option("--camera-outlier-rates", scene.camera_outlier_rates,
                   "Per-camera outlier rates (overrides --outlier-rate)")
        ->delimiter(',');
    cmd.add_option("--occlusion-rate", scene.occlusion_rate)->capture_default_str();
    cmd.add_option("--root-spread", scene.root_spread, "Horizontal pelvis range in meters")
        ->capture_default_str();
    cmd.add_option("--radius", radius, "Ring radius in meters")->capture_default_str();
    cmd.add_option("--height", height, "Camera height in meters")->capture_default_str();
    cmd.add_option("--image-size", image_size)->capture_default_str();
    cmd.add_flag("--heatmaps", heatmaps, "Also write HMAP heatmaps and heatmaps/index.json");
    cmd.add_option("--heatmap-size", heatmap_size)->capture_default_str();
    cmd.add_option("--heatmap-sigma", heatmap_sigma)->capture_default_str();
    cmd.add_option("--heatmap-support", heatmap_support, "Gaussian cutoff in sigmas")
        ->capture_default_str();
    cmd.add_option("--seed", scene.seed)->required();
    cmd.add_option("--out", out, "Output directory")->required();
    cmd.add_option("--threads", threads)->capture_default_str();
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "simulate");
    m.seed(scene.seed);
    scene.validate();
    if (image_size < 1) usage_error("--image-size must be positive");
    const auto rig = learntri::make_ring_rig(scene.num_cameras, radius, height, scene.center, image_size);
    const auto frames = learntri::generate_frames(rig, scene);

    std::vector<learntri::Pose3D> poses;
    for (const auto& f : frames) poses.push_back(*f.gt_pose);
    const auto write = [&](const char* name, const Json& j) {
      learntri::io::write_json(out / name, j);
      m.output(out / name);
    };
    write("cameras.json", learntri::io::rig_to_json(rig));
    write("keypoints.json", learntri::io::keypoints_to_json(rig, frames));
    write("gt_poses.json", learntri::io::poses_to_json(poses));

    if (heatmaps) {
      learntri::CropPolicy crop;
      crop.heatmap_width = heatmap_size;
      crop.heatmap_height = heatmap_size;
      std::vector<Json> entries(frames.size());
      learntri::parallel_for(frames.size(), threads, [&](std::size_t f) {
        const auto views =
            learntri::render_frame_heatmaps(frames[f], rig, crop, heatmap_sigma, heatmap_support);
        entries[f] = learntri::io::write_frame_heatmaps(out, f, views);
      });
      write("heatmaps/index.json", Json{{"frames", entries},
                                        {"width", heatmap_size},
                                        {"height", heatmap_size},
                                        {"sigma", heatmap_sigma},
                                        {"support", heatmap_support}});
    }
    m.write(out / "manifest.json");
    std::printf("wrote %zu frames from %zu cameras to %s\n", frames.size(), rig.size(),
                out.string().c_str());
    return 0;
  }
};

// ------------------------------------------------------------- triangulate

struct TriangulateCmd {
  std::string method = "dlt";
  fs::path cameras, keypoints, weights, out;
  std::uint64_t seed = 0;
  std::size_t pelvis = learntri::kTemplatePelvis;
  int threads = 1;
  RansacFlags ransac;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* weights_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--method", method)
        ->check(CLI::IsMember({"dlt", "weighted", "ransac"}))
        ->capture_default_str();
    cmd.add_option("--cameras", cameras)->required();
    cmd.add_option("--keypoints", keypoints)->required();
    weights_opt = cmd.add_option("--weights", weights, "Weights file (weighted; default uniform)");
    cmd.add_option("--out", out, "Output poses.json")->required();
    seed_opt = cmd.add_option("--seed", seed, "Required for ransac");
    cmd.add_option("--pelvis", pelvis)->capture_default_str();
    cmd.add_option("--threads", threads)->capture_default_str();
    ransac.add(cmd);
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "triangulate");
    if (method == "ransac" && seed_opt->count() == 0) usage_error("--seed is required for ransac");
    if (weights_opt->count() > 0 && method != "weighted") {
      usage_error("--weights only applies to --method weighted");
    }
    if (seed_opt->count() > 0) m.seed(seed);
    auto d = load_dataset(cameras, keypoints, m);
    std::optional<Eigen::MatrixXd> w;
    if (method == "weighted" && weights_opt->count() > 0) {
      w = learntri::io::effective_weights_from_json(learntri::io::read_json(weights), d.rig);
      m.input(weights);
    }
    ransac.cfg.seed = seed;
    ransac.cfg.validate();

    std::vector<learntri::FrameEstimate> est(d.frames.size());
    learntri::parallel_for(d.frames.size(), threads, [&](std::size_t f) {
      const auto& frame = d.frames[f];
      if (method == "ransac") {
        auto cfg = ransac.cfg;
        cfg.seed = learntri::mix_seed(seed, f);
        est[f] = learntri::estimate_ransac(d.rig, frame, cfg);
      } else if (w) {
        if (static_cast<std::size_t>(w->cols()) != frame.num_joints() && w->cols() != 1) {
          throw Error(ErrorCode::InvalidArgument, "weights do not match the joint count");
        }
        const Eigen::MatrixXd full =
            w->cols() == 1 ? Eigen::MatrixXd(w->replicate(1, static_cast<Eigen::Index>(frame.num_joints())))
                           : *w;
        est[f] = learntri::estimate_algebraic(d.rig, frame, &full);
      } else {
        est[f] = learntri::estimate_algebraic(d.rig, frame);
      }
    });
    return finish_estimates(est, d.rig, pelvis, out, m);
  }
};

// -------------------------------------------------------------- volumetric

struct VolumetricCmd {
  fs::path cameras, keypoints, heatmaps, anchor_file, weights, out;
  std::string anchor = "algebraic";
  std::string yaw = "0";
  std::vector<double> confidences;
  std::uint64_t seed = 0;
  std::size_t pelvis = learntri::kTemplatePelvis;
  int threads = 1;
  VolumeFlags volume;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* keypoints_opt = nullptr;
  CLI::Option* heatmaps_opt = nullptr;
  CLI::Option* weights_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--cameras", cameras)->required();
    keypoints_opt = cmd.add_option("--keypoints", keypoints);
    heatmaps_opt = cmd.add_option("--heatmaps", heatmaps, "heatmaps/index.json from simulate");
    cmd.add_option("--anchor", anchor, "algebraic or file")
        ->check(CLI::IsMember({"algebraic", "file"}))
        ->capture_default_str();
    cmd.add_option("--anchor-file", anchor_file, "Poses file whose pelvis anchors each frame");
    cmd.add_option("--yaw", yaw, "0, random, or an angle in radians")->capture_default_str();
    weights_opt = cmd.add_option("--weights", weights, "Fitted camera confidences for conf mode");
    cmd.add_option("--confidences", confidences, "Per-camera confidences for conf mode")
        ->delimiter(',');
    cmd.add_option("--seed", seed, "Required for --yaw random");
    seed_opt = cmd.get_option("--seed");
    cmd.add_option("--pelvis", pelvis)->capture_default_str();
    cmd.add_option("--out", out, "Output poses.json")->required();
    cmd.add_option("--threads", threads)->capture_default_str();
    volume.add(cmd);
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "volumetric");
    std::optional<double> fixed_yaw;
    if (yaw == "random") {
      if (seed_opt->count() == 0) usage_error("--seed is required for --yaw random");
    } else {
      try {
        std::size_t used = 0;
        fixed_yaw = std::stod(yaw, &used);
        if (used != yaw.size() || !std::isfinite(*fixed_yaw)) throw std::invalid_argument(yaw);
      } catch (const std::exception&) {
        usage_error("--yaw must be 0, random or an angle");
      }
    }
    if (seed_opt->count() > 0) m.seed(seed);
    if (anchor == "file" && anchor_file.empty()) usage_error("--anchor file needs --anchor-file");
    if (keypoints_opt->count() == 0 && (heatmaps_opt->count() == 0 || anchor != "file")) {
      usage_error("without --keypoints both --heatmaps and --anchor file are required");
    }
    if (weights_opt->count() > 0 && !confidences.empty()) {
      usage_error("--weights and --confidences are exclusive");
    }

    Dataset d;
    d.rig = learntri::io::rig_from_json(learntri::io::read_json(cameras));
    m.input(cameras);
    if (keypoints_opt->count() > 0) {
      d.frames = learntri::io::frames_from_json(learntri::io::read_json(keypoints), d.rig);
      m.input(keypoints);
    }

    Json index;
    fs::path root;
    if (heatmaps_opt->count() > 0) {
      index = learntri::io::read_json(heatmaps);
      m.input(heatmaps);
      // Index paths are relative to the dataset directory.
      root = heatmaps.parent_path().parent_path();
      if (!index.contains("frames") || !index["frames"].is_array()) {
        throw Error(ErrorCode::ParseError, "heatmap index has no frames");
      }
      if (!d.frames.empty() && index["frames"].size() != d.frames.size()) {
        throw Error(ErrorCode::ParseError, "heatmap index and keypoints disagree on frames");
      }
    }
    std::vector<learntri::Pose3D> anchors;
    if (anchor == "file") {
      anchors = learntri::io::poses_from_json(learntri::io::read_json(anchor_file));
      m.input(anchor_file);
      const std::size_t n = d.frames.empty() ? index["frames"].size() : d.frames.size();
      if (anchors.size() != n) usage_error("anchor file and dataset disagree on frames");
    }

    auto opts = volume.options();
    opts.pelvis_index = pelvis;
    if (weights_opt->count() > 0) {
      const auto w = learntri::io::effective_weights_from_json(learntri::io::read_json(weights), d.rig);
      m.input(weights);
      opts.volume.confidences.assign(w.col(0).data(), w.col(0).data() + w.rows());
    } else if (!confidences.empty()) {
      opts.volume.confidences = confidences;
    }
    if (!opts.volume.confidences.empty() && opts.volume.confidences.size() != d.rig.size()) {
      usage_error("need one confidence per camera");
    }

    const std::size_t frames = d.frames.empty() ? index["frames"].size() : d.frames.size();
    std::vector<learntri::FrameEstimate> est(frames);
    learntri::parallel_for(frames, threads, [&](std::size_t f) {
      std::vector<learntri::ViewMaps> maps;
      if (heatmaps_opt->count() > 0) {
        maps = learntri::io::read_frame_heatmaps(root, index["frames"][f], d.rig);
      }
      learntri::Frame frame = d.frames.empty() ? frame_from_maps(maps, d.rig) : d.frames[f];
      auto local = opts;
      local.volume.yaw = fixed_yaw ? *fixed_yaw
                                   : learntri::Rng(learntri::mix_seed(seed, f))
                                         .uniform(0.0, 2.0 * std::numbers::pi);
      std::optional<learntri::Vec3> a;
      if (!anchors.empty()) {
        const auto& p = anchors[f];
        if (p.pelvis_index >= p.size() || !p.valid[p.pelvis_index]) {
          est[f] = failed_frame(frame.num_joints(), ErrorCode::PelvisMissing);
          return;
        }
        a = p.joints[p.pelvis_index];
      }
      est[f] = learntri::estimate_volumetric(d.rig, frame, local, a, maps.empty() ? nullptr : &maps);
    });
    return finish_estimates(est, d.rig, pelvis, out, m);
  }

  // Without keypoints every joint counts as seen by every camera with maps.
  static learntri::Frame frame_from_maps(const std::vector<learntri::ViewMaps>& maps,
                                         const learntri::Rig& rig) {
    std::size_t J = 0;
    for (const auto& v : maps) J = std::max(J, v.maps.size());
    learntri::Frame f;
    f.observations.assign(rig.size(), std::vector<learntri::JointObservation>(J));
    for (const auto& v : maps) {
      const auto c = *rig.index_of(v.camera.name());
      for (auto& o : f.observations[c]) o.visible = true;
    }
    return f;
  }

  static learntri::FrameEstimate failed_frame(std::size_t joints, ErrorCode code) {
    learntri::FrameEstimate e;
    e.status = std::string(learntri::to_string(code));
    e.joints.resize(joints);
    for (auto& j : e.joints) j.status = e.status;
    return e;
  }
};

// --------------------------------------------------------------------- fit

struct FitCmd {
  fs::path cameras, keypoints, gt, out;
  std::string parameters = "algebraic";
  learntri::FitConfig cfg;
  VolumeFlags volume;

  void add(CLI::App& cmd) {
    cmd.add_option("--cameras", cameras)->required();
    cmd.add_option("--keypoints", keypoints)->required();
    cmd.add_option("--gt", gt, "Ground-truth poses")->required();
    cmd.add_option("--parameters", parameters, "algebraic (per-camera DLT weights) or volumetric")
        ->check(CLI::IsMember({"algebraic", "volumetric"}))
        ->capture_default_str();
    cmd.add_flag("--per-joint", cfg.per_joint, "Learn one weight per camera and joint");
    cmd.add_option("--lr", cfg.learning_rate)->capture_default_str();
    cmd.add_option("--steps", cfg.steps)->capture_default_str();
    cmd.add_option("--epsilon", cfg.epsilon, "Soft MSE threshold in m^2")->capture_default_str();
    cmd.add_option("--init-jitter", cfg.init_jitter)->capture_default_str();
    cmd.add_option("--seed", cfg.seed)->required();
    cmd.add_option("--out", out, "Output weights.json")->required();
    volume.add(cmd);
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "fit");
    m.seed(cfg.seed);
    auto d = load_dataset(cameras, keypoints, m);
    load_ground_truth(d, gt, m);
    cfg.parameters = parameters == "volumetric" ? learntri::ParameterSet::VolumetricConfidence
                                                : learntri::ParameterSet::AlgebraicWeights;
    cfg.volumetric = volume.options();
    const auto result = learntri::fit_weights(d.frames, d.rig, cfg);
    Json j = learntri::io::weights_to_json(result.weights, d.rig);
    j["fit"] = Json{{"parameters", parameters},
                    {"terms", result.terms},
                    {"steps", cfg.steps},
                    {"learning_rate", cfg.learning_rate},
                    {"loss_trace", result.loss_trace}};
    learntri::io::write_json(out, j);
    m.output(out);
    m.write(manifest_for(out));
    std::printf("loss %.6g -> %.6g over %d steps (%zu terms)\n", result.loss_trace.front(),
                result.loss_trace.back(), cfg.steps, result.terms);
    const auto eff = result.weights.effective();
    for (std::size_t c = 0; c < d.rig.size(); ++c) {
      std::printf("  %-12s %.4f\n", d.rig[c].name().c_str(), eff.row(static_cast<Eigen::Index>(c)).mean());
    }
    return 0;
  }
};

// ---------------------------------------------------------------- evaluate

struct EvaluateCmd {
  fs::path gt, out, csv;
  std::vector<fs::path> preds;
  std::string relative = "none";

  void add(CLI::App& cmd) {
    cmd.add_option("--gt", gt)->required();
    cmd.add_option("--pred", preds, "One or more estimated poses files")->required();
    cmd.add_option("--relative", relative, "none or pelvis")
        ->check(CLI::IsMember({"none", "pelvis"}))
        ->capture_default_str();
    cmd.add_option("--out", out, "Report JSON");
    cmd.add_option("--csv", csv, "Report CSV");
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "evaluate");
    const auto truth = learntri::io::poses_from_json(learntri::io::read_json(gt));
    m.input(gt);
    Json methods = Json::object();
    std::string table = "method,frames,joints,missing,mpjpe_abs_mm,mpjpe_rel_mm\n";
    for (const auto& path : preds) {
      const auto pred = learntri::io::poses_from_json(learntri::io::read_json(path));
      m.input(path);
      if (pred.size() != truth.size()) {
        throw Error(ErrorCode::InvalidArgument, path.string() + " and the ground truth disagree on frames");
      }
      learntri::MpjpeAccumulator abs(false);
      learntri::MpjpeAccumulator rel(true);
      std::size_t missing = 0;
      for (std::size_t f = 0; f < pred.size(); ++f) {
        for (std::size_t j = 0; j < truth[f].size(); ++j) {
          if (truth[f].valid[j] && !(j < pred[f].size() && pred[f].valid[j])) ++missing;
        }
        abs.add(pred[f], truth[f]);
        const auto pp = pred[f].pelvis_index;
        const auto gp = truth[f].pelvis_index;
        if (pp < pred[f].size() && pred[f].valid[pp] && gp < truth[f].size() && truth[f].valid[gp]) {
          rel.add(pred[f], truth[f]);
        }
      }
      std::string name = path.stem().string();
      while (methods.contains(name)) name += "'";
      const double a = abs.mean_mm();
      const double r = rel.count() > 0 ? rel.mean_mm() : std::nan("");
      methods[name] = Json{{"frames", pred.size()},
                           {"joints", abs.count()},
                           {"missing", missing},
                           {"mpjpe_abs_mm", a},
                           {"mpjpe_rel_mm", rel.count() > 0 ? Json(r) : Json(nullptr)}};
      char row[256];
      std::snprintf(row, sizeof row, "%s,%zu,%zu,%zu,%.6f,%.6f\n", name.c_str(), pred.size(),
                    abs.count(), missing, a, r);
      table += row;
      if (relative == "pelvis" && rel.count() == 0) {
        throw Error(ErrorCode::PelvisMissing, "no frame has a valid pelvis in both files");
      }
      std::printf("%s: MPJPE %.3f mm (%s, %zu joints, %zu missing)\n", name.c_str(),
                  relative == "pelvis" ? r : a, relative == "pelvis" ? "pelvis-relative" : "absolute",
                  abs.count(), missing);
    }
    const Json report{{"relative", relative}, {"methods", methods}};
    if (!out.empty()) {
      learntri::io::write_json(out, report);
      m.output(out);
    }
    if (!csv.empty()) {
      learntri::io::write_text(csv, table);
      m.output(csv);
    }
    if (!out.empty()) m.write(manifest_for(out));
    else if (!csv.empty()) m.write(manifest_for(csv));
    return 0;
  }
};

// ------------------------------------------------------------------- sweep

struct SweepCmd {
  fs::path cameras, keypoints, gt, weights, out, csv;
  std::string method = "dlt";
  std::vector<int> sizes{2, 4, 8};
  int trials = 50;
  std::uint64_t seed = 0;
  VolumeFlags volume;
  RansacFlags ransac;
  CLI::Option* weights_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--cameras", cameras)->required();
    cmd.add_option("--keypoints", keypoints)->required();
    cmd.add_option("--gt", gt)->required();
    cmd.add_option("--method", method)
        ->check(CLI::IsMember({"dlt", "weighted", "ransac", "volumetric"}))
        ->capture_default_str();
    weights_opt = cmd.add_option("--weights", weights, "Weights for the weighted method");
    cmd.add_option("--sizes", sizes)->delimiter(',')->capture_default_str();
    cmd.add_option("--trials", trials, "Random subsets per size")->capture_default_str();
    cmd.add_option("--seed", seed)->required();
    cmd.add_option("--out", out, "Report JSON");
    cmd.add_option("--csv", csv, "Report CSV");
    volume.add(cmd);
    ransac.add(cmd);
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "sweep");
    m.seed(seed);
    if (trials < 1) usage_error("--trials must be positive");
    auto d = load_dataset(cameras, keypoints, m);
    load_ground_truth(d, gt, m);
    std::optional<Eigen::MatrixXd> w;
    if (method == "weighted") {
      if (weights_opt->count() == 0) usage_error("--method weighted needs --weights");
      w = learntri::io::effective_weights_from_json(learntri::io::read_json(weights), d.rig);
      m.input(weights);
    }
    const auto vol = volume.options();
    ransac.cfg.seed = seed;
    ransac.cfg.validate();
    const std::size_t pelvis = learntri::kTemplatePelvis;

    learntri::FrameMethod fn;
    if (method == "dlt") {
      fn = [&](const learntri::Rig& r, const learntri::Frame& f) {
        return learntri::estimate_algebraic(r, f).pose(pelvis);
      };
    } else if (method == "weighted") {
      fn = [&](const learntri::Rig& r, const learntri::Frame& f) {
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(f.num_joints()));
        for (std::size_t c = 0; c < r.size(); ++c) {
          const auto src = static_cast<Eigen::Index>(*d.rig.index_of(r[c].name()));
          for (Eigen::Index j = 0; j < sub.cols(); ++j) {
            sub(static_cast<Eigen::Index>(c), j) = (*w)(src, w->cols() == 1 ? 0 : j);
          }
        }
        return learntri::estimate_algebraic(r, f, &sub).pose(pelvis);
      };
    } else if (method == "ransac") {
      fn = [&](const learntri::Rig& r, const learntri::Frame& f) {
        return learntri::estimate_ransac(r, f, ransac.cfg).pose(pelvis);
      };
    } else {
      fn = [&](const learntri::Rig& r, const learntri::Frame& f) {
        auto o = vol;
        if (!o.volume.confidences.empty()) o.volume.confidences.resize(r.size(), 1.0);
        return learntri::estimate_volumetric(r, f, o).pose(pelvis);
      };
    }
    const int min_views = method == "volumetric" ? 1 : 2;
    const auto result =
        learntri::camera_subset_sweep(d.rig, d.frames, fn, sizes, trials, seed, min_views);

    std::string table = "size,mpjpe_mm,failures,distinct_subsets\n";
    std::printf("%6s %12s %9s %9s\n", "size", "mpjpe_mm", "failures", "subsets");
    for (std::size_t i = 0; i < result.sizes.size(); ++i) {
      std::printf("%6d %12.3f %9zu %9zu\n", result.sizes[i], result.mpjpe_mm[i], result.failures[i],
                  result.distinct_subsets[i]);
      char row[128];
      std::snprintf(row, sizeof row, "%d,%.6f,%zu,%zu\n", result.sizes[i], result.mpjpe_mm[i],
                    result.failures[i], result.distinct_subsets[i]);
      table += row;
    }
    std::printf("non-increasing: %s\n", result.non_increasing() ? "yes" : "no");
    const Json report{{"method", method},
                      {"trials", result.trials},
                      {"sizes", result.sizes},
                      {"mpjpe_mm", result.mpjpe_mm},
                      {"failures", result.failures},
                      {"distinct_subsets", result.distinct_subsets},
                      {"non_increasing", result.non_increasing()}};
    if (!out.empty()) {
      learntri::io::write_json(out, report);
      m.output(out);
    }
    if (!csv.empty()) {
      learntri::io::write_text(csv, table);
      m.output(csv);
    }
    if (!out.empty()) m.write(manifest_for(out));
    else if (!csv.empty()) m.write(manifest_for(csv));
    return 0;
  }
};

// --------------------------------------------------------------- gradcheck

struct GradcheckCmd {
  learntri::GradcheckConfig cfg;
  double tolerance = 1e-4;
  fs::path out;

  void add(CLI::App& cmd) {
    cmd.add_option("--trials", cfg.trials)->capture_default_str();
    cmd.add_option("--seed", cfg.seed)->required();
    cmd.add_option("--step", cfg.step, "Central difference step")->capture_default_str();
    cmd.add_option("--tolerance", tolerance, "Largest accepted relative error")->capture_default_str();
    cmd.add_option("--out", out, "Report JSON");
  }

  int run(const CLI::App& cmd) {
    Manifest m(cmd, "gradcheck");
    m.seed(cfg.seed);
    if (!(tolerance > 0.0)) usage_error("--tolerance must be positive");
    const auto suites = learntri::run_gradcheck(cfg);
    const learntri::GradcheckSuite* worst = &suites.front();
    Json rows = Json::array();
    for (const auto& s : suites) {
      const bool ok = s.max_rel_error <= tolerance;
      std::printf("%-16s trials=%d max_rel_error=%.3e %s\n", s.name.c_str(), s.trials, s.max_rel_error,
                  ok ? "ok" : "FAIL");
      rows.push_back(Json{{"suite", s.name},
                          {"trials", s.trials},
                          {"max_rel_error", s.max_rel_error},
                          {"worst_trial", s.worst_trial},
                          {"pass", ok}});
      if (!(s.max_rel_error <= worst->max_rel_error)) worst = &s;
    }
    std::printf("max relative error %.3e (%s, trial %d), tolerance %.1e\n", worst->max_rel_error,
                worst->name.c_str(), worst->worst_trial, tolerance);
    const bool pass = worst->max_rel_error <= tolerance;
    if (!out.empty()) {
      learntri::io::write_json(out, Json{{"suites", rows}, {"tolerance", tolerance}, {"pass", pass}});
      m.output(out);
      m.write(manifest_for(out));
    }
    return pass ? 0 : kExitFailure;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable triangulation of 3D human pose from multi-view keypoints"};
  app.set_version_flag("--version", std::string(LEARNTRI_VERSION));
  app.require_subcommand(1);

  SimulateCmd simulate;
  TriangulateCmd triangulate;
  VolumetricCmd volumetric;
  FitCmd fit;
  EvaluateCmd evaluate;
  SweepCmd sweep;
  GradcheckCmd gradcheck;

  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic multi-view dataset");
  simulate.add(*c_sim);
  auto* c_tri = app.add_subcommand("triangulate", "Algebraic, weighted or RANSAC triangulation");
  triangulate.add(*c_tri);
  auto* c_vol = app.add_subcommand("volumetric", "Volumetric triangulation over a voxel cube");
  volumetric.add(*c_vol);
  auto* c_fit = app.add_subcommand("fit", "Fit camera confidence weights to ground truth");
  fit.add(*c_fit);
  auto* c_eval = app.add_subcommand("evaluate", "MPJPE of estimated poses against ground truth");
  evaluate.add(*c_eval);
  auto* c_sweep = app.add_subcommand("sweep", "MPJPE over random camera subsets of each size");
  sweep.add(*c_sweep);
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference checks of every gradient");
  gradcheck.add(*c_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_sim->parsed()) return simulate.run(*c_sim);
    if (c_tri->parsed()) return triangulate.run(*c_tri);
    if (c_vol->parsed()) return volumetric.run(*c_vol);
    if (c_fit->parsed()) return fit.run(*c_fit);
    if (c_eval->parsed()) return evaluate.run(*c_eval);
    if (c_sweep->parsed()) return sweep.run(*c_sweep);
    if (c_grad->parsed()) return gradcheck.run(*c_grad);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

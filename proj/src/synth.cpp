#include "learntri/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "learntri/error.hpp"
#include "learntri/random.hpp"

namespace learntri {

void SceneConfig::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (num_cameras < 1) throw Error(ErrorCode::InvalidArgument, "need at least one camera");
  if (num_joints < 1) throw Error(ErrorCode::InvalidArgument, "need at least one joint");
  if (num_frames < 0) throw Error(ErrorCode::InvalidArgument, "frame count must be >= 0");
  if (!(pixel_noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  if (!rate_ok(outlier_rate) || !rate_ok(occlusion_rate)) {
    throw Error(ErrorCode::InvalidArgument, "rates must lie in [0, 1]");
  }
  if (!camera_outlier_rates.empty()) {
    if (camera_outlier_rates.size() != static_cast<std::size_t>(num_cameras)) {
      throw Error(ErrorCode::InvalidArgument, "one outlier rate per camera required");
    }
    if (!std::all_of(camera_outlier_rates.begin(), camera_outlier_rates.end(), rate_ok)) {
      throw Error(ErrorCode::InvalidArgument, "rates must lie in [0, 1]");
    }
  }
}

double SceneConfig::outlier_rate_for(std::size_t camera) const {
  return camera_outlier_rates.empty() ? outlier_rate : camera_outlier_rates.at(camera);
}

std::vector<Vec3> template_skeleton() {
  return {
      {0.00, 0.00, 0.00},    // 0 pelvis
      {-0.12, -0.02, 0.00},  // 1 right hip
      {-0.13, -0.45, 0.03},  // 2 right knee
      {-0.13, -0.86, -0.02}, // 3 right ankle
      {0.12, -0.02, 0.00},   // 4 left hip
      {0.13, -0.45, 0.03},   // 5 left knee
      {0.13, -0.86, -0.02},  // 6 left ankle
      {0.00, 0.22, -0.01},   // 7 spine
      {0.00, 0.47, -0.02},   // 8 thorax
      {0.00, 0.57, 0.07},    // 9 nose
      {0.00, 0.70, 0.00},    // 10 head
      {0.18, 0.45, -0.02},   // 11 left shoulder
      {0.22, 0.18, 0.03},    // 12 left elbow
      {0.24, -0.06, 0.10},   // 13 left wrist
      {-0.18, 0.45, -0.02},  // 14 right shoulder
      {-0.22, 0.18, 0.03},   // 15 right elbow
      {-0.24, -0.06, 0.10},  // 16 right wrist
  };
}

Rig make_ring_rig(int num_cameras, double radius, double height, const Vec3& target,
                  int image_size) {
  if (num_cameras < 1) throw Error(ErrorCode::InvalidArgument, "need at least one camera");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be > 0");
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(num_cameras));
  const double principal = 0.5 * (image_size - 1);
  for (int c = 0; c < num_cameras; ++c) {
    const double theta = 2.0 * std::numbers::pi * c / num_cameras;
    const Vec3 eye(target.x() + radius * std::sin(theta), height,
                   target.z() + radius * std::cos(theta));
    const double distance = (target - eye).norm();
    // Half of the 2 m cube (1 m) at the target spans 40% of the image width.
    const double focal = 0.4 * image_size * distance;
    Mat3 K;
    K << focal, 0.0, principal, 0.0, focal, principal, 0.0, 0.0, 1.0;
    const Mat3 R = look_at_rotation(eye, target);
    char name[16];
    std::snprintf(name, sizeof(name), "cam%02d", c);
    cams.push_back(Camera::from_factors(name, K, R, -R * eye, {image_size, image_size}));
  }
  return Rig(std::move(cams));
}

namespace {

std::vector<Vec3> skeleton_for(const SceneConfig& cfg) {
  auto base = template_skeleton();
  const auto J = static_cast<std::size_t>(cfg.num_joints);
  if (J <= base.size()) {
    base.resize(J);
    return base;
  }
  // Generic landmarks beyond the stick figure, fixed for a given seed.
  Rng rng(mix_seed(cfg.seed, 0xC0FFEE));
  while (base.size() < J) {
    base.emplace_back(rng.uniform(-0.5, 0.5), rng.uniform(-0.8, 0.8), rng.uniform(-0.5, 0.5));
  }
  return base;
}

}  // namespace

std::vector<Frame> generate_frames(const Rig& rig, const SceneConfig& cfg) {
  cfg.validate();
  if (rig.size() != static_cast<std::size_t>(cfg.num_cameras)) {
    throw Error(ErrorCode::InvalidArgument, "rig size does not match num_cameras");
  }
  const auto skeleton = skeleton_for(cfg);
  const std::size_t J = skeleton.size();
  std::vector<Frame> frames(static_cast<std::size_t>(cfg.num_frames));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    Rng rng(mix_seed(cfg.seed, t));
    const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec3 root = cfg.center + Vec3(rng.uniform(-cfg.root_spread, cfg.root_spread),
                                        rng.uniform(-0.05, 0.05),
                                        rng.uniform(-cfg.root_spread, cfg.root_spread));
    const Mat3 R = yaw_rotation(yaw);
    std::vector<Vec3> joints(J);
    for (std::size_t j = 0; j < J; ++j) {
      Vec3 jitter(rng.normal(), rng.normal(), rng.normal());
      if (j == kTemplatePelvis) jitter.setZero();
      joints[j] = root + R * skeleton[j] + cfg.joint_jitter * jitter;
    }

    Frame& f = frames[t];
    f.gt_pose = Pose3D::all_valid(joints, kTemplatePelvis);
    f.observations.assign(rig.size(), std::vector<JointObservation>(J));
    for (std::size_t c = 0; c < rig.size(); ++c) {
      const double outlier_p = cfg.outlier_rate_for(c);
      for (std::size_t j = 0; j < J; ++j) {
        // Every draw happens unconditionally so streams stay aligned across configs.
        const double occlusion_draw = rng.uniform();
        const Vec2 noise(rng.normal(), rng.normal());
        const double outlier_draw = rng.uniform();
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);

        JointObservation& o = f.observations[c][j];
        o.clean = project(rig[c], joints[j]).pixel;
        o.visible = !(occlusion_draw < cfg.occlusion_rate);
        o.point = o.clean + cfg.pixel_noise_sigma * noise;
        if (outlier_draw < outlier_p) {
          o.corrupted = true;
          o.point += cfg.outlier_shift * Vec2(std::cos(angle), std::sin(angle));
        }
      }
    }
  }
  return frames;
}

std::vector<Observation> observations_for_joint(const Frame& frame, std::size_t joint) {
  std::vector<Observation> obs;
  for (std::size_t c = 0; c < frame.num_cameras(); ++c) {
    const auto& o = frame.observations[c].at(joint);
    if (o.visible) obs.push_back({c, o.point, 1.0});
  }
  return obs;
}

Frame restrict_frame(const Frame& frame, std::span<const std::size_t> cameras) {
  Frame out;
  out.gt_pose = frame.gt_pose;
  out.observations.reserve(cameras.size());
  for (auto c : cameras) out.observations.push_back(frame.observations.at(c));
  return out;
}

CropTransform crop_for(const Frame& frame, std::size_t camera, const Camera& cam,
                       const CropPolicy& policy) {
  const ImageSize size = cam.image_size();
  if (policy.mode == CropPolicy::Mode::BoundingBox) {
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& o : frame.observations.at(camera)) {
      if (!o.visible) continue;
      lo = lo.cwiseMin(o.point);
      hi = hi.cwiseMax(o.point);
    }
    if (lo.allFinite() && hi.allFinite()) {
      const Vec2 mid = 0.5 * (lo + hi);
      const double side = std::max(1.0, policy.margin * (hi - lo).maxCoeff());
      const Vec2 scale(side / policy.heatmap_width, side / policy.heatmap_height);
      const Vec2 corner = mid - Vec2::Constant(0.5 * side);
      return CropTransform::make(corner + 0.5 * (scale - Vec2::Ones()), scale);
    }
  }
  // Heatmap cell centers land on the centers of the image blocks they cover.
  const Vec2 scale(static_cast<double>(size.width) / policy.heatmap_width,
                   static_cast<double>(size.height) / policy.heatmap_height);
  return CropTransform::make(0.5 * (scale - Vec2::Ones()), scale);
}

std::vector<ViewMaps> render_frame_heatmaps(const Frame& frame, const Rig& rig,
                                            const CropPolicy& policy, double sigma,
                                            double support) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "heatmap sigma must be > 0");
  if (frame.num_cameras() != rig.size()) {
    throw Error(ErrorCode::InvalidArgument, "frame and rig disagree on camera count");
  }
  std::vector<ViewMaps> views;
  views.reserve(rig.size());
  for (std::size_t c = 0; c < rig.size(); ++c) {
    ViewMaps v{rig[c], crop_for(frame, c, rig[c], policy), {}};
    const auto J = frame.num_joints();
    v.maps.reserve(J);
    for (std::size_t j = 0; j < J; ++j) {
      const auto& o = frame.observations[c][j];
      if (o.visible) {
        v.maps.push_back(render_gaussian(v.crop.inverse(o.point), sigma, policy.heatmap_width,
                                         policy.heatmap_height, static_cast<int>(j), support));
      } else {
        v.maps.emplace_back(policy.heatmap_width, policy.heatmap_height, 0.0,
                            static_cast<int>(j));
      }
    }
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace learntri

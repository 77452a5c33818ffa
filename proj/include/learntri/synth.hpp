#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "learntri/geometry.hpp"
#include "learntri/pose.hpp"
#include "learntri/triangulation.hpp"
#include "learntri/volumetric.hpp"

namespace learntri {

inline constexpr int kTemplateJoints = 17;
inline constexpr std::size_t kTemplatePelvis = 0;
inline constexpr int kDefaultImageSize = 384;
inline constexpr int kDefaultHeatmapSize = 96;
inline constexpr double kDefaultHeatmapSigma = 5.0;  // heatmap px
/// Rendered Gaussians are cut to zero beyond this many sigmas, which lets the
/// volumetric kernels skip empty space.
inline constexpr double kDefaultHeatmapSupport = 2.0;

struct SceneConfig {
  int num_cameras = 4;
  int num_joints = kTemplateJoints;
  int num_frames = 100;
  double pixel_noise_sigma = 0.0;  // px
  double outlier_rate = 0.0;
  double outlier_shift = 40.0;     // px
  double occlusion_rate = 0.0;
  std::uint64_t seed = 0;
  /// Optional per-camera outlier probabilities overriding outlier_rate.
  std::vector<double> camera_outlier_rates;

  Vec3 center = Vec3(0.0, 1.0, 0.0);  // nominal pelvis position
  double root_spread = 0.3;          // m, horizontal placement range (+-)
  double joint_jitter = 0.02;        // m, per-joint noise around the template

  void validate() const;
  double outlier_rate_for(std::size_t camera) const;
};

struct JointObservation {
  Vec2 point = Vec2::Zero();
  Vec2 clean = Vec2::Zero();  // exact projection before noise
  bool visible = false;
  bool corrupted = false;
};

struct Frame {
  std::optional<Pose3D> gt_pose;
  /// observations[camera][joint]
  std::vector<std::vector<JointObservation>> observations;

  std::size_t num_cameras() const noexcept { return observations.size(); }
  std::size_t num_joints() const noexcept {
    return observations.empty() ? 0 : observations.front().size();
  }
};

/// Pelvis-rooted 17-joint stick figure, Y up, facing +Z.
std::vector<Vec3> template_skeleton();

/// C cameras evenly spaced on a horizontal circle around `target`, all
/// looking at it, with focal length chosen so a 2 m cube at the target spans
/// about 80% of the image.
Rig make_ring_rig(int num_cameras, double radius = 4.0, double height = 1.5,
                  const Vec3& target = Vec3(0.0, 1.0, 0.0), int image_size = kDefaultImageSize);

std::vector<Frame> generate_frames(const Rig& rig, const SceneConfig& cfg);

/// Visible views of joint j as unit-weight observations.
std::vector<Observation> observations_for_joint(const Frame& frame, std::size_t joint);

/// Frame restricted to the listed cameras, in the listed order.
Frame restrict_frame(const Frame& frame, std::span<const std::size_t> cameras);

struct CropPolicy {
  enum class Mode { FullFrame, BoundingBox };
  Mode mode = Mode::FullFrame;
  int heatmap_width = kDefaultHeatmapSize;
  int heatmap_height = kDefaultHeatmapSize;
  double margin = 1.2;  // box enlargement for BoundingBox
};

/// Heatmap-to-image transform for one camera of `frame`.
CropTransform crop_for(const Frame& frame, std::size_t camera, const Camera& cam,
                       const CropPolicy& policy);

/// One Gaussian channel per joint at each visible observation; occluded
/// joints give all-zero channels. `support` is the cutoff radius in sigmas.
std::vector<ViewMaps> render_frame_heatmaps(const Frame& frame, const Rig& rig,
                                            const CropPolicy& policy = {},
                                            double sigma = kDefaultHeatmapSigma,
                                            double support = kDefaultHeatmapSupport);

}  // namespace learntri

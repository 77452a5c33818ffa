#pragma once

// Frame-level estimation: every joint of a frame through one method.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "learntri/robust.hpp"
#include "learntri/synth.hpp"
#include "learntri/volumetric.hpp"

namespace learntri {

struct JointEstimate {
  std::optional<Vec3> point;
  std::string status = "ok";  // "ok" or an ErrorCode name
  std::vector<std::size_t> cameras;
  std::vector<double> residuals;
  double singular_gap = 0.0;
  std::vector<bool> inliers;  // RANSAC only
};

struct FrameEstimate {
  std::vector<JointEstimate> joints;
  std::string status = "ok";
  std::optional<VoxelGridSpec> grid;
  std::vector<UnprojectionStats> view_stats;

  Pose3D pose(std::size_t pelvis_index) const;
  std::size_t failed_joints() const;
};

/// DLT per joint over the visible views. With `weights` (C x J effective
/// values), each observation takes weights(c, j).
FrameEstimate estimate_algebraic(const Rig& rig, const Frame& frame,
                                 const Eigen::MatrixXd* weights = nullptr);

FrameEstimate estimate_ransac(const Rig& rig, const Frame& frame, const RansacConfig& cfg);

struct VolumetricOptions {
  VolumetricConfig volume;
  CropPolicy crop;
  double heatmap_sigma = kDefaultHeatmapSigma;
  double heatmap_support = kDefaultHeatmapSupport;  // sigmas
  std::size_t pelvis_index = kTemplatePelvis;
};

/// Anchor from `anchor` when given, else the unweighted DLT of the pelvis.
/// Feature maps come from `maps` when given, else they are rendered from the
/// frame's keypoints. Joints whose algebraic estimate falls outside the cube
/// keep their (clamped) point but report JointOutsideGrid.
FrameEstimate estimate_volumetric(const Rig& rig, const Frame& frame,
                                  const VolumetricOptions& opts,
                                  std::optional<Vec3> anchor = std::nullopt,
                                  const std::vector<ViewMaps>* maps = nullptr);

}  // namespace learntri

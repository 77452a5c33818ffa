#include "learntri/pipeline.hpp"

#include "learntri/error.hpp"

namespace learntri {

Pose3D FrameEstimate::pose(std::size_t pelvis_index) const {
  Pose3D p;
  p.pelvis_index = pelvis_index;
  for (const auto& j : joints) {
    p.joints.push_back(j.point.value_or(Vec3::Zero()));
    p.valid.push_back(j.point.has_value());
  }
  return p;
}

std::size_t FrameEstimate::failed_joints() const {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.point ? 0 : 1;
  return n;
}

namespace {

std::vector<std::size_t> cameras_of(const std::vector<Observation>& obs) {
  std::vector<std::size_t> out;
  for (const auto& o : obs) out.push_back(o.camera_index);
  return out;
}

}  // namespace

FrameEstimate estimate_algebraic(const Rig& rig, const Frame& frame,
                                 const Eigen::MatrixXd* weights) {
  FrameEstimate out;
  const std::size_t J = frame.num_joints();
  out.joints.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    auto obs = observations_for_joint(frame, j);
    if (weights) {
      for (auto& o : obs) {
        o.weight = (*weights)(static_cast<Eigen::Index>(o.camera_index), static_cast<Eigen::Index>(j));
      }
    }
    JointEstimate& est = out.joints[j];
    est.cameras = cameras_of(obs);
    try {
      const auto r = triangulate(rig, obs, false);
      est.point = r.point;
      est.residuals = r.per_view_residual;
      est.singular_gap = r.singular_gap;
    } catch (const Error& e) {
      est.status = std::string(to_string(e.code()));
    }
  }
  return out;
}

FrameEstimate estimate_ransac(const Rig& rig, const Frame& frame, const RansacConfig& cfg) {
  FrameEstimate out;
  const std::size_t J = frame.num_joints();
  out.joints.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto obs = observations_for_joint(frame, j);
    JointEstimate& est = out.joints[j];
    est.cameras = cameras_of(obs);
    try {
      const auto r = ransac_triangulate(rig, obs, cfg);
      est.point = r.triangulation.point;
      est.residuals = r.triangulation.per_view_residual;
      est.singular_gap = r.triangulation.singular_gap;
      est.inliers = r.inliers;
    } catch (const Error& e) {
      est.status = std::string(to_string(e.code()));
    }
  }
  return out;
}

FrameEstimate estimate_volumetric(const Rig& rig, const Frame& frame,
                                  const VolumetricOptions& opts, std::optional<Vec3> anchor,
                                  const std::vector<ViewMaps>* maps) {
  FrameEstimate out;
  const std::size_t J = frame.num_joints();
  out.joints.resize(J);
  try {
    if (!anchor) {
      const auto obs = observations_for_joint(frame, opts.pelvis_index);
      anchor = triangulate(rig, obs, false).point;
    }
    std::vector<ViewMaps> rendered;
    if (!maps) {
      rendered = render_frame_heatmaps(frame, rig, opts.crop, opts.heatmap_sigma, opts.heatmap_support);
      maps = &rendered;
    }
    const auto result = triangulate_volumetric(*maps, *anchor, opts.volume);
    out.grid = result.spec;
    out.view_stats = result.view_stats;
    for (std::size_t j = 0; j < J; ++j) {
      JointEstimate& est = out.joints[j];
      for (std::size_t c = 0; c < frame.num_cameras(); ++c) {
        if (frame.observations[c][j].visible) est.cameras.push_back(c);
      }
      if (est.cameras.empty()) {
        est.status = std::string(to_string(ErrorCode::TooFewViews));
        continue;
      }
      est.point = result.joints.at(j);
      // The cube clamps the soft-argmax, so flag joints the views place outside it.
      const auto obs = observations_for_joint(frame, j);
      if (obs.size() >= 2) {
        try {
          if (!result.spec.voxel_containing(triangulate(rig, obs, false).point)) {
            est.status = std::string(to_string(ErrorCode::JointOutsideGrid));
          }
        } catch (const Error&) {
        }
      }
    }
  } catch (const Error& e) {
    out.status = std::string(to_string(e.code()));
    for (auto& est : out.joints) est.status = out.status;
  }
  return out;
}

}  // namespace learntri

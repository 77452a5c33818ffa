#pragma once

#include <cstddef>
#include <vector>

#include "learntri/geometry.hpp"

namespace learntri {

/// J joint positions in meters. Invalid joints are skipped, never imputed.
struct Pose3D {
  std::vector<Vec3> joints;
  std::vector<bool> valid;
  std::size_t pelvis_index = 0;

  std::size_t size() const noexcept { return joints.size(); }

  static Pose3D all_valid(std::vector<Vec3> joints, std::size_t pelvis_index = 0) {
    Pose3D p;
    p.valid.assign(joints.size(), true);
    p.joints = std::move(joints);
    p.pelvis_index = pelvis_index;
    return p;
  }
};

}  // namespace learntri

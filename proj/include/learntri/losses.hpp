#pragma once

#include <span>
#include <vector>

#include "learntri/geometry.hpp"
#include "learntri/volumetric.hpp"

namespace learntri {

struct LossConfig {
  double epsilon = 0.04;  // m^2, (20 cm)^2
  double beta = 0.01;

  void validate() const;
};

struct PointLoss {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
};

/// Mean of squared coordinate differences.
double mse(const Vec3& pred, const Vec3& gt);

/// m = mse(pred, gt); m when m < epsilon, else m^0.1 * epsilon^0.9.
PointLoss soft_mse_loss(const Vec3& pred, const Vec3& gt, double epsilon);

struct VoxelGradient {
  int channel = 0;
  std::size_t voxel = 0;  // index within the channel
  double value = 0.0;
};

struct VolumetricLoss {
  double value = 0.0;
  double l1 = 0.0;
  double regularizer = 0.0;
  std::vector<Vec3> grad_pred;
  /// Nonzero entries of dL/dV; one per unmasked joint at most.
  std::vector<VoxelGradient> grad_volume;
};

/// sum_j |pred_j - gt_j|_1 - beta log V_j(voxel containing gt_j) over the
/// unmasked joints. `valid` may be empty (all joints used).
VolumetricLoss vol_l1_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                           const VolumeGrid& probabilities, double beta,
                           std::span<const bool> valid = {});

inline constexpr double kLogClamp = 1e-12;

}  // namespace learntri

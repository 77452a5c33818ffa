#include "learntri/losses.hpp"

#include <cmath>

#include "learntri/error.hpp"

namespace learntri {

void LossConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be >= 0");
}

double mse(const Vec3& pred, const Vec3& gt) { return (pred - gt).squaredNorm() / 3.0; }

PointLoss soft_mse_loss(const Vec3& pred, const Vec3& gt, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  const Vec3 d = pred - gt;
  const double m = d.squaredNorm() / 3.0;
  const Vec3 dm = (2.0 / 3.0) * d;
  if (m < epsilon) return {m, dm};
  const double value = std::pow(m, 0.1) * std::pow(epsilon, 0.9);
  return {value, (0.1 * value / m) * dm};
}

VolumetricLoss vol_l1_loss(std::span<const Vec3> pred, std::span<const Vec3> gt,
                           const VolumeGrid& probabilities, double beta,
                           std::span<const bool> valid) {
  if (pred.size() != gt.size() || pred.size() != static_cast<std::size_t>(probabilities.channels())) {
    throw Error(ErrorCode::InvalidArgument, "pred, gt and volume channels must agree");
  }
  if (!valid.empty() && valid.size() != pred.size()) {
    throw Error(ErrorCode::InvalidArgument, "mask length must match joint count");
  }
  VolumetricLoss out;
  out.grad_pred.assign(pred.size(), Vec3::Zero());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (!valid.empty() && !valid[j]) continue;
    const auto cell = probabilities.spec().voxel_containing(gt[j]);
    if (!cell) {
      throw Error(ErrorCode::JointOutsideGrid, "ground-truth joint " + std::to_string(j) +
                                                   " lies outside the grid");
    }
    const Vec3 d = pred[j] - gt[j];
    out.l1 += d.cwiseAbs().sum();
    for (int a = 0; a < 3; ++a) out.grad_pred[j](a) = d(a) > 0.0 ? 1.0 : (d(a) < 0.0 ? -1.0 : 0.0);

    const int c = static_cast<int>(j);
    const std::size_t voxel = probabilities.voxel_index((*cell)[0], (*cell)[1], (*cell)[2]);
    const double prob = probabilities.channel(c)[voxel];
    if (prob > kLogClamp) {
      out.regularizer -= beta * std::log(prob);
      if (beta != 0.0) out.grad_volume.push_back({c, voxel, -beta / prob});
    } else {
      out.regularizer -= beta * std::log(kLogClamp);
    }
  }
  out.value = out.l1 + out.regularizer;
  return out;
}

}  // namespace learntri

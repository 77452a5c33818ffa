#include "learntri/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "learntri/error.hpp"

namespace learntri {

namespace {

double clamp_weight(double w) {
  if (std::isnan(w)) throw Error(ErrorCode::InvalidArgument, "observation weight is NaN");
  return std::max(w, 0.0);
}

void check_observations(const Rig& rig, std::span<const Observation> obs) {
  if (obs.size() < 2) {
    throw Error(ErrorCode::TooFewViews, "need at least 2 observations, got " +
                                            std::to_string(obs.size()));
  }
  for (const auto& o : obs) {
    if (o.camera_index >= rig.size()) {
      throw Error(ErrorCode::InvalidArgument, "camera index out of range");
    }
    if (!o.point.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "observation is not finite");
    }
  }
}

}  // namespace

Eigen::MatrixXd build_design_matrix(const Rig& rig, std::span<const Observation> obs,
                                    bool weighted) {
  check_observations(rig, obs);
  Eigen::MatrixXd A(2 * obs.size(), 4);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Mat34& P = rig[obs[k].camera_index].projection();
    const double w = weighted ? clamp_weight(obs[k].weight) : 1.0;
    const auto r = static_cast<Eigen::Index>(2 * k);
    A.row(r) = w * (obs[k].point.x() * P.row(2) - P.row(0));
    A.row(r + 1) = w * (obs[k].point.y() * P.row(2) - P.row(1));
  }
  return A;
}

TriangulationResult triangulate(const Rig& rig, std::span<const Observation> obs,
                                bool want_gradient) {
  check_observations(rig, obs);
  const auto active = std::count_if(obs.begin(), obs.end(),
                                    [](const Observation& o) { return clamp_weight(o.weight) > 0.0; });
  if (active < 2) {
    throw Error(ErrorCode::TooFewViews, "need at least 2 observations with positive weight");
  }

  const Eigen::MatrixXd A = build_design_matrix(rig, obs, false);
  std::vector<double> weights(obs.size());
  Eigen::MatrixXd B = A;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    weights[k] = clamp_weight(obs[k].weight);
    B.middleRows(static_cast<Eigen::Index>(2 * k), 2) *= weights[k];
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
  Vec4 s = Vec4::Zero();
  const auto& sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size() && i < 4; ++i) s(i) = sv(i);
  const Eigen::Matrix4d V = svd.matrixV();

  TriangulationResult result;
  result.largest_singular_value = s(0);
  result.smallest_singular_value = s(3);
  result.singular_gap = s(2) - s(3);
  if (result.singular_gap < kSingularGapTolerance * s(0)) {
    throw Error(ErrorCode::DegenerateGeometry, "design matrix is near rank deficient");
  }

  Vec4 h = V.col(3);
  if (std::abs(h(3)) < kHomogeneousTolerance) {
    throw Error(ErrorCode::PointAtInfinity, "homogeneous solution has vanishing w");
  }
  if (h(3) < 0.0) h = -h;
  result.homogeneous = h;
  result.point = h.head<3>() / h(3);
  result.per_view_residual = reprojection_residuals(rig, obs, result.point);

  if (want_gradient) {
    auto rec = std::make_shared<TriangulationBackward>();
    rec->design = A;
    rec->weights = std::move(weights);
    rec->third_rows.reserve(obs.size());
    for (const auto& o : obs) {
      rec->third_rows.push_back(rig[o.camera_index].projection().row(2).transpose());
    }
    rec->right_vectors = V;
    rec->singular_values = s;
    rec->homogeneous = h;
    result.backward = std::move(rec);
  }
  return result;
}

TriangulationGradient triangulate_backward(const TriangulationResult& result,
                                           const Vec3& upstream) {
  if (!result.backward) {
    throw Error(ErrorCode::InvalidArgument, "result carries no backward record");
  }
  const TriangulationBackward& rec = *result.backward;
  const Vec4& s = rec.singular_values;
  if (s(2) - s(3) <= kRepeatedSingularTolerance * s(2)) {
    throw Error(ErrorCode::DegenerateGradient, "two smallest singular values coincide");
  }

  const Vec4& v = rec.homogeneous;
  const Vec3 y = v.head<3>() / v(3);
  Vec4 grad_v;
  grad_v.head<3>() = upstream / v(3);
  grad_v(3) = -upstream.dot(y) / v(3);

  // dv = -(M - s4^2 I)^+ dM v for M = B^T B, restricted to the complement of v.
  Vec4 hv = Vec4::Zero();
  const double s_min2 = s(3) * s(3);
  for (int k = 0; k < 3; ++k) {
    const Vec4 vk = rec.right_vectors.col(k);
    hv += vk * (vk.dot(grad_v) / (s(k) * s(k) - s_min2));
  }
  const Eigen::Matrix4d G = -hv * v.transpose();
  const Eigen::Matrix4d Gs = G + G.transpose();

  const std::size_t n = rec.weights.size();
  TriangulationGradient out;
  out.points.assign(n, Vec2::Zero());
  out.weights.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(2 * k);
    const double w = rec.weights[k];
    // B = diag(w) A, so dL/dB_i = B_i Gs and dL/dA_i = w dL/dB_i.
    const Eigen::RowVector4d gu = w * rec.design.row(r) * Gs;
    const Eigen::RowVector4d gv = w * rec.design.row(r + 1) * Gs;
    out.weights[k] = gu.dot(rec.design.row(r)) + gv.dot(rec.design.row(r + 1));
    out.points[k] = Vec2(w * gu.dot(rec.third_rows[k].transpose()),
                         w * gv.dot(rec.third_rows[k].transpose()));
  }
  return out;
}

std::vector<double> reprojection_residuals(const Rig& rig, std::span<const Observation> obs,
                                           const Vec3& point) {
  std::vector<double> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    const Mat34& P = rig[o.camera_index].projection();
    const Vec3 p = P * point.homogeneous();
    const double facing = P.leftCols<3>().determinant() >= 0.0 ? 1.0 : -1.0;
    if (std::abs(p.z()) < 1e-12 || facing * p.z() <= 0.0) {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    out.push_back((p.head<2>() / p.z() - o.point).norm());
  }
  return out;
}

}  // namespace learntri

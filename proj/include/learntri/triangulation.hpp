#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "learntri/geometry.hpp"

namespace learntri {

/// Relative singular-gap threshold below which a design matrix is treated as
/// rank deficient: (s3 - s4) < kSingularGapTolerance * s1.
inline constexpr double kSingularGapTolerance = 1e-10;
/// Minimum |w| of the unit homogeneous solution before dehomogenization.
inline constexpr double kHomogeneousTolerance = 1e-12;
/// Backward pass refuses when (s3 - s4) <= kRepeatedSingularTolerance * s3.
inline constexpr double kRepeatedSingularTolerance = 1e-9;

struct Observation {
  std::size_t camera_index = 0;
  Vec2 point = Vec2::Zero();
  double weight = 1.0;
};

/// Everything the backward pass needs, captured at solve time.
struct TriangulationBackward {
  Eigen::MatrixXd design;               // unweighted A, 2n x 4
  std::vector<double> weights;          // clamped, one per observation
  std::vector<Vec4> third_rows;         // P row 3 per observation
  Eigen::Matrix4d right_vectors;        // V of B = U S V^T
  Vec4 singular_values;
  Vec4 homogeneous;                     // unit norm, w > 0
};

struct TriangulationResult {
  Vec3 point = Vec3::Zero();
  Vec4 homogeneous = Vec4::Zero();
  std::vector<double> per_view_residual;
  double smallest_singular_value = 0.0;
  double singular_gap = 0.0;
  double largest_singular_value = 0.0;
  std::shared_ptr<const TriangulationBackward> backward;
};

struct TriangulationGradient {
  std::vector<Vec2> points;
  std::vector<double> weights;
};

/// Rows (u P3 - P1, v P3 - P2) per observation, both scaled by the clamped
/// observation weight when `weighted` is set.
Eigen::MatrixXd build_design_matrix(const Rig& rig, std::span<const Observation> obs,
                                    bool weighted = true);

/// Weighted DLT: homogeneous point is the right singular vector of the
/// weighted design matrix for the smallest singular value, with w > 0.
TriangulationResult triangulate(const Rig& rig, std::span<const Observation> obs,
                                bool want_gradient = false);

/// Chain rule through dehomogenization and the smallest eigenvector of B^T B.
TriangulationGradient triangulate_backward(const TriangulationResult& result,
                                           const Vec3& upstream);

/// Pixel distance per observation; views that cannot be projected report +inf.
std::vector<double> reprojection_residuals(const Rig& rig, std::span<const Observation> obs,
                                           const Vec3& point);

}  // namespace learntri

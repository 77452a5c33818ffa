#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace learntri {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Factors of a finite projective camera, P = scale * K [R | t].
struct CameraFactors {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double scale = 1.0;
};

/// Pinhole camera without lens distortion. Inputs are assumed undistorted.
///
/// Pixel convention: integer coordinate i is the center of pixel i. Every
/// module (soft-argmax, rendering, bilinear sampling) uses the same rule.
class Camera {
 public:
  static Camera from_projection(std::string name, const Mat34& projection, ImageSize size);
  static Camera from_factors(std::string name, const Mat3& K, const Mat3& R, const Vec3& t,
                             ImageSize size);

  const std::string& name() const noexcept { return name_; }
  const Mat34& projection() const noexcept { return projection_; }
  ImageSize image_size() const noexcept { return size_; }
  const std::optional<CameraFactors>& factors() const noexcept { return factors_; }

  /// Optical center in world coordinates (null vector of P).
  Vec3 center() const;

 private:
  Camera(std::string name, const Mat34& projection, ImageSize size,
         std::optional<CameraFactors> factors);

  std::string name_;
  Mat34 projection_;
  ImageSize size_;
  std::optional<CameraFactors> factors_;
};

class Rig {
 public:
  Rig() = default;
  explicit Rig(std::vector<Camera> cameras);

  std::size_t size() const noexcept { return cameras_.size(); }
  const Camera& operator[](std::size_t i) const { return cameras_.at(i); }
  const std::vector<Camera>& cameras() const noexcept { return cameras_; }

  std::optional<std::size_t> index_of(const std::string& name) const;
  Rig subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<Camera> cameras_;
};

/// Affine map from heatmap grid coordinates to full-image pixels.
struct CropTransform {
  Vec2 offset = Vec2::Zero();
  Vec2 scale = Vec2::Ones();

  static CropTransform make(const Vec2& offset, const Vec2& scale);

  Vec2 apply(const Vec2& heatmap_coord) const;
  Vec2 inverse(const Vec2& image_coord) const;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Projects a world point (meters). Throws DegenerateProjection when the
/// homogeneous depth vanishes.
Projection project(const Camera& camera, const Vec3& point);
Projection project(const Mat34& projection, const Vec3& point);

inline Vec2 apply_crop(const CropTransform& t, const Vec2& heatmap_coord) {
  return t.apply(heatmap_coord);
}

/// RQ-decomposes the left 3x3 block. K comes out upper triangular with a
/// positive diagonal and K(2,2) == 1, R is a proper rotation.
CameraFactors decompose(const Mat34& projection);

Mat34 compose(const Mat3& K, const Mat3& R, const Vec3& t);

/// Rotation whose rows are the camera axes (x right, y down, z forward) for a
/// camera at `eye` looking at `target`, with world +Y up.
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY());

/// Right-handed rotation about the world Y axis.
Mat3 yaw_rotation(double yaw);

}  // namespace learntri

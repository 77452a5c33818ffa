#include "learntri/geometry.hpp"

#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "learntri/error.hpp"

namespace learntri {

namespace {

constexpr double kDepthEpsilon = 1e-12;
constexpr double kRotationTolerance = 1e-9;

void check_size(ImageSize size) {
  if (size.width <= 0 || size.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  }
}

}  // namespace

Camera::Camera(std::string name, const Mat34& projection, ImageSize size,
               std::optional<CameraFactors> factors)
    : name_(std::move(name)), projection_(projection), size_(size), factors_(std::move(factors)) {}

Camera Camera::from_projection(std::string name, const Mat34& projection, ImageSize size) {
  check_size(size);
  if (!projection.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "projection matrix must be finite");
  }
  return Camera(std::move(name), projection, size, std::nullopt);
}

Camera Camera::from_factors(std::string name, const Mat3& K, const Mat3& R, const Vec3& t,
                            ImageSize size) {
  check_size(size);
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > kRotationTolerance ||
      std::abs(R.determinant() - 1.0) > kRotationTolerance) {
    throw Error(ErrorCode::InvalidArgument, "R must be a proper rotation");
  }
  CameraFactors f{K, R, t, 1.0};
  return Camera(std::move(name), compose(K, R, t), size, f);
}

Vec3 Camera::center() const {
  const Mat3 M = projection_.leftCols<3>();
  return -M.partialPivLu().solve(projection_.col(3));
}

Rig::Rig(std::vector<Camera> cameras) : cameras_(std::move(cameras)) {
  std::set<std::string> names;
  for (const auto& cam : cameras_) {
    if (!names.insert(cam.name()).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate camera name '" + cam.name() + "'");
    }
  }
}

std::optional<std::size_t> Rig::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < cameras_.size(); ++i) {
    if (cameras_[i].name() == name) return i;
  }
  return std::nullopt;
}

Rig Rig::subset(std::span<const std::size_t> indices) const {
  std::vector<Camera> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(cameras_.at(i));
  return Rig(std::move(picked));
}

CropTransform CropTransform::make(const Vec2& offset, const Vec2& scale) {
  if (!(scale.x() > 0.0 && scale.y() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "crop scale must be strictly positive");
  }
  return CropTransform{offset, scale};
}

Vec2 CropTransform::apply(const Vec2& heatmap_coord) const {
  return offset + scale.cwiseProduct(heatmap_coord);
}

Vec2 CropTransform::inverse(const Vec2& image_coord) const {
  return (image_coord - offset).cwiseQuotient(scale);
}

Projection project(const Mat34& projection, const Vec3& point) {
  const Vec3 p = projection * point.homogeneous();
  if (std::abs(p.z()) < kDepthEpsilon) {
    throw Error(ErrorCode::DegenerateProjection, "point lies on the principal plane");
  }
  return Projection{Vec2(p.x() / p.z(), p.y() / p.z()), p.z()};
}

Projection project(const Camera& camera, const Vec3& point) {
  return project(camera.projection(), point);
}

Mat34 compose(const Mat3& K, const Mat3& R, const Vec3& t) {
  Mat34 Rt;
  Rt.leftCols<3>() = R;
  Rt.col(3) = t;
  return K * Rt;
}

CameraFactors decompose(const Mat34& projection) {
  const Mat3 M = projection.leftCols<3>();
  Eigen::JacobiSVD<Mat3> svd(M);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(2) <= 1e-12 * sv(0)) {
    throw Error(ErrorCode::SingularCamera, "left 3x3 block is rank deficient");
  }

  // RQ via QR of the row-reversed transpose.
  Mat3 flip = Mat3::Zero();
  flip(0, 2) = flip(1, 1) = flip(2, 0) = 1.0;
  Eigen::HouseholderQR<Mat3> qr((flip * M).transpose());
  const Mat3 Q = qr.householderQ();
  const Mat3 U = qr.matrixQR().triangularView<Eigen::Upper>();
  Mat3 K = flip * U.transpose() * flip;
  Mat3 R = flip * Q.transpose();

  for (int i = 0; i < 3; ++i) {
    if (K(i, i) < 0.0) {
      K.col(i) *= -1.0;
      R.row(i) *= -1.0;
    }
  }
  double scale = 1.0;
  if (R.determinant() < 0.0) {
    R = -R;
    scale = -1.0;
  }
  const double k22 = K(2, 2);
  K /= k22;
  scale *= k22;

  CameraFactors f;
  f.K = K;
  f.R = R;
  f.t = K.triangularView<Eigen::Upper>().solve(projection.col(3)) / scale;
  f.scale = scale;
  return f;
}

Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "viewing direction parallel to up vector");
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return R;
}

Mat3 yaw_rotation(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 R;
  R << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return R;
}

}  // namespace learntri

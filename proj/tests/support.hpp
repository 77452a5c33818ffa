#pragma once

// Test-side oracles. Nothing here calls into the library's math so that the
// checks stay independent of the code under test.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "learntri/error.hpp"
#include "learntri/geometry.hpp"

namespace oracle {

using learntri::Mat3;
using learntri::Mat34;
using learntri::Vec2;
using learntri::Vec3;

inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// max |a - n| over the larger infinity norm.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return diff / scale;
}

inline Mat34 compose(const Mat3& K, const Mat3& R, const Vec3& t) {
  Mat34 Rt;
  Rt.leftCols<3>() = R;
  Rt.col(3) = t;
  return K * Rt;
}

inline Vec2 project(const Mat34& P, const Vec3& X) {
  const Eigen::Vector3d p = P * X.homogeneous();
  return Vec2(p(0) / p(2), p(1) / p(2));
}

// Camera rotation looking from eye at target with image y pointing down
// (world Y is up).
inline Mat3 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(Vec3::UnitY()).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x;
  R.row(1) = y;
  R.row(2) = z;
  return R;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

// Unweighted or weighted DLT by SVD, written from scratch.
inline Vec3 dlt(const std::vector<Mat34>& Ps, const std::vector<Vec2>& uv,
                const std::vector<double>& w = {}) {
  Eigen::MatrixXd A(2 * Ps.size(), 4);
  for (std::size_t i = 0; i < Ps.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    A.row(2 * i) = wi * (uv[i].x() * Ps[i].row(2) - Ps[i].row(0));
    A.row(2 * i + 1) = wi * (uv[i].y() * Ps[i].row(2) - Ps[i].row(1));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  return h.head<3>() / h(3);
}

/// Code of the learntri::Error thrown by `fn`, or nothing when it returns.
inline std::optional<learntri::ErrorCode> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const learntri::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace oracle

#pragma once

#include <limits>

#include <cstddef>
#include <span>
#include <vector>

#include "learntri/geometry.hpp"

namespace learntri {

/// Default inverse temperature for the 2D spatial softmax.
inline constexpr double kDefaultInverseTemperature = 100.0;

/// Dense 2D scalar field. Row-major storage: y outer, x inner. Cell (x, y)
/// sits at grid coordinate (x, y).
class Heatmap2D {
 public:
  Heatmap2D() = default;
  Heatmap2D(int width, int height, double fill = 0.0, int joint_id = 0);
  Heatmap2D(int width, int height, std::vector<double> values, int joint_id = 0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int joint_id() const noexcept { return joint_id_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(int x, int y) { return values_[index(x, y)]; }
  double at(int x, int y) const { return values_[index(x, y)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double sum() const;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  int joint_id_ = 0;
  std::vector<double> values_;
};

/// exp(alpha * h) normalized over all cells, with max subtraction.
Heatmap2D spatial_softmax(const Heatmap2D& h, double alpha = kDefaultInverseTemperature);

/// Chains a gradient on the softmax output p back onto the raw map:
/// dL/dh(r) = alpha * p(r) * (g(r) - <g, p>).
Heatmap2D spatial_softmax_backward(const Heatmap2D& p, double alpha, const Heatmap2D& grad_p);

/// Center of mass sum_r r * p(r) in grid coordinates.
Vec2 soft_argmax_2d(const Heatmap2D& p);

/// dL/dp(r) = grad.x * r_x + grad.y * r_y.
Heatmap2D soft_argmax_2d_backward(const Heatmap2D& p, const Vec2& grad);

/// Unnormalized isotropic Gaussian exp(-|r - center|^2 / (2 sigma^2)).
/// Cells farther than `support` sigmas from the center are exactly zero
/// (the default keeps the full Gaussian).
Heatmap2D render_gaussian(const Vec2& center, double sigma, int width, int height,
                          int joint_id = 0,
                          double support = std::numeric_limits<double>::infinity());

}  // namespace learntri

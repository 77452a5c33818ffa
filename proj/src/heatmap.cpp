#include "learntri/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "learntri/error.hpp"

namespace learntri {

Heatmap2D::Heatmap2D(int width, int height, double fill, int joint_id)
    : width_(width), height_(height), joint_id_(joint_id) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "heatmap dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Heatmap2D::Heatmap2D(int width, int height, std::vector<double> values, int joint_id)
    : width_(width), height_(height), joint_id_(joint_id), values_(std::move(values)) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "heatmap dimensions must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::InvalidArgument, "heatmap payload size does not match dimensions");
  }
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::InvalidArgument, "heatmap values must be finite");
  }
}

double Heatmap2D::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

Heatmap2D spatial_softmax(const Heatmap2D& h, double alpha) {
  if (!(alpha > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "inverse temperature must be positive");
  }
  Heatmap2D out(h.width(), h.height(), 0.0, h.joint_id());
  const auto in = h.values();
  auto dst = out.values();
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    dst[i] = std::exp(alpha * (in[i] - peak));
    total += dst[i];
  }
  for (auto& v : dst) v /= total;
  return out;
}

Heatmap2D spatial_softmax_backward(const Heatmap2D& p, double alpha, const Heatmap2D& grad_p) {
  if (p.width() != grad_p.width() || p.height() != grad_p.height()) {
    throw Error(ErrorCode::InvalidArgument, "gradient shape mismatch");
  }
  const auto pv = p.values();
  const auto gv = grad_p.values();
  double inner = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) inner += gv[i] * pv[i];
  Heatmap2D out(p.width(), p.height(), 0.0, p.joint_id());
  auto dst = out.values();
  for (std::size_t i = 0; i < pv.size(); ++i) dst[i] = alpha * pv[i] * (gv[i] - inner);
  return out;
}

Vec2 soft_argmax_2d(const Heatmap2D& p) {
  double sx = 0.0;
  double sy = 0.0;
  for (int y = 0; y < p.height(); ++y) {
    double row = 0.0;
    double row_x = 0.0;
    for (int x = 0; x < p.width(); ++x) {
      const double v = p.at(x, y);
      row += v;
      row_x += v * x;
    }
    sx += row_x;
    sy += row * y;
  }
  return {sx, sy};
}

Heatmap2D soft_argmax_2d_backward(const Heatmap2D& p, const Vec2& grad) {
  Heatmap2D out(p.width(), p.height(), 0.0, p.joint_id());
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) out.at(x, y) = grad.x() * x + grad.y() * y;
  }
  return out;
}

Heatmap2D render_gaussian(const Vec2& center, double sigma, int width, int height, int joint_id,
                          double support) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
  }
  if (!(support > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian support must be positive");
  }
  const double r2_max = support * support * sigma * sigma;
  Heatmap2D out(width, height, 0.0, joint_id);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  // Separable: exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) exp(-dy^2 k).
  std::vector<double> gx(static_cast<std::size_t>(width));
  for (int x = 0; x < width; ++x) {
    const double d = x - center.x();
    gx[static_cast<std::size_t>(x)] = std::exp(-d * d * inv);
  }
  for (int y = 0; y < height; ++y) {
    const double d = y - center.y();
    const double gy = std::exp(-d * d * inv);
    for (int x = 0; x < width; ++x) {
      const double dx = x - center.x();
      if (dx * dx + d * d > r2_max) continue;
      out.at(x, y) = gx[static_cast<std::size_t>(x)] * gy;
    }
  }
  return out;
}

}  // namespace learntri

#include <doctest.h>

#include <cmath>
#include <random>

#include "learntri/heatmap.hpp"
#include "support.hpp"

using namespace learntri;

namespace {

Heatmap2D random_map(int W, int H, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(static_cast<std::size_t>(W * H));
  for (auto& x : v) x = u(rng);
  return Heatmap2D(W, H, v);
}

}  // namespace

TEST_CASE("spatial softmax of a constant map is uniform") {
  for (double alpha : {0.5, 1.0, 100.0}) {
    const auto p = spatial_softmax(Heatmap2D(7, 5, 3.25), alpha);
    for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 35).epsilon(1e-12));
  }
}

TEST_CASE("two-cell softmax") {
  const auto p = spatial_softmax(Heatmap2D(2, 1, std::vector<double>{0.0, std::log(3.0)}), 1.0);
  CHECK(p.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.at(1, 0) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("sharp softmax concentrates on a dominant peak") {
  std::mt19937_64 rng(9);
  auto h = random_map(16, 16, rng);
  for (auto& v : h.values()) v *= 0.5;
  h.at(4, 9) = 0.6;  // runner-up is at most 0.5
  const auto p = spatial_softmax(h, 100.0);
  double total = 0.0;
  for (double v : p.values()) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.at(4, 9) >= 0.999);
}

TEST_CASE("softmax is shift invariant and survives large inputs") {
  std::mt19937_64 rng(1);
  const auto h = random_map(8, 6, rng);
  Heatmap2D shifted = h;
  for (auto& v : shifted.values()) v += 1e4;
  const auto a = spatial_softmax(h, 100.0);
  const auto b = spatial_softmax(shifted, 100.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) <= 1e-12);
}

TEST_CASE("soft-argmax of point masses and symmetric maps") {
  Heatmap2D delta(10, 6, 0.0);
  delta.at(7, 3) = 1.0;
  CHECK(soft_argmax_2d(delta).isApprox(Vec2(7, 3)));
  const auto uniform = spatial_softmax(Heatmap2D(5, 5, 0.0), 1.0);
  CHECK((soft_argmax_2d(uniform) - Vec2(2, 2)).norm() < 1e-12);
}

TEST_CASE("soft-argmax of a Gaussian returns its center") {
  const auto g = render_gaussian(Vec2(12.5, 20.25), 2.0, 64, 64);
  Heatmap2D p = g;
  const double s = g.sum();
  for (auto& v : p.values()) v /= s;
  const Vec2 c = soft_argmax_2d(p);
  CHECK(std::abs(c.x() - 12.5) < 1e-3);
  CHECK(std::abs(c.y() - 20.25) < 1e-3);
}

TEST_CASE("render_gaussian closed form") {
  const auto g = render_gaussian(Vec2(0, 0), 1.0, 5, 5);
  CHECK(g.at(0, 0) == doctest::Approx(1.0));
  CHECK(g.at(1, 0) == doctest::Approx(std::exp(-0.5)));
  CHECK(g.at(1, 1) == doctest::Approx(std::exp(-1.0)));
  const auto off = render_gaussian(Vec2(1.5, 0), 1.0, 5, 5);
  CHECK(off.at(1, 0) == doctest::Approx(off.at(2, 0)).epsilon(1e-15));
  CHECK_THROWS(render_gaussian(Vec2(0, 0), 0.0, 5, 5));
}

TEST_CASE("render_gaussian support cutoff zeroes the tails only") {
  const auto full = render_gaussian(Vec2(10, 10), 2.0, 21, 21);
  const auto cut = render_gaussian(Vec2(10, 10), 2.0, 21, 21, 0, 3.0);
  for (int y = 0; y < 21; ++y) {
    for (int x = 0; x < 21; ++x) {
      const double r2 = (x - 10.0) * (x - 10.0) + (y - 10.0) * (y - 10.0);
      if (r2 > 36.0) CHECK(cut.at(x, y) == 0.0);
      else CHECK(cut.at(x, y) == full.at(x, y));
    }
  }
}

TEST_CASE("soft-argmax approaches the argmax as alpha grows") {
  std::mt19937_64 rng(21);
  const auto h = random_map(12, 12, rng);
  int best = 0;
  for (int i = 1; i < 144; ++i) {
    if (h.values()[i] > h.values()[best]) best = i;
  }
  const Vec2 target(best % 12, best / 12);
  double prev = 1e9;
  for (double alpha : {1.0, 10.0, 100.0, 1e3, 1e4, 1e5}) {
    const double d = (soft_argmax_2d(spatial_softmax(h, alpha)) - target).norm();
    CHECK(d <= prev);
    prev = d;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("soft-argmax through softmax matches finite differences") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const double alpha = 10.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_map(8, 8, rng);
    const Vec2 g(n(rng), n(rng));
    const auto p = spatial_softmax(h, alpha);
    const auto grad = spatial_softmax_backward(p, alpha, soft_argmax_2d_backward(p, g));
    auto f = [&](const std::vector<double>& x) {
      return g.dot(soft_argmax_2d(spatial_softmax(Heatmap2D(8, 8, x), alpha)));
    };
    const std::vector<double> x(h.values().begin(), h.values().end());
    const std::vector<double> a(grad.values().begin(), grad.values().end());
    CHECK(oracle::relative_error(a, oracle::central_difference(f, x)) <= 1e-4);
  }
}

TEST_CASE("soft-argmax backward rows are grid coordinates") {
  Heatmap2D p(4, 3, 1.0 / 12);
  const auto gx = soft_argmax_2d_backward(p, Vec2(1, 0));
  const auto gy = soft_argmax_2d_backward(p, Vec2(0, 1));
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(gx.at(x, y) == doctest::Approx(x));
      CHECK(gy.at(x, y) == doctest::Approx(y));
    }
  }
}

TEST_CASE("heatmap validation") {
  CHECK_THROWS(Heatmap2D(0, 3));
  CHECK_THROWS(Heatmap2D(2, 2, std::vector<double>{1, 2, 3}));
  CHECK_THROWS(Heatmap2D(1, 1, std::vector<double>{std::nan("")}));
  CHECK_THROWS(spatial_softmax(Heatmap2D(2, 2), 0.0));
}

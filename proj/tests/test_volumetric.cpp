#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "learntri/error.hpp"
#include "learntri/synth.hpp"
#include "learntri/volumetric.hpp"
#include "support.hpp"

using namespace learntri;

namespace {

VolumeGrid random_volume(const VoxelGridSpec& spec, int channels, std::mt19937_64& rng,
                         double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  VolumeGrid v(spec, channels);
  for (auto& x : v.values()) x = u(rng);
  return v;
}

Mat3 yaw_oracle(double t) {
  Mat3 R;
  R << std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t);
  return R;
}

}  // namespace

TEST_CASE("voxel centers of a 2x2x2 cube") {
  const VoxelGridSpec spec{Vec3::Zero(), 2.0, 2, 0.0};
  const auto xs = voxel_world_coords(spec);
  REQUIRE(xs.size() == 8);
  for (const auto& x : xs) {
    for (int a = 0; a < 3; ++a) CHECK(std::abs(std::abs(x(a)) - 0.5) < 1e-15);
  }
  const VoxelGridSpec moved{Vec3(1, 2, 3), 2.0, 2, 0.0};
  const auto ys = voxel_world_coords(moved);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK((ys[i] - xs[i] - Vec3(1, 2, 3)).norm() < 1e-15);
  CHECK(spec.voxel_center(0, 0, 0).isApprox(Vec3(-0.5, -0.5, -0.5)));
  CHECK(spec.voxel_center(1, 0, 1).isApprox(Vec3(0.5, -0.5, 0.5)));
}

TEST_CASE("yawed grids rotate about the vertical axis") {
  const double t = std::numbers::pi / 2;
  const VoxelGridSpec flat{Vec3(0.3, 1, -0.2), 2.5, 4, 0.0};
  VoxelGridSpec turned = flat;
  turned.yaw = t;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) {
        const Vec3 local = flat.voxel_center(i, j, k) - flat.anchor;
        const Vec3 expect = flat.anchor + yaw_oracle(t) * local;
        CHECK((turned.voxel_center(i, j, k) - expect).norm() < 1e-12);
        // A quarter turn sends local +x to world -z and local +z to world +x.
        const Vec3 w = turned.voxel_center(i, j, k) - flat.anchor;
        CHECK(std::abs(w.x() - local.z()) < 1e-12);
        CHECK(std::abs(w.z() + local.x()) < 1e-12);
        CHECK(std::abs(w.y() - local.y()) < 1e-12);
      }
    }
  }
}

TEST_CASE("default pitch and voxel lookup") {
  VoxelGridSpec spec;
  CHECK(spec.pitch() == 0.0390625);
  spec.yaw = 0.7;
  spec.anchor = Vec3(0.1, 0.9, 0.2);
  const auto idx = spec.voxel_containing(spec.voxel_center(10, 40, 63));
  REQUIRE(idx);
  CHECK((*idx)[0] == 10);
  CHECK((*idx)[1] == 40);
  CHECK((*idx)[2] == 63);
  CHECK_FALSE(spec.voxel_containing(spec.anchor + Vec3(0, 1.3, 0)));
  CHECK(oracle::thrown_code([] { VolumeGrid(VoxelGridSpec{Vec3::Zero(), 1.0, 1, 0.0}, 1); }) ==
        ErrorCode::InvalidArgument);
  CHECK(oracle::thrown_code([] { VolumeGrid(VoxelGridSpec{Vec3::Zero(), 0.0, 4, 0.0}, 1); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("bilinear sampling") {
  Heatmap2D m(6, 6, 0.0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) m.at(x, y) = 10 * y + x;
  }
  CHECK(bilinear_sample(m, Vec2(3, 4)) == 43.0);
  CHECK(bilinear_sample(m, Vec2(5, 5)) == 55.0);  // last lattice point is inside
  Heatmap2D two(2, 1, std::vector<double>{0.0, 1.0});
  CHECK(bilinear_sample(two, Vec2(0.5, 0)) == doctest::Approx(0.5));
  CHECK(bilinear_sample(m, Vec2(-10, -10)) == 0.0);
  CHECK(bilinear_sample(m, Vec2(5.01, 2)) == 0.0);
  // A linear field is reproduced exactly anywhere inside.
  CHECK(bilinear_sample(m, Vec2(2.25, 3.5)) == doctest::Approx(37.25));
  const Heatmap2D maps[] = {m, two};
  const auto both = bilinear_sample(maps, Vec2(0.5, 0));
  CHECK(both[0] == doctest::Approx(0.5));
  CHECK(both[1] == doctest::Approx(0.5));
}

TEST_CASE("unprojecting a constant map fills the grid") {
  const Rig rig = make_ring_rig(1);
  const VoxelGridSpec spec{Vec3(0, 1, 0), 1.0, 8, 0.3};
  const Heatmap2D ones[] = {Heatmap2D(384, 384, 1.0)};
  const auto view = unproject_view(rig[0], CropTransform{}, ones, spec);
  for (double v : view.volume.values()) CHECK(v == doctest::Approx(1.0));
  CHECK(view.stats.behind_camera == 0);
  CHECK(view.stats.outside_image == 0);
}

TEST_CASE("a camera behind the grid sees nothing") {
  const Rig rig = make_ring_rig(1);
  const Vec3 c = rig[0].center();
  const Vec3 forward = rig[0].factors()->R.row(2).transpose();
  const VoxelGridSpec spec{c - 3.0 * forward, 1.0, 6, 0.0};
  const Heatmap2D ones[] = {Heatmap2D(384, 384, 1.0)};
  const auto view = unproject_view(rig[0], CropTransform{}, ones, spec);
  for (double v : view.volume.values()) CHECK(v == 0.0);
  CHECK(view.stats.behind_camera == 216);
}

TEST_CASE("a Gaussian map peaks on the voxels along the joint's ray") {
  const Rig rig = make_ring_rig(3);
  const Vec3 X(0.13, 1.07, -0.21);
  const VoxelGridSpec spec{Vec3(0, 1, 0), 1.0, 16, 0.0};
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const Vec2 uv = oracle::project(rig[c].projection(), X);
    const Heatmap2D maps[] = {render_gaussian(uv, 4.0, 384, 384)};
    const auto view = unproject_view(rig[c], CropTransform{}, maps, spec);
    double best_value = -1, best_dist = 0, min_dist = 1e9;
    for (int k = 0; k < 16; ++k) {
      for (int j = 0; j < 16; ++j) {
        for (int i = 0; i < 16; ++i) {
          const double d = (oracle::project(rig[c].projection(), spec.voxel_center(i, j, k)) - uv).norm();
          min_dist = std::min(min_dist, d);
          if (view.volume.at(0, i, j, k) > best_value) {
            best_value = view.volume.at(0, i, j, k);
            best_dist = d;
          }
        }
      }
    }
    CHECK(best_dist <= min_dist + 0.5);
    CHECK(best_value == doctest::Approx(std::exp(-min_dist * min_dist / 32)).epsilon(0.02));
  }
}

TEST_CASE("crop transforms map image pixels into the heatmap") {
  const Rig rig = make_ring_rig(1);
  const Vec3 X(0.05, 0.95, 0.1);
  const Vec2 uv = oracle::project(rig[0].projection(), X);
  const auto crop = CropTransform::make(Vec2(20, -8), Vec2(4, 4));
  const Vec2 hm = crop.inverse(uv);
  const Heatmap2D maps[] = {render_gaussian(hm, 3.0, 96, 96)};
  const VoxelGridSpec spec{X, 0.1, 3, 0.0};
  const auto view = unproject_view(rig[0], crop, maps, spec);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 3; ++i) {
        const Vec2 q = crop.inverse(oracle::project(rig[0].projection(), spec.voxel_center(i, j, k)));
        const double expect = std::exp(-(q - hm).squaredNorm() / 18.0);
        CHECK(view.volume.at(0, i, j, k) == doctest::Approx(expect).epsilon(0.02));
      }
    }
  }
}

TEST_CASE("aggregation modes") {
  std::mt19937_64 rng(3);
  const VoxelGridSpec spec{Vec3::Zero(), 1.0, 4, 0.0};
  const auto a = random_volume(spec, 2, rng);

  SUBCASE("softmax over one view is the identity") {
    const VolumeGrid one[] = {a};
    const auto out = aggregate(one, AggregationMode::Softmax);
    for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(out.values()[i] == a.values()[i]);
  }
  SUBCASE("conf over identical views returns the view") {
    const VolumeGrid two[] = {a, a};
    const double d[] = {3.0, 1.0};
    const auto out = aggregate(two, AggregationMode::Confidence, d);
    for (std::size_t i = 0; i < a.values().size(); ++i) {
      CHECK(out.values()[i] == doctest::Approx(a.values()[i]).epsilon(1e-14));
    }
  }
  SUBCASE("softmax of 0 and 10") {
    VolumeGrid lo(spec, 1, 0.0), hi(spec, 1, 10.0);
    const VolumeGrid two[] = {lo, hi};
    const double expect = 10.0 * std::exp(10.0) / (1.0 + std::exp(10.0));
    const auto out = aggregate(two, AggregationMode::Softmax);
    CHECK(out.values()[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(expect == doctest::Approx(9.9995).epsilon(1e-5));
  }
  SUBCASE("equal confidences equal the mean of the sum") {
    std::vector<VolumeGrid> vs{a, random_volume(spec, 2, rng), random_volume(spec, 2, rng)};
    const double d[] = {0.7, 0.7, 0.7};
    const auto sum = aggregate(vs, AggregationMode::Sum);
    const auto conf = aggregate(vs, AggregationMode::Confidence, d);
    for (std::size_t i = 0; i < sum.values().size(); ++i) {
      CHECK(std::abs(conf.values()[i] - sum.values()[i] / 3.0) <= 1e-12);
    }
  }
  SUBCASE("softmax stays within the per-voxel range") {
    std::vector<VolumeGrid> vs;
    for (int c = 0; c < 4; ++c) vs.push_back(random_volume(spec, 2, rng, -50, 50));
    const auto out = aggregate(vs, AggregationMode::Softmax);
    for (std::size_t i = 0; i < out.values().size(); ++i) {
      double lo = 1e9, hi = -1e9;
      for (const auto& v : vs) {
        lo = std::min(lo, v.values()[i]);
        hi = std::max(hi, v.values()[i]);
      }
      CHECK(out.values()[i] >= lo);
      CHECK(out.values()[i] <= hi);
    }
  }
  SUBCASE("errors") {
    const VolumeGrid other(VoxelGridSpec{Vec3::Zero(), 1.0, 3, 0.0}, 2);
    const VolumeGrid mixed[] = {a, other};
    CHECK(oracle::thrown_code([&] { aggregate(mixed, AggregationMode::Sum); }) == ErrorCode::SpecMismatch);
    const VolumeGrid two[] = {a, a};
    const double zero[] = {0.0, 0.0};
    const double negative[] = {1.0, -0.5};
    CHECK(oracle::thrown_code([&] { aggregate(two, AggregationMode::Confidence, zero); }) == ErrorCode::BadConfidence);
    CHECK(oracle::thrown_code([&] { aggregate(two, AggregationMode::Confidence, negative); }) ==
          ErrorCode::BadConfidence);
    CHECK(oracle::thrown_code([&] { parse_aggregation("max"); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("fused unprojection matches per-view unprojection then aggregation") {
  const Rig rig = make_ring_rig(4);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(50, 330);
  std::vector<ViewMaps> views;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    ViewMaps v{rig[c], CropTransform::make(Vec2(2, 3), Vec2(4, 4)), {}};
    for (int j = 0; j < 3; ++j) {
      v.maps.push_back(render_gaussian(Vec2(u(rng), u(rng)) / 4.0, 3.0, 96, 96, j, 3.0));
    }
    views.push_back(std::move(v));
  }
  const VoxelGridSpec spec{Vec3(0, 1, 0), 2.5, 12, 0.4};
  const double conf[] = {0.5, 1.5, 1.0, 2.0};
  for (auto mode : {AggregationMode::Sum, AggregationMode::Confidence, AggregationMode::Softmax}) {
    std::vector<VolumeGrid> per_view;
    for (const auto& v : views) per_view.push_back(unproject_view(v.camera, v.crop, v.maps, spec).volume);
    const std::span<const double> d = mode == AggregationMode::Confidence ? std::span<const double>(conf)
                                                                           : std::span<const double>();
    const auto slow = aggregate(per_view, mode, d);
    const auto fast = unproject_and_aggregate(views, spec, mode, d);
    for (std::size_t i = 0; i < slow.values().size(); ++i) {
      CHECK(std::abs(fast.values()[i] - slow.values()[i]) <= 1e-15 * std::max(1.0, std::abs(slow.values()[i])));
    }
  }
}

TEST_CASE("volumetric softmax") {
  const VoxelGridSpec spec{Vec3::Zero(), 1.0, 4, 0.0};
  const auto uniform = volumetric_softmax(VolumeGrid(spec, 2, 5.0), 3.0);
  for (double v : uniform.values()) CHECK(v == doctest::Approx(1.0 / 64).epsilon(1e-12));

  VolumeGrid two(VoxelGridSpec{Vec3::Zero(), 1.0, 2, 0.0}, 1, -1e9);
  two.at(0, 0, 0, 0) = 0.0;
  two.at(0, 1, 0, 0) = std::log(3.0);
  const auto p = volumetric_softmax(two, 1.0);
  CHECK(p.at(0, 0, 0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.at(0, 1, 0, 0) == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(2);
  auto v = random_volume(spec, 3, rng, 0, 0.5);
  v.at(1, 2, 1, 3) = 0.7;
  const auto sharp = volumetric_softmax(v, 100.0);
  for (int ch = 0; ch < 3; ++ch) {
    double total = 0;
    for (double x : sharp.channel(ch)) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(sharp.at(1, 2, 1, 3) > 0.999);
}

TEST_CASE("3D soft-argmax") {
  const VoxelGridSpec spec{Vec3(0.2, 1.1, -0.3), 2.5, 8, 0.5};
  VolumeGrid delta(spec, 1, 0.0);
  delta.at(0, 1, 6, 3) = 1.0;
  CHECK((soft_argmax_3d(delta)[0] - spec.voxel_center(1, 6, 3)).norm() < 1e-12);
  const auto uniform = volumetric_softmax(VolumeGrid(spec, 1, 0.0), 1.0);
  CHECK((soft_argmax_3d(uniform)[0] - spec.anchor).norm() < 1e-12);

  // Gaussian blob centered between voxel centers.
  const VoxelGridSpec fine{Vec3::Zero(), 2.0, 32, 0.0};
  const Vec3 mu = fine.voxel_center(15, 16, 17) + 0.5 * fine.pitch() * Vec3(1, 1, 1);
  VolumeGrid blob(fine, 1);
  double total = 0;
  for (int k = 0; k < 32; ++k) {
    for (int j = 0; j < 32; ++j) {
      for (int i = 0; i < 32; ++i) {
        const double r2 = (fine.voxel_center(i, j, k) - mu).squaredNorm();
        total += blob.at(0, i, j, k) = std::exp(-r2 / (2 * 0.1 * 0.1));
      }
    }
  }
  for (auto& x : blob.values()) x /= total;
  CHECK((soft_argmax_3d(blob)[0] - mu).norm() < 0.1 * fine.pitch());
}

TEST_CASE("3D soft-argmax through the volumetric softmax matches finite differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 10; ++trial) {
    const VoxelGridSpec spec{Vec3(n(rng), n(rng), n(rng)), 2.5, 4, 2 * n(rng)};
    const auto v = random_volume(spec, 2, rng);
    const std::vector<Vec3> g{Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))};
    const double alpha = 5.0;
    const auto p = volumetric_softmax(v, alpha);
    const auto grad = volumetric_softmax_backward(p, alpha, soft_argmax_3d_backward(p, g));
    auto f = [&](const std::vector<double>& x) {
      VolumeGrid w(spec, 2);
      std::copy(x.begin(), x.end(), w.values().begin());
      const auto y = soft_argmax_3d(volumetric_softmax(w, alpha));
      return g[0].dot(y[0]) + g[1].dot(y[1]);
    };
    const std::vector<double> x(v.values().begin(), v.values().end());
    const std::vector<double> a(grad.values().begin(), grad.values().end());
    CHECK(oracle::relative_error(a, oracle::central_difference(f, x)) <= 1e-4);
  }
}

TEST_CASE("refine_volume is the identity") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 3; ++t) {
    const auto v = random_volume(VoxelGridSpec{Vec3::Zero(), 1.0, 3 + t, 0.0}, 1 + t, rng);
    const auto r = refine_volume(v);
    CHECK(std::equal(v.values().begin(), v.values().end(), r.values().begin()));
  }
}

namespace {

std::vector<ViewMaps> clean_maps(const Rig& rig, const std::vector<Vec3>& joints) {
  std::vector<ViewMaps> views;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    ViewMaps v{rig[c], CropTransform::make(Vec2::Zero(), Vec2(4, 4)), {}};
    for (std::size_t j = 0; j < joints.size(); ++j) {
      const Vec2 uv = oracle::project(rig[c].projection(), joints[j]) / 4.0;
      v.maps.push_back(render_gaussian(uv, 2.0, 96, 96, static_cast<int>(j), 3.0));
    }
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace

TEST_CASE("volumetric estimates are fixed in the scene frame under grid yaw") {
  const Rig rig = make_ring_rig(4);
  const std::vector<Vec3> joints{Vec3(0.1, 1.2, 0.05), Vec3(-0.3, 0.6, 0.2), Vec3(0.25, 1.5, -0.3)};
  const auto views = clean_maps(rig, joints);
  VolumetricConfig cfg;
  cfg.resolution = 32;
  const Vec3 anchor(0, 1, 0);
  const auto base = triangulate_volumetric(views, anchor, cfg);
  // Turning only the grid resamples the scene on a different lattice, so the
  // estimate moves by a fraction of a voxel but stays put.
  const double pitch = cfg.side_length / cfg.resolution;
  for (double yaw : {0.4, 1.3, 2.9, 5.0}) {
    cfg.yaw = yaw;
    const auto turned = triangulate_volumetric(views, anchor, cfg);
    for (std::size_t j = 0; j < joints.size(); ++j) {
      CHECK((turned.joints[j] - base.joints[j]).norm() <= pitch);
    }
  }

  // Rotating cameras and scene together with the grid changes nothing at all.
  const double t = 0.8;
  const Mat3 Ry = yaw_oracle(t);
  std::vector<Camera> moved;
  for (const auto& cam : rig.cameras()) {
    const auto& f = *cam.factors();
    const Vec3 center = anchor + Ry * (cam.center() - anchor);
    const Mat3 R = f.R * Ry.transpose();
    moved.push_back(Camera::from_factors(cam.name(), f.K, R, -R * center, cam.image_size()));
  }
  const Rig moved_rig(moved);
  auto moved_views = views;
  for (std::size_t c = 0; c < views.size(); ++c) moved_views[c].camera = moved_rig[c];
  cfg.yaw = t;
  const auto rotated = triangulate_volumetric(moved_views, anchor, cfg);
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const Vec3 back = anchor + Ry.transpose() * (rotated.joints[j] - anchor);
    CHECK((back - base.joints[j]).norm() < 1e-9);
  }
}

TEST_CASE("conf aggregation gradient matches finite differences") {
  const Rig rig = make_ring_rig(3);
  const std::vector<Vec3> joints{Vec3(0.1, 1.2, 0.05), Vec3(-0.3, 0.7, 0.2)};
  auto views = clean_maps(rig, joints);
  // Make the views disagree so the confidences matter.
  views[1] = clean_maps(rig, {joints[0] + Vec3(0.05, 0, 0), joints[1] + Vec3(0, 0.04, 0)})[1];
  VolumetricConfig cfg;
  cfg.aggregation = AggregationMode::Confidence;
  cfg.resolution = 12;
  cfg.inverse_temperature = 20.0;
  cfg.confidences = {0.6, 1.7, 1.1};
  const std::vector<Vec3> g{Vec3(1, -0.5, 0.3), Vec3(-0.2, 0.8, 1.0)};
  const auto r = triangulate_volumetric(views, Vec3(0, 1, 0), cfg);
  const auto a = volumetric_confidence_gradient(views, r, g, cfg);
  auto f = [&](const std::vector<double>& d) {
    auto c2 = cfg;
    c2.confidences = d;
    const auto y = triangulate_volumetric(views, Vec3(0, 1, 0), c2).joints;
    return g[0].dot(y[0]) + g[1].dot(y[1]);
  };
  CHECK(oracle::relative_error(a, oracle::central_difference(f, cfg.confidences)) <= 1e-4);
  // Scaling every confidence leaves the volume unchanged, so the gradient is
  // orthogonal to d.
  double dot = 0, norm = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    dot += a[c] * cfg.confidences[c];
    norm += a[c] * a[c];
  }
  CHECK(std::abs(dot) <= 1e-9 * std::sqrt(norm) + 1e-15);
}

TEST_CASE("default volume temperature") {
  CHECK(default_volume_temperature(AggregationMode::Softmax, 4) == kDefaultVolumeTemperature);
  CHECK(default_volume_temperature(AggregationMode::Confidence, 4) == kDefaultVolumeTemperature);
  CHECK(default_volume_temperature(AggregationMode::Sum, 4) == kDefaultVolumeTemperature / 4);
}

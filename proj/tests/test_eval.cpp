#include <doctest.h>

#include <random>

#include "learntri/eval.hpp"
#include "learntri/pipeline.hpp"
#include "support.hpp"

using namespace learntri;

namespace {

Pose3D random_pose(std::mt19937_64& rng, std::size_t joints = 17) {
  std::normal_distribution<double> n;
  std::vector<Vec3> js;
  for (std::size_t j = 0; j < joints; ++j) js.emplace_back(n(rng), n(rng), n(rng));
  return Pose3D::all_valid(std::move(js));
}

}  // namespace

TEST_CASE("MPJPE examples") {
  std::mt19937_64 rng(1);
  const Pose3D gt = random_pose(rng);
  CHECK(mpjpe(gt, gt) == 0.0);

  Pose3D single = Pose3D::all_valid({Vec3(1, 2, 3)});
  Pose3D moved = Pose3D::all_valid({Vec3(1.03, 2, 3)});
  CHECK(mpjpe(moved, single) == doctest::Approx(30.0).epsilon(1e-12));

  Pose3D shifted = gt;
  for (auto& j : shifted.joints) j += Vec3(0.03, 0.04, 0.0);
  CHECK(mpjpe(shifted, gt, false) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(mpjpe(shifted, gt, true) <= 1e-9);
}

TEST_CASE("MPJPE symmetry, relative invariance and masks") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    const Pose3D a = random_pose(rng), b = random_pose(rng);
    CHECK(mpjpe(a, b) == doctest::Approx(mpjpe(b, a)).epsilon(1e-15));
    CHECK(mpjpe(a, b, true) == doctest::Approx(mpjpe(b, a, true)).epsilon(1e-15));
    Pose3D c = a;
    const Vec3 k(n(rng), n(rng), n(rng));
    for (auto& j : c.joints) j += k;
    CHECK(std::abs(mpjpe(c, b, true) - mpjpe(a, b, true)) <= 1e-12 * mpjpe(a, b, true) + 1e-9);
  }
  Pose3D a = Pose3D::all_valid({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 0)});
  Pose3D b = Pose3D::all_valid({Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(0, 0, 0.002)});
  a.valid[1] = false;
  CHECK(mpjpe(a, b) == doctest::Approx(1.0).epsilon(1e-12));  // (0 + 2 mm) / 2
}

TEST_CASE("MPJPE errors") {
  Pose3D a = Pose3D::all_valid({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  Pose3D none = a;
  none.valid = {false, false};
  CHECK(oracle::thrown_code([&] { mpjpe(none, a); }) == ErrorCode::NoValidJoints);
  Pose3D no_pelvis = a;
  no_pelvis.valid[0] = false;
  CHECK(oracle::thrown_code([&] { mpjpe(no_pelvis, a, true); }) == ErrorCode::PelvisMissing);
  CHECK_NOTHROW(mpjpe(no_pelvis, a, false));
  MpjpeAccumulator acc;
  CHECK(oracle::thrown_code([&] { acc.mean_mm(); }) == ErrorCode::NoValidJoints);
  acc.add_failure(3);
  CHECK(acc.failures() == 3);
}

TEST_CASE("accumulator is joint weighted") {
  MpjpeAccumulator acc;
  CHECK(acc.add(Pose3D::all_valid({Vec3(0.01, 0, 0)}), Pose3D::all_valid({Vec3::Zero()})) == 1);
  CHECK(acc.add(Pose3D::all_valid({Vec3(0.04, 0, 0), Vec3(0.04, 0, 0)}),
                Pose3D::all_valid({Vec3::Zero(), Vec3::Zero()})) == 2);
  CHECK(acc.count() == 3);
  CHECK(acc.mean_mm() == doctest::Approx(30.0).epsilon(1e-12));
}

namespace {

FrameMethod dlt_method() {
  return [](const Rig& rig, const Frame& f) { return estimate_algebraic(rig, f).pose(kTemplatePelvis); };
}

}  // namespace

TEST_CASE("camera subset sweep") {
  const Rig rig = make_ring_rig(8);
  SceneConfig cfg;
  cfg.num_cameras = 8;
  cfg.num_frames = 10;
  cfg.seed = 6;

  SUBCASE("clean data is near zero everywhere") {
    const auto frames = generate_frames(rig, cfg);
    const int sizes[] = {2, 4, 8};
    const auto r = camera_subset_sweep(rig, frames, dlt_method(), sizes, 50, 1);
    for (double v : r.mpjpe_mm) CHECK(v < 1e-6);
    CHECK(r.distinct_subsets.back() == 1);
    CHECK(r.trials == 50);
  }
  SUBCASE("full rig matches one evaluation") {
    cfg.pixel_noise_sigma = 2.0;
    const auto frames = generate_frames(rig, cfg);
    const int sizes[] = {8};
    const auto r = camera_subset_sweep(rig, frames, dlt_method(), sizes, 50, 1);
    MpjpeAccumulator acc;
    for (const auto& f : frames) acc.add(dlt_method()(rig, f), *f.gt_pose);
    CHECK(r.mpjpe_mm[0] == doctest::Approx(acc.mean_mm()).epsilon(1e-12));
  }
  SUBCASE("noisy sweep decreases and is deterministic") {
    cfg.pixel_noise_sigma = 2.0;
    cfg.num_frames = 20;
    const auto frames = generate_frames(rig, cfg);
    const int sizes[] = {2, 3, 4, 6, 8};
    const auto a = camera_subset_sweep(rig, frames, dlt_method(), sizes, 50, 7);
    CHECK(a.non_increasing());
    const auto b = camera_subset_sweep(rig, frames, dlt_method(), sizes, 50, 7);
    CHECK(a.mpjpe_mm == b.mpjpe_mm);
    CHECK(a.distinct_subsets[0] <= 28);
  }
  SUBCASE("bad sizes") {
    const auto frames = generate_frames(rig, cfg);
    const int too_big[] = {9};
    CHECK(oracle::thrown_code([&] { camera_subset_sweep(rig, frames, dlt_method(), too_big, 50, 1); }) ==
          ErrorCode::InvalidArgument);
    const int too_small[] = {1};
    CHECK(oracle::thrown_code([&] { camera_subset_sweep(rig, frames, dlt_method(), too_small, 50, 1); }) ==
          ErrorCode::InvalidArgument);
  }
}

TEST_CASE("non_increasing") {
  SweepResult r;
  r.mpjpe_mm = {10, 8, 8, 3};
  CHECK(r.non_increasing());
  r.mpjpe_mm = {10, 8, 9};
  CHECK_FALSE(r.non_increasing());
}

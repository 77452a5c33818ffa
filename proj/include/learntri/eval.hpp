#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "learntri/pose.hpp"
#include "learntri/synth.hpp"

namespace learntri {

/// Mean L2 joint error in millimeters over joints valid in both poses,
/// optionally after subtracting each pose's own pelvis.
double mpjpe(const Pose3D& pred, const Pose3D& gt, bool relative = false);

/// Joint-weighted MPJPE accumulated over many frames.
class MpjpeAccumulator {
 public:
  explicit MpjpeAccumulator(bool relative = false) : relative_(relative) {}

  /// Adds every jointly valid joint; returns how many were added.
  std::size_t add(const Pose3D& pred, const Pose3D& gt);
  void add_failure(std::size_t joints = 1) { failures_ += joints; }

  std::size_t count() const noexcept { return count_; }
  std::size_t failures() const noexcept { return failures_; }
  /// Throws NoValidJoints when nothing was added.
  double mean_mm() const;

 private:
  bool relative_;
  double sum_mm_ = 0.0;
  std::size_t count_ = 0;
  std::size_t failures_ = 0;
};

/// A method maps a (sub)rig and a frame restricted to it to a pose.
using FrameMethod = std::function<Pose3D(const Rig&, const Frame&)>;

struct SweepResult {
  std::vector<int> sizes;
  std::vector<double> mpjpe_mm;
  std::vector<std::size_t> failures;
  std::vector<std::size_t> distinct_subsets;
  int trials = 0;

  bool non_increasing() const;
};

/// For each size, averages absolute MPJPE over `trials` seeded random camera
/// subsets. Identical subsets are evaluated once. Failures are counted.
SweepResult camera_subset_sweep(const Rig& rig, std::span<const Frame> frames,
                                const FrameMethod& method, std::span<const int> sizes,
                                int trials, std::uint64_t seed, int min_views = 2);

}  // namespace learntri

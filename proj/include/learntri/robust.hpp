#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "learntri/triangulation.hpp"

namespace learntri {

/// RANSAC baseline settings. The numeric defaults are tool defaults, not
/// published values.
struct RansacConfig {
  int iterations = 100;
  double huber_delta = 5.0;        // px
  double inlier_threshold = 10.0;  // px
  std::uint64_t seed = 0;

  void validate() const;
};

struct RansacResult {
  TriangulationResult triangulation;
  std::vector<bool> inliers;
  std::size_t hypotheses_scored = 0;
  double best_score = 0.0;
};

/// r^2/2 inside [-delta, delta], delta (|r| - delta/2) outside.
double huber(double residual, double delta);

/// Samples camera pairs (all pairs when there are at most `iterations` of
/// them, otherwise seeded draws), scores each two-view solution with the
/// Huber loss of the residuals capped at the inlier threshold, then refits an
/// unweighted DLT on the inliers of the best hypothesis.
RansacResult ransac_triangulate(const Rig& rig, std::span<const Observation> obs,
                                const RansacConfig& cfg);

}  // namespace learntri

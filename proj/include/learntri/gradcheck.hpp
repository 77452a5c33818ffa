#pragma once

// Central finite-difference checks of every analytic backward pass, run on
// seeded random well-conditioned instances.

#include <cstdint>
#include <string>
#include <vector>

namespace learntri {

struct GradcheckSuite {
  std::string name;
  int trials = 0;
  /// Worst per-trial error: max_i |analytic_i - numeric_i| over the larger
  /// of the two gradients' max norms.
  double max_rel_error = 0.0;
  int worst_trial = -1;
};

struct GradcheckConfig {
  int trials = 100;
  std::uint64_t seed = 1;
  double step = 1e-5;

  void validate() const;
};

/// Suites: triangulate (pixels and weights), soft_argmax_2d, soft_argmax_3d,
/// soft_mse, vol_l1, volumetric_conf.
std::vector<GradcheckSuite> run_gradcheck(const GradcheckConfig& cfg);

/// Relative error of one gradient pair as used by the suites.
double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace learntri

#include "learntri/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "learntri/error.hpp"
#include "learntri/random.hpp"

namespace learntri {

void RansacConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (!(huber_delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "huber delta must be > 0");
  if (!(inlier_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "inlier threshold must be > 0");
  }
}

double huber(double residual, double delta) {
  const double a = std::abs(residual);
  if (a <= delta) return 0.5 * a * a;
  return delta * (a - 0.5 * delta);
}

namespace {

using Pair = std::pair<std::size_t, std::size_t>;

std::vector<Pair> candidate_pairs(std::size_t n, const RansacConfig& cfg) {
  std::vector<Pair> pairs;
  const std::size_t total = n * (n - 1) / 2;
  if (total <= static_cast<std::size_t>(cfg.iterations)) {
    pairs.reserve(total);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
  }
  Rng rng(cfg.seed);
  pairs.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  return pairs;
}

}  // namespace

RansacResult ransac_triangulate(const Rig& rig, std::span<const Observation> obs,
                                const RansacConfig& cfg) {
  cfg.validate();
  if (obs.size() < 2) throw Error(ErrorCode::TooFewViews, "RANSAC needs at least 2 views");

  // The pair order is fixed before any scoring so results depend on the seed only.
  const auto pairs = candidate_pairs(obs.size(), cfg);
  const double capped = huber(cfg.inlier_threshold, cfg.huber_delta);

  RansacResult out;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_residuals;
  for (const auto& [i, j] : pairs) {
    Observation sample[2] = {obs[i], obs[j]};
    sample[0].weight = sample[1].weight = 1.0;
    TriangulationResult hyp;
    try {
      hyp = triangulate(rig, sample, false);
    } catch (const Error&) {
      continue;
    }
    ++out.hypotheses_scored;
    const auto residuals = reprojection_residuals(rig, obs, hyp.point);
    double score = 0.0;
    for (double r : residuals) {
      score += r <= cfg.inlier_threshold ? huber(r, cfg.huber_delta) : capped;
    }
    if (score < best) {
      best = score;
      best_residuals = residuals;
    }
  }
  if (best_residuals.empty()) {
    throw Error(ErrorCode::NoConsensus, "no camera pair produced a valid hypothesis");
  }

  out.best_score = best;
  out.inliers.resize(obs.size());
  std::vector<Observation> inlier_obs;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    out.inliers[k] = best_residuals[k] <= cfg.inlier_threshold;
    if (out.inliers[k]) {
      inlier_obs.push_back(obs[k]);
      inlier_obs.back().weight = 1.0;
    }
  }
  if (inlier_obs.size() < 2) {
    throw Error(ErrorCode::NoConsensus, "best hypothesis has fewer than 2 inliers");
  }

  out.triangulation = triangulate(rig, inlier_obs, false);
  out.triangulation.per_view_residual = reprojection_residuals(rig, obs, out.triangulation.point);
  return out;
}

}  // namespace learntri

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "learntri/pipeline.hpp"
#include "learntri/synth.hpp"

namespace learntri {

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

/// Learnable per-camera(-per-joint) confidences: effective = softplus(raw).
/// Unless `per_joint`, all columns of `raw` stay identical (one weight per
/// camera shared by every joint).
struct ConfidenceWeights {
  Eigen::MatrixXd raw;  // C x J
  bool per_joint = false;

  /// All effective weights equal to 1.
  static ConfidenceWeights uniform(std::size_t cameras, std::size_t joints, bool per_joint = false);

  Eigen::MatrixXd effective() const;
  std::size_t cameras() const { return static_cast<std::size_t>(raw.rows()); }
  std::size_t joints() const { return static_cast<std::size_t>(raw.cols()); }
};

enum class ParameterSet { AlgebraicWeights, VolumetricConfidence };

struct FitConfig {
  // The dataset loss is in m^2, so gradients are small and need a large step.
  double learning_rate = 100.0;
  int steps = 500;
  std::uint64_t seed = 0;
  ParameterSet parameters = ParameterSet::AlgebraicWeights;
  bool per_joint = false;
  double epsilon = 0.04;  // soft MSE threshold, m^2
  /// Std of seeded noise added to the initial raw parameters.
  double init_jitter = 0.0;
  /// Volumetric pipeline used for VolumetricConfidence (aggregation is forced to conf).
  VolumetricOptions volumetric;

  void validate() const;
};

struct FitResult {
  ConfidenceWeights weights;
  /// Dataset loss before each update, then after the last one (steps + 1 values).
  std::vector<double> loss_trace;
  std::size_t terms = 0;  // (frame, joint) pairs in the loss
};

struct DatasetLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_raw;  // same shape as the weights
  std::size_t terms = 0;
};

/// Mean soft-MSE over (frame, joint) pairs with at least two visible views,
/// and its gradient w.r.t. the raw parameters through triangulate_backward.
DatasetLoss algebraic_dataset_loss(std::span<const Frame> frames, const Rig& rig,
                                   const ConfidenceWeights& weights, double epsilon);

/// Same for the volumetric pipeline with conf aggregation; weights are C x 1.
DatasetLoss volumetric_dataset_loss(std::span<const Frame> frames, const Rig& rig,
                                    const ConfidenceWeights& weights, double epsilon,
                                    const VolumetricOptions& opts);

/// Full-batch gradient descent on the chosen parameters. Frames are visited
/// in index order so traces are reproducible bit for bit.
FitResult fit_weights(std::span<const Frame> frames, const Rig& rig, const FitConfig& cfg);

struct WeightedComparison {
  double uniform_mpjpe_mm = 0.0;
  double fitted_mpjpe_mm = 0.0;
  std::size_t joints = 0;
  std::size_t uniform_failures = 0;
  std::size_t fitted_failures = 0;
};

/// Absolute MPJPE of unweighted vs weighted DLT on held-out frames.
WeightedComparison evaluate_weighted_vs_unweighted(std::span<const Frame> frames, const Rig& rig,
                                                   const ConfidenceWeights& weights);

}  // namespace learntri

#include "learntri/learn.hpp"

#include <cmath>

#include "learntri/error.hpp"
#include "learntri/eval.hpp"
#include "learntri/losses.hpp"
#include "learntri/random.hpp"

namespace learntri {

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw Error(ErrorCode::InvalidArgument, "softplus inverse needs y > 0");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ConfidenceWeights ConfidenceWeights::uniform(std::size_t cameras, std::size_t joints,
                                             bool per_joint) {
  ConfidenceWeights w;
  w.raw = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cameras),
                                    static_cast<Eigen::Index>(joints), softplus_inverse(1.0));
  w.per_joint = per_joint;
  return w;
}

Eigen::MatrixXd ConfidenceWeights::effective() const {
  return raw.unaryExpr([](double x) { return softplus(x); });
}

void FitConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidArgument, "learning rate must be finite and >= 0");
  }
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (!(init_jitter >= 0.0)) throw Error(ErrorCode::InvalidArgument, "init jitter must be >= 0");
}

namespace {

Eigen::MatrixXd chain_softplus(const ConfidenceWeights& w, const Eigen::MatrixXd& grad_eff) {
  Eigen::MatrixXd g = grad_eff.cwiseProduct(w.raw.unaryExpr([](double x) { return sigmoid(x); }));
  if (!w.per_joint && g.cols() > 1) {
    // Tied parameters: every column receives the summed gradient.
    const Eigen::VectorXd total = g.rowwise().sum();
    g.colwise() = total;
  }
  return g;
}

}  // namespace

DatasetLoss algebraic_dataset_loss(std::span<const Frame> frames, const Rig& rig,
                                   const ConfidenceWeights& weights, double epsilon) {
  const Eigen::MatrixXd eff = weights.effective();
  Eigen::MatrixXd grad_eff = Eigen::MatrixXd::Zero(eff.rows(), eff.cols());
  DatasetLoss out;
  double total = 0.0;
  for (const auto& frame : frames) {
    if (!frame.gt_pose) throw Error(ErrorCode::InvalidArgument, "fit frames need ground truth");
    for (std::size_t j = 0; j < frame.num_joints(); ++j) {
      auto obs = observations_for_joint(frame, j);
      if (obs.size() < 2) continue;
      for (auto& o : obs) {
        o.weight = eff(static_cast<Eigen::Index>(o.camera_index), static_cast<Eigen::Index>(j));
      }
      TriangulationResult r;
      try {
        r = triangulate(rig, obs, true);
      } catch (const Error&) {
        continue;
      }
      const auto loss = soft_mse_loss(r.point, frame.gt_pose->joints[j], epsilon);
      TriangulationGradient g;
      try {
        g = triangulate_backward(r, loss.gradient);
      } catch (const Error&) {
        continue;
      }
      total += loss.value;
      ++out.terms;
      for (std::size_t k = 0; k < obs.size(); ++k) {
        grad_eff(static_cast<Eigen::Index>(obs[k].camera_index), static_cast<Eigen::Index>(j)) +=
            g.weights[k];
      }
    }
  }
  if (out.terms == 0) throw Error(ErrorCode::EmptyDataset, "no joint had two usable views");
  const double scale = 1.0 / static_cast<double>(out.terms);
  out.value = total * scale;
  out.grad_raw = chain_softplus(weights, grad_eff * scale);
  return out;
}

DatasetLoss volumetric_dataset_loss(std::span<const Frame> frames, const Rig& rig,
                                    const ConfidenceWeights& weights, double epsilon,
                                    const VolumetricOptions& opts) {
  if (weights.cameras() != rig.size() || weights.joints() != 1) {
    throw Error(ErrorCode::InvalidArgument, "volumetric confidences must be C x 1");
  }
  VolumetricConfig vcfg = opts.volume;
  vcfg.aggregation = AggregationMode::Confidence;
  vcfg.refiner = nullptr;
  const Eigen::MatrixXd eff = weights.effective();
  vcfg.confidences.assign(eff.data(), eff.data() + eff.rows());

  Eigen::MatrixXd grad_eff = Eigen::MatrixXd::Zero(eff.rows(), 1);
  DatasetLoss out;
  double total = 0.0;
  for (const auto& frame : frames) {
    if (!frame.gt_pose) throw Error(ErrorCode::InvalidArgument, "fit frames need ground truth");
    Vec3 anchor;
    try {
      anchor = triangulate(rig, observations_for_joint(frame, opts.pelvis_index), false).point;
    } catch (const Error&) {
      continue;
    }
    const auto views = render_frame_heatmaps(frame, rig, opts.crop, opts.heatmap_sigma, opts.heatmap_support);
    const auto result = triangulate_volumetric(views, anchor, vcfg);
    std::vector<Vec3> grad_joints(frame.num_joints(), Vec3::Zero());
    for (std::size_t j = 0; j < frame.num_joints(); ++j) {
      if (observations_for_joint(frame, j).empty()) continue;
      const auto loss = soft_mse_loss(result.joints[j], frame.gt_pose->joints[j], epsilon);
      total += loss.value;
      grad_joints[j] = loss.gradient;
      ++out.terms;
    }
    const auto g = volumetric_confidence_gradient(views, result, grad_joints, vcfg);
    for (std::size_t c = 0; c < g.size(); ++c) grad_eff(static_cast<Eigen::Index>(c), 0) += g[c];
  }
  if (out.terms == 0) throw Error(ErrorCode::EmptyDataset, "no usable frames");
  const double scale = 1.0 / static_cast<double>(out.terms);
  out.value = total * scale;
  out.grad_raw = chain_softplus(weights, grad_eff * scale);
  return out;
}

FitResult fit_weights(std::span<const Frame> frames, const Rig& rig, const FitConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw Error(ErrorCode::EmptyDataset, "fit needs at least one frame");
  const bool volumetric = cfg.parameters == ParameterSet::VolumetricConfidence;
  const std::size_t J = volumetric ? 1 : frames.front().num_joints();

  FitResult out;
  out.weights = ConfidenceWeights::uniform(rig.size(), J, cfg.per_joint && !volumetric);
  if (cfg.init_jitter > 0.0) {
    Rng rng(cfg.seed);
    for (Eigen::Index c = 0; c < out.weights.raw.rows(); ++c) {
      const double shared = rng.normal();
      for (Eigen::Index j = 0; j < out.weights.raw.cols(); ++j) {
        out.weights.raw(c, j) += cfg.init_jitter * (out.weights.per_joint ? rng.normal() : shared);
      }
    }
  }

  auto evaluate = [&](const ConfidenceWeights& w) {
    auto loss = volumetric ? volumetric_dataset_loss(frames, rig, w, cfg.epsilon, cfg.volumetric)
                           : algebraic_dataset_loss(frames, rig, w, cfg.epsilon);
    if (!std::isfinite(loss.value) || !loss.grad_raw.allFinite()) {
      throw Error(ErrorCode::DivergedFit, "loss or gradient became non-finite");
    }
    return loss;
  };

  out.loss_trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto loss = evaluate(out.weights);
    out.loss_trace.push_back(loss.value);
    out.terms = loss.terms;
    out.weights.raw -= cfg.learning_rate * loss.grad_raw;
  }
  out.loss_trace.push_back(evaluate(out.weights).value);
  return out;
}

WeightedComparison evaluate_weighted_vs_unweighted(std::span<const Frame> frames, const Rig& rig,
                                                   const ConfidenceWeights& weights) {
  if (frames.empty()) throw Error(ErrorCode::EmptyDataset, "held-out set is empty");
  const Eigen::MatrixXd eff = weights.effective();
  MpjpeAccumulator uniform(false);
  MpjpeAccumulator fitted(false);
  for (const auto& f : frames) {
    if (!f.gt_pose) throw Error(ErrorCode::InvalidArgument, "held-out frames need ground truth");
    const auto pelvis = f.gt_pose->pelvis_index;
    uniform.add(estimate_algebraic(rig, f, nullptr).pose(pelvis), *f.gt_pose);
    fitted.add(estimate_algebraic(rig, f, &eff).pose(pelvis), *f.gt_pose);
  }
  WeightedComparison out;
  out.uniform_mpjpe_mm = uniform.mean_mm();
  out.fitted_mpjpe_mm = fitted.mean_mm();
  out.joints = fitted.count();
  out.uniform_failures = uniform.failures();
  out.fitted_failures = fitted.failures();
  return out;
}

}  // namespace learntri

#include "learntri/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "learntri/error.hpp"
#include "learntri/heatmap.hpp"
#include "learntri/losses.hpp"
#include "learntri/random.hpp"
#include "learntri/synth.hpp"
#include "learntri/triangulation.hpp"
#include "learntri/volumetric.hpp"

namespace learntri {

void GradcheckConfig::validate() const {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "gradcheck needs at least one trial");
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  }
}

double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) {
    throw Error(ErrorCode::InvalidArgument, "gradient sizes differ");
  }
  double diff = 0.0;
  double scale = 1e-12;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

namespace {

using Scalar = std::function<double(const std::vector<double>&)>;

std::vector<double> central_difference(const Scalar& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

class SuiteRunner {
 public:
  SuiteRunner(std::string name, int trials) { suite_.name = std::move(name); suite_.trials = trials; }

  void record(int trial, double err) {
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    if (suite_.worst_trial < 0 || err > suite_.max_rel_error) {
      suite_.max_rel_error = err;
      suite_.worst_trial = trial;
    }
  }

  GradcheckSuite result() const { return suite_; }

 private:
  GradcheckSuite suite_;
};

Rig random_rig(Rng& rng, const Vec3& target, int cameras) {
  std::vector<Camera> cams;
  for (int c = 0; c < cameras; ++c) {
    // Spread the azimuths so the views stay well separated.
    const double az = 2.0 * std::numbers::pi * (c + rng.uniform(-0.2, 0.2)) / cameras;
    const double el = rng.uniform(-0.3, 0.5);
    const double r = rng.uniform(3.0, 5.0);
    const Vec3 eye = target + r * Vec3(std::cos(el) * std::sin(az), std::sin(el),
                                       std::cos(el) * std::cos(az));
    const double f = rng.uniform(400.0, 900.0);
    Mat3 K;
    K << f, 0.0, rng.uniform(150.0, 230.0), 0.0, f, rng.uniform(150.0, 230.0), 0.0, 0.0, 1.0;
    const Mat3 R = look_at_rotation(eye, target);
    cams.push_back(Camera::from_factors("g" + std::to_string(c), K, R, -R * eye, {384, 384}));
  }
  return Rig(std::move(cams));
}

void triangulate_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  for (int t = 0; t < cfg.trials; ++t) {
    const Vec3 X(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5));
    const Rig rig = random_rig(rng, X, 4);
    std::vector<Observation> obs;
    for (std::size_t c = 0; c < rig.size(); ++c) {
      const Vec2 px = project(rig[c], X).pixel + 2.0 * Vec2(rng.normal(), rng.normal());
      obs.push_back({c, px, rng.uniform(0.5, 2.0)});
    }
    // x = (u0, v0, ..., u3, v3, w0, ..., w3)
    std::vector<double> x;
    for (const auto& o : obs) x.insert(x.end(), {o.point.x(), o.point.y()});
    for (const auto& o : obs) x.push_back(o.weight);
    const Vec3 g(rng.normal(), rng.normal(), rng.normal());
    auto solve = [&](const std::vector<double>& v) {
      std::vector<Observation> o = obs;
      for (std::size_t k = 0; k < o.size(); ++k) {
        o[k].point = Vec2(v[2 * k], v[2 * k + 1]);
        o[k].weight = v[2 * o.size() + k];
      }
      return o;
    };
    const auto r = triangulate(rig, obs, true);
    const auto grad = triangulate_backward(r, g);
    std::vector<double> analytic;
    for (const auto& p : grad.points) analytic.insert(analytic.end(), {p.x(), p.y()});
    analytic.insert(analytic.end(), grad.weights.begin(), grad.weights.end());
    const auto numeric = central_difference(
        [&](const std::vector<double>& v) { return g.dot(triangulate(rig, solve(v)).point); }, x,
        cfg.step);
    out.record(t, gradient_error(analytic, numeric));
  }
}

void soft_argmax_2d_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  const int W = 8;
  const int H = 8;
  const double alpha = 10.0;
  for (int t = 0; t < cfg.trials; ++t) {
    std::vector<double> x(W * H);
    for (auto& v : x) v = rng.uniform();
    const Vec2 g(rng.normal(), rng.normal());
    auto f = [&](const std::vector<double>& v) {
      return g.dot(soft_argmax_2d(spatial_softmax(Heatmap2D(W, H, v), alpha)));
    };
    const Heatmap2D p = spatial_softmax(Heatmap2D(W, H, x), alpha);
    const Heatmap2D gh = spatial_softmax_backward(p, alpha, soft_argmax_2d_backward(p, g));
    const std::vector<double> analytic(gh.values().begin(), gh.values().end());
    out.record(t, gradient_error(analytic, central_difference(f, x, cfg.step)));
  }
}

void soft_argmax_3d_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  const int channels = 2;
  const double alpha = 5.0;
  for (int t = 0; t < cfg.trials; ++t) {
    const VoxelGridSpec spec{Vec3(rng.normal(), rng.normal(), rng.normal()), 2.5, 4,
                             rng.uniform(0.0, 2.0 * std::numbers::pi)};
    VolumeGrid v(spec, channels);
    for (auto& x : v.values()) x = rng.uniform();
    std::vector<Vec3> g;
    for (int c = 0; c < channels; ++c) g.emplace_back(rng.normal(), rng.normal(), rng.normal());
    auto f = [&](const std::vector<double>& x) {
      VolumeGrid w(spec, channels);
      std::copy(x.begin(), x.end(), w.values().begin());
      const auto y = soft_argmax_3d(volumetric_softmax(w, alpha));
      double s = 0.0;
      for (int c = 0; c < channels; ++c) s += g[static_cast<std::size_t>(c)].dot(y[static_cast<std::size_t>(c)]);
      return s;
    };
    const VolumeGrid p = volumetric_softmax(v, alpha);
    const VolumeGrid gv = volumetric_softmax_backward(p, alpha, soft_argmax_3d_backward(p, g));
    const std::vector<double> x(v.values().begin(), v.values().end());
    const std::vector<double> analytic(gv.values().begin(), gv.values().end());
    out.record(t, gradient_error(analytic, central_difference(f, x, cfg.step)));
  }
}

void soft_mse_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  const double eps = 0.04;
  for (int t = 0; t < cfg.trials; ++t) {
    const Vec3 gt(rng.normal(), rng.normal(), rng.normal());
    // Alternate between the quadratic and the compressed branch, away from the kink.
    const double target_m = (t % 2 == 0) ? rng.uniform(0.05, 0.9) * eps : rng.uniform(1.1, 20.0) * eps;
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    const Vec3 pred = gt + std::sqrt(3.0 * target_m) * dir;
    const auto loss = soft_mse_loss(pred, gt, eps);
    const std::vector<double> analytic{loss.gradient.x(), loss.gradient.y(), loss.gradient.z()};
    auto f = [&](const std::vector<double>& x) {
      return soft_mse_loss(Vec3(x[0], x[1], x[2]), gt, eps).value;
    };
    out.record(t, gradient_error(analytic, central_difference(f, {pred.x(), pred.y(), pred.z()}, cfg.step)));
  }
}

void vol_l1_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  const double beta = 0.01;
  const int channels = 2;
  for (int t = 0; t < cfg.trials; ++t) {
    const VoxelGridSpec spec{Vec3::Zero(), 2.5, 4, 0.0};
    VolumeGrid probs(spec, channels);
    for (auto& v : probs.values()) v = rng.uniform(0.05, 1.0);
    std::vector<Vec3> gt;
    std::vector<Vec3> pred;
    for (int c = 0; c < channels; ++c) {
      const Vec3 y(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      gt.push_back(y);
      // Keep every coordinate difference away from the L1 kink.
      Vec3 d;
      for (int a = 0; a < 3; ++a) {
        const double mag = rng.uniform(0.01, 0.3);
        d(a) = rng.uniform() < 0.5 ? -mag : mag;
      }
      pred.push_back(y + d);
    }
    const auto loss = vol_l1_loss(pred, gt, probs, beta);
    // x = predicted coordinates, then every probability value.
    std::vector<double> x;
    for (const auto& p : pred) x.insert(x.end(), {p.x(), p.y(), p.z()});
    x.insert(x.end(), probs.values().begin(), probs.values().end());
    std::vector<double> analytic;
    for (const auto& g : loss.grad_pred) analytic.insert(analytic.end(), {g.x(), g.y(), g.z()});
    std::vector<double> grad_v(probs.values().size(), 0.0);
    for (const auto& e : loss.grad_volume) {
      grad_v[static_cast<std::size_t>(e.channel) * probs.voxels_per_channel() + e.voxel] += e.value;
    }
    analytic.insert(analytic.end(), grad_v.begin(), grad_v.end());
    auto f = [&](const std::vector<double>& v) {
      std::vector<Vec3> p;
      for (int c = 0; c < channels; ++c) {
        const auto b = static_cast<std::size_t>(3 * c);
        p.emplace_back(v[b], v[b + 1], v[b + 2]);
      }
      VolumeGrid w(spec, channels);
      std::copy(v.begin() + 3 * channels, v.end(), w.values().begin());
      return vol_l1_loss(p, gt, w, beta).value;
    };
    out.record(t, gradient_error(analytic, central_difference(f, x, cfg.step)));
  }
}

void volumetric_conf_suite(const GradcheckConfig& cfg, Rng& rng, SuiteRunner& out) {
  const int views = 3;
  const int joints = 2;
  const Rig rig = make_ring_rig(views, 4.0, 1.5, Vec3(0.0, 1.0, 0.0), 96);
  CropPolicy crop;
  crop.heatmap_width = 24;
  crop.heatmap_height = 24;
  for (int t = 0; t < cfg.trials; ++t) {
    Frame frame;
    frame.observations.assign(rig.size(), std::vector<JointObservation>(joints));
    const Vec3 anchor(rng.uniform(-0.1, 0.1), 1.0 + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    for (int j = 0; j < joints; ++j) {
      const Vec3 X = anchor + Vec3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
      for (std::size_t c = 0; c < rig.size(); ++c) {
        auto& o = frame.observations[c][static_cast<std::size_t>(j)];
        o.clean = project(rig[c], X).pixel;
        // Views disagree a little so the confidences matter.
        o.point = o.clean + 3.0 * Vec2(rng.normal(), rng.normal());
        o.visible = true;
      }
    }
    const auto maps = render_frame_heatmaps(frame, rig, crop, 1.5,
                                            std::numeric_limits<double>::infinity());
    VolumetricConfig vc;
    vc.aggregation = AggregationMode::Confidence;
    vc.resolution = 8;
    vc.inverse_temperature = 5.0;
    std::vector<double> d;
    for (int c = 0; c < views; ++c) d.push_back(rng.uniform(0.5, 2.0));
    std::vector<Vec3> g;
    for (int j = 0; j < joints; ++j) g.emplace_back(rng.normal(), rng.normal(), rng.normal());
    auto f = [&](const std::vector<double>& conf) {
      VolumetricConfig c2 = vc;
      c2.confidences = conf;
      const auto r = triangulate_volumetric(maps, anchor, c2);
      double s = 0.0;
      for (int j = 0; j < joints; ++j) s += g[static_cast<std::size_t>(j)].dot(r.joints[static_cast<std::size_t>(j)]);
      return s;
    };
    vc.confidences = d;
    const auto result = triangulate_volumetric(maps, anchor, vc);
    const auto analytic = volumetric_confidence_gradient(maps, result, g, vc);
    out.record(t, gradient_error(analytic, central_difference(f, d, cfg.step)));
  }
}

}  // namespace

std::vector<GradcheckSuite> run_gradcheck(const GradcheckConfig& cfg) {
  cfg.validate();
  using SuiteFn = void (*)(const GradcheckConfig&, Rng&, SuiteRunner&);
  const std::pair<const char*, SuiteFn> suites[] = {
      {"triangulate", triangulate_suite},     {"soft_argmax_2d", soft_argmax_2d_suite},
      {"soft_argmax_3d", soft_argmax_3d_suite}, {"soft_mse", soft_mse_suite},
      {"vol_l1", vol_l1_suite},               {"volumetric_conf", volumetric_conf_suite},
  };
  std::vector<GradcheckSuite> out;
  std::uint64_t index = 0;
  for (const auto& [name, fn] : suites) {
    Rng rng(mix_seed(cfg.seed, index++));
    SuiteRunner runner(name, cfg.trials);
    fn(cfg, rng, runner);
    out.push_back(runner.result());
  }
  return out;
}

}  // namespace learntri

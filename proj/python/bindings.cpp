#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "learntri/error.hpp"
#include "learntri/eval.hpp"
#include "learntri/gradcheck.hpp"
#include "learntri/heatmap.hpp"
#include "learntri/learn.hpp"
#include "learntri/losses.hpp"
#include "learntri/pipeline.hpp"
#include "learntri/synth.hpp"
#include "learntri/triangulation.hpp"

namespace py = pybind11;
using namespace learntri;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_shape(const py::buffer_info& b, std::vector<py::ssize_t> shape, const char* what) {
  bool ok = b.ndim == static_cast<py::ssize_t>(shape.size());
  for (std::size_t i = 0; ok && i < shape.size(); ++i) {
    ok = shape[i] < 0 || b.shape[i] == shape[i];
  }
  if (!ok) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has the wrong shape");
}

// (C, 3, 4) projection stack to a rig. Images default to 384 x 384.
Rig rig_from_projections(const Array& projections, int width, int height) {
  const auto b = projections.request();
  require_shape(b, {-1, 3, 4}, "projections");
  const double* p = projections.data();
  std::vector<Camera> cams;
  for (py::ssize_t c = 0; c < b.shape[0]; ++c) {
    Mat34 P;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 4; ++k) P(r, k) = p[c * 12 + r * 4 + k];
    }
    cams.push_back(Camera::from_projection("cam" + std::to_string(c), P, {width, height}));
  }
  return Rig(std::move(cams));
}

Array projections_of(const Rig& rig) {
  Array out({static_cast<py::ssize_t>(rig.size()), py::ssize_t{3}, py::ssize_t{4}});
  double* o = out.mutable_data();
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const Mat34& P = rig[c].projection();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 4; ++k) o[c * 12 + static_cast<std::size_t>(r * 4 + k)] = P(r, k);
    }
  }
  return out;
}

// (F, C, J, 2) keypoints and (F, C, J) visibility to frames.
std::vector<Frame> frames_from_arrays(const Array& keypoints, const BoolArray& visible) {
  const auto kb = keypoints.request();
  require_shape(kb, {-1, -1, -1, 2}, "keypoints");
  require_shape(visible.request(), {kb.shape[0], kb.shape[1], kb.shape[2]}, "visible");
  const double* k = keypoints.data();
  const bool* v = visible.data();
  const auto F = static_cast<std::size_t>(kb.shape[0]);
  const auto C = static_cast<std::size_t>(kb.shape[1]);
  const auto J = static_cast<std::size_t>(kb.shape[2]);
  std::vector<Frame> frames(F);
  for (std::size_t f = 0; f < F; ++f) {
    frames[f].observations.assign(C, std::vector<JointObservation>(J));
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < J; ++j) {
        const std::size_t i = (f * C + c) * J + j;
        auto& o = frames[f].observations[c][j];
        o.point = Vec2(k[2 * i], k[2 * i + 1]);
        o.clean = o.point;
        o.visible = v[i];
      }
    }
  }
  return frames;
}

void attach_gt(std::vector<Frame>& frames, const Array& gt, std::size_t pelvis) {
  const auto b = gt.request();
  require_shape(b, {static_cast<py::ssize_t>(frames.size()), -1, 3}, "gt");
  const double* g = gt.data();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<Vec3> joints;
    std::vector<bool> valid;
    for (py::ssize_t j = 0; j < b.shape[1]; ++j) {
      const double* q = g + (static_cast<py::ssize_t>(f) * b.shape[1] + j) * 3;
      joints.emplace_back(q[0], q[1], q[2]);
      valid.push_back(joints.back().allFinite());
    }
    Pose3D p;
    p.joints = std::move(joints);
    p.valid = std::move(valid);
    p.pelvis_index = pelvis;
    frames[f].gt_pose = std::move(p);
  }
}

Array poses_to_array(const std::vector<FrameEstimate>& est, std::size_t J) {
  Array out({static_cast<py::ssize_t>(est.size()), static_cast<py::ssize_t>(J), py::ssize_t{3}});
  double* o = out.mutable_data();
  for (std::size_t f = 0; f < est.size(); ++f) {
    for (std::size_t j = 0; j < J; ++j) {
      const auto& p = est[f].joints[j].point;
      for (int a = 0; a < 3; ++a) o[(f * J + j) * 3 + static_cast<std::size_t>(a)] = p ? (*p)(a) : kNaN;
    }
  }
  return out;
}

Pose3D pose_from_array(const Array& a, std::size_t pelvis) {
  const auto b = a.request();
  require_shape(b, {-1, 3}, "pose");
  Pose3D p;
  p.pelvis_index = pelvis;
  for (py::ssize_t j = 0; j < b.shape[0]; ++j) {
    const Vec3 v(a.data()[3 * j], a.data()[3 * j + 1], a.data()[3 * j + 2]);
    p.joints.push_back(v);
    p.valid.push_back(v.allFinite());
  }
  return p;
}

Heatmap2D heatmap_from_array(const Array& a) {
  const auto b = a.request();
  require_shape(b, {-1, -1}, "heatmap");
  std::vector<double> v(a.data(), a.data() + b.size);
  return Heatmap2D(static_cast<int>(b.shape[1]), static_cast<int>(b.shape[0]), std::move(v));
}

Array heatmap_to_array(const Heatmap2D& h) {
  Array out({static_cast<py::ssize_t>(h.height()), static_cast<py::ssize_t>(h.width())});
  std::copy(h.values().begin(), h.values().end(), out.mutable_data());
  return out;
}

std::vector<Observation> observations_from(const Array& points, const std::vector<double>& weights) {
  const auto b = points.request();
  require_shape(b, {-1, 2}, "points");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(b.shape[0])) {
    throw Error(ErrorCode::InvalidArgument, "need one weight per point");
  }
  std::vector<Observation> obs;
  for (py::ssize_t i = 0; i < b.shape[0]; ++i) {
    obs.push_back({static_cast<std::size_t>(i), Vec2(points.data()[2 * i], points.data()[2 * i + 1]),
                   weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)]});
  }
  return obs;
}

}  // namespace

PYBIND11_MODULE(_learntri, m) {
  m.doc() = "Multi-view triangulation of 3D human pose: algebraic, robust and volumetric";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def(
      "make_ring_rig",
      [](int cameras, double radius, double height, int image_size) {
        return projections_of(make_ring_rig(cameras, radius, height, Vec3(0.0, 1.0, 0.0), image_size));
      },
      py::arg("cameras"), py::arg("radius") = 4.0, py::arg("height") = 1.5,
      py::arg("image_size") = kDefaultImageSize,
      "Projection matrices (C, 3, 4) of cameras on a ring looking at (0, 1, 0).");

  m.def(
      "project",
      [](const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>& P, const Vec3& X) {
        const auto p = project(Mat34(P), X);
        return py::make_tuple(p.pixel, p.depth);
      },
      py::arg("projection"), py::arg("point"), "Pixel and depth of a world point.");

  m.def(
      "triangulate",
      [](const Array& projections, const Array& points, std::vector<double> weights) {
        const Rig rig = rig_from_projections(projections, kDefaultImageSize, kDefaultImageSize);
        const auto r = triangulate(rig, observations_from(points, weights));
        py::dict d;
        d["point"] = r.point;
        d["residuals"] = r.per_view_residual;
        d["singular_gap"] = r.singular_gap;
        return d;
      },
      py::arg("projections"), py::arg("points"), py::arg("weights") = std::vector<double>{},
      "Weighted DLT of one point from (C, 3, 4) projections and (C, 2) pixels.");

  m.def(
      "triangulate_backward",
      [](const Array& projections, const Array& points, std::vector<double> weights,
         const Vec3& upstream) {
        const Rig rig = rig_from_projections(projections, kDefaultImageSize, kDefaultImageSize);
        const auto r = triangulate(rig, observations_from(points, weights), true);
        const auto g = triangulate_backward(r, upstream);
        Eigen::MatrixXd gp(static_cast<Eigen::Index>(g.points.size()), 2);
        for (std::size_t i = 0; i < g.points.size(); ++i) gp.row(static_cast<Eigen::Index>(i)) = g.points[i];
        return py::make_tuple(gp, g.weights);
      },
      py::arg("projections"), py::arg("points"), py::arg("weights"), py::arg("upstream"),
      "Gradients of upstream . point w.r.t. the pixels and the weights.");

  m.def(
      "render_gaussian",
      [](double x, double y, double sigma, int width, int height) {
        return heatmap_to_array(render_gaussian(Vec2(x, y), sigma, width, height));
      },
      py::arg("x"), py::arg("y"), py::arg("sigma"), py::arg("width"), py::arg("height"));
  m.def(
      "spatial_softmax",
      [](const Array& h, double alpha) { return heatmap_to_array(spatial_softmax(heatmap_from_array(h), alpha)); },
      py::arg("heatmap"), py::arg("alpha") = kDefaultInverseTemperature);
  m.def(
      "soft_argmax_2d", [](const Array& p) { return soft_argmax_2d(heatmap_from_array(p)); },
      py::arg("probabilities"), "Expected (x, y) of a normalized (H, W) map.");

  m.def(
      "soft_mse_loss",
      [](const Vec3& pred, const Vec3& gt, double eps) {
        const auto l = soft_mse_loss(pred, gt, eps);
        return py::make_tuple(l.value, l.gradient);
      },
      py::arg("pred"), py::arg("gt"), py::arg("epsilon") = 0.04);

  m.def(
      "mpjpe",
      [](const Array& pred, const Array& gt, bool relative, std::size_t pelvis) {
        return mpjpe(pose_from_array(pred, pelvis), pose_from_array(gt, pelvis), relative);
      },
      py::arg("pred"), py::arg("gt"), py::arg("relative") = false, py::arg("pelvis_index") = 0,
      "Mean joint error in millimeters; NaN joints are skipped.");

  m.def(
      "simulate",
      [](int cameras, int frames, double noise, double outlier_rate, double outlier_shift,
         double occlusion_rate, std::uint64_t seed) {
        SceneConfig cfg;
        cfg.num_cameras = cameras;
        cfg.num_frames = frames;
        cfg.pixel_noise_sigma = noise;
        cfg.outlier_rate = outlier_rate;
        cfg.outlier_shift = outlier_shift;
        cfg.occlusion_rate = occlusion_rate;
        cfg.seed = seed;
        cfg.validate();
        const Rig rig = make_ring_rig(cameras);
        const auto fr = generate_frames(rig, cfg);
        const auto F = static_cast<py::ssize_t>(fr.size());
        const auto C = static_cast<py::ssize_t>(cameras);
        const auto J = static_cast<py::ssize_t>(cfg.num_joints);
        Array kp({F, C, J, py::ssize_t{2}});
        BoolArray vis({F, C, J});
        py::array_t<bool> corrupted({F, C, J});
        Array gt({F, J, py::ssize_t{3}});
        for (py::ssize_t f = 0; f < F; ++f) {
          const auto& frame = fr[static_cast<std::size_t>(f)];
          for (py::ssize_t c = 0; c < C; ++c) {
            for (py::ssize_t j = 0; j < J; ++j) {
              const auto& o = frame.observations[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
              const py::ssize_t i = (f * C + c) * J + j;
              kp.mutable_data()[2 * i] = o.visible ? o.point.x() : kNaN;
              kp.mutable_data()[2 * i + 1] = o.visible ? o.point.y() : kNaN;
              vis.mutable_data()[i] = o.visible;
              corrupted.mutable_data()[i] = o.corrupted;
            }
          }
          for (py::ssize_t j = 0; j < J; ++j) {
            for (int a = 0; a < 3; ++a) {
              gt.mutable_data()[(f * J + j) * 3 + a] = frame.gt_pose->joints[static_cast<std::size_t>(j)](a);
            }
          }
        }
        py::dict d;
        d["projections"] = projections_of(rig);
        d["keypoints"] = kp;
        d["visible"] = vis;
        d["corrupted"] = corrupted;
        d["gt"] = gt;
        return d;
      },
      py::arg("cameras") = 4, py::arg("frames") = 100, py::arg("noise") = 0.0,
      py::arg("outlier_rate") = 0.0, py::arg("outlier_shift") = 40.0, py::arg("occlusion_rate") = 0.0,
      py::arg("seed") = 0,
      "Synthetic dataset on the default ring rig as numpy arrays.");

  m.def(
      "triangulate_frames",
      [](const Array& projections, const Array& keypoints, const BoolArray& visible,
         std::optional<Eigen::MatrixXd> weights) {
        const Rig rig = rig_from_projections(projections, kDefaultImageSize, kDefaultImageSize);
        const auto frames = frames_from_arrays(keypoints, visible);
        std::vector<FrameEstimate> est;
        for (const auto& f : frames) est.push_back(estimate_algebraic(rig, f, weights ? &*weights : nullptr));
        return poses_to_array(est, frames.empty() ? 0 : frames.front().num_joints());
      },
      py::arg("projections"), py::arg("keypoints"), py::arg("visible"), py::arg("weights") = py::none(),
      "DLT of every joint of every frame; failed joints are NaN.");

  m.def(
      "triangulate_volumetric_frames",
      [](const Array& projections, const Array& keypoints, const BoolArray& visible,
         const std::string& aggregation, double side_length, int resolution, int image_size) {
        const Rig rig = rig_from_projections(projections, image_size, image_size);
        const auto frames = frames_from_arrays(keypoints, visible);
        VolumetricOptions opts;
        opts.volume.aggregation = parse_aggregation(aggregation);
        opts.volume.side_length = side_length;
        opts.volume.resolution = resolution;
        std::vector<FrameEstimate> est;
        for (const auto& f : frames) est.push_back(estimate_volumetric(rig, f, opts));
        return poses_to_array(est, frames.empty() ? 0 : frames.front().num_joints());
      },
      py::arg("projections"), py::arg("keypoints"), py::arg("visible"),
      py::arg("aggregation") = "softmax", py::arg("side_length") = 2.5, py::arg("resolution") = 64,
      py::arg("image_size") = kDefaultImageSize,
      "Volumetric triangulation from rendered keypoint heatmaps.");

  m.def(
      "fit_weights",
      [](const Array& projections, const Array& keypoints, const BoolArray& visible, const Array& gt,
         int steps, double learning_rate, std::uint64_t seed) {
        const Rig rig = rig_from_projections(projections, kDefaultImageSize, kDefaultImageSize);
        auto frames = frames_from_arrays(keypoints, visible);
        attach_gt(frames, gt, kTemplatePelvis);
        FitConfig cfg;
        cfg.steps = steps;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        const auto r = fit_weights(frames, rig, cfg);
        return py::make_tuple(Eigen::MatrixXd(r.weights.effective()), r.loss_trace);
      },
      py::arg("projections"), py::arg("keypoints"), py::arg("visible"), py::arg("gt"),
      py::arg("steps") = 500, py::arg("learning_rate") = FitConfig{}.learning_rate, py::arg("seed") = 0,
      "Per-camera DLT weights by gradient descent; returns (C x J weights, loss trace).");

  m.def(
      "gradcheck",
      [](int trials, std::uint64_t seed) {
        GradcheckConfig cfg;
        cfg.trials = trials;
        cfg.seed = seed;
        py::dict d;
        for (const auto& s : run_gradcheck(cfg)) d[py::str(s.name)] = s.max_rel_error;
        return d;
      },
      py::arg("trials") = 100, py::arg("seed") = 1,
      "Worst relative finite-difference error per gradient suite.");
}

#include "learntri/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "learntri/error.hpp"
#include "learntri/hmap.hpp"

namespace learntri::io {

namespace {

template <class M>
Json matrix_to_json(const M& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const Json& j, const char* what) {
  Eigen::Matrix<double, R, C> m;
  if (!j.is_array() || j.size() != R) {
    throw Error(ErrorCode::ParseError, std::string(what) + " has the wrong shape");
  }
  for (int r = 0; r < R; ++r) {
    if (!j[r].is_array() || j[r].size() != C) {
      throw Error(ErrorCode::ParseError, std::string(what) + " has the wrong shape");
    }
    for (int c = 0; c < C; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

template <int N>
Eigen::Matrix<double, N, 1> vector_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw Error(ErrorCode::ParseError, std::string(what) + " has the wrong length");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = j[i].get<double>();
  return v;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

}  // namespace

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& value) {
  write_text(path, value.dump(2) + "\n");
}

Json rig_to_json(const Rig& rig) {
  Json cams = Json::array();
  for (const auto& cam : rig.cameras()) {
    Json c;
    c["name"] = cam.name();
    c["width"] = cam.image_size().width;
    c["height"] = cam.image_size().height;
    c["P"] = matrix_to_json(cam.projection());
    if (const auto& f = cam.factors(); f && f->scale == 1.0) {
      c["K"] = matrix_to_json(f->K);
      c["R"] = matrix_to_json(f->R);
      c["t"] = vec_json(f->t);
    }
    cams.push_back(std::move(c));
  }
  return Json{{"cameras", std::move(cams)}};
}

Rig rig_from_json(const Json& j) {
  try {
    std::vector<Camera> cams;
    for (const auto& c : field(j, "cameras")) {
      const auto name = field(c, "name").get<std::string>();
      const ImageSize size{field(c, "width").get<int>(), field(c, "height").get<int>()};
      if (c.contains("K") && c.contains("R") && c.contains("t")) {
        cams.push_back(Camera::from_factors(name, matrix_from_json<3, 3>(c["K"], "K"),
                                            matrix_from_json<3, 3>(c["R"], "R"),
                                            vector_from_json<3>(c["t"], "t"), size));
      } else {
        cams.push_back(Camera::from_projection(name, matrix_from_json<3, 4>(field(c, "P"), "P"),
                                               size));
      }
    }
    return Rig(std::move(cams));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("cameras: ") + e.what());
  }
}

Json keypoints_to_json(const Rig& rig, const std::vector<Frame>& frames) {
  Json out_frames = Json::array();
  for (const auto& f : frames) {
    Json cams = Json::object();
    for (std::size_t c = 0; c < f.num_cameras(); ++c) {
      Json joints = Json::array();
      for (const auto& o : f.observations[c]) {
        joints.push_back(o.visible ? Json::array({o.point.x(), o.point.y()}) : Json(nullptr));
      }
      cams[rig[c].name()] = Json{{"joints", std::move(joints)}};
    }
    out_frames.push_back(Json{{"cameras", std::move(cams)}});
  }
  return Json{{"frames", std::move(out_frames)}};
}

std::vector<Frame> frames_from_json(const Json& j, const Rig& rig) {
  try {
    std::vector<Frame> frames;
    for (const auto& jf : field(j, "frames")) {
      const auto& cams = field(jf, "cameras");
      std::size_t J = 0;
      for (const auto& [name, cam] : cams.items()) {
        if (!rig.index_of(name)) {
          throw Error(ErrorCode::ParseError, "keypoints name unknown camera '" + name + "'");
        }
        J = std::max(J, field(cam, "joints").size());
      }
      Frame f;
      f.observations.assign(rig.size(), std::vector<JointObservation>(J));
      for (auto& per_cam : f.observations) {
        for (auto& o : per_cam) o.visible = false;
      }
      for (const auto& [name, cam] : cams.items()) {
        const auto c = *rig.index_of(name);
        const auto& joints = cam.at("joints");
        if (joints.size() != J) {
          throw Error(ErrorCode::ParseError, "cameras disagree on the joint count");
        }
        for (std::size_t k = 0; k < J; ++k) {
          if (joints[k].is_null()) continue;
          auto& o = f.observations[c][k];
          o.point = vector_from_json<2>(joints[k], "keypoint");
          if (!o.point.allFinite()) throw Error(ErrorCode::ParseError, "keypoint is not finite");
          o.clean = o.point;
          o.visible = true;
        }
      }
      frames.push_back(std::move(f));
    }
    return frames;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("keypoints: ") + e.what());
  }
}

Json poses_to_json(const std::vector<Pose3D>& poses) {
  Json frames = Json::array();
  std::size_t pelvis = 0;
  for (const auto& p : poses) {
    Json joints = Json::array();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const bool ok = p.valid.empty() || p.valid[k];
      joints.push_back(ok ? vec_json(p.joints[k]) : Json(nullptr));
    }
    frames.push_back(Json{{"joints", std::move(joints)}});
    pelvis = p.pelvis_index;
  }
  return Json{{"frames", std::move(frames)}, {"units", "m"}, {"pelvis_index", pelvis}};
}

std::vector<Pose3D> poses_from_json(const Json& j) {
  try {
    if (j.contains("units") && j["units"] != "m") {
      throw Error(ErrorCode::ParseError, "poses must be in meters");
    }
    const std::size_t pelvis = j.value("pelvis_index", std::size_t{0});
    std::vector<Pose3D> out;
    for (const auto& jf : field(j, "frames")) {
      Pose3D p;
      p.pelvis_index = pelvis;
      for (const auto& joint : field(jf, "joints")) {
        if (joint.is_null()) {
          p.joints.push_back(Vec3::Zero());
          p.valid.push_back(false);
        } else {
          p.joints.push_back(vector_from_json<3>(joint, "joint"));
          p.valid.push_back(true);
        }
      }
      out.push_back(std::move(p));
    }
    return out;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("poses: ") + e.what());
  }
}

void attach_ground_truth(std::vector<Frame>& frames, const std::vector<Pose3D>& poses) {
  if (frames.size() != poses.size()) {
    throw Error(ErrorCode::InvalidArgument, "ground truth has " + std::to_string(poses.size()) +
                                                " frames, keypoints have " +
                                                std::to_string(frames.size()));
  }
  for (std::size_t t = 0; t < frames.size(); ++t) frames[t].gt_pose = poses[t];
}

Json grid_to_json(const VoxelGridSpec& spec) {
  return Json{{"anchor", vec_json(spec.anchor)},
              {"side_length", spec.side_length},
              {"resolution", spec.resolution},
              {"yaw", spec.yaw}};
}

Json estimates_to_json(const std::vector<FrameEstimate>& estimates, const Rig& rig,
                       std::size_t pelvis_index) {
  Json frames = Json::array();
  for (const auto& est : estimates) {
    Json joints = Json::array();
    Json diag_joints = Json::array();
    for (const auto& je : est.joints) {
      joints.push_back(je.point ? vec_json(*je.point) : Json(nullptr));
      Json d{{"status", je.status}};
      if (!je.cameras.empty()) {
        Json names = Json::array();
        for (auto c : je.cameras) names.push_back(rig[c].name());
        d["cameras"] = std::move(names);
      }
      if (!je.residuals.empty()) d["residuals_px"] = je.residuals;
      if (je.point && je.singular_gap > 0.0) d["singular_gap"] = je.singular_gap;
      if (!je.inliers.empty()) d["inliers"] = je.inliers;
      diag_joints.push_back(std::move(d));
    }
    Json diag{{"status", est.status}, {"joints", std::move(diag_joints)},
              {"failed_joints", est.failed_joints()}};
    if (est.grid) diag["grid"] = grid_to_json(*est.grid);
    if (!est.view_stats.empty()) {
      Json views = Json::array();
      for (std::size_t c = 0; c < est.view_stats.size(); ++c) {
        views.push_back(Json{{"camera", rig[c].name()},
                             {"behind_camera", est.view_stats[c].behind_camera},
                             {"outside_image", est.view_stats[c].outside_image}});
      }
      diag["views"] = std::move(views);
    }
    frames.push_back(Json{{"joints", std::move(joints)}, {"diagnostics", std::move(diag)}});
  }
  return Json{{"frames", std::move(frames)}, {"units", "m"}, {"pelvis_index", pelvis_index}};
}

Json weights_to_json(const ConfidenceWeights& w, const Rig& rig) {
  Json names = Json::array();
  for (const auto& cam : rig.cameras()) names.push_back(cam.name());
  return Json{{"weights", matrix_to_json(w.raw)},
              {"parameterization", "softplus-raw"},
              {"per_joint", w.per_joint},
              {"cameras", std::move(names)}};
}

namespace {

/// Weight rows reordered into rig camera order.
Eigen::MatrixXd weight_matrix(const Json& j, const Rig& rig) {
  const auto& rows = field(j, "weights");
  if (!rows.is_array() || rows.size() != rig.size() || rows.empty()) {
    throw Error(ErrorCode::ParseError, "need one weight row per camera");
  }
  std::vector<std::size_t> order(rig.size());
  if (j.contains("cameras")) {
    const auto& names = j["cameras"];
    if (names.size() != rig.size()) throw Error(ErrorCode::ParseError, "camera list mismatch");
    for (std::size_t r = 0; r < names.size(); ++r) {
      const auto idx = rig.index_of(names[r].get<std::string>());
      if (!idx) throw Error(ErrorCode::ParseError, "weights name an unknown camera");
      order[r] = *idx;
    }
  } else {
    for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  }
  const std::size_t J = rows[0].size();
  if (J == 0) throw Error(ErrorCode::ParseError, "empty weight rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rig.size()), static_cast<Eigen::Index>(J));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != J) throw Error(ErrorCode::ParseError, "ragged weights");
    for (std::size_t k = 0; k < J; ++k) {
      m(static_cast<Eigen::Index>(order[r]), static_cast<Eigen::Index>(k)) = rows[r][k].get<double>();
    }
  }
  if (!m.allFinite()) throw Error(ErrorCode::ParseError, "weights must be finite");
  return m;
}

}  // namespace

ConfidenceWeights weights_from_json(const Json& j, const Rig& rig) {
  try {
    if (field(j, "parameterization") != "softplus-raw") {
      throw Error(ErrorCode::ParseError, "expected softplus-raw weights");
    }
    ConfidenceWeights w;
    w.raw = weight_matrix(j, rig);
    w.per_joint = j.value("per_joint", false);
    return w;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("weights: ") + e.what());
  }
}

Eigen::MatrixXd effective_weights_from_json(const Json& j, const Rig& rig) {
  try {
    const auto kind = field(j, "parameterization").get<std::string>();
    if (kind == "softplus-raw") return weights_from_json(j, rig).effective();
    if (kind != "effective") {
      throw Error(ErrorCode::ParseError, "unknown weight parameterization '" + kind + "'");
    }
    Eigen::MatrixXd m = weight_matrix(j, rig);
    if ((m.array() < 0.0).any()) throw Error(ErrorCode::ParseError, "weights must be >= 0");
    return m;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("weights: ") + e.what());
  }
}

Json write_frame_heatmaps(const std::filesystem::path& root, std::size_t index,
                          const std::vector<ViewMaps>& views) {
  Json cams = Json::object();
  char stem[32];
  std::snprintf(stem, sizeof stem, "f%06zu", index);
  for (const auto& view : views) {
    const std::string rel = "heatmaps/" + std::string(stem) + "_" + view.camera.name() + ".hmap";
    std::vector<HmapRecord> records;
    records.reserve(view.maps.size());
    for (const auto& m : view.maps) records.push_back(to_record(m));
    std::filesystem::create_directories((root / rel).parent_path());
    write_hmap_file(root / rel, records);
    cams[view.camera.name()] = Json{
        {"file", rel},
        {"crop", Json{{"offset", Json::array({view.crop.offset.x(), view.crop.offset.y()})},
                      {"scale", Json::array({view.crop.scale.x(), view.crop.scale.y()})}}}};
  }
  return Json{{"cameras", std::move(cams)}};
}

std::vector<ViewMaps> read_frame_heatmaps(const std::filesystem::path& root, const Json& entry,
                                          const Rig& rig) {
  try {
    const auto& cams = field(entry, "cameras");
    std::vector<ViewMaps> views;
    for (std::size_t c = 0; c < rig.size(); ++c) {
      if (!cams.contains(rig[c].name())) continue;
      const auto& jc = cams.at(rig[c].name());
      const auto& crop = field(jc, "crop");
      ViewMaps view{rig[c],
                    CropTransform::make(vector_from_json<2>(field(crop, "offset"), "crop offset"),
                                        vector_from_json<2>(field(crop, "scale"), "crop scale")),
                    {}};
      const auto records = read_hmap_file(root / field(jc, "file").get<std::string>());
      for (std::size_t k = 0; k < records.size(); ++k) {
        view.maps.push_back(heatmap_from_record(records[k], static_cast<int>(k)));
      }
      views.push_back(std::move(view));
    }
    return views;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("heatmap index: ") + e.what());
  }
}

}  // namespace learntri::io

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "learntri/hmap.hpp"
#include "learntri/io.hpp"
#include "support.hpp"

using namespace learntri;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("learntri_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Frame> sample_frames(const Rig& rig) {
  SceneConfig cfg;
  cfg.num_cameras = static_cast<int>(rig.size());
  cfg.num_frames = 3;
  cfg.pixel_noise_sigma = 1.0;
  cfg.occlusion_rate = 0.2;
  cfg.seed = 4;
  return generate_frames(rig, cfg);
}

}  // namespace

TEST_CASE("rig round trip through a file") {
  const Rig rig = make_ring_rig(5);
  const auto dir = scratch_dir("rig");
  io::write_json(dir / "cameras.json", io::rig_to_json(rig));
  const Rig back = io::rig_from_json(io::read_json(dir / "cameras.json"));
  REQUIRE(back.size() == 5);
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(back[c].name() == rig[c].name());
    CHECK((back[c].projection() - rig[c].projection()).norm() <= 1e-9 * rig[c].projection().norm());
    CHECK(back[c].image_size().width == 384);
  }
}

TEST_CASE("keypoints and poses round trip") {
  const Rig rig = make_ring_rig(3);
  const auto frames = sample_frames(rig);
  auto back = io::frames_from_json(io::keypoints_to_json(rig, frames), rig);
  REQUIRE(back.size() == frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < 17; ++j) {
        const auto& a = frames[f].observations[c][j];
        const auto& b = back[f].observations[c][j];
        CHECK(a.visible == b.visible);
        if (a.visible) CHECK((a.point - b.point).norm() <= 1e-9);
      }
    }
  }
  std::vector<Pose3D> poses;
  for (const auto& f : frames) poses.push_back(*f.gt_pose);
  poses[1].valid[4] = false;
  const auto pj = io::poses_to_json(poses);
  CHECK(pj["units"] == "m");
  const auto pb = io::poses_from_json(pj);
  REQUIRE(pb.size() == 3);
  CHECK_FALSE(pb[1].valid[4]);
  CHECK((pb[2].joints[7] - poses[2].joints[7]).norm() <= 1e-12);

  io::attach_ground_truth(back, pb);
  CHECK(back[0].gt_pose.has_value());
  std::vector<Pose3D> short_list(pb.begin(), pb.begin() + 2);
  CHECK(oracle::thrown_code([&] { io::attach_ground_truth(back, short_list); }).has_value());
}

TEST_CASE("keypoint parsing errors") {
  const Rig rig = make_ring_rig(2);
  io::Json j = io::keypoints_to_json(rig, sample_frames(rig));
  j["frames"][0]["cameras"]["nobody"] = j["frames"][0]["cameras"][rig[0].name()];
  CHECK(oracle::thrown_code([&] { io::frames_from_json(j, rig); }) == ErrorCode::ParseError);
  // A camera missing from a frame means everything there is occluded.
  io::Json k = io::keypoints_to_json(rig, sample_frames(rig));
  k["frames"][0]["cameras"].erase(rig[1].name());
  const auto frames = io::frames_from_json(k, rig);
  for (const auto& o : frames[0].observations[1]) CHECK_FALSE(o.visible);
}

TEST_CASE("file errors map to stable codes") {
  const auto dir = scratch_dir("errors");
  CHECK(oracle::thrown_code([&] { io::read_json(dir / "missing.json"); }) == ErrorCode::IoError);
  io::write_text(dir / "bad.json", "{not json");
  CHECK(oracle::thrown_code([&] { io::read_json(dir / "bad.json"); }) == ErrorCode::ParseError);
  CHECK(oracle::thrown_code([&] { io::rig_from_json(io::Json::parse("{\"cameras\": 3}")); }) ==
        ErrorCode::ParseError);
}

TEST_CASE("weights round trip and effective files") {
  const Rig rig = make_ring_rig(3);
  ConfidenceWeights w = ConfidenceWeights::uniform(3, 17, true);
  w.raw(1, 4) = -2.0;
  w.raw(2, 0) = 3.5;
  const auto j = io::weights_to_json(w, rig);
  CHECK(j["parameterization"] == "softplus-raw");
  const auto back = io::weights_from_json(j, rig);
  CHECK((back.raw - w.raw).norm() <= 1e-12);
  CHECK((io::effective_weights_from_json(j, rig) - w.effective()).norm() <= 1e-12);

  io::Json eff = {{"parameterization", "effective"}, {"weights", {{1.0, 2.0}, {0.5, 0.0}, {3.0, 3.0}}}};
  const auto m = io::effective_weights_from_json(eff, rig);
  CHECK(m(1, 0) == 0.5);
  CHECK(m(2, 1) == 3.0);
  eff["weights"][1][1] = -1.0;
  CHECK(oracle::thrown_code([&] { io::effective_weights_from_json(eff, rig); }) == ErrorCode::ParseError);
  eff["parameterization"] = "logits";
  CHECK(oracle::thrown_code([&] { io::effective_weights_from_json(eff, rig); }) == ErrorCode::ParseError);
  io::Json ragged = {{"parameterization", "effective"}, {"weights", {{1.0, 2.0}, {0.5}, {3.0, 3.0}}}};
  CHECK(oracle::thrown_code([&] { io::effective_weights_from_json(ragged, rig); }) == ErrorCode::ParseError);
}

TEST_CASE("HMAP records") {
  Heatmap2D h(5, 3, 0.0);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) h.at(x, y) = 0.25 * x - y;
  }
  std::stringstream ss;
  write_hmap(ss, to_record(h));
  HmapRecord wide;
  wide.dims = {2, 2, 2};
  wide.values = {1, 2, 3, 4, 5, 6, 7, 8};
  write_hmap(ss, wide);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "HMAP");
  CHECK(bytes.size() == (4 + 1 + 8 + 15 * 4) + (4 + 1 + 12 + 8 * 4));

  std::stringstream in(bytes);
  HmapRecord r;
  REQUIRE(read_hmap(in, r));
  const auto back = heatmap_from_record(r, 7);
  CHECK(back.width() == 5);
  CHECK(back.height() == 3);
  CHECK(back.joint_id() == 7);
  CHECK(back.at(4, 2) == -1.0);
  REQUIRE(read_hmap(in, r));
  CHECK(r.dims == std::vector<std::uint32_t>{2, 2, 2});
  CHECK(r.values[7] == 8.0f);
  CHECK_FALSE(read_hmap(in, r));
  CHECK(oracle::thrown_code([&] { heatmap_from_record(r); }).has_value());

  for (std::size_t cut : {3u, 6u, 20u}) {
    std::stringstream t(bytes.substr(0, cut));
    CHECK(oracle::thrown_code([&] { read_hmap(t, r); }) == ErrorCode::ParseError);
  }
  std::stringstream bad("JUNKxxxxxxxxxxxxxxx");
  CHECK(oracle::thrown_code([&] { read_hmap(bad, r); }) == ErrorCode::ParseError);
}

TEST_CASE("frame heatmaps round trip through files") {
  const Rig rig = make_ring_rig(3);
  const auto frames = sample_frames(rig);
  const auto views = render_frame_heatmaps(frames[0], rig);
  const auto dir = scratch_dir("maps");
  const auto entry = io::write_frame_heatmaps(dir, 0, views);
  CHECK(fs::exists(dir / entry["cameras"][rig[0].name()]["file"].get<std::string>()));
  const auto back = io::read_frame_heatmaps(dir, entry, rig);
  REQUIRE(back.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(back[c].camera.name() == rig[c].name());
    CHECK(back[c].crop.offset == views[c].crop.offset);
    CHECK(back[c].crop.scale == views[c].crop.scale);
    REQUIRE(back[c].maps.size() == 17);
    for (std::size_t j = 0; j < 17; ++j) {
      CHECK(back[c].maps[j].joint_id() == static_cast<int>(j));
      for (std::size_t i = 0; i < views[c].maps[j].size(); ++i) {
        // Stored as 32-bit floats.
        CHECK(std::abs(back[c].maps[j].values()[i] - views[c].maps[j].values()[i]) <= 1e-7);
      }
    }
  }
  auto partial = entry;
  partial["cameras"].erase(rig[1].name());
  const auto two = io::read_frame_heatmaps(dir, partial, rig);
  REQUIRE(two.size() == 2);
  CHECK(two[1].camera.name() == rig[2].name());
}

TEST_CASE("estimates serialize failed joints as null") {
  const Rig rig = make_ring_rig(3);
  SceneConfig cfg;
  cfg.num_cameras = 3;
  cfg.num_frames = 1;
  auto frames = generate_frames(rig, cfg);
  for (std::size_t c = 1; c < 3; ++c) frames[0].observations[c][3].visible = false;
  const auto est = estimate_algebraic(rig, frames[0]);
  const auto j = io::estimates_to_json({est}, rig, kTemplatePelvis);
  const auto poses = io::poses_from_json(j);
  REQUIRE(poses.size() == 1);
  CHECK_FALSE(poses[0].valid[3]);
  CHECK(poses[0].valid[2]);
}

#pragma once

// JSON dataset files: cameras, keypoints, poses, fitted weights.
// Everything is in meters and full-image pixels.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "learntri/learn.hpp"
#include "learntri/pipeline.hpp"
#include "learntri/pose.hpp"
#include "learntri/synth.hpp"
#include "learntri/volumetric.hpp"

namespace learntri::io {

using Json = nlohmann::json;

/// Reads and parses a JSON file. IoError when it cannot be read, ParseError
/// when it is not JSON.
Json read_json(const std::filesystem::path& path);
/// Writes `value` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& value);
void write_text(const std::filesystem::path& path, const std::string& text);

Json rig_to_json(const Rig& rig);
Rig rig_from_json(const Json& j);

/// `{"frames":[{"cameras":{name:{"joints":[[u,v]|null ...]}}}]}`
Json keypoints_to_json(const Rig& rig, const std::vector<Frame>& frames);
/// Frames in rig camera order. Cameras missing from a frame count as fully
/// occluded; unknown camera names are a ParseError.
std::vector<Frame> frames_from_json(const Json& j, const Rig& rig);

/// `{"frames":[{"joints":[[x,y,z]|null ...]}], "units":"m", "pelvis_index":p}`
Json poses_to_json(const std::vector<Pose3D>& poses);
std::vector<Pose3D> poses_from_json(const Json& j);

/// Copies ground truth onto frames (counts must match).
void attach_ground_truth(std::vector<Frame>& frames, const std::vector<Pose3D>& poses);

/// Estimated poses with per-frame diagnostics; failed joints are null.
Json estimates_to_json(const std::vector<FrameEstimate>& estimates, const Rig& rig,
                       std::size_t pelvis_index);

/// `{"weights":[[raw per joint] per camera], "parameterization":"softplus-raw", "cameras":[...]}`
Json weights_to_json(const ConfidenceWeights& w, const Rig& rig);
ConfidenceWeights weights_from_json(const Json& j, const Rig& rig);
/// Effective (nonnegative) C x J weights from either "softplus-raw" files or
/// files with `"parameterization":"effective"` holding the weights directly.
Eigen::MatrixXd effective_weights_from_json(const Json& j, const Rig& rig);

Json grid_to_json(const VoxelGridSpec& spec);

/// Writes one HMAP file per camera (one record per joint) for frame `index`
/// under `root`/heatmaps and returns the index entry for the frame:
/// `{"cameras":{name:{"file":..., "crop":{"offset":[x,y], "scale":[x,y]}}}}`.
Json write_frame_heatmaps(const std::filesystem::path& root, std::size_t index,
                          const std::vector<ViewMaps>& views);
/// Loads the maps of one index entry, with paths relative to `root` and views
/// in rig order. Cameras absent from the entry get no view.
std::vector<ViewMaps> read_frame_heatmaps(const std::filesystem::path& root, const Json& entry,
                                          const Rig& rig);

}  // namespace learntri::io

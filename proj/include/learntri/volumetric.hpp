#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "learntri/geometry.hpp"
#include "learntri/heatmap.hpp"

namespace learntri {

/// Cube of side L around an anchor, split into N^3 voxels, rotated by `yaw`
/// about the vertical Y axis. Voxel (i, j, k) runs along the grid's local
/// x, y, z axes.
struct VoxelGridSpec {
  Vec3 anchor = Vec3::Zero();
  double side_length = 2.5;  // m
  int resolution = 64;
  double yaw = 0.0;  // rad

  void validate() const;
  double pitch() const { return side_length / resolution; }
  Mat3 rotation() const { return yaw_rotation(yaw); }
  std::size_t voxel_count() const;

  Vec3 voxel_center(int i, int j, int k) const;
  /// Voxel whose cell contains `world`, or nullopt outside the cube.
  std::optional<std::array<int, 3>> voxel_containing(const Vec3& world) const;

  bool operator==(const VoxelGridSpec&) const = default;
};

namespace detail {

// Volumes are tens of megabytes and a pipeline allocates one per frame.
// Large blocks are kept in a small per-thread cache instead of going back to
// the system, which avoids refaulting fresh pages every frame.
void* acquire_volume_block(std::size_t bytes);
void release_volume_block(void* p, std::size_t bytes) noexcept;

template <class T>
struct VolumeAllocator {
  using value_type = T;
  VolumeAllocator() = default;
  template <class U>
  VolumeAllocator(const VolumeAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(acquire_volume_block(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { release_volume_block(p, n * sizeof(T)); }
  template <class U>
  bool operator==(const VolumeAllocator<U>&) const noexcept { return true; }
};

}  // namespace detail

/// K-channel scalar volume. Each channel is stored contiguously with x
/// fastest, then y, then z (the rank-3 HMAP order).
class VolumeGrid {
 public:
  VolumeGrid() = default;
  VolumeGrid(const VoxelGridSpec& spec, int channels, double fill = 0.0);

  const VoxelGridSpec& spec() const noexcept { return spec_; }
  int channels() const noexcept { return channels_; }
  int resolution() const noexcept { return spec_.resolution; }
  std::size_t voxels_per_channel() const noexcept { return stride_; }

  std::size_t voxel_index(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(spec_.resolution);
    return (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(j)) * n +
           static_cast<std::size_t>(i);
  }

  double& at(int c, int i, int j, int k) { return values_[offset(c) + voxel_index(i, j, k)]; }
  double at(int c, int i, int j, int k) const {
    return values_[offset(c) + voxel_index(i, j, k)];
  }

  std::span<double> channel(int c) { return {values_.data() + offset(c), stride_}; }
  std::span<const double> channel(int c) const { return {values_.data() + offset(c), stride_}; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t offset(int c) const { return static_cast<std::size_t>(c) * stride_; }

  VoxelGridSpec spec_;
  int channels_ = 0;
  std::size_t stride_ = 0;
  std::vector<double, detail::VolumeAllocator<double>> values_;
};

/// World-space voxel centers in storage order (x fastest).
std::vector<Vec3> voxel_world_coords(const VoxelGridSpec& spec);

/// Bilinear interpolation between cell centers; zero outside
/// [0, W-1] x [0, H-1].
double bilinear_sample(const Heatmap2D& map, const Vec2& uv);
std::vector<double> bilinear_sample(std::span<const Heatmap2D> maps, const Vec2& uv);

struct UnprojectionStats {
  std::size_t behind_camera = 0;  // depth <= 0 or on the principal plane
  std::size_t outside_image = 0;  // projected outside the heatmap support
};

struct UnprojectedView {
  VolumeGrid volume;
  UnprojectionStats stats;
};

/// Fills every voxel with the bilinear samples of `maps` at the projection of
/// its center, mapped into heatmap coordinates through the inverse crop.
UnprojectedView unproject_view(const Camera& camera, const CropTransform& crop,
                               std::span<const Heatmap2D> maps, const VoxelGridSpec& spec);

enum class AggregationMode { Sum, Confidence, Softmax };

std::string_view to_string(AggregationMode mode);
AggregationMode parse_aggregation(std::string_view name);

/// sum: sum_c V_c. conf: sum_c d_c V_c / sum_c d_c. softmax: per voxel and
/// channel, sum_c softmax_c(V) V_c.
VolumeGrid aggregate(std::span<const VolumeGrid> volumes, AggregationMode mode,
                     std::span<const double> confidences = {});

/// Per-channel softmax over all voxels of exp(inverse_temperature * v).
VolumeGrid volumetric_softmax(const VolumeGrid& v, double inverse_temperature = 1.0);
VolumeGrid volumetric_softmax_backward(const VolumeGrid& p, double inverse_temperature,
                                       const VolumeGrid& grad_p);

/// Expected voxel center per channel under a normalized volume.
std::vector<Vec3> soft_argmax_3d(const VolumeGrid& p);
/// dL/dp(r) = grad_c . X(r) for each channel c.
VolumeGrid soft_argmax_3d_backward(const VolumeGrid& p, std::span<const Vec3> grad);

/// Hook for a learned volumetric refiner between aggregation and softmax.
using VolumeRefiner = std::function<VolumeGrid(const VolumeGrid&)>;

/// Built-in refiner: identity.
VolumeGrid refine_volume(const VolumeGrid& v);

/// One view of the volumetric pipeline: its camera, the heatmap->image crop,
/// and K feature maps of identical size.
struct ViewMaps {
  Camera camera;
  CropTransform crop;
  std::vector<Heatmap2D> maps;
};

struct VolumetricConfig {
  AggregationMode aggregation = AggregationMode::Softmax;
  double side_length = 2.5;
  int resolution = 64;
  double yaw = 0.0;
  /// Scale applied inside the volumetric softmax. Unset selects
  /// default_volume_temperature().
  std::optional<double> inverse_temperature;
  /// Per-view d_c for Confidence aggregation; empty means all ones.
  std::vector<double> confidences;
  VolumeRefiner refiner;
};

/// Default volumetric inverse temperature. Sum-aggregated volumes grow with
/// the number of views, so the scale is divided by it for that mode.
double default_volume_temperature(AggregationMode mode, std::size_t views);
inline constexpr double kDefaultVolumeTemperature = 30.0;

/// Unprojects every view and aggregates slab by slab without materializing
/// per-view volumes. Bit-identical to aggregate() over unproject_view().
VolumeGrid unproject_and_aggregate(std::span<const ViewMaps> views, const VoxelGridSpec& spec,
                                   AggregationMode mode, std::span<const double> confidences = {},
                                   std::vector<UnprojectionStats>* stats = nullptr);

struct VolumetricResult {
  VoxelGridSpec spec;
  std::vector<Vec3> joints;
  VolumeGrid probabilities;
  std::vector<UnprojectionStats> view_stats;
  double inverse_temperature = 1.0;
};

VolumetricResult triangulate_volumetric(std::span<const ViewMaps> views, const Vec3& anchor,
                                        const VolumetricConfig& cfg);

/// dL/dd_c for Confidence aggregation with the identity refiner, given
/// dL/d(joint) for each channel of `result`.
std::vector<double> volumetric_confidence_gradient(std::span<const ViewMaps> views,
                                                   const VolumetricResult& result,
                                                   std::span<const Vec3> grad_joints,
                                                   const VolumetricConfig& cfg);

}  // namespace learntri

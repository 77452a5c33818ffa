#include "learntri/volumetric.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <new>
#include <utility>

#include "learntri/error.hpp"

namespace learntri {

void VoxelGridSpec::validate() const {
  if (!(side_length > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid side must be > 0");
  if (resolution < 2) throw Error(ErrorCode::InvalidArgument, "grid resolution must be >= 2");
  if (!anchor.allFinite() || !std::isfinite(yaw)) {
    throw Error(ErrorCode::InvalidArgument, "grid anchor and yaw must be finite");
  }
}

std::size_t VoxelGridSpec::voxel_count() const {
  const auto n = static_cast<std::size_t>(resolution);
  return n * n * n;
}

Vec3 VoxelGridSpec::voxel_center(int i, int j, int k) const {
  const double p = pitch();
  const double h = 0.5 * side_length;
  const Vec3 local((i + 0.5) * p - h, (j + 0.5) * p - h, (k + 0.5) * p - h);
  return anchor + rotation() * local;
}

std::optional<std::array<int, 3>> VoxelGridSpec::voxel_containing(const Vec3& world) const {
  const Vec3 local = rotation().transpose() * (world - anchor) + Vec3::Constant(0.5 * side_length);
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor(local(a) / pitch());
    if (!(f >= 0.0 && f < resolution)) return std::nullopt;
    idx[static_cast<std::size_t>(a)] = static_cast<int>(f);
  }
  return idx;
}

namespace detail {
namespace {

constexpr std::size_t kCachedBlockMin = std::size_t{1} << 20;

struct BlockCache {
  struct Block {
    void* p;
    std::size_t bytes;
  };
  std::array<Block, 2> slots{};

  ~BlockCache() {
    for (auto& b : slots) ::operator delete(b.p);
  }
};

BlockCache& block_cache() {
  thread_local BlockCache cache;
  return cache;
}

}  // namespace

void* acquire_volume_block(std::size_t bytes) {
  if (bytes >= kCachedBlockMin) {
    for (auto& b : block_cache().slots) {
      if (b.p && b.bytes == bytes) return std::exchange(b.p, nullptr);
    }
  }
  return ::operator new(bytes);
}

void release_volume_block(void* p, std::size_t bytes) noexcept {
  if (bytes >= kCachedBlockMin) {
    auto& slots = block_cache().slots;
    // Prefer an empty slot, otherwise evict the first one.
    auto* slot = &slots[0];
    for (auto& b : slots) {
      if (!b.p) {
        slot = &b;
        break;
      }
    }
    ::operator delete(slot->p);
    *slot = {p, bytes};
    return;
  }
  ::operator delete(p);
}

}  // namespace detail

VolumeGrid::VolumeGrid(const VoxelGridSpec& spec, int channels, double fill)
    : spec_(spec), channels_(channels), stride_(spec.voxel_count()) {
  spec.validate();
  if (channels < 1) throw Error(ErrorCode::InvalidArgument, "volume needs at least one channel");
  values_.assign(stride_ * static_cast<std::size_t>(channels), fill);
}

std::vector<Vec3> voxel_world_coords(const VoxelGridSpec& spec) {
  spec.validate();
  std::vector<Vec3> out;
  out.reserve(spec.voxel_count());
  const int n = spec.resolution;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) out.push_back(spec.voxel_center(i, j, k));
    }
  }
  return out;
}

namespace {

/// Corner indices and weights of a bilinear tap, or nothing when out of range.
struct Tap {
  int x0, x1, y0, y1;
  double fx, fy;
};

std::optional<Tap> make_tap(int width, int height, double x, double y) {
  if (!(x >= 0.0 && x <= width - 1 && y >= 0.0 && y <= height - 1)) return std::nullopt;
  Tap t{};
  t.x0 = std::min(static_cast<int>(x), std::max(width - 2, 0));
  t.y0 = std::min(static_cast<int>(y), std::max(height - 2, 0));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = x - t.x0;
  t.fy = y - t.y0;
  return t;
}

/// K maps interleaved per cell (y, x, channel) so one tap reads contiguous memory.
struct InterleavedMaps {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;
  /// Per cell, bit c set when channel c is nonzero there. With more than 64
  /// channels every bit is set and nothing is skipped.
  std::vector<std::uint64_t> nonzero;

  std::uint64_t mask(int x, int y) const {
    return nonzero[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                   static_cast<std::size_t>(x)];
  }

  const double* cell(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                          static_cast<std::size_t>(x)) *
                             static_cast<std::size_t>(channels);
  }
};

InterleavedMaps interleave(std::span<const Heatmap2D> maps) {
  if (maps.empty()) throw Error(ErrorCode::InvalidArgument, "view has no feature maps");
  InterleavedMaps out;
  out.width = maps[0].width();
  out.height = maps[0].height();
  out.channels = static_cast<int>(maps.size());
  for (const auto& m : maps) {
    if (m.width() != out.width || m.height() != out.height) {
      throw Error(ErrorCode::SpecMismatch, "feature maps of one view must share dimensions");
    }
  }
  const std::size_t cells = static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height);
  out.data.resize(cells * maps.size());
  out.nonzero.assign(cells, maps.size() > 64 ? ~std::uint64_t{0} : 0);
  for (std::size_t c = 0; c < maps.size(); ++c) {
    const auto v = maps[c].values();
    for (std::size_t r = 0; r < cells; ++r) {
      out.data[r * maps.size() + c] = v[r];
      if (c < 64 && v[r] != 0.0) out.nonzero[r] |= std::uint64_t{1} << c;
    }
  }
  return out;
}

std::uint64_t sample_tap(const InterleavedMaps& m, const Tap& t, double* out) {
  const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
  const double w10 = t.fx * (1.0 - t.fy);
  const double w01 = (1.0 - t.fx) * t.fy;
  const double w11 = t.fx * t.fy;
  const double* a = m.cell(t.x0, t.y0);
  const double* b = m.cell(t.x1, t.y0);
  const double* c = m.cell(t.x0, t.y1);
  const double* d = m.cell(t.x1, t.y1);
  const std::uint64_t live = m.mask(t.x0, t.y0) | m.mask(t.x1, t.y0) | m.mask(t.x0, t.y1) |
                             m.mask(t.x1, t.y1);
  if (live == 0) {
    std::fill(out, out + m.channels, 0.0);
    return 0;
  }
  if (m.channels <= 64) {
    // Only live channels are sampled; the rest are exact zeros, as the full
    // sum would give.
    std::fill(out, out + m.channels, 0.0);
    for (std::uint64_t bits = live; bits != 0; bits &= bits - 1) {
      const int ch = std::countr_zero(bits);
      out[ch] = w00 * a[ch] + w10 * b[ch] + w01 * c[ch] + w11 * d[ch];
    }
    return live;
  }
  for (int ch = 0; ch < m.channels; ++ch) {
    out[ch] = w00 * a[ch] + w10 * b[ch] + w01 * c[ch] + w11 * d[ch];
  }
  return live;
}

/// Samples one view over a row of voxel centers into out[voxel * K + channel].
/// live[voxel] gets the channels that may be nonzero; all others are zero.
/// Voxel centers along the row are start + v * step, so their projections
/// are affine in v too.
void sample_row(const Mat34& P, double facing, const CropTransform& crop,
                const InterleavedMaps& maps, const Vec3& start, const Vec3& step,
                std::size_t count, double* out, std::uint64_t* live, UnprojectionStats& stats) {
  const auto K = static_cast<std::size_t>(maps.channels);
  const Vec3 p0 = P * start.homogeneous();
  const Vec3 dp = P.leftCols<3>() * step;
  for (std::size_t v = 0; v < count; ++v) {
    double* dst = out + v * K;
    const Vec3 p = p0 + static_cast<double>(v) * dp;
    if (std::abs(p.z()) < 1e-12 || facing * p.z() <= 0.0) {
      std::fill(dst, dst + K, 0.0);
      live[v] = 0;
      ++stats.behind_camera;
      continue;
    }
    const Vec2 hm = crop.inverse(Vec2(p.x() / p.z(), p.y() / p.z()));
    const auto tap = make_tap(maps.width, maps.height, hm.x(), hm.y());
    if (!tap) {
      std::fill(dst, dst + K, 0.0);
      live[v] = 0;
      ++stats.outside_image;
      continue;
    }
    live[v] = sample_tap(maps, *tap, dst);
  }
}

double facing_sign(const Mat34& P) { return P.leftCols<3>().determinant() >= 0.0 ? 1.0 : -1.0; }

/// Shared per-voxel reduction over views; values[c * stride].
struct Combiner {
  AggregationMode mode;
  std::vector<double> confidences;
  double confidence_total = 0.0;

  Combiner(AggregationMode m, std::size_t views, std::span<const double> conf) : mode(m) {
    if (mode != AggregationMode::Confidence) return;
    if (conf.empty()) {
      confidences.assign(views, 1.0);
    } else {
      if (conf.size() != views) {
        throw Error(ErrorCode::SpecMismatch, "one confidence per view required");
      }
      confidences.assign(conf.begin(), conf.end());
    }
    for (double d : confidences) {
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw Error(ErrorCode::BadConfidence, "confidences must be finite and >= 0");
      }
      confidence_total += d;
    }
    if (!(confidence_total > 0.0)) {
      throw Error(ErrorCode::BadConfidence, "confidences must have a positive sum");
    }
  }

  double operator()(const double* values, std::size_t stride, std::size_t views) const {
    std::size_t all[64];
    if (views > 64) {
      std::vector<std::size_t> idx(views);
      for (std::size_t c = 0; c < views; ++c) idx[c] = c;
      return reduce(values, stride, idx.data(), views, views);
    }
    for (std::size_t c = 0; c < views; ++c) all[c] = c;
    return reduce(values, stride, all, views, views);
  }

  /// Combines the listed views (ascending); every other view is known to be
  /// exactly zero. Gives the same bits as listing all of them.
  double reduce(const double* values, std::size_t stride, const std::size_t* listed,
                std::size_t count, std::size_t views) const {
    switch (mode) {
      case AggregationMode::Sum: {
        double s = 0.0;
        for (std::size_t q = 0; q < count; ++q) s += values[listed[q] * stride];
        return s;
      }
      case AggregationMode::Confidence: {
        double s = 0.0;
        for (std::size_t q = 0; q < count; ++q) {
          s += confidences[listed[q]] * values[listed[q] * stride];
        }
        return s / confidence_total;
      }
      case AggregationMode::Softmax: {
        const std::size_t unlisted = views - count;
        double lo = unlisted > 0 ? 0.0 : values[listed[0] * stride];
        double peak = lo;
        for (std::size_t q = 0; q < count; ++q) {
          lo = std::min(lo, values[listed[q] * stride]);
          peak = std::max(peak, values[listed[q] * stride]);
        }
        if (lo == peak) return peak;
        // Views reading exactly zero add exp(-peak) to the denominator and
        // nothing to the numerator, so they share a single exp.
        double num = 0.0;
        double den = 0.0;
        std::size_t zeros = unlisted;
        for (std::size_t q = 0; q < count; ++q) {
          const double v = values[listed[q] * stride];
          if (v == 0.0) {
            ++zeros;
            continue;
          }
          const double w = v == peak ? 1.0 : std::exp(v - peak);
          num += w * v;
          den += w;
        }
        if (zeros > 0) den += static_cast<double>(zeros) * std::exp(-peak);
        return num / den;
      }
    }
    return 0.0;
  }
};

/// Channels worth combining at one voxel: the union of the per-view live
/// masks, or every channel when there are too many to track.
std::uint64_t live_channels(const std::uint64_t* live, std::size_t stride, std::size_t views,
                            int channels) {
  if (channels > 64) return ~std::uint64_t{0};
  std::uint64_t any = 0;
  for (std::size_t c = 0; c < views; ++c) any |= live[c * stride];
  return any;
}

/// One (j, k) row of samples: values[c * row_len + i * K + ch] and
/// live[c * n + i] for view c, voxel i.
struct SampledRow {
  const double* values;
  std::size_t row_len;
  const std::uint64_t* live;
  std::size_t n;
};

/// Walks the grid one (j, k) row at a time, sampling every view.
template <class RowFn>
void for_each_sampled_row(std::span<const ViewMaps> views, const VoxelGridSpec& spec,
                          std::vector<UnprojectionStats>& stats, int& channels, RowFn&& fn) {
  spec.validate();
  if (views.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one view");
  std::vector<InterleavedMaps> maps;
  maps.reserve(views.size());
  for (const auto& v : views) maps.push_back(interleave(v.maps));
  channels = maps[0].channels;
  for (const auto& m : maps) {
    if (m.channels != channels) {
      throw Error(ErrorCode::SpecMismatch, "all views must have the same channel count");
    }
  }
  std::vector<double> facing;
  for (const auto& v : views) facing.push_back(facing_sign(v.camera.projection()));

  const int n = spec.resolution;
  const auto nn = static_cast<std::size_t>(n);
  const auto row_len = nn * static_cast<std::size_t>(channels);
  std::vector<double> buffer(views.size() * row_len);
  std::vector<std::uint64_t> live(views.size() * nn);
  const Vec3 step = spec.pitch() * spec.rotation().col(0);
  stats.assign(views.size(), UnprojectionStats{});
  const SampledRow row{buffer.data(), row_len, live.data(), nn};
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      const Vec3 start = spec.voxel_center(0, j, k);
      for (std::size_t c = 0; c < views.size(); ++c) {
        sample_row(views[c].camera.projection(), facing[c], views[c].crop, maps[c], start, step,
                   nn, buffer.data() + c * row_len, live.data() + c * nn, stats[c]);
      }
      fn(j, k, row);
    }
  }
}

void softmax_channel(std::span<const double> in, double alpha, std::span<double> out) {
  const double peak = *std::max_element(in.begin(), in.end());
  // Runs of equal values (empty space) share one exp.
  double last_in = std::numeric_limits<double>::quiet_NaN();
  double last_out = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < in.size(); ++r) {
    if (in[r] != last_in) {
      last_in = in[r];
      last_out = std::exp(alpha * (last_in - peak));
    }
    out[r] = last_out;
    total += last_out;
  }
  const double inv = 1.0 / total;
  for (auto& v : out) v *= inv;
}

}  // namespace

double bilinear_sample(const Heatmap2D& map, const Vec2& uv) {
  const auto tap = make_tap(map.width(), map.height(), uv.x(), uv.y());
  if (!tap) return 0.0;
  return (1.0 - tap->fx) * (1.0 - tap->fy) * map.at(tap->x0, tap->y0) +
         tap->fx * (1.0 - tap->fy) * map.at(tap->x1, tap->y0) +
         (1.0 - tap->fx) * tap->fy * map.at(tap->x0, tap->y1) +
         tap->fx * tap->fy * map.at(tap->x1, tap->y1);
}

std::vector<double> bilinear_sample(std::span<const Heatmap2D> maps, const Vec2& uv) {
  std::vector<double> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.push_back(bilinear_sample(m, uv));
  return out;
}

UnprojectedView unproject_view(const Camera& camera, const CropTransform& crop,
                               std::span<const Heatmap2D> maps, const VoxelGridSpec& spec) {
  const ViewMaps view{camera, crop, std::vector<Heatmap2D>(maps.begin(), maps.end())};
  std::vector<UnprojectionStats> stats;
  int channels = 0;
  UnprojectedView out;
  for_each_sampled_row(std::span(&view, 1), spec, stats, channels,
                       [&](int j, int k, const SampledRow& row) {
                         if (out.volume.channels() == 0) out.volume = VolumeGrid(spec, channels);
                         const int n = spec.resolution;
                         for (int i = 0; i < n; ++i) {
                           for (int ch = 0; ch < channels; ++ch) {
                             out.volume.at(ch, i, j, k) =
                                 row.values[static_cast<std::size_t>(i * channels + ch)];
                           }
                         }
                       });
  out.stats = stats[0];
  return out;
}

std::string_view to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::Sum: return "sum";
    case AggregationMode::Confidence: return "conf";
    case AggregationMode::Softmax: return "softmax";
  }
  return "unknown";
}

AggregationMode parse_aggregation(std::string_view name) {
  if (name == "sum") return AggregationMode::Sum;
  if (name == "conf") return AggregationMode::Confidence;
  if (name == "softmax") return AggregationMode::Softmax;
  throw Error(ErrorCode::InvalidArgument, "unknown aggregation '" + std::string(name) + "'");
}

VolumeGrid aggregate(std::span<const VolumeGrid> volumes, AggregationMode mode,
                     std::span<const double> confidences) {
  if (volumes.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to aggregate");
  for (const auto& v : volumes) {
    if (!(v.spec() == volumes[0].spec()) || v.channels() != volumes[0].channels()) {
      throw Error(ErrorCode::SpecMismatch, "volumes differ in grid spec or channel count");
    }
  }
  const Combiner combine(mode, volumes.size(), confidences);
  VolumeGrid out(volumes[0].spec(), volumes[0].channels());
  std::vector<double> gathered(volumes.size());
  const auto total = out.values().size();
  for (std::size_t r = 0; r < total; ++r) {
    for (std::size_t c = 0; c < volumes.size(); ++c) gathered[c] = volumes[c].values()[r];
    out.values()[r] = combine(gathered.data(), 1, volumes.size());
  }
  return out;
}

VolumeGrid unproject_and_aggregate(std::span<const ViewMaps> views, const VoxelGridSpec& spec,
                                   AggregationMode mode, std::span<const double> confidences,
                                   std::vector<UnprojectionStats>* stats) {
  const Combiner combine(mode, views.size(), confidences);
  std::vector<UnprojectionStats> local_stats;
  int channels = 0;
  VolumeGrid out;
  const std::size_t C = views.size();
  std::vector<std::size_t> listed(64 * C);
  std::array<std::size_t, 64> counts{};
  for_each_sampled_row(views, spec, local_stats, channels, [&](int j, int k, const SampledRow& row) {
    if (out.channels() == 0) out = VolumeGrid(spec, channels);
    const int n = spec.resolution;
    for (int i = 0; i < n; ++i) {
      const auto base = static_cast<std::size_t>(i * channels);
      // Channels no view sees are zero in every view; the grid is already zero there.
      const std::uint64_t any = live_channels(row.live + i, row.n, C, channels);
      if (any == 0) continue;
      if (channels > 64) {
        for (int ch = 0; ch < channels; ++ch) {
          out.at(ch, i, j, k) = combine(row.values + base + static_cast<std::size_t>(ch), row.row_len, C);
        }
        continue;
      }
      // Per channel, the views that can be nonzero, in ascending order.
      for (std::size_t c = 0; c < C; ++c) {
        for (std::uint64_t bits = row.live[c * row.n + static_cast<std::size_t>(i)]; bits != 0;
             bits &= bits - 1) {
          const auto ch = static_cast<std::size_t>(std::countr_zero(bits));
          listed[ch * C + counts[ch]++] = c;
        }
      }
      for (std::uint64_t bits = any; bits != 0; bits &= bits - 1) {
        const auto ch = static_cast<std::size_t>(std::countr_zero(bits));
        out.at(static_cast<int>(ch), i, j, k) =
            combine.reduce(row.values + base + ch, row.row_len, listed.data() + ch * C, counts[ch], C);
        counts[ch] = 0;
      }
    }
  });
  if (stats) *stats = std::move(local_stats);
  return out;
}

VolumeGrid volumetric_softmax(const VolumeGrid& v, double inverse_temperature) {
  if (!(inverse_temperature > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "inverse temperature must be positive");
  }
  VolumeGrid out(v.spec(), v.channels());
  for (int c = 0; c < v.channels(); ++c) {
    softmax_channel(v.channel(c), inverse_temperature, out.channel(c));
  }
  return out;
}

VolumeGrid volumetric_softmax_backward(const VolumeGrid& p, double inverse_temperature,
                                       const VolumeGrid& grad_p) {
  if (!(p.spec() == grad_p.spec()) || p.channels() != grad_p.channels()) {
    throw Error(ErrorCode::SpecMismatch, "gradient volume does not match");
  }
  VolumeGrid out(p.spec(), p.channels());
  for (int c = 0; c < p.channels(); ++c) {
    const auto pc = p.channel(c);
    const auto gc = grad_p.channel(c);
    double inner = 0.0;
    for (std::size_t r = 0; r < pc.size(); ++r) inner += pc[r] * gc[r];
    auto dst = out.channel(c);
    for (std::size_t r = 0; r < pc.size(); ++r) {
      dst[r] = inverse_temperature * pc[r] * (gc[r] - inner);
    }
  }
  return out;
}

std::vector<Vec3> soft_argmax_3d(const VolumeGrid& p) {
  // Centers are affine in the voxel index, so the expectation only needs the
  // mass and first index moments of each channel.
  const VoxelGridSpec& spec = p.spec();
  const int n = spec.resolution;
  const Mat3 R = spec.rotation();
  const double pitch = spec.pitch();
  const double h = 0.5 * spec.side_length;
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(p.channels()));
  for (int c = 0; c < p.channels(); ++c) {
    const auto pc = p.channel(c);
    double mass = 0.0;
    Vec3 moment = Vec3::Zero();
    std::size_t r = 0;
    for (int k = 0; k < n; ++k) {
      double mass_k = 0.0;
      double mi_k = 0.0;
      double mj_k = 0.0;
      for (int j = 0; j < n; ++j) {
        double row = 0.0;
        double mi = 0.0;
        for (int i = 0; i < n; ++i, ++r) {
          row += pc[r];
          mi += pc[r] * i;
        }
        mass_k += row;
        mi_k += mi;
        mj_k += row * j;
      }
      mass += mass_k;
      moment += Vec3(mi_k, mj_k, mass_k * k);
    }
    const Vec3 local = pitch * (moment + Vec3::Constant(0.5 * mass)) - Vec3::Constant(h * mass);
    out.push_back(mass * spec.anchor + R * local);
  }
  return out;
}

VolumeGrid soft_argmax_3d_backward(const VolumeGrid& p, std::span<const Vec3> grad) {
  if (grad.size() != static_cast<std::size_t>(p.channels())) {
    throw Error(ErrorCode::InvalidArgument, "one gradient per channel required");
  }
  const auto centers = voxel_world_coords(p.spec());
  VolumeGrid out(p.spec(), p.channels());
  for (int c = 0; c < p.channels(); ++c) {
    auto dst = out.channel(c);
    for (std::size_t r = 0; r < dst.size(); ++r) {
      dst[r] = grad[static_cast<std::size_t>(c)].dot(centers[r]);
    }
  }
  return out;
}

VolumeGrid refine_volume(const VolumeGrid& v) { return v; }

double default_volume_temperature(AggregationMode mode, std::size_t views) {
  if (mode == AggregationMode::Sum) {
    return kDefaultVolumeTemperature / static_cast<double>(std::max<std::size_t>(views, 1));
  }
  return kDefaultVolumeTemperature;
}

VolumetricResult triangulate_volumetric(std::span<const ViewMaps> views, const Vec3& anchor,
                                        const VolumetricConfig& cfg) {
  VolumetricResult result;
  result.spec = VoxelGridSpec{anchor, cfg.side_length, cfg.resolution, cfg.yaw};
  result.inverse_temperature =
      cfg.inverse_temperature.value_or(default_volume_temperature(cfg.aggregation, views.size()));
  VolumeGrid input = unproject_and_aggregate(views, result.spec, cfg.aggregation,
                                             cfg.confidences, &result.view_stats);
  if (cfg.refiner) input = cfg.refiner(input);
  if (!(result.inverse_temperature > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "inverse temperature must be positive");
  }
  // The aggregated volume is not needed afterwards, so normalize it in place.
  for (int c = 0; c < input.channels(); ++c) {
    softmax_channel(input.channel(c), result.inverse_temperature, input.channel(c));
  }
  result.probabilities = std::move(input);
  result.joints = soft_argmax_3d(result.probabilities);
  return result;
}

std::vector<double> volumetric_confidence_gradient(std::span<const ViewMaps> views,
                                                   const VolumetricResult& result,
                                                   std::span<const Vec3> grad_joints,
                                                   const VolumetricConfig& cfg) {
  if (cfg.aggregation != AggregationMode::Confidence || cfg.refiner) {
    throw Error(ErrorCode::InvalidArgument,
                "confidence gradient needs conf aggregation and the identity refiner");
  }
  const VolumeGrid& p = result.probabilities;
  if (grad_joints.size() != static_cast<std::size_t>(p.channels())) {
    throw Error(ErrorCode::InvalidArgument, "one joint gradient per channel required");
  }
  const Combiner combine(cfg.aggregation, views.size(), cfg.confidences);
  const double alpha = result.inverse_temperature;
  const std::size_t C = views.size();
  std::vector<double> grad(C, 0.0);
  std::vector<double> gathered(C);
  std::vector<UnprojectionStats> stats;
  int channels = 0;
  for_each_sampled_row(
      views, result.spec, stats, channels,
      [&](int j, int k, const SampledRow& row) {
        const int n = result.spec.resolution;
        for (int i = 0; i < n; ++i) {
          // Channels that every view reads as zero contribute V_c - V_in = 0.
          const std::uint64_t any = live_channels(row.live + i, row.n, C, channels);
          if (any == 0) continue;
          const Vec3 X = result.spec.voxel_center(i, j, k);
          for (int ch = 0; ch < channels; ++ch) {
            if (ch < 64 && !((any >> ch) & 1U)) continue;
            const auto c_idx = static_cast<std::size_t>(ch);
            // dL/dV_in(r) = alpha p(r) (X(r) - y) . g
            const double coeff = alpha * p.at(ch, i, j, k) *
                                 (X - result.joints[c_idx]).dot(grad_joints[c_idx]);
            if (coeff == 0.0) continue;
            const auto off = static_cast<std::size_t>(i * channels + ch);
            for (std::size_t c = 0; c < C; ++c) gathered[c] = row.values[c * row.row_len + off];
            const double v_in = combine(gathered.data(), 1, C);
            for (std::size_t c = 0; c < C; ++c) grad[c] += coeff * (gathered[c] - v_in);
          }
        }
      });
  for (auto& g : grad) g /= combine.confidence_total;
  return grad;
}

}  // namespace learntri

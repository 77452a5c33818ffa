#pragma once

// Binary container for 2D heatmaps and 3D volumes:
//
//   "HMAP" | u8 rank (2 or 3) | rank x u32 LE dims (x fastest) | f32 LE payload
//
// A file may hold several records back to back, one per channel.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "learntri/heatmap.hpp"

namespace learntri {

struct HmapRecord {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
};

void write_hmap(std::ostream& out, const HmapRecord& record);

/// Reads one record. Returns false on clean end of stream; throws ParseError
/// on truncated or malformed input.
bool read_hmap(std::istream& in, HmapRecord& record);

std::vector<HmapRecord> read_hmap_file(const std::filesystem::path& path);
void write_hmap_file(const std::filesystem::path& path, const std::vector<HmapRecord>& records);

HmapRecord to_record(const Heatmap2D& h);
Heatmap2D heatmap_from_record(const HmapRecord& record, int joint_id = 0);

}  // namespace learntri

#include "learntri/hmap.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "learntri/error.hpp"

namespace learntri {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'M', 'A', 'P'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_exact(std::istream& in, void* dst, std::size_t n) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::ParseError, "truncated HMAP record");
  }
}

}  // namespace

std::size_t HmapRecord::element_count() const {
  std::size_t n = dims.empty() ? 0 : 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_hmap(std::ostream& out, const HmapRecord& record) {
  if (record.dims.size() != 2 && record.dims.size() != 3) {
    throw Error(ErrorCode::InvalidArgument, "HMAP rank must be 2 or 3");
  }
  if (record.values.size() != record.element_count()) {
    throw Error(ErrorCode::InvalidArgument, "HMAP payload does not match dims");
  }
  out.write(kMagic.data(), kMagic.size());
  const auto rank = static_cast<unsigned char>(record.dims.size());
  out.put(static_cast<char>(rank));
  for (auto d : record.dims) put_u32(out, d);
  for (float f : record.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  if (!out) throw Error(ErrorCode::IoError, "failed writing HMAP record");
}

bool read_hmap(std::istream& in, HmapRecord& record) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() == 0) return false;
  if (in.gcount() != 4 || magic != kMagic) {
    throw Error(ErrorCode::ParseError, "bad HMAP magic");
  }
  unsigned char rank = 0;
  read_exact(in, &rank, 1);
  if (rank != 2 && rank != 3) throw Error(ErrorCode::ParseError, "bad HMAP rank");
  record.dims.assign(rank, 0);
  for (auto& d : record.dims) {
    unsigned char b[4];
    read_exact(in, b, 4);
    d = get_u32(b);
  }
  const std::size_t n = record.element_count();
  std::vector<unsigned char> raw(n * 4);
  read_exact(in, raw.data(), raw.size());
  record.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    record.values[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
  }
  return true;
}

std::vector<HmapRecord> read_hmap_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<HmapRecord> records;
  HmapRecord rec;
  while (read_hmap(in, rec)) records.push_back(rec);
  return records;
}

void write_hmap_file(const std::filesystem::path& path, const std::vector<HmapRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  for (const auto& r : records) write_hmap(out, r);
}

HmapRecord to_record(const Heatmap2D& h) {
  HmapRecord r;
  r.dims = {static_cast<std::uint32_t>(h.width()), static_cast<std::uint32_t>(h.height())};
  r.values.reserve(h.size());
  for (double v : h.values()) r.values.push_back(static_cast<float>(v));
  return r;
}

Heatmap2D heatmap_from_record(const HmapRecord& record, int joint_id) {
  if (record.dims.size() != 2) throw Error(ErrorCode::ParseError, "expected rank-2 HMAP record");
  std::vector<double> values(record.values.begin(), record.values.end());
  return Heatmap2D(static_cast<int>(record.dims[0]), static_cast<int>(record.dims[1]),
                   std::move(values), joint_id);
}

}  // namespace learntri

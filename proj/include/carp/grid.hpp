#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace carp {

using Dims = std::vector<std::size_t>;

// An m-dimensional multi-channel intensity array.
//
// `values` holds `channels` planes back to back; each plane is row-major over
// `dims` (axis 0 slowest). `dims_original` records the extents before padding
// so that decoders can crop back; for an unpadded grid the two coincide.
struct PixelGrid {
  Dims dims;
  Dims dims_original;
  int bit_depth = 8;
  int channels = 1;
  std::vector<double> values;

  static PixelGrid zeros(const Dims& dims, int bit_depth = 8, int channels = 1);

  std::size_t ndim() const { return dims.size(); }
  std::size_t plane_size() const;
  double max_value() const { return static_cast<double>((1u << bit_depth) - 1); }
  bool is_padded() const;

  double* plane(int c) { return values.data() + c * plane_size(); }
  const double* plane(int c) const { return values.data() + c * plane_size(); }

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;
};

enum class ImageFormat { kPgm, kRaw };

// Smallest power of two >= each extent.
Dims padded_dims(const Dims& dims);

// Replicates the last sample along every axis up to the next power of two.
PixelGrid pad(const PixelGrid& grid);

// Keeps the leading `dims` samples of every axis.
PixelGrid crop(const PixelGrid& grid, const Dims& dims);

// Per-pixel mean over channels, as a single-channel grid.
PixelGrid channel_mean(const PixelGrid& grid);

// Binary PGM (P5). Only 2D single-channel grids.
PixelGrid read_pgm(const std::filesystem::path& path);
PixelGrid parse_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const PixelGrid& grid);

// Raw little-endian unsigned samples, planar by channel, with a sidecar text
// file `<path>.meta` holding key=value lines: ndim, dims, bit_depth, channels.
PixelGrid read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const PixelGrid& grid);
std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

// Picks PGM for ".pgm" paths and raw+sidecar otherwise.
ImageFormat format_for_path(const std::filesystem::path& path);
PixelGrid load(const std::filesystem::path& path, ImageFormat format);
PixelGrid load(const std::filesystem::path& path);
void store(const std::filesystem::path& path, const PixelGrid& grid);

// Rounds to the nearest integer and clamps into [0, 2^bit_depth - 1].
PixelGrid to_integer_range(PixelGrid grid);

std::string dims_to_string(const Dims& dims, char sep = 'x');

}  // namespace carp

#include "carp/grid.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>

#include "carp/error.hpp"

namespace carp {

namespace {

std::size_t product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("short write to " + path.string());
}

// Copies the region `out_dims` of a plane with extents `in_dims`, reading
// index min(i, in_dims - 1) on every axis. Serves both pad and crop.
void copy_region(const double* in, const Dims& in_dims, double* out, const Dims& out_dims) {
  const std::size_t m = in_dims.size();
  std::vector<std::size_t> in_strides(m, 1);
  for (std::size_t i = m; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_dims[i];
  std::vector<std::size_t> idx(m, 0);
  const std::size_t total = product(out_dims);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < m; ++i) src += std::min(idx[i], in_dims[i] - 1) * in_strides[i];
    out[k] = in[src];
    for (std::size_t i = m; i-- > 0;) {
      if (++idx[i] < out_dims[i]) break;
      idx[i] = 0;
    }
  }
}

int bit_depth_for_maxval(unsigned long maxval) { return maxval <= 255 ? 8 : 16; }

void check_bit_depth(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw ParseError("unsupported bit depth " + std::to_string(bit_depth));
}

}  // namespace

PixelGrid PixelGrid::zeros(const Dims& dims, int bit_depth, int channels) {
  PixelGrid g;
  g.dims = dims;
  g.dims_original = dims;
  g.bit_depth = bit_depth;
  g.channels = channels;
  g.values.assign(product(dims) * static_cast<std::size_t>(channels), 0.0);
  return g;
}

std::size_t PixelGrid::plane_size() const { return product(dims); }

bool PixelGrid::is_padded() const { return dims == padded_dims(dims); }

Dims padded_dims(const Dims& dims) {
  Dims out(dims.size());
  std::transform(dims.begin(), dims.end(), out.begin(),
                 [](std::size_t d) { return std::bit_ceil(std::max<std::size_t>(d, 1)); });
  return out;
}

PixelGrid pad(const PixelGrid& grid) {
  PixelGrid out = PixelGrid::zeros(padded_dims(grid.dims), grid.bit_depth, grid.channels);
  out.dims_original = grid.dims_original;
  for (int c = 0; c < grid.channels; ++c) copy_region(grid.plane(c), grid.dims, out.plane(c), out.dims);
  return out;
}

PixelGrid crop(const PixelGrid& grid, const Dims& dims) {
  if (dims.size() != grid.dims.size())
    throw DimensionError("crop rank " + std::to_string(dims.size()) + " does not match grid rank " +
                         std::to_string(grid.dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i] > grid.dims[i])
      throw DimensionError("crop extent " + dims_to_string(dims) + " exceeds " + dims_to_string(grid.dims));
  }
  PixelGrid out = PixelGrid::zeros(dims, grid.bit_depth, grid.channels);
  for (int c = 0; c < grid.channels; ++c) copy_region(grid.plane(c), grid.dims, out.plane(c), out.dims);
  return out;
}

PixelGrid channel_mean(const PixelGrid& grid) {
  PixelGrid out = PixelGrid::zeros(grid.dims, grid.bit_depth, 1);
  out.dims_original = grid.dims_original;
  const std::size_t n = grid.plane_size();
  for (int c = 0; c < grid.channels; ++c) {
    const double* p = grid.plane(c);
    for (std::size_t i = 0; i < n; ++i) out.values[i] += p[i];
  }
  for (double& v : out.values) v /= grid.channels;
  return out;
}

PixelGrid parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
      throw ParseError(std::string("PGM header: expected ") + what);
    unsigned long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<unsigned long>(bytes[pos] - '0');
      if (v > (1ul << 31)) throw ParseError(std::string("PGM header: ") + what + " too large");
      ++pos;
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("not a binary PGM (P5)");
  pos = 2;
  const unsigned long width = read_uint("width");
  const unsigned long height = read_uint("height");
  const unsigned long maxval = read_uint("maxval");
  if (width == 0 || height == 0) throw ParseError("PGM header: zero extent");
  if (maxval == 0 || maxval > 65535) throw ParseError("PGM header: maxval out of range");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("PGM header: missing separator before raster");
  ++pos;

  const int bit_depth = bit_depth_for_maxval(maxval);
  const std::size_t sample_bytes = bit_depth == 8 ? 1 : 2;
  const std::size_t count = width * height;
  if (bytes.size() - pos != count * sample_bytes)
    throw DimensionError("PGM raster holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                         std::to_string(count * sample_bytes));

  PixelGrid g = PixelGrid::zeros({height, width}, bit_depth, 1);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = sample_bytes == 1 ? raster[i] : (unsigned{raster[2 * i]} << 8) | raster[2 * i + 1];
    if (v > maxval) throw ParseError("PGM sample exceeds maxval");
    g.values[i] = v;
  }
  return g;
}

PixelGrid read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const PixelGrid& grid) {
  if (grid.ndim() != 2 || grid.channels != 1)
    throw DimensionError("PGM holds 2D single-channel images, got " + dims_to_string(grid.dims) + " with " +
                         std::to_string(grid.channels) + " channels");
  const PixelGrid g = to_integer_range(grid);
  std::ostringstream out;
  out << "P5\n" << g.dims[1] << ' ' << g.dims[0] << '\n' << static_cast<unsigned>(g.max_value()) << '\n';
  std::string raster;
  raster.reserve(g.values.size() * 2);
  for (double v : g.values) {
    const auto u = static_cast<unsigned>(v);
    if (g.bit_depth == 8) {
      raster.push_back(static_cast<char>(u));
    } else {
      raster.push_back(static_cast<char>(u >> 8));
      raster.push_back(static_cast<char>(u & 0xff));
    }
  }
  write_file(path, out.str() + raster);
}

std::filesystem::path sidecar_path(const std::filesystem::path& raw_path) {
  return std::filesystem::path(raw_path.string() + ".meta");
}

PixelGrid read_raw(const std::filesystem::path& path) {
  const std::string meta = read_file(sidecar_path(path));
  std::istringstream lines(meta);
  std::string line;
  long ndim = -1;
  Dims dims;
  int bit_depth = 8;
  int channels = 1;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("sidecar line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "ndim") {
        ndim = std::stol(val);
      } else if (key == "dims") {
        std::istringstream parts(val);
        std::string part;
        while (std::getline(parts, part, ',')) {
          const long d = std::stol(part);
          if (d <= 0) throw ParseError("sidecar dims must be positive");
          dims.push_back(static_cast<std::size_t>(d));
        }
      } else if (key == "bit_depth") {
        bit_depth = std::stoi(val);
      } else if (key == "channels") {
        channels = std::stoi(val);
      } else {
        throw ParseError("unknown sidecar key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError("bad sidecar value for '" + key + "': " + val);
    }
  }
  if (dims.empty()) throw ParseError("sidecar lacks dims");
  if (ndim >= 0 && static_cast<std::size_t>(ndim) != dims.size())
    throw DimensionError("sidecar ndim=" + std::to_string(ndim) + " but " + std::to_string(dims.size()) + " dims");
  check_bit_depth(bit_depth);
  if (channels < 1 || channels > 65535) throw ParseError("sidecar channels out of range");

  const std::string payload = read_file(path);
  PixelGrid g = PixelGrid::zeros(dims, bit_depth, channels);
  const std::size_t sample_bytes = bit_depth == 8 ? 1 : 2;
  if (payload.size() != g.values.size() * sample_bytes)
    throw DimensionError("raw payload holds " + std::to_string(payload.size()) + " bytes, sidecar implies " +
                         std::to_string(g.values.size() * sample_bytes));
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < g.values.size(); ++i)
    g.values[i] = sample_bytes == 1 ? raw[i] : raw[2 * i] | (unsigned{raw[2 * i + 1]} << 8);
  return g;
}

void write_raw(const std::filesystem::path& path, const PixelGrid& grid) {
  const PixelGrid g = to_integer_range(grid);
  std::string payload;
  payload.reserve(g.values.size() * 2);
  for (double v : g.values) {
    const auto u = static_cast<unsigned>(v);
    payload.push_back(static_cast<char>(u & 0xff));
    if (g.bit_depth == 16) payload.push_back(static_cast<char>(u >> 8));
  }
  std::ostringstream meta;
  meta << "ndim=" << g.ndim() << "\ndims=" << dims_to_string(g.dims, ',') << "\nbit_depth=" << g.bit_depth
       << "\nchannels=" << g.channels << '\n';
  write_file(path, payload);
  write_file(sidecar_path(path), meta.str());
}

ImageFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".pgm" ? ImageFormat::kPgm : ImageFormat::kRaw;
}

PixelGrid load(const std::filesystem::path& path, ImageFormat format) {
  return format == ImageFormat::kPgm ? read_pgm(path) : read_raw(path);
}

PixelGrid load(const std::filesystem::path& path) { return load(path, format_for_path(path)); }

void store(const std::filesystem::path& path, const PixelGrid& grid) {
  if (format_for_path(path) == ImageFormat::kPgm) {
    write_pgm(path, grid);
  } else {
    write_raw(path, grid);
  }
}

PixelGrid to_integer_range(PixelGrid grid) {
  const double hi = grid.max_value();
  for (double& v : grid.values) v = std::clamp(std::round(v), 0.0, hi);
  return grid;
}

std::string dims_to_string(const Dims& dims, char sep) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace carp

#include "carp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "carp/codec.hpp"
#include "carp/error.hpp"

namespace carp {

namespace {

constexpr std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

void check_compatible(const PixelGrid& ref, const PixelGrid& test) {
  if (ref.dims != test.dims || ref.channels != test.channels || ref.bit_depth != test.bit_depth)
    throw ContractViolation("metric inputs differ in shape: " + dims_to_string(ref.dims) + "/" +
                            std::to_string(ref.channels) + "ch/" + std::to_string(ref.bit_depth) + "bit vs " +
                            dims_to_string(test.dims) + "/" + std::to_string(test.channels) + "ch/" +
                            std::to_string(test.bit_depth) + "bit");
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double mse(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - (kWindow - 1) / 2.0;
    g[i] = std::exp(-x * x / (2.0 * kWindowSigma * kWindowSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

struct Plane {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;
};

// Separable Gaussian filter keeping only fully covered positions.
Plane filter_valid(const Plane& in) {
  static const auto g = gaussian_window();
  const std::size_t out_cols = in.cols - kWindow + 1;
  const std::size_t out_rows = in.rows - kWindow + 1;
  std::vector<double> tmp(in.rows * out_cols);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* row = in.v.data() + r * in.cols;
    for (std::size_t c = 0; c < out_cols; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * row[c + k];
      tmp[r * out_cols + c] = s;
    }
  }
  Plane out{out_rows, out_cols, std::vector<double>(out_rows * out_cols)};
  for (std::size_t r = 0; r < out_rows; ++r) {
    for (std::size_t c = 0; c < out_cols; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * tmp[(r + k) * out_cols + c];
      out.v[r * out_cols + c] = s;
    }
  }
  return out;
}

// 2x2 mean after extending odd extents by mirroring the last row/column.
Plane downsample(const Plane& in) {
  const std::size_t rows = (in.rows + 1) / 2;
  const std::size_t cols = (in.cols + 1) / 2;
  Plane out{rows, cols, std::vector<double>(rows * cols)};
  auto at = [&](std::size_t r, std::size_t c) {
    return in.v[std::min(r, in.rows - 1) * in.cols + std::min(c, in.cols - 1)];
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out.v[r * cols + c] =
          0.25 * (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1));
  return out;
}

struct ScaleTerms {
  double ssim;
  double cs;
};

ScaleTerms ssim_terms(const Plane& x, const Plane& y, double c1, double c2) {
  Plane xx = x, yy = y, xy = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    xx.v[i] = x.v[i] * x.v[i];
    yy.v[i] = y.v[i] * y.v[i];
    xy.v[i] = x.v[i] * y.v[i];
  }
  const Plane mx = filter_valid(x), my = filter_valid(y);
  const Plane exx = filter_valid(xx), eyy = filter_valid(yy), exy = filter_valid(xy);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double mu_x = mx.v[i], mu_y = my.v[i];
    const double lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
    const double cs = (2.0 * (exy.v[i] - mu_x * mu_y) + c2) /
                      ((exx.v[i] - mu_x * mu_x) + (eyy.v[i] - mu_y * mu_y) + c2);
    ssim_sum += lum * cs;
    cs_sum += cs;
  }
  const auto count = static_cast<double>(mx.v.size());
  return {ssim_sum / count, cs_sum / count};
}

// Frame layout for m >= 2: last two axes are rows and columns.
struct FrameLayout {
  std::size_t frames, rows, cols;
};

FrameLayout frame_layout(const PixelGrid& g) {
  if (g.ndim() < 2) throw ContractViolation("frame metrics need at least 2 dimensions");
  const std::size_t rows = g.dims[g.ndim() - 2];
  const std::size_t cols = g.dims[g.ndim() - 1];
  return {g.plane_size() / (rows * cols), rows, cols};
}

}  // namespace

double psnr_channel(const PixelGrid& ref, const PixelGrid& test, int channel) {
  check_compatible(ref, test);
  return psnr_from_mse(mse(ref.plane(channel), test.plane(channel), ref.plane_size()), ref.max_value());
}

double psnr(const PixelGrid& ref, const PixelGrid& test) {
  check_compatible(ref, test);
  double total = 0.0;
  for (int c = 0; c < ref.channels; ++c) total += psnr_channel(ref, test, c);
  return total / ref.channels;
}

double psnr_frame_mean(const PixelGrid& ref, const PixelGrid& test) {
  check_compatible(ref, test);
  if (ref.ndim() < 3) return psnr(ref, test);
  const FrameLayout f = frame_layout(ref);
  const std::size_t frame = f.rows * f.cols;
  double total = 0.0;
  for (int c = 0; c < ref.channels; ++c)
    for (std::size_t k = 0; k < f.frames; ++k)
      total += psnr_from_mse(mse(ref.plane(c) + k * frame, test.plane(c) + k * frame, frame), ref.max_value());
  return total / static_cast<double>(f.frames * static_cast<std::size_t>(ref.channels));
}

int ms_ssim_scales(std::size_t rows, std::size_t cols) {
  int scales = 0;
  while (scales < static_cast<int>(kScaleWeights.size()) && rows >= kWindow && cols >= kWindow) {
    ++scales;
    rows = (rows + 1) / 2;
    cols = (cols + 1) / 2;
  }
  return scales;
}

double ms_ssim_plane(const double* ref, const double* test, std::size_t rows, std::size_t cols, double peak) {
  const int scales = ms_ssim_scales(rows, cols);
  if (scales == 0)
    throw ContractViolation("MS-SSIM needs at least " + std::to_string(kWindow) + " pixels per side");
  double weight_total = 0.0;
  for (int i = 0; i < scales; ++i) weight_total += kScaleWeights[i];
  const double c1 = (kK1 * peak) * (kK1 * peak);
  const double c2 = (kK2 * peak) * (kK2 * peak);

  Plane x{rows, cols, std::vector<double>(ref, ref + rows * cols)};
  Plane y{rows, cols, std::vector<double>(test, test + rows * cols)};
  double result = 1.0;
  for (int i = 0; i < scales; ++i) {
    if (i > 0) {
      x = downsample(x);
      y = downsample(y);
    }
    const ScaleTerms t = ssim_terms(x, y, c1, c2);
    const double base = std::max(0.0, i + 1 == scales ? t.ssim : t.cs);
    result *= std::pow(base, kScaleWeights[i] / weight_total);
  }
  return result;
}

double ms_ssim(const PixelGrid& ref, const PixelGrid& test) {
  check_compatible(ref, test);
  const FrameLayout f = frame_layout(ref);
  const std::size_t frame = f.rows * f.cols;
  double total = 0.0;
  for (int c = 0; c < ref.channels; ++c)
    for (std::size_t k = 0; k < f.frames; ++k)
      total += ms_ssim_plane(ref.plane(c) + k * frame, test.plane(c) + k * frame, f.rows, f.cols, ref.max_value());
  return total / static_cast<double>(f.frames * static_cast<std::size_t>(ref.channels));
}

QualityReport evaluate_quality(const PixelGrid& ref, const PixelGrid& test, std::size_t stream_bytes) {
  check_compatible(ref, test);
  QualityReport r;
  r.psnr_db = psnr(ref, test);
  r.psnr_frame_mean_db = psnr_frame_mean(ref, test);
  const bool ssim_ok = ref.ndim() >= 2 && ms_ssim_scales(ref.dims[ref.ndim() - 2], ref.dims[ref.ndim() - 1]) > 0;
  r.ms_ssim = ssim_ok ? ms_ssim(ref, test) : std::numeric_limits<double>::quiet_NaN();
  if (stream_bytes > 0) r.compression_ratio = static_cast<double>(raw_size_bytes(ref)) / static_cast<double>(stream_bytes);
  for (int c = 0; c < ref.channels; ++c) {
    ChannelQuality q;
    q.psnr_db = psnr_channel(ref, test, c);
    if (ssim_ok) {
      PixelGrid rc = PixelGrid::zeros(ref.dims, ref.bit_depth, 1);
      PixelGrid tc = rc;
      std::copy_n(ref.plane(c), ref.plane_size(), rc.values.begin());
      std::copy_n(test.plane(c), test.plane_size(), tc.values.begin());
      q.ms_ssim = ms_ssim(rc, tc);
    } else {
      q.ms_ssim = std::numeric_limits<double>::quiet_NaN();
    }
    r.per_channel.push_back(q);
  }
  return r;
}

}  // namespace carp

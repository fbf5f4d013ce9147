#pragma once

#include <limits>
#include <vector>

#include "carp/grid.hpp"

namespace carp {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

struct ChannelQuality {
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
};

struct QualityReport {
  double psnr_db = 0.0;             // mean over channels of global-MSE PSNR
  double psnr_frame_mean_db = 0.0;  // mean over frames (equals psnr_db for 2D)
  double ms_ssim = 0.0;             // NaN when the image is too small or 1D
  double compression_ratio = 0.0;   // 0 when no stream size is known
  std::vector<ChannelQuality> per_channel;
};

// 10 log10(peak^2 / MSE) with peak = 2^bit_depth - 1, over the grids'
// current extents; kInfinitePsnr when identical. Multi-channel grids yield the
// mean of per-channel values.
double psnr(const PixelGrid& ref, const PixelGrid& test);
double psnr_channel(const PixelGrid& ref, const PixelGrid& test, int channel);

// For m >= 3 the last two axes form a frame; returns the mean per-frame PSNR.
double psnr_frame_mean(const PixelGrid& ref, const PixelGrid& test);

// Multi-scale SSIM: 11x11 Gaussian window (sigma 1.5, valid region), 2x2 mean
// downsampling, K1 = 0.01, K2 = 0.03, weights 0.0448, 0.2856, 0.3001, 0.2363,
// 0.1333. Images whose shorter side cannot support five scales use fewer,
// weights renormalized. Frames (last two axes) and channels are averaged.
double ms_ssim(const PixelGrid& ref, const PixelGrid& test);

// Single 2D plane, row-major rows x cols, intensities on [0, peak].
double ms_ssim_plane(const double* ref, const double* test, std::size_t rows, std::size_t cols, double peak);

// Largest usable scale count (<= 5) for a plane; 0 if below one window.
int ms_ssim_scales(std::size_t rows, std::size_t cols);

QualityReport evaluate_quality(const PixelGrid& ref, const PixelGrid& test, std::size_t stream_bytes = 0);

}  // namespace carp

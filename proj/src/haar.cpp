#include "carp/haar.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "carp/error.hpp"

namespace carp {

namespace {
constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
}

std::size_t CoefficientPyramid::size() const {
  std::size_t n = 1;
  for (const auto& d : details) n += d.size();
  return n;
}

double CoefficientPyramid::energy() const {
  double e = scaling * scaling;
  for (const auto& d : details)
    for (double c : d) e += c * c;
  return e;
}

CoefficientPyramid haar_forward(std::span<const double> v) {
  if (v.empty() || !std::has_single_bit(v.size()))
    throw ContractViolation("Haar transform needs a power-of-two length, got " + std::to_string(v.size()));
  const int levels = std::countr_zero(v.size());
  CoefficientPyramid p;
  p.details.resize(levels);
  std::vector<double> approx(v.begin(), v.end());
  for (int j = levels - 1; j >= 0; --j) {
    const std::size_t half = std::size_t{1} << j;
    auto& detail = p.details[j];
    detail.resize(half);
    for (std::size_t k = 0; k < half; ++k) {
      const double a = approx[2 * k];
      const double b = approx[2 * k + 1];
      approx[k] = (a + b) * kInvSqrt2;
      detail[k] = (a - b) * kInvSqrt2;
    }
  }
  p.scaling = approx[0];
  return p;
}

std::vector<double> haar_inverse(const CoefficientPyramid& p) {
  const std::size_t levels = p.details.size();
  for (std::size_t j = 0; j < levels; ++j)
    if (p.details[j].size() != (std::size_t{1} << j))
      throw ContractViolation("pyramid scale " + std::to_string(j) + " has " + std::to_string(p.details[j].size()) +
                              " coefficients");
  std::vector<double> approx(std::size_t{1} << levels);
  approx[0] = p.scaling;
  for (std::size_t j = 0; j < levels; ++j) {
    const std::size_t half = std::size_t{1} << j;
    for (std::size_t k = half; k-- > 0;) {
      const double s = approx[k];
      const double d = p.details[j][k];
      approx[2 * k] = (s + d) * kInvSqrt2;
      approx[2 * k + 1] = (s - d) * kInvSqrt2;
    }
  }
  return approx;
}

std::int64_t quantize(double c, double q) {
  if (!(q > 0.0)) throw ContractViolation("quantization step must be positive");
  const double mag = std::floor(std::abs(c) / q);
  if (mag > 9.0e15) throw NumericError("coefficient " + std::to_string(c) + " overflows the quantizer");
  const auto s = static_cast<std::int64_t>(mag);
  return c < 0 ? -s : s;
}

double dequantize(std::int64_t s, double q) {
  if (s == 0) return 0.0;
  const double mag = (static_cast<double>(s < 0 ? -s : s) + 0.5) * q;
  return s < 0 ? -mag : mag;
}

QuantizedPyramid quantize(const CoefficientPyramid& pyramid, double q) {
  QuantizedPyramid out;
  out.scaling = quantize(pyramid.scaling, q);
  out.details.resize(pyramid.details.size());
  for (std::size_t j = 0; j < pyramid.details.size(); ++j) {
    out.details[j].resize(pyramid.details[j].size());
    for (std::size_t k = 0; k < pyramid.details[j].size(); ++k) out.details[j][k] = quantize(pyramid.details[j][k], q);
  }
  return out;
}

CoefficientPyramid dequantize(const QuantizedPyramid& symbols, double q) {
  CoefficientPyramid out;
  out.scaling = dequantize(symbols.scaling, q);
  out.details.resize(symbols.details.size());
  for (std::size_t j = 0; j < symbols.details.size(); ++j) {
    out.details[j].resize(symbols.details[j].size());
    for (std::size_t k = 0; k < symbols.details[j].size(); ++k)
      out.details[j][k] = dequantize(symbols.details[j][k], q);
  }
  return out;
}

}  // namespace carp

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace carp {

// Orthonormal Haar analysis of a length-2^J vector. details[j] holds the 2^j
// coefficients of scale j, coarsest first; coefficient k of scale j covers
// the interval [k n / 2^j, (k + 1) n / 2^j) and equals
// (sum of first half - sum of second half) / sqrt(interval length).
struct CoefficientPyramid {
  double scaling = 0.0;
  std::vector<std::vector<double>> details;

  std::size_t levels() const { return details.size(); }
  std::size_t size() const;
  double energy() const;
};

CoefficientPyramid haar_forward(std::span<const double> v);
std::vector<double> haar_inverse(const CoefficientPyramid& pyramid);

// Dead-zone uniform scalar quantizer: sign(c) floor(|c| / q), restored at the
// bin midpoint sign(s) (|s| + 1/2) q.
std::int64_t quantize(double c, double q);
double dequantize(std::int64_t s, double q);

struct QuantizedPyramid {
  std::int64_t scaling = 0;
  std::vector<std::vector<std::int64_t>> details;
};

QuantizedPyramid quantize(const CoefficientPyramid& pyramid, double q);
CoefficientPyramid dequantize(const QuantizedPyramid& symbols, double q);

}  // namespace carp

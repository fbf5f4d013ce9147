#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "carp/bayes.hpp"

namespace carp::cli {

enum class Command { kCompress, kDecompress, kInfo, kMetrics, kSweep, kProgressive };

struct HyperOverrides {
  std::optional<double> alpha, beta, c, tau0_scale, eta0;
};

struct RunConfig {
  Command command = Command::kCompress;
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path reference;  // metrics: reference image; progressive: original image
  std::filesystem::path stream;     // metrics: optional stream for the ratio column
  std::optional<double> sigma;
  std::optional<double> target_ratio;
  double tolerance = 0.1;
  std::optional<double> q;
  HyperOverrides hyper;
  bool empirical_bayes = false;
  std::vector<double> sweep_sigmas;
  std::vector<double> sweep_ratios;
  std::optional<int> scales;        // decompress prefix
  std::vector<int> prefix_scales;   // progressive; empty means 0..J
  std::filesystem::path csv;
  int workers = 1;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipeline = 1;
inline constexpr int kExitUsage = 2;

// Parses argv into a config. Returns the exit status to use when parsing
// ends the run (help, usage errors), otherwise nullopt.
std::optional<int> parse_args(int argc, const char* const* argv, RunConfig& config, std::ostream& out,
                              std::ostream& err);

// Executes one command. Usage errors yield 2, pipeline errors 1 with a
// "[stage] message" line on `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

// Hyperparameters for a given sigma after applying overrides; tau0_scale is
// tau0 * sigma.
Hyperparams resolve_hyperparams(const HyperOverrides& overrides, double sigma);

inline constexpr const char* kSweepCsvHeader = "sigma,q,bytes,ratio,psnr_db,ms_ssim,encode_ms,decode_ms";
inline constexpr const char* kProgressiveCsvHeader = "scales,bits_used,psnr_db";

}  // namespace carp::cli

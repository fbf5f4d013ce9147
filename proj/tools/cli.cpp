#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "carp/codec.hpp"
#include "carp/error.hpp"
#include "carp/grid.hpp"
#include "carp/metrics.hpp"

namespace carp::cli {

namespace {

using Clock = std::chrono::steady_clock;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StreamError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StreamError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string fmt(double v, int precision = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Hyperparams hyperparams_for(const RunConfig& config, const PixelGrid& padded, double sigma) {
  if (!config.empirical_bayes) return resolve_hyperparams(config.hyper, sigma);
  return empirical_bayes_fit(padded, sigma, HyperGrid{}).best;
}

struct Encoded {
  CompressedStream stream;
  std::vector<std::uint8_t> bytes;
  double sigma = 0.0;
  double q = 0.0;
  double encode_ms = 0.0;
};

Encoded encode_at_sigma(const RunConfig& config, const PixelGrid& padded, double sigma) {
  const auto t0 = Clock::now();
  Encoded e;
  e.sigma = sigma;
  e.q = config.q.value_or(default_quant_step(sigma));
  e.stream = compress(padded, hyperparams_for(config, padded, sigma), e.q);
  e.bytes = encode_stream(e.stream);
  e.encode_ms = ms_since(t0);
  return e;
}

Encoded encode_at_ratio(const RunConfig& config, const PixelGrid& padded, double ratio) {
  const auto t0 = Clock::now();
  if (config.q) throw UsageError("--q cannot be combined with a target ratio");
  RatioSearchResult r = target_ratio_search(padded, resolve_hyperparams(config.hyper, 1.0), ratio, config.tolerance);
  Encoded e;
  e.sigma = r.sigma;
  e.q = r.q;
  e.stream = std::move(r.stream);
  e.bytes = encode_stream(e.stream);
  e.encode_ms = ms_since(t0);
  return e;
}

int cmd_compress(const RunConfig& config, std::ostream& out) {
  if (config.sigma.has_value() == config.target_ratio.has_value())
    throw UsageError("compress needs exactly one of --sigma or --target-ratio");
  const PixelGrid padded = pad(load(config.input));
  const Encoded e =
      config.sigma ? encode_at_sigma(config, padded, *config.sigma) : encode_at_ratio(config, padded, *config.target_ratio);
  write_bytes(config.output, e.bytes);
  out << "wrote " << config.output.string() << ": " << e.bytes.size() << " bytes, ratio "
      << fmt(compression_ratio(e.stream.header, e.bytes.size())) << ", sigma " << fmt(e.sigma) << ", q " << fmt(e.q)
      << '\n';
  return kExitOk;
}

int cmd_decompress(const RunConfig& config, std::ostream& out) {
  const auto bytes = read_bytes(config.input);
  const PixelGrid g = decompress(bytes, config.scales);
  store(config.output, g);
  out << "wrote " << config.output.string() << " (" << dims_to_string(g.dims) << ", " << g.channels << " channel"
      << (g.channels == 1 ? "" : "s") << ")\n";
  return kExitOk;
}

int cmd_info(const RunConfig& config, std::ostream& out) {
  const auto bytes = read_bytes(config.input);
  const CompressedStream s = decode_stream(bytes);
  const StreamHeader& h = s.header;
  const MapTree tree = deserialize_tree(s.tree, h.dims_padded);
  std::size_t padded_pixels = 1;
  for (std::size_t d : h.dims_padded) padded_pixels *= d;
  out << "version: " << int{h.version} << '\n'
      << "dims: " << dims_to_string(h.dims_original) << '\n'
      << "padded_dims: " << dims_to_string(h.dims_padded) << '\n'
      << "bit_depth: " << h.bit_depth << '\n'
      << "channels: " << h.channels << '\n'
      << "sigma: " << fmt(h.sigma, 17) << '\n'
      << "q: " << fmt(h.q, 17) << '\n'
      << "alpha: " << fmt(h.hp.alpha) << '\n'
      << "beta: " << fmt(h.hp.beta) << '\n'
      << "c: " << fmt(h.hp.c) << '\n'
      << "tau0: " << fmt(h.hp.tau0) << '\n'
      << "eta0: " << fmt(h.hp.eta0) << '\n'
      << "scales: " << h.scales() << '\n'
      << "available_scales: " << s.available_scales() << '\n'
      << "tree_bits: " << s.tree.bit_count << '\n'
      << "tree_nodes: " << tree.nodes.size() << '\n'
      << "tree_leaves: " << tree.leaf_count() << '\n'
      << "pruned_leaves: " << tree.pruned_count() << '\n'
      << "prune_fraction: "
      << fmt(static_cast<double>(tree.pruned_pixels()) / static_cast<double>(padded_pixels)) << '\n'
      << "bytes: " << bytes.size() << '\n'
      << "ratio: " << fmt(compression_ratio(h, bytes.size())) << '\n';
  return kExitOk;
}

void print_report(const QualityReport& r, std::ostream& out) {
  out << "psnr_db: " << fmt(r.psnr_db) << '\n'
      << "psnr_frame_mean_db: " << fmt(r.psnr_frame_mean_db) << '\n'
      << "ms_ssim: " << fmt(r.ms_ssim) << '\n';
  if (r.compression_ratio > 0) out << "compression_ratio: " << fmt(r.compression_ratio) << '\n';
  if (r.per_channel.size() > 1) {
    for (std::size_t c = 0; c < r.per_channel.size(); ++c)
      out << "channel " << c << ": psnr_db " << fmt(r.per_channel[c].psnr_db) << ", ms_ssim "
          << fmt(r.per_channel[c].ms_ssim) << '\n';
  }
}

int cmd_metrics(const RunConfig& config, std::ostream& out) {
  const PixelGrid ref = load(config.reference);
  const PixelGrid test = load(config.input);
  std::size_t stream_bytes = 0;
  if (!config.stream.empty()) stream_bytes = std::filesystem::file_size(config.stream);
  print_report(evaluate_quality(ref, test, stream_bytes), out);
  return kExitOk;
}

struct SweepRow {
  double sigma, q;
  std::size_t bytes;
  double ratio, psnr_db, ms_ssim, encode_ms, decode_ms;
};

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  const bool by_ratio = !config.sweep_ratios.empty();
  if (by_ratio == !config.sweep_sigmas.empty())
    throw UsageError("sweep needs exactly one non-empty grid: --sigmas or --ratios");
  const PixelGrid original = load(config.input);
  const PixelGrid padded = pad(original);
  const std::vector<double>& points = by_ratio ? config.sweep_ratios : config.sweep_sigmas;
  std::vector<SweepRow> rows(points.size());

  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        const Encoded e = by_ratio ? encode_at_ratio(config, padded, points[i]) : encode_at_sigma(config, padded, points[i]);
        const auto t0 = Clock::now();
        const PixelGrid decoded = decompress(e.bytes);
        const double decode_ms = ms_since(t0);
        const QualityReport r = evaluate_quality(original, decoded, e.bytes.size());
        rows[i] = {e.sigma, e.q, e.bytes.size(), r.compression_ratio, r.psnr_db, r.ms_ssim, e.encode_ms, decode_ms};
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int workers = std::clamp<int>(config.workers, 1, static_cast<int>(std::max<std::size_t>(points.size(), 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::ostringstream csv;
  csv << kSweepCsvHeader << '\n';
  for (const SweepRow& r : rows)
    csv << fmt(r.sigma, 10) << ',' << fmt(r.q, 10) << ',' << r.bytes << ',' << fmt(r.ratio, 10) << ','
        << fmt(r.psnr_db, 10) << ',' << fmt(r.ms_ssim, 10) << ',' << fmt(r.encode_ms, 6) << ','
        << fmt(r.decode_ms, 6) << '\n';
  if (config.csv.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(config.csv);
    if (!f) throw StreamError("cannot write " + config.csv.string());
    f << csv.str();
    out << "wrote " << rows.size() << " rows to " << config.csv.string() << '\n';
  }
  return kExitOk;
}

int cmd_progressive(const RunConfig& config, std::ostream& out) {
  if (config.reference.empty()) throw UsageError("progressive needs --reference <original image>");
  const auto bytes = read_bytes(config.input);
  const CompressedStream s = decode_stream(bytes);
  if (s.available_scales() != s.header.scales()) throw UsageError("progressive needs a complete stream");
  const PixelGrid ref = load(config.reference);
  const std::vector<std::size_t> bounds = segment_boundaries(s);
  std::vector<int> prefixes = config.prefix_scales;
  if (prefixes.empty())
    for (int k = 0; k <= s.header.scales(); ++k) prefixes.push_back(k);

  const bool pgm = s.header.dims_original.size() == 2 && s.header.channels == 1;
  if (!config.output.empty()) std::filesystem::create_directories(config.output);
  std::ostringstream csv;
  csv << kProgressiveCsvHeader << '\n';
  for (int k : prefixes) {
    if (k < 0 || k > s.header.scales())
      throw UsageError("prefix " + std::to_string(k) + " outside [0, " + std::to_string(s.header.scales()) + "]");
    const std::size_t used = bounds[static_cast<std::size_t>(k)];
    const PixelGrid g = decompress(std::span(bytes.data(), used));
    if (!config.output.empty())
      store(config.output / ("prefix_" + std::to_string(k) + (pgm ? ".pgm" : ".raw")), g);
    csv << k << ',' << used * 8 << ',' << fmt(psnr(ref, g), 10) << '\n';
  }
  if (config.csv.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(config.csv);
    if (!f) throw StreamError("cannot write " + config.csv.string());
    f << csv.str();
    out << "wrote " << prefixes.size() << " rows to " << config.csv.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

Hyperparams resolve_hyperparams(const HyperOverrides& o, double sigma) {
  Hyperparams hp = Hyperparams::defaults(sigma);
  if (o.alpha) hp.alpha = *o.alpha;
  if (o.beta) hp.beta = *o.beta;
  if (o.c) hp.c = *o.c;
  if (o.tau0_scale) hp.tau0 = *o.tau0_scale / sigma;
  if (o.eta0) hp.eta0 = *o.eta0;
  return hp;
}

std::optional<int> parse_args(int argc, const char* const* argv, RunConfig& config, std::ostream& out,
                              std::ostream& err) {
  CLI::App app{"Adaptive recursive-partition image and video compressor"};
  app.require_subcommand(1);
  if (const char* env = std::getenv("CARP_WORKERS")) {
    try {
      config.workers = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      err << "ignoring invalid CARP_WORKERS=" << env << '\n';
    }
  }

  auto add_hyper = [&](CLI::App* sub) {
    sub->add_option("--q", config.q, "Quantization step (default max(sigma, 0.5))")->check(CLI::PositiveNumber);
    sub->add_option("--alpha", config.hyper.alpha, "Slab scale decay per level");
    sub->add_option("--beta", config.hyper.beta, "Slab weight decay per level");
    sub->add_option("--c", config.hyper.c, "Slab weight at the root")->check(CLI::PositiveNumber);
    sub->add_option("--tau0-scale", config.hyper.tau0_scale, "tau0 * sigma (default 1)")->check(CLI::PositiveNumber);
    sub->add_option("--eta0", config.hyper.eta0, "Prior pruning probability")->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--empirical-bayes", config.empirical_bayes, "Pick hyperparameters by marginal likelihood");
  };

  auto* compress_cmd = app.add_subcommand("compress", "Encode an image into a .carp stream");
  compress_cmd->add_option("input", config.input, "Input image (.pgm or raw with .meta sidecar)")->required();
  compress_cmd->add_option("output", config.output, "Output .carp file")->required();
  auto* sigma_opt = compress_cmd->add_option("--sigma", config.sigma, "Noise scale")->check(CLI::PositiveNumber);
  auto* ratio_opt = compress_cmd->add_option("--target-ratio", config.target_ratio, "Search sigma for this ratio");
  sigma_opt->excludes(ratio_opt);
  compress_cmd->add_option("--tol", config.tolerance, "Relative ratio tolerance")->check(CLI::PositiveNumber);
  add_hyper(compress_cmd);

  auto* decompress_cmd = app.add_subcommand("decompress", "Decode a .carp stream");
  decompress_cmd->add_option("input", config.input, "Input .carp file")->required();
  decompress_cmd->add_option("output", config.output, "Output image (.pgm or raw)")->required();
  decompress_cmd->add_option("--scales", config.scales, "Decode only this many detail scales");

  auto* info_cmd = app.add_subcommand("info", "Print stream header and tree summary");
  info_cmd->add_option("input", config.input, "Input .carp file")->required();

  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR and MS-SSIM of a decoded image");
  metrics_cmd->add_option("reference", config.reference, "Reference image")->required();
  metrics_cmd->add_option("test", config.input, "Test image")->required();
  metrics_cmd->add_option("--stream", config.stream, "Stream whose size gives the compression ratio");

  auto* sweep_cmd = app.add_subcommand("sweep", "Rate-distortion sweep with CSV output");
  sweep_cmd->add_option("input", config.input, "Input image")->required();
  auto* sigmas_opt = sweep_cmd->add_option("--sigmas", config.sweep_sigmas, "Sigma grid")->delimiter(',');
  auto* ratios_opt = sweep_cmd->add_option("--ratios", config.sweep_ratios, "Target ratio grid")->delimiter(',');
  sigmas_opt->excludes(ratios_opt);
  sweep_cmd->add_option("--tol", config.tolerance, "Relative ratio tolerance")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--csv", config.csv, "CSV output path (stdout when omitted)");
  sweep_cmd->add_option("--workers", config.workers, "Parallel grid points (env CARP_WORKERS)")
      ->check(CLI::PositiveNumber);
  add_hyper(sweep_cmd);

  auto* progressive_cmd = app.add_subcommand("progressive", "Decode every scale prefix of a stream");
  progressive_cmd->add_option("input", config.input, "Input .carp file")->required();
  progressive_cmd->add_option("--reference", config.reference, "Original image for PSNR")->required();
  progressive_cmd->add_option("--out-dir", config.output, "Directory for per-prefix images");
  progressive_cmd->add_option("--prefixes", config.prefix_scales, "Prefix scale counts")->delimiter(',');
  progressive_cmd->add_option("--csv", config.csv, "CSV output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (compress_cmd->parsed()) config.command = Command::kCompress;
  if (decompress_cmd->parsed()) config.command = Command::kDecompress;
  if (info_cmd->parsed()) config.command = Command::kInfo;
  if (metrics_cmd->parsed()) config.command = Command::kMetrics;
  if (sweep_cmd->parsed()) config.command = Command::kSweep;
  if (progressive_cmd->parsed()) config.command = Command::kProgressive;
  return std::nullopt;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    switch (config.command) {
      case Command::kCompress:
        return cmd_compress(config, out);
      case Command::kDecompress:
        return cmd_decompress(config, out);
      case Command::kInfo:
        return cmd_info(config, out);
      case Command::kMetrics:
        return cmd_metrics(config, out);
      case Command::kSweep:
        return cmd_sweep(config, out);
      case Command::kProgressive:
        return cmd_progressive(config, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "[" << e.stage() << "] " << e.what() << '\n';
    return kExitPipeline;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "[io] " << e.what() << '\n';
    return kExitPipeline;
  }
  return kExitUsage;
}

}  // namespace carp::cli

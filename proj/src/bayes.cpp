#include "carp/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>

#include "carp/error.hpp"

namespace carp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }
double safe_log1m(double p) { return p < 1.0 ? std::log1p(-p) : kNegInf; }

std::mutex& warning_mutex() {
  static std::mutex mu;
  return mu;
}

WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

// Per-level constants of the coefficient mixture.
struct LevelMixture {
  double slab_const;
  double spike_const;
  double slab_inv2v;
  double spike_inv2v;

  LevelMixture(int level, const Hyperparams& hp) {
    const double rho = hp.rho(level);
    const double tau = hp.tau(level);
    const double spike_variance = hp.sigma * hp.sigma;
    const double slab_variance = (1.0 + tau * tau) * spike_variance;
    slab_const = safe_log(rho) - 0.5 * (kLog2Pi + std::log(slab_variance));
    spike_const = safe_log1m(rho) - 0.5 * (kLog2Pi + std::log(spike_variance));
    slab_inv2v = 1.0 / (2.0 * slab_variance);
    spike_inv2v = 1.0 / (2.0 * spike_variance);
  }

  double operator()(double w) const {
    const double w2 = w * w;
    return log_add(slab_const - w2 * slab_inv2v, spike_const - w2 * spike_inv2v);
  }
};

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex());
  warning_handler() = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex());
  if (warning_handler()) warning_handler()(message);
}

Hyperparams Hyperparams::defaults(double sigma) {
  Hyperparams hp;
  hp.sigma = sigma;
  hp.tau0 = 1.0 / sigma;
  return hp;
}

Hyperparams Hyperparams::with_sigma(double new_sigma) const {
  Hyperparams hp = *this;
  hp.tau0 = tau0 * sigma / new_sigma;
  hp.sigma = new_sigma;
  return hp;
}

Hyperparams Hyperparams::validated() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(sigma) || sigma <= 0.0) throw ContractViolation("sigma must be positive and finite");
  if (!finite(alpha) || !finite(beta)) throw ContractViolation("alpha and beta must be finite");
  if (!finite(c) || c <= 0.0) throw ContractViolation("c must be positive");
  if (!finite(tau0) || tau0 <= 0.0) throw ContractViolation("tau0 must be positive");
  if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw ContractViolation("eta0 must lie in [0, 1]");
  Hyperparams hp = *this;
  if (sigma < kMinSigma) {
    warn("sigma " + std::to_string(sigma) + " clamped to " + std::to_string(kMinSigma));
    hp.sigma = kMinSigma;
  }
  return hp;
}

double Hyperparams::rho(int level) const { return std::min(1.0, c * std::exp2(-beta * level)); }

double Hyperparams::tau(int level) const { return std::exp2(-alpha * level) * tau0; }

double log_normal_density(double x, double variance) {
  return -0.5 * (kLog2Pi + std::log(variance)) - x * x / (2.0 * variance);
}

double log_psi0(std::size_t size, double sst, const Hyperparams& hp) {
  const double s2 = hp.sigma * hp.sigma;
  return -0.5 * static_cast<double>(size - 1) * (kLog2Pi + std::log(s2)) - sst / (2.0 * s2);
}

double log_psi0(const BlockStats& stats, const Hyperparams& hp) { return log_psi0(stats.size, stats.sst, hp); }

double log_coefficient_likelihood(double w, int level, const Hyperparams& hp) { return LevelMixture(level, hp)(w); }

double PosteriorLattice::log_psi0(std::size_t flat) const {
  const BlockStats s = stats_->at(flat);
  return carp::log_psi0(s, hp_);
}

double PosteriorLattice::log_psi_d(std::size_t flat, int axis) const {
  const LatticeIndex& idx = index();
  const std::size_t shape = idx.shape_of(flat);
  if (axis < 0 || static_cast<std::size_t>(axis) >= idx.ndim() || !idx.shape_divisible(shape, axis))
    throw ContractViolation("log_psi_d on non-divisible axis " + std::to_string(axis));
  const auto [l, r] = idx.child_indices(flat, axis);
  const double w =
      (stats_->sum(l) - stats_->sum(r)) / std::sqrt(static_cast<double>(idx.shape_block_size(shape)));
  return log_coefficient_likelihood(w, idx.shape_level(shape), hp_) + log_psi_[l] + log_psi_[r];
}

double PosteriorLattice::log_prune_post(std::size_t flat) const {
  if (index().shape_of(flat) == 0) return kNegInf;
  return safe_log(hp_.eta0) + log_psi0(flat) - log_psi_[flat];
}

double PosteriorLattice::log_split_joint(std::size_t flat, int axis) const {
  const std::size_t shape = index().shape_of(flat);
  if (!index().shape_divisible(shape, axis)) return kNegInf;
  return safe_log1m(hp_.eta0) - std::log(static_cast<double>(index().shape_divisible_count(shape))) +
         log_psi_d(flat, axis) - log_psi_[flat];
}

double PosteriorLattice::prune_post(std::size_t flat) const {
  return std::min(1.0, std::exp(log_prune_post(flat)));
}

double PosteriorLattice::split_post(std::size_t flat, int axis) const {
  const LatticeIndex& idx = index();
  const std::size_t shape = idx.shape_of(flat);
  if (!idx.shape_divisible(shape, axis)) return 0.0;
  double total = kNegInf;
  for (int d = 0; d < static_cast<int>(idx.ndim()); ++d)
    if (idx.shape_divisible(shape, d)) total = log_add(total, log_psi_d(flat, d));
  return std::exp(log_psi_d(flat, axis) - total);
}

PosteriorLattice build_posterior(std::shared_ptr<const BlockStatsLattice> stats, const Hyperparams& hp_in) {
  const Hyperparams hp = hp_in.validated();
  const LatticeIndex& idx = stats->index();
  std::vector<double> log_psi(idx.node_count(), 0.0);
  const double log_prune = safe_log(hp.eta0);
  const double log_keep = safe_log1m(hp.eta0);
  const double log_2pi_s2 = kLog2Pi + std::log(hp.sigma * hp.sigma);
  const double inv_2s2 = 1.0 / (2.0 * hp.sigma * hp.sigma);

  for (std::size_t s = 1; s < idx.shape_count(); ++s) {
    const std::size_t first = idx.shape_first(s);
    const std::size_t count = idx.shape_blocks(s);
    const std::size_t size = idx.shape_block_size(s);
    const double prune_const = log_prune - 0.5 * static_cast<double>(size - 1) * log_2pi_s2;
    for (std::size_t k = first; k < first + count; ++k) log_psi[k] = prune_const - stats->sst(k) * inv_2s2;
    if (log_prune == kNegInf) std::fill_n(log_psi.begin() + first, count, kNegInf);

    const LevelMixture mixture(idx.shape_level(s), hp);
    const double split_const = log_keep - std::log(static_cast<double>(idx.shape_divisible_count(s)));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(size));
    if (log_keep != kNegInf) {
      for (int d = 0; d < static_cast<int>(idx.ndim()); ++d) {
        if (!idx.shape_divisible(s, d)) continue;
        idx.for_each_split(s, d, [&](std::size_t p, std::size_t l, std::size_t r) {
          const double w = (stats->sum(l) - stats->sum(r)) * inv_sqrt;
          log_psi[p] = log_add(log_psi[p], split_const + mixture(w) + log_psi[l] + log_psi[r]);
        });
      }
    }
    for (std::size_t k = first; k < first + count; ++k) {
      if (!std::isfinite(log_psi[k])) {
        const Block b = idx.block(k);
        throw NumericError("non-finite log marginal likelihood at block offset " + dims_to_string(b.offset, ',') +
                           " extent " + dims_to_string(b.extent));
      }
    }
  }
  return PosteriorLattice(std::move(stats), hp, std::move(log_psi));
}

PosteriorLattice build_posterior(const PixelGrid& grid, const Hyperparams& hp) {
  return build_posterior(build_stats(grid), hp);
}

std::size_t HyperGrid::size() const {
  return alpha.size() * beta.size() * c.size() * tau0_sigma.size() * eta0.size();
}

std::vector<Hyperparams> HyperGrid::points(double sigma) const {
  std::vector<Hyperparams> out;
  out.reserve(size());
  for (double a : alpha)
    for (double b : beta)
      for (double cc : c)
        for (double t : tau0_sigma)
          for (double e : eta0) out.push_back({sigma, a, b, cc, t / sigma, e});
  return out;
}

EmpiricalBayesResult empirical_bayes_fit(std::shared_ptr<const BlockStatsLattice> stats, double sigma,
                                         const HyperGrid& grid_spec) {
  const std::vector<Hyperparams> points = grid_spec.points(sigma);
  if (points.empty()) throw ContractViolation("empirical Bayes grid is empty");
  EmpiricalBayesResult result;
  result.log_marginal = kNegInf;
  for (const Hyperparams& hp : points) {
    const double lm = build_posterior(stats, hp).log_marginal();
    result.log_marginals.push_back(lm);
    if (result.log_marginals.size() == 1 || lm > result.log_marginal) {
      result.log_marginal = lm;
      result.best = hp.validated();
    }
  }
  return result;
}

EmpiricalBayesResult empirical_bayes_fit(const PixelGrid& grid, double sigma, const HyperGrid& grid_spec) {
  return empirical_bayes_fit(build_stats(grid), sigma, grid_spec);
}

}  // namespace carp

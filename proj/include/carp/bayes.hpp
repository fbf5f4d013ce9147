#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "carp/lattice.hpp"

namespace carp {

// Model hyperparameters. The spike-and-slab mixture at level j uses weight
// rho_j = min(1, c * 2^(-beta j)) on the slab N(0, (1 + tau_j^2) sigma^2),
// with tau_j = 2^(-alpha j) tau0. eta0 is the prior pruning probability of
// every block.
struct Hyperparams {
  double sigma = 1.0;
  double alpha = 0.5;
  double beta = 1.0;
  double c = 0.05;
  double tau0 = 1.0;
  double eta0 = 0.4;

  // alpha = 0.5, beta = 1, c = 0.05, tau0 = 1/sigma, eta0 = 0.4.
  static Hyperparams defaults(double sigma);

  // Same hyperparameters at a new sigma, keeping tau0 * sigma fixed.
  Hyperparams with_sigma(double new_sigma) const;

  // Throws ContractViolation on out-of-domain values; clamps sigma below
  // kMinSigma up to it with a warning.
  Hyperparams validated() const;

  double rho(int level) const;
  double tau(int level) const;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

inline constexpr double kMinSigma = 1e-6;

// Receives non-fatal diagnostics (sigma clamping, search non-convergence).
// Defaults to printing on stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

// log N(x; 0, variance).
double log_normal_density(double x, double variance);

// log of the pruned-block marginal likelihood:
// -((|A| - 1) / 2) log(2 pi sigma^2) - SST / (2 sigma^2).
double log_psi0(std::size_t size, double sst, const Hyperparams& hp);
double log_psi0(const BlockStats& stats, const Hyperparams& hp);

// log of the spike-and-slab density of one Haar coefficient at `level`.
double log_coefficient_likelihood(double w, int level, const Hyperparams& hp);

// Log marginal likelihoods over the block lattice, computed bottom up in log
// domain. Split and prune posteriors are derived on demand from the stored
// log Psi values and block sums.
class PosteriorLattice {
 public:
  PosteriorLattice(std::shared_ptr<const BlockStatsLattice> stats, Hyperparams hp, std::vector<double> log_psi)
      : stats_(std::move(stats)), hp_(hp), log_psi_(std::move(log_psi)) {}

  const LatticeIndex& index() const { return stats_->index(); }
  const BlockStatsLattice& stats() const { return *stats_; }
  const Hyperparams& hyperparams() const { return hp_; }

  double log_psi(std::size_t flat) const { return log_psi_[flat]; }
  double log_psi(const Block& b) const { return log_psi(index().flat_index(b)); }
  double log_marginal() const { return log_psi_[index().root()]; }

  double log_psi0(std::size_t flat) const;
  double log_psi0(const Block& b) const { return log_psi0(index().flat_index(b)); }

  // log Psi_d: mixture density of w_d(A) times both children's Psi.
  double log_psi_d(std::size_t flat, int axis) const;
  double log_psi_d(const Block& b, int axis) const { return log_psi_d(index().flat_index(b), axis); }

  // log of prior pruning mass times Psi_0 / Psi.
  double log_prune_post(std::size_t flat) const;
  // log of (1 - prune_post) * split_post[axis] = (1 - eta0) lambda_d Psi_d / Psi.
  double log_split_joint(std::size_t flat, int axis) const;

  double prune_post(std::size_t flat) const;
  double prune_post(const Block& b) const { return prune_post(index().flat_index(b)); }
  // Posterior axis probability given the block is not pruned; 0 for
  // non-divisible axes.
  double split_post(std::size_t flat, int axis) const;
  double split_post(const Block& b, int axis) const { return split_post(index().flat_index(b), axis); }

 private:
  std::shared_ptr<const BlockStatsLattice> stats_;
  Hyperparams hp_;
  std::vector<double> log_psi_;
};

PosteriorLattice build_posterior(std::shared_ptr<const BlockStatsLattice> stats, const Hyperparams& hp);
PosteriorLattice build_posterior(const PixelGrid& grid, const Hyperparams& hp);

// Candidate values for empirical-Bayes search. tau0 is given in units of
// 1/sigma.
struct HyperGrid {
  std::vector<double> alpha{0.1, 0.5, 1.0};
  std::vector<double> beta{0.5, 1.0, 2.0};
  std::vector<double> c{0.01, 0.05, 0.2};
  std::vector<double> tau0_sigma{0.5, 1.0, 2.0};
  std::vector<double> eta0{0.2, 0.4, 0.6};

  std::size_t size() const;
  // Points in nested order alpha, beta, c, tau0, eta0 (eta0 fastest).
  std::vector<Hyperparams> points(double sigma) const;
};

struct EmpiricalBayesResult {
  Hyperparams best;
  double log_marginal = 0.0;
  std::vector<double> log_marginals;  // one per grid point, in grid order
};

// Grid point maximizing log Psi(root); ties go to the earliest point.
EmpiricalBayesResult empirical_bayes_fit(const PixelGrid& grid, double sigma, const HyperGrid& grid_spec);
EmpiricalBayesResult empirical_bayes_fit(std::shared_ptr<const BlockStatsLattice> stats, double sigma,
                                         const HyperGrid& grid_spec);

}  // namespace carp

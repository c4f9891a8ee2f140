// Soft and hard beta-quantiles of empirical lower-objective values.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scbo/core.hpp"

namespace scbo {

struct QuantileSolution {
  double q = 0.0;
  /// |H(q) - beta| at return.
  double residual = 0.0;
  int iterations = 0;
  double lo = 0.0;
  double hi = 0.0;
  /// The bracket collapsed to adjacent doubles before the residual reached
  /// the tolerance; q is the best representable root.
  bool resolution_limited = false;
};

struct StabilityConstants {
  double z_beta = 0.0;
  double c_s = 0.0;
  double log_c_s = 0.0;
  double kappa = 0.0;
  double log_kappa = 0.0;
};

struct InverseStability {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds(double slack = 1e-8) const { return lhs <= rhs * (1.0 + slack); }
};

inline constexpr double kQuantileTolerance = 1e-12;
inline constexpr int kQuantileMaxIterations = 200;

inline std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// H(q) - beta with H(q) = mean_i s((q - l_i)/tau).
double soft_cdf_residual(double q, std::span<const double> l_values, double beta, double tau,
                         const Selector& selector = sigmoid());

/// Solves mean_i s((q - l_i)/tau) = beta by bracketed bisection seeded with
/// the localization interval [min l + tau z_beta, max l + tau z_beta] and
/// refined by safeguarded Newton steps.
QuantileSolution soft_quantile(std::span<const double> l_values, double beta, double tau,
                               const Selector& selector = sigmoid(),
                               double tolerance = kQuantileTolerance,
                               int max_iterations = kQuantileMaxIterations);

/// ceil(beta N), robust to decimal round-off in beta (e.g. 0.05 * 100 = 5).
std::size_t hard_rank(double beta, std::size_t n);

/// The ceil(beta N)-th smallest value, ties ordered by particle index.
double hard_quantile(std::span<const double> l_values, double beta);

/// eta_i = s((q - l_i)/tau).
Vec eta_weights(double q, std::span<const double> l_values, double tau,
                const Selector& selector = sigmoid());

/// Infimum of s' over [z_beta - (l_max-l_min)/tau, z_beta + (l_max-l_min)/tau]
/// and kappa = c_s / tau.
StabilityConstants kappa_bound(double l_min, double l_max, double beta, double tau,
                               const Selector& selector = sigmoid());

/// lhs = |q_mu - q_nu|, rhs = |F_mu(q_nu)| / kappa with kappa from the pooled
/// range of both sample sets.
InverseStability inverse_stability_slack(std::span<const double> l_mu, std::span<const double> l_nu,
                                         double beta, double tau,
                                         const Selector& selector = sigmoid());

}  // namespace scbo

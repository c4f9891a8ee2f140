// Soft and hard consensus points with log-domain Gibbs weighting.
#pragma once

#include <optional>

#include "scbo/core.hpp"
#include "scbo/quantile.hpp"

namespace scbo {

enum class WitnessSource { kEmpirical, kDeclared };

/// Consensus point plus the quantities needed to certify the deterministic
/// bounds B >= b_G and ||A|| <= a(R4). B, ||A||, b_G and a(R4) are on the
/// unshifted Gibbs scale and routinely under- or overflow for large alpha,
/// so each is also carried as a logarithm.
struct ConsensusReport {
  double q = 0.0;
  Vec eta;
  Vec m;
  Vec log_weights;  // log(e^{-alpha (G_i - min G)} eta_i)
  double log_b = 0.0;
  double b = 0.0;
  double log_a_norm = 0.0;
  double a_norm = 0.0;
  double log_b_g = 0.0;
  double b_g = 0.0;
  double log_a_r4 = 0.0;
  double a_r4 = 0.0;
  double fourth_moment = 0.0;  // R4 = mean ||theta_i||^4
  double g_min = 0.0;
  double g_max = 0.0;
  WitnessSource source = WitnessSource::kEmpirical;
  bool hard = false;
  std::size_t selected = 0;  // hard mode: particles with L_i <= q

  bool denominator_bound_holds(double rel = 1e-12) const;
  bool numerator_bound_holds(double rel = 1e-10) const;
};

/// Soft consensus point m = A/B for tau > 0. When declared G bounds are given
/// they replace the empirical extremes in the b_G / a(R4) witnesses.
ConsensusReport consensus_point(const Ensemble& ensemble, const AlgorithmParams& params,
                                const std::optional<ObjectiveBounds>& declared = std::nullopt,
                                const Selector& selector = sigmoid());

/// Gibbs-weighted mean over {i : L_i <= hard_quantile(L, beta)}.
ConsensusReport hard_consensus_point(const Ensemble& ensemble, double alpha, double beta,
                                     const std::optional<ObjectiveBounds>& declared = std::nullopt);

/// Dispatches on params.hard().
ConsensusReport compute_consensus(const Ensemble& ensemble, const AlgorithmParams& params,
                                  const std::optional<ObjectiveBounds>& declared = std::nullopt);

struct MomentWitness {
  double lhs = 0.0;  // ||m||^4
  double rhs = 0.0;  // C_m^4 mean ||theta||^4
  double log_lhs = 0.0;
  double log_rhs = 0.0;
  bool holds(double rel = 1e-10) const { return log_lhs <= log_rhs + rel || lhs == 0.0; }
};

/// log C_m = -log(beta)/4 + alpha (g_max - g_min).
double log_moment_constant(double alpha, double beta, double g_min, double g_max);

/// Compares an already computed consensus point against C_m^4 times the
/// ensemble fourth moment. Does not throw.
MomentWitness moment_witness(const Vec& m, double fourth_moment, double alpha, double beta,
                             double g_min, double g_max);

/// Recomputes the consensus point and checks ||m||^4 <= C_m^4 mean ||theta||^4.
/// Throws InvariantError("consensus-moment") when violated.
MomentWitness consensus_moment_witness(const Ensemble& ensemble, const AlgorithmParams& params,
                                       double g_min, double g_max);

/// mean_i ||theta_i||^4.
double fourth_moment(const Matrix& positions);

}  // namespace scbo

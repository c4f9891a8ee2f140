#include "scbo/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "scbo/parallel.hpp"

namespace scbo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_fresh(const Ensemble& e) {
  if (e.size() == 0) throw DomainError("consensus: empty ensemble");
  if (!e.fresh) throw DomainError("consensus: ensemble caches are stale");
}

// Fills m, log_b and the witnesses from per-particle log weights relative to
// min G. Reduction is sequential in particle order.
// selected_mass is mean(eta): beta for the soft map, the selected fraction
// (>= beta) for the hard one; it bounds mean(eta^2) in the a(R4) witness.
void reduce(const Ensemble& e, double alpha, double beta, double selected_mass,
            const std::optional<ObjectiveBounds>& declared, ConsensusReport& r) {
  const std::size_t n = e.size();
  const int d = e.dim();
  double max_lw = kNegInf;
  for (std::size_t i = 0; i < n; ++i) max_lw = std::max(max_lw, r.log_weights[static_cast<Eigen::Index>(i)]);
  if (!std::isfinite(max_lw)) throw InvariantError("degenerate-weights", "consensus: all weights vanish");

  CompensatedSum denom;
  std::vector<CompensatedSum> numer(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double w = std::exp(r.log_weights[k] - max_lw);
    if (w == 0.0) continue;
    denom.add(w);
    for (int j = 0; j < d; ++j) numer[static_cast<std::size_t>(j)].add(w * e.positions(k, j));
  }
  const double s = denom.value();
  if (!(s > 0.0)) throw InvariantError("degenerate-weights", "consensus: all weights vanish");
  r.m.resize(d);
  for (int j = 0; j < d; ++j) r.m[j] = numer[static_cast<std::size_t>(j)].value() / s;

  const double g_min_emp = e.g_values.minCoeff();
  const double g_max_emp = e.g_values.maxCoeff();
  if (declared) {
    r.g_min = declared->g_min;
    r.g_max = declared->g_max;
    r.source = WitnessSource::kDeclared;
  } else {
    r.g_min = g_min_emp;
    r.g_max = g_max_emp;
    r.source = WitnessSource::kEmpirical;
  }

  r.fourth_moment = fourth_moment(e.positions);
  r.log_b = std::log(s) + max_lw - alpha * g_min_emp - std::log(static_cast<double>(n));
  r.b = std::exp(r.log_b);
  const double mnorm = r.m.norm();
  r.log_a_norm = mnorm > 0.0 ? r.log_b + std::log(mnorm) : kNegInf;
  r.a_norm = std::exp(r.log_a_norm);
  r.log_b_g = std::log(beta) - alpha * r.g_max;
  r.b_g = std::exp(r.log_b_g);
  r.log_a_r4 = 0.5 * std::log(selected_mass) - alpha * r.g_min + 0.25 * std::log(r.fourth_moment);
  r.a_r4 = std::exp(r.log_a_r4);
}

}  // namespace

bool ConsensusReport::denominator_bound_holds(double rel) const { return log_b >= log_b_g - rel; }

bool ConsensusReport::numerator_bound_holds(double rel) const {
  return log_a_norm == kNegInf || log_a_norm <= log_a_r4 + rel;
}

double fourth_moment(const Matrix& positions) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    const double sq = positions.row(i).squaredNorm();
    acc.add(sq * sq);
  }
  return acc.value() / static_cast<double>(positions.rows());
}

ConsensusReport consensus_point(const Ensemble& e, const AlgorithmParams& params,
                                const std::optional<ObjectiveBounds>& declared, const Selector& selector) {
  require_fresh(e);
  if (!(params.tau > 0.0)) throw DomainError("consensus_point: tau must be positive; use hard_consensus_point");
  ConsensusReport r;
  const auto l = as_span(e.l_values);
  const QuantileSolution sol = soft_quantile(l, params.beta, params.tau, selector);
  r.q = sol.q;
  r.eta = eta_weights(sol.q, l, params.tau, selector);
  const double g_min = e.g_values.minCoeff();
  const auto n = static_cast<Eigen::Index>(e.size());
  r.log_weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_eta = selector.log_value((sol.q - e.l_values[i]) / params.tau);
    r.log_weights[i] = -params.alpha * (e.g_values[i] - g_min) + log_eta;
  }
  reduce(e, params.alpha, params.beta, params.beta, declared, r);
  return r;
}

ConsensusReport hard_consensus_point(const Ensemble& e, double alpha, double beta,
                                     const std::optional<ObjectiveBounds>& declared) {
  require_fresh(e);
  ConsensusReport r;
  r.hard = true;
  const auto l = as_span(e.l_values);
  r.q = hard_quantile(l, beta);
  const double g_min = e.g_values.minCoeff();
  const auto n = static_cast<Eigen::Index>(e.size());
  r.eta.resize(n);
  r.log_weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool in = e.l_values[i] <= r.q;
    r.eta[i] = in ? 1.0 : 0.0;
    r.log_weights[i] = in ? -alpha * (e.g_values[i] - g_min) : kNegInf;
    r.selected += in ? 1 : 0;
  }
  if (r.selected == 0) throw InvariantError("hard-selection", "hard consensus: empty selected set");
  reduce(e, alpha, beta, static_cast<double>(r.selected) / static_cast<double>(n), declared, r);
  return r;
}

ConsensusReport compute_consensus(const Ensemble& e, const AlgorithmParams& params,
                                  const std::optional<ObjectiveBounds>& declared) {
  if (params.hard()) return hard_consensus_point(e, params.alpha, params.beta, declared);
  return consensus_point(e, params, declared);
}

double log_moment_constant(double alpha, double beta, double g_min, double g_max) {
  return -0.25 * std::log(beta) + alpha * (g_max - g_min);
}

MomentWitness moment_witness(const Vec& m, double r4, double alpha, double beta, double g_min, double g_max) {
  MomentWitness w;
  const double mn = m.norm();
  w.log_lhs = mn > 0.0 ? 4.0 * std::log(mn) : kNegInf;
  w.lhs = std::exp(w.log_lhs);
  w.log_rhs = r4 > 0.0 ? 4.0 * log_moment_constant(alpha, beta, g_min, g_max) + std::log(r4) : kNegInf;
  w.rhs = std::exp(w.log_rhs);
  return w;
}

MomentWitness consensus_moment_witness(const Ensemble& e, const AlgorithmParams& params, double g_min,
                                       double g_max) {
  if (e.fresh && e.size() > 0 &&
      (e.g_values.minCoeff() < g_min || e.g_values.maxCoeff() > g_max))
    throw DomainError("consensus_moment_witness: G values outside [g_min, g_max]");
  const ConsensusReport r = compute_consensus(e, params);
  const MomentWitness w = moment_witness(r.m, r.fourth_moment, params.alpha, params.beta, g_min, g_max);
  if (!w.holds()) {
    std::ostringstream os;
    os << "consensus-moment: ||m||^4 = " << w.lhs << " exceeds C_m^4 R4 = " << w.rhs;
    throw InvariantError("consensus-moment", os.str());
  }
  return w;
}

}  // namespace scbo

// Theory constants and the numerical certificates built on them.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scbo/consensus.hpp"
#include "scbo/core.hpp"
#include "scbo/dynamics.hpp"

namespace scbo {

/// A positive quantity carried in log space; value() is +inf or 0 when the
/// double range is exceeded.
struct Magnitude {
  double log = 0.0;

  static Magnitude from_value(double v);
  static Magnitude from_log(double l) { return Magnitude{l}; }
  double value() const;
  bool overflows() const { return !std::isfinite(value()) || (value() == 0.0 && std::isfinite(log)); }
};

inline constexpr double kDefaultBdgConstant = 36.0;
inline constexpr double kDefaultVartheta = 0.5;

struct TheoryConstants {
  Magnitude c_m;
  Magnitude b_g;
  Magnitude a_r4;
  Magnitude k_bd;
  Magnitude c_bd;
  double kappa = 0.0;  // NaN in hard mode
  double log_kappa = 0.0;
  double b4d = kDefaultBdgConstant;
  double mu4 = 0.0;
  double horizon = 0.0;
  double a_lyap = 0.0;  // 2 lambda - d sigma^2
  double b_lyap = 0.0;  // sqrt(2) (lambda + d sigma^2)
  double c_d = 0.0;     // d sigma^2 / 2
};

/// Closed-form constants for a parameter set. Requires objective.bounds.
/// a(R4) is evaluated at R4 = mu4.
TheoryConstants theory_constants(const AlgorithmParams& params, const ObjectiveSpec& objective,
                                 double horizon, double b4d, double mu4);

/// Horizon T* = log(V0 / eps) / ((1 - vartheta)(2 lambda - d sigma^2)) by
/// which V falls to eps under the decay law; +inf when 2 lambda <= d sigma^2.
double decay_horizon(double v0, double eps, double vartheta, double lambda, double sigma, int dim);

// ---------------------------------------------------------------------------
// Mass lower bound

struct TrajectoryPoint {
  double t = 0.0;
  Matrix positions;
};

struct MassBoundReport {
  double r = 0.0;
  double c = 0.0;
  double b0 = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double p = 0.0;
  double initial_bump_mass = 0.0;
  long n_particles = 0;
  std::vector<double> times;
  std::vector<double> lower_bound;
  std::vector<double> measured;
  bool held = true;
};

/// Smallest c on the grid 1/2 + j/(2*10^4), j = 1..9999, with
/// d (1-c)^2 <= c (2c - 1). Throws DomainError when none exists.
double admissible_c(int dim);

/// exp(1 - r^2 / (r^2 - ||x - center||^2)) inside the ball, 0 outside.
double bump(const Vec& x, const Vec& center, double r);

/// B0 = C_m C_mf4^{1/4} + ||theta*||; +inf when C_m overflows.
double mass_bound_b0(const Magnitude& c_m, double c_mf4, const Vec& theta_star);

MassBoundReport mass_bound_check(const std::vector<TrajectoryPoint>& trajectory, const Vec& theta_star, double r,
                                 const AlgorithmParams& params, double b0);

/// Same check from an initial ensemble and a recorded ball-mass series.
MassBoundReport mass_bound_series(const Matrix& initial, const std::vector<double>& times,
                                  const std::vector<double>& measured, const Vec& theta_star, double r,
                                  const AlgorithmParams& params, double b0);

// ---------------------------------------------------------------------------
// Soft Laplace bound

struct LaplaceBoundReport {
  bool level_hypothesis = false;  // q + delta_lev <= L_min + min(L_inf, (eta_L r_G)^(1/nu_L))
  bool gap_hypothesis = false;    // u + G~_r <= G_inf
  bool local_mass_hypothesis = false;
  bool evaluated = false;  // all hypotheses hold
  double q = 0.0;
  double local_mass = 0.0;
  double v = 0.0;
  double g_tilde_r = 0.0;
  double delta_r = 0.0;
  double c_in = 0.0;
  double c_out = 0.0;
  double term_geometry = 0.0;
  double term_leak_in = 0.0;
  double term_leak_out = 0.0;
  double bound = 0.0;  // r_G + the three terms
  double actual = 0.0;
  std::string sup_method;
  long sup_samples = 0;

  bool holds() const { return !evaluated || actual <= bound; }
};

/// Requires objective.geometry, objective.theta_star, objective.bounds and
/// objective.lipschitz. Suprema over B_r(theta*) use a ~10^6 point grid for
/// d <= 3 and the particles inside the ball otherwise.
LaplaceBoundReport laplace_bound_check(const Ensemble& ensemble, const AlgorithmParams& params,
                                       const ObjectiveSpec& objective);

// ---------------------------------------------------------------------------
// Decay rate

struct DecayFit {
  double fitted_rate = 0.0;
  double target_rate = 0.0;
  bool informative = false;  // 2 lambda > d sigma^2
  long points = 0;
};

/// Least-squares slope of log v_hat against t over rows with
/// first_step <= step <= last_step.
DecayFit decay_rate_fit(const RunMetrics& metrics, long first_step, long last_step,
                        const AlgorithmParams& params, double vartheta = kDefaultVartheta);

// ---------------------------------------------------------------------------
// Cutoff event

struct CutoffReport {
  std::vector<double> series;  // X_t^N
  double max_value = 0.0;
  bool omega_m_held = true;
  Magnitude markov_bound;  // min(1, C_bd / M)
};

/// mean_i max(||a_i||^4, ||b_i||^4) for paired ensembles of equal size.
double paired_fourth_moment(const Matrix& a, const Matrix& b);

CutoffReport cutoff_monitor(const std::vector<double>& series, double m, const Magnitude& c_bd);

// ---------------------------------------------------------------------------
// Quantile invariants on random instances

struct QuantileSuiteResult {
  int instances = 0;
  int violations = 0;
  double max_residual = 0.0;
  double max_eta_error = 0.0;         // |mean(eta) - beta|
  double max_localization_gap = 0.0;  // distance of q outside its bracket
  double max_stability_ratio = 0.0;   // lhs / rhs of the inverse-stability inequality
  std::vector<std::string> failures;  // first few, human readable
};

/// N in 1..500, L uniform or clustered, beta in [0.01, 0.99], tau in
/// [1e-4, 1] (log-uniform); every instance also gets a perturbed twin for
/// the inverse-stability inequality.
QuantileSuiteResult quantile_invariant_suite(int instances, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

enum class Verdict { kPass, kFail, kSkipped };

struct CheckRecord {
  std::string name;
  std::string property;
  double lhs = 0.0;
  double rhs = 0.0;
  Verdict verdict = Verdict::kPass;
  std::string note;
};

const char* to_string(Verdict v);

/// One JSON object per line.
std::string format_report(const std::vector<CheckRecord>& records);

}  // namespace scbo

#include "scbo/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "scbo/parallel.hpp"

namespace scbo {

namespace {

struct CdfEval {
  double residual;  // H(q) - beta
  double slope;     // H'(q)
};

CdfEval evaluate(double q, std::span<const double> l, double beta, double tau, const Selector& s) {
  CompensatedSum h;
  CompensatedSum dh;
  for (double li : l) {
    const double z = (q - li) / tau;
    h.add(s.value(z));
    dh.add(s.derivative(z));
  }
  const double n = static_cast<double>(l.size());
  return {h.value() / n - beta, dh.value() / (n * tau)};
}

void check_inputs(std::span<const double> l, double beta, double tau) {
  if (l.empty()) throw DomainError("soft_quantile: empty input");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("soft_quantile: beta out of (0,1)");
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw DomainError("soft_quantile: tau must be positive (route tau = 0 to hard_quantile)");
  for (double v : l)
    if (!std::isfinite(v)) throw DomainError("soft_quantile: non-finite lower-objective value");
}

}  // namespace

double soft_cdf_residual(double q, std::span<const double> l_values, double beta, double tau,
                         const Selector& selector) {
  check_inputs(l_values, beta, tau);
  return evaluate(q, l_values, beta, tau, selector).residual;
}

QuantileSolution soft_quantile(std::span<const double> l, double beta, double tau,
                               const Selector& selector, double tolerance, int max_iterations) {
  check_inputs(l, beta, tau);
  const auto [mn, mx] = std::minmax_element(l.begin(), l.end());
  const double shift = tau * selector.inverse(beta);

  QuantileSolution sol;
  sol.lo = *mn + shift;
  sol.hi = *mx + shift;

  auto finish = [&](double q, double residual, bool limited) {
    sol.q = std::clamp(q, sol.lo, sol.hi);
    sol.residual = std::abs(residual);
    sol.resolution_limited = limited;
    return sol;
  };

  double lo = sol.lo;
  double hi = sol.hi;
  const CdfEval f_lo = evaluate(lo, l, beta, tau, selector);
  if (std::abs(f_lo.residual) <= tolerance) return finish(lo, f_lo.residual, false);
  const CdfEval f_hi = evaluate(hi, l, beta, tau, selector);
  if (std::abs(f_hi.residual) <= tolerance) return finish(hi, f_hi.residual, false);
  // Rounding in the endpoints can leave a residual of the wrong sign when the
  // bracket is degenerate; the clamp to [lo, hi] then keeps localization exact.
  if (f_lo.residual > 0.0) return finish(lo, f_lo.residual, true);
  if (f_hi.residual < 0.0) return finish(hi, f_hi.residual, true);

  double best_q = std::abs(f_lo.residual) < std::abs(f_hi.residual) ? lo : hi;
  double best_r = std::min(std::abs(f_lo.residual), std::abs(f_hi.residual));

  double q = lo + 0.5 * (hi - lo);
  double last_abs = std::numeric_limits<double>::infinity();
  bool force_bisect = false;
  for (int it = 1; it <= max_iterations; ++it) {
    sol.iterations = it;
    const CdfEval f = evaluate(q, l, beta, tau, selector);
    const double a = std::abs(f.residual);
    if (a < best_r) {
      best_r = a;
      best_q = q;
    }
    if (a <= tolerance) return finish(q, f.residual, false);
    if (f.residual < 0.0)
      lo = q;
    else
      hi = q;

    double next = std::numeric_limits<double>::quiet_NaN();
    if (!force_bisect && f.slope > 0.0) next = q - f.residual / f.slope;
    if (!(next > lo && next < hi)) next = lo + 0.5 * (hi - lo);
    force_bisect = a > 0.5 * last_abs;
    last_abs = a;

    if (next <= lo || next >= hi) return finish(best_q, best_r, true);
    q = next;
  }
  std::ostringstream os;
  os << "soft_quantile: no convergence after " << max_iterations << " iterations, residual " << best_r;
  throw SolverError(os.str(), best_r);
}

std::size_t hard_rank(double beta, std::size_t n) {
  if (n == 0) throw DomainError("hard_quantile: empty input");
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("hard_quantile: beta out of (0,1]");
  const double x = beta * static_cast<double>(n);
  const double r = std::round(x);
  double k = std::abs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
  k = std::clamp(k, 1.0, static_cast<double>(n));
  return static_cast<std::size_t>(k);
}

double hard_quantile(std::span<const double> l, double beta) {
  const std::size_t k = hard_rank(beta, l.size());
  std::vector<std::size_t> idx(l.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) { return l[a] < l[b] || (l[a] == l[b] && a < b); };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), less);
  return l[idx[k - 1]];
}

Vec eta_weights(double q, std::span<const double> l, double tau, const Selector& selector) {
  Vec eta(static_cast<Eigen::Index>(l.size()));
  for (std::size_t i = 0; i < l.size(); ++i)
    eta[static_cast<Eigen::Index>(i)] = selector.value((q - l[i]) / tau);
  return eta;
}

StabilityConstants kappa_bound(double l_min, double l_max, double beta, double tau, const Selector& selector) {
  if (!(l_max >= l_min)) throw DomainError("kappa_bound: l_max < l_min");
  if (!(tau > 0.0)) throw DomainError("kappa_bound: tau must be positive");
  StabilityConstants c;
  c.z_beta = selector.inverse(beta);
  const double w = (l_max - l_min) / tau;
  const double a = c.z_beta - w;
  const double b = c.z_beta + w;
  c.log_c_s = std::min(selector.log_derivative(a), selector.log_derivative(b));
  if (dynamic_cast<const SigmoidSelector*>(&selector) == nullptr && b > a) {
    // Unknown shape: scan the interval as well as the endpoints.
    constexpr int kGrid = 10000;
    for (int j = 1; j < kGrid; ++j)
      c.log_c_s = std::min(c.log_c_s, selector.log_derivative(a + (b - a) * j / kGrid));
  }
  c.c_s = std::exp(c.log_c_s);
  c.log_kappa = c.log_c_s - std::log(tau);
  c.kappa = c.c_s / tau;
  return c;
}

InverseStability inverse_stability_slack(std::span<const double> l_mu, std::span<const double> l_nu,
                                         double beta, double tau, const Selector& selector) {
  const QuantileSolution q_mu = soft_quantile(l_mu, beta, tau, selector);
  const QuantileSolution q_nu = soft_quantile(l_nu, beta, tau, selector);
  const auto [mu_lo, mu_hi] = std::minmax_element(l_mu.begin(), l_mu.end());
  const auto [nu_lo, nu_hi] = std::minmax_element(l_nu.begin(), l_nu.end());
  const StabilityConstants k =
      kappa_bound(std::min(*mu_lo, *nu_lo), std::max(*mu_hi, *nu_hi), beta, tau, selector);

  InverseStability out;
  out.lhs = std::abs(q_mu.q - q_nu.q);
  const double f = std::abs(soft_cdf_residual(q_nu.q, l_mu, beta, tau, selector));
  out.rhs = f == 0.0 ? 0.0 : std::exp(std::log(f) - k.log_kappa);
  return out;
}

}  // namespace scbo

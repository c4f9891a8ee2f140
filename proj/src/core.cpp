#include "scbo/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "scbo/parallel.hpp"

namespace scbo {

namespace {

void require_finite(double z, const char* op) {
  if (!std::isfinite(z)) {
    std::ostringstream os;
    os << op << ": non-finite input " << z;
    throw DomainError(os.str());
  }
}

}  // namespace

double Selector::log_value(double z) const { return std::log(value(z)); }
double Selector::log_derivative(double z) const { return std::log(derivative(z)); }

// Branch on the sign of z so that exp never sees a positive argument.
double SigmoidSelector::value(double z) const {
  require_finite(z, "sigmoid");
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double SigmoidSelector::derivative(double z) const {
  require_finite(z, "sigmoid derivative");
  const double e = std::exp(-std::abs(z));
  const double d = 1.0 + e;
  return e / (d * d);
}

double SigmoidSelector::inverse(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("sigmoid inverse: argument outside (0,1)");
  return std::log(p) - std::log1p(-p);
}

double SigmoidSelector::log_value(double z) const {
  require_finite(z, "sigmoid");
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double SigmoidSelector::log_derivative(double z) const {
  require_finite(z, "sigmoid derivative");
  const double a = std::abs(z);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

const Selector& sigmoid() {
  static const SigmoidSelector instance;
  return instance;
}

double sigmoid_selector(double z) { return sigmoid().value(z); }
double sigmoid_derivative(double z) { return sigmoid().derivative(z); }

double clip_objective(double value, std::optional<double> cap) {
  if (cap) return std::min(value, *cap);
  return value;
}

double AlgorithmParams::xi() const {
  if (tau == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (tau * alpha);
}

void AlgorithmParams::set_xi(double xi) {
  if (!(xi > 0.0) || !std::isfinite(xi)) throw ConfigError("xi must be positive and finite");
  tau = 1.0 / (xi * alpha);
}

void AlgorithmParams::validate() const {
  auto bad = [](bool fails, const char* msg) {
    if (fails) throw ConfigError(msg);
  };
  bad(!(alpha > 0.0) || !std::isfinite(alpha), "alpha must be positive");
  bad(!(beta > 0.0 && beta < 1.0), "beta out of (0,1)");
  bad(!(tau >= 0.0) || !std::isfinite(tau), "tau must be nonnegative");
  bad(!(lambda > 0.0) || !std::isfinite(lambda), "lambda must be positive");
  bad(!(sigma >= 0.0) || !std::isfinite(sigma), "sigma must be nonnegative");
  bad(!(dt > 0.0) || !std::isfinite(dt), "dt must be positive");
  bad(steps <= 0, "steps must be positive");
  bad(n_particles <= 0, "n_particles must be positive");
}

void GeometryConstants::validate() const {
  const double all[] = {eta_l, nu_l, l_inf, eta_g, nu_g, g_inf, r_g, big_r_g, r, u, delta_lev};
  for (double v : all)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("geometry constants must be strictly positive");
  if (!(r <= r_g && r_g <= big_r_g)) throw ConfigError("geometry constants require r <= r_G <= R_G");
}

double ObjectiveSpec::eval_lower(const Vec& x) const {
  const double v = lower(x);
  return bounds ? clip_objective(v, bounds->l_max) : v;
}

double ObjectiveSpec::eval_upper(const Vec& x) const {
  const double v = upper(x);
  return bounds ? clip_objective(v, bounds->g_max) : v;
}

double ObjectiveSpec::distance(const Vec& x) const {
  if (target_distance) return target_distance(x);
  if (theta_star) return (x - *theta_star).norm();
  return std::numeric_limits<double>::quiet_NaN();
}

InitSpec InitSpec::gaussian(double loc, double scale) {
  InitSpec s;
  s.kind = Kind::kGaussian;
  s.loc = loc;
  s.scale = scale;
  return s;
}

InitSpec InitSpec::uniform(double lo, double hi) {
  InitSpec s;
  s.kind = Kind::kUniform;
  s.lo = lo;
  s.hi = hi;
  return s;
}

InitSpec InitSpec::explicit_points(Matrix points) {
  InitSpec s;
  s.kind = Kind::kExplicit;
  s.points = std::move(points);
  return s;
}

void Ensemble::refresh(const ObjectiveSpec& objective, int workers) {
  const std::size_t n = size();
  l_values.resize(static_cast<Eigen::Index>(n));
  g_values.resize(static_cast<Eigen::Index>(n));
  parallel_for(n, workers, [&](std::size_t i) {
    const Vec x = particle(i);
    const auto k = static_cast<Eigen::Index>(i);
    l_values[k] = objective.eval_lower(x);
    g_values[k] = objective.eval_upper(x);
  });
  fresh = true;
}

Ensemble make_ensemble(Matrix positions, Vec l_values, Vec g_values) {
  if (l_values.size() != positions.rows() || g_values.size() != positions.rows())
    throw DomainError("ensemble caches must have one entry per particle");
  Ensemble e(std::move(positions));
  e.l_values = std::move(l_values);
  e.g_values = std::move(g_values);
  e.fresh = true;
  return e;
}

}  // namespace scbo

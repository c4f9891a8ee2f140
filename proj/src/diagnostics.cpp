#include "scbo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "scbo/noise.hpp"
#include "scbo/parallel.hpp"
#include "scbo/quantile.hpp"

namespace scbo {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// log(e^a + e^b)
double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : (x == 0.0 ? -kInf : kNaN); }

}  // namespace

Magnitude Magnitude::from_value(double v) {
  if (v < 0.0) throw DomainError("Magnitude: negative value");
  return Magnitude{safe_log(v)};
}

double Magnitude::value() const { return std::exp(log); }

TheoryConstants theory_constants(const AlgorithmParams& params, const ObjectiveSpec& objective, double horizon,
                                 double b4d, double mu4) {
  if (!objective.bounds) throw ConfigError("theory constants need objective bounds (l_min, l_max, g_min, g_max)");
  if (!(horizon >= 0.0)) throw ConfigError("horizon must be nonnegative");
  if (!(b4d > 0.0)) throw ConfigError("b4d must be positive");
  if (!(mu4 >= 0.0)) throw ConfigError("mu4 must be nonnegative");
  if (!(params.beta > 0.0 && params.beta < 1.0)) throw ConfigError("beta out of (0,1)");
  const ObjectiveBounds& b = *objective.bounds;
  const double a = params.alpha;
  const double lb = std::log(params.beta);
  const double d = objective.dim;

  TheoryConstants c;
  c.b4d = b4d;
  c.mu4 = mu4;
  c.horizon = horizon;
  c.c_m = Magnitude::from_log(log_moment_constant(a, params.beta, b.g_min, b.g_max));
  c.b_g = Magnitude::from_log(lb - a * b.g_max);
  c.a_r4 = Magnitude::from_log(0.5 * lb - a * b.g_min + 0.25 * safe_log(mu4));

  const double lam = params.lambda, sig = params.sigma, t = horizon;
  const double poly = std::pow(lam, 4) * t * t * t + std::pow(sig, 4) * b4d * d * d * t;
  c.k_bd = Magnitude::from_log(std::log(216.0) + log_add(0.0, 4.0 * c.c_m.log) + safe_log(poly));
  // log C_bd = log 54 + log mu4 + K_bd T
  const double kt = std::exp(c.k_bd.log + safe_log(t));
  c.c_bd = Magnitude::from_log(std::log(54.0) + safe_log(mu4) + (t == 0.0 ? 0.0 : kt));

  if (params.tau > 0.0) {
    const StabilityConstants s = kappa_bound(b.l_min, b.l_max, params.beta, params.tau);
    c.kappa = s.kappa;
    c.log_kappa = s.log_kappa;
  } else {
    c.kappa = kNaN;
    c.log_kappa = kNaN;
  }
  c.a_lyap = 2.0 * lam - d * sig * sig;
  c.b_lyap = std::sqrt(2.0) * (lam + d * sig * sig);
  c.c_d = d * sig * sig / 2.0;
  return c;
}

double decay_horizon(double v0, double eps, double vartheta, double lambda, double sigma, int dim) {
  if (!(v0 > 0.0) || !(eps > 0.0)) throw DomainError("decay_horizon: V0 and eps must be positive");
  if (!(vartheta > 0.0 && vartheta < 1.0)) throw DomainError("decay_horizon: vartheta out of (0,1)");
  const double a = 2.0 * lambda - dim * sigma * sigma;
  if (!(a > 0.0)) return kInf;
  return std::max(0.0, std::log(v0 / eps)) / ((1.0 - vartheta) * a);
}

// ---------------------------------------------------------------------------

double admissible_c(int dim) {
  if (dim <= 0) throw DomainError("admissible_c: dimension must be positive");
  constexpr int kGrid = 10000;
  for (int j = 1; j < kGrid; ++j) {
    const double c = 0.5 + 0.5 * static_cast<double>(j) / kGrid;
    if (dim * (1.0 - c) * (1.0 - c) <= c * (2.0 * c - 1.0)) return c;
  }
  throw DomainError("no admissible c in (1/2,1) for d = " + std::to_string(dim));
}

double bump(const Vec& x, const Vec& center, double r) {
  const double s = (x - center).squaredNorm();
  const double r2 = r * r;
  if (!(s < r2)) return 0.0;
  return std::exp(1.0 - r2 / (r2 - s));
}

double mass_bound_b0(const Magnitude& c_m, double c_mf4, const Vec& theta_star) {
  if (!(c_mf4 >= 0.0)) throw DomainError("mass_bound_b0: C_mf4 must be nonnegative");
  return std::exp(c_m.log + 0.25 * safe_log(c_mf4)) + theta_star.norm();
}

MassBoundReport mass_bound_check(const std::vector<TrajectoryPoint>& trajectory, const Vec& theta_star, double r,
                                 const AlgorithmParams& params, double b0) {
  if (trajectory.empty()) throw DomainError("mass_bound_check: empty trajectory");
  std::vector<double> times, measured;
  const Matrix& x0 = trajectory.front().positions;
  for (const auto& pt : trajectory) {
    if (pt.positions.cols() != x0.cols() || pt.positions.rows() == 0)
      throw DomainError("mass_bound_check: ensemble shape mismatch");
    long inside = 0;
    for (Eigen::Index i = 0; i < pt.positions.rows(); ++i)
      if ((pt.positions.row(i).transpose() - theta_star).norm() < r) ++inside;
    times.push_back(pt.t);
    measured.push_back(static_cast<double>(inside) / static_cast<double>(pt.positions.rows()));
  }
  return mass_bound_series(x0, times, measured, theta_star, r, params, b0);
}

MassBoundReport mass_bound_series(const Matrix& x0, const std::vector<double>& times,
                                  const std::vector<double>& measured, const Vec& theta_star, double r,
                                  const AlgorithmParams& params, double b0) {
  if (!(r > 0.0)) throw DomainError("mass_bound_check: r must be positive");
  if (times.empty() || times.size() != measured.size()) throw DomainError("mass_bound_check: bad series");
  const int d = static_cast<int>(theta_star.size());
  MassBoundReport rep;
  rep.r = r;
  rep.b0 = b0;
  rep.c = admissible_c(d);
  const double c = rep.c, lam = params.lambda, s2 = params.sigma * params.sigma;
  const double omc = 1.0 - c;
  rep.k1 = 2.0 * lam * (c * r + b0 * std::sqrt(c)) / (omc * omc * r) +
           2.0 * s2 * (c * r * r + b0 * b0) * (2.0 * c + d) / (std::pow(omc, 4) * r * r);
  rep.k2 = lam * lam / (s2 * c * (2.0 * c - 1.0));
  rep.p = 2.0 * std::max(rep.k1, rep.k2);

  rep.n_particles = static_cast<long>(x0.rows());
  if (x0.rows() == 0 || x0.cols() != d) throw DomainError("mass_bound_check: ensemble shape mismatch");
  CompensatedSum bump_sum;
  for (Eigen::Index i = 0; i < x0.rows(); ++i) bump_sum.add(bump(x0.row(i).transpose(), theta_star, r));
  rep.initial_bump_mass = bump_sum.value() / static_cast<double>(x0.rows());

  const double t0 = times.front();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double elapsed = times[k] - t0;
    // p may be +inf; e^{-p t} is then 1 at t = 0 and 0 afterwards.
    const double decay = elapsed == 0.0 ? 1.0 : std::exp(-rep.p * elapsed);
    const double bound = rep.initial_bump_mass * decay;
    rep.times.push_back(times[k]);
    rep.lower_bound.push_back(bound);
    rep.measured.push_back(measured[k]);
    if (!(measured[k] >= bound)) rep.held = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

struct BallSup {
  double value = -kInf;
  std::string method;
  long samples = 0;
};

BallSup sup_over_ball(const ObjectiveSpec& obj, const Vec& center, double r, const Matrix& particles) {
  BallSup out;
  const int d = obj.dim;
  out.value = obj.eval_upper(center);
  out.samples = 1;
  if (d <= 3) {
    const long per_axis = static_cast<long>(std::ceil(std::pow(1e6, 1.0 / d)));
    const double h = 2.0 * r / static_cast<double>(per_axis - 1);
    std::vector<long> idx(static_cast<std::size_t>(d), 0);
    Vec x(d);
    for (;;) {
      for (int j = 0; j < d; ++j) x[j] = center[j] - r + h * static_cast<double>(idx[static_cast<std::size_t>(j)]);
      if ((x - center).norm() <= r) {
        out.value = std::max(out.value, obj.eval_upper(x));
        ++out.samples;
      }
      int j = 0;
      while (j < d && ++idx[static_cast<std::size_t>(j)] == per_axis) idx[static_cast<std::size_t>(j++)] = 0;
      if (j == d) break;
    }
    std::ostringstream m;
    m << "grid " << per_axis << "^" << d << " spacing " << h;
    out.method = m.str();
  } else {
    for (Eigen::Index i = 0; i < particles.rows(); ++i) {
      const Vec x = particles.row(i).transpose();
      if ((x - center).norm() <= r) {
        out.value = std::max(out.value, obj.eval_upper(x));
        ++out.samples;
      }
    }
    out.method = "particle support";
  }
  return out;
}

}  // namespace

LaplaceBoundReport laplace_bound_check(const Ensemble& ensemble, const AlgorithmParams& params,
                                       const ObjectiveSpec& objective) {
  if (!objective.geometry) throw ConfigError("laplace check needs geometry constants");
  if (!objective.theta_star) throw ConfigError("laplace check needs theta_star");
  if (!objective.bounds) throw ConfigError("laplace check needs objective bounds");
  if (!objective.lipschitz) throw ConfigError("laplace check needs Lipschitz constants");
  if (!(params.tau > 0.0)) throw DomainError("laplace check needs tau > 0");
  const GeometryConstants& g = *objective.geometry;
  g.validate();
  const Vec& ts = *objective.theta_star;
  const Vec tt = g.theta_tilde.value_or(ts);
  const ObjectiveBounds& b = *objective.bounds;

  Ensemble e = ensemble;
  if (!e.fresh) e.refresh(objective);
  const auto n = static_cast<double>(e.size());
  if (e.size() == 0) throw DomainError("laplace check: empty ensemble");

  LaplaceBoundReport rep;
  const ConsensusReport cr = consensus_point(e, params);
  rep.q = cr.q;
  rep.actual = (cr.m - ts).norm();

  long inside = 0;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < e.positions.rows(); ++i) {
    const double dist = (e.positions.row(i).transpose() - ts).norm();
    if (dist < g.r) ++inside;
    sq += dist * dist;
  }
  rep.local_mass = static_cast<double>(inside) / n;
  rep.v = 0.5 * sq / n;

  const BallSup sup = sup_over_ball(objective, ts, g.r, e.positions);
  rep.sup_method = sup.method;
  rep.sup_samples = sup.samples;
  rep.g_tilde_r = sup.value - objective.eval_upper(tt);
  rep.delta_r = sup.value - b.g_min;

  const double level_cap = std::min(g.l_inf, std::pow(g.eta_l * g.r_g, 1.0 / g.nu_l));
  rep.level_hypothesis = rep.q + g.delta_lev <= b.l_min + level_cap;
  rep.gap_hypothesis = g.u + rep.g_tilde_r <= g.g_inf;
  rep.local_mass_hypothesis = inside > 0;

  const Selector& s = sigmoid();
  const double z_in = (rep.q - b.l_min - objective.lipschitz->lower * g.r) / params.tau;
  const double z_out = -g.delta_lev / params.tau;
  rep.c_in = s.value(z_in);
  rep.c_out = s.value(z_out);
  const double log_c_in = s.log_value(z_in);
  const double log_c_out = s.log_value(z_out);
  const double log_mass = safe_log(rep.local_mass);
  const double root_2v = std::sqrt(2.0 * rep.v);

  rep.term_geometry = std::pow(g.u + rep.g_tilde_r, g.nu_g) / g.eta_g;
  rep.term_leak_in =
      std::exp(-params.alpha * g.u - log_c_in - log_mass + std::log(root_2v + params.beta * g.r_g));
  rep.term_leak_out =
      std::exp(params.alpha * rep.delta_r + log_c_out - log_c_in - log_mass + std::log(root_2v + g.r_g));
  rep.bound = g.r_g + rep.term_geometry + rep.term_leak_in + rep.term_leak_out;
  if (std::isnan(rep.bound)) rep.bound = kInf;  // inf - inf style cancellations only arise from empty mass

  rep.evaluated = rep.level_hypothesis && rep.gap_hypothesis && rep.local_mass_hypothesis;
  return rep;
}

// ---------------------------------------------------------------------------

DecayFit decay_rate_fit(const RunMetrics& metrics, long first_step, long last_step, const AlgorithmParams& params,
                        double vartheta) {
  if (!(vartheta >= 0.0 && vartheta < 1.0)) throw DomainError("decay_rate_fit: vartheta out of [0,1)");
  std::vector<double> ts, ys;
  for (const MetricsRow& row : metrics.rows) {
    if (row.step < first_step || row.step > last_step) continue;
    if (!(row.v_hat > 0.0))
      throw DomainError("decay_rate_fit: nonpositive v_hat at step " + std::to_string(row.step));
    ts.push_back(row.t);
    ys.push_back(std::log(row.v_hat));
  }
  if (ts.size() < 2) throw DomainError("decay_rate_fit: window holds fewer than two recorded rows");
  const auto k = static_cast<double>(ts.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tm += ts[i];
    ym += ys[i];
  }
  tm /= k;
  ym /= k;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - tm) * (ts[i] - tm);
    sty += (ts[i] - tm) * (ys[i] - ym);
  }
  if (!(stt > 0.0)) throw DomainError("decay_rate_fit: window has no time spread");
  DecayFit fit;
  fit.points = static_cast<long>(ts.size());
  fit.fitted_rate = -sty / stt;
  const double a = 2.0 * params.lambda - metrics.dim * params.sigma * params.sigma;
  fit.target_rate = (1.0 - vartheta) * a;
  fit.informative = a > 0.0;
  return fit;
}

// ---------------------------------------------------------------------------

double paired_fourth_moment(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("paired_fourth_moment: shape mismatch");
  if (a.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).squaredNorm(), nb = b.row(i).squaredNorm();
    sum += std::max(na * na, nb * nb);
  }
  return sum / static_cast<double>(a.rows());
}

CutoffReport cutoff_monitor(const std::vector<double>& series, double m, const Magnitude& c_bd) {
  if (!(m > 0.0)) throw DomainError("cutoff_monitor: M must be positive");
  CutoffReport rep;
  rep.series = series;
  rep.max_value = series.empty() ? 0.0 : *std::max_element(series.begin(), series.end());
  rep.omega_m_held = rep.max_value <= m;
  rep.markov_bound = Magnitude::from_log(std::min(0.0, c_bd.log - std::log(m)));
  return rep;
}

// ---------------------------------------------------------------------------

QuantileSuiteResult quantile_invariant_suite(int instances, std::uint64_t seed) {
  const NoiseSource rng(seed);
  QuantileSuiteResult res;
  res.instances = instances;
  auto fail = [&](int k, const std::string& what) {
    ++res.violations;
    if (res.failures.size() < 10) res.failures.push_back("instance " + std::to_string(k) + ": " + what);
  };
  constexpr std::uint64_t kParams = 1u << 20;  // particle slot for per-instance parameters
  for (int k = 0; k < instances; ++k) {
    const auto step = static_cast<std::uint64_t>(k);
    const auto n = 1 + static_cast<std::size_t>(rng.uniform(step, kParams, 0) * 500.0);
    const double beta = 0.01 + 0.98 * rng.uniform(step, kParams, 1);
    const double tau = std::pow(10.0, -4.0 + 4.0 * rng.uniform(step, kParams, 2));
    const bool clustered = rng.uniform(step, kParams, 3) < 0.5;
    const double scale = std::pow(10.0, -2.0 + 3.0 * rng.uniform(step, kParams, 4));
    const int clusters = 1 + static_cast<int>(rng.uniform(step, kParams, 5) * 4.0);

    std::vector<double> l(n), l2(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (clustered) {
        const auto c = static_cast<std::uint32_t>(rng.uniform(step, i, 0) * clusters);
        const double centre = scale * rng.uniform(step, kParams + 1, c);
        l[i] = centre + 1e-3 * scale * rng.normal(step, i, 1);
      } else {
        l[i] = scale * rng.uniform(step, i, 1);
      }
      l2[i] = l[i] + 0.1 * scale * rng.normal(step, i, 2);
    }

    try {
      const QuantileSolution sol = soft_quantile(l, beta, tau);
      res.max_residual = std::max(res.max_residual, sol.residual);
      if (!(sol.residual <= kQuantileTolerance)) fail(k, "residual " + std::to_string(sol.residual));

      const auto [mn, mx] = std::minmax_element(l.begin(), l.end());
      const double z = sigmoid().inverse(beta);
      const double gap = std::max({0.0, *mn + tau * z - sol.q, sol.q - (*mx + tau * z)});
      res.max_localization_gap = std::max(res.max_localization_gap, gap);
      if (gap > 0.0) fail(k, "q outside its localization bracket");

      const Vec eta = eta_weights(sol.q, l, tau);
      CompensatedSum s;
      for (Eigen::Index i = 0; i < eta.size(); ++i) s.add(eta[i]);
      const double err = std::abs(s.value() / static_cast<double>(n) - beta);
      res.max_eta_error = std::max(res.max_eta_error, err);
      if (!(err <= 1e-10)) fail(k, "mean(eta) off by " + std::to_string(err));

      const InverseStability st = inverse_stability_slack(l, l2, beta, tau);
      if (st.lhs > 0.0) res.max_stability_ratio = std::max(res.max_stability_ratio, st.lhs / st.rhs);
      if (!st.holds(1e-8)) fail(k, "inverse stability lhs " + std::to_string(st.lhs) + " rhs " + std::to_string(st.rhs));
    } catch (const Error& e) {
      fail(k, e.what());
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass:
      return "pass";
    case Verdict::kFail:
      return "fail";
    case Verdict::kSkipped:
      return "skipped";
  }
  return "?";
}

namespace {

nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

}  // namespace

std::string format_report(const std::vector<CheckRecord>& records) {
  std::ostringstream out;
  for (const CheckRecord& r : records) {
    nlohmann::json j;
    j["name"] = r.name;
    j["property"] = r.property;
    j["lhs"] = number(r.lhs);
    j["rhs"] = number(r.rhs);
    j["verdict"] = to_string(r.verdict);
    if (!r.note.empty()) j["note"] = r.note;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace scbo

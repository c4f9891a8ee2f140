// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scbo/bench.hpp"
#include "scbo/cli.hpp"
#include "scbo/config.hpp"
#include "scbo/diagnostics.hpp"

using namespace scbo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

RunConfig benchmark_run(const std::string& name, std::uint64_t seed) {
  Config c = benchmark_defaults(name);
  c.seed = seed;
  return to_run_config(c);
}

std::string num(double x) {
  std::ostringstream o;
  o.precision(4);
  o << x;
  return o.str();
}

Ensemble random_ensemble(std::mt19937_64& rng, long n, int d) {
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix p(n, d);
  Vec l(n), g(n);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) p(i, j) = nd(rng);
    l[i] = u(rng);
    g[i] = u(rng);
  }
  return make_ensemble(p, l, g);
}

// ---------------------------------------------------------------------------

Outcome quantile_suite() {
  const QuantileSuiteResult r = quantile_invariant_suite(1000, 20240601);
  Outcome o;
  o.pass = r.violations == 0;
  o.detail = "violations " + std::to_string(r.violations) + ", max residual " + num(r.max_residual) +
             ", max |mean eta - beta| " + num(r.max_eta_error) + ", max stability ratio " +
             num(r.max_stability_ratio);
  for (const auto& f : r.failures) o.detail += "; " + f;
  return o;
}

Outcome soft_hard_consistency() {
  std::mt19937_64 rng(7);
  AlgorithmParams p;
  p.alpha = 30.0;
  p.beta = 0.05;
  double worst_final = 0.0;
  int monotone_breaks = 0;
  for (int k = 0; k < 50; ++k) {
    Ensemble e = random_ensemble(rng, 100, 2);  // beta N = 5
    // Unit mean spacing of L: the coarsest tau already resolves the gaps around the quantile.
    e.l_values *= 100.0;
    const Vec mh = hard_consensus_point(e, p.alpha, p.beta).m;
    double prev = INFINITY;
    for (int j = 1; j <= 6; ++j) {
      p.tau = std::pow(10.0, -j);
      const double err = (consensus_point(e, p).m - mh).norm();
      if (err > prev) ++monotone_breaks;
      prev = err;
    }
    worst_final = std::max(worst_final, prev);
  }
  return {monotone_breaks == 0 && worst_final <= 1e-6,
          "monotonicity breaks " + std::to_string(monotone_breaks) + ", worst gap at tau=1e-6 " + num(worst_final)};
}

Outcome moment_certificate() {
  long checked = 0, violations = 0;
  for (const std::string name : {"circle", "star", "rippled", "bowl"}) {
    for (SelectionMode mode : {SelectionMode::kSoft, SelectionMode::kHard}) {
      RunConfig rc = benchmark_run(name, 0);
      rc.mode = mode;
      const AlgorithmParams p = rc.effective_params();
      run(rc, RunOptions{4, [&](long, const Ensemble& e, const ConsensusReport& r) {
                           const MomentWitness w = moment_witness(r.m, fourth_moment(e.positions), p.alpha, p.beta,
                                                                  e.g_values.minCoeff(), e.g_values.maxCoeff());
                           ++checked;
                           if (!w.holds()) ++violations;
                         }});
    }
  }
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nd(1, 300), dd(1, 6);
  AlgorithmParams p;
  p.alpha = 30.0;
  p.beta = 0.05;
  p.tau = 1.0 / (1e4 * 30.0);
  for (int k = 0; k < 1000; ++k) {
    Ensemble e = random_ensemble(rng, nd(rng), dd(rng));
    e.g_values *= 10.0;
    try {
      consensus_moment_witness(e, p, 0.0, 10.0);
    } catch (const InvariantError&) {
      ++violations;
    }
    ++checked;
  }
  return {violations == 0, std::to_string(checked) + " witnesses, " + std::to_string(violations) + " violations"};
}

Outcome reproduction(const std::string& name, double g_ref) {
  Outcome o{true, ""};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MetricsRow r = run(benchmark_run(name, seed), RunOptions{4, {}}).rows.back();
    const bool ok = std::abs(r.g_consensus - g_ref) <= 0.5 && r.l_consensus <= 1e-2 && r.dist <= 0.15 &&
                    r.spread <= 1e-2;
    o.pass = o.pass && ok;
    o.detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " G " + num(r.g_consensus) +
                " L " + num(r.l_consensus) + " dist " + num(r.dist) + " spread " + num(r.spread);
  }
  return o;
}

Outcome xi_monotone() {
  std::vector<double> means;
  Outcome o{true, "mean L:"};
  for (double xi : {10.0, 100.0, 1000.0, 10000.0}) {
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Config c = benchmark_defaults("circle");
      c.seed = seed;
      c.xi = xi;
      s += run(to_run_config(c), RunOptions{4, {}}).rows.back().l_consensus;
    }
    means.push_back(s / 5.0);
    o.detail += " xi=" + num(xi) + " " + num(means.back());
  }
  for (std::size_t i = 1; i < means.size(); ++i) o.pass = o.pass && means[i] <= means[i - 1];
  return o;
}

Outcome baseline_separation() {
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  auto mean_consensus = [&](SelectionMode mode) {
    double s = 0.0;
    for (std::uint64_t seed : seeds) {
      RunConfig rc = benchmark_run("rippled", seed);
      rc.mode = mode;
      s += run(rc, RunOptions{4, {}}).rows.back().g_consensus;
    }
    return s / static_cast<double>(seeds.size());
  };
  auto mean_baseline = [&](const std::string& method) {
    double s = 0.0;
    for (std::uint64_t seed : seeds) {
      Config c = benchmark_defaults("rippled");
      c.seed = seed;
      s += run_gradient_baseline(method, c, BaselineSettings{}).back().g;
    }
    return s / static_cast<double>(seeds.size());
  };
  const double soft = mean_consensus(SelectionMode::kSoft), hard = mean_consensus(SelectionMode::kHard);
  const double sbgd = mean_baseline("sbgd1"), vpbgd = mean_baseline("vpbgd1");
  const double best_gd = std::min(sbgd, vpbgd);
  const bool pass = soft < best_gd && hard < best_gd && soft <= 2.0 && hard <= 2.0;
  return {pass, "mean f: scb2o " + num(soft) + ", cb2o " + num(hard) + ", sbgd1 " + num(sbgd) + ", vpbgd1 " +
                    num(vpbgd)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  const double h = 1e-6;
  for (int k = 0; k < 100; ++k) {
    const Vec x{{u(rng), u(rng)}};
    const Vec g = upper_f_grad(x);
    Vec fd(2);
    for (int j = 0; j < 2; ++j) {
      Vec a = x, b = x;
      a[j] += h;
      b[j] -= h;
      fd[j] = (upper_f(a) - upper_f(b)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  return {worst <= 1e-6, "worst relative error " + num(worst)};
}

Outcome self_averaging() {
  Config c = benchmark_defaults("circle");
  const RunConfig rc = to_run_config(c);
  const auto rows = variance_scaling_study(rc, {25, 100, 400}, {0, 1, 2, 3, 4, 5, 6, 7}, RunOptions{4, {}});
  bool decreasing = true;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::string detail = "variance:";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += " N=" + std::to_string(rows[i].n_particles) + " " + num(rows[i].variance);
    if (i > 0 && !(rows[i].variance < rows[i - 1].variance)) decreasing = false;
    const double x = std::log(static_cast<double>(rows[i].n_particles)), y = std::log(rows[i].variance);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(rows.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {decreasing && slope <= -0.5, detail + ", log-log slope " + num(slope)};
}

Outcome decay_fit() {
  const RunConfig rc = benchmark_run("bowl", 0);
  const RunMetrics m = run(rc, RunOptions{4, {}});
  const DecayFit f = decay_rate_fit(m, 0, 300, rc.params, kDefaultVartheta);
  return {f.informative && f.fitted_rate >= f.target_rate,
          "fitted " + num(f.fitted_rate) + " target " + num(f.target_rate) + " over " + std::to_string(f.points) +
              " rows"};
}

Outcome mass_bound() {
  Config c = benchmark_defaults("circle");
  c.n_particles = 2000;
  c.mass_radii = {5.0};
  const RunConfig rc = to_run_config(c);
  const RunMetrics m = run(rc, RunOptions{4, {}});
  const Matrix x0 = initialize(rc).positions;
  double c_mf4 = 0.0;
  std::vector<double> times, measured;
  for (const MetricsRow& r : m.rows) {
    c_mf4 = std::max(c_mf4, r.fourth_moment);
    times.push_back(r.t);
    measured.push_back(r.mass_in_ball.at(0));
  }
  const AlgorithmParams p = rc.effective_params();
  const TheoryConstants tc =
      theory_constants(p, rc.objective, static_cast<double>(p.steps) * p.dt, c.b4d, fourth_moment(x0));
  const Vec& ts = *rc.objective.theta_star;
  const double b0 = mass_bound_b0(tc.c_m, c_mf4, ts);
  const MassBoundReport rep = mass_bound_series(x0, times, measured, ts, 5.0, p, b0);
  double min_measured = 1.0;
  for (double v : rep.measured) min_measured = std::min(min_measured, v);
  return {rep.held && rep.initial_bump_mass > 0.0,
          "N " + std::to_string(rep.n_particles) + ", r 5, c " + num(rep.c) + ", p " + num(rep.p) +
              ", initial bump mass " + num(rep.initial_bump_mass) + ", min measured mass " + num(min_measured) +
              ", " + std::to_string(rep.times.size()) + " steps"};
}

Outcome determinism() {
  const RunConfig rc = benchmark_run("circle", 42);
  const std::string a = metrics_csv(run(rc, RunOptions{1, {}}));
  const std::string b = metrics_csv(run(rc, RunOptions{1, {}}));
  const std::string w = metrics_csv(run(rc, RunOptions{4, {}}));
  return {a == b && a == w, "bytes " + std::to_string(a.size()) + (a == b ? ", repeat identical" : ", repeat differs") +
                                (a == w ? ", 4 workers identical" : ", 4 workers differ")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "quantile invariant suite (1000 instances)", 10, quantile_suite},
      {2, "soft to hard consensus consistency", 5, soft_hard_consistency},
      {3, "consensus moment certificate", 60, moment_certificate},
      {4, "circle reproduction", 30, [] { return reproduction("circle", 4.003); }},
      {5, "star reproduction", 30, [] { return reproduction("star", 2.777); }},
      {6, "L(c*) nonincreasing in xi", 120, xi_monotone},
      {7, "separation from gradient baselines on rippled", 60, baseline_separation},
      {8, "analytic gradient of f", 1, gradient_check},
      {9, "self-averaging of the consensus point", 180, self_averaging},
      {10, "decay rate on the bowl", 20, decay_fit},
      {11, "mass lower bound at N=2000", 30, mass_bound},
      {12, "byte-identical metrics at 1 and 4 workers", 10, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " [" << num(secs) << " s"
              << (in_time ? "" : ", over budget " + num(c.budget_s) + " s") << "] " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

#include "scbo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "scbo/bench.hpp"
#include "scbo/consensus.hpp"
#include "scbo/noise.hpp"
#include "scbo/parallel.hpp"

namespace scbo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class LogLevel { kQuiet, kInfo, kDebug };

LogLevel log_level() {
  const char* v = std::getenv("SCBO_LOG");
  if (!v) return LogLevel::kInfo;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::kQuiet;
  if (s == "debug" || s == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void info(std::ostream& err, const std::string& msg) {
  if (log_level() != LogLevel::kQuiet) err << msg << '\n';
}

void debug(std::ostream& err, const std::string& msg) {
  if (log_level() == LogLevel::kDebug) err << msg << '\n';
}

nlohmann::json jnum(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

nlohmann::json jvec(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(jnum(v[i]));
  return a;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split(s, ',')) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(item, &pos);
      if (pos != item.size() || item[0] == '-') throw std::invalid_argument("");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + item + "'");
    }
  }
  return out;
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

// ---------------------------------------------------------------------------
// Archives

std::string metrics_csv(const RunMetrics& m) {
  std::ostringstream o;
  o << kMetricsSchemaLine << '\n';
  o << "step,t,L_consensus,G_consensus,dist_theta_star,spread,v_hat,fourth_moment";
  for (std::size_t k = 0; k < m.mass_radii.size(); ++k) o << ",mass_r" << k + 1;
  for (int j = 0; j < m.dim; ++j) o << ",c_" << j + 1;
  o << ",g_min,g_max,log_B,q\n";
  for (const MetricsRow& r : m.rows) {
    o << r.step << ',' << fmt(r.t) << ',' << fmt(r.l_consensus) << ',' << fmt(r.g_consensus) << ','
      << fmt(r.dist) << ',' << fmt(r.spread) << ',' << fmt(r.v_hat) << ',' << fmt(r.fourth_moment);
    for (double v : r.mass_in_ball) o << ',' << fmt(v);
    for (Eigen::Index j = 0; j < r.consensus.size(); ++j) o << ',' << fmt(r.consensus[j]);
    o << ',' << fmt(r.g_min) << ',' << fmt(r.g_max) << ',' << fmt(r.log_b) << ',' << fmt(r.q) << '\n';
  }
  return o.str();
}

std::vector<double> MetricsTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("metrics: missing column " + name);
  const auto j = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

bool MetricsTable::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

MetricsTable parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsSchemaLine)
    throw ConfigError("metrics: expected schema line '" + std::string(kMetricsSchemaLine) + "'");
  MetricsTable t;
  if (!std::getline(in, line)) throw ConfigError("metrics: missing header");
  t.columns = split(line, ',');
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != t.columns.size())
      throw ConfigError("metrics: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(t.columns.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c, "metrics line " + std::to_string(lineno)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string summary_json(const Config& config, const RunMetrics& m) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["benchmark"] = config.benchmark;
  j["seed"] = config.seed;
  j["mode"] = config.mode == SelectionMode::kHard ? "hard" : "soft";
  j["xi"] = jnum(config.xi);
  j["tau"] = jnum(config.tau());
  j["final_consensus"] = jvec(m.final_consensus);
  if (!m.rows.empty()) {
    const MetricsRow& r = m.rows.back();
    j["final"] = {{"step", r.step},          {"t", jnum(r.t)},
                  {"L_consensus", jnum(r.l_consensus)}, {"G_consensus", jnum(r.g_consensus)},
                  {"dist_theta_star", jnum(r.dist)},    {"spread", jnum(r.spread)},
                  {"v_hat", jnum(r.v_hat)},             {"fourth_moment", jnum(r.fourth_moment)}};
  }
  j["rows"] = m.rows.size();
  j["wall_time_s"] = m.wall_time;
  return j.dump(2) + "\n";
}

Config resolved_snapshot(const Config& config) {
  Config c = config;
  auto absolute = [&](std::string& p) {
    if (p.empty()) return;
    std::filesystem::path path(p);
    if (path.is_relative() && !c.base_dir.empty()) path = c.base_dir / path;
    p = std::filesystem::absolute(path).lexically_normal().string();
  };
  absolute(c.init_file);
  absolute(c.geometry_file);
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_archive(const std::filesystem::path& dir, const Config& config, const RunMetrics& metrics) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", serialize_config(resolved_snapshot(config)));
  write_text(dir / "metrics.csv", metrics_csv(metrics));
  write_text(dir / "summary.json", summary_json(config, metrics));
}

// ---------------------------------------------------------------------------
// Checks

namespace {

CheckRecord record(const std::string& name, const std::string& property, double lhs, double rhs, bool ok,
                   std::string note = {}) {
  return CheckRecord{name, property, lhs, rhs, ok ? Verdict::kPass : Verdict::kFail, std::move(note)};
}

CheckRecord skipped(const std::string& name, const std::string& property, std::string note) {
  return CheckRecord{name, property, kNaN, kNaN, Verdict::kSkipped, std::move(note)};
}

struct Rerun {
  std::string metrics;
  Ensemble final_ensemble;
};

}  // namespace

std::vector<CheckRecord> run_checks(const Config& config, const std::string& metrics_text,
                                    const std::vector<std::string>& checks, const CheckOptions& options,
                                    std::ostream& log) {
  for (const auto& c : checks)
    if (std::find(kAllChecks.begin(), kAllChecks.end(), c) == kAllChecks.end())
      throw ConfigError("unknown check '" + c + "'");
  const RunConfig rc = to_run_config(config);
  const AlgorithmParams params = rc.effective_params();
  const MetricsTable table = parse_metrics_csv(metrics_text);
  if (table.rows.empty()) throw ConfigError("metrics: no rows");
  const int d = rc.objective.dim;
  const double horizon = static_cast<double>(params.steps) * params.dt;

  std::optional<Rerun> rerun;
  auto get_rerun = [&]() -> const Rerun& {
    if (!rerun) {
      Rerun r;
      RunOptions opts;
      opts.workers = options.workers;
      opts.observer = [&](long step, const Ensemble& e, const ConsensusReport&) {
        if (step == params.steps) r.final_ensemble = e;
      };
      r.metrics = metrics_csv(run(rc, opts));
      rerun = std::move(r);
    }
    return *rerun;
  };

  const std::vector<double> fourth = table.column("fourth_moment");
  const double initial_mu4 = fourth.front();

  std::vector<CheckRecord> out;
  for (const std::string& name : checks) {
    if (name == "quantile-suite") {
      const auto res = quantile_invariant_suite(options.quantile_instances, config.seed);
      std::string note = std::to_string(res.instances) + " instances, max residual " + fmt(res.max_residual) +
                         ", max |mean(eta)-beta| " + fmt(res.max_eta_error);
      for (const auto& f : res.failures) note += "; " + f;
      out.push_back(record(name, "soft quantile residual, localization, mean(eta) = beta, inverse stability",
                           res.violations, 0.0, res.violations == 0, note));
    } else if (name == "consensus-moment") {
      const auto g_lo = table.column("g_min");
      const auto g_hi = table.column("g_max");
      std::vector<std::vector<double>> cs;
      for (int j = 0; j < d; ++j) cs.push_back(table.column("c_" + std::to_string(j + 1)));
      long violations = 0;
      double worst = -std::numeric_limits<double>::infinity();
      double worst_lhs = kNaN, worst_rhs = kNaN;
      std::string first_bad;
      for (std::size_t k = 0; k < table.rows.size(); ++k) {
        Vec m(d);
        for (int j = 0; j < d; ++j) m[j] = cs[static_cast<std::size_t>(j)][k];
        const MomentWitness w = moment_witness(m, fourth[k], params.alpha, params.beta, g_lo[k], g_hi[k]);
        const double excess = w.log_lhs - w.log_rhs;
        if (excess > worst) {
          worst = excess;
          worst_lhs = w.lhs;
          worst_rhs = w.rhs;
        }
        if (!w.holds()) {
          if (violations == 0) first_bad = "first violation at row " + std::to_string(k);
          ++violations;
        }
      }
      out.push_back(record(name, "||m||^4 <= C_m^4 mean ||theta||^4 at every recorded step", worst_lhs, worst_rhs,
                           violations == 0,
                           std::to_string(violations) + " violating rows; worst log lhs - log rhs " + fmt(worst) +
                               (first_bad.empty() ? "" : "; " + first_bad)));
    } else if (name == "reproducible") {
      const bool same = get_rerun().metrics == metrics_text;
      out.push_back(record(name, "metrics regenerated from the config match byte for byte", same ? 0.0 : 1.0, 0.0,
                           same));
    } else if (name == "mass-bound") {
      if (config.mass_radii.empty() || !rc.objective.theta_star || !rc.objective.bounds) {
        out.push_back(skipped(name, "ball mass >= e^{-pt} initial bump mass",
                              "needs mass_radii, theta_star and objective bounds"));
        continue;
      }
      const double r = config.mass_radii.front();
      const TheoryConstants tc = theory_constants(params, rc.objective, horizon, config.b4d, initial_mu4);
      const double c_mf4 = *std::max_element(fourth.begin(), fourth.end());
      const double b0 = mass_bound_b0(tc.c_m, c_mf4, *rc.objective.theta_star);
      const Ensemble e0 = initialize(rc);
      const MassBoundReport rep = mass_bound_series(e0.positions, table.column("t"), table.column("mass_r1"),
                                                    *rc.objective.theta_star, r, params, b0);
      double worst = std::numeric_limits<double>::infinity();
      std::size_t at = 0;
      for (std::size_t k = 0; k < rep.measured.size(); ++k) {
        if (rep.measured[k] - rep.lower_bound[k] < worst) {
          worst = rep.measured[k] - rep.lower_bound[k];
          at = k;
        }
      }
      out.push_back(record(name, "ball mass >= e^{-pt} initial bump mass at every recorded step",
                           rep.measured[at], rep.lower_bound[at], rep.held,
                           "N = " + std::to_string(rep.n_particles) + ", r = " + fmt(r) + ", c = " + fmt(rep.c) +
                               ", p = " + fmt(rep.p) + ", bump mass " + fmt(rep.initial_bump_mass)));
    } else if (name == "laplace") {
      if (!rc.objective.geometry) {
        log << "warning: laplace check skipped, no geometry constants (set geometry_file)\n";
        out.push_back(skipped(name, "||m - theta*|| <= soft Laplace bound", "no geometry constants"));
        continue;
      }
      if (params.hard()) {
        out.push_back(skipped(name, "||m - theta*|| <= soft Laplace bound", "hard mode has no selector temperature"));
        continue;
      }
      const LaplaceBoundReport rep = laplace_bound_check(get_rerun().final_ensemble, params, rc.objective);
      std::ostringstream note;
      note << "level " << rep.level_hypothesis << " gap " << rep.gap_hypothesis << " local mass "
           << rep.local_mass_hypothesis << "; sup by " << rep.sup_method;
      if (!rep.evaluated)
        out.push_back(CheckRecord{name, "||m - theta*|| <= soft Laplace bound", rep.actual, rep.bound,
                                  Verdict::kSkipped, "hypotheses fail: " + note.str()});
      else
        out.push_back(record(name, "||m - theta*|| <= soft Laplace bound on the final ensemble", rep.actual,
                             rep.bound, rep.holds(), note.str()));
    } else if (name == "decay") {
      RunMetrics rm;
      rm.dim = d;
      const auto steps = table.column("step");
      const auto ts = table.column("t");
      const auto v = table.column("v_hat");
      for (std::size_t k = 0; k < steps.size(); ++k) {
        MetricsRow row;
        row.step = static_cast<long>(steps[k]);
        row.t = ts[k];
        row.v_hat = v[k];
        rm.rows.push_back(row);
      }
      const long last = options.decay_last_step.value_or(params.steps);
      try {
        const DecayFit fit = decay_rate_fit(rm, 0, last, params, config.vartheta);
        if (!fit.informative)
          out.push_back(CheckRecord{name, "fitted decay rate of v_hat >= (1-vartheta)(2 lambda - d sigma^2)",
                                    fit.fitted_rate, fit.target_rate, Verdict::kSkipped,
                                    "non-informative: 2 lambda <= d sigma^2"});
        else
          out.push_back(record(name, "fitted decay rate of v_hat >= (1-vartheta)(2 lambda - d sigma^2)",
                               fit.fitted_rate, fit.target_rate, fit.fitted_rate >= fit.target_rate,
                               std::to_string(fit.points) + " rows up to step " + std::to_string(last)));
      } catch (const DomainError& e) {
        out.push_back(record(name, "fitted decay rate of v_hat", kNaN, kNaN, false, e.what()));
      }
    } else if (name == "moment-bound") {
      if (!rc.objective.bounds) {
        out.push_back(skipped(name, "max_t X_t <= C_bd(T)", "needs objective bounds"));
        continue;
      }
      const TheoryConstants tc = theory_constants(params, rc.objective, horizon, config.b4d, initial_mu4);
      const double mx = *std::max_element(fourth.begin(), fourth.end());
      const bool ok = std::log(mx) <= tc.c_bd.log;
      out.push_back(record(name, "max_t X_t <= C_bd(T), compared in log space", std::log(mx), tc.c_bd.log, ok,
                           "values are logarithms"));
    } else if (name == "cutoff") {
      const double mx = *std::max_element(fourth.begin(), fourth.end());
      const double m = options.cutoff_m.value_or(10.0 * mx);
      Magnitude c_bd = Magnitude::from_log(std::numeric_limits<double>::infinity());
      if (rc.objective.bounds)
        c_bd = theory_constants(params, rc.objective, horizon, config.b4d, initial_mu4).c_bd;
      const CutoffReport rep = cutoff_monitor(fourth, m > 0.0 ? m : 1.0, c_bd);
      out.push_back(record(name, "max_t X_t <= M", rep.max_value, m, rep.omega_m_held,
                           "log Markov bound " + fmt(rep.markov_bound.log)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

SeriesStats summarize(const std::vector<double>& xs) {
  SeriesStats s;
  if (xs.empty()) return SeriesStats{kNaN, kNaN, kNaN, kNaN};
  CompensatedSum sum;
  for (double x : xs) sum.add(x);
  s.mean = sum.value() / static_cast<double>(xs.size());
  CompensatedSum sq;
  for (double x : xs) sq.add((x - s.mean) * (x - s.mean));
  s.std = xs.size() > 1 ? std::sqrt(sq.value() / static_cast<double>(xs.size() - 1)) : 0.0;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

std::vector<TracePoint> run_gradient_baseline(const std::string& method, const Config& config,
                                              const BaselineSettings& settings) {
  if (method != "sbgd1" && method != "vpbgd1") throw ConfigError("unknown gradient method '" + method + "'");
  const BenchmarkInstance b = make_benchmark(config.benchmark);
  if (!b.gradients.lower_grad || !b.gradients.upper_grad)
    throw ConfigError("benchmark '" + config.benchmark + "' has no analytic gradients");
  Config one = config;
  one.n_particles = 1;
  RunConfig rc = to_run_config(one);
  if (rc.init.kind == InitSpec::Kind::kExplicit) rc.init.points = rc.init.points.topRows(1).eval();
  Vec x = initialize(rc).particle(0);

  std::vector<TracePoint> trace;
  auto push = [&](long k) {
    trace.push_back(TracePoint{k, b.objective.eval_upper(x), b.objective.eval_lower(x), b.objective.distance(x)});
  };
  for (long k = 0;; ++k) {
    if (k % config.record_every == 0 || k == config.steps) push(k);
    if (k == config.steps) break;
    x = method == "sbgd1" ? sbgd_step(x, settings.alpha, settings.gamma, b.gradients)
                          : vpbgd_step(x, settings.alpha, settings.gamma, settings.t_inner, b.gradients);
    if (!x.allFinite()) throw DivergenceError(method + " diverged at step " + std::to_string(k), 0, k);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  int workers = 1;
  std::string format = "csv";
};

Config load_common(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (c.config_path.empty()) {
    // No file: benchmark defaults plus overrides.
    return parse_config("schema_version = 1\n", overrides);
  }
  return load_config(c.config_path, overrides);
}

std::string stats_header(const std::vector<std::string>& metrics) {
  std::string h;
  for (const auto& m : metrics) h += "," + m + "_mean," + m + "_std," + m + "_min," + m + "_max";
  return h;
}

std::string stats_cells(const std::vector<std::vector<double>>& values) {
  std::string s;
  for (const auto& v : values) {
    const SeriesStats st = summarize(v);
    s += "," + fmt(st.mean) + "," + fmt(st.std) + "," + fmt(st.min) + "," + fmt(st.max);
  }
  return s;
}

int cmd_run(const Common& c, std::ostream& out, std::ostream& err) {
  if (c.out_dir.empty()) throw ConfigError("run needs --out");
  const Config cfg = load_common(c);
  const RunConfig rc = to_run_config(cfg);
  RunOptions opts;
  opts.workers = c.workers;
  info(err, "run: " + cfg.benchmark + " seed " + std::to_string(cfg.seed));
  const RunMetrics m = run(rc, opts);
  write_archive(c.out_dir, cfg, m);
  if (c.format == "json") {
    out << summary_json(cfg, m);
  } else {
    const MetricsRow& r = m.rows.back();
    out << "step,G_consensus,L_consensus,dist_theta_star,spread\n"
        << r.step << ',' << fmt(r.g_consensus) << ',' << fmt(r.l_consensus) << ',' << fmt(r.dist) << ','
        << fmt(r.spread) << '\n';
  }
  return kExitOk;
}

struct SweepArgs {
  std::string param;
  std::string values;
  std::string seeds;
  int replicates = 0;
};

int cmd_sweep(const Common& c, const SweepArgs& s, std::ostream& out, std::ostream& err) {
  if (c.out_dir.empty()) throw ConfigError("sweep needs --out");
  const Config base = load_common(c);
  std::vector<std::string> values;
  if (!s.param.empty()) {
    values = split(s.values, ',');
    if (s.param == "seed") throw ConfigError("sweep seeds with --seeds or --replicates, not --param seed");
  } else {
    if (!s.values.empty()) throw ConfigError("--values needs --param");
    values = {""};
  }
  std::vector<std::uint64_t> seeds;
  if (!s.seeds.empty() && s.replicates > 0) throw ConfigError("give --seeds or --replicates, not both");
  if (!s.seeds.empty())
    seeds = parse_seeds(s.seeds);
  else if (s.replicates > 0)
    for (int k = 0; k < s.replicates; ++k) seeds.push_back(mix_seed(base.seed, static_cast<std::uint64_t>(k)));
  else
    seeds = {base.seed};
  if (values.empty() || seeds.empty()) throw ConfigError("empty sweep grid");

  struct Cell {
    std::string value;
    std::uint64_t seed;
    Config config;
    std::filesystem::path dir;
    bool ok = false;
    std::string error;
    MetricsRow final;
  };
  std::vector<Cell> cells;
  for (const auto& v : values) {
    for (std::uint64_t seed : seeds) {
      Common cc = c;
      if (!s.param.empty()) cc.sets.push_back(s.param + "=" + v);
      cc.seed = seed;
      Cell cell{v, seed, load_common(cc), {}, false, {}, {}};
      to_run_config(cell.config);  // validate every cell before running any
      const std::string group = s.param.empty() ? "all" : s.param + "=" + v;
      cell.dir = std::filesystem::path(c.out_dir) / group / ("seed=" + std::to_string(seed));
      cells.push_back(std::move(cell));
    }
  }
  info(err, "sweep: " + std::to_string(cells.size()) + " cells");

  std::mutex log_mutex;
  parallel_for(cells.size(), c.workers, [&](std::size_t i) {
    Cell& cell = cells[i];
    try {
      const RunMetrics m = run(to_run_config(cell.config));
      write_archive(cell.dir, cell.config, m);
      cell.final = m.rows.back();
      cell.ok = true;
    } catch (const Error& e) {
      cell.error = e.what();
      std::filesystem::create_directories(cell.dir);
      write_text(cell.dir / "error.txt", cell.error + "\n");
      std::lock_guard lock(log_mutex);
      info(err, "cell " + cell.dir.string() + " failed: " + cell.error);
    }
  });

  const std::vector<std::string> metric_names = {"G_consensus", "L_consensus", "dist_theta_star", "spread"};
  std::ostringstream agg;
  agg << "param,value,n_ok,n_failed" << stats_header(metric_names) << '\n';
  bool all_ok = true;
  for (const auto& v : values) {
    std::vector<std::vector<double>> cols(4);
    long ok = 0, failed = 0;
    for (const Cell& cell : cells) {
      if (cell.value != v) continue;
      if (!cell.ok) {
        ++failed;
        continue;
      }
      ++ok;
      cols[0].push_back(cell.final.g_consensus);
      cols[1].push_back(cell.final.l_consensus);
      cols[2].push_back(cell.final.dist);
      cols[3].push_back(cell.final.spread);
    }
    all_ok = all_ok && failed == 0;
    agg << (s.param.empty() ? "seed" : s.param) << ',' << (v.empty() ? "-" : v) << ',' << ok << ',' << failed
        << stats_cells(cols) << '\n';
  }
  write_text(std::filesystem::path(c.out_dir) / "aggregate.csv", agg.str());
  std::ostringstream failures;
  for (const Cell& cell : cells)
    if (!cell.ok) failures << cell.dir.string() << ": " << cell.error << '\n';
  if (!all_ok) write_text(std::filesystem::path(c.out_dir) / "failures.txt", failures.str());
  out << agg.str();
  return all_ok ? kExitOk : kExitDivergence;
}

struct CheckArgs {
  std::string archive;
  std::optional<std::string> checks;
  std::optional<double> cutoff_m;
  std::optional<long> decay_last;
  int instances = 1000;
};

int cmd_check(const Common& c, const CheckArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> checks = kAllChecks;
  if (a.checks) {
    checks = split(*a.checks, ',');
    if (checks.empty()) throw ConfigError("empty check list");
  }
  Config cfg;
  std::string metrics;
  if (!a.archive.empty()) {
    const std::filesystem::path dir(a.archive);
    cfg = load_config(dir / "config.txt", c.sets);
    metrics = read_text(dir / "metrics.csv");
  } else if (!c.config_path.empty()) {
    cfg = load_common(c);
    RunOptions opts;
    opts.workers = c.workers;
    metrics = metrics_csv(run(to_run_config(cfg), opts));
  } else {
    throw ConfigError("check needs --archive or --config");
  }
  CheckOptions opts;
  opts.workers = c.workers;
  opts.cutoff_m = a.cutoff_m;
  opts.decay_last_step = a.decay_last;
  opts.quantile_instances = a.instances;
  const auto records = run_checks(cfg, metrics, checks, opts, err);
  const std::string report = format_report(records);
  if (!c.out_dir.empty()) {
    std::filesystem::create_directories(c.out_dir);
    write_text(std::filesystem::path(c.out_dir) / "check_report.jsonl", report);
  }
  out << report;
  std::vector<std::string> failed;
  for (const auto& r : records)
    if (r.verdict == Verdict::kFail) failed.push_back(r.name);
  if (failed.empty()) return kExitOk;
  std::string names;
  for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
  err << "check failed: " << names << '\n';
  return kExitCheckFailed;
}

struct CompareArgs {
  std::string benchmark;
  std::string methods = "scb2o,cb2o,sbgd1,vpbgd1";
  std::string seeds;
  BaselineSettings baseline;
};

int cmd_compare(const Common& c, const CompareArgs& a, std::ostream& out, std::ostream& err) {
  if (c.out_dir.empty()) throw ConfigError("compare needs --out");
  Common cc = c;
  if (!a.benchmark.empty()) cc.sets.insert(cc.sets.begin(), "benchmark=" + a.benchmark);
  const Config base = load_common(cc);
  const auto methods = split(a.methods, ',');
  if (methods.empty()) throw ConfigError("no methods given");
  for (const auto& m : methods)
    if (m != "scb2o" && m != "cb2o" && m != "sbgd1" && m != "vpbgd1") throw ConfigError("unknown method '" + m + "'");
  std::vector<std::uint64_t> seeds =
      a.seeds.empty() ? make_benchmark(base.benchmark).default_seeds : parse_seeds(a.seeds);
  if (seeds.empty()) throw ConfigError("no seeds given");

  std::ostringstream table, series;
  table << "method,n_seeds" << stats_header({"G_consensus", "L_consensus", "dist_theta_star", "spread"}) << '\n';
  series << "method,seed,step,G,L,dist\n";
  for (const auto& method : methods) {
    std::vector<std::vector<double>> cols(4);
    for (std::uint64_t seed : seeds) {
      Config cfg = base;
      cfg.seed = seed;
      info(err, "compare: " + method + " seed " + std::to_string(seed));
      if (method == "scb2o" || method == "cb2o") {
        cfg.mode = method == "cb2o" ? SelectionMode::kHard : SelectionMode::kSoft;
        RunOptions opts;
        opts.workers = c.workers;
        const RunMetrics m = run(to_run_config(cfg), opts);
        const MetricsRow& r = m.rows.back();
        cols[0].push_back(r.g_consensus);
        cols[1].push_back(r.l_consensus);
        cols[2].push_back(r.dist);
        cols[3].push_back(r.spread);
        for (const MetricsRow& row : m.rows)
          series << method << ',' << seed << ',' << row.step << ',' << fmt(row.g_consensus) << ','
                 << fmt(row.l_consensus) << ',' << fmt(row.dist) << '\n';
      } else {
        const auto trace = run_gradient_baseline(method, cfg, a.baseline);
        const TracePoint& r = trace.back();
        cols[0].push_back(r.g);
        cols[1].push_back(r.l);
        cols[2].push_back(r.dist);
        cols[3].push_back(0.0);  // a single state has no spread
        for (const TracePoint& p : trace)
          series << method << ',' << seed << ',' << p.step << ',' << fmt(p.g) << ',' << fmt(p.l) << ','
                 << fmt(p.dist) << '\n';
      }
    }
    table << method << ',' << seeds.size() << stats_cells(cols) << '\n';
  }
  std::filesystem::create_directories(c.out_dir);
  write_text(std::filesystem::path(c.out_dir) / "compare.csv", table.str());
  write_text(std::filesystem::path(c.out_dir) / "series.csv", series.str());
  out << table.str();
  return kExitOk;
}

int cmd_constants(const Common& c, double horizon_arg, std::ostream& out) {
  const Config cfg = load_common(c);
  const RunConfig rc = to_run_config(cfg);
  const AlgorithmParams p = rc.effective_params();
  const double horizon = horizon_arg > 0.0 ? horizon_arg : static_cast<double>(p.steps) * p.dt;
  const double mu4 = fourth_moment(initialize(rc).positions);
  const TheoryConstants t = theory_constants(p, rc.objective, horizon, cfg.b4d, mu4);
  const std::vector<std::pair<std::string, Magnitude>> mags = {
      {"c_m", t.c_m}, {"b_g", t.b_g}, {"a_r4", t.a_r4}, {"k_bd", t.k_bd}, {"c_bd", t.c_bd}};
  const std::vector<std::pair<std::string, double>> plain = {
      {"kappa", t.kappa},   {"log_kappa", t.log_kappa}, {"b4d", t.b4d},       {"mu4", t.mu4},
      {"horizon", t.horizon}, {"a_lyap", t.a_lyap},     {"b_lyap", t.b_lyap}, {"c_d", t.c_d}};
  if (c.format == "json") {
    nlohmann::json j;
    for (const auto& [k, m] : mags)
      j[k] = {{"value", jnum(m.value())}, {"log", jnum(m.log)}, {"overflow", m.overflows()}};
    for (const auto& [k, v] : plain) j[k] = jnum(v);
    out << j.dump(2) << '\n';
  } else {
    out << "name,value,log,overflow\n";
    for (const auto& [k, m] : mags)
      out << k << ',' << fmt(m.value()) << ',' << fmt(m.log) << ',' << (m.overflows() ? "true" : "false") << '\n';
    for (const auto& [k, v] : plain) out << k << ',' << fmt(v) << ",,\n";
  }
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft-quantile consensus-based bi-level optimizer"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Config file (key = value)");
    sub->add_option("--out", common.out_dir, "Output directory");
    sub->add_option("--seed", common.seed, "Seed override");
    sub->add_option("--set", common.sets, "Override key=value (repeatable)");
    sub->add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto* run_cmd = app.add_subcommand("run", "Run one configuration and write an archive");
  add_common(run_cmd);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter x seed grid");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--param", sweep.param, "Config key to sweep (e.g. xi, beta, n_particles)");
  sweep_cmd->add_option("--values", sweep.values, "Comma separated values");
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma separated seeds");
  sweep_cmd->add_option("--replicates", sweep.replicates, "Derive this many seeds from the config seed");

  CheckArgs check;
  auto* check_cmd = app.add_subcommand("check", "Evaluate invariants on an archive or a fresh run");
  add_common(check_cmd);
  check_cmd->add_option("--archive", check.archive, "Archive directory from run");
  check_cmd->add_option("--checks", check.checks, "Comma separated check names");
  check_cmd->add_option("--cutoff-m", check.cutoff_m, "Cutoff level M");
  check_cmd->add_option("--decay-last-step", check.decay_last, "Last step of the decay fit window");
  check_cmd->add_option("--instances", check.instances, "Random instances for quantile-suite");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Compare consensus and gradient methods");
  add_common(compare_cmd);
  compare_cmd->add_option("--benchmark", compare.benchmark, "Benchmark name");
  compare_cmd->add_option("--methods", compare.methods, "Subset of scb2o,cb2o,sbgd1,vpbgd1");
  compare_cmd->add_option("--seeds", compare.seeds, "Comma separated seeds");
  compare_cmd->add_option("--gd-alpha", compare.baseline.alpha, "Upper-level step of the gradient baselines");
  compare_cmd->add_option("--gd-gamma", compare.baseline.gamma, "Lower-level step multiplier");
  compare_cmd->add_option("--t-inner", compare.baseline.t_inner, "VPBGD inner steps");

  double horizon = 0.0;
  auto* constants_cmd = app.add_subcommand("constants", "Print the theory constants for a config");
  add_common(constants_cmd);
  constants_cmd->add_option("--horizon", horizon, "Horizon T (default steps * dt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(common, out, err);
    if (*sweep_cmd) return cmd_sweep(common, sweep, out, err);
    if (*check_cmd) return cmd_check(common, check, out, err);
    if (*compare_cmd) return cmd_compare(common, compare, out, err);
    if (*constants_cmd) return cmd_constants(common, horizon, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  debug(err, "no subcommand");
  return kExitConfig;
}

}  // namespace scbo

#include "scbo/dynamics.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "scbo/bench.hpp"
#include "scbo/parallel.hpp"

namespace scbo {

AlgorithmParams RunConfig::effective_params() const {
  AlgorithmParams p = params;
  if (mode == SelectionMode::kHard) p.tau = 0.0;
  return p;
}

void RunConfig::validate() const {
  const AlgorithmParams p = effective_params();
  p.validate();
  if (mode == SelectionMode::kSoft && !(p.tau > 0.0)) throw ConfigError("soft mode requires tau > 0 (set xi)");
  if (!allow_overshoot && p.lambda * p.dt > 1.0)
    throw ConfigError("lambda*dt > 1 overshoots the consensus point; set allow_overshoot to permit");
  if (record_every <= 0) throw ConfigError("record_every must be positive");
  if (!objective.lower || !objective.upper) throw ConfigError("objective is missing L or G");
  if (objective.dim <= 0) throw ConfigError("objective dimension must be positive");
  for (double r : mass_radii)
    if (!(r > 0.0)) throw ConfigError("mass radii must be positive");
  if (init.kind == InitSpec::Kind::kExplicit) {
    if (init.points.rows() != p.n_particles || init.points.cols() != objective.dim)
      throw ConfigError("explicit init must be n_particles x dim");
  } else if (init.kind == InitSpec::Kind::kGaussian) {
    if (!(init.scale >= 0.0)) throw ConfigError("init_scale must be nonnegative");
  } else if (!(init.lo < init.hi)) {
    throw ConfigError("uniform init requires lo < hi");
  }
}

Ensemble initialize(const RunConfig& config) {
  const auto n = static_cast<Eigen::Index>(config.params.n_particles);
  const int d = config.objective.dim;
  if (config.init.kind == InitSpec::Kind::kExplicit) return Ensemble(config.init.points);
  const NoiseSource noise(config.seed);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const auto ui = static_cast<std::uint64_t>(i);
      const auto uj = static_cast<std::uint32_t>(j);
      if (config.init.kind == InitSpec::Kind::kGaussian)
        x(i, j) = config.init.loc + config.init.scale * noise.normal(NoiseSource::kInitStream, ui, uj);
      else
        x(i, j) = config.init.lo +
                  (config.init.hi - config.init.lo) * noise.uniform(NoiseSource::kInitStream, ui, uj);
    }
  }
  return Ensemble(std::move(x));
}

Ensemble em_step(const Ensemble& e, const Vec& m, const AlgorithmParams& params, const NoiseSource& noise,
                 std::uint64_t step, int workers) {
  if (!m.allFinite()) throw DivergenceError("em_step: non-finite consensus point", 0, static_cast<long>(step));
  if (!(params.dt > 0.0)) throw DomainError("em_step: dt must be positive");
  const int d = e.dim();
  if (m.size() != d) throw DomainError("em_step: consensus dimension mismatch");
  Ensemble out(Matrix(e.positions.rows(), d));
  out.step_index = e.step_index + 1;
  const double drift = params.lambda * params.dt;
  const double diffusion = params.sigma * std::sqrt(params.dt);
  std::vector<std::uint8_t> bad(e.size(), 0);
  parallel_for(e.size(), workers, [&](std::size_t i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Vec z = e.positions.row(k).transpose() - m;
    const double zn = z.norm();
    Vec next = e.positions.row(k).transpose() - drift * z;
    if (diffusion != 0.0 && zn != 0.0) {
      Vec b(d);
      noise.fill_normal(step, i, {b.data(), static_cast<std::size_t>(d)});
      next += (diffusion * zn) * b;
    }
    out.positions.row(k) = next.transpose();
    bad[i] = next.allFinite() ? 0 : 1;
  });
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (bad[i]) {
      std::ostringstream os;
      os << "em_step: particle " << i << " diverged at step " << step;
      throw DivergenceError(os.str(), i, static_cast<long>(step));
    }
  }
  return out;
}

MetricsRow measure(long step, double t, const Ensemble& e, const ConsensusReport& report,
                   const ObjectiveSpec& objective, const std::vector<double>& mass_radii) {
  MetricsRow row;
  row.step = step;
  row.t = t;
  row.consensus = report.m;
  row.l_consensus = objective.eval_lower(report.m);
  row.g_consensus = objective.eval_upper(report.m);
  row.dist = objective.distance(report.m);
  row.spread = e.size() >= 2 ? particle_spread(e.positions) : 0.0;
  row.fourth_moment = report.fourth_moment;
  row.g_min = e.g_values.minCoeff();
  row.g_max = e.g_values.maxCoeff();
  row.log_b = report.log_b;
  row.q = report.q;

  const std::size_t n = e.size();
  std::vector<double> dist(n);
  CompensatedSum sq;
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = objective.distance(e.particle(i));
    sq.add(dist[i] * dist[i]);
  }
  row.v_hat = 0.5 * sq.value() / static_cast<double>(n);
  for (double r : mass_radii) {
    std::size_t inside = 0;
    for (double di : dist) inside += di < r ? 1 : 0;
    row.mass_in_ball.push_back(static_cast<double>(inside) / static_cast<double>(n));
  }
  return row;
}

RunMetrics run(const RunConfig& config, const RunOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const AlgorithmParams params = config.effective_params();
  const std::optional<ObjectiveBounds> no_declared;
  const NoiseSource noise(config.seed);

  RunMetrics metrics;
  metrics.dim = config.objective.dim;
  metrics.mass_radii = config.mass_radii;

  Ensemble ensemble = initialize(config);
  for (long k = 0;; ++k) {
    ensemble.refresh(config.objective, options.workers);
    for (Eigen::Index i = 0; i < ensemble.l_values.size(); ++i) {
      if (!std::isfinite(ensemble.l_values[i]) || !std::isfinite(ensemble.g_values[i])) {
        std::ostringstream os;
        os << "objective returned a non-finite value for particle " << i << " at step " << k;
        throw DivergenceError(os.str(), static_cast<std::size_t>(i), k);
      }
    }
    ConsensusReport report;
    try {
      report = compute_consensus(ensemble, params, no_declared);
    } catch (const SolverError& err) {
      std::ostringstream os;
      os << "step " << k << ": " << err.what();
      throw SolverError(os.str(), err.residual());
    }
    if (options.observer) options.observer(k, ensemble, report);
    const bool last = k == params.steps;
    if (last || k % config.record_every == 0)
      metrics.rows.push_back(
          measure(k, static_cast<double>(k) * params.dt, ensemble, report, config.objective, config.mass_radii));
    if (last) {
      metrics.final_consensus = report.m;
      break;
    }
    ensemble = em_step(ensemble, report.m, params, noise, static_cast<std::uint64_t>(k), options.workers);
  }
  metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

std::vector<VarianceRow> variance_scaling_study(const RunConfig& base, const std::vector<long>& n_values,
                                                const std::vector<std::uint64_t>& seeds,
                                                const RunOptions& options) {
  if (seeds.size() < 2) throw ConfigError("variance_scaling_study: variance needs at least two seeds");
  if (seeds.size() < 8) throw ConfigError("variance_scaling_study: at least eight seeds are required");
  if (n_values.size() < 3) throw ConfigError("variance_scaling_study: at least three particle counts are required");
  const double ratio = static_cast<double>(n_values[1]) / static_cast<double>(n_values[0]);
  for (std::size_t j = 1; j < n_values.size(); ++j) {
    const double r = static_cast<double>(n_values[j]) / static_cast<double>(n_values[j - 1]);
    if (!(ratio > 1.0) || std::abs(r - ratio) > 1e-9 * ratio)
      throw ConfigError("variance_scaling_study: particle counts must be an increasing geometric progression");
  }

  std::vector<VarianceRow> out;
  for (long n : n_values) {
    std::vector<Vec> finals;
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.params.n_particles = n;
      cfg.seed = seed;
      cfg.record_every = cfg.params.steps;
      finals.push_back(run(cfg, options).final_consensus);
    }
    VarianceRow row;
    row.n_particles = n;
    // Shifted by the first final so identical runs give exactly zero.
    const Vec& ref = finals.front();
    Vec shift = Vec::Zero(ref.size());
    for (const Vec& f : finals) shift += f - ref;
    shift /= static_cast<double>(finals.size());
    row.mean = ref + shift;
    double acc = 0.0;
    for (const Vec& f : finals) acc += (f - ref - shift).squaredNorm();
    row.variance = acc / static_cast<double>(finals.size() - 1);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace scbo

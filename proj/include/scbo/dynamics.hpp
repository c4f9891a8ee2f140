// Euler-Maruyama particle dynamics and the optimization loop.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scbo/consensus.hpp"
#include "scbo/core.hpp"
#include "scbo/noise.hpp"

namespace scbo {

enum class SelectionMode { kSoft, kHard };

struct RunConfig {
  AlgorithmParams params;
  ObjectiveSpec objective;
  SelectionMode mode = SelectionMode::kSoft;
  std::uint64_t seed = 0;
  InitSpec init;
  long record_every = 1;
  std::vector<double> mass_radii;
  /// Permits lambda dt > 1.
  bool allow_overshoot = false;

  /// params with tau forced to 0 in hard mode.
  AlgorithmParams effective_params() const;
  void validate() const;
};

struct MetricsRow {
  long step = 0;
  double t = 0.0;
  double l_consensus = 0.0;
  double g_consensus = 0.0;
  double dist = 0.0;
  double spread = 0.0;
  double v_hat = 0.0;
  double fourth_moment = 0.0;
  std::vector<double> mass_in_ball;
  Vec consensus;
  double g_min = 0.0;
  double g_max = 0.0;
  double log_b = 0.0;
  double q = 0.0;
};

struct RunMetrics {
  int dim = 0;
  std::vector<double> mass_radii;
  std::vector<MetricsRow> rows;
  Vec final_consensus;
  double wall_time = 0.0;  // seconds; excluded from determinism comparisons
};

/// Called once per step (and once for the final ensemble) with the fresh
/// ensemble and its consensus report.
using StepObserver = std::function<void(long step, const Ensemble&, const ConsensusReport&)>;

struct RunOptions {
  int workers = 1;
  StepObserver observer;
};

/// Draws the initial ensemble from config.init using the reserved init stream.
Ensemble initialize(const RunConfig& config);

/// theta_i <- theta_i - lambda dt (theta_i - m) + sigma sqrt(dt) ||theta_i - m|| B_i.
/// The returned ensemble has stale caches and step_index + 1.
Ensemble em_step(const Ensemble& ensemble, const Vec& m, const AlgorithmParams& params,
                 const NoiseSource& noise, std::uint64_t step, int workers = 1);

/// Metrics for one fresh ensemble and its consensus report.
MetricsRow measure(long step, double t, const Ensemble& ensemble, const ConsensusReport& report,
                   const ObjectiveSpec& objective, const std::vector<double>& mass_radii);

RunMetrics run(const RunConfig& config, const RunOptions& options = {});

struct VarianceRow {
  long n_particles = 0;
  /// Trace of the across-seed sample covariance of the final consensus point.
  double variance = 0.0;
  Vec mean;
};

/// Final-consensus variance across seeds for each particle count. Requires
/// at least three N values in geometric progression and at least eight seeds.
std::vector<VarianceRow> variance_scaling_study(const RunConfig& base, const std::vector<long>& n_values,
                                                const std::vector<std::uint64_t>& seeds,
                                                const RunOptions& options = {});

}  // namespace scbo

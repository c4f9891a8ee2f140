// Benchmark objectives, gradient baselines and experiment metrics.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scbo/core.hpp"

namespace scbo {

// ---------------------------------------------------------------------------
// Objectives

struct AckleyParams {
  double a_big = 20.0;
  double a = 0.2;
  double b = 3.0;
  double shift_x = 0.5;
  double shift_y = 1.0 / 3.0;
};

/// Shifted Ackley function used as the upper objective of the 2D problems.
double ackley_shifted(const Vec& x, const AckleyParams& p = {});

/// (x1^2 + x2^2 - 1)^2.
double circle_lower(const Vec& x);
/// (r - (1 + 0.5 sin(5 phi))^2)^2 with r = x1^2 + x2^2 and phi the polar
/// angle; phi(0,0) = 0.
double star_lower(const Vec& x);

/// sin^2 x + sin^2 y + 0.5 (sin^2 3x + sin^2 3y); zero exactly on pi Z^2.
double rippled_lower(const Vec& x);
Vec rippled_lower_grad(const Vec& x);
/// Euclidean distance to the lattice pi Z^2.
double distance_to_pi_lattice(const Vec& x);

/// cos(4y+2)/(1+e^{2-4x}) + 0.5 ln((4x-2)^2 + 1).
double upper_f(const Vec& x);
Vec upper_f_grad(const Vec& x);

// ---------------------------------------------------------------------------
// Metrics

/// (1/d) sum_j std_i(x_ij) with the population convention; needs N >= 2.
double particle_spread(const Matrix& positions);

// ---------------------------------------------------------------------------
// Gradient baselines

/// Projection onto an axis-aligned box; identity when no box is set.
struct Projection {
  std::optional<Vec> lo;
  std::optional<Vec> hi;
  Vec apply(const Vec& x) const;
};

struct GradientProblem {
  VectorField lower_grad;
  VectorField upper_grad;
  Projection projection;
  /// Coordinates treated as the lower-level variable by VPBGD.
  std::vector<int> lower_coords;
};

/// x_half = P(x - gamma alpha grad L(x)); returns P(x_half - alpha grad G(x_half)).
Vec sbgd_step(const Vec& x, double alpha, double gamma, const GradientProblem& problem);

/// Runs t_inner descent steps (rate gamma alpha) on the lower-level
/// coordinates with the rest frozen, giving x_T; grad V is grad L(x_T) with
/// the lower-level coordinates zeroed. Returns
/// P(x - alpha (grad G(x) + gamma grad L(x) - gamma grad V)).
Vec vpbgd_step(const Vec& x, double alpha, double gamma, int t_inner, const GradientProblem& problem);

// ---------------------------------------------------------------------------
// Benchmark registry

struct BenchmarkInstance {
  std::string name;
  ObjectiveSpec objective;
  /// Tabulated G at the reference optimum, when known.
  std::optional<double> reference_value;
  AlgorithmParams default_params;
  InitSpec default_init;
  std::vector<std::uint64_t> default_seeds;
  GradientProblem gradients;
};

using BenchmarkFactory = std::function<BenchmarkInstance()>;

/// Registers (or replaces) a named benchmark.
void register_benchmark(const std::string& name, BenchmarkFactory factory);
/// Throws ConfigError for unknown names.
BenchmarkInstance make_benchmark(const std::string& name);
std::vector<std::string> benchmark_names();

}  // namespace scbo

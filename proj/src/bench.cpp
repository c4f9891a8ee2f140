#include "scbo/bench.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace scbo {

namespace {

void require_dim2(const Vec& x, const char* name) {
  if (x.size() != 2) throw DomainError(std::string(name) + ": expects a 2D point");
}

double square(double v) { return v * v; }

// 1/(1+e^{-u}) and its derivative without overflow.
double logistic(double u) { return sigmoid().value(u); }
double logistic_slope(double u) { return sigmoid().derivative(u); }

}  // namespace

double ackley_shifted(const Vec& x, const AckleyParams& p) {
  require_dim2(x, "ackley_shifted");
  const double d = 2.0;
  const double dx = x[0] - p.shift_x;
  const double dy = x[1] - p.shift_y;
  const double radial = std::sqrt(dx * dx + dy * dy);
  const double two_pi_b = 2.0 * std::numbers::pi * p.b;
  const double cosines = (std::cos(two_pi_b * dx) + std::cos(two_pi_b * dy)) / d;
  return -p.a_big * std::exp(-p.a * std::sqrt(p.b * p.b / d) * radial) - std::exp(cosines) + p.a_big +
         std::numbers::e;
}

double circle_lower(const Vec& x) {
  require_dim2(x, "circle_lower");
  return square(x[0] * x[0] + x[1] * x[1] - 1.0);
}

double star_lower(const Vec& x) {
  require_dim2(x, "star_lower");
  const double r = x[0] * x[0] + x[1] * x[1];
  const double phi = r == 0.0 ? 0.0 : std::atan2(x[1], x[0]);
  return square(r - square(1.0 + 0.5 * std::sin(5.0 * phi)));
}

double rippled_lower(const Vec& x) {
  require_dim2(x, "rippled_lower");
  auto s2 = [](double v) { return square(std::sin(v)); };
  return s2(x[0]) + s2(x[1]) + 0.5 * (s2(3.0 * x[0]) + s2(3.0 * x[1]));
}

Vec rippled_lower_grad(const Vec& x) {
  require_dim2(x, "rippled_lower_grad");
  Vec g(2);
  for (int j = 0; j < 2; ++j) g[j] = std::sin(2.0 * x[j]) + 1.5 * std::sin(6.0 * x[j]);
  return g;
}

double distance_to_pi_lattice(const Vec& x) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double r = x[j] - std::numbers::pi * std::round(x[j] / std::numbers::pi);
    acc += r * r;
  }
  return std::sqrt(acc);
}

// With u = 4x - 2: 1/(1+e^{2-4x}) = logistic(u) and e^{2-4x}/(1+e^{2-4x})^2 =
// logistic'(u), which keeps both terms finite for very negative x.
double upper_f(const Vec& x) {
  require_dim2(x, "upper_f");
  const double u = 4.0 * x[0] - 2.0;
  return std::cos(4.0 * x[1] + 2.0) * logistic(u) + 0.5 * std::log1p(u * u);
}

Vec upper_f_grad(const Vec& x) {
  require_dim2(x, "upper_f_grad");
  const double u = 4.0 * x[0] - 2.0;
  const double v = 4.0 * x[1] + 2.0;
  Vec g(2);
  g[0] = 4.0 * logistic_slope(u) * std::cos(v) + 4.0 * u / (u * u + 1.0);
  g[1] = -4.0 * std::sin(v) * logistic(u);
  return g;
}

double particle_spread(const Matrix& positions) {
  const Eigen::Index n = positions.rows();
  if (n < 2) throw DomainError("particle_spread: needs at least two particles");
  const Eigen::Index d = positions.cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = positions.col(j).mean();
    const double var = (positions.col(j).array() - mean).square().sum() / static_cast<double>(n);
    total += std::sqrt(var);
  }
  return total / static_cast<double>(d);
}

Vec Projection::apply(const Vec& x) const {
  Vec y = x;
  if (lo) y = y.cwiseMax(*lo);
  if (hi) y = y.cwiseMin(*hi);
  return y;
}

Vec sbgd_step(const Vec& x, double alpha, double gamma, const GradientProblem& p) {
  const Vec half = p.projection.apply(x - gamma * alpha * p.lower_grad(x));
  return p.projection.apply(half - alpha * p.upper_grad(half));
}

Vec vpbgd_step(const Vec& x, double alpha, double gamma, int t_inner, const GradientProblem& p) {
  if (t_inner < 1) throw ConfigError("vpbgd_step: inner step count must be at least 1");
  const double inner_rate = gamma * alpha;
  Vec inner = x;
  for (int t = 0; t < t_inner; ++t) {
    const Vec g = p.lower_grad(inner);
    for (int j : p.lower_coords) inner[j] -= inner_rate * g[j];
  }
  Vec grad_v = p.lower_grad(inner);
  for (int j : p.lower_coords) grad_v[j] = 0.0;
  const Vec direction = p.upper_grad(x) + gamma * p.lower_grad(x) - gamma * grad_v;
  return p.projection.apply(x - alpha * direction);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kAckleyCap = 22.36;  // sup of the shifted Ackley is A + e - 1/e

AlgorithmParams constrained_2d_params() {
  AlgorithmParams p;
  p.alpha = 30.0;
  p.beta = 0.05;
  p.lambda = 1.0;
  p.sigma = 1.0;
  p.dt = 0.1;
  p.steps = 600;
  p.n_particles = 100;
  p.set_xi(1e4);
  return p;
}

BenchmarkInstance constrained_2d(const std::string& name, ScalarField lower, Vec theta_star, double g_star) {
  BenchmarkInstance b;
  b.name = name;
  b.objective.name = name;
  b.objective.dim = 2;
  b.objective.lower = std::move(lower);
  b.objective.upper = [](const Vec& x) { return ackley_shifted(x); };
  b.objective.theta_star = std::move(theta_star);
  b.objective.bounds = ObjectiveBounds{0.0, 1e12, 0.0, kAckleyCap};
  b.reference_value = g_star;
  b.default_params = constrained_2d_params();
  b.default_init = InitSpec::gaussian(0.0, 50.0);
  b.default_seeds = {0, 1, 2, 3, 4};
  return b;
}

BenchmarkInstance circle_benchmark() {
  // Constrained minimizer to full precision; the tabulated (0.782, 0.624) is its rounding and
  // sits about 6e-3 above the minimum because G is steep along the circle there.
  return constrained_2d("circle", circle_lower, Vec{{0.7817183882501361, 0.6236315911430478}}, 4.003);
}

BenchmarkInstance star_benchmark() {
  return constrained_2d("star", star_lower, Vec{{0.47291797625309623, 0.46442196395218843}}, 2.777);
}

BenchmarkInstance rippled_benchmark() {
  BenchmarkInstance b;
  b.name = "rippled";
  b.objective.name = "rippled";
  b.objective.dim = 2;
  b.objective.lower = rippled_lower;
  b.objective.upper = upper_f;
  b.objective.target_distance = distance_to_pi_lattice;
  b.objective.lower_grad = rippled_lower_grad;
  b.objective.upper_grad = upper_f_grad;
  b.default_params = constrained_2d_params();
  b.default_params.steps = 300;
  b.default_init = InitSpec::gaussian(0.0, 50.0);
  b.default_seeds = {0, 1, 2};
  b.gradients.lower_grad = rippled_lower_grad;
  b.gradients.upper_grad = upper_f_grad;
  b.gradients.lower_coords = {1};
  return b;
}

// Quadratic lower level {x2 = 0} and a clipped bowl upper level centred on it.
BenchmarkInstance bowl_benchmark() {
  BenchmarkInstance b;
  b.name = "bowl";
  b.objective.name = "bowl";
  b.objective.dim = 2;
  b.objective.lower = [](const Vec& x) { return x[1] * x[1]; };
  b.objective.upper = [](const Vec& x) { return square(x[0] - 1.0) + square(x[1]); };
  b.objective.lower_grad = [](const Vec& x) { return Vec{{0.0, 2.0 * x[1]}}; };
  b.objective.upper_grad = [](const Vec& x) { return Vec{{2.0 * (x[0] - 1.0), 2.0 * x[1]}}; };
  b.objective.theta_star = Vec{{1.0, 0.0}};
  b.objective.bounds = ObjectiveBounds{0.0, 25.0, 0.0, 100.0};
  b.default_params = constrained_2d_params();
  b.default_params.sigma = 0.5;
  b.default_params.dt = 0.01;
  b.default_params.steps = 500;
  b.default_params.n_particles = 500;
  b.default_init = InitSpec::gaussian(0.0, 2.0);
  b.default_seeds = {0, 1, 2};
  b.gradients.lower_grad = b.objective.lower_grad;
  b.gradients.upper_grad = b.objective.upper_grad;
  b.gradients.lower_coords = {1};
  return b;
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, BenchmarkFactory> factories{
      {"circle", circle_benchmark},
      {"star", star_benchmark},
      {"rippled", rippled_benchmark},
      {"bowl", bowl_benchmark},
  };
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_benchmark(const std::string& name, BenchmarkFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[name] = std::move(factory);
}

BenchmarkInstance make_benchmark(const std::string& name) {
  BenchmarkFactory f;
  {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    const auto it = r.factories.find(name);
    if (it == r.factories.end()) throw ConfigError("unknown benchmark '" + name + "'");
    f = it->second;
  }
  return f();
}

std::vector<std::string> benchmark_names() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> names;
  for (const auto& [k, _] : r.factories) names.push_back(k);
  return names;
}

}  // namespace scbo

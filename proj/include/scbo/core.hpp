// Shared domain types for the soft-quantile consensus bi-level optimizer.
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace scbo {

using Vec = Eigen::VectorXd;
/// N x d, one particle per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (parameters, files, CLI arguments).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Root finder gave up; carries the residual at exit.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A particle left the finite reals.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t particle, long step)
      : Error(what), particle_(particle), step_(step) {}
  std::size_t particle() const { return particle_; }
  long step() const { return step_; }

 private:
  std::size_t particle_;
  long step_;
};

/// A certified inequality failed; signals an implementation bug.
class InvariantError : public Error {
 public:
  InvariantError(const std::string& name, const std::string& what) : Error(what), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// ---------------------------------------------------------------------------
// Selector

/// Smooth increasing surrogate for the step function, mapping R onto (0,1).
class Selector {
 public:
  virtual ~Selector() = default;
  virtual double value(double z) const = 0;
  virtual double derivative(double z) const = 0;
  virtual double inverse(double p) const = 0;
  /// log value(z); override when a stable closed form exists.
  virtual double log_value(double z) const;
  /// log derivative(z); override when a stable closed form exists.
  virtual double log_derivative(double z) const;
};

class SigmoidSelector final : public Selector {
 public:
  double value(double z) const override;
  double derivative(double z) const override;
  double inverse(double p) const override;
  double log_value(double z) const override;
  double log_derivative(double z) const override;
};

/// Process-wide sigmoid instance.
const Selector& sigmoid();

/// 1/(1+e^{-z}); throws DomainError on non-finite z.
double sigmoid_selector(double z);
/// s(z)(1-s(z)); throws DomainError on non-finite z.
double sigmoid_derivative(double z);

/// min(value, cap) when a cap is given.
double clip_objective(double value, std::optional<double> cap);

// ---------------------------------------------------------------------------
// Parameters

struct AlgorithmParams {
  double alpha = 30.0;
  double beta = 0.05;
  double tau = 0.0;  // 0 encodes hard selection
  double lambda = 1.0;
  double sigma = 1.0;
  double dt = 0.01;
  long steps = 600;
  long n_particles = 100;

  bool hard() const { return tau == 0.0; }
  /// 1/(tau alpha); +inf in hard mode.
  double xi() const;
  /// Sets tau = 1/(xi alpha).
  void set_xi(double xi);
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Objectives

struct ObjectiveBounds {
  double l_min = 0.0;
  double l_max = 0.0;
  double g_min = 0.0;
  double g_max = 0.0;
};

struct LipschitzConstants {
  double lower = 0.0;  // L_L
  double upper = 0.0;  // L_G
};

/// Local geometry of L and G near the target, used by the Laplace bound.
struct GeometryConstants {
  double eta_l = 0.0;
  double nu_l = 0.0;
  double l_inf = 0.0;
  double eta_g = 0.0;
  double nu_g = 0.0;
  double g_inf = 0.0;
  double r_g = 0.0;
  double big_r_g = 0.0;
  double r = 0.0;
  double u = 0.0;
  double delta_lev = 0.0;
  /// Minimizer of G over the r_G-neighborhood of the lower-level solution set.
  /// Defaults to theta_star when absent.
  std::optional<Vec> theta_tilde;

  void validate() const;
};

using ScalarField = std::function<double(const Vec&)>;
using VectorField = std::function<Vec(const Vec&)>;

struct ObjectiveSpec {
  std::string name;
  int dim = 0;
  ScalarField lower;
  ScalarField upper;
  std::optional<Vec> theta_star;
  /// When present, evaluations are clipped at l_max / g_max.
  std::optional<ObjectiveBounds> bounds;
  std::optional<LipschitzConstants> lipschitz;
  std::optional<GeometryConstants> geometry;
  /// Distance used by metrics; defaults to ||x - theta_star||.
  ScalarField target_distance;
  VectorField lower_grad;
  VectorField upper_grad;

  double eval_lower(const Vec& x) const;
  double eval_upper(const Vec& x) const;
  /// NaN when neither target_distance nor theta_star is available.
  double distance(const Vec& x) const;
};

// ---------------------------------------------------------------------------
// Initialization

struct InitSpec {
  enum class Kind { kGaussian, kUniform, kExplicit };
  Kind kind = Kind::kGaussian;
  double loc = 0.0;
  double scale = 50.0;
  double lo = -1.0;
  double hi = 1.0;
  Matrix points;  // kExplicit only

  static InitSpec gaussian(double loc, double scale);
  static InitSpec uniform(double lo, double hi);
  static InitSpec explicit_points(Matrix points);
};

// ---------------------------------------------------------------------------
// Ensemble

struct Ensemble {
  Matrix positions;
  Vec l_values;
  Vec g_values;
  long step_index = 0;
  bool fresh = false;

  Ensemble() = default;
  explicit Ensemble(Matrix p) : positions(std::move(p)) {}

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
  Vec particle(std::size_t i) const { return positions.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Re-evaluates the L and G caches; parallel over particles when workers > 1.
  void refresh(const ObjectiveSpec& objective, int workers = 1);
  /// Marks the caches stale after a position mutation.
  void touch() { fresh = false; }
};

/// Builds a fresh ensemble from explicit caches, for tests and fixtures.
Ensemble make_ensemble(Matrix positions, Vec l_values, Vec g_values);

}  // namespace scbo

// Flat key = value run configuration.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scbo/bench.hpp"
#include "scbo/dynamics.hpp"

namespace scbo {

inline constexpr int kConfigSchemaVersion = 1;

/// User-facing configuration. xi is the sharpness knob; tau is derived.
struct Config {
  std::string benchmark = "circle";
  SelectionMode mode = SelectionMode::kSoft;
  double alpha = 30.0;
  double beta = 0.05;
  double xi = 1e4;
  double lambda = 1.0;
  double sigma = 1.0;
  double dt = 0.1;
  long steps = 600;
  long n_particles = 100;
  std::uint64_t seed = 0;
  InitSpec::Kind init = InitSpec::Kind::kGaussian;
  double init_loc = 0.0;
  double init_scale = 50.0;
  double init_lo = -1.0;
  double init_hi = 1.0;
  std::string init_file;      // CSV, one particle per row
  long record_every = 1;
  std::vector<double> mass_radii;
  bool allow_overshoot = false;
  std::string geometry_file;  // optional local geometry constants
  double b4d = 36.0;
  double vartheta = 0.5;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  double tau() const { return mode == SelectionMode::kHard ? 0.0 : 1.0 / (xi * alpha); }
  AlgorithmParams params() const;
};

/// Defaults for a registered benchmark.
Config benchmark_defaults(const std::string& benchmark);

/// Parses config text. `overrides` are key=value strings applied on top of the
/// file; they may repeat file keys. Unknown keys, duplicate file keys, bad
/// values and a missing or unsupported schema_version throw ConfigError.
Config parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                    const std::filesystem::path& base_dir = {});

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Fully resolved text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const Config& config);

bool operator==(const Config& a, const Config& b);

/// Resolves the benchmark objective, initial ensemble and geometry fixture.
RunConfig to_run_config(const Config& config);

/// Geometry fixture: GeometryConstants keys plus optional lipschitz_lower,
/// lipschitz_upper and theta_tilde (comma separated).
void load_geometry(const std::filesystem::path& path, ObjectiveSpec& objective);

/// N x d matrix from a CSV file of numbers; '#' lines are skipped.
Matrix read_points_csv(const std::filesystem::path& path);

// Shared text helpers.
std::string format_double(double x);
double parse_double(const std::string& s, const std::string& key);
std::vector<double> parse_double_list(const std::string& s, const std::string& key);
std::map<std::string, std::string> parse_key_values(const std::string& text, bool allow_duplicates = false);

}  // namespace scbo

// Run archives and the subcommands behind the scbo executable.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scbo/config.hpp"
#include "scbo/diagnostics.hpp"
#include "scbo/dynamics.hpp"

namespace scbo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitCheckFailed = 4;

inline constexpr const char* kMetricsSchemaLine = "# scbo-metrics v1";
inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Archives

/// metrics.csv contents: schema line, header, one row per recorded step.
std::string metrics_csv(const RunMetrics& metrics);

/// Column name -> values, in file order. Throws ConfigError on schema mismatch.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
  bool has(const std::string& name) const;
};
MetricsTable parse_metrics_csv(const std::string& text);

std::string summary_json(const Config& config, const RunMetrics& metrics);

/// Copy of config with init_file / geometry_file made absolute, so the
/// snapshot can be re-run from anywhere.
Config resolved_snapshot(const Config& config);

/// Writes config.txt, metrics.csv and summary.json into dir.
void write_archive(const std::filesystem::path& dir, const Config& config, const RunMetrics& metrics);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Checks

inline const std::vector<std::string> kAllChecks = {"quantile-suite", "consensus-moment", "reproducible",
                                                    "mass-bound",     "laplace",          "decay",
                                                    "moment-bound",   "cutoff"};

struct CheckOptions {
  int workers = 1;
  std::optional<double> cutoff_m;  // default 10 x max observed
  std::optional<long> decay_last_step;
  int quantile_instances = 1000;
};

/// Evaluates the named checks against a config and its recorded metrics.
/// Unknown names throw ConfigError.
std::vector<CheckRecord> run_checks(const Config& config, const std::string& metrics_text,
                                    const std::vector<std::string>& checks, const CheckOptions& options,
                                    std::ostream& log);

// ---------------------------------------------------------------------------
// Baselines

struct BaselineSettings {
  double alpha = 0.1;  // upper step
  double gamma = 5.0;  // lower step is gamma * alpha
  int t_inner = 10;
};

struct TracePoint {
  long step = 0;
  double g = 0.0;
  double l = 0.0;
  double dist = 0.0;
};

/// Single-state SBGD ("sbgd1") or VPBGD ("vpbgd1") from the first draw of the
/// configured initial distribution.
std::vector<TracePoint> run_gradient_baseline(const std::string& method, const Config& config,
                                              const BaselineSettings& settings);

struct SeriesStats {
  double mean = 0.0;
  double std = 0.0;  // sample, divisor n-1; 0 when n = 1
  double min = 0.0;
  double max = 0.0;
};
SeriesStats summarize(const std::vector<double>& xs);

// ---------------------------------------------------------------------------
// Entry point

/// Parses argv and dispatches to run, sweep, check, compare or constants.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scbo

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scbo/bench.hpp"
#include "scbo/cli.hpp"
#include "test_util.hpp"

using namespace scbo;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "scbo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small circle run, fast enough for unit tests.
std::vector<std::string> small(std::vector<std::string> args) {
  for (const char* s : {"steps=40", "n_particles=30"}) {
    args.push_back("--set");
    args.push_back(s);
  }
  return args;
}

std::string slurp(const fs::path& p) { return read_text(p); }

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string at(std::size_t row, const std::string& col) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == col) return rows[row][j];
    return {};
  }
};

Csv read_csv(const std::string& text) {
  Csv c;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) c.header = cells; else c.rows.push_back(cells);
    first = false;
  }
  return c;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config text round trips to a fixed point") {
    Config c = benchmark_defaults("star");
    c.seed = 17;
    c.mass_radii = {0.1, 2.5};
    c.alpha = 12.5;
    c.xi = 3e3;
    const std::string text = serialize_config(c);
    const Config back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
    CHECK(back.tau() == doctest::Approx(1.0 / (3e3 * 12.5)).epsilon(1e-15));
  }

  TEST_CASE("config errors") {
    const std::string base = serialize_config(benchmark_defaults("circle"));
    CHECK_THROWS_AS(parse_config(base + "colour = blue\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(base + "alpha = 3\n"), ConfigError);  // duplicate key
    CHECK_THROWS_AS(parse_config("benchmark = circle\n"), ConfigError);  // schema_version missing
    std::string mismatch = base;
    const auto pos = mismatch.find("tau = ");
    mismatch.replace(pos, mismatch.find('\n', pos) - pos, "tau = 0.5");
    CHECK_THROWS_AS(parse_config(mismatch), ConfigError);
    CHECK_THROWS_AS(parse_config(base, {"beta=abc"}), ConfigError);
    CHECK_THROWS_AS(parse_config(base, {"nonsense=1"}), ConfigError);
  }

  TEST_CASE("overrides") {
    const std::string base = serialize_config(benchmark_defaults("circle"));
    const Config a = parse_config(base, {"xi=100"});
    CHECK(a.xi == 100.0);
    CHECK(a.tau() == doctest::Approx(1.0 / (100.0 * a.alpha)));
    const Config b = parse_config(base, {"tau=0.001"});
    CHECK(b.tau() == doctest::Approx(0.001).epsilon(1e-12));
    const Config h = parse_config(base, {"mode=hard"});
    CHECK(h.mode == SelectionMode::kHard);
    CHECK(h.tau() == 0.0);
    const Config al = parse_config(base, {"alpha=12"});
    CHECK(al.xi == benchmark_defaults("circle").xi);
    CHECK(al.tau() == doctest::Approx(1.0 / (al.xi * 12.0)));
    const Config both = parse_config(base, {"tau=0.002", "alpha=5"});
    CHECK(both.tau() == doctest::Approx(0.002).epsilon(1e-12));
  }

  TEST_CASE("run writes an archive and reruns are identical") {
    const fs::path a = test::scratch_dir("run_a"), b = test::scratch_dir("run_b");
    const Result r1 = cli(small({"run", "--out", a.string(), "--seed", "3"}));
    REQUIRE(r1.code == kExitOk);
    const Result r2 = cli(small({"run", "--out", b.string(), "--seed", "3", "--workers", "4"}));
    REQUIRE(r2.code == kExitOk);
    for (const char* f : {"config.txt", "metrics.csv", "summary.json"}) CHECK(fs::exists(a / f));
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));

    const MetricsTable t = parse_metrics_csv(slurp(a / "metrics.csv"));
    for (const char* col : {"step", "t", "L_consensus", "G_consensus", "dist_theta_star", "spread", "v_hat",
                            "fourth_moment", "c_1", "c_2"})
      CHECK(t.has(col));
    CHECK(t.rows.size() == 41);
    CHECK(slurp(a / "metrics.csv").rfind(kMetricsSchemaLine, 0) == 0);

    // The archived config reproduces the run by itself.
    const fs::path c = test::scratch_dir("run_c");
    REQUIRE(cli({"run", "--config", (a / "config.txt").string(), "--out", c.string()}).code == kExitOk);
    CHECK(slurp(a / "metrics.csv") == slurp(c / "metrics.csv"));
  }

  TEST_CASE("run exit codes") {
    const fs::path d = test::scratch_dir("run_bad");
    const Result bad = cli({"run", "--out", d.string(), "--set", "beta=1.5"});
    CHECK(bad.code == kExitConfig);
    CHECK(bad.err.find("beta out of (0,1)") != std::string::npos);
    CHECK(cli({"run", "--out", d.string(), "--config", "/nonexistent/config.txt"}).code == kExitConfig);
    CHECK(cli({"run", "--out", d.string(), "--set", "benchmark=nope"}).code == kExitConfig);
    const Result div = cli(small({"run", "--out", d.string(), "--set", "sigma=1e200"}));
    CHECK(div.code == kExitDivergence);
    CHECK(cli({"frobnicate"}).code != kExitOk);
  }

  TEST_CASE("the executable maps errors to exit codes") {
    const fs::path d = test::scratch_dir("exe");
    const std::string cmd = std::string(SCBO_CLI) + " run --out " + d.string() + " --set beta=1.5 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == kExitConfig);
  }

  TEST_CASE("sweep over xi and seeds") {
    const fs::path d = test::scratch_dir("sweep");
    const Result r = cli(small({"sweep", "--out", d.string(), "--param", "xi", "--values", "10,100,1000,10000",
                                "--seeds", "0,1,2,3,4", "--workers", "4"}));
    REQUIRE(r.code == kExitOk);
    int archives = 0;
    for (const auto& e : fs::recursive_directory_iterator(d))
      if (e.path().filename() == "metrics.csv") ++archives;
    CHECK(archives == 20);
    CHECK(read_csv(slurp(d / "aggregate.csv")).rows.size() == 4);
    CHECK(fs::exists(d / "xi=100" / "seed=3" / "config.txt"));
  }

  TEST_CASE("sweep errors") {
    const fs::path d = test::scratch_dir("sweep_bad");
    CHECK(cli({"sweep", "--out", d.string(), "--param", "xi", "--values", ""}).code == kExitConfig);
    CHECK(cli({"sweep", "--out", d.string(), "--param", "seed", "--values", "1,2"}).code == kExitConfig);
    CHECK(cli({"sweep", "--out", d.string(), "--param", "xi", "--values", "10,-1"}).code == kExitConfig);
  }

  TEST_CASE("noiseless seed sweep from a fixed ensemble has zero spread across seeds") {
    const fs::path d = test::scratch_dir("sweep_det");
    const fs::path init = d / "init.csv";
    {
      std::ofstream f(init);
      f << "0.5,0.1\n-1.2,2.0\n3.0,-0.7\n0.9,0.4\n-0.3,-0.8\n1.1,1.5\n";
    }
    const Result r = cli({"sweep", "--out", (d / "out").string(), "--seeds", "0,1,2,3", "--set", "sigma=0",
                          "--set", "init=file", "--set", "init_file=" + init.string(), "--set", "n_particles=6",
                          "--set", "steps=50"});
    REQUIRE(r.code == kExitOk);
    const Csv agg = read_csv(slurp(d / "out" / "aggregate.csv"));
    REQUIRE(agg.rows.size() == 1);
    int std_cols = 0;
    for (const auto& col : agg.header)
      if (col.size() > 4 && col.substr(col.size() - 4) == "_std") {
        ++std_cols;
        CHECK(std::stod(agg.at(0, col)) == 0.0);
      }
    CHECK(std_cols == 4);
  }

  TEST_CASE("check passes on a fresh archive and fails on a corrupted one") {
    const fs::path d = test::scratch_dir("check");
    REQUIRE(cli(small({"run", "--out", (d / "arch").string()})).code == kExitOk);
    const Result ok = cli({"check", "--archive", (d / "arch").string(), "--out", (d / "rep").string(),
                           "--instances", "100"});
    CHECK(ok.code == kExitOk);
    CHECK(fs::exists(d / "rep" / "check_report.jsonl"));
    CHECK(ok.out.find("\"consensus-moment\"") != std::string::npos);

    const fs::path bad = fs::path(SCBO_FIXTURES) / "corrupt_archive";
    const Result fail = cli({"check", "--archive", bad.string(), "--checks", "consensus-moment"});
    CHECK(fail.code == kExitCheckFailed);
    CHECK(fail.err.find("consensus-moment") != std::string::npos);

    CHECK(cli({"check", "--archive", (d / "arch").string(), "--checks", ""}).code == kExitConfig);
    CHECK(cli({"check", "--archive", (d / "arch").string(), "--checks", "bogus"}).code == kExitConfig);
  }

  TEST_CASE("compare") {
    const fs::path d = test::scratch_dir("compare");
    CHECK(cli({"compare", "--out", d.string(), "--benchmark", "rippled", "--methods", "newton"}).code ==
          kExitConfig);
    const Result one = cli({"compare", "--out", d.string(), "--benchmark", "rippled", "--methods", "sbgd1",
                            "--seeds", "0", "--set", "steps=20"});
    REQUIRE(one.code == kExitOk);
    CHECK(read_csv(slurp(d / "compare.csv")).rows.size() == 1);
    const Result all = cli({"compare", "--out", d.string(), "--benchmark", "rippled", "--seeds", "0,1", "--set",
                            "steps=30", "--set", "n_particles=40"});
    REQUIRE(all.code == kExitOk);
    CHECK(read_csv(slurp(d / "compare.csv")).rows.size() == 4);
    CHECK(fs::exists(d / "series.csv"));
  }

  TEST_CASE("soft and hard consensus agree on a frozen ensemble at xi = 1e4") {
    const Config cfg = benchmark_defaults("circle");
    const RunConfig rc = to_run_config(cfg);
    Ensemble e = initialize(rc);
    e.refresh(rc.objective);
    const Vec soft = consensus_point(e, rc.params).m;
    const Vec hard = hard_consensus_point(e, rc.params.alpha, rc.params.beta).m;
    CHECK((soft - hard).norm() <= 1e-4);
  }

  TEST_CASE("constants subcommand") {
    const Result r = cli({"constants", "--format", "json"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("\"c_bd\"") != std::string::npos);
    CHECK(r.out.find("\"overflow\": true") != std::string::npos);
    const Result csv = cli({"constants", "--set", "benchmark=bowl"});
    REQUIRE(csv.code == kExitOk);
    CHECK(csv.out.rfind("name,value,log,overflow", 0) == 0);
  }

  TEST_CASE("summary statistics use the sample convention") {
    const SeriesStats s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.min == 1.0);
    CHECK(s.max == 4.0);
    CHECK(summarize({7.0}).std == 0.0);
  }
}

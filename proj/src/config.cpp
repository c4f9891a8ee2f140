#include "scbo/config.hpp"

#include <map>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace scbo {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& s, const std::string& key) {
  long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

double finite(double v, const std::string& key) {
  if (!std::isfinite(v)) throw ConfigError(key + ": value must be finite");
  return v;
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_double(xs[i]);
  }
  return out;
}

std::filesystem::path resolve(const Config& c, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.is_absolute() || c.base_dir.empty()) return path;
  return c.base_dir / path;
}

const char* init_name(InitSpec::Kind k) {
  switch (k) {
    case InitSpec::Kind::kGaussian:
      return "gaussian";
    case InitSpec::Kind::kUniform:
      return "uniform";
    case InitSpec::Kind::kExplicit:
      return "file";
  }
  return "?";
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(trim(item), key));
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, bool allow_duplicates) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!allow_duplicates && kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

AlgorithmParams Config::params() const {
  AlgorithmParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.tau = tau();
  p.lambda = lambda;
  p.sigma = sigma;
  p.dt = dt;
  p.steps = steps;
  p.n_particles = n_particles;
  return p;
}

Config benchmark_defaults(const std::string& benchmark) {
  const BenchmarkInstance b = make_benchmark(benchmark);
  Config c;
  c.benchmark = benchmark;
  const AlgorithmParams& p = b.default_params;
  c.mode = p.hard() ? SelectionMode::kHard : SelectionMode::kSoft;
  c.alpha = p.alpha;
  c.beta = p.beta;
  if (!p.hard()) c.xi = p.xi();
  c.lambda = p.lambda;
  c.sigma = p.sigma;
  c.dt = p.dt;
  c.steps = p.steps;
  c.n_particles = p.n_particles;
  c.seed = b.default_seeds.empty() ? 0 : b.default_seeds.front();
  c.init = b.default_init.kind == InitSpec::Kind::kExplicit ? InitSpec::Kind::kGaussian : b.default_init.kind;
  c.init_loc = b.default_init.loc;
  c.init_scale = b.default_init.scale;
  c.init_lo = b.default_init.lo;
  c.init_hi = b.default_init.hi;
  return c;
}

Config parse_config(const std::string& text, const std::vector<std::string>& overrides,
                    const std::filesystem::path& base_dir) {
  auto kv = parse_key_values(text);
  std::map<std::string, std::string> set;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
  // A file's tau is derived from xi and alpha; overriding any of them (or the mode) drops it,
  // and an explicit tau override wins over the file's xi.
  if (set.contains("tau")) kv.erase("xi");
  else if (set.contains("xi") || set.contains("alpha") || set.contains("mode")) kv.erase("tau");
  for (const auto& [key, value] : set) kv[key] = value;

  const auto sv = kv.find("schema_version");
  if (sv == kv.end()) throw ConfigError("missing schema_version");
  if (parse_long(sv->second, "schema_version") != kConfigSchemaVersion)
    throw ConfigError("unsupported schema_version " + sv->second);
  kv.erase(sv);

  std::string bench = "circle";
  if (auto it = kv.find("benchmark"); it != kv.end()) {
    bench = it->second;
    kv.erase(it);
  }
  Config c = benchmark_defaults(bench);
  c.base_dir = base_dir;

  std::optional<double> tau_given;
  bool xi_given = false;
  for (const auto& [key, value] : kv) {
    if (key == "mode") {
      if (value == "soft")
        c.mode = SelectionMode::kSoft;
      else if (value == "hard")
        c.mode = SelectionMode::kHard;
      else
        throw ConfigError("mode: expected soft or hard, got '" + value + "'");
    } else if (key == "alpha") {
      c.alpha = finite(parse_double(value, key), key);
    } else if (key == "beta") {
      c.beta = parse_double(value, key);
    } else if (key == "xi") {
      c.xi = parse_double(value, key);
      xi_given = true;
    } else if (key == "tau") {
      tau_given = parse_double(value, key);
    } else if (key == "lambda") {
      c.lambda = finite(parse_double(value, key), key);
    } else if (key == "sigma") {
      c.sigma = finite(parse_double(value, key), key);
    } else if (key == "dt") {
      c.dt = finite(parse_double(value, key), key);
    } else if (key == "steps") {
      c.steps = parse_long(value, key);
    } else if (key == "n_particles") {
      c.n_particles = parse_long(value, key);
    } else if (key == "seed") {
      c.seed = parse_u64(value, key);
    } else if (key == "init") {
      if (value == "gaussian")
        c.init = InitSpec::Kind::kGaussian;
      else if (value == "uniform")
        c.init = InitSpec::Kind::kUniform;
      else if (value == "file")
        c.init = InitSpec::Kind::kExplicit;
      else
        throw ConfigError("init: expected gaussian, uniform or file, got '" + value + "'");
    } else if (key == "init_loc") {
      c.init_loc = finite(parse_double(value, key), key);
    } else if (key == "init_scale") {
      c.init_scale = finite(parse_double(value, key), key);
    } else if (key == "init_lo") {
      c.init_lo = finite(parse_double(value, key), key);
    } else if (key == "init_hi") {
      c.init_hi = finite(parse_double(value, key), key);
    } else if (key == "init_file") {
      c.init_file = value;
    } else if (key == "record_every") {
      c.record_every = parse_long(value, key);
    } else if (key == "mass_radii") {
      c.mass_radii = parse_double_list(value, key);
    } else if (key == "allow_overshoot") {
      c.allow_overshoot = parse_bool(value, key);
    } else if (key == "geometry_file") {
      c.geometry_file = value;
    } else if (key == "b4d") {
      c.b4d = parse_double(value, key);
    } else if (key == "vartheta") {
      c.vartheta = parse_double(value, key);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (c.mode == SelectionMode::kSoft) {
    if (tau_given && !xi_given) {
      if (!(*tau_given > 0.0)) throw ConfigError("tau must be positive in soft mode (use mode = hard)");
      c.xi = 1.0 / (*tau_given * c.alpha);
    }
    if (!(c.xi > 0.0) || !std::isfinite(c.xi)) throw ConfigError("xi must be positive and finite");
    if (tau_given && xi_given) {
      const double derived = c.tau();
      if (std::abs(*tau_given - derived) > 1e-12 * std::abs(derived))
        throw ConfigError("tau and xi disagree: tau must equal 1/(xi*alpha) = " + format_double(derived));
    }
  } else if (tau_given && *tau_given != 0.0) {
    throw ConfigError("tau must be 0 in hard mode");
  }
  if (c.init == InitSpec::Kind::kExplicit && c.init_file.empty()) throw ConfigError("init = file requires init_file");
  return c;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides, path.parent_path());
}

std::string serialize_config(const Config& c) {
  std::ostringstream o;
  o << "schema_version = " << kConfigSchemaVersion << '\n';
  o << "benchmark = " << c.benchmark << '\n';
  o << "mode = " << (c.mode == SelectionMode::kHard ? "hard" : "soft") << "  # soft | hard\n";
  o << "alpha = " << format_double(c.alpha) << "  # Gibbs weight on G (1/objective units)\n";
  o << "beta = " << format_double(c.beta) << "  # quantile level in (0,1)\n";
  o << "xi = " << format_double(c.xi) << "  # sharpness 1/(tau*alpha)\n";
  o << "tau = " << format_double(c.tau()) << "  # derived selector temperature (objective units)\n";
  o << "lambda = " << format_double(c.lambda) << "  # drift rate (1/time)\n";
  o << "sigma = " << format_double(c.sigma) << "  # diffusion (1/sqrt(time))\n";
  o << "dt = " << format_double(c.dt) << "  # time step (time)\n";
  o << "steps = " << c.steps << '\n';
  o << "n_particles = " << c.n_particles << '\n';
  o << "seed = " << c.seed << '\n';
  o << "init = " << init_name(c.init) << "  # gaussian | uniform | file\n";
  o << "init_loc = " << format_double(c.init_loc) << '\n';
  o << "init_scale = " << format_double(c.init_scale) << "  # per-coordinate standard deviation\n";
  o << "init_lo = " << format_double(c.init_lo) << '\n';
  o << "init_hi = " << format_double(c.init_hi) << '\n';
  o << "init_file = " << c.init_file << '\n';
  o << "record_every = " << c.record_every << "  # steps between metric rows\n";
  o << "mass_radii = " << join(c.mass_radii) << "  # ball radii around theta_star (length)\n";
  o << "allow_overshoot = " << (c.allow_overshoot ? "true" : "false") << '\n';
  o << "geometry_file = " << c.geometry_file << '\n';
  o << "b4d = " << format_double(c.b4d) << "  # BDG constant\n";
  o << "vartheta = " << format_double(c.vartheta) << '\n';
  return o.str();
}

bool operator==(const Config& a, const Config& b) {
  return a.benchmark == b.benchmark && a.mode == b.mode && a.alpha == b.alpha && a.beta == b.beta &&
         a.xi == b.xi && a.lambda == b.lambda && a.sigma == b.sigma && a.dt == b.dt && a.steps == b.steps &&
         a.n_particles == b.n_particles && a.seed == b.seed && a.init == b.init && a.init_loc == b.init_loc &&
         a.init_scale == b.init_scale && a.init_lo == b.init_lo && a.init_hi == b.init_hi &&
         a.init_file == b.init_file && a.record_every == b.record_every && a.mass_radii == b.mass_radii &&
         a.allow_overshoot == b.allow_overshoot && a.geometry_file == b.geometry_file && a.b4d == b.b4d &&
         a.vartheta == b.vartheta;
}

Matrix read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read points file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(parse_double_list(line, path.filename().string()));
    if (rows.back().size() != rows.front().size()) throw ConfigError(path.string() + ": ragged rows");
  }
  if (rows.empty()) throw ConfigError(path.string() + ": no points");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void load_geometry(const std::filesystem::path& path, ObjectiveSpec& objective) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read geometry file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  GeometryConstants g;
  LipschitzConstants lip = objective.lipschitz.value_or(LipschitzConstants{});
  const std::map<std::string, double*> fields{
      {"eta_l", &g.eta_l}, {"nu_l", &g.nu_l},     {"l_inf", &g.l_inf},         {"eta_g", &g.eta_g},
      {"nu_g", &g.nu_g},   {"g_inf", &g.g_inf},   {"r_g", &g.r_g},             {"big_r_g", &g.big_r_g},
      {"r", &g.r},         {"u", &g.u},           {"delta_lev", &g.delta_lev}, {"lipschitz_lower", &lip.lower},
      {"lipschitz_upper", &lip.upper}};
  for (const auto& [key, value] : parse_key_values(buf.str())) {
    if (key == "theta_tilde") {
      const auto xs = parse_double_list(value, key);
      g.theta_tilde = Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
      continue;
    }
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("geometry: unknown key '" + key + "'");
    *it->second = parse_double(value, key);
  }
  g.validate();
  if (g.theta_tilde && g.theta_tilde->size() != objective.dim) throw ConfigError("geometry: theta_tilde dimension");
  objective.geometry = g;
  objective.lipschitz = lip;
}

RunConfig to_run_config(const Config& c) {
  const BenchmarkInstance b = make_benchmark(c.benchmark);
  RunConfig rc;
  rc.objective = b.objective;
  rc.params = c.params();
  rc.mode = c.mode;
  rc.seed = c.seed;
  switch (c.init) {
    case InitSpec::Kind::kGaussian:
      rc.init = InitSpec::gaussian(c.init_loc, c.init_scale);
      break;
    case InitSpec::Kind::kUniform:
      rc.init = InitSpec::uniform(c.init_lo, c.init_hi);
      break;
    case InitSpec::Kind::kExplicit:
      rc.init = InitSpec::explicit_points(read_points_csv(resolve(c, c.init_file)));
      break;
  }
  rc.record_every = c.record_every;
  rc.mass_radii = c.mass_radii;
  rc.allow_overshoot = c.allow_overshoot;
  if (!c.geometry_file.empty()) load_geometry(resolve(c, c.geometry_file), rc.objective);
  rc.validate();
  return rc;
}

}  // namespace scbo

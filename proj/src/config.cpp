#include "etmhe/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "etmhe/errors.hpp"

namespace etmhe {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t begin = 0;
  while (true) {
    const auto pos = s.find(sep, begin);
    parts.push_back(trim(s.substr(begin, pos == std::string_view::npos ? pos : pos - begin)));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return parts;
}

double parse_number(std::string_view text) {
  const std::string s(trim(text));
  if (s.empty()) throw ConfigError("empty number");
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size() || errno == ERANGE) throw ConfigError("malformed number '" + s + "'");
  return v;
}

long long parse_integer(std::string_view text) {
  const std::string s(trim(text));
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError("malformed integer '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  const auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("malformed boolean '" + std::string(s) + "'");
}

struct Entry {
  std::string value;
  int line = 0;
};

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model", {"name", "k1", "k2", "tau", "nonnegative_states", "constrain_disturbances"}},
      {"certificate", {"P", "P1", "P2", "Q", "R", "eta"}},
      {"mhe",
       {"horizon", "alpha", "allow_short_horizon", "warm_start", "max_iterations",
        "gradient_tolerance", "step_tolerance", "initial_damping", "damping_increase",
        "damping_decrease", "jacobian"}},
      {"sim", {"T", "x0", "xhat0", "disturbance_bounds", "seed", "oracle_mode"}},
  };
  return keys;
}

}  // namespace

Vector parse_vector(std::string_view text) {
  const auto parts = split(text, ',');
  Vector v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_number(parts[i]);
  return v;
}

Matrix parse_matrix(std::string_view text) {
  const auto rows = split(text, ';');
  std::vector<Vector> parsed;
  for (const auto row : rows) parsed.push_back(parse_vector(row));
  const Eigen::Index cols = parsed.front().size();
  Matrix m(static_cast<Eigen::Index>(parsed.size()), cols);
  for (std::size_t r = 0; r < parsed.size(); ++r) {
    if (parsed[r].size() != cols) throw ConfigError("matrix rows have different lengths");
    m.row(static_cast<Eigen::Index>(r)) = parsed[r].transpose();
  }
  return m;
}

SimConfig parse_config_text(std::string_view text, const std::string& source) {
  std::map<std::string, Entry> entries;  // "section.key"
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  auto fail = [&source](int line, const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(line) + ": " + msg);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw fail(line_no, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_keys().contains(section)) throw fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw fail(line_no, "expected 'key = value'");
    if (section.empty()) throw fail(line_no, "key outside of a section");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!known_keys().at(section).contains(key)) {
      throw fail(line_no, "unknown key '" + key + "' in [" + section + "]");
    }
    if (value.empty()) throw fail(line_no, "empty value for '" + key + "'");
    const std::string full = section + "." + key;
    if (entries.contains(full)) throw fail(line_no, "duplicate key '" + key + "'");
    entries[full] = Entry{value, line_no};
  }

  auto has = [&](const std::string& k) { return entries.contains(k); };
  auto require = [&](const std::string& k) -> const Entry& {
    const auto it = entries.find(k);
    if (it == entries.end()) throw ConfigError(source + ": missing required key '" + k + "'");
    return it->second;
  };
  // Wraps a value parser so errors carry the line of the offending entry.
  auto get = [&](const std::string& k, auto parse) {
    const Entry& e = require(k);
    try {
      return parse(e.value);
    } catch (const ConfigError& err) {
      throw fail(e.line, k + ": " + err.what());
    }
  };
  auto num = [](const std::string& s) { return parse_number(s); };
  auto integer = [](const std::string& s) { return parse_integer(s); };
  auto boolean = [](const std::string& s) { return parse_bool(s); };
  auto vec = [](const std::string& s) { return parse_vector(s); };
  auto mat = [](const std::string& s) { return parse_matrix(s); };

  SimConfig cfg;
  cfg.model.name = require("model.name").value;
  if (has("model.k1")) cfg.model.reactor.k1 = get("model.k1", num);
  if (has("model.k2")) cfg.model.reactor.k2 = get("model.k2", num);
  if (has("model.tau")) cfg.model.reactor.tau = get("model.tau", num);
  if (has("model.nonnegative_states")) {
    cfg.model.nonnegative_states = get("model.nonnegative_states", boolean);
  }
  if (has("model.constrain_disturbances")) {
    cfg.model.constrain_disturbances = get("model.constrain_disturbances", boolean);
  }

  if (has("certificate.P")) {
    if (has("certificate.P1") || has("certificate.P2")) {
      throw fail(require("certificate.P").line, "give either P or P1/P2, not both");
    }
    cfg.cert.p1 = get("certificate.P", mat);
    cfg.cert.p2 = cfg.cert.p1;
  } else {
    cfg.cert.p1 = get("certificate.P1", mat);
    cfg.cert.p2 = get("certificate.P2", mat);
  }
  cfg.cert.q = get("certificate.Q", mat);
  cfg.cert.r = get("certificate.R", mat);
  cfg.cert.eta = get("certificate.eta", num);

  cfg.horizon = static_cast<int>(get("mhe.horizon", integer));
  cfg.alpha = get("mhe.alpha", num);
  if (has("mhe.allow_short_horizon")) cfg.allow_short_horizon = get("mhe.allow_short_horizon", boolean);
  if (has("mhe.warm_start")) cfg.warm_start = get("mhe.warm_start", boolean);
  if (has("mhe.max_iterations")) {
    cfg.solver.max_iterations = static_cast<int>(get("mhe.max_iterations", integer));
  }
  if (has("mhe.gradient_tolerance")) cfg.solver.gradient_tolerance = get("mhe.gradient_tolerance", num);
  if (has("mhe.step_tolerance")) cfg.solver.step_tolerance = get("mhe.step_tolerance", num);
  if (has("mhe.initial_damping")) cfg.solver.initial_damping = get("mhe.initial_damping", num);
  if (has("mhe.damping_increase")) cfg.solver.damping_increase = get("mhe.damping_increase", num);
  if (has("mhe.damping_decrease")) cfg.solver.damping_decrease = get("mhe.damping_decrease", num);
  if (has("mhe.jacobian")) {
    const Entry& e = require("mhe.jacobian");
    if (e.value == "model") {
      cfg.solver.jacobian = JacobianMode::kModel;
    } else if (e.value == "finite_difference") {
      cfg.solver.jacobian = JacobianMode::kFiniteDifference;
    } else {
      throw fail(e.line, "jacobian must be 'model' or 'finite_difference'");
    }
  }

  cfg.steps = static_cast<int>(get("sim.T", integer));
  cfg.x0 = get("sim.x0", vec);
  cfg.xhat0 = get("sim.xhat0", vec);
  cfg.bounds.b = get("sim.disturbance_bounds", vec);
  if (has("sim.seed")) {
    const long long seed = get("sim.seed", integer);
    if (seed < 0) throw fail(require("sim.seed").line, "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }
  if (has("sim.oracle_mode")) cfg.oracle_mode = get("sim.oracle_mode", boolean);

  // Invariant checks, attributed to the most relevant line.
  auto check = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& err) {
      const auto it = entries.find(key);
      throw fail(it == entries.end() ? 0 : it->second.line, err.what());
    }
  };
  const std::string p_key = has("certificate.P") ? "certificate.P" : "certificate.P1";
  check("certificate.eta", [&] {
    if (!(cfg.cert.eta >= 0.0 && cfg.cert.eta < 1.0)) throw CertificateError("eta must lie in [0, 1)");
  });
  check(p_key, [&] { cfg.cert.validate(); });
  check("mhe.horizon", [&] { cfg.validate(); });
  return cfg;
}

SimConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  if (trace.rows.empty()) return;
  const auto n = trace.rows.front().x.size();
  const auto p = trace.rows.front().y.size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < n; ++i) os << ",xhat" << i + 1;
  if (p == 1) {
    os << ",y";
  } else {
    for (Eigen::Index i = 0; i < p; ++i) os << ",y" << i + 1;
  }
  os << ",gamma,delta,eps,d,err_norm,rges_bound,solver_iters,solver_converged,tx_count\n";
  for (const auto& r : trace.rows) {
    os << r.t;
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(r.x[i]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(r.xhat[i]);
    for (Eigen::Index i = 0; i < p; ++i) os << ',' << format_double(r.y[i]);
    os << ',' << (r.gamma ? 1 : 0) << ',' << r.delta << ',' << r.eps << ',' << format_double(r.d)
       << ',' << format_double(r.err_norm) << ',' << format_double(r.rges_bound) << ','
       << r.solver_iters << ',' << (r.solver_converged ? 1 : 0) << ',' << r.tx_count << '\n';
  }
}

void write_sweep_csv(std::ostream& os, const SweepReport& report) {
  os << "alpha,seed,t,gamma,err_norm\n";
  for (const auto& run : report.runs) {
    for (const auto& r : run.trace.rows) {
      if (r.t == 0) continue;
      os << format_double(run.alpha) << ',' << run.seed << ',' << r.t << ',' << (r.gamma ? 1 : 0)
         << ',' << format_double(r.err_norm) << '\n';
    }
  }
}

}  // namespace etmhe

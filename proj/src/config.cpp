#include "weakbsde/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

namespace weakbsde {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  std::ostringstream os;
  os << "line " << line << ": " << msg;
  throw ConfigError(os.str());
}

double to_double(const std::string& v, int line, const std::string& key) {
  const std::string t = trim(v);
  char* end = nullptr;
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(x))
    fail(line, "type mismatch for '" + key + "' (expected number)");
  return x;
}

long long to_int(const std::string& v, int line, const std::string& key) {
  const std::string t = trim(v);
  char* end = nullptr;
  const long long x = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    fail(line, "type mismatch for '" + key + "' (expected integer)");
  return x;
}

std::uint64_t to_u64(const std::string& v, int line, const std::string& key) {
  const std::string t = trim(v);
  if (t.empty() || t[0] == '-')
    fail(line, "type mismatch for '" + key + "' (expected unsigned integer)");
  char* end = nullptr;
  const unsigned long long x = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    fail(line, "type mismatch for '" + key + "' (expected unsigned integer)");
  return std::uint64_t(x);
}

bool to_bool(const std::string& v, int line, const std::string& key) {
  const std::string t = trim(v);
  if (t == "true") return true;
  if (t == "false") return false;
  fail(line, "type mismatch for '" + key + "' (expected true|false)");
}

std::vector<double> to_list(const std::string& v, int line,
                            const std::string& key) {
  std::vector<double> out;
  const std::string t = trim(v);
  if (t.empty()) return out;
  size_t pos = 0;
  while (true) {
    const size_t c = t.find(',', pos);
    out.push_back(to_double(t.substr(pos, c - pos), line, key));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  return out;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt_list(const std::vector<double>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(xs[i]);
  }
  return out;
}

std::string join(const std::vector<std::string>& xs, const char* sep) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

struct Field {
  std::string name;
  std::function<std::string(const RunConfig&)> render;
  std::function<void(RunConfig&, const std::string&, int)> apply;
};

// the per-key range checks live next to the key table so parse errors can
// name the offending line
std::vector<Field> field_table() {
  std::vector<Field> fs;
  auto add = [&](std::string name,
                 std::function<std::string(const RunConfig&)> render,
                 std::function<void(RunConfig&, const std::string&, int)>
                     apply) {
    fs.push_back({std::move(name), std::move(render), std::move(apply)});
  };
  auto num = [&](std::string name, double RunConfig::* mem,
                 std::function<void(double, int)> check = {}) {
    add(name,
        [mem](const RunConfig& c) { return fmt_double(c.*mem); },
        [mem, check, name](RunConfig& c, const std::string& v, int line) {
          const double x = to_double(v, line, name);
          if (check) check(x, line);
          c.*mem = x;
        });
  };
  auto integer = [&](std::string name, int RunConfig::* mem,
                     std::function<void(long long, int)> check = {}) {
    add(name,
        [mem](const RunConfig& c) { return std::to_string(c.*mem); },
        [mem, check, name](RunConfig& c, const std::string& v, int line) {
          const long long x = to_int(v, line, name);
          if (check) check(x, line);
          c.*mem = int(x);
        });
  };
  auto big = [&](std::string name, long long RunConfig::* mem,
                 std::function<void(long long, int)> check = {}) {
    add(name,
        [mem](const RunConfig& c) { return std::to_string(c.*mem); },
        [mem, check, name](RunConfig& c, const std::string& v, int line) {
          const long long x = to_int(v, line, name);
          if (check) check(x, line);
          c.*mem = x;
        });
  };
  auto boolean = [&](std::string name, bool RunConfig::* mem) {
    add(name,
        [mem](const RunConfig& c) { return c.*mem ? "true" : "false"; },
        [mem, name](RunConfig& c, const std::string& v, int line) {
          c.*mem = to_bool(v, line, name);
        });
  };
  auto list = [&](std::string name, std::vector<double> RunConfig::* mem,
                  std::function<void(const std::vector<double>&, int)>
                      check = {}) {
    add(name,
        [mem](const RunConfig& c) { return fmt_list(c.*mem); },
        [mem, check, name](RunConfig& c, const std::string& v, int line) {
          auto xs = to_list(v, line, name);
          if (check) check(xs, line);
          c.*mem = std::move(xs);
        });
  };
  auto word = [&](std::string name, std::string RunConfig::* mem,
                  std::vector<std::string> choices) {
    add(name,
        [mem](const RunConfig& c) { return c.*mem; },
        [mem, choices, name](RunConfig& c, const std::string& v, int line) {
          const std::string t = trim(v);
          for (const auto& ch : choices)
            if (t == ch) {
              c.*mem = t;
              return;
            }
          fail(line, "invalid value '" + t + "' for '" + name +
                         "' (expected " + join(choices, "|") + ")");
        });
  };
  auto text = [&](std::string name, std::string RunConfig::* mem) {
    add(name,
        [mem](const RunConfig& c) { return c.*mem; },
        [mem](RunConfig& c, const std::string& v, int) { c.*mem = trim(v); });
  };

  auto in_unit = [](const char* what) {
    return [what](double x, int line) {
      if (!(x >= 0.0 && x <= 1.0))
        fail(line, std::string(what) + " must lie in [0, 1]");
    };
  };
  auto positive = [](const char* what) {
    return [what](double x, int line) {
      if (!(x > 0.0)) fail(line, std::string(what) + " must be > 0");
    };
  };
  auto at_least_one = [](const char* what) {
    return [what](long long x, int line) {
      if (x < 1) fail(line, std::string(what) + " must be >= 1");
    };
  };

  // problem
  word("problem.loss", &RunConfig::loss,
       {"indicator", "linear", "power", "custom"});
  num("problem.power_q", &RunConfig::power_q, [](double x, int line) {
    if (!(x >= 1.0)) fail(line, "power_q must be >= 1");
  });
  list("problem.loss_knots_x", &RunConfig::loss_knots_x);
  list("problem.loss_knots_v", &RunConfig::loss_knots_v);
  word("problem.loss_side", &RunConfig::loss_side, {"phi", "psi"});
  word("problem.loss_interp", &RunConfig::loss_interp, {"step", "linear"});
  boolean("problem.random_factor", &RunConfig::random_factor);
  word("problem.driver", &RunConfig::driver, {"zero", "linear"});
  num("problem.a_y", &RunConfig::a_y);
  list("problem.a_z", &RunConfig::a_z);
  num("problem.g0", &RunConfig::g0);
  num("problem.horizon", &RunConfig::horizon, positive("horizon"));
  integer("problem.dim", &RunConfig::dim, [](long long x, int line) {
    if (x < 1) fail(line, "dim must be >= 1");
  });
  word("problem.market", &RunConfig::market, {"none", "gbm"});
  num("problem.s0", &RunConfig::s0, positive("s0"));
  num("problem.sigma", &RunConfig::sigma, positive("sigma"));
  num("problem.drift", &RunConfig::drift);
  num("problem.rate", &RunConfig::rate);
  word("problem.claim", &RunConfig::claim, {"constant", "digital", "call"});
  num("problem.claim_level", &RunConfig::claim_level,
      in_unit("claim_level"));
  num("problem.claim_strike", &RunConfig::claim_strike,
      positive("claim_strike"));
  num("problem.claim_cap", &RunConfig::claim_cap, positive("claim_cap"));
  // simulation
  big("simulation.n_paths", &RunConfig::n_paths, at_least_one("n_paths"));
  big("simulation.n_steps", &RunConfig::n_steps, at_least_one("n_steps"));
  add("simulation.seed",
      [](const RunConfig& c) { return std::to_string(c.seed); },
      [](RunConfig& c, const std::string& v, int line) {
        c.seed = to_u64(v, line, "simulation.seed");
      });
  // solver
  word("solver.family", &RunConfig::family,
       {"constant", "feedback", "profile"});
  integer("solver.evals", &RunConfig::evals, [](long long x, int line) {
    if (x < 1) fail(line, "evals must be >= 1");
  });
  integer("solver.sweeps", &RunConfig::sweeps, [](long long x, int line) {
    if (x < 1) fail(line, "sweeps must be >= 1");
  });
  integer("solver.basis_degree", &RunConfig::basis_degree,
          [](long long x, int line) {
            if (x < 0 || x > 6)
              fail(line, "basis_degree must lie in [0, 6]");
          });
  num("solver.l_min", &RunConfig::l_min, positive("l_min"));
  num("solver.l_max", &RunConfig::l_max, positive("l_max"));
  // task
  list("task.m_grid", &RunConfig::m_grid,
       [](const std::vector<double>& xs, int line) {
         for (double x : xs)
           if (!(x >= 0.0 && x <= 1.0))
             fail(line, "m_grid entries must lie in [0, 1]");
       });
  num("task.m", &RunConfig::m, in_unit("m"));
  num("task.t_mid", &RunConfig::t_mid, positive("t_mid"));
  integer("task.n_policies", &RunConfig::n_policies,
          [](long long x, int line) {
            if (x < 1) fail(line, "n_policies must be >= 1");
          });
  word("task.curve_method", &RunConfig::curve_method,
       {"policy", "profile", "both"});
  // output
  text("output.csv", &RunConfig::csv);
  integer("output.precision", &RunConfig::precision,
          [](long long x, int line) {
            if (x < 3 || x > 17) fail(line, "precision must lie in [3, 17]");
          });
  return fs;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> fs = field_table();
  return fs;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string s = trim(raw);
    if (s.empty()) continue;
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      fail(line, "expected 'section.key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = s.substr(eq + 1);
    const Field* f = nullptr;
    for (const auto& cand : fields())
      if (cand.name == key) {
        f = &cand;
        break;
      }
    if (!f) fail(line, "unknown key '" + key + "'");
    f->apply(cfg, value, line);
  }
  if (!(cfg.l_min < cfg.l_max))
    throw ConfigError("solver.l_min must be < solver.l_max");
  if (cfg.loss_knots_x.size() != cfg.loss_knots_v.size())
    throw ConfigError(
        "problem.loss_knots_x and problem.loss_knots_v must have equal "
        "length");
  return cfg;
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# weakbsde run configuration (resolved)\n";
  std::string section;
  for (const auto& f : fields()) {
    const std::string sec = f.name.substr(0, f.name.find('.'));
    if (sec != section) {
      section = sec;
      os << "\n";
    }
    os << f.name << " = " << f.render(cfg) << "\n";
  }
  return os.str();
}

ProblemSpec make_spec(const RunConfig& cfg) {
  ProblemSpec spec;

  if (cfg.loss == "indicator") {
    spec.loss = LossMap::indicator();
  } else if (cfg.loss == "linear") {
    spec.loss = LossMap::linear();
  } else if (cfg.loss == "power") {
    spec.loss = LossMap::power(cfg.power_q);
  } else {
    if (cfg.loss_knots_x.empty())
      throw std::invalid_argument(
          "custom loss requires problem.loss_knots_x and "
          "problem.loss_knots_v");
    Knots k;
    k.x = Eigen::Map<const Eigen::VectorXd>(cfg.loss_knots_x.data(),
                                            idx_t(cfg.loss_knots_x.size()))
              .array();
    k.v = Eigen::Map<const Eigen::VectorXd>(cfg.loss_knots_v.data(),
                                            idx_t(cfg.loss_knots_v.size()))
              .array();
    const Interp ip =
        cfg.loss_interp == "step" ? Interp::step : Interp::linear;
    spec.loss = cfg.loss_side == "psi" ? LossMap::from_psi(k, ip)
                                       : LossMap::from_phi(k, ip);
  }
  if (cfg.random_factor) spec.loss = spec.loss.with_random_factor(true);

  if (cfg.driver == "zero") {
    spec.driver = Driver::zero(cfg.dim);
  } else {
    Vec az;
    if (cfg.a_z.empty()) {
      az = Vec::Zero(cfg.dim);
    } else {
      if (idx_t(cfg.a_z.size()) != idx_t(cfg.dim))
        throw std::invalid_argument(
            "problem.a_z must have problem.dim entries");
      az = Eigen::Map<const Eigen::VectorXd>(cfg.a_z.data(),
                                             idx_t(cfg.a_z.size()))
               .array();
    }
    std::function<double(double)> g0;
    if (cfg.g0 != 0.0) {
      const double c = cfg.g0;
      g0 = [c](double) { return c; };
    }
    spec.driver = Driver::linear(cfg.a_y, std::move(az), std::move(g0));
  }

  spec.horizon_T = cfg.horizon;
  spec.brownian_dim_d = cfg.dim;
  if (cfg.market == "gbm")
    spec.market = MarketSpec{cfg.s0, cfg.sigma, cfg.drift, cfg.rate};

  ClaimSpec cl;
  cl.level = cfg.claim_level;
  cl.strike = cfg.claim_strike;
  cl.cap = cfg.claim_cap;
  if (cfg.claim == "constant") {
    cl.kind = ClaimKind::constant;
  } else {
    cl.kind = cfg.claim == "digital" ? ClaimKind::digital : ClaimKind::call;
    if (!spec.market)
      throw std::invalid_argument("claim '" + cfg.claim +
                                  "' reads S_T and requires problem.market "
                                  "= gbm");
  }
  spec.claim = cl;

  if (!cfg.m_grid.empty())
    spec.m_grid = Eigen::Map<const Eigen::VectorXd>(cfg.m_grid.data(),
                                                    idx_t(cfg.m_grid.size()))
                      .array();
  return spec;
}

}  // namespace weakbsde

#pragma once

#include "weakbsde/problem_spec.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakbsde {

/// Flat run configuration: `section.key = value` lines, `#` comments.
/// Every field has a documented default; serialize() emits the fully
/// resolved set in canonical order and parse_config() round-trips it
/// losslessly (doubles are written with 17 significant digits).
struct RunConfig {
  // problem
  std::string loss = "indicator";  // indicator | linear | power | custom
  double power_q = 2.0;            // power loss: psi(y) = 1 - (1-y)^q
  std::vector<double> loss_knots_x;  // custom loss knot abscissae
  std::vector<double> loss_knots_v;  // custom loss knot values
  std::string loss_side = "phi";     // custom: knots give phi | psi
  std::string loss_interp = "linear";  // step | linear
  bool random_factor = false;  // terminal map phi(m) * xi(omega)
  std::string driver = "zero";  // zero | linear
  double a_y = 0.0;
  std::vector<double> a_z;  // size dim; empty means zeros
  double g0 = 0.0;          // constant inhomogeneous driver term
  double horizon = 1.0;
  int dim = 1;
  std::string market = "none";  // none | gbm
  double s0 = 100.0;
  double sigma = 0.2;
  double drift = 0.0;
  double rate = 0.0;
  std::string claim = "constant";  // constant | digital | call
  double claim_level = 1.0;
  double claim_strike = 100.0;
  double claim_cap = 50.0;
  // simulation
  long long n_paths = 20000;
  long long n_steps = 32;
  std::uint64_t seed = 1;
  // solver
  std::string family = "profile";  // constant | feedback | profile
  int evals = 400;
  int sweeps = 5;
  int basis_degree = 2;
  double l_min = 1e-4;  // dual multiplier bracket
  double l_max = 1e4;
  // task
  std::vector<double> m_grid;  // empty means the default 21-point grid
  double m = 0.5;
  double t_mid = 0.5;
  int n_policies = 20;
  std::string curve_method = "profile";  // policy | profile | both
  // output
  std::string csv = "out.csv";
  int precision = 10;  // significant digits in CSV numbers

  bool operator==(const RunConfig&) const = default;
};

/// Parse/validation failure; the message names the offending line and key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the flat text format. Unknown keys, type mismatches, and
/// per-key range violations throw ConfigError naming line and key.
RunConfig parse_config(const std::string& text);

/// Canonical text form: every field, declaration order, one line each.
std::string serialize(const RunConfig& cfg);

/// Builds the ProblemSpec, checking cross-field coherence (claim kinds
/// that read S_T require the gbm market, custom losses require knots,
/// a_z must match dim). Throws std::invalid_argument on conflicts.
ProblemSpec make_spec(const RunConfig& cfg);

}  // namespace weakbsde

#include "weakbsde/problem_spec.hpp"

#include "weakbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace weakbsde {

double ClaimSpec::payoff(double s_terminal) const {
  switch (kind) {
    case ClaimKind::constant: return level;
    case ClaimKind::digital: return s_terminal >= strike ? 1.0 : 0.0;
    case ClaimKind::call:
      return std::min(std::max(s_terminal - strike, 0.0), cap) / cap;
  }
  return 0.0;
}

std::string ClaimSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case ClaimKind::constant: os << "constant(" << level << ")"; break;
    case ClaimKind::digital: os << "digital(strike=" << strike << ")"; break;
    case ClaimKind::call:
      os << "call(strike=" << strike << ", cap=" << cap << ")";
      break;
  }
  return os.str();
}

Vec ProblemSpec::default_m_grid(idx_t points) {
  return Vec::LinSpaced(std::max<idx_t>(points, 2), 0.0, 1.0);
}

bool ValidationReport::has_structural() const {
  return std::any_of(
      violations.begin(), violations.end(),
      [](const Violation& v) { return v.kind == ViolationKind::structural; });
}

std::string ValidationReport::describe() const {
  if (ok()) return "valid";
  std::ostringstream os;
  for (const auto& v : violations) {
    os << (v.kind == ViolationKind::structural ? "[structural] "
                                               : "[assumption] ")
       << v.what;
    if (!v.where.empty()) os << " (" << v.where << ")";
    os << '\n';
  }
  return os.str();
}

namespace {

void add(ValidationReport& r, ViolationKind kind, std::string what,
         std::string where = {}) {
  r.violations.push_back({kind, std::move(what), std::move(where)});
}

template <typename... Parts>
std::string at(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

void check_grids(const ProblemSpec& spec, ValidationReport& r) {
  for (const auto& d : knot_defects(spec.loss.psi_knots()))
    add(r, ViolationKind::structural, "psi grid malformed: " + d);
  for (const auto& d : knot_defects(spec.loss.phi_knots()))
    add(r, ViolationKind::structural, "phi grid malformed: " + d);

  const Vec& m = spec.m_grid;
  if (m.size() < 1) {
    add(r, ViolationKind::structural, "m_grid is empty");
    return;
  }
  for (idx_t i = 0; i < m.size(); ++i) {
    if (!(m[i] >= 0.0 && m[i] <= 1.0)) {
      add(r, ViolationKind::structural, "m_grid value outside [0,1]",
          at("m_grid[", i, "]=", m[i]));
      return;
    }
    if (i > 0 && !(m[i] > m[i - 1])) {
      add(r, ViolationKind::structural, "m_grid not strictly increasing",
          at("index ", i));
      return;
    }
  }
}

void check_inverse_pair(const LossMap& loss, ValidationReport& r) {
  const bool interpolated = loss.psi_interp() == Interp::linear ||
                            loss.phi_interp() == Interp::linear;
  const double tol = interpolated ? 1e-9 : 1e-12;
  // Outside the attained range the compositions sit at the range endpoint
  // (phi(psi(y)) = phi(0) below the graph, psi(phi(m)) = psi(1) above it),
  // so the pair relation clamps there.
  const double phi_lo = loss.phi(0.0);
  const double psi_hi = loss.psi(1.0);
  const Knots& pk = loss.psi_knots();
  for (idx_t i = 0; i < pk.x.size(); ++i) {
    const double y = pk.x[i];
    const double back = loss.phi(loss.psi(y));
    if (back > std::max(y, phi_lo) + tol) {
      add(r, ViolationKind::assumption, "inverse-pair relation violated",
          at("phi(psi(y)) = ", back, " > y = ", y));
      return;
    }
  }
  const Knots& fk = loss.phi_knots();
  for (idx_t i = 0; i < fk.x.size(); ++i) {
    const double m = fk.x[i];
    const double fwd = loss.psi(loss.phi(m));
    if (fwd < std::min(m, psi_hi) - tol) {
      add(r, ViolationKind::assumption, "inverse-pair relation violated",
          at("psi(phi(m)) = ", fwd, " < m = ", m));
      return;
    }
  }
}

constexpr idx_t kAxisPts = 101;  // lattice points per axis
constexpr double kBox = 2.0;     // (y,z) probe box [-kBox, kBox]^{1+d}

// Difference quotients in the H_g metric |dy| + |dz|_2 over the full
// 101^2 (y,z)-lattice for each t (the d = 1 case of the documented
// 101^3 lattice).
bool lattice_quotients_d1(const Driver& g, double t, double tol,
                          ValidationReport& r) {
  const Vec axis = Vec::LinSpaced(kAxisPts, -kBox, kBox);
  const double h = axis[1] - axis[0];
  Mat vals(kAxisPts, kAxisPts);  // (y index, z index)
  Vec z1(1);
  for (idx_t iz = 0; iz < kAxisPts; ++iz) {
    z1[0] = axis[iz];
    for (idx_t iy = 0; iy < kAxisPts; ++iy) {
      const double v = g.eval(t, axis[iy], z1);
      if (!std::isfinite(v)) {
        add(r, ViolationKind::structural, "driver returned non-finite value",
            at("t=", t, ", y=", axis[iy], ", z=", axis[iz]));
        return false;
      }
      vals(iy, iz) = v;
    }
  }
  for (idx_t iz = 0; iz < kAxisPts; ++iz) {
    for (idx_t iy = 1; iy < kAxisPts; ++iy) {
      const double quot = std::abs(vals(iy, iz) - vals(iy - 1, iz)) / h;
      if (quot > g.lipschitz + tol) {
        add(r, ViolationKind::assumption, "Lipschitz bound exceeded",
            at("y-quotient ", quot, " > K_g = ", g.lipschitz, " at t=", t,
               ", y=", axis[iy], ", z=", axis[iz]));
        return false;
      }
    }
  }
  for (idx_t iy = 0; iy < kAxisPts; ++iy) {
    for (idx_t iz = 1; iz < kAxisPts; ++iz) {
      const double quot = std::abs(vals(iy, iz) - vals(iy, iz - 1)) / h;
      if (quot > g.lipschitz + tol) {
        add(r, ViolationKind::assumption, "Lipschitz bound exceeded",
            at("z-quotient ", quot, " > K_g = ", g.lipschitz, " at t=", t,
               ", y=", axis[iy], ", z=", axis[iz]));
        return false;
      }
    }
  }
  return true;
}

// d > 1: probe along axis lines through the origin plus 64 seeded random
// directions, each normalized in the H_g metric so quotients are |dg|/|ds|.
bool line_quotients(const Driver& g, double t, double tol,
                    ValidationReport& r) {
  const int d = g.dim;
  std::vector<Vec> dirs;
  for (int j = 0; j <= d; ++j) {
    Vec e = Vec::Zero(d + 1);
    e[j] = 1.0;
    dirs.push_back(e);
  }
  for (int k = 0; k < 64; ++k) {
    Vec u(d + 1);
    for (int j = 0; j <= d; ++j)
      u[j] = normal_at(0xC0FFEE, kStreamConfig, std::uint64_t(k), 0,
                       std::uint32_t(j));
    const double hg_norm =
        std::abs(u[0]) + std::sqrt(double(u.tail(d).square().sum()));
    if (hg_norm > 0) dirs.push_back(u / hg_norm);
  }
  Vec z(d);
  for (const Vec& u : dirs) {
    const double s_max = kBox / u.abs().maxCoeff();
    double prev_v = 0.0, prev_s = 0.0;
    for (idx_t i = 0; i < kAxisPts; ++i) {
      const double s = s_max * (2.0 * double(i) / double(kAxisPts - 1) - 1.0);
      for (int j = 0; j < d; ++j) z[j] = s * u[j + 1];
      const double v = g.eval(t, s * u[0], z);
      if (!std::isfinite(v)) {
        add(r, ViolationKind::structural, "driver returned non-finite value",
            at("t=", t, ", y=", s * u[0]));
        return false;
      }
      if (i > 0) {
        const double quot = std::abs(v - prev_v) / (s - prev_s);
        if (quot > g.lipschitz + tol) {
          add(r, ViolationKind::assumption, "Lipschitz bound exceeded",
              at("directional quotient ", quot, " > K_g = ", g.lipschitz,
                 " at t=", t));
          return false;
        }
      }
      prev_v = v;
      prev_s = s;
    }
  }
  return true;
}

void check_driver(const ProblemSpec& spec, ValidationReport& r) {
  const Driver& g = spec.driver;
  if (g.form == DriverForm::zero) return;
  const double T = spec.horizon_T;
  const double tol = 1e-9 * std::max(1.0, g.lipschitz) + 1e-12;

  const Vec zero_z = Vec::Zero(g.dim);
  const Vec t_grid = Vec::LinSpaced(kAxisPts, 0.0, T);
  for (idx_t i = 0; i < kAxisPts; ++i) {
    const double v = g.eval(t_grid[i], 0.0, zero_z);
    if (!std::isfinite(v)) {
      add(r, ViolationKind::structural, "driver returned non-finite value",
          at("t=", t_grid[i], ", y=0, z=0"));
      return;
    }
    if (std::abs(v) > g.chi + tol) {
      add(r, ViolationKind::assumption, "chi_g bound exceeded",
          at("|g(", t_grid[i], ",0,0)| = ", std::abs(v),
             " > chi_g = ", g.chi));
      break;
    }
  }

  // Linear forms carry K_g = max(|A_Y|, |A_Z|_2), the sharp constant in the
  // H_g metric; quotient sampling applies to opaque drivers only.
  if (g.form == DriverForm::linear) return;
  const Vec t_sub = Vec::LinSpaced(kAxisPts, 0.0, T);
  for (idx_t it = 0; it < t_sub.size(); ++it) {
    const bool ok = g.dim == 1 ? lattice_quotients_d1(g, t_sub[it], tol, r)
                               : line_quotients(g, t_sub[it], tol, r);
    if (!ok) return;
  }
}

}  // namespace

ValidationReport validate_spec(const ProblemSpec& spec) {
  ValidationReport r;

  if (!(spec.horizon_T > 0.0) || !std::isfinite(spec.horizon_T))
    add(r, ViolationKind::structural, "horizon_T must be positive",
        at("T=", spec.horizon_T));
  if (spec.brownian_dim_d < 1)
    add(r, ViolationKind::structural, "brownian_dim_d must be >= 1",
        at("d=", spec.brownian_dim_d));
  if (spec.driver.dim != spec.brownian_dim_d)
    add(r, ViolationKind::structural, "driver dimension mismatch",
        at("driver.dim=", spec.driver.dim, ", d=", spec.brownian_dim_d));
  if (!(spec.driver.lipschitz >= 0.0) || !std::isfinite(spec.driver.lipschitz))
    add(r, ViolationKind::structural, "K_g must be a finite nonnegative real");
  if (!(spec.driver.chi >= 0.0) || !std::isfinite(spec.driver.chi))
    add(r, ViolationKind::structural, "chi_g must be a finite nonnegative real");

  if (spec.market) {
    if (!(spec.market->s0 > 0.0))
      add(r, ViolationKind::structural, "market s0 must be positive");
    if (!(spec.market->sigma > 0.0))
      add(r, ViolationKind::structural, "market sigma must be positive");
  }
  if (spec.claim.kind != ClaimKind::constant && !spec.market)
    add(r, ViolationKind::structural,
        "claim reads the asset but no market is configured");
  if (spec.claim.kind == ClaimKind::constant &&
      !(spec.claim.level >= 0.0 && spec.claim.level <= 1.0))
    add(r, ViolationKind::structural, "claim level outside [0,1]",
        at("level=", spec.claim.level));
  if (spec.claim.kind == ClaimKind::call && !(spec.claim.cap > 0.0))
    add(r, ViolationKind::structural, "call cap must be positive");

  check_grids(spec, r);
  if (r.has_structural()) return r;  // assumption checks need sound shapes

  check_inverse_pair(spec.loss, r);
  check_driver(spec, r);
  return r;
}

}  // namespace weakbsde

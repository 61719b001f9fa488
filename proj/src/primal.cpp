#include "weakbsde/primal.hpp"

#include "weakbsde/math.hpp"
#include "weakbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace weakbsde {

PolicyFamily PolicyFamily::constant(Vec init) {
  PolicyFamily f;
  f.kind = PolicyFamilyKind::constant;
  f.init = std::move(init);
  return f;
}

PolicyFamily PolicyFamily::feedback(idx_t t_points, idx_t m_points) {
  if (t_points < 1 || m_points < 2)
    throw std::invalid_argument("PolicyFamily::feedback: lattice too small");
  PolicyFamily f;
  f.kind = PolicyFamilyKind::feedback_grid;
  f.t_points = t_points;
  f.m_points = m_points;
  return f;
}

PolicyFamily PolicyFamily::terminal_profile() {
  PolicyFamily f;
  f.kind = PolicyFamilyKind::terminal_profile;
  return f;
}

double delta_modulus(double mu1, double mu2) {
  if (!(mu1 >= 0.0 && mu1 <= 1.0 && mu2 >= 0.0 && mu2 <= 1.0))
    throw std::invalid_argument("delta_modulus: arguments must lie in [0,1]");
  if (mu1 < mu2) return 1.0 - mu1 / mu2;
  if (mu1 > mu2) return (mu1 - mu2) / (1.0 - mu2);
  return 0.0;
}

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Policy objective E^g[Phi(M_T^alpha)] on the shared ensemble: evolve the
// control, map the terminal state through the loss (times the claim
// factor when tagged), and solve the BSDE with the matching backend.
struct PolicyObjective {
  const ProblemSpec& spec;
  const PathEnsemble& e;
  int* evals;

  std::pair<double, double> operator()(const ControlPolicy& pol,
                                       double m) const {
    const Mat path = evolve_control(e, m, pol);
    Vec term = spec.loss.phi_many(path.col(e.n_steps));
    if (spec.loss.random_factor()) term *= e.claim;
    BsdeSolution sol =
        spec.driver.is_linear()
            ? gexp_linear(e, term, spec.driver)
            : gexp_lsmc(e, term, spec.driver, BasisConfig{2, true, true},
                        &path);
    ++*evals;
    return {sol.y0, sol.se};
  }
};

// Terminal-profile machinery for linear drivers. The deflator is policy
// independent, so its terminal slice and the source-term integral are
// computed once and every profile evaluation is a single pass of
// conjugate-gradient lookups.
struct ProfileEvaluator {
  const ProblemSpec& spec;
  const PathEnsemble& e;
  ConjugateLoss conj;
  Vec l_T;
  Vec g0_int;  // per-path trapezoid of L_s g(s,0,0) ds
  bool rf;

  ProfileEvaluator(const ProblemSpec& s, const PathEnsemble& ens)
      : spec(s), e(ens), conj(fenchel_loss(s.loss)) {
    const Driver& g = s.driver;
    if (!g.is_linear())
      throw std::invalid_argument(
          "terminal profile: driver must be zero or linear");
    const Mat defl =
        evolve_deflator(e, DeflatorControl::constant(g.a_y, g.a_z),
                        std::max(g.lipschitz, 1e-300));
    l_T = defl.col(e.n_steps);
    g0_int = Vec::Zero(e.n_paths);
    if (g.g0) {
      for (idx_t k = 0; k <= e.n_steps; ++k) {
        const double w =
            (k == 0 || k == e.n_steps) ? 0.5 * e.dt : e.dt;
        g0_int += w * g.g0_at(e.times[k]) * defl.col(k);
      }
    }
    rf = s.loss.random_factor();
  }

  ProfilePoint finish(double l, const Vec& mt, const Vec& term) const {
    const Vec contrib = l_T * term + g0_int;
    const MeanErr me = batch_mean(contrib);
    ProfilePoint p;
    p.l = l;
    p.m_realized = pairwise_mean(mt);
    p.y0 = me.mean;
    p.se = me.se;
    return p;
  }

  ProfilePoint at(double l) const {
    Vec mt(e.n_paths), term(e.n_paths);
    for (idx_t i = 0; i < e.n_paths; ++i) {
      const double u = l / l_T[i];
      if (rf) {
        mt[i] = conj.gradient_scaled(u, e.claim[i]);
        term[i] = spec.loss.phi(mt[i]) * e.claim[i];
      } else {
        mt[i] = conj.gradient(u);
        term[i] = spec.loss.phi(mt[i]);
      }
    }
    return finish(l, mt, term);
  }

  ProfilePoint at_constant(double level) const {
    Vec mt = Vec::Constant(e.n_paths, level);
    Vec term = Vec::Constant(e.n_paths, spec.loss.phi(level));
    if (rf) term *= e.claim;
    return finish(level > 0.5 ? std::numeric_limits<double>::infinity() : 0.0,
                  mt, term);
  }
};

// Exact chord between two profile points: the mixture hitting the mean m
// is attainable (the value is linear along a hull edge, and the bracket
// has collapsed to one edge after the bisection).
PrimalResult chord_result(const ProfilePoint& a, const ProfilePoint& b,
                          double m, double l_star, int evals) {
  double w = 0.0;
  if (b.m_realized > a.m_realized)
    w = std::clamp((m - a.m_realized) / (b.m_realized - a.m_realized), 0.0,
                   1.0);
  PrimalResult r;
  r.family = PolicyFamilyKind::terminal_profile;
  r.y0 = (1.0 - w) * a.y0 + w * b.y0;
  r.se = (1.0 - w) * a.se + w * b.se;
  r.l_star = l_star;
  r.evals_used = evals;
  return r;
}

PrimalResult profile_solve(const ProfileEvaluator& pe, double m) {
  int evals = 0;
  const ProfilePoint p0 = pe.at_constant(0.0);
  ++evals;
  if (m <= 0.0) return chord_result(p0, p0, 0.0, 0.0, evals);
  const ProfilePoint p1 = pe.at_constant(1.0);
  ++evals;
  if (m >= 1.0) return chord_result(p1, p1, 1.0, p1.l, evals);

  // The realized mean is non-decreasing in l; bisect log10 l on [-8, 8]
  // with the constant profiles as outer anchors.
  ProfilePoint lo = pe.at(1e-8);
  ++evals;
  if (m <= lo.m_realized) return chord_result(p0, lo, m, lo.l, evals);
  ProfilePoint hi = pe.at(1e8);
  ++evals;
  if (m >= hi.m_realized) return chord_result(hi, p1, m, hi.l, evals);

  double la = -8.0, lb = 8.0;
  for (int it = 0; it < 60; ++it) {
    const double lc = 0.5 * (la + lb);
    const ProfilePoint pc = pe.at(std::pow(10.0, lc));
    ++evals;
    if (pc.m_realized >= m) {
      lb = lc;
      hi = pc;
    } else {
      la = lc;
      lo = pc;
    }
  }
  return chord_result(lo, hi, m, std::pow(10.0, 0.5 * (la + lb)), evals);
}

PrimalResult constant_search(const ProblemSpec& spec, double m,
                             const PolicyFamily& family,
                             const OptimizerBudget& budget,
                             const PathEnsemble& e) {
  int evals = 0;
  PolicyObjective obj{spec, e, &evals};
  const int d = e.dim;

  auto [y_null, se_null] = obj(ControlPolicy::zero(d), m);
  PrimalResult best;
  best.family = PolicyFamilyKind::constant;
  best.y0 = y_null;
  best.se = se_null;
  best.best_constant = Vec::Zero(d);
  if (m <= 0.0 || m >= 1.0) {  // boundary: the state is absorbed at once
    best.evals_used = evals;
    return best;
  }

  Vec best_x = Vec::Zero(d);
  double best_f = y_null;
  double best_se = se_null;
  auto f = [&](const Vec& alpha) {
    auto [y, se] = obj(ControlPolicy::constant(alpha), m);
    if (y < best_f) best_se = se;
    return y;
  };

  int restart = 0;
  while (evals < budget.evals && restart < 64) {
    Vec start(d);
    if (restart == 0 && family.init.size() == d) {
      start = family.init;
    } else {
      for (int c = 0; c < d; ++c)
        start[c] = 2.0 * uniform_at(budget.seed, kStreamPolicy,
                                    std::uint64_t(restart), 0,
                                    std::uint32_t(c)) -
                   1.0;
    }
    const int cap = std::min(budget.evals, evals + 60 + 20 * d);
    nelder_mead(f, start, 0.25, cap, &evals, best_x, best_f);
    ++restart;
  }

  if (best_f < best.y0) {
    best.y0 = best_f;
    best.se = best_se;
    best.best_constant = best_x;
  }
  best.evals_used = evals;
  best.budget_exhausted = evals >= budget.evals;
  return best;
}

PrimalResult feedback_search(const ProblemSpec& spec, double m,
                             const PolicyFamily& family,
                             const OptimizerBudget& budget,
                             const PathEnsemble& e) {
  int evals = 0;
  PolicyObjective obj{spec, e, &evals};
  const int d = e.dim;
  const Vec t_nodes = Vec::LinSpaced(family.t_points, 0.0, spec.horizon_T);
  const Vec m_nodes = Vec::LinSpaced(family.m_points, 0.0, 1.0);
  std::vector<Mat> grids(size_t(d),
                         Mat::Zero(family.t_points, family.m_points));

  auto [y_null, se_null] = obj(ControlPolicy::zero(d), m);
  PrimalResult best;
  best.family = PolicyFamilyKind::feedback_grid;
  best.y0 = y_null;  // zero lattice is the null control
  best.se = se_null;
  if (m <= 0.0 || m >= 1.0) {
    best.evals_used = evals;
    return best;
  }

  for (int sweep = 0; sweep < budget.sweeps; ++sweep) {
    const double h = 0.5 / double(1 << sweep);
    for (int c = 0; c < d; ++c) {
      for (idx_t it = 0; it < family.t_points; ++it) {
        for (idx_t im = 0; im < family.m_points; ++im) {
          const double base = grids[size_t(c)](it, im);
          double pick = base, pick_y = best.y0, pick_se = best.se;
          for (const double cand : {base + h, base - h}) {
            grids[size_t(c)](it, im) = cand;
            auto [y, se] =
                obj(ControlPolicy::feedback(t_nodes, m_nodes, grids), m);
            if (y < pick_y) {
              pick = cand;
              pick_y = y;
              pick_se = se;
            }
          }
          grids[size_t(c)](it, im) = pick;
          best.y0 = pick_y;
          best.se = pick_se;
        }
      }
    }
  }
  best.evals_used = evals;
  return best;
}

}  // namespace

PrimalResult primal_value(const ProblemSpec& spec, double m,
                          const PolicyFamily& family,
                          const OptimizerBudget& budget,
                          const PathEnsemble& e) {
  require(std::isfinite(m) && m >= 0.0 && m <= 1.0,
          "primal_value: m must lie in [0, 1]");
  PrimalResult r;
  switch (family.kind) {
    case PolicyFamilyKind::terminal_profile: {
      const ProfileEvaluator pe(spec, e);
      r = profile_solve(pe, m);
      break;
    }
    case PolicyFamilyKind::constant:
      r = constant_search(spec, m, family, budget, e);
      break;
    case PolicyFamilyKind::feedback_grid:
      r = feedback_search(spec, m, family, budget, e);
      break;
  }
  r.ensemble_seed = e.seed;
  r.ensemble_paths = e.n_paths;
  return r;
}

ProfilePoint terminal_profile_policy(const ProblemSpec& spec, double l,
                                     const PathEnsemble& e) {
  require(std::isfinite(l) && l > 0.0,
          "terminal_profile_policy: l must be positive");
  const ProfileEvaluator pe(spec, e);
  return pe.at(l);
}

ValueCurve value_curve(const ProblemSpec& spec, const Vec& m_grid,
                       CurveMethod method, const OptimizerBudget& budget,
                       const PathEnsemble& e) {
  require(m_grid.size() >= 1, "value_curve: empty m grid");
  for (idx_t i = 0; i < m_grid.size(); ++i) {
    require(m_grid[i] >= 0.0 && m_grid[i] <= 1.0,
            "value_curve: grid must lie in [0, 1]");
    if (i > 0)
      require(m_grid[i] > m_grid[i - 1],
              "value_curve: grid must be strictly increasing");
  }
  const bool want_profile = method != CurveMethod::policy;
  const bool want_policy = method != CurveMethod::profile;
  if (want_profile && !spec.driver.is_linear())
    throw std::invalid_argument(
        "value_curve: profile method needs a zero or linear driver");

  ValueCurve out;
  out.points.resize(size_t(m_grid.size()));
  for (idx_t i = 0; i < m_grid.size(); ++i) {
    out.points[size_t(i)].m = m_grid[i];
    out.points[size_t(i)].y0 = std::numeric_limits<double>::infinity();
  }

  if (want_profile) {
    const ProfileEvaluator pe(spec, e);
    std::vector<ProfilePoint> cloud;
    cloud.reserve(430);
    cloud.push_back(pe.at_constant(0.0));
    cloud.push_back(pe.at_constant(1.0));
    for (int j = 0; j <= 400; ++j)
      cloud.push_back(pe.at(std::pow(10.0, -3.0 + 6.0 * j / 400.0)));
    for (int j = 1; j <= 12; ++j) {
      cloud.push_back(pe.at(std::pow(10.0, -3.0 - 0.25 * j)));
      cloud.push_back(pe.at(std::pow(10.0, 3.0 + 0.25 * j)));
    }
    std::sort(cloud.begin(), cloud.end(),
              [](const ProfilePoint& a, const ProfilePoint& b) {
                if (a.m_realized != b.m_realized)
                  return a.m_realized < b.m_realized;
                return a.y0 < b.y0;
              });
    // lower envelope: keep the cheapest point per realized mean
    std::vector<ProfilePoint> env;
    env.reserve(cloud.size());
    for (const ProfilePoint& p : cloud) {
      if (!env.empty() && p.m_realized <= env.back().m_realized + 1e-15)
        continue;
      env.push_back(p);
    }
    for (idx_t i = 0; i < m_grid.size(); ++i) {
      const double m = m_grid[i];
      size_t hi = 0;
      while (hi + 1 < env.size() && env[hi].m_realized < m) ++hi;
      const size_t lo = hi > 0 ? hi - 1 : 0;
      const ProfilePoint& a = env[lo];
      const ProfilePoint& b = env[hi];
      double w = 0.0;
      if (b.m_realized > a.m_realized)
        w = std::clamp((m - a.m_realized) / (b.m_realized - a.m_realized),
                       0.0, 1.0);
      CurvePoint& cp = out.points[size_t(i)];
      const double y = (1.0 - w) * a.y0 + w * b.y0;
      if (y < cp.y0) {
        cp.y0 = y;
        cp.se = (1.0 - w) * a.se + w * b.se;
        cp.method = PolicyFamilyKind::terminal_profile;
      }
    }
  }

  if (want_policy) {
    for (idx_t i = 0; i < m_grid.size(); ++i) {
      const PrimalResult r = primal_value(
          spec, m_grid[i], PolicyFamily::constant(), budget, e);
      CurvePoint& cp = out.points[size_t(i)];
      if (r.y0 < cp.y0) {
        cp.y0 = r.y0;
        cp.se = r.se;
        cp.method = PolicyFamilyKind::constant;
      }
    }
  }

  for (size_t i = 0; i + 1 < out.points.size(); ++i)
    out.monotonicity_defect =
        std::max(out.monotonicity_defect,
                 out.points[i].y0 - out.points[i + 1].y0);
  for (size_t i = 1; i + 1 < out.points.size(); ++i) {
    const CurvePoint& a = out.points[i - 1];
    const CurvePoint& b = out.points[i];
    const CurvePoint& c = out.points[i + 1];
    const double w = (c.m - b.m) / (c.m - a.m);
    const double chord = w * a.y0 + (1.0 - w) * c.y0;
    out.convexity_defect = std::max(out.convexity_defect, b.y0 - chord);
  }
  out.monotonicity_defect = std::max(out.monotonicity_defect, 0.0);
  out.convexity_defect = std::max(out.convexity_defect, 0.0);
  return out;
}

namespace {

// Leading [0, t_k] slice of an ensemble, sharing path indices (and hence
// increments) with the parent; the claim channel is reset to 1 because
// the sliced horizon ends before the claim pays.
PathEnsemble slice_front(const PathEnsemble& e, idx_t k) {
  PathEnsemble s;
  s.n_paths = e.n_paths;
  s.n_steps = k;
  s.dim = e.dim;
  s.horizon = e.times[k];
  s.dt = e.dt;
  s.seed = e.seed;
  s.threads = e.threads;
  s.times = e.times.head(k + 1);
  s.dw.reserve(e.dw.size());
  for (const Mat& c : e.dw) s.dw.push_back(c.leftCols(k));
  if (e.has_asset()) s.asset = e.asset.leftCols(k + 1);
  s.claim = Vec::Ones(e.n_paths);
  return s;
}

}  // namespace

DppReport check_dpp(const ProblemSpec& spec, double m, double t_mid,
                    idx_t resolution, int n_policies, const PathEnsemble& e) {
  require(spec.driver.is_linear(),
          "check_dpp: driver must be zero or linear");
  require(!spec.loss.random_factor(),
          "check_dpp: terminal map must be deterministic");
  require(t_mid > 0.0 && t_mid < spec.horizon_T,
          "check_dpp: t_mid must lie inside (0, T)");
  require(resolution >= 3, "check_dpp: resolution must be >= 3");
  require(n_policies >= 0, "check_dpp: n_policies must be >= 0");
  require(std::isfinite(m) && m >= 0.0 && m <= 1.0,
          "check_dpp: m must lie in [0, 1]");

  const idx_t k_mid = std::clamp<idx_t>(
      idx_t(std::lround(t_mid / e.dt)), 1, e.n_steps - 1);

  DppReport rep;
  rep.t_mid = e.times[k_mid];
  rep.n_policies = n_policies;

  const ProfileEvaluator pe_full(spec, e);
  const PrimalResult lhs = profile_solve(pe_full, m);
  rep.lhs = lhs.y0;
  rep.lhs_se = lhs.se;

  // Inner curve on [t_mid, T]; the instances are time-homogeneous, so the
  // tail problem is the same problem with a shorter horizon on a fresh
  // ensemble.
  ProblemSpec inner = spec;
  inner.horizon_T = spec.horizon_T - rep.t_mid;
  inner.m_grid = ProblemSpec::default_m_grid(resolution);
  const PathEnsemble ei =
      generate_paths(inner, e.n_paths, e.n_steps - k_mid,
                     e.seed ^ 0x9E3779B97F4A7C15ull, e.threads);
  const ValueCurve ic = value_curve(inner, inner.m_grid,
                                    CurveMethod::profile, OptimizerBudget{},
                                    ei);

  // The curve becomes the effective terminal loss of the outer problem;
  // Monte Carlo wrinkles are ironed by a running max and clamped to the
  // loss range (the exact curve is monotone with values in [0, 1]).
  Vec vx(resolution), vv(resolution);
  double run = 0.0;
  for (idx_t i = 0; i < resolution; ++i) {
    vx[i] = ic.points[size_t(i)].m;
    run = std::max(run, std::clamp(ic.points[size_t(i)].y0, 0.0, 1.0));
    vv[i] = run;
  }
  ProblemSpec outer = spec;
  outer.horizon_T = rep.t_mid;
  outer.loss = LossMap::from_phi(Knots{vx, vv}, Interp::linear);

  const PathEnsemble eo = slice_front(e, k_mid);
  const ProfileEvaluator pe_out(outer, eo);
  const PrimalResult rhs = profile_solve(pe_out, m);
  rep.rhs = rhs.y0;
  rep.rhs_se = rhs.se;
  rep.gap_abs = std::abs(rep.lhs - rep.rhs);
  rep.gap_rel = rep.gap_abs / std::max(std::abs(rep.lhs), 1e-12);

  // One-sided inequality: every fixed policy, pushed to t_mid and valued
  // through the inner curve, dominates the infimum up to noise.
  rep.one_sided_min = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n_policies; ++j) {
    Vec alpha(e.dim);
    for (int c = 0; c < e.dim; ++c)
      alpha[c] = 2.0 * uniform_at(e.seed, kStreamPolicy, std::uint64_t(j), 0,
                                  std::uint32_t(c)) -
                 1.0;
    const Mat path = evolve_control(eo, m, ControlPolicy::constant(alpha));
    const Vec nested = outer.loss.phi_many(path.col(k_mid));
    const BsdeSolution sol = gexp_linear(eo, nested, spec.driver);
    const double margin = sol.y0 - rep.lhs;
    if (margin < rep.one_sided_min) {
      rep.one_sided_min = margin;
      rep.one_sided_se = std::sqrt(sol.se * sol.se + rep.lhs_se * rep.lhs_se);
    }
  }
  if (n_policies == 0) {
    rep.one_sided_min = 0.0;
    rep.one_sided_se = 0.0;
  }
  return rep;
}

std::vector<ContinuityRow> continuity_modulus(const ProblemSpec& spec,
                                              double m_center,
                                              const Vec& deltas,
                                              const PathEnsemble& e) {
  require(deltas.size() >= 1, "continuity_modulus: at least one delta");
  double dmax = 0.0;
  for (idx_t j = 0; j < deltas.size(); ++j) {
    require(std::isfinite(deltas[j]) && deltas[j] >= 0.0,
            "continuity_modulus: deltas must be non-negative");
    dmax = std::max(dmax, deltas[j]);
  }
  require(m_center - dmax >= 0.0 && m_center + dmax <= 1.0,
          "continuity_modulus: m_center +- delta must stay inside [0, 1]");

  const OptimizerBudget budget;
  auto value_at = [&](double m) {
    if (spec.driver.is_linear()) {
      const ProfileEvaluator pe(spec, e);
      return profile_solve(pe, m).y0;
    }
    return primal_value(spec, m, PolicyFamily::constant(), budget, e).y0;
  };

  const double y_c = value_at(m_center);
  std::vector<ContinuityRow> rows;
  rows.reserve(size_t(deltas.size()));
  for (idx_t j = 0; j < deltas.size(); ++j) {
    const double d = deltas[j];
    ContinuityRow row;
    row.delta = d;
    row.err_minus = std::abs(value_at(m_center - d) - y_c);
    row.err_plus = std::abs(value_at(m_center + d) - y_c);
    row.delta_minus = delta_modulus(m_center - d, m_center) +
                      delta_modulus(m_center, m_center - d);
    row.delta_plus = delta_modulus(m_center + d, m_center) +
                     delta_modulus(m_center, m_center + d);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace weakbsde

#pragma once

#include "weakbsde/control.hpp"
#include "weakbsde/gexpect.hpp"
#include "weakbsde/transforms.hpp"

#include <cstdint>
#include <vector>

namespace weakbsde {

enum class PolicyFamilyKind { constant, feedback_grid, terminal_profile };

/// Finite-dimensional policy family over which the infimum is searched.
/// Every member passes through the admissibility clamp of evolve_control;
/// the null control belongs to each family, so the no-control value is
/// always an upper bound for the incumbent.
struct PolicyFamily {
  PolicyFamilyKind kind = PolicyFamilyKind::terminal_profile;
  Vec init;              // constant family: starting point (default zeros)
  idx_t t_points = 5;    // feedback lattice shape
  idx_t m_points = 5;

  static PolicyFamily constant(Vec init = Vec());
  static PolicyFamily feedback(idx_t t_points = 5, idx_t m_points = 5);
  static PolicyFamily terminal_profile();
};

/// Derivative-free search budgets, fixed for reproducibility.
struct OptimizerBudget {
  int evals = 400;          // objective evaluations per m (constant/profile)
  int sweeps = 5;           // coordinate-descent sweeps (feedback_grid)
  std::uint64_t seed = 1;   // restart draws (kStreamPolicy)
};

struct PrimalResult {
  double y0 = 0.0;
  double se = 0.0;
  PolicyFamilyKind family = PolicyFamilyKind::terminal_profile;
  double l_star = 0.0;        // profile family: multiplier at the match
  Vec best_constant;          // constant family incumbent
  int evals_used = 0;
  bool budget_exhausted = false;  // stopped by the budget, incumbent returned
  std::uint64_t ensemble_seed = 0;  // generating ensemble, checked by foc_residuals
  idx_t ensemble_paths = 0;
};

/// Minimizes E^g[Phi(M_T^alpha)] over the family: Nelder-Mead restarts
/// for the constant family, coordinate descent on the lattice values for
/// feedback_grid, and a monotone bisection in log l for the terminal
/// profile (the realized mean is non-decreasing in l; the final bracket
/// is combined by an exact chord, which is the attained mixture value).
/// Never claims global optimality; the incumbent is always <= the
/// no-control value on the same ensemble. m in {0,1} admits only the
/// null control and is evaluated directly.
PrimalResult primal_value(const ProblemSpec& spec, double m,
                          const PolicyFamily& family,
                          const OptimizerBudget& budget,
                          const PathEnsemble& e);

struct ProfilePoint {
  double l = 0.0;
  double m_realized = 0.0;
  double y0 = 0.0;
  double se = 0.0;
};

/// Candidate optimal terminal profile for linear drivers: path-wise
/// M_T = grad tilde_phi(l / L_T) (scaled by the claim factor when the
/// loss carries one), reported with its realized mean and the g-value of
/// Phi(M_T). One point of the value curve without any policy search.
/// Throws std::invalid_argument for non-linear drivers.
ProfilePoint terminal_profile_policy(const ProblemSpec& spec, double l,
                                     const PathEnsemble& e);

enum class CurveMethod { policy, profile, both };

struct CurvePoint {
  double m = 0.0;
  double y0 = 0.0;
  double se = 0.0;
  PolicyFamilyKind method = PolicyFamilyKind::terminal_profile;
};

struct ValueCurve {
  std::vector<CurvePoint> points;    // sorted by m
  /// Max over interior grid points of the excess of Y0 above the chord
  /// of its neighbours (the sign-normalized negative second difference).
  double convexity_defect = 0.0;
  /// Max over adjacent pairs of (Y0(m_i) - Y0(m_{i+1}))^+.
  double monotonicity_defect = 0.0;
};

/// One entry per grid m. Method profile sweeps l over a fixed log grid,
/// sorts the (m_realized, Y0) cloud, takes its lower envelope and
/// interpolates to the grid; the synthetic endpoints M == 0 and M == 1
/// anchor the sweep at m = 0 and m = 1. Method policy runs primal_value
/// with the constant family per grid point; both takes the pointwise
/// minimum. Grid endpoints m in {0,1} are always the null-control
/// values.
ValueCurve value_curve(const ProblemSpec& spec, const Vec& m_grid,
                       CurveMethod method, const OptimizerBudget& budget,
                       const PathEnsemble& e);

struct DppReport {
  double t_mid = 0.0;        // snapped to the ensemble time lattice
  double lhs = 0.0;          // direct Y0(m)
  double lhs_se = 0.0;
  double rhs = 0.0;          // nested: inner curve as effective loss
  double rhs_se = 0.0;
  double gap_abs = 0.0;
  double gap_rel = 0.0;
  /// min over sampled fixed policies of (nested value - lhs); the
  /// one-sided inequality requires this >= -3 stderr.
  double one_sided_min = 0.0;
  double one_sided_se = 0.0;
  int n_policies = 0;
};

/// Two-stage consistency check for time-homogeneous linear instances:
/// the inner curve m' -> Y_{t_mid}(m') is computed on a fresh ensemble
/// over [t_mid, T] (resolution grid points, piecewise-linear in m'),
/// ironed monotone, and used as the effective terminal loss of the
/// outer problem on [0, t_mid] (the leading slice of the ensemble).
/// Also evaluates the nested value of n_policies seeded constant
/// policies for the one-sided inequality. Requires a linear driver and
/// a deterministic terminal map (no claim factor).
DppReport check_dpp(const ProblemSpec& spec, double m, double t_mid,
                    idx_t resolution, int n_policies, const PathEnsemble& e);

/// Continuity modulus of Prop-style two-sided perturbations,
/// Delta(mu1, mu2) = (1 - mu1/mu2) 1_{mu1 < mu2}
///                 + (mu1 - mu2)/(1 - mu2) 1_{mu1 > mu2}.
double delta_modulus(double mu1, double mu2);

struct ContinuityRow {
  double delta = 0.0;
  double err_minus = 0.0;    // |Y0(m - delta) - Y0(m)|
  double err_plus = 0.0;     // |Y0(m + delta) - Y0(m)|
  double delta_minus = 0.0;  // Delta(m-delta, m) + Delta(m, m-delta)
  double delta_plus = 0.0;   // Delta(m+delta, m) + Delta(m, m+delta)
};

/// Empirical modulus around m_center with the theoretical Delta values
/// alongside. Deltas must keep m_center +- delta inside [0, 1].
std::vector<ContinuityRow> continuity_modulus(const ProblemSpec& spec,
                                              double m_center,
                                              const Vec& deltas,
                                              const PathEnsemble& e);

}  // namespace weakbsde

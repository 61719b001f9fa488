#pragma once

#include "weakbsde/control.hpp"
#include "weakbsde/primal.hpp"
#include "weakbsde/transforms.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace weakbsde {

struct FocResiduals {
  double res_driver = 0.0;    // 0 identically for zero/linear drivers
  double res_terminal = 0.0;  // Fenchel-Young defect at the profile
};

struct DualResult {
  double l_star = 1.0;
  double nu_star = 0.0;   // dual control at the incumbent (constant)
  Vec theta_star;
  double x0_at_l = 0.0;   // X0(l_star)
  double x0_se = 0.0;
  double dual_value = 0.0;        // l_star m - X0(l_star)
  double gap_vs_primal = 0.0;     // |primal - dual| when a primal is given
  FocResiduals foc;               // filled when a primal is given
  bool bracket_flag = false;      // sup sat on the bracket boundary
  double concavity_defect = 0.0;  // max chord excess among recorded evals
  /// Every (l, lm - X0(l)) the search evaluated, for the weak-duality
  /// and concavity checks.
  std::vector<std::pair<double, double>> evals;
  std::uint64_t ensemble_seed = 0;
  idx_t ensemble_paths = 0;
};

/// Path-wise dual functional
///   X0^{l,lam} = E[ int_0^T L_s gt(s, lam_s) ds + L_T tphi(l / L_T) ]
/// with the evolve_deflator channel, the conjugate terminal map (claim
/// scaled when the loss carries a factor), and trapezoid time weights.
/// For zero/linear drivers dom gt is the singleton {(A_Y, A_Z)} and lam
/// must match it; elsewhere lam must stay in the dual domain box. Both
/// violations throw std::invalid_argument. Returns (value, stderr).
std::pair<double, double> dual_functional(const ProblemSpec& spec, double l,
                                          const DeflatorControl& lam,
                                          const PathEnsemble& e);

struct DualSearch {
  int grid_points = 33;     // concavity/bracketing grid on log l
  int golden_iters = 60;    // golden-section refinement
  int parabolic_iters = 5;  // parabolic polish
  int nm_evals = 200;       // inner Nelder-Mead budget (non-linear only)
  double l_min = 1e-4;      // multiplier bracket, log-spaced
  double l_max = 1e4;
};

/// sup_{l > 0} (lm - X0(l)) over the bracket [l_min, l_max] on log scale:
/// a fixed grid locates the maximum, golden-section sharpens it, and a
/// few parabolic steps polish the incumbent. Linear drivers skip the
/// inner infimum (singleton domain); non-linear drivers alternate the
/// l-search with a Nelder-Mead over constant (nu, theta) controls, a
/// documented lower-fidelity bound. A maximum on the bracket boundary
/// is returned as the incumbent with bracket_flag set. When `primal` is
/// given, the gap and the first-order residuals are filled in.
DualResult dual_value(const ProblemSpec& spec, double m,
                      const DualSearch& search, const PathEnsemble& e,
                      const PrimalResult* primal = nullptr);

/// First-order optimality defects at the dual incumbent:
///   res_driver: time-and-path RMS of g(t,Y,Z) - [nu Y + theta.Z - gt];
///               identically zero for zero/linear drivers (algebraic).
///   res_terminal: path RMS of Phi(M_T) - [M_T l/L_T - tphi(l/L_T)] at
///               the profile M_T = grad tphi(l_star / L_T).
/// Both are reported relative to the primal Y0 scale. Throws
/// std::invalid_argument when the two results were not computed on the
/// ensemble `e` (seed or path-count mismatch).
FocResiduals foc_residuals(const ProblemSpec& spec,
                           const PrimalResult& primal, const DualResult& dual,
                           const PathEnsemble& e);

}  // namespace weakbsde

#pragma once

#include "weakbsde/control.hpp"
#include "weakbsde/ensemble.hpp"

#include <vector>

namespace weakbsde {

enum class GexpBackend { lsmc, linear_closed_form, tree };

struct BsdeSolution {
  double y0 = 0.0;
  double se = 0.0;  // batch-means error of Y0; 0 for the tree backend
  GexpBackend backend = GexpBackend::lsmc;
  bool ridge_used = false;  // regression fell back to ridge, never silent
  Mat y;                    // per-path per-step values (lsmc only)
  std::vector<Mat> z;       // per-component regression estimates (lsmc only)
};

/// Regression basis: total-degree-`degree` polynomials in the named
/// feature channels (log asset price, control martingale M). Channels
/// that are unavailable or degenerate on a step drop out, leaving at
/// least the intercept, so a zero driver reduces to the sample mean.
struct BasisConfig {
  int degree = 2;
  bool use_asset = true;
  bool use_m = false;
};

/// Backward Euler, implicit in Y (fixed point, <= 20 iterations, tol
/// 1e-10 per step), Z by regression of Y_{k+1} dW / dt on the basis.
/// The t=0 slice is deterministic, so its conditional means are plain
/// cross-path averages. `m_channel` is required when basis.use_m.
BsdeSolution gexp_lsmc(const PathEnsemble& e,
                       const Eigen::Ref<const Vec>& terminal, const Driver& g,
                       const BasisConfig& basis, const Mat* m_channel = nullptr);

/// Linear closed form Y0 = E[L_T xi + int_0^T L_s g(s,0,0) ds] with the
/// exact exponential deflator for lambda = (A_Y, A_Z).
BsdeSolution gexp_linear(const PathEnsemble& e,
                         const Eigen::Ref<const Vec>& terminal,
                         const Driver& g);

/// Recombining binomial lattice: depth steps of size dt, up probability
/// p_up, increments sized so each branch pair has mean zero and
/// variance dt. Node j at level k counts up moves.
struct TreeSpec {
  int depth = 1;
  double p_up = 0.5;
  double dt = 1.0;

  double up() const;    // up increment of dW
  double down() const;  // down increment
};

/// Exact backward recursion on the lattice; implicit in Y (<= 100
/// iterations; contraction requires dt K_g < 1, asserted). Deterministic,
/// se = 0. `terminal` holds the depth+1 terminal node values.
BsdeSolution gexp_tree(const TreeSpec& tree,
                       const Eigen::Ref<const Vec>& terminal, const Driver& g);

}  // namespace weakbsde

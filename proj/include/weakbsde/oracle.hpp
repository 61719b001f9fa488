#pragma once

#include "weakbsde/ensemble.hpp"
#include "weakbsde/loss_map.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace weakbsde {

/// Terminal-map normalization of the quantile-hedging oracle. Only the
/// cash-digital form hat_phi(m) = m is supported: it is the regime with
/// a closed form, and the cross-checks must not depend on the solver.
enum class NpPhiKind { linear_envelope };

/// Exact value of inf { E^Q[M_T] : M_T in [0,1], E^P[M_T] = m } for the
/// driver g = -theta . z on [0, T], where dQ/dP = exp(-theta W_T -
/// theta^2 T / 2). By the Neyman-Pearson lemma the optimal profile is
/// M_T = 1 on the event where the density is smallest ({W_T > b} for
/// theta > 0) with P-mass m, which evaluates to
///   Y0(m) = N(N^{-1}(m) - |theta| sqrt(T)).
/// Endpoints are exact: m <= 0 -> 0, m >= 1 -> 1; theta = 0 -> m.
double np_quantile_price(double theta, double horizon, double m,
                         NpPhiKind kind = NpPhiKind::linear_envelope);

/// Independent cross-check of the closed form: composite-Simpson
/// quadrature of the Gaussian integral E[L_T 1_{W_T > b}] with the
/// default 1e6+1 nodes. Shares only norm_ppf (for the threshold b) with
/// the closed form, never norm_cdf.
double np_quantile_price_quad(double theta, double horizon, double m,
                              idx_t nodes = 1000001);

/// Finite-tree analogue of the primal problem: a non-recombining binary
/// tree of the given depth with per-node branch probabilities, objective
/// weights q per terminal node (for linear drivers, the exact deflated
/// measure q_i = p_i L_i), a terminal loss map, and the mean constraint
/// level m. Every [0,1]-valued terminal vector with mean m is reachable
/// on a finite tree, so the primal reduces to the convex program
///   min sum_i q_i phi(M_i)  s.t.  sum_i p_i M_i = m, M_i in [0,1].
struct TreeInstance {
  int depth = 1;                 // in [1, 12]
  std::vector<Vec> branch_up;    // level k: 2^k up-probabilities in (0,1)
  Vec q;                         // 2^depth positive objective weights
  LossMap loss = LossMap::linear();
  double m = 0.5;

  idx_t n_leaves() const { return idx_t(1) << depth; }
  /// Terminal probabilities p_i as branch products; positive, sum 1.
  /// Leaf i encodes its moves in binary, bit (depth-1-k) = up at level k.
  Vec terminal_probs() const;
  std::string describe() const;
};

/// Throws std::invalid_argument on a malformed instance (depth range,
/// branch shape, probabilities outside (0,1), non-positive q, m outside
/// [0,1]).
void check_tree_instance(const TreeInstance& inst);

struct TreePrimalResult {
  double value = 0.0;   // exact optimum of the convex program
  Vec profile;          // optimal M, at most one fractional coordinate
  double multiplier = 0.0;  // Lagrange threshold at the crossing event
};

/// Exact solution by the likelihood-ratio sweep: with r_i = q_i / p_i
/// and hull slopes s_k of the terminal map, coordinate i advances from
/// hull vertex k to k+1 at the multiplier threshold r_i s_k. Processing
/// events in increasing threshold order raises the mean monotonically;
/// the event that crosses m is split fractionally. Exact for convex
/// piecewise-linear maps; non-convex maps are taken through their
/// convex envelope (the relaxed program the continuous theory solves).
TreePrimalResult tree_primal_exact(const TreeInstance& inst);

/// Brute-force cross-check for depth <= 4: dynamic programming over the
/// per-coordinate grid {0, 1/50, ..., 1} with the running constraint
/// sum p_i M_i binned at width 2e-4; returns the minimum over final
/// bins within `constraint_tol` (default 1/50) of m. Same convexified
/// objective as tree_primal_exact, independent algorithm.
double tree_primal_brute(const TreeInstance& inst,
                         double constraint_tol = 0.02);

/// Seeded random instance: branch probabilities in [0.2, 0.8], weights
/// q_i = p_i * exp(tilted up-count) mimicking an exact linear-driver
/// deflator, a random convex piecewise-linear terminal map, and m in
/// [0.05, 0.95]. Pure function of (seed, id, depth).
TreeInstance random_tree_instance(std::uint64_t seed, std::uint64_t id,
                                  int depth);

/// One row of the stability table: terminal perturbations of size delta
/// (additive, and random noise bounded by delta) against the Gronwall
/// envelope sqrt(C) delta with C = e^{8 K_g T}.
struct StabilityRow {
  double delta = 0.0;
  double err_additive = 0.0;  // |Y0(xi + delta) - Y0(xi)|
  double err_noise = 0.0;     // |Y0(xi + delta U) - Y0(xi)|, U ~ U[-1,1]
  double envelope = 0.0;      // sqrt(C) delta
};

/// Perturbs the terminal condition of the g-expectation on the given
/// ensemble and reports |Y0 shift| per delta, using the closed form for
/// zero/linear drivers and the regression solver otherwise, with common
/// random numbers across perturbations. Throws std::runtime_error when
/// an error exceeds its envelope, and when a linear driver with
/// deterministic deflator (A_Z = 0) fails the exact response
/// |dY0| = e^{A_Y T} delta to 1e-10. Deltas must be non-negative and
/// non-increasing.
std::vector<StabilityRow> stability_probe(const ProblemSpec& spec,
                                          const Vec& deltas,
                                          const PathEnsemble& e);

}  // namespace weakbsde

#pragma once

#include "weakbsde/driver.hpp"
#include "weakbsde/loss_map.hpp"

#include <vector>

namespace weakbsde {

/// Mixing data of the envelope at a query m: the bracketing contact pair
/// with eps * p_lo + (1 - eps) * p_hi = m, realizing
/// hat_phi(m) = eps * phi(p_lo) + (1 - eps) * phi(p_hi).
struct Mix {
  double p_lo = 0.0;
  double p_hi = 0.0;
  double eps = 1.0;
};

/// Convex envelope hat_phi of phi on [0,1]: the lower convex hull of the
/// knot graph. Exact for step and piecewise-linear inputs, where the knot
/// values are the binding constraints of the minorant.
struct EnvelopeResult {
  Knots hat_phi;                    // hull vertices; the knots of hat_phi
  std::vector<idx_t> contact_set;   // original knot indices with hat == phi

  double value(double m) const;     // hat_phi(m)
  Mix mixing(double m) const;
};

EnvelopeResult convex_envelope(const LossMap& loss);

/// Conjugate tilde_phi(l) = sup_{m in [0,1]} (m l - phi(m)), with the
/// gradient nabla tilde_phi(l) = argmax m (smallest maximizer on ties).
/// Evaluation is exact through the hull vertex list: the sup is attained
/// at the first vertex whose outgoing edge slope is >= l, which also
/// yields the analytic extensions l - phi(1) and -phi(0) beyond the
/// slope range. The l_grid table is the exchange format for CSV output
/// and grid-level checks.
class ConjugateLoss {
 public:
  ConjugateLoss(const LossMap& loss, Vec l_grid);

  double value(double l) const;
  double gradient(double l) const;
  bool tied(double l) const;  // argmax spans a full hull edge

  /// Conjugate of m -> phi(m) * xi for a claim factor xi >= 0:
  /// xi tilde_phi(l / xi), degenerating to l^+ (argmax 1_{l > 0}) at xi=0.
  double value_scaled(double l, double xi) const;
  double gradient_scaled(double l, double xi) const;

  const Vec& l_grid() const { return l_grid_; }
  const Vec& tilde_phi() const { return tilde_; }
  const Vec& grad_grid() const { return grad_; }
  const Vec& hull_m() const { return hull_m_; }
  const Vec& hull_v() const { return hull_v_; }
  const Vec& slopes() const { return slopes_; }

  static Vec default_l_grid(idx_t points = 200);  // log-spaced [1e-4, 1e4]

 private:
  idx_t grad_index(double l) const;

  Vec hull_m_, hull_v_;  // hull vertices, ascending in m
  Vec slopes_;           // edge slopes, non-decreasing, size vertices-1
  Vec l_grid_, tilde_, grad_;
};

ConjugateLoss fenchel_loss(const LossMap& loss, Vec l_grid = {});

/// Driver conjugate g~(t, u, v) = sup_{y,z} (y u + z.v - g(t, y, z)).
/// Linear forms have the singleton domain {(A_Y, A_Z)} where the sup is
/// -g(t,0,0); elsewhere, and everywhere outside [-K_g, K_g]^{d+1},
/// returns +infinity. Opaque convex drivers are handled by a bounded
/// lattice sup over [-10,10]^{1+d} (documented approximation).
double fenchel_driver(const Driver& g, double t,
                      const Eigen::Ref<const Vec>& uv);

}  // namespace weakbsde

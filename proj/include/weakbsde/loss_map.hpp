#pragma once

#include "weakbsde/types.hpp"

#include <string>
#include <vector>

namespace weakbsde {

/// Interpolation rule for a monotone knot sequence.
///  - step: piecewise constant. As a loss map (psi) the step is
///    right-continuous: value u_j holds on [y_j, y_{j+1}). As an inverse
///    (phi) it is left-continuous: value v_j holds on (m_{j-1}, m_j].
///  - linear: continuous piecewise linear.
enum class Interp { step, linear };

/// Monotone knot sequence: x strictly increasing in [0,1] with x.front()=0,
/// x.back()=1; v non-decreasing.
struct Knots {
  Vec x;
  Vec v;
};

enum class LossKind { indicator, power, linear, custom };

/// Left-continuous inverse phi(m) = inf{y : psi(y) >= m} of the interpolant
/// of `psi`, evaluated on `m_grid`. Requires psi to reach 1 at y = 1.
Knots left_inverse(const Knots& psi, Interp interp, const Vec& m_grid);

/// The loss pair (psi, phi) on [0,1]. One side is primary (stored knots);
/// the other is evaluated exactly as its generalized inverse, so the
/// inverse-pair relations phi(psi(y)) <= y and psi(phi(m)) >= m hold at
/// knots by construction up to rounding.
class LossMap {
 public:
  static LossMap indicator();                       // psi(y) = 1_{y>=1}
  static LossMap linear();                          // psi(y) = y
  static LossMap power(double q, idx_t grid_points = 1025);  // psi = 1-(1-y)^q
  static LossMap from_psi(Knots k, Interp interp);
  static LossMap from_phi(Knots k, Interp interp);

  double psi(double y) const;
  double phi(double m) const;
  Vec phi_many(const Eigen::Ref<const Vec>& m) const;

  const Knots& psi_knots() const { return psi_knots_; }
  const Knots& phi_knots() const { return phi_knots_; }
  Interp psi_interp() const { return psi_interp_; }
  Interp phi_interp() const { return phi_interp_; }
  LossKind kind() const { return kind_; }
  double power_q() const { return power_q_; }
  bool phi_is_primary() const { return phi_primary_; }
  std::string describe() const;

  /// Tags the product form Phi(omega, m) = phi(m) * xi(omega), where xi is
  /// the terminal claim factor of the ensemble. Returns a tagged copy so
  /// constructed maps stay immutable.
  bool random_factor() const { return random_factor_; }
  LossMap with_random_factor(bool on = true) const {
    LossMap c = *this;
    c.random_factor_ = on;
    return c;
  }

  /// Canonical m-grid for derived phi knots: uniform lattice joined with
  /// every attained psi value (so steps land on knots).
  static Vec canonical_m_grid(const Knots& psi, idx_t uniform_points = 1025);

 private:
  LossMap() = default;
  void finalize_from_psi();
  void finalize_from_phi();

  Knots psi_knots_, phi_knots_;
  Interp psi_interp_ = Interp::linear, phi_interp_ = Interp::linear;
  LossKind kind_ = LossKind::custom;
  double power_q_ = 1.0;
  bool phi_primary_ = false;
  bool random_factor_ = false;
};

/// Non-throwing structural inspection of a raw knot sequence; one message
/// per defect (shape, finiteness, domain, monotonicity, range). Used by
/// validate_spec to report malformed grids instead of throwing mid-parse.
std::vector<std::string> knot_defects(const Knots& k);

/// Structural check used by the constructors; throws std::invalid_argument
/// with `what` plus the first defect when `k` is not a valid monotone
/// [0,1] knot sequence.
void check_knots(const Knots& k, const char* what);

}  // namespace weakbsde

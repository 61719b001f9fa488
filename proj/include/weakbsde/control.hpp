#pragma once

#include "weakbsde/ensemble.hpp"

#include <functional>

namespace weakbsde {

/// Clamp scale: |alpha| <= min(M, 1-M) / (kClampK * sqrt(dt * d)), so a
/// one-step move stays inside [0,1] out to 4-sigma increments; rarer
/// overshoots are absorbed at the boundary they cross. The cap vanishes
/// at M in {0,1}, which makes absorption automatic.
constexpr double kClampK = 4.0;

/// Martingale control rule alpha(t, features, M). Features carry the log
/// asset price when the ensemble has one (else empty). The evolved M is
/// clamped to admissibility as above; policies never see absorbed states.
struct ControlPolicy {
  std::function<void(double t, const Eigen::Ref<const Vec>& features,
                     double m, Vec& alpha)>
      rule;

  static ControlPolicy zero(int d);
  static ControlPolicy constant(Vec alpha);
  /// Per-component value grids on t_nodes x m_nodes; step interpolation
  /// in t (left node), linear in M.
  static ControlPolicy feedback(Vec t_nodes, Vec m_nodes,
                                std::vector<Mat> alpha_grids);
};

/// Evolves M_0 = m0 under the policy: M_{k+1} = M_k + alpha . dW_k with
/// the admissibility clamp, exact-boundary absorption, no revival.
/// Returns n_paths x (n_steps + 1).
Mat evolve_control(const PathEnsemble& e, double m0,
                   const ControlPolicy& policy);

/// Dual deflator control lambda = (nu, theta), constant or time-feedback.
struct DeflatorControl {
  double nu = 0.0;
  Vec theta;  // size d
  // Optional time dependence; overrides the constants at each node.
  std::function<void(double t, double& nu, Vec& theta)> rule;

  static DeflatorControl constant(double nu, Vec theta);
};

/// Evolves L_0 = 1 on log scale; for constant controls each node is the
/// closed form L_k = exp((nu - |theta|^2/2) t_k + theta . W_k). Controls
/// must stay inside the dual domain box [-k_g, k_g]^{d+1}.
/// Returns n_paths x (n_steps + 1), strictly positive.
Mat evolve_deflator(const PathEnsemble& e, const DeflatorControl& lam,
                    double k_g);

}  // namespace weakbsde

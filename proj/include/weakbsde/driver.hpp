#pragma once

#include "weakbsde/types.hpp"

#include <functional>
#include <string>

namespace weakbsde {

enum class DriverForm { zero, linear, convex_custom };

/// BSDE generator g(t, y, z) with its Lipschitz constant K_g, growth bound
/// chi_g >= sup_t |g(t,0,0)|, and dual-domain description. For the linear
/// form g = g0(t) + a_y * y + a_z . z the dual domain is the singleton
/// {(a_y, a_z)}; for convex_custom it sits inside [-K_g, K_g]^{d+1}.
struct Driver {
  DriverForm form = DriverForm::zero;
  int dim = 1;              // Brownian dimension d
  double a_y = 0.0;         // linear coefficient on y
  Vec a_z;                  // linear coefficients on z (size dim)
  std::function<double(double)> g0;  // inhomogeneous term; empty means 0
  std::function<double(double, double, const Eigen::Ref<const Vec>&)> eval_fn;
  double lipschitz = 0.0;   // K_g
  double chi = 0.0;         // chi_g

  double eval(double t, double y, const Eigen::Ref<const Vec>& z) const;
  double g0_at(double t) const { return g0 ? g0(t) : 0.0; }
  bool is_linear() const { return form != DriverForm::convex_custom; }
  std::string describe() const;

  static Driver zero(int d = 1);
  static Driver linear(double a_y, Vec a_z,
                       std::function<double(double)> g0 = {});
  /// Opaque convex generator; the caller declares K_g and chi_g (validated
  /// by sampling in validate_spec).
  static Driver custom(
      std::function<double(double, double, const Eigen::Ref<const Vec>&)> fn,
      double k_g, double chi_g, int d = 1);
};

}  // namespace weakbsde

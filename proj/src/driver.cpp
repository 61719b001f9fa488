#include "weakbsde/driver.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace weakbsde {

double Driver::eval(double t, double y, const Eigen::Ref<const Vec>& z) const {
  switch (form) {
    case DriverForm::zero:
      return 0.0;
    case DriverForm::linear: {
      double s = g0_at(t) + a_y * y;
      for (idx_t j = 0; j < a_z.size(); ++j) s += a_z[j] * z[j];
      return s;
    }
    case DriverForm::convex_custom:
      return eval_fn(t, y, z);
  }
  return 0.0;
}

std::string Driver::describe() const {
  std::ostringstream os;
  switch (form) {
    case DriverForm::zero: os << "zero"; break;
    case DriverForm::linear:
      os << "linear(a_y=" << a_y << ", a_z=[";
      for (idx_t j = 0; j < a_z.size(); ++j)
        os << (j ? "," : "") << a_z[j];
      os << "])";
      break;
    case DriverForm::convex_custom: os << "convex_custom"; break;
  }
  return os.str();
}

Driver Driver::zero(int d) {
  if (d < 1) throw std::invalid_argument("Driver::zero: dim must be >= 1");
  Driver g;
  g.form = DriverForm::zero;
  g.dim = d;
  g.a_z = Vec::Zero(d);
  return g;
}

Driver Driver::linear(double a_y, Vec a_z, std::function<double(double)> g0) {
  if (a_z.size() < 1) throw std::invalid_argument("Driver::linear: empty a_z");
  for (idx_t j = 0; j < a_z.size(); ++j)
    if (!std::isfinite(a_z[j]))
      throw std::invalid_argument("Driver::linear: non-finite a_z");
  if (!std::isfinite(a_y))
    throw std::invalid_argument("Driver::linear: non-finite a_y");
  Driver g;
  g.form = DriverForm::linear;
  g.dim = int(a_z.size());
  g.a_y = a_y;
  g.a_z = std::move(a_z);
  g.g0 = std::move(g0);
  g.lipschitz = std::max(std::abs(a_y), std::sqrt(double(g.a_z.square().sum())));
  // Time-varying g0 callers overwrite chi; validate_spec flags a sup gap.
  g.chi = g.g0 ? std::abs(g.g0(0.0)) : 0.0;
  return g;
}

Driver Driver::custom(
    std::function<double(double, double, const Eigen::Ref<const Vec>&)> fn,
    double k_g, double chi_g, int d) {
  if (!fn) throw std::invalid_argument("Driver::custom: empty callable");
  if (!(k_g >= 0) || !(chi_g >= 0))
    throw std::invalid_argument("Driver::custom: K_g and chi_g must be >= 0");
  if (d < 1) throw std::invalid_argument("Driver::custom: dim must be >= 1");
  Driver g;
  g.form = DriverForm::convex_custom;
  g.dim = d;
  g.a_z = Vec::Zero(d);
  g.eval_fn = std::move(fn);
  g.lipschitz = k_g;
  g.chi = chi_g;
  return g;
}

}  // namespace weakbsde

#include "weakbsde/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace weakbsde {

namespace {

constexpr double kContactTol = 1e-12;

// Lower convex hull of the sorted point set (x, v), monotone chain.
// Collinear interior points are dropped so edge slopes strictly increase.
Knots lower_hull(const Knots& k) {
  const idx_t n = k.x.size();
  std::vector<idx_t> stack;
  stack.reserve(size_t(n));
  for (idx_t j = 0; j < n; ++j) {
    while (stack.size() >= 2) {
      const idx_t a = stack[stack.size() - 2];
      const idx_t b = stack[stack.size() - 1];
      // Pop b when it lies on or above the chord a -> j.
      const double lhs = (k.v[b] - k.v[a]) * (k.x[j] - k.x[a]);
      const double rhs = (k.v[j] - k.v[a]) * (k.x[b] - k.x[a]);
      if (lhs >= rhs) stack.pop_back();
      else break;
    }
    stack.push_back(j);
  }
  Knots h;
  h.x.resize(idx_t(stack.size()));
  h.v.resize(idx_t(stack.size()));
  for (size_t i = 0; i < stack.size(); ++i) {
    h.x[idx_t(i)] = k.x[stack[i]];
    h.v[idx_t(i)] = k.v[stack[i]];
  }
  return h;
}

// Index of the hull segment containing m: largest k with x[k] <= m,
// capped so k+1 stays valid.
idx_t segment_of(const Vec& x, double m) {
  const double* lo = x.data();
  const double* hi = x.data() + x.size();
  idx_t k = idx_t(std::upper_bound(lo, hi, m) - lo) - 1;
  return std::clamp<idx_t>(k, 0, x.size() - 2);
}

}  // namespace

double EnvelopeResult::value(double m) const {
  m = std::clamp(m, 0.0, 1.0);
  const idx_t k = segment_of(hat_phi.x, m);
  const double x0 = hat_phi.x[k], x1 = hat_phi.x[k + 1];
  const double w = (m - x0) / (x1 - x0);
  return (1.0 - w) * hat_phi.v[k] + w * hat_phi.v[k + 1];
}

Mix EnvelopeResult::mixing(double m) const {
  m = std::clamp(m, 0.0, 1.0);
  const idx_t k = segment_of(hat_phi.x, m);
  if (m == hat_phi.x[k]) return {m, m, 1.0};
  if (m == hat_phi.x[k + 1]) return {m, m, 1.0};
  Mix mix;
  mix.p_lo = hat_phi.x[k];
  mix.p_hi = hat_phi.x[k + 1];
  mix.eps = (mix.p_hi - m) / (mix.p_hi - mix.p_lo);
  return mix;
}

EnvelopeResult convex_envelope(const LossMap& loss) {
  const Knots& pk = loss.phi_knots();
  EnvelopeResult env;
  env.hat_phi = lower_hull(pk);
  for (idx_t j = 0; j < pk.x.size(); ++j) {
    if (pk.v[j] <= env.value(pk.x[j]) + kContactTol)
      env.contact_set.push_back(j);
  }
  return env;
}

ConjugateLoss::ConjugateLoss(const LossMap& loss, Vec l_grid) {
  const Knots hull = lower_hull(loss.phi_knots());
  hull_m_ = hull.x;
  hull_v_ = hull.v;
  const idx_t n = hull_m_.size();
  slopes_.resize(n - 1);
  for (idx_t k = 0; k + 1 < n; ++k)
    slopes_[k] =
        (hull_v_[k + 1] - hull_v_[k]) / (hull_m_[k + 1] - hull_m_[k]);

  if (l_grid.size() == 0) l_grid = default_l_grid();
  for (idx_t i = 0; i < l_grid.size(); ++i) {
    if (!(l_grid[i] > 0.0) || !std::isfinite(l_grid[i]))
      throw std::invalid_argument("ConjugateLoss: l_grid must be positive");
    if (i > 0 && !(l_grid[i] > l_grid[i - 1]))
      throw std::invalid_argument("ConjugateLoss: l_grid must be increasing");
  }
  l_grid_ = std::move(l_grid);
  tilde_.resize(l_grid_.size());
  grad_.resize(l_grid_.size());
  for (idx_t i = 0; i < l_grid_.size(); ++i) {
    tilde_[i] = value(l_grid_[i]);
    grad_[i] = gradient(l_grid_[i]);
  }
}

Vec ConjugateLoss::default_l_grid(idx_t points) {
  return Eigen::exp(
      Vec::LinSpaced(points, std::log(1e-4), std::log(1e4)).array());
}

idx_t ConjugateLoss::grad_index(double l) const {
  // Smallest maximizer of m_k l - v_k: vertex differences flip sign where
  // the edge slope first reaches l.
  const double* lo = slopes_.data();
  const double* hi = slopes_.data() + slopes_.size();
  return idx_t(std::lower_bound(lo, hi, l) - lo);
}

double ConjugateLoss::value(double l) const {
  const idx_t k = grad_index(l);
  return hull_m_[k] * l - hull_v_[k];
}

double ConjugateLoss::gradient(double l) const { return hull_m_[grad_index(l)]; }

bool ConjugateLoss::tied(double l) const {
  const idx_t k = grad_index(l);
  return k < slopes_.size() && slopes_[k] == l;
}

double ConjugateLoss::value_scaled(double l, double xi) const {
  if (!(xi >= 0.0)) throw std::invalid_argument("value_scaled: xi must be >= 0");
  if (xi == 0.0) return std::max(l, 0.0);
  return xi * value(l / xi);
}

double ConjugateLoss::gradient_scaled(double l, double xi) const {
  if (!(xi >= 0.0))
    throw std::invalid_argument("gradient_scaled: xi must be >= 0");
  if (xi == 0.0) return l > 0.0 ? 1.0 : 0.0;
  return gradient(l / xi);
}

ConjugateLoss fenchel_loss(const LossMap& loss, Vec l_grid) {
  return ConjugateLoss(loss, std::move(l_grid));
}

namespace {

idx_t lattice_points(int dim_total) {
  if (dim_total <= 2) return 401;
  if (dim_total == 3) return 65;
  return 17;
}

}  // namespace

double fenchel_driver(const Driver& g, double t,
                      const Eigen::Ref<const Vec>& uv) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (uv.size() != g.dim + 1)
    throw std::invalid_argument("fenchel_driver: uv must have size d+1");
  const double box = g.lipschitz;
  const double tol = 1e-9 * std::max(1.0, box) + 1e-12;
  for (idx_t j = 0; j < uv.size(); ++j)
    if (std::abs(uv[j]) > box + tol) return kInf;

  if (g.is_linear()) {
    if (std::abs(uv[0] - g.a_y) > tol) return kInf;
    for (idx_t j = 0; j < g.a_z.size(); ++j)
      if (std::abs(uv[j + 1] - g.a_z[j]) > tol) return kInf;
    return -g.g0_at(t);
  }

  // Bounded lattice sup for opaque drivers; coordinates walked in mixed
  // radix so any d works without recursion.
  const int dims = g.dim + 1;
  const idx_t pts = lattice_points(dims);
  const Vec axis = Vec::LinSpaced(pts, -10.0, 10.0);
  double best = -kInf;
  Vec z(g.dim);
  std::vector<idx_t> digit(size_t(dims), 0);
  const double total = std::pow(double(pts), dims);
  for (double count = 0; count < total; ++count) {
    const double y = axis[digit[0]];
    double lin = y * uv[0];
    for (int j = 0; j < g.dim; ++j) {
      z[j] = axis[digit[size_t(j) + 1]];
      lin += z[j] * uv[j + 1];
    }
    best = std::max(best, lin - g.eval(t, y, z));
    for (int j = 0; j < dims; ++j) {
      if (++digit[size_t(j)] < pts) break;
      digit[size_t(j)] = 0;
    }
  }
  return best;
}

}  // namespace weakbsde

#include "weakbsde/loss_map.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace weakbsde {

namespace {

constexpr double kSnap = 1e-12;

// Largest index j with x[j] <= q (requires q >= x[0]).
idx_t floor_index(const Vec& x, double q) {
  idx_t lo = 0, hi = x.size() - 1;
  while (lo < hi) {
    idx_t mid = (lo + hi + 1) / 2;
    if (x[mid] <= q) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

// Right-continuous step / piecewise-linear evaluation of a knot sequence.
double eval_forward(const Knots& k, Interp interp, double y) {
  if (y <= k.x[0]) return k.v[0];
  if (y >= k.x[k.x.size() - 1]) return k.v[k.v.size() - 1];
  idx_t j = floor_index(k.x, y);
  if (interp == Interp::step) return k.v[j];
  if (k.x[j] == y) return k.v[j];
  double w = (y - k.x[j]) / (k.x[j + 1] - k.x[j]);
  return k.v[j] + w * (k.v[j + 1] - k.v[j]);
}

// Left-continuous step evaluation: value v_j on (x_{j-1}, x_j], v_0 at x_0.
double eval_step_left(const Knots& k, double m) {
  if (m <= k.x[0]) return k.v[0];
  if (m >= k.x[k.x.size() - 1]) return k.v[k.v.size() - 1];
  // smallest j with x[j] >= m
  idx_t j = floor_index(k.x, m);
  if (k.x[j] < m) ++j;
  return k.v[j];
}

// inf{y : f(y) >= m} for the forward interpolant f; requires m <= max(v).
double left_inverse_point(const Knots& k, Interp interp, double m) {
  const idx_t n = k.x.size();
  if (m <= k.v[0]) return k.x[0];
  // smallest index with v >= m
  idx_t lo = 0, hi = n - 1;
  while (lo < hi) {
    idx_t mid = (lo + hi) / 2;
    if (k.v[mid] >= m) hi = mid;
    else lo = mid + 1;
  }
  if (interp == Interp::step) return k.x[lo];
  // linear: the crossing happens inside (x_{lo-1}, x_lo]
  idx_t j = lo - 1;
  double dv = k.v[j + 1] - k.v[j];
  if (dv <= 0) return k.x[j + 1];
  double w = (m - k.v[j]) / dv;
  return k.x[j] + w * (k.x[j + 1] - k.x[j]);
}

// sup{m : f(m) <= y} for phi given as knots (right inverse, right-continuous).
double right_inverse_point(const Knots& k, Interp interp, double y) {
  const idx_t n = k.x.size();
  if (interp == Interp::step) {
    // left-continuous step phi: value v_j on (x_{j-1}, x_j]
    if (k.v[0] > y) return 0.0;
    // largest j with v_j <= y
    idx_t lo = 0, hi = n - 1;
    while (lo < hi) {
      idx_t mid = (lo + hi + 1) / 2;
      if (k.v[mid] <= y) lo = mid;
      else hi = mid - 1;
    }
    return k.x[lo];
  }
  if (y >= k.v[n - 1]) return 1.0;
  if (y < k.v[0]) return 0.0;
  // largest m with linear interpolant <= y: right edge of the level set
  idx_t lo = 0, hi = n - 1;
  while (lo < hi) {  // largest j with v_j <= y
    idx_t mid = (lo + hi + 1) / 2;
    if (k.v[mid] <= y) lo = mid;
    else hi = mid - 1;
  }
  idx_t j = lo;
  if (j + 1 >= n) return 1.0;
  double dv = k.v[j + 1] - k.v[j];
  if (dv <= 0) return k.x[j + 1];  // flat at level <= y extends right
  double w = (y - k.v[j]) / dv;
  return k.x[j] + w * (k.x[j + 1] - k.x[j]);
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(idx_t(v.size()));
  for (idx_t i = 0; i < out.size(); ++i) out[i] = v[size_t(i)];
  return out;
}

}  // namespace

std::vector<std::string> knot_defects(const Knots& k) {
  std::vector<std::string> out;
  auto add = [&out](auto&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    out.push_back(os.str());
  };
  const idx_t n = k.x.size();
  if (n < 2 || k.v.size() != n) {
    add("need at least two knots and matching value count, got ", n, " / ",
        k.v.size());
    return out;  // later checks assume matching shapes
  }
  for (idx_t i = 0; i < n; ++i) {
    if (!std::isfinite(k.x[i]) || !std::isfinite(k.v[i])) {
      add("non-finite knot at index ", i);
      return out;
    }
  }
  if (std::abs(k.x[0]) > kSnap || std::abs(k.x[n - 1] - 1.0) > kSnap)
    add("knot domain must span [0,1], got [", k.x[0], ", ", k.x[n - 1], "]");
  for (idx_t i = 1; i < n; ++i) {
    if (!(k.x[i] > k.x[i - 1]))
      add("knot positions not strictly increasing at index ", i);
    if (k.v[i] < k.v[i - 1] - kSnap) add("values decrease at index ", i);
  }
  for (idx_t i = 0; i < n; ++i) {
    if (k.v[i] < -kSnap || k.v[i] > 1.0 + kSnap)
      add("value ", k.v[i], " outside [0,1] at index ", i);
  }
  return out;
}

void check_knots(const Knots& k, const char* what) {
  const auto defects = knot_defects(k);
  if (!defects.empty())
    throw std::invalid_argument(std::string(what) + ": " + defects.front());
}

static Knots snap_knots(Knots k) {
  const idx_t n = k.x.size();
  k.x[0] = 0.0;
  k.x[n - 1] = 1.0;
  for (idx_t i = 0; i < n; ++i) {
    k.v[i] = std::min(1.0, std::max(0.0, k.v[i]));
    if (i > 0 && k.v[i] < k.v[i - 1]) k.v[i] = k.v[i - 1];
  }
  return k;
}

Vec LossMap::canonical_m_grid(const Knots& psi, idx_t uniform_points) {
  std::set<double> grid;
  for (idx_t i = 0; i < uniform_points; ++i)
    grid.insert(double(i) / double(uniform_points - 1));
  for (idx_t i = 0; i < psi.v.size(); ++i) grid.insert(psi.v[i]);
  grid.insert(0.0);
  grid.insert(1.0);
  std::vector<double> v(grid.begin(), grid.end());
  return to_vec(v);
}

Knots left_inverse(const Knots& psi, Interp interp, const Vec& m_grid) {
  check_knots(psi, "left_inverse");
  if (psi.v[psi.v.size() - 1] < 1.0 - 1e-9)
    throw std::invalid_argument("left_inverse: psi must reach 1 at y = 1");
  Knots out;
  out.x = m_grid;
  out.v.resize(m_grid.size());
  for (idx_t i = 0; i < m_grid.size(); ++i) {
    double m = m_grid[i];
    if (m < 0.0 || m > 1.0)
      throw std::invalid_argument("left_inverse: m-grid outside [0,1]");
    out.v[i] = left_inverse_point(psi, interp, m);
  }
  return out;
}

LossMap LossMap::from_psi(Knots k, Interp interp) {
  check_knots(k, "LossMap::from_psi");
  LossMap lm;
  lm.psi_knots_ = snap_knots(std::move(k));
  if (lm.psi_knots_.v[lm.psi_knots_.v.size() - 1] < 1.0 - 1e-9)
    throw std::invalid_argument("LossMap: psi must reach 1 at y = 1");
  lm.psi_interp_ = interp;
  lm.phi_primary_ = false;
  lm.kind_ = LossKind::custom;
  lm.finalize_from_psi();
  return lm;
}

LossMap LossMap::from_phi(Knots k, Interp interp) {
  check_knots(k, "LossMap::from_phi");
  LossMap lm;
  lm.phi_knots_ = snap_knots(std::move(k));
  lm.phi_interp_ = interp;
  lm.phi_primary_ = true;
  lm.kind_ = LossKind::custom;
  lm.finalize_from_phi();
  return lm;
}

void LossMap::finalize_from_psi() {
  phi_knots_ = left_inverse(psi_knots_, psi_interp_, canonical_m_grid(psi_knots_));
  phi_interp_ = psi_interp_ == Interp::step ? Interp::step : Interp::linear;
}

void LossMap::finalize_from_phi() {
  // psi(y) = sup{m : phi(m) <= y} sampled on the canonical y-grid; the
  // grid picks up every attained phi value so jumps land on knots.
  Vec y_grid = canonical_m_grid(phi_knots_);
  psi_knots_.x = y_grid;
  psi_knots_.v.resize(y_grid.size());
  for (idx_t i = 0; i < y_grid.size(); ++i)
    psi_knots_.v[i] = right_inverse_point(phi_knots_, phi_interp_, y_grid[i]);
  psi_interp_ = phi_interp_ == Interp::step ? Interp::step : Interp::linear;
}

LossMap LossMap::indicator() {
  Knots k;
  k.x = Vec(2);
  k.v = Vec(2);
  k.x << 0, 1;
  k.v << 0, 1;
  LossMap lm = from_psi(k, Interp::step);
  lm.kind_ = LossKind::indicator;
  return lm;
}

LossMap LossMap::linear() {
  Knots k;
  k.x = Vec(2);
  k.v = Vec(2);
  k.x << 0, 1;
  k.v << 0, 1;
  LossMap lm = from_psi(k, Interp::linear);
  lm.kind_ = LossKind::linear;
  return lm;
}

LossMap LossMap::power(double q, idx_t grid_points) {
  if (!(q >= 1.0)) throw std::invalid_argument("LossMap::power: q must be >= 1");
  if (grid_points < 3) throw std::invalid_argument("LossMap::power: grid too small");
  Knots k;
  k.x.resize(grid_points);
  k.v.resize(grid_points);
  for (idx_t i = 0; i < grid_points; ++i) {
    double y = double(i) / double(grid_points - 1);
    k.x[i] = y;
    k.v[i] = 1.0 - std::pow(1.0 - y, q);
  }
  k.v[grid_points - 1] = 1.0;
  LossMap lm = from_psi(k, Interp::linear);
  lm.kind_ = LossKind::power;
  lm.power_q_ = q;
  return lm;
}

double LossMap::psi(double y) const {
  y = std::min(1.0, std::max(0.0, y));
  if (!phi_primary_) return eval_forward(psi_knots_, psi_interp_, y);
  return right_inverse_point(phi_knots_, phi_interp_, y);
}

double LossMap::phi(double m) const {
  m = std::min(1.0, std::max(0.0, m));
  if (phi_primary_) {
    if (phi_interp_ == Interp::step) return eval_step_left(phi_knots_, m);
    return eval_forward(phi_knots_, phi_interp_, m);
  }
  return left_inverse_point(psi_knots_, psi_interp_, m);
}

Vec LossMap::phi_many(const Eigen::Ref<const Vec>& m) const {
  Vec out(m.size());
  for (idx_t i = 0; i < m.size(); ++i) out[i] = phi(m[i]);
  return out;
}

std::string LossMap::describe() const {
  switch (kind_) {
    case LossKind::indicator: return "indicator";
    case LossKind::linear: return "linear";
    case LossKind::power: {
      std::ostringstream os;
      os << "power(q=" << power_q_ << ")";
      return os.str();
    }
    case LossKind::custom: return phi_primary_ ? "custom(phi)" : "custom(psi)";
  }
  return "unknown";
}

}  // namespace weakbsde

#include "weakbsde/oracle.hpp"

#include "weakbsde/gexpect.hpp"
#include "weakbsde/math.hpp"
#include "weakbsde/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace weakbsde {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

double np_quantile_price(double theta, double horizon, double m, NpPhiKind) {
  require(std::isfinite(theta), "np_quantile_price: theta must be finite");
  require(std::isfinite(horizon) && horizon > 0,
          "np_quantile_price: horizon must be positive");
  require(std::isfinite(m), "np_quantile_price: m must be finite");
  if (m <= 0.0) return 0.0;
  if (m >= 1.0) return 1.0;
  if (theta == 0.0) return m;  // P = Q, the constraint binds as-is
  return norm_cdf(norm_ppf(m) - std::abs(theta) * std::sqrt(horizon));
}

double np_quantile_price_quad(double theta, double horizon, double m,
                              idx_t nodes) {
  require(std::isfinite(theta), "np_quantile_price_quad: theta must be finite");
  require(std::isfinite(horizon) && horizon > 0,
          "np_quantile_price_quad: horizon must be positive");
  require(nodes >= 5, "np_quantile_price_quad: nodes must be >= 5");
  if (m <= 0.0) return 0.0;
  if (m >= 1.0) return 1.0;

  // By symmetry in the sign of theta the value is
  //   int_{x_b}^inf exp(-s sqrt(T) x - s^2 T / 2) pdf(x) dx,  s = |theta|,
  // with x_b = -N^{-1}(m) so that P(X > x_b) = m. The integrand decays
  // like a normal density centred at -s sqrt(T); forty standard
  // deviations past both that centre and the lower limit is exhaustive.
  const double s = std::abs(theta) * std::sqrt(horizon);
  const double a = -norm_ppf(m);
  const double b = std::max(a, -s) + 40.0;
  idx_t n = nodes - 1;
  if (n % 2 != 0) ++n;  // Simpson needs an even interval count
  const double h = (b - a) / double(n);
  const double off = -0.5 * s * s;
  auto f = [&](double x) { return std::exp(-s * x + off) * norm_pdf(x); };
  double acc = f(a) + f(b);
  for (idx_t j = 1; j < n; ++j) acc += (j % 2 == 1 ? 4.0 : 2.0) * f(a + h * double(j));
  return acc * h / 3.0;
}

Vec TreeInstance::terminal_probs() const {
  const idx_t n = n_leaves();
  Vec p(n);
  for (idx_t i = 0; i < n; ++i) {
    double pi = 1.0;
    for (int k = 0; k < depth; ++k) {
      const idx_t node = i >> (depth - k);
      const bool up = ((i >> (depth - 1 - k)) & 1) != 0;
      const double bu = branch_up[size_t(k)][node];
      pi *= up ? bu : 1.0 - bu;
    }
    p[i] = pi;
  }
  return p;
}

std::string TreeInstance::describe() const {
  std::ostringstream os;
  os << "tree depth " << depth << ", " << n_leaves() << " leaves, m = " << m
     << ", loss " << loss.describe();
  return os.str();
}

void check_tree_instance(const TreeInstance& inst) {
  require(inst.depth >= 1 && inst.depth <= 12,
          "tree instance: depth must be in [1, 12]");
  require(idx_t(inst.branch_up.size()) == idx_t(inst.depth),
          "tree instance: one branch vector per level expected");
  for (int k = 0; k < inst.depth; ++k) {
    const Vec& bu = inst.branch_up[size_t(k)];
    require(bu.size() == (idx_t(1) << k),
            "tree instance: level k needs 2^k branch probabilities");
    for (idx_t j = 0; j < bu.size(); ++j)
      require(std::isfinite(bu[j]) && bu[j] > 0.0 && bu[j] < 1.0,
              "tree instance: branch probabilities must lie in (0,1)");
  }
  require(inst.q.size() == inst.n_leaves(),
          "tree instance: one weight per terminal node expected");
  for (idx_t i = 0; i < inst.q.size(); ++i)
    require(std::isfinite(inst.q[i]) && inst.q[i] > 0.0,
            "tree instance: weights must be positive");
  require(std::isfinite(inst.m) && inst.m >= 0.0 && inst.m <= 1.0,
          "tree instance: m must lie in [0, 1]");
  require(inst.loss.phi_interp() == Interp::linear,
          "tree instance: terminal map must be piecewise linear");
}

namespace {

// Lower convex hull of the terminal knots, kept local so the oracle
// shares no code path with the transforms under test. Collinear points
// are dropped, so edge slopes increase strictly.
void oracle_hull(const Knots& k, std::vector<double>& hx,
                 std::vector<double>& hv) {
  hx.clear();
  hv.clear();
  for (idx_t j = 0; j < k.x.size(); ++j) {
    const double x = k.x[j], v = k.v[j];
    while (hx.size() >= 2) {
      const size_t a = hx.size() - 2, b = hx.size() - 1;
      // pop b unless it lies strictly below chord a -> (x, v)
      if ((hv[b] - hv[a]) * (x - hx[a]) < (v - hv[a]) * (hx[b] - hx[a])) break;
      hx.pop_back();
      hv.pop_back();
    }
    hx.push_back(x);
    hv.push_back(v);
  }
}

struct SweepEvent {
  double thr;
  idx_t leaf;
  idx_t edge;
};

}  // namespace

TreePrimalResult tree_primal_exact(const TreeInstance& inst) {
  check_tree_instance(inst);
  const idx_t n = inst.n_leaves();
  const Vec p = inst.terminal_probs();

  std::vector<double> hx, hv;
  oracle_hull(inst.loss.phi_knots(), hx, hv);
  const size_t ne = hx.size() - 1;  // hull edges

  TreePrimalResult out;
  out.profile = Vec::Constant(n, hx.front());
  double value = 0.0;
  for (idx_t i = 0; i < n; ++i) value += inst.q[i] * hv.front();
  double mean = 0.0;  // hull starts at m = 0

  if (inst.m <= 0.0) {
    out.value = value;
    return out;
  }

  // Coordinate i advances along hull edge k once the multiplier passes
  // r_i s_k; the mean is non-decreasing along the sorted event list.
  std::vector<SweepEvent> events;
  events.reserve(size_t(n) * ne);
  for (idx_t i = 0; i < n; ++i) {
    const double r = inst.q[i] / p[i];
    for (size_t k = 0; k < ne; ++k) {
      const double slope = (hv[k + 1] - hv[k]) / (hx[k + 1] - hx[k]);
      events.push_back({r * slope, i, idx_t(k)});
    }
  }
  std::sort(events.begin(), events.end(),
            [](const SweepEvent& a, const SweepEvent& b) {
              if (a.thr != b.thr) return a.thr < b.thr;
              if (a.leaf != b.leaf) return a.leaf < b.leaf;
              return a.edge < b.edge;
            });

  for (const SweepEvent& ev : events) {
    const double dx = hx[ev.edge + 1] - hx[ev.edge];
    const double dv = hv[ev.edge + 1] - hv[ev.edge];
    const double step = p[ev.leaf] * dx;
    if (mean + step >= inst.m - 1e-15) {
      const double f = std::clamp((inst.m - mean) / step, 0.0, 1.0);
      out.profile[ev.leaf] = hx[ev.edge] + f * dx;
      value += inst.q[ev.leaf] * f * dv;
      out.multiplier = ev.thr;
      out.value = value;
      return out;
    }
    mean += step;
    out.profile[ev.leaf] = hx[ev.edge + 1];
    value += inst.q[ev.leaf] * dv;
  }
  // All coordinates at 1 reaches mean 1 >= m; only rounding can land here.
  out.value = value;
  return out;
}

double tree_primal_brute(const TreeInstance& inst, double constraint_tol) {
  check_tree_instance(inst);
  require(inst.depth <= 4, "tree_primal_brute: depth must be <= 4");
  require(constraint_tol > 0, "tree_primal_brute: tolerance must be positive");
  const idx_t n = inst.n_leaves();
  const Vec p = inst.terminal_probs();

  std::vector<double> hx, hv;
  oracle_hull(inst.loss.phi_knots(), hx, hv);
  auto hull_at = [&](double x) {
    size_t k = 1;
    while (k + 1 < hx.size() && hx[k] < x) ++k;
    const double w = (x - hx[k - 1]) / (hx[k] - hx[k - 1]);
    return hv[k - 1] + w * (hv[k] - hv[k - 1]);
  };

  constexpr int kGrid = 50;
  constexpr double kBin = 2e-4;
  const idx_t nb = idx_t(std::lround(1.0 / kBin));

  std::vector<double> lv(kGrid + 1);
  for (int g = 0; g <= kGrid; ++g) lv[size_t(g)] = hull_at(double(g) / kGrid);

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(size_t(nb) + 1, inf), nxt(size_t(nb) + 1, inf);
  dp[0] = 0.0;
  for (idx_t i = 0; i < n; ++i) {
    std::fill(nxt.begin(), nxt.end(), inf);
    for (idx_t b = 0; b <= nb; ++b) {
      if (dp[size_t(b)] == inf) continue;
      for (int g = 0; g <= kGrid; ++g) {
        const double sum = double(b) * kBin + p[i] * double(g) / kGrid;
        const idx_t b2 = std::min(nb, idx_t(std::lround(sum / kBin)));
        const double cand = dp[size_t(b)] + inst.q[i] * lv[size_t(g)];
        if (cand < nxt[size_t(b2)]) nxt[size_t(b2)] = cand;
      }
    }
    dp.swap(nxt);
  }

  double best = inf;
  for (idx_t b = 0; b <= nb; ++b) {
    if (std::abs(double(b) * kBin - inst.m) <= constraint_tol)
      best = std::min(best, dp[size_t(b)]);
  }
  if (best == inf)
    throw std::runtime_error("tree_primal_brute: no feasible grid point");
  return best;
}

TreeInstance random_tree_instance(std::uint64_t seed, std::uint64_t id,
                                  int depth) {
  require(depth >= 1 && depth <= 12, "random_tree_instance: depth in [1, 12]");
  std::uint32_t draw = 0;
  auto u = [&]() { return uniform_at(seed, kStreamInstance, id, draw++, 0); };

  TreeInstance inst;
  inst.depth = depth;
  inst.branch_up.resize(size_t(depth));
  for (int k = 0; k < depth; ++k) {
    Vec bu(idx_t(1) << k);
    for (idx_t j = 0; j < bu.size(); ++j) bu[j] = 0.2 + 0.6 * u();
    inst.branch_up[size_t(k)] = bu;
  }

  const double tilt = 1.2 * (u() - 0.5);
  const double rate = 0.4 * (u() - 0.5);
  const Vec p = inst.terminal_probs();
  inst.q = Vec(inst.n_leaves());
  for (idx_t i = 0; i < inst.q.size(); ++i) {
    const int ups = std::popcount(std::uint64_t(i));
    inst.q[i] = p[i] * std::exp(rate + tilt * double(2 * ups - depth) /
                                           std::sqrt(double(depth)));
  }

  // Convex piecewise-linear terminal map: sorted interior knots, strictly
  // increasing segment slopes, values rescaled into [0, 1].
  constexpr int kInterior = 3;
  Vec x(kInterior + 2), v(kInterior + 2);
  x[0] = 0.0;
  x[kInterior + 1] = 1.0;
  std::vector<double> xs(kInterior);
  for (double& xi : xs) xi = 0.05 + 0.85 * u();
  std::sort(xs.begin(), xs.end());
  for (int j = 0; j < kInterior; ++j) {
    double xj = xs[size_t(j)];
    if (j > 0) xj = std::max(x[j] + 0.02, xj);
    x[j + 1] = std::min(xj, 0.96);
  }
  std::vector<double> sl(kInterior + 1);
  for (double& s : sl) s = 0.1 + 2.9 * u();
  std::sort(sl.begin(), sl.end());
  for (int j = 0; j <= kInterior; ++j) sl[size_t(j)] += 1e-3 * j;
  const double v0 = 0.3 * u();
  v[0] = v0;
  for (int j = 0; j <= kInterior; ++j)
    v[j + 1] = v[j] + sl[size_t(j)] * (x[j + 1] - x[j]);
  const double target = v0 + (1.0 - v0) * (0.5 + 0.5 * u());
  const double scale = (target - v0) / (v[kInterior + 1] - v0);
  for (int j = 1; j <= kInterior + 1; ++j) v[j] = v0 + scale * (v[j] - v0);
  inst.loss = LossMap::from_phi(Knots{x, v}, Interp::linear);

  inst.m = 0.05 + 0.9 * u();
  check_tree_instance(inst);
  return inst;
}

std::vector<StabilityRow> stability_probe(const ProblemSpec& spec,
                                          const Vec& deltas,
                                          const PathEnsemble& e) {
  require(deltas.size() >= 1, "stability_probe: at least one delta");
  for (idx_t j = 0; j < deltas.size(); ++j) {
    require(std::isfinite(deltas[j]) && deltas[j] >= 0.0,
            "stability_probe: deltas must be non-negative");
    if (j > 0)
      require(deltas[j] <= deltas[j - 1] + 1e-15,
              "stability_probe: deltas must be non-increasing");
  }

  const Driver& g = spec.driver;
  auto solve = [&](const Vec& xi) {
    if (g.is_linear()) return gexp_linear(e, xi, g).y0;
    return gexp_lsmc(e, xi, g, BasisConfig{}).y0;
  };

  const Vec xi0 = spec.loss.phi(0.5) * e.claim;
  const double y_base = solve(xi0);

  Vec noise(e.n_paths);
  for (idx_t i = 0; i < e.n_paths; ++i)
    noise[i] = 2.0 * uniform_at(e.seed, kStreamNoise, std::uint64_t(i), 0, 0) -
               1.0;

  const double env_rate = std::exp(4.0 * g.lipschitz * spec.horizon_T);
  const bool exact_linear = g.is_linear() && (g.a_z == 0.0).all();

  std::vector<StabilityRow> rows;
  rows.reserve(size_t(deltas.size()));
  for (idx_t j = 0; j < deltas.size(); ++j) {
    const double d = deltas[j];
    StabilityRow row;
    row.delta = d;
    row.err_additive = std::abs(solve(xi0 + Vec::Constant(e.n_paths, d)) - y_base);
    row.err_noise = std::abs(solve(xi0 + d * noise) - y_base);
    row.envelope = env_rate * d;

    const double slack = 1e-9 * row.envelope + 1e-12;
    if (row.err_additive > row.envelope + slack ||
        row.err_noise > row.envelope + slack)
      throw std::runtime_error("stability_probe: Gronwall envelope violated");
    if (exact_linear) {
      const double expect = d * std::exp(g.a_y * spec.horizon_T);
      if (std::abs(row.err_additive - expect) > 1e-10 * std::max(1.0, d))
        throw std::runtime_error("stability_probe: linear response violated");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace weakbsde

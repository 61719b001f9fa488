#include "weakbsde/gexpect.hpp"

#include "weakbsde/math.hpp"
#include "weakbsde/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace weakbsde {

namespace {

constexpr int kFixedPointIters = 20;
constexpr double kFixedPointTol = 1e-10;

// Feature channels available on one time slice, already standardized.
struct SliceBasis {
  DMat f;        // n_paths x n_cols design matrix, first column = 1
  idx_t n_cols = 1;
};

// Build the design matrix at step k. Degenerate channels (sd ~ 0) drop
// out so the normal equations stay full rank on constant slices.
SliceBasis build_basis(const PathEnsemble& e, const BasisConfig& cfg,
                       const Mat* m_channel, idx_t k) {
  std::vector<Vec> chans;
  if (cfg.use_asset && e.has_asset())
    chans.push_back(e.asset.col(k).log());
  if (cfg.use_m && m_channel) chans.push_back(m_channel->col(k));

  std::vector<Vec> kept;
  for (Vec& c : chans) {
    const double mu = pairwise_mean(c);
    const Vec centered = c - mu;
    const double sd =
        std::sqrt(pairwise_sum(centered.square()) / double(c.size()));
    if (sd > 1e-12 * std::max(1.0, std::abs(mu)))
      kept.push_back(centered / sd);
  }

  SliceBasis b;
  const idx_t n = e.n_paths;
  const idx_t nc = idx_t(kept.size());
  idx_t cols = 1 + nc;                                   // linear terms
  if (cfg.degree >= 2) cols += nc * (nc + 1) / 2;        // quadratic terms
  b.f.resize(n, cols);
  b.n_cols = cols;
  b.f.col(0).setOnes();
  for (idx_t j = 0; j < nc; ++j) b.f.col(1 + j) = kept[size_t(j)].matrix();
  if (cfg.degree >= 2) {
    idx_t c = 1 + nc;
    for (idx_t j1 = 0; j1 < nc; ++j1)
      for (idx_t j2 = j1; j2 < nc; ++j2)
        b.f.col(c++) =
            (kept[size_t(j1)] * kept[size_t(j2)]).matrix();
  }
  return b;
}

// Normal equations with block-ordered assembly (bit-stable across worker
// counts). Falls back to ridge on rank deficiency; sets the flag.
struct NormalSolver {
  DMat gram;
  Eigen::LDLT<DMat> ldlt;
  bool ridge_used = false;

  void factor(const SliceBasis& b, int threads) {
    const idx_t nc = b.n_cols;
    const idx_t n = b.f.rows();
    const idx_t nb = n_blocks(n);
    std::vector<DMat> partial(size_t(nb), DMat::Zero(nc, nc));
    for_blocks(n, threads, [&](idx_t blk, idx_t lo, idx_t hi) {
      const auto rows = b.f.middleRows(lo, hi - lo);
      partial[size_t(blk)].noalias() = rows.transpose() * rows;
    });
    gram = DMat::Zero(nc, nc);
    for (const DMat& p : partial) gram += p;
    ldlt.compute(gram);
    const DVec d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(d.minCoeff() > 1e-12 * dmax)) {
      ridge_used = true;
      const double lam = 1e-10 * gram.trace() / double(nc) + 1e-300;
      ldlt.compute(gram + lam * DMat::Identity(nc, nc));
    }
  }

  DVec solve(const SliceBasis& b, const Eigen::Ref<const Vec>& target,
             int threads) const {
    const idx_t nc = b.n_cols;
    const idx_t n = b.f.rows();
    const idx_t nb = n_blocks(n);
    std::vector<DVec> partial(size_t(nb), DVec::Zero(nc));
    for_blocks(n, threads, [&](idx_t blk, idx_t lo, idx_t hi) {
      partial[size_t(blk)].noalias() =
          b.f.middleRows(lo, hi - lo).transpose() *
          target.segment(lo, hi - lo).matrix();
    });
    DVec rhs = DVec::Zero(nc);
    for (const DVec& p : partial) rhs += p;
    return ldlt.solve(rhs);
  }
};

double implicit_step(const Driver& g, double t, double cond,
                     const Eigen::Ref<const Vec>& z, double dt, int max_iters,
                     double tol) {
  double y = cond;
  for (int it = 0; it < max_iters; ++it) {
    const double next = cond + g.eval(t, y, z) * dt;
    const double diff = std::abs(next - y);
    y = next;
    if (diff <= tol) break;
  }
  return y;
}

}  // namespace

BsdeSolution gexp_lsmc(const PathEnsemble& e,
                       const Eigen::Ref<const Vec>& terminal, const Driver& g,
                       const BasisConfig& basis, const Mat* m_channel) {
  if (terminal.size() != e.n_paths)
    throw std::invalid_argument("gexp_lsmc: terminal size mismatch");
  if (!terminal.isFinite().all())
    throw std::invalid_argument("gexp_lsmc: non-finite terminal values");
  if (basis.use_m && m_channel &&
      (m_channel->rows() != e.n_paths || m_channel->cols() != e.n_steps + 1))
    throw std::invalid_argument("gexp_lsmc: m_channel shape mismatch");

  const int d = e.dim;
  const idx_t n = e.n_paths;
  BsdeSolution sol;
  sol.backend = GexpBackend::lsmc;
  sol.y.resize(n, e.n_steps + 1);
  sol.y.col(e.n_steps) = terminal;
  sol.z.assign(size_t(d), Mat::Zero(n, e.n_steps));

  for (idx_t k = e.n_steps; k-- > 1;) {
    const SliceBasis b = build_basis(e, basis, m_channel, k);
    NormalSolver solver;
    solver.factor(b, e.threads);
    sol.ridge_used = sol.ridge_used || solver.ridge_used;

    const Vec ynext = sol.y.col(k + 1);
    const DVec cy = solver.solve(b, ynext, e.threads);
    std::vector<DVec> cz(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
      const Vec tgt = ynext * e.dw[size_t(j)].col(k) / e.dt;
      cz[size_t(j)] = solver.solve(b, tgt, e.threads);
    }

    const double t = e.times[k];
    for_blocks(n, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
      Vec zv(d);
      for (idx_t i = lo; i < hi; ++i) {
        const auto row = b.f.row(i);
        const double cond = row.dot(cy);
        for (int j = 0; j < d; ++j) {
          const double zij = row.dot(cz[size_t(j)]);
          sol.z[size_t(j)](i, k) = zij;
          zv[j] = zij;
        }
        sol.y(i, k) = implicit_step(g, t, cond, zv, e.dt, kFixedPointIters,
                                    kFixedPointTol);
      }
    });
  }

  // t = 0: deterministic slice, conditional means are plain averages.
  const Vec y1 = sol.y.col(1);
  const MeanErr me = batch_mean(y1);
  Vec z0(d);
  for (int j = 0; j < d; ++j)
    z0[j] = pairwise_mean(y1 * e.dw[size_t(j)].col(0) / e.dt);
  for (int j = 0; j < d; ++j) sol.z[size_t(j)].col(0).setConstant(z0[j]);
  const double y0 = implicit_step(g, 0.0, me.mean, z0, e.dt,
                                  kFixedPointIters, kFixedPointTol);
  sol.y.col(0).setConstant(y0);
  sol.y0 = y0;
  sol.se = me.se;
  return sol;
}

BsdeSolution gexp_linear(const PathEnsemble& e,
                         const Eigen::Ref<const Vec>& terminal,
                         const Driver& g) {
  if (!g.is_linear())
    throw std::invalid_argument("gexp_linear: driver must be linear");
  if (terminal.size() != e.n_paths)
    throw std::invalid_argument("gexp_linear: terminal size mismatch");

  const Mat l = evolve_deflator(
      e, DeflatorControl::constant(g.a_y, g.a_z), g.lipschitz);
  Vec contrib(e.n_paths);
  const bool with_g0 = bool(g.g0);
  Vec g0_nodes;
  if (with_g0) {
    g0_nodes.resize(e.n_steps + 1);
    for (idx_t k = 0; k <= e.n_steps; ++k) g0_nodes[k] = g.g0(e.times[k]);
  }
  for_blocks(e.n_paths, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
    for (idx_t i = lo; i < hi; ++i) {
      double c = l(i, e.n_steps) * terminal[i];
      if (with_g0) {
        double integral = 0.0;  // trapezoid on the step grid
        for (idx_t k = 0; k < e.n_steps; ++k)
          integral += 0.5 * e.dt *
                      (l(i, k) * g0_nodes[k] + l(i, k + 1) * g0_nodes[k + 1]);
        c += integral;
      }
      contrib[i] = c;
    }
  });
  const MeanErr me = batch_mean(contrib);
  BsdeSolution sol;
  sol.backend = GexpBackend::linear_closed_form;
  sol.y0 = me.mean;
  sol.se = me.se;
  return sol;
}

double TreeSpec::up() const {
  return std::sqrt(dt * (1.0 - p_up) / p_up);
}

double TreeSpec::down() const {
  return -std::sqrt(dt * p_up / (1.0 - p_up));
}

BsdeSolution gexp_tree(const TreeSpec& tree,
                       const Eigen::Ref<const Vec>& terminal,
                       const Driver& g) {
  if (tree.depth < 1 || tree.depth > 20)
    throw std::invalid_argument("gexp_tree: depth must be in [1,20]");
  if (!(tree.p_up > 0.0 && tree.p_up < 1.0))
    throw std::invalid_argument("gexp_tree: p_up must be in (0,1)");
  if (!(tree.dt > 0.0))
    throw std::invalid_argument("gexp_tree: dt must be positive");
  if (terminal.size() != tree.depth + 1)
    throw std::invalid_argument("gexp_tree: terminal size must be depth+1");
  if (!(tree.dt * g.lipschitz < 1.0))
    throw std::invalid_argument("gexp_tree: need dt * K_g < 1");

  const double u = tree.up();
  const double dn = tree.down();
  const double p = tree.p_up;
  Vec cur = terminal;
  Vec next(tree.depth);
  Vec z1(1);
  for (int k = tree.depth - 1; k >= 0; --k) {
    const double t = tree.dt * double(k);
    for (int j = 0; j <= k; ++j) {
      const double cond = p * cur[j + 1] + (1.0 - p) * cur[j];
      z1[0] = (cur[j + 1] - cur[j]) / (u - dn);
      next[j] = implicit_step(g, t, cond, z1, tree.dt, 100, 1e-14);
    }
    cur.head(k + 1) = next.head(k + 1);
  }
  BsdeSolution sol;
  sol.backend = GexpBackend::tree;
  sol.y0 = cur[0];
  sol.se = 0.0;
  return sol;
}

}  // namespace weakbsde

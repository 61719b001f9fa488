#include "weakbsde/control.hpp"

#include "weakbsde/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace weakbsde {

ControlPolicy ControlPolicy::zero(int d) {
  ControlPolicy p;
  p.rule = [d](double, const Eigen::Ref<const Vec>&, double, Vec& alpha) {
    alpha = Vec::Zero(d);
  };
  return p;
}

ControlPolicy ControlPolicy::constant(Vec alpha) {
  ControlPolicy p;
  p.rule = [a = std::move(alpha)](double, const Eigen::Ref<const Vec>&,
                                  double, Vec& out) { out = a; };
  return p;
}

ControlPolicy ControlPolicy::feedback(Vec t_nodes, Vec m_nodes,
                                      std::vector<Mat> alpha_grids) {
  if (t_nodes.size() < 1 || m_nodes.size() < 2)
    throw std::invalid_argument("feedback: need >= 1 t node, >= 2 m nodes");
  for (const Mat& g : alpha_grids)
    if (g.rows() != t_nodes.size() || g.cols() != m_nodes.size())
      throw std::invalid_argument("feedback: grid shape mismatch");
  ControlPolicy p;
  p.rule = [t_nodes = std::move(t_nodes), m_nodes = std::move(m_nodes),
            grids = std::move(alpha_grids)](
               double t, const Eigen::Ref<const Vec>&, double m, Vec& out) {
    // Left t node, linear in m.
    idx_t it = idx_t(std::upper_bound(t_nodes.data(),
                                      t_nodes.data() + t_nodes.size(), t) -
                     t_nodes.data()) -
               1;
    it = std::clamp<idx_t>(it, 0, t_nodes.size() - 1);
    idx_t im = idx_t(std::upper_bound(m_nodes.data(),
                                      m_nodes.data() + m_nodes.size(), m) -
                     m_nodes.data()) -
               1;
    im = std::clamp<idx_t>(im, 0, m_nodes.size() - 2);
    const double w =
        (m - m_nodes[im]) / (m_nodes[im + 1] - m_nodes[im]);
    out.resize(idx_t(grids.size()));
    for (size_t j = 0; j < grids.size(); ++j)
      out[idx_t(j)] = (1.0 - w) * grids[j](it, im) + w * grids[j](it, im + 1);
  };
  return p;
}

Mat evolve_control(const PathEnsemble& e, double m0,
                   const ControlPolicy& policy) {
  if (!(m0 >= 0.0 && m0 <= 1.0))
    throw std::invalid_argument("evolve_control: m0 must be in [0,1]");
  if (!policy.rule)
    throw std::invalid_argument("evolve_control: empty policy rule");

  const int d = e.dim;
  const double cap_scale = 1.0 / (kClampK * std::sqrt(e.dt * double(d)));
  Mat m(e.n_paths, e.n_steps + 1);

  for_blocks(e.n_paths, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
    Vec alpha(d);
    Vec features;
    for (idx_t i = lo; i < hi; ++i) {
      double cur = m0;
      m(i, 0) = cur;
      for (idx_t k = 0; k < e.n_steps; ++k) {
        if (cur == 0.0 || cur == 1.0) {  // absorbed, exact by construction
          m(i, k + 1) = cur;
          continue;
        }
        if (e.has_asset()) {
          features.resize(1);
          features[0] = std::log(e.asset(i, k));
        }
        policy.rule(e.times[k], features, cur, alpha);
        if (alpha.size() != d || !alpha.isFinite().all()) {
          std::ostringstream err;
          err << "evolve_control: invalid alpha at path " << i << ", step "
              << k;
          throw std::runtime_error(err.str());
        }
        const double norm = std::sqrt(double(alpha.square().sum()));
        const double cap = std::min(cur, 1.0 - cur) * cap_scale;
        double step = 0.0;
        const double scale = (norm > cap && norm > 0.0) ? cap / norm : 1.0;
        for (int j = 0; j < d; ++j)
          step += scale * alpha[j] * e.dw[size_t(j)](i, k);
        cur += step;
        if (cur <= 0.0) cur = 0.0;
        if (cur >= 1.0) cur = 1.0;
        m(i, k + 1) = cur;
      }
    }
  });
  return m;
}

DeflatorControl DeflatorControl::constant(double nu, Vec theta) {
  DeflatorControl lam;
  lam.nu = nu;
  lam.theta = std::move(theta);
  return lam;
}

Mat evolve_deflator(const PathEnsemble& e, const DeflatorControl& lam,
                    double k_g) {
  const int d = e.dim;
  const double tol = 1e-9 * std::max(1.0, k_g) + 1e-12;
  auto in_box = [&](double nu, const Vec& theta) {
    if (std::abs(nu) > k_g + tol) return false;
    for (idx_t j = 0; j < theta.size(); ++j)
      if (std::abs(theta[j]) > k_g + tol) return false;
    return true;
  };
  if (!lam.rule) {
    if (lam.theta.size() != d)
      throw std::invalid_argument("evolve_deflator: theta must have size d");
    if (!in_box(lam.nu, lam.theta))
      throw std::invalid_argument("evolve_deflator: outside dual domain");
  }

  Mat l(e.n_paths, e.n_steps + 1);
  if (!lam.rule) {
    // Closed form per node: exact exponential for constant controls.
    const double drift = lam.nu - 0.5 * double(lam.theta.square().sum());
    for_blocks(e.n_paths, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
      Vec w = Vec::Zero(d);
      for (idx_t i = lo; i < hi; ++i) {
        w.setZero();
        l(i, 0) = 1.0;
        for (idx_t k = 0; k < e.n_steps; ++k) {
          double tw = 0.0;
          for (int j = 0; j < d; ++j) {
            w[j] += e.dw[size_t(j)](i, k);
            tw += lam.theta[j] * w[j];
          }
          l(i, k + 1) = std::exp(drift * e.times[k + 1] + tw);
        }
      }
    });
    return l;
  }

  for_blocks(e.n_paths, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
    double nu = lam.nu;
    Vec theta = lam.theta.size() == d ? lam.theta : Vec::Zero(d);
    for (idx_t i = lo; i < hi; ++i) {
      double logl = 0.0;
      l(i, 0) = 1.0;
      for (idx_t k = 0; k < e.n_steps; ++k) {
        lam.rule(e.times[k], nu, theta);
        if (theta.size() != d)
          throw std::invalid_argument("evolve_deflator: theta must have size d");
        if (!in_box(nu, theta)) {
          std::ostringstream err;
          err << "evolve_deflator: outside dual domain at t=" << e.times[k];
          throw std::invalid_argument(err.str());
        }
        double tdw = 0.0;
        for (int j = 0; j < d; ++j) tdw += theta[j] * e.dw[size_t(j)](i, k);
        logl += (nu - 0.5 * double(theta.square().sum())) * e.dt + tdw;
        l(i, k + 1) = std::exp(logl);
      }
    }
  });
  return l;
}

}  // namespace weakbsde

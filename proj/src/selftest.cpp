#include "weakbsde/selftest.hpp"

#include "weakbsde/dual.hpp"
#include "weakbsde/gexpect.hpp"
#include "weakbsde/math.hpp"
#include "weakbsde/oracle.hpp"
#include "weakbsde/primal.hpp"
#include "weakbsde/rng.hpp"
#include "weakbsde/transforms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

namespace weakbsde {

namespace {

std::string d17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void push(SelftestReport& rep, std::string name, bool pass,
          std::string detail) {
  rep.checks.push_back({std::move(name), pass, std::move(detail)});
}

ProblemSpec bsqh_spec() {
  ProblemSpec s;
  s.loss = LossMap::indicator();
  s.driver = Driver::linear(0.0, Vec::Constant(1, -0.3));
  s.horizon_T = 1.0;
  s.brownian_dim_d = 1;
  return s;
}

}  // namespace

bool SelftestReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

SelftestReport run_selftest(std::uint64_t seed, int threads) {
  SelftestReport rep;

  {
    // counter generator known answer at the all-zero key and counter
    const auto w = philox4x32(0, 0, 0, 0, 0);
    const std::array<std::uint32_t, 4> want{0x6627e8d5u, 0xe169c58du,
                                            0xbc57ac4cu, 0x9b00dbd8u};
    std::ostringstream os;
    os << std::hex << w[0] << " " << w[1] << " " << w[2] << " " << w[3];
    push(rep, "philox_kat", w == want, os.str());
  }

  {
    // frozen inverse-normal value and CDF round trip
    double worst = std::abs(norm_ppf(0.975) - 1.959963984540054);
    for (int i = 1; i <= 99; ++i) {
      const double p = double(i) / 100.0;
      worst = std::max(worst, std::abs(norm_cdf(norm_ppf(p)) - p));
    }
    push(rep, "normal_inverse", worst <= 1e-12, "max_err=" + d17(worst));
  }

  {
    // frozen quantile-price value at theta=0.3, T=1, m=1/2
    const double err =
        std::abs(np_quantile_price(0.3, 1.0, 0.5) - 0.3820885778110474);
    push(rep, "np_price_frozen", err <= 1e-13, "err=" + d17(err));
  }

  {
    // closed form against the independent Simpson quadrature
    double worst = 0.0;
    for (int i = 1; i <= 9; ++i) {
      const double m = double(i) / 10.0;
      worst = std::max(worst, std::abs(np_quantile_price(0.3, 1.0, m) -
                                       np_quantile_price_quad(0.3, 1.0, m)));
    }
    push(rep, "np_price_quadrature", worst <= 1e-8, "max_err=" + d17(worst));
  }

  {
    // the oracle itself is monotone and convex with exact endpoints
    const int n = 21;
    Vec v(n);
    for (int i = 0; i < n; ++i)
      v[i] = np_quantile_price(0.3, 1.0, double(i) / double(n - 1));
    bool ok = v[0] == 0.0 && v[n - 1] == 1.0;
    double worst = 0.0;
    for (int i = 1; i < n; ++i)
      worst = std::max(worst, -(v[i] - v[i - 1]));
    for (int i = 1; i + 1 < n; ++i)
      worst = std::max(worst, -(v[i + 1] - 2.0 * v[i] + v[i - 1]));
    ok = ok && worst <= 1e-12;
    push(rep, "np_price_shape", ok, "worst_defect=" + d17(worst));
  }

  {
    // exact sweep vs brute-force dynamic program, 20 seeded instances
    bool ok = true;
    double worst = -1e300;
    for (int i = 0; i < 20; ++i) {
      const int depth = i % 4 + 1;
      const TreeInstance inst =
          random_tree_instance(seed, std::uint64_t(i), depth);
      const double exact = tree_primal_exact(inst).value;
      const double brute = tree_primal_brute(inst);
      TreeInstance relaxed = inst;
      relaxed.m = std::max(0.0, inst.m - 0.02 - 1.6e-3);
      const double exact_lo = tree_primal_exact(relaxed).value;
      // one grid-rounding step of the single fractional coordinate, plus
      // the constraint-bin slack on the low side
      const double up_slack = 3.0 * inst.q.maxCoeff() / 50.0 + 1e-9;
      const double hi_margin = brute - (exact + up_slack);
      const double lo_margin = (exact_lo - 1e-9) - brute;
      worst = std::max(worst, std::max(hi_margin, lo_margin));
      ok = ok && hi_margin <= 0.0 && lo_margin <= 0.0;
    }
    push(rep, "tree_exact_vs_brute", ok, "worst_margin=" + d17(worst));
  }

  {
    // two implicit lattice steps of g = -0.05 y discount exactly
    const Driver g = Driver::linear(-0.05, Vec::Zero(1));
    TreeSpec t;
    t.depth = 2;
    t.p_up = 0.5;
    t.dt = 1.0;
    const BsdeSolution sol = gexp_tree(t, Vec::Constant(3, 1.0), g);
    const double err = std::abs(sol.y0 - 0.90702947845804988);
    push(rep, "tree_two_step_discount", err <= 1e-12, "err=" + d17(err));
  }

  const ProblemSpec bs = bsqh_spec();

  {
    // zero-driver regression solver reduces to the sample mean
    ProblemSpec z = bs;
    z.driver = Driver::zero(1);
    const PathEnsemble e = generate_paths(z, 20000, 16, seed, threads);
    Vec term(e.n_paths);
    for (idx_t i = 0; i < e.n_paths; ++i)
      term[i] =
          uniform_at(seed, kStreamInstance, 1000 + std::uint64_t(i), 0, 0);
    const BsdeSolution sol =
        gexp_lsmc(e, term, z.driver, BasisConfig{2, false, false});
    const double err = std::abs(sol.y0 - pairwise_mean(term));
    push(rep, "zero_driver_mean", err <= 1e-12, "err=" + d17(err));
  }

  {
    // envelope contacts and the mixing identity on a non-convex map
    Knots k;
    k.x = Vec(4);
    k.v = Vec(4);
    k.x << 0.0, 0.4, 0.5, 1.0;
    k.v << 0.1, 0.2, 0.8, 0.9;
    const LossMap lm = LossMap::from_phi(k, Interp::linear);
    const EnvelopeResult env = convex_envelope(lm);
    bool ok = env.contact_set == std::vector<idx_t>{0, 1, 3};
    double worst = 0.0;
    for (int i = 0; i <= 64; ++i) {
      const double m = double(i) / 64.0;
      const Mix mx = env.mixing(m);
      const double mixed =
          mx.eps * lm.phi(mx.p_lo) + (1.0 - mx.eps) * lm.phi(mx.p_hi);
      worst = std::max(worst, std::abs(mixed - env.value(m)));
      worst = std::max(
          worst, std::abs(mx.eps * mx.p_lo + (1.0 - mx.eps) * mx.p_hi - m));
    }
    ok = ok && worst <= 1e-12;
    push(rep, "envelope_mixing", ok, "max_err=" + d17(worst));
  }

  {
    // continuity-modulus fixed points
    const double err = std::abs(delta_modulus(0.25, 0.5) - 0.5) +
                       std::abs(delta_modulus(0.75, 0.5) - 0.5);
    push(rep, "delta_modulus", err <= 1e-15, "err=" + d17(err));
  }

  {
    // stability probe: envelope plus exact linear response e^{-0.05} d
    ProblemSpec s = bs;
    s.driver = Driver::linear(-0.05, Vec::Zero(1));
    s.loss = LossMap::linear();
    const PathEnsemble e =
        generate_paths(s, 4000, 16, seed ^ 0xABCDull, threads);
    Vec deltas(3);
    deltas << 0.04, 0.02, 0.01;
    try {
      const auto rows = stability_probe(s, deltas, e);
      const double want = 0.01 * std::exp(-0.05);
      const double err = std::abs(rows[2].err_additive - want);
      push(rep, "stability_linear_response", err <= 1e-10,
           "err=" + d17(err));
    } catch (const std::exception& ex) {
      push(rep, "stability_linear_response", false, ex.what());
    }
  }

  {
    // dual fixed point: zero driver and identity loss give exactly m
    ProblemSpec z;
    z.loss = LossMap::linear();
    z.driver = Driver::zero(1);
    const PathEnsemble e =
        generate_paths(z, 4000, 8, seed ^ 0x1234ull, threads);
    const DualResult dr = dual_value(z, 0.5, DualSearch{}, e);
    const double err = std::abs(dr.dual_value - 0.5);
    push(rep, "dual_identity_loss", err <= 1e-12 && !dr.bracket_flag,
         "err=" + d17(err));
  }

  {
    // worker count never changes a reported number
    const PathEnsemble e1 = generate_paths(bs, 20000, 32, seed, 1);
    const PathEnsemble e8 = generate_paths(bs, 20000, 32, seed, 8);
    const PrimalResult p1 = primal_value(bs, 0.4, PolicyFamily::terminal_profile(),
                                         OptimizerBudget{}, e1);
    const PrimalResult p8 = primal_value(bs, 0.4, PolicyFamily::terminal_profile(),
                                         OptimizerBudget{}, e8);
    const bool ok = p1.y0 == p8.y0 && p1.se == p8.se;
    push(rep, "threads_invariance", ok,
         "y0_t1=" + d17(p1.y0) + " y0_t8=" + d17(p8.y0));
  }

  return rep;
}

}  // namespace weakbsde

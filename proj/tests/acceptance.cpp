#include "weakbsde/config.hpp"
#include "weakbsde/dual.hpp"
#include "weakbsde/math.hpp"
#include "weakbsde/oracle.hpp"
#include "weakbsde/primal.hpp"
#include "weakbsde/rng.hpp"
#include "weakbsde/selftest.hpp"
#include "weakbsde/transforms.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace weakbsde;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool pass,
            const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", idx,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

ProblemSpec bsqh_spec() {
  ProblemSpec spec;
  spec.loss = LossMap::indicator();
  spec.driver = Driver::linear(0.0, Vec::Constant(1, -0.3));
  return spec;
}

ProblemSpec knotted_spec() {
  Knots k;
  k.x = Vec(4);
  k.v = Vec(4);
  k.x << 0.0, 0.4, 0.5, 1.0;
  k.v << 0.1, 0.2, 0.8, 0.9;
  ProblemSpec spec;
  spec.loss = LossMap::from_phi(k, Interp::linear);
  spec.driver = Driver::zero(1);
  return spec;
}

ProblemSpec power_spec() {
  ProblemSpec spec;
  spec.loss = LossMap::power(2.0);
  spec.driver = Driver::linear(-0.05, Vec::Constant(1, -0.3));
  return spec;
}

bool curve_shape(const ProblemSpec& spec, const PathEnsemble& e,
                 const ValueCurve& vc, std::string& note) {
  double max_se = 0.0;
  for (const auto& p : vc.points) max_se = std::max(max_se, p.se);
  bool ok = vc.convexity_defect <= 3.0 * max_se * 2.0 + 1e-9 &&
            vc.monotonicity_defect <= 3.0 * max_se + 1e-9;
  const idx_t n = e.n_paths;
  const double phi0 = spec.loss.phi(0.0), phi1 = spec.loss.phi(1.0);
  const BsdeSolution lo = gexp_linear(e, Vec::Constant(n, phi0), spec.driver);
  const BsdeSolution hi = gexp_linear(e, Vec::Constant(n, phi1), spec.driver);
  const auto& front = vc.points.front();
  const auto& back = vc.points.back();
  ok = ok && std::abs(front.y0 - lo.y0) <= 3.0 * (front.se + lo.se) + 1e-9;
  ok = ok && std::abs(back.y0 - hi.y0) <= 3.0 * (back.se + hi.se) + 1e-9;
  note += " conv=" + fmt(vc.convexity_defect) +
          " mono=" + fmt(vc.monotonicity_defect);
  return ok;
}

int run_cli(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -2;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <cli-binary> <presets-dir>\n");
    return 2;
  }
  const std::string cli = argv[1];
  const std::string presets = argv[2];

  const ProblemSpec bsqh = bsqh_spec();
  Vec grid11(11);
  for (int i = 0; i <= 10; ++i) grid11[i] = i / 10.0;
  OptimizerBudget budget;
  budget.seed = 20240901;
  DualSearch search;

  // ---- 1: primal profile curve against the closed form, timed ----
  const auto t0 = std::chrono::steady_clock::now();
  const PathEnsemble ens = generate_paths(bsqh, 200000, 64, 20240901, 0);
  const ValueCurve curve =
      value_curve(bsqh, grid11, CurveMethod::profile, budget, ens);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  {
    bool ok = curve.points.size() == 11 && secs <= 300.0;
    double worst = 0.0;
    for (int i = 1; i <= 9; ++i) {
      const auto& p = curve.points[size_t(i)];
      const double target = np_quantile_price(0.3, 1.0, p.m);
      const double tol = std::max(3.0 * p.se, 0.01 * target);
      worst = std::max(worst, std::abs(p.y0 - target) - tol);
      ok = ok && std::abs(p.y0 - target) <= tol;
    }
    report(1, "profile curve within closed-form tolerance", ok,
           "worst_excess=" + fmt(worst) + " runtime=" + fmt(secs) + "s");
  }

  // ---- 2: duality gap and weak duality at every evaluated multiplier ----
  PrimalResult pr_half;
  DualResult dr_half;
  {
    bool ok = true;
    double max_gap = 0.0, worst_weak = -1e300;
    for (int i = 1; i <= 9; ++i) {
      const double m = i / 10.0;
      const PrimalResult pr =
          primal_value(bsqh, m, PolicyFamily::terminal_profile(), budget, ens);
      const DualResult dr = dual_value(bsqh, m, search, ens, &pr);
      const double rel = dr.gap_vs_primal / std::max(pr.y0, 1e-12);
      max_gap = std::max(max_gap, rel);
      ok = ok && rel <= 0.015;
      const double slack = 3.0 * (pr.se + dr.x0_se) + 1e-10;
      for (const auto& [l, h] : dr.evals) {
        (void)l;
        worst_weak = std::max(worst_weak, h - pr.y0 - slack);
        ok = ok && h <= pr.y0 + slack;
      }
      if (i == 5) {
        pr_half = pr;
        dr_half = dr;
      }
    }
    report(2, "duality gap <= 1.5% and weak duality at all multipliers", ok,
           "max_rel_gap=" + fmt(max_gap) + " weak_excess=" + fmt(worst_weak));
  }

  // ---- 3: zero-driver value curve equals the convex envelope ----
  const ProblemSpec knotted = knotted_spec();
  const PathEnsemble e3 = generate_paths(knotted, 20000, 8, 777, 0);
  const ValueCurve vc3 =
      value_curve(knotted, knotted.m_grid, CurveMethod::profile, budget, e3);
  {
    const EnvelopeResult env = convex_envelope(knotted.loss);
    bool ok = true;
    double worst = 0.0;
    for (size_t i = 1; i + 1 < vc3.points.size(); ++i) {
      const auto& p = vc3.points[i];
      const double err = std::abs(p.y0 - env.value(p.m));
      worst = std::max(worst, err);
      ok = ok && err <= 3.0 * p.se + 1e-9;
    }
    report(3, "flat-driver curve matches the convex envelope", ok,
           "max_err=" + fmt(worst));
  }

  // ---- 4: convexity, monotonicity, endpoint identities per instance ----
  const ProblemSpec power = power_spec();
  const PathEnsemble ep = generate_paths(power, 100000, 32, 888, 0);
  const ValueCurve vcp =
      value_curve(power, grid11, CurveMethod::profile, budget, ep);
  {
    std::string note;
    bool ok = curve_shape(bsqh, ens, curve, note);
    ok = curve_shape(knotted, e3, vc3, note) && ok;
    ok = curve_shape(power, ep, vcp, note) && ok;
    report(4, "curve shape and endpoints on all instances", ok, note.substr(1));
  }

  // ---- 5: nested consistency at three intermediate times ----
  {
    bool ok = true;
    double max_gap = 0.0, worst_side = 1e300;
    for (double t_mid : {0.25, 0.5, 0.75}) {
      const DppReport rep = check_dpp(bsqh, 0.5, t_mid, 21, 20, ens);
      max_gap = std::max(max_gap, rep.gap_rel);
      worst_side =
          std::min(worst_side, rep.one_sided_min + 3.0 * rep.one_sided_se);
      ok = ok && rep.gap_rel <= 0.015 &&
           rep.one_sided_min >= -3.0 * rep.one_sided_se - 1e-10;
    }
    report(5, "two-stage consistency and one-sided inequality", ok,
           "max_rel_gap=" + fmt(max_gap) + " min_margin=" + fmt(worst_side));
  }

  // ---- 6: exact tree sweep against brute force; lattice discounting ----
  {
    bool ok = true;
    double worst = -1e300;
    for (int i = 0; i < 20; ++i) {
      const TreeInstance inst =
          random_tree_instance(0xACCE55, std::uint64_t(i), 1 + i % 4);
      const double exact = tree_primal_exact(inst).value;
      const double brute = tree_primal_brute(inst);
      const double up_slack = 3.0 * inst.q.maxCoeff() / 50.0 + 1e-9;
      TreeInstance relaxed = inst;
      relaxed.m = std::max(0.0, inst.m - 0.02 - 1.6e-3);
      const double lo = tree_primal_exact(relaxed).value;
      worst = std::max(worst, brute - exact - up_slack);
      worst = std::max(worst, lo - 1e-9 - brute);
      ok = ok && brute <= exact + up_slack && lo - 1e-9 <= brute;
    }
    const BsdeSolution disc = gexp_tree(TreeSpec{2, 0.5, 0.5}, Vec::Ones(3),
                                        Driver::linear(-0.1, Vec::Zero(1)));
    const double derr = std::abs(disc.y0 - 0.90702947845804988);
    ok = ok && derr <= 1e-12;
    report(6, "tree oracle agreement and exact discounting", ok,
           "worst_margin=" + fmt(worst) + " disc_err=" + fmt(derr));
  }

  // ---- 7: regression backend against the linear closed form ----
  {
    bool ok = true;
    double worst = -1e300;
    for (int i = 0; i < 10; ++i) {
      auto u = [i](std::uint32_t slot) {
        return uniform_at(0xC7, kStreamInstance, std::uint64_t(i), 0, slot);
      };
      ProblemSpec s;
      s.loss = LossMap::linear();
      const double g0c = -0.1 + 0.2 * u(2);
      s.driver = Driver::linear(-0.2 + 0.4 * u(0),
                                Vec::Constant(1, -0.2 + 0.4 * u(1)),
                                [g0c](double) { return g0c; });
      s.market = MarketSpec{100.0, 0.15 + 0.1 * u(3), 0.0, 0.0};
      s.claim.kind = i % 2 ? ClaimKind::call : ClaimKind::digital;
      s.claim.strike = 90.0 + 20.0 * u(4);
      s.claim.cap = 10.0;
      const PathEnsemble e = generate_paths(s, 20000, 16, 700 + i, 0);
      const BsdeSolution lin = gexp_linear(e, e.claim, s.driver);
      const BsdeSolution reg =
          gexp_lsmc(e, e.claim, s.driver, BasisConfig{2, true, false});
      const double scale = std::max(1.0, std::abs(lin.y0));
      const double tol = 3.0 * (lin.se + reg.se) + 0.5 * e.dt * scale;
      worst = std::max(worst, std::abs(reg.y0 - lin.y0) - tol);
      ok = ok && std::abs(reg.y0 - lin.y0) <= tol;
    }
    // zero driver: the regression collapses to the sample mean
    const ProblemSpec z = knotted_spec();
    const PathEnsemble ez = generate_paths(z, 20000, 8, 555, 0);
    Vec term(20000);
    for (idx_t i = 0; i < term.size(); ++i)
      term[i] = uniform_at(5, kStreamInstance, std::uint64_t(i), 0, 0);
    const BsdeSolution mu =
        gexp_lsmc(ez, term, Driver::zero(1), BasisConfig{2, false, false});
    const double zerr = std::abs(mu.y0 - pairwise_mean(term));
    ok = ok && zerr <= 1e-12;
    report(7, "backend agreement on linear drivers", ok,
           "worst_excess=" + fmt(worst) + " zero_err=" + fmt(zerr));
  }

  // ---- 8: stability envelope and exact linear response ----
  {
    bool ok = true;
    std::string note;
    Vec deltas(3);
    deltas << 0.04, 0.02, 0.01;
    try {
      const PathEnsemble e8 = generate_paths(bsqh, 4000, 16, 999, 0);
      const auto rows = stability_probe(bsqh, deltas, e8);
      for (const auto& r : rows)
        ok = ok && r.err_additive <= r.envelope + 1e-12 &&
             r.err_noise <= r.envelope + 1e-12;

      const ProblemSpec lin = [] {
        ProblemSpec s;
        s.loss = LossMap::linear();
        s.driver = Driver::linear(-0.05, Vec::Zero(1));
        return s;
      }();
      const PathEnsemble el = generate_paths(lin, 4000, 16, 998, 0);
      const auto lrows = stability_probe(lin, deltas, el);
      double lerr = 0.0;
      for (size_t i = 0; i < lrows.size(); ++i)
        lerr = std::max(lerr, std::abs(lrows[i].err_additive / deltas[idx_t(i)] -
                                       std::exp(-0.05)));
      ok = ok && lerr <= 1e-10;
      note = "linear_err=" + fmt(lerr);

      // lattice backend: response ratios identical across delta scales
      const Driver disc = Driver::linear(-0.05, Vec::Zero(1));
      Vec tterm(9);
      for (int j = 0; j <= 8; ++j)
        tterm[j] = uniform_at(6, kStreamInstance, std::uint64_t(j), 0, 0);
      const TreeSpec lattice{8, 0.5, 0.125};
      const double base = gexp_tree(lattice, tterm, disc).y0;
      const double r1 =
          (gexp_tree(lattice, Vec(tterm + 0.1), disc).y0 - base) / 0.1;
      const double r2 =
          (gexp_tree(lattice, Vec(tterm + 0.001), disc).y0 - base) / 0.001;
      ok = ok && std::abs(r1 - r2) <= 1e-10;
      note += " tree_ratio_err=" + fmt(std::abs(r1 - r2));
    } catch (const std::exception& ex) {
      ok = false;
      note = std::string("threw: ") + ex.what();
    }
    report(8, "stability bounded by the envelope, linear response exact", ok,
           note);
  }

  // ---- 9: first-order residuals at the profile optimum ----
  {
    const bool ok = dr_half.foc.res_terminal <= 1e-10 &&
                    dr_half.foc.res_driver == 0.0 && pr_half.y0 > 0.0;
    report(9, "first-order residuals at the optimum", ok,
           "res_terminal=" + fmt(dr_half.foc.res_terminal) +
               " res_driver=" + fmt(dr_half.foc.res_driver));
  }

  // ---- 10: CLI reproducibility across worker counts ----
  {
    bool ok = true;
    std::string note;
    const std::string cfg = presets + "/bsqh.cfg";
    const std::string base = "\"" + cli + "\" selftest --config \"" + cfg +
                             "\" --seed 4242 --quiet";
    // Same --out both times: the resolved config echoed in the header
    // includes the output path, so only the worker count may differ.
    const int rc1 = run_cli(base + " --threads 1 --out acc_self.csv");
    const std::string a = slurp("acc_self.csv");
    const int rc2 = run_cli(base + " --threads 8 --out acc_self.csv");
    const std::string b = slurp("acc_self.csv");
    ok = rc1 == 0 && rc2 == 0 && !a.empty() && a == b;
    ok = ok && a.rfind("#", 0) == 0 &&
         a.find("check,pass,detail") != std::string::npos &&
         a.find("simulation.seed = 4242") != std::string::npos;
    note = "exit=" + std::to_string(rc1) + "/" + std::to_string(rc2) +
           " bytes=" + std::to_string(a.size()) +
           (a == b ? " identical" : " DIFFER");
    // remaining presets parse and validate cleanly
    for (const char* name : {"tree.cfg", "powerloss.cfg"}) {
      try {
        const ProblemSpec s = make_spec(parse_config(slurp(presets + "/" + name)));
        ok = ok && validate_spec(s).ok();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    const int rc3 = run_cli("\"" + cli + "\" envelope --config \"" + presets +
                            "/tree.cfg\" --out acc_env.csv --quiet");
    ok = ok && rc3 == 0 && !slurp("acc_env.csv").empty();
    report(10, "bit-identical selftest output across worker counts", ok, note);
  }

  std::printf("acceptance: %d/10 passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}

#include "weakbsde/config.hpp"
#include "weakbsde/csv.hpp"
#include "weakbsde/dual.hpp"
#include "weakbsde/primal.hpp"
#include "weakbsde/selftest.hpp"
#include "weakbsde/transforms.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace weakbsde;

PolicyFamily family_from(const RunConfig& cfg) {
  if (cfg.family == "constant") return PolicyFamily::constant();
  if (cfg.family == "feedback") return PolicyFamily::feedback();
  return PolicyFamily::terminal_profile();
}

OptimizerBudget budget_from(const RunConfig& cfg) {
  OptimizerBudget b;
  b.evals = cfg.evals;
  b.sweeps = cfg.sweeps;
  b.seed = cfg.seed;
  return b;
}

const char* method_name(PolicyFamilyKind k) {
  return k == PolicyFamilyKind::terminal_profile ? "profile" : "policy";
}

void note(bool quiet, const std::string& msg) {
  if (!quiet) std::cerr << msg << "\n";
}

int run_curve(const RunConfig& cfg, const ProblemSpec& spec,
              const PathEnsemble& e, bool quiet) {
  CurveMethod method = CurveMethod::profile;
  if (cfg.curve_method == "policy") method = CurveMethod::policy;
  if (cfg.curve_method == "both") method = CurveMethod::both;
  const ValueCurve vc =
      value_curve(spec, spec.m_grid, method, budget_from(cfg), e);
  CsvFile out(cfg.csv, cfg,
              {"m", "Y0", "stderr", "method", "convexity_defect",
               "monotonicity_defect"});
  for (const auto& p : vc.points)
    out.row({out.num(p.m), out.num(p.y0), out.num(p.se),
             method_name(p.method), out.num(vc.convexity_defect),
             out.num(vc.monotonicity_defect)});
  out.close();
  note(quiet, "wrote " + cfg.csv);
  return 0;
}

int run_dual(const RunConfig& cfg, const ProblemSpec& spec,
             const PathEnsemble& e, bool whole_grid, bool quiet) {
  DualSearch search;
  search.l_min = cfg.l_min;
  search.l_max = cfg.l_max;
  const PolicyFamily fam = family_from(cfg);
  const OptimizerBudget budget = budget_from(cfg);
  std::vector<double> ms;
  if (whole_grid)
    for (idx_t i = 0; i < spec.m_grid.size(); ++i)
      ms.push_back(spec.m_grid[i]);
  else
    ms.push_back(cfg.m);
  CsvFile out(cfg.csv, cfg,
              {"m", "l_star", "dual_value", "primal_value", "gap_abs",
               "gap_rel", "res_driver", "res_terminal"});
  for (const double m : ms) {
    const PrimalResult pr = primal_value(spec, m, fam, budget, e);
    const DualResult dr = dual_value(spec, m, search, e, &pr);
    const double rel =
        dr.gap_vs_primal / std::max(std::abs(pr.y0), 1e-12);
    out.row({out.num(m), out.num(dr.l_star), out.num(dr.dual_value),
             out.num(pr.y0), out.num(dr.gap_vs_primal), out.num(rel),
             out.num(dr.foc.res_driver), out.num(dr.foc.res_terminal)});
  }
  out.close();
  note(quiet, "wrote " + cfg.csv);
  return 0;
}

int run_dpp(const RunConfig& cfg, const ProblemSpec& spec,
            const PathEnsemble& e, bool quiet) {
  const DppReport rep =
      check_dpp(spec, cfg.m, cfg.t_mid, 21, cfg.n_policies, e);
  CsvFile out(cfg.csv, cfg,
              {"t_mid", "lhs", "lhs_se", "rhs", "rhs_se", "gap_abs",
               "gap_rel", "one_sided_min", "one_sided_se", "n_policies"});
  out.row({out.num(rep.t_mid), out.num(rep.lhs), out.num(rep.lhs_se),
           out.num(rep.rhs), out.num(rep.rhs_se), out.num(rep.gap_abs),
           out.num(rep.gap_rel), out.num(rep.one_sided_min),
           out.num(rep.one_sided_se), std::to_string(rep.n_policies)});
  out.close();
  note(quiet, "wrote " + cfg.csv);
  return 0;
}

int run_envelope(const RunConfig& cfg, const ProblemSpec& spec, bool quiet) {
  const EnvelopeResult env = convex_envelope(spec.loss);
  CsvFile out(cfg.csv, cfg, {"m", "phi", "hat_phi", "eps", "p_lo", "p_hi"});
  for (idx_t i = 0; i < spec.m_grid.size(); ++i) {
    const double m = spec.m_grid[i];
    const Mix mx = env.mixing(m);
    out.row({out.num(m), out.num(spec.loss.phi(m)), out.num(env.value(m)),
             out.num(mx.eps), out.num(mx.p_lo), out.num(mx.p_hi)});
  }
  out.close();
  note(quiet, "wrote " + cfg.csv);
  return 0;
}

int run_selftest_cmd(const RunConfig& cfg, int threads, bool quiet) {
  const SelftestReport rep = run_selftest(cfg.seed, threads);
  CsvFile out(cfg.csv, cfg, {"check", "pass", "detail"});
  for (const auto& c : rep.checks) {
    out.row({c.name, c.pass ? "pass" : "fail", c.detail});
    note(quiet, std::string(c.pass ? "[PASS] " : "[FAIL] ") + c.name + ": " +
                    c.detail);
  }
  out.close();
  note(quiet, "wrote " + cfg.csv);
  return rep.all_pass() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak terminal condition BSDE toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
  int threads = 0;
  bool quiet = false;

  app.add_option("--config", config_path, "configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* seed_opt =
      app.add_option("--seed", seed, "override simulation.seed");
  auto* out_opt =
      app.add_option("--out", out_path, "override output.csv path");
  app.add_option("--threads", threads,
                 "worker threads (default: WEAKBSDE_THREADS, else hardware)");
  app.add_flag("--quiet", quiet, "suppress diagnostics");

  auto* c_curve =
      app.add_subcommand("curve", "value curve over task.m_grid");
  auto* c_dual =
      app.add_subcommand("dual", "dual bound and gap at task.m");
  auto* c_gap =
      app.add_subcommand("gap", "primal vs dual over task.m_grid");
  auto* c_dpp =
      app.add_subcommand("dpp", "dynamic programming consistency at task.t_mid");
  auto* c_env =
      app.add_subcommand("envelope", "loss map and its convex envelope");
  auto* c_self =
      app.add_subcommand("selftest", "oracle cross-checks, pass/fail table");
  for (auto* sc : {c_curve, c_dual, c_gap, c_dpp, c_env, c_self})
    sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    std::ifstream in(config_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_config(ss.str());
    if (seed_opt->count()) cfg.seed = seed;
    if (out_opt->count()) cfg.csv = out_path;
    if (threads <= 0) {
      if (const char* env = std::getenv("WEAKBSDE_THREADS"))
        threads = std::atoi(env);
      if (threads < 0) threads = 0;
    }

    if (c_self->parsed()) return run_selftest_cmd(cfg, threads, quiet);

    const ProblemSpec spec = make_spec(cfg);
    const ValidationReport vr = validate_spec(spec);
    if (!vr.ok()) {
      std::cerr << vr.describe();
      return 2;
    }

    if (c_env->parsed()) return run_envelope(cfg, spec, quiet);

    const PathEnsemble e = generate_paths(spec, idx_t(cfg.n_paths),
                                          idx_t(cfg.n_steps), cfg.seed,
                                          threads);
    if (c_curve->parsed()) return run_curve(cfg, spec, e, quiet);
    if (c_dual->parsed()) return run_dual(cfg, spec, e, false, quiet);
    if (c_gap->parsed()) return run_dual(cfg, spec, e, true, quiet);
    if (c_dpp->parsed()) return run_dpp(cfg, spec, e, quiet);
    return 1;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}

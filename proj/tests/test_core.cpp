#include "weakbsde/config.hpp"
#include "weakbsde/csv.hpp"
#include "weakbsde/driver.hpp"
#include "weakbsde/loss_map.hpp"
#include "weakbsde/math.hpp"
#include "weakbsde/problem_spec.hpp"
#include "weakbsde/rng.hpp"
#include "weakbsde/transforms.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace weakbsde;

namespace {

// Lower convex hull of a knot graph by exhaustive chord search: the hull
// value at q is the cheapest convex combination of two knots with mean q.
double hull_reference(const Vec& x, const Vec& v, double q) {
  double best = std::numeric_limits<double>::infinity();
  for (idx_t i = 0; i < x.size(); ++i) {
    if (x[i] == q) best = std::min(best, v[i]);
    for (idx_t j = i + 1; j < x.size(); ++j) {
      if (!(x[i] <= q && q <= x[j]) || x[j] <= x[i]) continue;
      const double w = (q - x[i]) / (x[j] - x[i]);
      best = std::min(best, (1.0 - w) * v[i] + w * v[j]);
    }
  }
  return best;
}

Knots demo_knots() {
  Knots k;
  k.x = Vec(4);
  k.v = Vec(4);
  k.x << 0.0, 0.4, 0.5, 1.0;
  k.v << 0.1, 0.2, 0.8, 0.9;
  return k;
}

}  // namespace

TEST_CASE("normal cdf and inverse") {
  CHECK(std::abs(norm_cdf(0.0) - 0.5) <= 1e-15);
  CHECK(std::abs(norm_cdf(-0.3) - 0.3820885778110474) <= 1e-15);
  CHECK(std::abs(norm_cdf(0.3) + norm_cdf(-0.3) - 1.0) <= 1e-15);
  CHECK(std::abs(norm_ppf(0.975) - 1.959963984540054) <= 1e-12);
  for (int i = 1; i < 40; ++i) {
    const double p = i / 40.0;
    CHECK(std::abs(norm_cdf(norm_ppf(p)) - p) <= 1e-12);
  }
  CHECK(std::abs(norm_pdf(0.0) - 1.0 / std::sqrt(2.0 * M_PI)) <= 1e-16);
}

TEST_CASE("pairwise summation and batch means") {
  Vec x(1000);
  for (idx_t i = 0; i < x.size(); ++i) x[i] = double(i + 1);
  CHECK(pairwise_sum(x) == 1000.0 * 1001.0 / 2.0);
  CHECK(pairwise_mean(x) == doctest::Approx(500.5).epsilon(1e-15));

  Vec c = Vec::Constant(64, 3.25);
  const MeanErr me = batch_mean(c);
  CHECK(me.mean == 3.25);
  CHECK(me.se == 0.0);

  Vec ramp(32);
  for (idx_t i = 0; i < 32; ++i) ramp[i] = double(i);
  const MeanErr r = batch_mean(ramp, 16);
  CHECK(std::abs(r.mean - 15.5) <= 1e-12);
  // 16 batch means 0.5, 2.5, ..., 30.5; se of their average
  double s2 = 0.0;
  for (int b = 0; b < 16; ++b) s2 += (0.5 + 2.0 * b - 15.5) * (0.5 + 2.0 * b - 15.5);
  s2 /= 15.0;
  CHECK(std::abs(r.se - std::sqrt(s2 / 16.0)) <= 1e-12);
}

TEST_CASE("nelder-mead minimizes a separable quadratic within budget") {
  int evals = 0;
  auto f = [&evals](const Vec& x) {
    ++evals;
    return (x - 3.0).square().sum();
  };
  Vec best_x = Vec::Zero(2);
  double best_f = f(best_x);
  nelder_mead(f, best_x, 0.25, 300, &evals, best_x, best_f);
  CHECK(best_f <= 1e-8);
  CHECK(evals <= 300);
  CHECK(std::abs(best_x[0] - 3.0) <= 1e-3);
  CHECK(std::abs(best_x[1] - 3.0) <= 1e-3);
}

TEST_CASE("philox known answer and stream layout") {
  const auto w = philox4x32(0, 0, 0, 0, 0);
  CHECK(w[0] == 0x6627e8d5u);
  CHECK(w[1] == 0xe169c58du);
  CHECK(w[2] == 0xbc57ac4cu);
  CHECK(w[3] == 0x9b00dbd8u);

  const double u = uniform_at(7, kStreamIncrements, 3, 2, 1);
  CHECK(u > 0.0);
  CHECK(u < 1.0);
  CHECK(u == uniform_at(7, kStreamIncrements, 3, 2, 1));
  CHECK(u != uniform_at(7, kStreamNoise, 3, 2, 1));
  CHECK(u != uniform_at(8, kStreamIncrements, 3, 2, 1));

  double a0, a1, b0, b1;
  normal_pair_at(7, kStreamPolicy, 1, 0, 0, a0, a1);
  normal_pair_at(7, kStreamPolicy, 1, 0, 0, b0, b1);
  CHECK(a0 == b0);
  CHECK(a1 == b1);
  CHECK(normal_at(7, kStreamPolicy, 1, 0, 0) == a0);
}

TEST_CASE("loss maps: canonical pairs") {
  const LossMap ind = LossMap::indicator();
  CHECK(ind.psi(0.999) == 0.0);
  CHECK(ind.psi(1.0) == 1.0);
  CHECK(ind.phi(0.0) == 0.0);
  CHECK(ind.phi(0.25) == 1.0);
  CHECK(ind.phi(1.0) == 1.0);
  CHECK(ind.kind() == LossKind::indicator);

  const LossMap lin = LossMap::linear();
  for (double y : {0.0, 0.3, 0.7, 1.0}) {
    CHECK(std::abs(lin.psi(y) - y) <= 1e-15);
    CHECK(std::abs(lin.phi(y) - y) <= 1e-15);
  }

  const LossMap pw = LossMap::power(2.0);
  CHECK(std::abs(pw.psi(0.5) - 0.75) <= 1e-14);
  CHECK(std::abs(pw.phi(0.75) - 0.5) <= 1e-12);
  for (double m : {0.1, 0.3, 0.6, 0.9, 0.99}) {
    CHECK(std::abs(pw.phi(m) - (1.0 - std::sqrt(1.0 - m))) <= 1e-5);
    CHECK(pw.psi(pw.phi(m)) >= m - 1e-12);
  }
  CHECK(pw.power_q() == 2.0);
}

TEST_CASE("loss maps: step inverse is left-continuous") {
  Knots k;
  k.x = Vec(3);
  k.v = Vec(3);
  k.x << 0.0, 0.5, 1.0;
  k.v << 0.0, 0.3, 1.0;
  const LossMap step = LossMap::from_psi(k, Interp::step);
  CHECK(step.psi(0.25) == 0.0);
  CHECK(step.psi(0.5) == 0.3);
  CHECK(step.psi(0.75) == 0.3);
  CHECK(step.phi(0.1) == 0.5);
  CHECK(step.phi(0.3) == 0.5);
  CHECK(step.phi(0.30001) == 1.0);
  CHECK(step.phi(0.0) == 0.0);
}

TEST_CASE("loss maps: generalized inverse relations on random grids") {
  for (int t = 0; t < 5; ++t) {
    Knots k;
    const idx_t n = 5 + t;
    k.x = Vec(n);
    k.v = Vec(n);
    double acc = 0.0;
    Vec raw(n);
    for (idx_t j = 0; j < n; ++j) {
      k.x[j] = double(j) / double(n - 1);
      acc += uniform_at(42, kStreamInstance, std::uint64_t(t), 0,
                        std::uint32_t(j));
      raw[j] = acc;
    }
    k.v = raw / raw[n - 1];
    k.v[0] = 0.0;
    k.v[n - 1] = 1.0;
    const LossMap lm = LossMap::from_psi(k, Interp::linear);
    for (int i = 0; i <= 20; ++i) {
      const double y = i / 20.0;
      const double m = i / 20.0;
      CHECK(lm.phi(lm.psi(y)) <= y + 1e-12);
      CHECK(lm.psi(lm.phi(m)) >= m - 1e-12);
    }
  }
}

TEST_CASE("knot validation reports defects") {
  Knots bad;
  bad.x = Vec(2);
  bad.v = Vec(2);
  bad.x << 0.2, 1.0;  // must start at 0
  bad.v << 0.0, 1.0;
  CHECK(!knot_defects(bad).empty());
  CHECK_THROWS_AS(check_knots(bad, "psi"), std::invalid_argument);

  Knots dec;
  dec.x = Vec(3);
  dec.v = Vec(3);
  dec.x << 0.0, 0.5, 1.0;
  dec.v << 0.0, 0.8, 0.4;  // not monotone
  CHECK(!knot_defects(dec).empty());

  CHECK(knot_defects(demo_knots()).empty());
}

TEST_CASE("drivers: forms, bounds, evaluation") {
  const Driver z = Driver::zero(2);
  Vec zz = Vec::Zero(2);
  CHECK(z.eval(0.3, 0.5, zz) == 0.0);
  CHECK(z.lipschitz == 0.0);
  CHECK(z.is_linear());

  const Driver lin =
      Driver::linear(-0.05, Vec::Constant(1, 0.2), [](double) { return 0.1; });
  Vec one = Vec::Constant(1, 1.0);
  CHECK(std::abs(lin.eval(0.0, 2.0, one) - (-0.1 + 0.2 + 0.1)) <= 1e-15);
  CHECK(lin.lipschitz == doctest::Approx(0.2));
  CHECK(lin.chi == doctest::Approx(0.1));
  CHECK(lin.is_linear());

  const Driver cx = Driver::custom(
      [](double, double y, const Eigen::Ref<const Vec>& zv) {
        return 0.5 * std::abs(y) + 0.5 * std::sqrt(zv.square().sum() + 1.0) -
               0.5;
      },
      0.5, 0.0, 1);
  CHECK(!cx.is_linear());
  CHECK(cx.eval(0.0, 0.0, Vec::Zero(1)) == 0.0);
}

TEST_CASE("validate_spec accepts the default and names defects") {
  ProblemSpec spec;
  CHECK(validate_spec(spec).ok());

  ProblemSpec bad_grid;
  bad_grid.m_grid = Vec(3);
  bad_grid.m_grid << 0.0, 0.6, 0.4;
  const ValidationReport r1 = validate_spec(bad_grid);
  CHECK(!r1.ok());
  CHECK(r1.has_structural());
  CHECK(r1.describe().find("m_grid not strictly increasing") !=
        std::string::npos);

  ProblemSpec bad_t;
  bad_t.horizon_T = 0.0;
  CHECK(validate_spec(bad_t).has_structural());

  // understated Lipschitz constant: an assumption defect, not structural
  ProblemSpec sly;
  sly.driver = Driver::custom(
      [](double, double y, const Eigen::Ref<const Vec>&) { return 10.0 * y; },
      0.1, 0.0, 1);
  const ValidationReport r2 = validate_spec(sly);
  CHECK(!r2.ok());
  CHECK(!r2.has_structural());
  CHECK(r2.describe().find("Lipschitz") != std::string::npos);

  ProblemSpec claim_no_market;
  claim_no_market.claim.kind = ClaimKind::digital;
  CHECK(!validate_spec(claim_no_market).ok());

  // phi-side loss with phi(0) > 0: below the range of phi the inverse pair
  // sits at phi(0), which is not a defect
  Knots k;
  k.x = Vec(4);
  k.v = Vec(4);
  k.x << 0.0, 0.4, 0.5, 1.0;
  k.v << 0.1, 0.2, 0.8, 0.9;
  ProblemSpec shifted;
  shifted.loss = LossMap::from_phi(k, Interp::linear);
  CHECK(validate_spec(shifted).ok());
}

TEST_CASE("convex envelope matches the exhaustive chord hull") {
  for (int t = 0; t < 20; ++t) {
    const idx_t n = 4 + (t % 5);
    Knots k;
    k.x = Vec(n);
    k.v = Vec(n);
    for (idx_t j = 0; j < n; ++j) {
      k.x[j] = double(j) / double(n - 1);
      k.v[j] = uniform_at(99, kStreamInstance, std::uint64_t(t), 1,
                          std::uint32_t(j));
    }
    std::sort(k.v.data(), k.v.data() + n);  // phi must be non-decreasing
    const LossMap lm = LossMap::from_phi(k, Interp::linear);
    const EnvelopeResult env = convex_envelope(lm);
    for (int i = 0; i <= 100; ++i) {
      const double q = i / 100.0;
      CHECK(std::abs(env.value(q) - hull_reference(k.x, k.v, q)) <= 1e-12);
    }
    for (idx_t ci : env.contact_set)
      CHECK(std::abs(env.value(k.x[ci]) - k.v[ci]) <= 1e-12);
    for (int i = 1; i < 10; ++i) {
      const double m = i / 10.0;
      const Mix mx = env.mixing(m);
      CHECK(std::abs(mx.eps * mx.p_lo + (1.0 - mx.eps) * mx.p_hi - m) <= 1e-12);
      CHECK(std::abs(mx.eps * lm.phi(mx.p_lo) + (1.0 - mx.eps) * lm.phi(mx.p_hi) -
                     env.value(m)) <= 1e-12);
    }
  }
}

TEST_CASE("convex envelope of the demo knots") {
  const LossMap lm = LossMap::from_phi(demo_knots(), Interp::linear);
  const EnvelopeResult env = convex_envelope(lm);
  REQUIRE(env.contact_set.size() == 3);
  CHECK(env.contact_set[0] == 0);
  CHECK(env.contact_set[1] == 1);
  CHECK(env.contact_set[2] == 3);
  CHECK(std::abs(env.value(0.7) - 0.55) <= 1e-15);
  CHECK(std::abs(env.value(0.4) - 0.2) <= 1e-15);
  CHECK(env.value(0.45) < lm.phi(0.45));
}

TEST_CASE("conjugate loss: exact against the knot supremum") {
  const LossMap lm = LossMap::from_phi(demo_knots(), Interp::linear);
  const ConjugateLoss cj = fenchel_loss(lm);
  const Knots k = demo_knots();
  for (int i = 0; i <= 80; ++i) {
    const double l = std::pow(10.0, -4.0 + 8.0 * i / 80.0);
    double ref = -std::numeric_limits<double>::infinity();
    for (idx_t j = 0; j < k.x.size(); ++j)
      ref = std::max(ref, l * k.x[j] - k.v[j]);
    CHECK(std::abs(cj.value(l) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    // Fenchel-Young equality at the reported maximizer
    const double mt = cj.gradient(l);
    const EnvelopeResult env = convex_envelope(lm);
    CHECK(std::abs(l * mt - cj.value(l) - env.value(mt)) <= 1e-10);
  }
}

TEST_CASE("conjugate loss: identity map and claim scaling") {
  const LossMap lin = LossMap::linear();
  const ConjugateLoss cj = fenchel_loss(lin);
  CHECK(std::abs(cj.value(0.5) - 0.0) <= 1e-15);
  CHECK(std::abs(cj.value(2.0) - 1.0) <= 1e-15);
  CHECK(cj.gradient(0.5) == 0.0);
  CHECK(cj.gradient(2.0) == 1.0);
  CHECK(cj.tied(1.0));
  CHECK(std::abs(cj.value_scaled(3.0, 2.0) - 2.0 * cj.value(1.5)) <= 1e-15);
  CHECK(cj.gradient_scaled(3.0, 2.0) == cj.gradient(1.5));
  CHECK(cj.value_scaled(3.0, 0.0) == 3.0);
  CHECK(cj.value_scaled(-1.0, 0.0) == 0.0);
  // Fenchel-Young inequality on a lattice
  for (int i = 0; i <= 10; ++i)
    for (int j = 1; j <= 10; ++j) {
      const double m = i / 10.0, l = j / 2.0;
      CHECK(l * m <= lin.phi(m) + cj.value(l) + 1e-12);
    }
}

TEST_CASE("driver conjugate: singleton domain for linear forms") {
  const Driver lin =
      Driver::linear(-0.05, Vec::Constant(1, 0.2), [](double) { return 0.1; });
  Vec uv(2);
  uv << -0.05, 0.2;
  CHECK(std::abs(fenchel_driver(lin, 0.3, uv) - (-0.1)) <= 1e-15);
  uv << 0.0, 0.2;
  CHECK(std::isinf(fenchel_driver(lin, 0.3, uv)));

  const Driver z = Driver::zero(1);
  Vec zero_uv = Vec::Zero(2);
  CHECK(fenchel_driver(z, 0.0, zero_uv) == 0.0);
  Vec off = Vec::Constant(2, 0.3);
  CHECK(std::isinf(fenchel_driver(z, 0.0, off)));
}

TEST_CASE("config: defaults, serialization, round trip") {
  const RunConfig def;
  CHECK(parse_config("") == def);
  CHECK(parse_config(serialize(def)) == def);
  const std::string text = serialize(def);
  CHECK(text.find("problem.loss = indicator") != std::string::npos);
  CHECK(text.find("simulation.n_paths = 20000") != std::string::npos);
  CHECK(text.find("output.precision = 10") != std::string::npos);
}

TEST_CASE("config: 50 randomized round trips") {
  for (int i = 0; i < 50; ++i) {
    std::uint32_t slot = 0;
    auto u = [&slot, i]() {
      return uniform_at(2024, kStreamConfig, std::uint64_t(i), 0, slot++);
    };
    auto pick = [&u](std::initializer_list<const char*> xs) {
      const auto k = size_t(u() * double(xs.size()));
      return std::string(*(xs.begin() + std::min(k, xs.size() - 1)));
    };
    RunConfig c;
    c.loss = pick({"indicator", "linear", "power", "custom"});
    c.power_q = 1.0 + 3.0 * u();
    if (c.loss == "custom") {
      c.loss_knots_x = {0.0, 0.3 + 0.2 * u(), 1.0};
      c.loss_knots_v = {0.1 * u(), 0.5, 0.9 + 0.1 * u()};
      c.loss_side = pick({"phi", "psi"});
      c.loss_interp = pick({"linear", "step"});
    }
    c.random_factor = u() < 0.5;
    c.driver = pick({"zero", "linear"});
    c.dim = 1 + int(u() * 3.0);
    c.a_y = -0.3 + 0.6 * u();
    c.a_z.clear();
    for (int d = 0; d < c.dim; ++d) c.a_z.push_back(-0.3 + 0.6 * u());
    c.g0 = -0.1 + 0.2 * u();
    c.horizon = 0.5 + 1.5 * u();
    c.market = pick({"none", "gbm"});
    c.s0 = 50.0 + 100.0 * u();
    c.sigma = 0.1 + 0.4 * u();
    c.drift = -0.1 + 0.2 * u();
    c.rate = 0.05 * u();
    c.claim = pick({"constant", "digital", "call"});
    c.claim_level = u();
    c.claim_strike = 80.0 + 40.0 * u();
    c.claim_cap = 10.0 + 40.0 * u();
    c.n_paths = 1 + (long long)(u() * 1e6);
    c.n_steps = 1 + (long long)(u() * 256.0);
    c.seed = (std::uint64_t)(u() * 9e15);
    c.family = pick({"profile", "constant", "feedback"});
    c.evals = 1 + int(u() * 1000.0);
    c.sweeps = 1 + int(u() * 10.0);
    c.basis_degree = int(u() * 6.999);
    c.l_min = 1e-4 * (0.5 + u());
    c.l_max = 1e3 * (1.0 + u());
    c.m_grid.clear();
    const int gp = 2 + int(u() * 6.0);
    for (int g = 0; g < gp; ++g) c.m_grid.push_back(u());
    c.m = u();
    c.t_mid = 0.1 + 0.8 * u();
    c.n_policies = 1 + int(u() * 40.0);
    c.curve_method = pick({"profile", "policy", "both"});
    c.csv = "run_" + std::to_string(i) + ".csv";
    c.precision = 3 + int(u() * 14.0);

    const RunConfig back = parse_config(serialize(c));
    CHECK(back == c);
  }
}

TEST_CASE("config: parse errors name the line and constraint") {
  CHECK_THROWS_WITH_AS(parse_config("simulation.n_paths = -5"),
                       "line 1: n_paths must be >= 1", ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("\nwho.knows = 1"),
                       "line 2: unknown key 'who.knows'", ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("simulation.n_steps = many"),
                       "line 1: type mismatch for 'simulation.n_steps' "
                       "(expected integer)",
                       ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config("problem.driver = cubic"),
      "line 1: invalid value 'cubic' for 'problem.driver' (expected "
      "zero|linear)",
      ConfigError);
  CHECK_THROWS_AS(parse_config("task.m = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_config("output.precision = 40"), ConfigError);
  CHECK_THROWS_AS(parse_config("solver.l_min = 9\nsolver.l_max = 2"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("problem.loss_knots_x = 0,1"), ConfigError);
  CHECK_THROWS_AS(parse_config("just a line"), ConfigError);
}

TEST_CASE("config: make_spec wires the problem together") {
  std::ifstream in("../../presets/bsqh.cfg");
  RunConfig cfg;
  if (in.good()) {
    std::ostringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  } else {
    cfg.loss = "indicator";
    cfg.driver = "linear";
    cfg.a_z = {-0.3};
  }
  const ProblemSpec spec = make_spec(cfg);
  CHECK(spec.loss.kind() == LossKind::indicator);
  CHECK(spec.driver.is_linear());
  CHECK(std::abs(spec.driver.a_z[0] + 0.3) <= 1e-15);
  CHECK(spec.horizon_T == 1.0);
  CHECK(validate_spec(spec).ok());

  RunConfig bad;
  bad.claim = "digital";  // needs a market
  CHECK_THROWS_AS(make_spec(bad), std::invalid_argument);

  RunConfig cust;
  cust.loss = "custom";  // needs knots
  CHECK_THROWS_AS(make_spec(cust), std::invalid_argument);
}

TEST_CASE("csv: precision, header echo, row discipline") {
  CHECK(csv_number(1.0 / 3.0, 10) == "0.3333333333");
  CHECK(csv_number(0.1, 10) == "0.1");
  CHECK(csv_number(-2.5, 3) == "-2.5");

  RunConfig cfg;
  cfg.precision = 6;
  const std::string path = "unit_csv_tmp.csv";
  CsvFile f(path, cfg, {"a", "b"});
  f.row({f.num(1.0 / 3.0), f.num(2.0)});
  CHECK_THROWS_AS(f.row({"only-one"}), std::exception);
  f.close();

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# weakbsde run configuration (resolved)");
  bool saw_seed = false, saw_cols = false, saw_row = false;
  while (std::getline(in, line)) {
    if (line == "# simulation.seed = 1") saw_seed = true;
    if (line == "a,b") saw_cols = true;
    if (line == "0.333333,2") saw_row = true;
    if (!saw_cols) CHECK(line.rfind("#", 0) == 0);
  }
  CHECK(saw_seed);
  CHECK(saw_cols);
  CHECK(saw_row);
  std::remove(path.c_str());
}

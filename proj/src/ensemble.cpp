#include "weakbsde/ensemble.hpp"

#include "weakbsde/parallel.hpp"
#include "weakbsde/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace weakbsde {

PathEnsemble generate_paths(const ProblemSpec& spec, idx_t n_paths,
                            idx_t n_steps, std::uint64_t seed, int threads) {
  if (n_paths < 1 || n_steps < 1)
    throw std::invalid_argument("generate_paths: need n_paths, n_steps >= 1");
  if (spec.claim.kind != ClaimKind::constant && !spec.market)
    throw std::invalid_argument(
        "generate_paths: claim reads the asset but no market is configured");

  PathEnsemble e;
  e.n_paths = n_paths;
  e.n_steps = n_steps;
  e.dim = spec.brownian_dim_d;
  e.horizon = spec.horizon_T;
  e.dt = spec.horizon_T / double(n_steps);
  e.seed = seed;
  e.threads = resolve_threads(threads);
  e.times = Vec::LinSpaced(n_steps + 1, 0.0, spec.horizon_T);
  e.dw.resize(size_t(e.dim));
  for (auto& m : e.dw) m.resize(n_paths, n_steps);

  const double sqdt = std::sqrt(e.dt);
  const bool with_asset = spec.market.has_value();
  if (with_asset) e.asset.resize(n_paths, n_steps + 1);
  e.claim.resize(n_paths);

  const MarketSpec mkt = spec.market.value_or(MarketSpec{});
  const double log_drift = (mkt.drift - 0.5 * mkt.sigma * mkt.sigma) * e.dt;

  for_blocks(n_paths, e.threads, [&](idx_t, idx_t lo, idx_t hi) {
    for (idx_t i = lo; i < hi; ++i) {
      for (int j = 0; j < e.dim; ++j) {
        Mat& dwj = e.dw[size_t(j)];
        for (idx_t k = 0; k < n_steps; ++k)
          dwj(i, k) = sqdt * normal_at(seed, kStreamIncrements,
                                       std::uint64_t(i), std::uint32_t(k),
                                       std::uint32_t(j));
      }
      if (with_asset) {
        // Exact log-scale scheme for the geometric diffusion.
        double logs = std::log(mkt.s0);
        e.asset(i, 0) = mkt.s0;
        const Mat& dw1 = e.dw[0];
        for (idx_t k = 0; k < n_steps; ++k) {
          logs += log_drift + mkt.sigma * dw1(i, k);
          e.asset(i, k + 1) = std::exp(logs);
        }
        e.claim[i] = spec.claim.payoff(e.asset(i, n_steps));
      } else {
        e.claim[i] = spec.claim.level;
      }
    }
  });
  return e;
}

}  // namespace weakbsde

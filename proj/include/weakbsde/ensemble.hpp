#pragma once

#include "weakbsde/problem_spec.hpp"

#include <cstdint>
#include <vector>

namespace weakbsde {

/// Seeded Brownian ensemble with the derived asset and claim channels.
/// Increments are counter-based per (path, step, component), so the
/// ensemble is a pure function of (seed, shape, spec) and path i is
/// identical no matter how paths are batched across workers.
struct PathEnsemble {
  idx_t n_paths = 0;
  idx_t n_steps = 0;
  int dim = 1;
  double horizon = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;       // resolved worker count, reused by consumers
  Vec times;             // n_steps + 1 nodes, times[k] = k * dt
  std::vector<Mat> dw;   // per component: n_paths x n_steps
  Mat asset;             // n_paths x (n_steps + 1); 0 x 0 without a market
  Vec claim;             // xi = payoff(S_T), constant level without one

  bool has_asset() const { return asset.size() > 0; }
};

PathEnsemble generate_paths(const ProblemSpec& spec, idx_t n_paths,
                            idx_t n_steps, std::uint64_t seed,
                            int threads = 0);

}  // namespace weakbsde

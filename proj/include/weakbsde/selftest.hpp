#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace weakbsde {

struct SelftestCheck {
  std::string name;
  bool pass = false;
  std::string detail;  // deterministic numeric digest, never addresses
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;
  bool all_pass() const;
};

/// Runs the oracle cross-checks at desk scale (< 60 s): generator
/// known-answer, normal inverse, quantile-price closed form vs
/// quadrature, tree sweep vs brute force, lattice discounting, envelope
/// mixing, zero-driver reduction, stability response, dual fixed points,
/// and worker-count determinism. A pure function of `seed`; `threads`
/// sizes the worker pool without affecting any reported value.
SelftestReport run_selftest(std::uint64_t seed, int threads);

}  // namespace weakbsde

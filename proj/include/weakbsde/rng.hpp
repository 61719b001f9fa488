#pragma once

#include "weakbsde/types.hpp"

#include <array>
#include <cstdint>

namespace weakbsde {

// Counter-based generator (Philox 4x32, 10 rounds). Every draw is a pure
// function of (seed, counter), so substreams indexed by path id are identical
// regardless of batching or worker count.
std::array<std::uint32_t, 4> philox4x32(std::uint64_t key, std::uint32_t c0,
                                        std::uint32_t c1, std::uint32_t c2,
                                        std::uint32_t c3);

// Substream labels; kept disjoint via the high bits of the last counter word.
enum RngStream : std::uint32_t {
  kStreamIncrements = 0,  // Brownian increments of an ensemble
  kStreamNoise = 1,       // terminal perturbations (stability probe)
  kStreamPolicy = 2,      // sampled policies
  kStreamInstance = 3,    // randomized test instances
  kStreamConfig = 4,      // randomized configs (round-trip property test)
};

/// Uniform draw in the open interval (0,1) with 53 random bits.
double uniform_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                  std::uint32_t step, std::uint32_t slot);

/// Pair of independent standard normals (Box-Muller; no rejection, so the
/// draw count per counter is fixed).
void normal_pair_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                    std::uint32_t step, std::uint32_t pair, double& z0,
                    double& z1);

/// Single standard normal (first of the pair).
double normal_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                 std::uint32_t step, std::uint32_t slot);

}  // namespace weakbsde

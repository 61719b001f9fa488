#include "weakbsde/rng.hpp"

#include <cmath>

namespace weakbsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t& c0, std::uint32_t& c1,
                         std::uint32_t& c2, std::uint32_t& c3,
                         std::uint32_t k0, std::uint32_t k1) {
  const std::uint64_t p0 = std::uint64_t(kMul0) * c0;
  const std::uint64_t p1 = std::uint64_t(kMul1) * c2;
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  const std::uint32_t n0 = hi1 ^ c1 ^ k0;
  const std::uint32_t n1 = lo1;
  const std::uint32_t n2 = hi0 ^ c3 ^ k1;
  const std::uint32_t n3 = lo0;
  c0 = n0; c1 = n1; c2 = n2; c3 = n3;
}

// 53-bit uniform in the open interval (0,1): never 0, never 1.
inline double u01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (std::uint64_t(hi) << 21) | (std::uint64_t(lo) >> 11);
  return (double(bits) + 0.5) * 0x1p-53;
}

inline std::array<std::uint32_t, 4> block_for(std::uint64_t seed,
                                              RngStream stream,
                                              std::uint64_t id,
                                              std::uint32_t step,
                                              std::uint32_t slot) {
  // slot < 2^8 per (id, step); stream occupies the next bits.
  return philox4x32(seed, std::uint32_t(id), std::uint32_t(id >> 32), step,
                    (std::uint32_t(stream) << 8) | (slot & 0xFFu));
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::uint64_t key, std::uint32_t c0,
                                        std::uint32_t c1, std::uint32_t c2,
                                        std::uint32_t c3) {
  std::uint32_t k0 = std::uint32_t(key), k1 = std::uint32_t(key >> 32);
  for (int r = 0; r < 10; ++r) {
    philox_round(c0, c1, c2, c3, k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return {c0, c1, c2, c3};
}

double uniform_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                  std::uint32_t step, std::uint32_t slot) {
  const auto b = block_for(seed, stream, id, step, slot);
  return u01(b[0], b[1]);
}

void normal_pair_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                    std::uint32_t step, std::uint32_t pair, double& z0,
                    double& z1) {
  const auto b = block_for(seed, stream, id, step, pair);
  const double u1 = u01(b[0], b[1]);
  const double u2 = u01(b[2], b[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

double normal_at(std::uint64_t seed, RngStream stream, std::uint64_t id,
                 std::uint32_t step, std::uint32_t slot) {
  double z0, z1;
  normal_pair_at(seed, stream, id, step, slot, z0, z1);
  return z0;
}

}  // namespace weakbsde

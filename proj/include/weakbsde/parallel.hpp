#pragma once

#include "weakbsde/types.hpp"

#include <functional>

namespace weakbsde {

// Fixed decomposition unit for path-indexed work. The block layout depends
// only on n, never on the worker count, so per-block results combined in
// block order are bit-stable across thread counts.
constexpr idx_t kPathBlock = 8192;

inline idx_t n_blocks(idx_t n, idx_t block = kPathBlock) {
  return (n + block - 1) / block;
}

/// Resolve a worker count: requested > 0 wins, else WEAKBSDE_THREADS,
/// else hardware concurrency (at least 1).
int resolve_threads(int requested);

/// Run body(block_index, begin, end) over the fixed blocks of [0, n).
/// Blocks are claimed from a shared counter; the body must only write
/// per-block slots (or disjoint row ranges), never shared accumulators.
void for_blocks(idx_t n, int threads,
                const std::function<void(idx_t, idx_t, idx_t)>& body,
                idx_t block = kPathBlock);

}  // namespace weakbsde

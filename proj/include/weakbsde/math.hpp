#pragma once

#include "weakbsde/types.hpp"

#include <functional>

namespace weakbsde {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF via erfc; accurate in both tails.
double norm_cdf(double x);

/// Inverse standard normal CDF. Rational approximation polished by one
/// Halley step against erfc; absolute error below 1e-13 on (0,1).
double norm_ppf(double p);

/// Fixed-order pairwise sum. The reduction tree depends only on n, so the
/// result is bit-stable across worker counts and runs.
double pairwise_sum(const double* x, idx_t n);
double pairwise_sum(const Eigen::Ref<const Vec>& x);
double pairwise_mean(const Eigen::Ref<const Vec>& x);

struct MeanErr {
  double mean = 0;       // full-sample pairwise mean
  double se = 0;         // batch-means standard error of the mean
  int batches = 0;
};

/// Mean with a batch-means standard error over `batches` contiguous
/// index blocks. Falls back to the plain sample formula when n < batches.
MeanErr batch_mean(const Eigen::Ref<const Vec>& x, int batches = 16);

/// Derivative-free Nelder-Mead descent from `start` with initial simplex
/// edge `step`. Stops on simplex collapse or once *evals reaches
/// max_evals; the objective owns the counter and must increment it per
/// call. best_x/best_f form a running incumbent: callers initialize them
/// (e.g. to the start value or +inf) and the routine only improves them,
/// so restarts accumulate into the same pair.
void nelder_mead(const std::function<double(const Vec&)>& f, const Vec& start,
                 double step, int max_evals, int* evals, Vec& best_x,
                 double& best_f);

}  // namespace weakbsde

#include "weakbsde/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace weakbsde {

double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double norm_ppf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    throw std::invalid_argument("norm_ppf: p outside [0,1]");
  }
  // Acklam's rational approximation in three regions.
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact CDF.
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double pairwise_sum(const double* x, idx_t n) {
  if (n <= 8) {
    double s = 0;
    for (idx_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  idx_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double pairwise_sum(const Eigen::Ref<const Vec>& x) {
  if (x.innerStride() == 1) return pairwise_sum(x.data(), x.size());
  Vec tmp = x;
  return pairwise_sum(tmp.data(), tmp.size());
}

double pairwise_mean(const Eigen::Ref<const Vec>& x) {
  if (x.size() == 0) throw std::invalid_argument("pairwise_mean: empty");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

MeanErr batch_mean(const Eigen::Ref<const Vec>& xin, int batches) {
  Vec storage;
  if (xin.innerStride() != 1) storage = xin;
  const double* data = xin.innerStride() == 1 ? xin.data() : storage.data();
  const idx_t n = xin.size();
  if (n == 0) throw std::invalid_argument("batch_mean: empty");
  const Eigen::Map<const Vec> x(data, n);
  MeanErr out;
  out.mean = pairwise_sum(data, n) / double(n);
  if (n < batches || batches < 2) {
    double ss = 0;
    for (idx_t i = 0; i < n; ++i) {
      double d = x[i] - out.mean;
      ss += d * d;
    }
    out.batches = 1;
    out.se = n > 1 ? std::sqrt(ss / double(n - 1) / double(n)) : 0.0;
    return out;
  }
  Vec bm(batches);
  for (int b = 0; b < batches; ++b) {
    idx_t lo = n * b / batches, hi = n * (b + 1) / batches;
    bm[b] = pairwise_sum(data + lo, hi - lo) / double(hi - lo);
  }
  double ss = 0;
  for (int b = 0; b < batches; ++b) {
    double d = bm[b] - out.mean;
    ss += d * d;
  }
  out.batches = batches;
  out.se = std::sqrt(ss / double(batches - 1) / double(batches));
  return out;
}

void nelder_mead(const std::function<double(const Vec&)>& f, const Vec& start,
                 double step, int max_evals, int* evals, Vec& best_x,
                 double& best_f) {
  const idx_t d = start.size();
  const idx_t np = d + 1;
  const size_t npv = size_t(np);
  std::vector<Vec> xs(npv);
  std::vector<double> fs(npv);
  for (idx_t j = 0; j < np; ++j) {
    Vec x = start;
    if (j > 0) x[j - 1] += step;
    xs[size_t(j)] = x;
    if (*evals >= max_evals) return;
    fs[size_t(j)] = f(x);
    if (fs[size_t(j)] < best_f) {
      best_f = fs[size_t(j)];
      best_x = x;
    }
  }
  std::vector<idx_t> ord(npv);
  auto sort_ord = [&]() {
    for (idx_t j = 0; j < np; ++j) ord[size_t(j)] = j;
    std::sort(ord.begin(), ord.end(),
              [&](idx_t a, idx_t b) { return fs[size_t(a)] < fs[size_t(b)]; });
  };
  auto try_point = [&](const Vec& x, double& fx) {
    fx = f(x);
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
  };
  while (*evals < max_evals) {
    sort_ord();
    const double spread = fs[size_t(ord.back())] - fs[size_t(ord.front())];
    if (spread <= 1e-10 * (1.0 + std::abs(fs[size_t(ord.front())]))) break;
    Vec centroid = Vec::Zero(d);
    for (idx_t j = 0; j < np - 1; ++j) centroid += xs[size_t(ord[size_t(j)])];
    centroid /= double(np - 1);
    const idx_t worst = ord.back();
    const Vec xr = centroid + (centroid - xs[size_t(worst)]);
    double fr;
    try_point(xr, fr);
    if (fr < fs[size_t(ord.front())]) {
      if (*evals < max_evals) {
        const Vec xe = centroid + 2.0 * (centroid - xs[size_t(worst)]);
        double fe;
        try_point(xe, fe);
        if (fe < fr) {
          xs[size_t(worst)] = xe;
          fs[size_t(worst)] = fe;
          continue;
        }
      }
      xs[size_t(worst)] = xr;
      fs[size_t(worst)] = fr;
      continue;
    }
    if (fr < fs[size_t(ord[size_t(np - 2)])]) {
      xs[size_t(worst)] = xr;
      fs[size_t(worst)] = fr;
      continue;
    }
    if (*evals >= max_evals) break;
    const Vec xc = centroid + 0.5 * (xs[size_t(worst)] - centroid);
    double fc;
    try_point(xc, fc);
    if (fc < fs[size_t(worst)]) {
      xs[size_t(worst)] = xc;
      fs[size_t(worst)] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (idx_t j = 1; j < np; ++j) {
      const idx_t k = ord[size_t(j)];
      xs[size_t(k)] = xs[size_t(ord.front())] +
                      0.5 * (xs[size_t(k)] - xs[size_t(ord.front())]);
      if (*evals >= max_evals) return;
      try_point(xs[size_t(k)], fs[size_t(k)]);
    }
  }
}

}  // namespace weakbsde

// Test-only reference implementations and the central-difference gradient
// checker. Everything here is independent of the library's tape path: plain
// scalar formulas over long doubles.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

// ---- scalar reference losses (naive formulas, long double) ----------------

inline long double ref_softmax_prob(const std::vector<double>& z, std::size_t c) {
  long double m = z[0];
  for (double v : z) m = std::max<long double>(m, v);
  long double denom = 0.0L;
  for (double v : z) denom += std::exp(static_cast<long double>(v) - m);
  return std::exp(static_cast<long double>(z[c]) - m) / denom;
}

// Mean over rows of -log p_true. z is n x c row-major.
inline double ref_cross_entropy(const std::vector<double>& z, const std::vector<int>& labels,
                                std::size_t c) {
  long double total = 0.0L;
  std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(z.begin() + static_cast<std::ptrdiff_t>(i * c),
                            z.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    total += -std::log(ref_softmax_prob(row, static_cast<std::size_t>(labels[i])));
  }
  return static_cast<double>(total / n);
}

inline double ref_margin_loss(const std::vector<double>& z, const std::vector<int>& labels,
                              std::size_t c, double margin) {
  std::vector<double> shifted = z;
  for (std::size_t i = 0; i < labels.size(); ++i)
    shifted[i * c + static_cast<std::size_t>(labels[i])] -= margin;
  return ref_cross_entropy(shifted, labels, c);
}

inline double ref_asym_margin_loss(const std::vector<double>& z, const std::vector<int>& labels,
                                   std::size_t c, double margin, int rare) {
  std::vector<double> shifted = z;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == rare) shifted[i * c + static_cast<std::size_t>(labels[i])] -= margin;
  return ref_cross_entropy(shifted, labels, c);
}

inline double ref_focal_loss(const std::vector<double>& z, const std::vector<int>& labels,
                             std::size_t c, double gamma) {
  long double total = 0.0L;
  std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(z.begin() + static_cast<std::ptrdiff_t>(i * c),
                            z.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    long double p = ref_softmax_prob(row, static_cast<std::size_t>(labels[i]));
    total += -std::pow(1.0L - p, static_cast<long double>(gamma)) * std::log(p);
  }
  return static_cast<double>(total / n);
}

inline double ref_asym_focal_loss(const std::vector<double>& z, const std::vector<int>& labels,
                                  std::size_t c, double gamma, int rare) {
  long double total = 0.0L;
  std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(z.begin() + static_cast<std::ptrdiff_t>(i * c),
                            z.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    long double p = ref_softmax_prob(row, static_cast<std::size_t>(labels[i]));
    if (labels[i] == rare)
      total += -std::log(p);
    else
      total += -std::pow(1.0L - p, static_cast<long double>(gamma)) * std::log(p);
  }
  return static_cast<double>(total / n);
}

// Binary soft dice over the rare-class probability column.
inline double ref_soft_dice(const std::vector<double>& z, const std::vector<int>& labels,
                            int rare, double smooth) {
  long double inter = 0.0L, psum = 0.0L, gsum = 0.0L;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<double> row(z.begin() + static_cast<std::ptrdiff_t>(i * 2),
                            z.begin() + static_cast<std::ptrdiff_t>((i + 1) * 2));
    long double p = ref_softmax_prob(row, static_cast<std::size_t>(rare));
    long double g = labels[i] == rare ? 1.0L : 0.0L;
    inter += p * g;
    psum += p;
    gsum += g;
  }
  return static_cast<double>(1.0L - (2.0L * inter + smooth) / (psum + gsum + smooth));
}

// ---- central differences ---------------------------------------------------

// f evaluated at x with one coordinate displaced.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t k, double step) {
  x[k] += step;
  double hi = f(x);
  x[k] -= 2.0 * step;
  double lo = f(x);
  return (hi - lo) / (2.0 * step);
}

struct GradCheck {
  bool ok = true;
  double worst_abs_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// |analytic - numeric| <= max(abs_tol, rel_tol * max(|analytic|, |numeric|))
inline GradCheck check_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x,
                                const std::vector<double>& analytic, double step = 1e-5,
                                double rel_tol = 1e-4, double abs_tol = 1e-7) {
  GradCheck result;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double numeric = central_difference(f, x, k, step);
    double err = std::abs(analytic[k] - numeric);
    double allowed = std::max(abs_tol, rel_tol * std::max(std::abs(analytic[k]),
                                                          std::abs(numeric)));
    if (err > result.worst_abs_err) {
      result.worst_abs_err = err;
      result.worst_index = k;
      result.analytic_at_worst = analytic[k];
      result.numeric_at_worst = numeric;
    }
    if (err > allowed) result.ok = false;
  }
  return result;
}

// ---- misc -------------------------------------------------------------------

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo,
                                         double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> dist(0, 1);
  std::vector<int> v(n);
  for (int& x : v) x = dist(rng);
  return v;
}

}  // namespace oracles

// mupar: the scalar transfer model F_n(c) = E f(c * (x_1 + ... + x_n)).
// Reparametrized as c = alpha/sqrt(n) the landscape G_n(alpha) stabilizes by
// the CLT, so its argmin can be tuned at small n and copied to large n.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/rng.hpp"

namespace mupar {

struct PrimerFunction {
  std::string id;
  bool bounded = true;
  std::function<double(double)> f;
};

// fixed registry; "square" is the deliberate unbounded entry used to test
// rejection
inline const std::vector<PrimerFunction>& primer_registry() {
  static const std::vector<PrimerFunction> reg = {
      {"const_one", true, [](double) { return 1.0; }},
      {"clipped_square", true,
       [](double x) { return std::min((x - 2.0) * (x - 2.0), 10.0); }},
      {"neg_gauss_bump", true, [](double x) { return -std::exp(-(x - 2.0) * (x - 2.0)); }},
      {"square", false, [](double x) { return (x - 2.0) * (x - 2.0); }},
  };
  return reg;
}

inline const PrimerFunction& primer_fn(const std::string& id) {
  for (const auto& fn : primer_registry())
    if (fn.id == id) return fn;
  throw std::invalid_argument("primer: unknown function id '" + id + "'");
}

namespace detail {

// S = x_1 + ... + x_n for Rademacher +-1 coordinates, one value per sample,
// drawn once so every alpha on a grid sees the same randomness
inline std::vector<double> rademacher_sums(int64_t n, int64_t samples, SeededRng& rng) {
  std::vector<double> sums(static_cast<size_t>(samples));
  int64_t words = (n + 63) / 64;
  uint64_t tail_mask = (n % 64) ? ((uint64_t(1) << (n % 64)) - 1) : ~uint64_t(0);
  for (int64_t s = 0; s < samples; ++s) {
    int64_t pop = 0;
    for (int64_t w = 0; w < words; ++w) {
      uint64_t bits = rng.u64();
      if (w == words - 1) bits &= tail_mask;
      pop += std::popcount(bits);
    }
    sums[size_t(s)] = double(2 * pop - n);
  }
  return sums;
}

inline const PrimerFunction& checked_fn(const std::string& id, int64_t n, int64_t samples) {
  const PrimerFunction& fn = primer_fn(id);
  if (!fn.bounded)
    throw std::invalid_argument("primer: function '" + id + "' is unbounded; rejected");
  if (n < 1) throw std::invalid_argument("primer: n must be positive");
  if (samples < 10000) throw std::invalid_argument("primer: need at least 10^4 samples");
  return fn;
}

}  // namespace detail

// Monte-Carlo estimate of F_n(c_1, ..., c_k) = E f((c_1+...+c_k)(x_1+...+x_n))
inline double primer_estimate(int64_t n, const std::vector<double>& c_vec,
                              const std::string& fn_id, int64_t samples, SeededRng rng) {
  const PrimerFunction& fn = detail::checked_fn(fn_id, n, samples);
  if (c_vec.empty()) throw std::invalid_argument("primer: need at least one coefficient");
  double c = 0.0;
  for (double ci : c_vec) c += ci;
  std::vector<double> sums = detail::rademacher_sums(n, samples, rng);
  double acc = 0.0;
  for (double s : sums) acc += fn.f(c * s);
  return acc / double(samples);
}

struct PrimerScan {
  std::vector<double> alphas;
  std::vector<double> values;  // G_n(alpha), shared draws across the grid
  double alpha_star = std::numeric_limits<double>::quiet_NaN();
  size_t star_index = 0;
  bool flat = false;
};

// Scans G_n(alpha) = F_n(alpha/sqrt(n) + c_rest). c_rest models coefficients
// that were left unreparametrized; with c_rest != 0 the argmin drifts like
// alpha* - c_rest*sqrt(n) instead of stabilizing.
inline PrimerScan primer_argmin(int64_t n, const std::vector<double>& alphas,
                                const std::string& fn_id, int64_t samples, SeededRng rng,
                                double c_rest = 0.0) {
  const PrimerFunction& fn = detail::checked_fn(fn_id, n, samples);
  if (alphas.empty()) throw std::invalid_argument("primer: need a nonempty alpha grid");

  PrimerScan scan;
  scan.alphas = alphas;
  scan.values.reserve(alphas.size());
  std::vector<double> sums = detail::rademacher_sums(n, samples, rng);
  double inv_sqrt_n = 1.0 / std::sqrt(double(n));
  for (double alpha : alphas) {
    double c = alpha * inv_sqrt_n + c_rest;
    double acc = 0.0;
    for (double s : sums) acc += fn.f(c * s);
    scan.values.push_back(acc / double(samples));
  }

  auto [mn, mx] = std::minmax_element(scan.values.begin(), scan.values.end());
  if (*mx - *mn <= 1e-12 * std::max(1.0, std::abs(*mx))) {
    scan.flat = true;
    return scan;
  }
  scan.star_index = size_t(mn - scan.values.begin());
  scan.alpha_star = scan.alphas[scan.star_index];
  return scan;
}

}  // namespace mupar

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "matcore.hpp"
#include "rng.hpp"

namespace gldiff {

struct MeanSE {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanSE mean_se(const std::vector<double>& x) {
  if (x.size() < 2) throw InsufficientSamples("need at least two samples");
  const double n = static_cast<double>(x.size());
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double v = 0.0;
  for (double a : x) v += (a - m) * (a - m);
  return {m, std::sqrt(v / (n - 1.0) / n)};
}

inline double sample_variance(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double v = 0.0;
  for (double a : x) v += (a - m) * (a - m);
  return v / (x.size() - 1.0);
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Asymptotic p-values with Stephens' small-sample correction.
inline KSResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw InsufficientSamples("empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double en = std::sqrt(n);
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

inline KSResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientSamples("empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

struct EnergyResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
};

// Energy-distance permutation test on feature vectors. Features are
// standardized by the pooled mean and deviation; at most `cap` points per group
// enter (the first ones, samples being exchangeable).
inline EnergyResult energy_test(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                                std::size_t permutations, std::size_t cap, RngStream& rng) {
  const std::size_t na = std::min(a.size(), cap), nb = std::min(b.size(), cap);
  if (na < 2 || nb < 2) throw InsufficientSamples("energy test needs two points per group");
  const std::size_t n = na + nb, d = a[0].size();
  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < na; ++i) std::copy(a[i].begin(), a[i].end(), z.begin() + i * d);
  for (std::size_t i = 0; i < nb; ++i) std::copy(b[i].begin(), b[i].end(), z.begin() + (na + i) * d);
  for (std::size_t k = 0; k < d; ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += z[i * d + k];
    m /= n;
    for (std::size_t i = 0; i < n; ++i) v += (z[i * d + k] - m) * (z[i * d + k] - m);
    const double s = std::sqrt(v / (n - 1));
    for (std::size_t i = 0; i < n; ++i) z[i * d + k] = s > 0.0 ? (z[i * d + k] - m) / s : 0.0;
  }
  // packed upper triangle of pairwise distances
  std::vector<float> dist(n * (n - 1) / 2);
  double total = 0.0;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = z[i * d + k] - z[j * d + k];
        s += t * t;
      }
      dist[idx++] = static_cast<float>(std::sqrt(s));
      total += dist[idx - 1];
    }
  std::vector<unsigned char> label(n);
  for (std::size_t i = na; i < n; ++i) label[i] = 1;
  auto statistic = [&](const std::vector<unsigned char>& lab) {
    double saa = 0.0, sbb = 0.0;
    std::size_t id = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char li = lab[i];
      for (std::size_t j = i + 1; j < n; ++j, ++id) {
        if (li != lab[j]) continue;
        (li ? sbb : saa) += dist[id];
      }
    }
    const double cross = total - saa - sbb;
    const double e = 2.0 * cross / (double(na) * nb) - 2.0 * saa / (double(na) * na) - 2.0 * sbb / (double(nb) * nb);
    return e * double(na) * nb / double(n);
  };
  EnergyResult res;
  res.statistic = statistic(label);
  res.permutations = permutations;
  std::size_t exceed = 0;
  std::vector<unsigned char> perm = label;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform() * (i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    if (statistic(perm) >= res.statistic) ++exceed;
  }
  res.p_value = (1.0 + exceed) / (1.0 + permutations);
  return res;
}

// ---------------------------------------------------------------------------
// Scalar functionals of matrix samples.

struct Functional {
  std::string name;
  std::function<double(const RMat&)> apply;
};

using FunctionalSet = std::vector<Functional>;

namespace detail {

inline RVec probe_vector(int r, std::uint64_t seed) {
  RngStream s(seed, 0x9e0be);
  RVec x(r);
  for (int i = 0; i < r; ++i) x[i] = s.normal();
  return x / x.norm();
}

}  // namespace detail

// For SPD samples: log tr, log det, log top and bottom eigenvalue, log tr of
// the inverse, log x^T S x for a fixed random unit vector x.
inline FunctionalSet spd_functionals(int r, std::uint64_t probe_seed) {
  const RVec x = detail::probe_vector(r, probe_seed);
  FunctionalSet f;
  f.push_back({"log_tr", [](const RMat& s) { return std::log(s.trace()); }});
  f.push_back({"log_det", [](const RMat& s) { return SPDMatrix<double>(s).log_det(); }});
  if (r > 1) {
    f.push_back({"log_top_eig", [](const RMat& s) { return std::log(eigenvalues<double>(s).maxCoeff()); }});
    f.push_back({"log_bottom_eig", [](const RMat& s) { return std::log(eigenvalues<double>(s).minCoeff()); }});
    f.push_back({"log_tr_inv", [](const RMat& s) { return std::log(SPDMatrix<double>(s).inverse().trace()); }});
    f.push_back({"log_probe", [x](const RMat& s) { return std::log(x.dot(s * x)); }});
  }
  return f;
}

// For general invertible samples: log |det|, log tr(M M^T), log of the extreme
// singular values, and the bilinear probe x^T M y.
inline FunctionalSet matrix_functionals(int r, std::uint64_t probe_seed) {
  const RVec x = detail::probe_vector(r, probe_seed), y = detail::probe_vector(r, probe_seed + 1);
  FunctionalSet f;
  f.push_back({"log_abs_det", [](const RMat& m) { return std::log(std::abs(m.determinant())); }});
  if (r > 1) {
    f.push_back({"log_tr_gram", [](const RMat& m) { return std::log((m * m.transpose()).trace()); }});
    f.push_back({"log_top_sv", [](const RMat& m) { return std::log(singular_values<double>(m).maxCoeff()); }});
    f.push_back({"log_bottom_sv", [](const RMat& m) { return std::log(singular_values<double>(m).minCoeff()); }});
    f.push_back({"probe", [x, y](const RMat& m) { return x.dot(m * y); }});
  } else {
    f.push_back({"value", [](const RMat& m) { return m(0, 0); }});
  }
  return f;
}

inline std::vector<std::vector<double>> apply_functionals(const std::vector<RMat>& xs, const FunctionalSet& fs) {
  std::vector<std::vector<double>> out(xs.size(), std::vector<double>(fs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t k = 0; k < fs.size(); ++k) out[i][k] = fs[k].apply(xs[i]);
  return out;
}

}  // namespace gldiff

#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "errors.hpp"
#include "flows.hpp"
#include "spectra.hpp"

namespace gldiff {

// Binary snapshot, little-endian:
//   u32 dim, u64 grid length, u32 scalar tag (1 real, 2 complex)
//   grid length doubles: the time grid
//   grid length * dim * dim scalars, row-major per grid point;
//   a complex entry is stored as (re, im).
inline constexpr std::uint32_t kScalarReal = 1;
inline constexpr std::uint32_t kScalarComplex = 2;

static_assert(std::endian::native == std::endian::little, "snapshots assume a little-endian host");

template <class S>
constexpr std::uint32_t scalar_tag() {
  return std::is_same_v<S, double> ? kScalarReal : kScalarComplex;
}

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DomainError("truncated snapshot");
  return v;
}

template <class S>
void put_scalar(std::ostream& os, S v) {
  if constexpr (std::is_same_v<S, double>) {
    put(os, v);
  } else {
    put(os, v.real());
    put(os, v.imag());
  }
}

}  // namespace detail

template <class S>
void write_snapshot(std::ostream& os, const MatrixPath<S>& path) {
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(path.dim));
  detail::put<std::uint64_t>(os, path.size());
  detail::put<std::uint32_t>(os, scalar_tag<S>());
  for (double t : path.grid) detail::put(os, t);
  for (const S& v : path.values) detail::put_scalar(os, v);
}

template <class S>
MatrixPath<S> read_snapshot(std::istream& is) {
  MatrixPath<S> path;
  path.dim = static_cast<int>(detail::get<std::uint32_t>(is));
  const auto n = detail::get<std::uint64_t>(is);
  const auto tag = detail::get<std::uint32_t>(is);
  if (tag != scalar_tag<S>()) throw DomainError("snapshot scalar tag mismatch");
  if (path.dim < 1 || path.dim > kMaxDim) throw DomainError("snapshot dimension out of range");
  path.grid.resize(n);
  for (auto& t : path.grid) t = detail::get<double>(is);
  path.values.resize(n * path.block());
  for (auto& v : path.values) {
    if constexpr (std::is_same_v<S, double>) {
      v = detail::get<double>(is);
    } else {
      const double re = detail::get<double>(is);
      v = S(re, detail::get<double>(is));
    }
  }
  if (n > 1) path.dt = path.grid[1] - path.grid[0];
  return path;
}

template <class S>
void write_snapshot_file(const std::string& file, const MatrixPath<S>& path) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DomainError("cannot open " + file);
  write_snapshot(os, path);
}

template <class S>
MatrixPath<S> read_snapshot_file(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DomainError("cannot open " + file);
  return read_snapshot<S>(is);
}

// CSV: t, then entries m_ij row-major (complex entries split into re/im).
template <class S>
void write_path_csv(std::ostream& os, const MatrixPath<S>& path) {
  const int r = path.dim;
  os << "t";
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      const std::string e = "m" + std::to_string(i + 1) + std::to_string(j + 1);
      if constexpr (std::is_same_v<S, double>)
        os << ',' << e;
      else
        os << ',' << e << "_re," << e << "_im";
    }
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < path.size(); ++k) {
    os << path.grid[k];
    for (std::size_t j = 0; j < path.block(); ++j) {
      const S& v = path.values[k * path.block() + j];
      if constexpr (std::is_same_v<S, double>)
        os << ',' << v;
      else
        os << ',' << v.real() << ',' << v.imag();
    }
    os << '\n';
  }
}

inline void write_spectrum_csv(std::ostream& os, const SpectrumPath& path) {
  os << "t";
  for (int i = 0; i < path.dim; ++i) os << ",lambda" << i + 1;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < path.size(); ++k) {
    os << path.grid[k];
    for (int i = 0; i < path.dim; ++i) os << ',' << path.values[k * path.dim + i];
    os << '\n';
  }
}

// One row per sample, lower triangle flattened row by row.
inline void write_samples_csv(std::ostream& os, const std::vector<RMat>& samples) {
  if (samples.empty()) return;
  const int r = static_cast<int>(samples[0].rows());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j <= i; ++j) os << (i || j ? "," : "") << "s" << i + 1 << j + 1;
  os << '\n' << std::setprecision(17);
  for (const auto& s : samples) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j <= i; ++j) os << (i || j ? "," : "") << s(i, j);
    os << '\n';
  }
}

}  // namespace gldiff

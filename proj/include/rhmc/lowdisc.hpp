#pragma once

// Noise for the inner scenario simulations: counter-based seed derivation,
// pseudo-random normal blocks and digitally shifted Sobol' blocks.

#include "rhmc/common.hpp"

#include <Eigen/Core>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef RHMC_SOBOL_DIRECTIONS_FILE
#define RHMC_SOBOL_DIRECTIONS_FILE "data/new-joe-kuo-6.21201"
#endif

namespace rhmc {

/// Row-per-scenario block of numbers.
using NoiseBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based child seed: the same key sequence always gives the same seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Inverse of the standard normal CDF: Acklam's rational approximation
/// followed by one Halley refinement step (|error| well below 1e-9).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: argument outside (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step on Phi(x) - p; the residual is formed from the smaller tail.
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double sqrt_2pi = 2.50662827463100050242;
  const double e = x < 0.0 ? 0.5 * std::erfc(-x * inv_sqrt2) - p : (1.0 - p) - 0.5 * std::erfc(x * inv_sqrt2);
  const double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

template <typename Derived>
NoiseBlock to_normals(const Eigen::MatrixBase<Derived>& uniforms) {
  NoiseBlock out(uniforms.rows(), uniforms.cols());
  for (Eigen::Index i = 0; i < uniforms.rows(); ++i)
    for (Eigen::Index j = 0; j < uniforms.cols(); ++j) out(i, j) = inverse_normal_cdf(uniforms(i, j));
  return out;
}

/// count x dimension standard normals; row i comes from its own substream so
/// rows are independent of how many rows are requested.
inline NoiseBlock pseudo_block(int dimension, int count, std::uint64_t seed) {
  if (dimension < 0 || count < 1) throw std::invalid_argument("pseudo_block: bad shape");
  NoiseBlock out(count, dimension);
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 gen(derive_seed({seed, static_cast<std::uint64_t>(i)}));
    for (int j = 0; j < dimension; ++j) {
      // 53-bit uniform strictly inside (0,1)
      const double u = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
      out(i, j) = inverse_normal_cdf(u);
    }
  }
  return out;
}

/// Joe-Kuo direction numbers, expanded to 52-bit integer direction vectors.
class SobolDirections {
 public:
  static constexpr int kBits = 52;

  /// Parses the Joe-Kuo text format ("d s a m_i..." with a header line).
  /// Dimension 1 (van der Corput) is implicit.
  static SobolDirections load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open Sobol direction numbers: " + path);
    SobolDirections out;
    out.v_.push_back(first_dimension());
    std::string line;
    std::getline(in, line);  // header
    int expected = 2;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      int d = 0, s = 0;
      std::uint64_t a = 0;
      ls >> d >> s >> a;
      if (!ls || d != expected || s < 1 || s > kBits)
        throw std::runtime_error("malformed direction-number line for dimension " + std::to_string(expected));
      std::vector<std::uint64_t> m(s);
      for (auto& mi : m) ls >> mi;
      if (!ls) throw std::runtime_error("truncated direction-number line " + std::to_string(d));
      out.v_.push_back(expand(s, a, m));
      ++expected;
    }
    return out;
  }

  /// Process-wide table: $RHMC_SOBOL_DIRECTIONS if set, else the bundled file.
  static const SobolDirections& shared() {
    static const SobolDirections table = [] {
      const char* env = std::getenv("RHMC_SOBOL_DIRECTIONS");
      return load(env != nullptr ? env : RHMC_SOBOL_DIRECTIONS_FILE);
    }();
    return table;
  }

  int max_dimension() const { return static_cast<int>(v_.size()); }
  const std::array<std::uint64_t, kBits>& directions(int dim) const { return v_.at(dim); }

 private:
  static std::array<std::uint64_t, kBits> first_dimension() {
    std::array<std::uint64_t, kBits> v{};
    for (int i = 0; i < kBits; ++i) v[i] = std::uint64_t{1} << (kBits - 1 - i);
    return v;
  }

  static std::array<std::uint64_t, kBits> expand(int s, std::uint64_t a, const std::vector<std::uint64_t>& m) {
    std::array<std::uint64_t, kBits> v{};
    for (int i = 0; i < s; ++i) v[i] = m[i] << (kBits - 1 - i);
    for (int i = s; i < kBits; ++i) {
      std::uint64_t vi = v[i - s] ^ (v[i - s] >> s);
      for (int k = 1; k < s; ++k)
        if ((a >> (s - 1 - k)) & 1U) vi ^= v[i - k];
      v[i] = vi;
    }
    return v;
  }

  std::vector<std::array<std::uint64_t, kBits>> v_;
};

/// Raw 52-bit integer Sobol' points in Gray-code order, point 0 first.
inline Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sobol_integers(
    int dimension, int count, const SobolDirections& table) {
  if (dimension < 1 || count < 1) throw std::invalid_argument("sobol: bad shape");
  if (dimension > table.max_dimension())
    throw std::out_of_range("sobol: dimension " + std::to_string(dimension) + " exceeds direction table (" +
                            std::to_string(table.max_dimension()) + ")");
  Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(count, dimension);
  std::vector<std::uint64_t> x(dimension, 0);
  for (int i = 0; i < count; ++i) {
    if (i > 0) {
      const int c = std::countr_one(static_cast<std::uint64_t>(i - 1));
      for (int j = 0; j < dimension; ++j) x[j] ^= table.directions(j)[c];
    }
    for (int j = 0; j < dimension; ++j) out(i, j) = x[j];
  }
  return out;
}

/// First `count` Sobol' points, digitally shifted (XOR, 52 bits) with a
/// per-dimension shift derived from `shift_seed`, mapped to bin midpoints so
/// every coordinate is strictly inside (0,1). Without a shift the all-zero
/// first point is skipped instead.
inline NoiseBlock sobol_block(int dimension, int count, std::optional<std::uint64_t> shift_seed,
                              const SobolDirections& table = SobolDirections::shared()) {
  const int skip = shift_seed ? 0 : 1;
  const auto raw = sobol_integers(dimension, count + skip, table);
  constexpr std::uint64_t mask = (std::uint64_t{1} << SobolDirections::kBits) - 1;
  std::vector<std::uint64_t> shift(dimension, 0);
  if (shift_seed) {
    for (int j = 0; j < dimension; ++j)
      shift[j] = derive_seed({*shift_seed, static_cast<std::uint64_t>(j)}) & mask;
  }
  NoiseBlock out(count, dimension);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < dimension; ++j)
      out(i, j) = (static_cast<double>(raw(i + skip, j) ^ shift[j]) + 0.5) * 0x1.0p-52;
  return out;
}

/// How inner scenarios draw their normals.
struct NoiseSpec {
  enum class Kind { Pseudo, Sobol };
  Kind kind = Kind::Sobol;
  int count = 200;
  std::uint64_t seed = 0;

  /// count x dimension standard normals for decision step `step`. Each step
  /// gets a fresh seed (pseudo) or digital shift (Sobol').
  NoiseBlock normals(int dimension, int step) const {
    if (count < 1) throw std::invalid_argument("NoiseSpec: count must be positive");
    const std::uint64_t s = derive_seed({seed, static_cast<std::uint64_t>(step)});
    if (dimension == 0) return NoiseBlock(count, 0);
    if (kind == Kind::Pseudo) return pseudo_block(dimension, count, s);
    return to_normals(sobol_block(dimension, count, s));
  }
};

}  // namespace rhmc

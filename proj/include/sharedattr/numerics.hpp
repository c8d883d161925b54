#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sharedattr/error.hpp"

namespace sharedattr {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      fail(Errc::shape, "matrix storage holds " + std::to_string(values_.size()) + " values, expected " +
                            std::to_string(rows_ * cols_));
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  Vec row_vec(std::size_t r) const {
    auto s = row(r);
    return Vec(s.begin(), s.end());
  }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// SplitMix64 generator. Identical seeds produce identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) using the full 64-bit output.
  double unit() {
    const double v = static_cast<double>(next_u64()) * 0x1.0p-64;
    return v < 1.0 ? v : std::nextafter(1.0, 0.0);
  }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) fail(Errc::invalid_range, "uniform requires lo < hi");
    double v = lo + unit() * (hi - lo);
    // Rounding can land exactly on hi for narrow ranges.
    return v < hi ? v : std::nextafter(hi, lo);
  }

  // Box-Muller, cosine branch only.
  double gaussian() {
    const double u1 = 1.0 - unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n), n > 0. Multiply-shift reduction.
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(Errc::shape, "dot of vectors with different lengths");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail(Errc::shape, "cosine of vectors with different lengths");
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(Errc::degenerate_vector, "cosine of a zero-norm vector");
  return dot(u, v) / (nu * nv);
}

inline Vec normalized(std::span<const double> u) {
  const double n = norm(u);
  if (!(n > 0.0)) fail(Errc::degenerate_vector, "cannot normalize a zero-norm vector");
  Vec out(u.begin(), u.end());
  for (double& x : out) x /= n;
  return out;
}

// out[c] = sum_i A(i, c) * s[i]
inline Vec mat_transpose_vec(const Mat& a, std::span<const double> s) {
  if (a.rows() != s.size()) {
    fail(Errc::shape, "transpose product: matrix has " + std::to_string(a.rows()) + " rows, vector has " +
                          std::to_string(s.size()) + " entries");
  }
  Vec out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double si = s[i];
    if (si == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += r[c] * si;
  }
  return out;
}

// Mat rounded entrywise through float32, the precision used on disk.
inline Mat to_float_precision(const Mat& m) {
  Mat out = m;
  for (double& v : out.flat()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

// FNV-1a over raw bytes; used for fingerprints and immutability checks.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

inline std::uint64_t hash_mat(const Mat& m) {
  auto f = m.flat();
  return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(f.data()), f.size_bytes()));
}

}  // namespace sharedattr

#pragma once

// Dense kernels shared by every module: small vectors, the incrementally
// maintained inverse of an SPD matrix, quantiles, stable softmax helpers and
// the deterministic random-number contract.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace rmb {

struct Tolerances {
  double symmetry = 1e-9;
  double normalization = 1e-12;
};

inline constexpr Tolerances kTolerances{};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool all_finite() const noexcept;

  Vector& operator+=(const Vector& other);
  Vector& operator-=(const Vector& other);
  Vector& operator*=(double factor);
  // this += factor * other
  Vector& add_scaled(const Vector& other, double factor);

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

Vector operator+(Vector lhs, const Vector& rhs);
Vector operator-(Vector lhs, const Vector& rhs);
Vector operator*(double factor, Vector v);

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);
// Returns v / |v|; the zero vector is returned unchanged.
Vector normalized(Vector v);
// Arithmetic mean of equal-dimension vectors.
Vector mean_of(std::span<const Vector> vectors);

// Square row-major matrix used for A_k^{-1}. Symmetry is an invariant of every
// producer in this library; the type itself only stores values.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(std::size_t dim);  // zero matrix
  SpdMatrix(std::size_t dim, std::vector<double> row_major);

  static SpdMatrix identity(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
  const std::vector<double>& row_major() const noexcept { return data_; }

  Vector multiply(const Vector& v) const;
  // v^T M v
  double quadratic_form(const Vector& v) const;
  bool is_symmetric(double tolerance = kTolerances.symmetry) const;

  friend bool operator==(const SpdMatrix&, const SpdMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

// Inverse of (A + c c^T) given A^{-1}, via the Sherman-Morrison identity.
// The result is explicitly symmetrised.
SpdMatrix sherman_morrison_update(const SpdMatrix& a_inv, const Vector& c);

// Linear-interpolation quantile on sorted order statistics, h = q (n - 1).
double quantile(std::span<const double> values, double q);

double log_sum_exp(std::span<const double> values);
Vector log_softmax(const Vector& logits, double temperature = 1.0);
Vector softmax(const Vector& logits, double temperature = 1.0);
double sigmoid(double x);
// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x);

// Deterministic random stream.
//
// Algorithm (pinned): SplitMix64. The 64-bit key is
//   mix64(mix64(seed) ^ fnv1a64(label))
// and draw i returns mix64(key + (i + 1) * 0x9E3779B97F4A7C15). Doubles use
// the top 53 bits; normals use Box-Muller without caching the second value.
// Forking a stream derives a new key from the parent key and a label or index;
// the result is independent of how far the parent has advanced.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64();
  double uniform();            // [0, 1)
  double normal();             // N(0, 1)
  double normal(double mean, double sigma);
  std::size_t uniform_index(std::size_t n);  // [0, n), unbiased
  // Draws an index with probability proportional to `probabilities` (which
  // must sum to ~1).
  std::size_t categorical(std::span<const double> probabilities);

  RngStream fork(std::string_view label) const;
  RngStream fork(std::uint64_t index) const;

 private:
  RngStream(std::uint64_t seed, std::uint64_t key, int) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace rmb

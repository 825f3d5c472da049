#include "rmb/numerics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rmb/errors.h"

namespace rmb {

namespace {

void check_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw ContractViolation(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()) + ")");
  }
}

}  // namespace

bool Vector::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Vector& Vector::operator+=(const Vector& other) { return add_scaled(other, 1.0); }
Vector& Vector::operator-=(const Vector& other) { return add_scaled(other, -1.0); }

Vector& Vector::operator*=(double factor) {
  for (double& x : data_) x *= factor;
  return *this;
}

Vector& Vector::add_scaled(const Vector& other, double factor) {
  check_same_dim(*this, other, "add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += factor * other.data_[i];
  return *this;
}

Vector operator+(Vector lhs, const Vector& rhs) { return lhs += rhs; }
Vector operator-(Vector lhs, const Vector& rhs) { return lhs -= rhs; }
Vector operator*(double factor, Vector v) { return v *= factor; }

double dot(const Vector& a, const Vector& b) {
  check_same_dim(a, b, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) sum += a[i] * b[i];
  return sum;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

Vector normalized(Vector v) {
  const double n = norm(v);
  if (n > 0.0) v *= 1.0 / n;
  return v;
}

Vector mean_of(std::span<const Vector> vectors) {
  if (vectors.empty()) throw EmptyBatchError("mean_of: no vectors");
  Vector sum(vectors.front().dim());
  for (const Vector& v : vectors) sum += v;
  sum *= 1.0 / static_cast<double>(vectors.size());
  return sum;
}

SpdMatrix::SpdMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}

SpdMatrix::SpdMatrix(std::size_t dim, std::vector<double> row_major)
    : dim_(dim), data_(std::move(row_major)) {
  if (data_.size() != dim_ * dim_) {
    throw ContractViolation("SpdMatrix: expected " + std::to_string(dim_ * dim_) + " elements, got " +
                            std::to_string(data_.size()));
  }
}

SpdMatrix SpdMatrix::identity(std::size_t dim) {
  SpdMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

Vector SpdMatrix::multiply(const Vector& v) const {
  if (v.dim() != dim_) throw ContractViolation("SpdMatrix::multiply: dimension mismatch");
  Vector out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sum += data_[i * dim_ + j] * v[j];
    out[i] = sum;
  }
  return out;
}

double SpdMatrix::quadratic_form(const Vector& v) const { return dot(v, multiply(v)); }

bool SpdMatrix::is_symmetric(double tolerance) const {
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = i + 1; j < dim_; ++j) {
      const double a = (*this)(i, j);
      const double b = (*this)(j, i);
      if (std::abs(a - b) > tolerance * std::max(1.0, std::abs(a))) return false;
    }
  }
  return true;
}

SpdMatrix sherman_morrison_update(const SpdMatrix& a_inv, const Vector& c) {
  if (c.dim() != a_inv.dim()) {
    throw ContractViolation("sherman_morrison_update: matrix is " + std::to_string(a_inv.dim()) +
                            "x" + std::to_string(a_inv.dim()) + " but vector has dim " +
                            std::to_string(c.dim()));
  }
  const Vector u = a_inv.multiply(c);
  const double denom = 1.0 + dot(c, u);
  const std::size_t d = a_inv.dim();
  SpdMatrix out(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double upper = a_inv(i, j) - u[i] * u[j] / denom;
      out(i, j) = upper;
      out(j, i) = upper;
    }
  }
  return out;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw EmptyHistoryError("quantile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("log_sum_exp of an empty list");
  const double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double x : values) sum += std::exp(x - m);
  return m + std::log(sum);
}

Vector log_softmax(const Vector& logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("log_softmax: temperature must be positive");
  if (logits.dim() == 0) throw ContractViolation("log_softmax: empty logits");
  if (!logits.all_finite()) throw ContractViolation("log_softmax: non-finite logits");
  Vector scaled = (1.0 / temperature) * logits;
  const double lse = log_sum_exp(scaled.values());
  for (double& x : scaled.values()) x -= lse;
  return scaled;
}

Vector softmax(const Vector& logits, double temperature) {
  Vector out = log_softmax(logits, temperature);
  for (double& x : out.values()) x = std::exp(x);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : seed_(seed), key_(mix64(mix64(seed) ^ fnv1a64(label))) {}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::normal(double mean, double sigma) { return mean + sigma * normal(); }

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw ContractViolation("uniform_index: empty range");
  // Lemire's multiply-shift with rejection.
  const std::uint64_t range = n;
  __uint128_t m = static_cast<__uint128_t>(next_u64()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<__uint128_t>(next_u64()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

std::size_t RngStream::categorical(std::span<const double> probabilities) {
  if (probabilities.empty()) throw ContractViolation("categorical: no outcomes");
  const double u = uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > 0.0) last_positive = i;
    cumulative += probabilities[i];
    if (u < cumulative) return i;
  }
  return last_positive;
}

RngStream RngStream::fork(std::string_view label) const {
  return RngStream(seed_, mix64(key_ ^ fnv1a64(label)), 0);
}

RngStream RngStream::fork(std::uint64_t index) const {
  return RngStream(seed_, mix64(key_ ^ mix64(index + 0x632BE59BD9B4E019ULL)), 0);
}

}  // namespace rmb

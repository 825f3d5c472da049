#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rmb/policy.h"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Gauss-Jordan inversion with partial pivoting.
inline Matrix invert(Matrix a) {
  const std::size_t n = a.size();
  Matrix inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (a[pivot][col] == 0.0) throw std::runtime_error("singular matrix");
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Central finite-difference gradient in extended precision.
using Real = long double;
using RealVector = std::vector<Real>;

inline std::vector<double> numeric_gradient(const std::function<Real(const RealVector&)>& f,
                                            const std::vector<double>& at, Real h = 1e-5L) {
  RealVector x(at.begin(), at.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real saved = x[i];
    x[i] = saved + h;
    const Real up = f(x);
    x[i] = saved - h;
    const Real down = f(x);
    x[i] = saved;
    g[i] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

// log softmax_y(theta . phi) over the query's universe, from the definition.
inline Real log_prob(const RealVector& theta, const rmb::Query& q, std::size_t y) {
  std::vector<Real> z;
  Real mx = -std::numeric_limits<Real>::infinity();
  for (const auto& r : q.universe) {
    Real s = 0.0L;
    for (std::size_t i = 0; i < theta.size(); ++i) s += theta[i] * r.features[i];
    z.push_back(s);
    mx = std::max(mx, s);
  }
  Real sum = 0.0L;
  for (Real s : z) sum += std::exp(s - mx);
  return z[y] - mx - std::log(sum);
}

// Mean DPO and length-normalised NLL over `pairs`, combined per `mode`.
inline Real preference_loss(const RealVector& theta, const RealVector& ref,
                            const std::vector<rmb::PreferencePair>& pairs, Real beta, rmb::LossMode mode) {
  Real dpo = 0.0L, nll = 0.0L;
  for (const auto& p : pairs) {
    const Real lw = log_prob(theta, *p.query, p.winner), ll = log_prob(theta, *p.query, p.loser);
    const Real margin = beta * ((lw - log_prob(ref, *p.query, p.winner)) - (ll - log_prob(ref, *p.query, p.loser)));
    dpo += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    nll += -lw / p.query->universe[p.winner].length;
  }
  const Real n = static_cast<Real>(pairs.size());
  switch (mode) {
    case rmb::LossMode::kDpo: return dpo / n;
    case rmb::LossMode::kNll: return nll / n;
    case rmb::LossMode::kDpoPlusNll: return (dpo + nll) / n;
  }
  return 0.0L;
}

// Type-7 sample quantile written from the definition.
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v[lo];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace oracle

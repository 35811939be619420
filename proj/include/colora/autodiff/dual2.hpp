#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "colora/error.hpp"

namespace colora::ad {

inline constexpr int kMaxDirections = 24;

/// Second-order multi-direction dual number.
///
/// Carries a value, k first directional derivatives and k *pure* second
/// directional derivatives (no cross terms). Slots at index >= k are zero.
struct Dual2 {
  double val = 0.0;
  int k = 0;
  std::array<double, kMaxDirections> d1{};
  std::array<double, kMaxDirections> d2{};

  Dual2() = default;
  Dual2(double v) : val(v) {}  // NOLINT(google-explicit-constructor)

  /// Independent variable seeded along `direction` (first derivative 1).
  static Dual2 variable(double v, int directions, int direction) {
    Dual2 out(v);
    out.k = directions;
    out.d1[static_cast<std::size_t>(direction)] = 1.0;
    return out;
  }

  Dual2& operator+=(const Dual2& o) {
    val += o.val;
    k = std::max(k, o.k);
    for (int j = 0; j < k; ++j) {
      d1[j] += o.d1[j];
      d2[j] += o.d2[j];
    }
    return *this;
  }
  Dual2& operator-=(const Dual2& o) {
    val -= o.val;
    k = std::max(k, o.k);
    for (int j = 0; j < k; ++j) {
      d1[j] -= o.d1[j];
      d2[j] -= o.d2[j];
    }
    return *this;
  }
  Dual2& operator*=(const Dual2& o) {
    const int kk = std::max(k, o.k);
    for (int j = 0; j < kk; ++j) {
      d2[j] = d2[j] * o.val + 2.0 * d1[j] * o.d1[j] + val * o.d2[j];
      d1[j] = d1[j] * o.val + val * o.d1[j];
    }
    val *= o.val;
    k = kk;
    return *this;
  }
  Dual2& operator*=(double s) {
    val *= s;
    for (int j = 0; j < k; ++j) {
      d1[j] *= s;
      d2[j] *= s;
    }
    return *this;
  }
};

/// Applies a scalar function with known first and second derivative.
inline Dual2 chain(const Dual2& x, double g, double dg, double ddg) {
  Dual2 out(g);
  out.k = x.k;
  for (int j = 0; j < x.k; ++j) {
    out.d1[j] = dg * x.d1[j];
    out.d2[j] = ddg * x.d1[j] * x.d1[j] + dg * x.d2[j];
  }
  return out;
}

inline Dual2 operator+(Dual2 a, const Dual2& b) { return a += b; }
inline Dual2 operator-(Dual2 a, const Dual2& b) { return a -= b; }
inline Dual2 operator*(Dual2 a, const Dual2& b) { return a *= b; }
inline Dual2 operator*(Dual2 a, double s) { return a *= s; }
inline Dual2 operator*(double s, Dual2 a) { return a *= s; }
inline Dual2 operator-(Dual2 a) { return a *= -1.0; }

inline Dual2 reciprocal(const Dual2& x) {
  const double r = 1.0 / x.val;
  return chain(x, r, -r * r, 2.0 * r * r * r);
}
inline Dual2 operator/(const Dual2& a, const Dual2& b) { return a * reciprocal(b); }

inline Dual2 sin(const Dual2& x) {
  const double s = std::sin(x.val);
  return chain(x, s, std::cos(x.val), -s);
}
inline Dual2 cos(const Dual2& x) {
  const double c = std::cos(x.val);
  return chain(x, c, -std::sin(x.val), -c);
}
inline Dual2 exp(const Dual2& x) {
  const double e = std::exp(x.val);
  return chain(x, e, e, e);
}
inline Dual2 powi(const Dual2& x, int n) {
  if (n == 0) return Dual2(1.0);
  if (n == 1) return x;
  const double pm2 = n >= 2 ? std::pow(x.val, n - 2) : std::pow(x.val, static_cast<double>(n - 2));
  const double pm1 = pm2 * x.val;
  return chain(x, pm1 * x.val, n * pm1, static_cast<double>(n) * (n - 1) * pm2);
}

/// Logistic sigmoid evaluated without overflow.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// swish(z) = z * sigmoid(z) and its first two derivatives.
struct SwishDerivs {
  double value, first, second;
};
inline SwishDerivs swish_derivs(double z) {
  const double s = sigmoid(z);
  const double ds = s * (1.0 - s);
  return {z * s, s + z * ds, ds * (2.0 + z * (1.0 - 2.0 * s))};
}

inline double swish(double z) { return z * sigmoid(z); }
inline Dual2 swish(const Dual2& x) {
  const SwishDerivs d = swish_derivs(x.val);
  return chain(x, d.value, d.first, d.second);
}

inline double powi(double x, int n) { return std::pow(x, n); }
inline double reciprocal(double x) { return 1.0 / x; }

/// Forward-mode evaluation of f at x along `directions` (each of dim(x)).
/// f maps std::span<const Dual2> to std::vector<Dual2>.
/// d1[j] / d2[j] of each output hold the first / second directional
/// derivative along directions[j].
template <class F>
std::vector<Dual2> jvp2(F&& f, const Eigen::VectorXd& x, std::span<const Eigen::VectorXd> directions) {
  const int k = static_cast<int>(directions.size());
  if (k > kMaxDirections || k > x.size()) throw InvalidInput("jvp2: too many directions");
  std::vector<Dual2> seeded(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Dual2& s = seeded[static_cast<std::size_t>(i)];
    s.val = x(i);
    s.k = k;
    for (int j = 0; j < k; ++j) {
      if (directions[static_cast<std::size_t>(j)].size() != x.size())
        throw InvalidInput("jvp2: direction dimension mismatch");
      s.d1[j] = directions[static_cast<std::size_t>(j)](i);
    }
  }
  return f(std::span<const Dual2>(seeded));
}

/// Jacobian of a scalar field with respect to its latent parameters.
///
/// `f(phi, x)` takes latent duals and a point index; entry (k, j) of the
/// result is d f(x_k) / d phi_j, obtained with q forward-mode seeds.
template <class F>
Eigen::MatrixXd jac_latent(F&& f, const Eigen::VectorXd& phi, Eigen::Index n_points) {
  const int q = static_cast<int>(phi.size());
  if (q < 1 || q > kMaxDirections) throw InvalidInput("jac_latent: latent dimension out of range");
  std::vector<Dual2> seeded(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) seeded[static_cast<std::size_t>(j)] = Dual2::variable(phi(j), q, j);
  Eigen::MatrixXd jac(n_points, q);
  for (Eigen::Index k = 0; k < n_points; ++k) {
    const Dual2 out = f(std::span<const Dual2>(seeded), k);
    for (int j = 0; j < q; ++j) jac(k, j) = out.d1[j];
  }
  return jac;
}

}  // namespace colora::ad

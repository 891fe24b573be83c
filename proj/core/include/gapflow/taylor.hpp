#pragma once

#include <array>
#include <cmath>

namespace gapflow {

// Forward-mode dual number with N directional derivatives.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constant promotion is intended
  static Dual variable(double value, int slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator*=(double s) {
    v *= s;
    for (int i = 0; i < N; ++i) d[i] *= s;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    const double q = v * inv;
    for (int i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    v = q;
    return *this;
  }
  Dual& operator+=(double s) {
    v += s;
    return *this;
  }
  Dual& operator-=(double s) {
    v -= s;
    return *this;
  }
};

template <int N>
inline Dual<N> operator-(Dual<N> a) {
  a.v = -a.v;
  for (int i = 0; i < N; ++i) a.d[i] = -a.d[i];
  return a;
}
template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N>
inline Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <int N>
inline Dual<N> operator+(Dual<N> a, double s) { return a += s; }
template <int N>
inline Dual<N> operator+(double s, Dual<N> a) { return a += s; }
template <int N>
inline Dual<N> operator-(Dual<N> a, double s) { return a -= s; }
template <int N>
inline Dual<N> operator-(double s, const Dual<N>& a) { return (-a) += s; }
template <int N>
inline Dual<N> operator*(Dual<N> a, double s) { return a *= s; }
template <int N>
inline Dual<N> operator*(double s, Dual<N> a) { return a *= s; }
template <int N>
inline Dual<N> operator/(Dual<N> a, double s) { return a *= (1.0 / s); }
template <int N>
inline Dual<N> operator/(double s, const Dual<N>& a) { return Dual<N>(s) / a; }

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  // derivative of sqrt at 0 is taken as 0; only used for |u| where |u| u is C1
  const double s = r.v > 0.0 ? 0.5 / r.v : 0.0;
  for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
  return r;
}

inline double value_of(double x) { return x; }
template <int N>
inline double value_of(const Dual<N>& x) { return x.v; }

// Second-order Taylor jet in two variables, used for unit normal derivatives.
struct Taylor2 {
  double v = 0.0;
  double g[2] = {0.0, 0.0};
  double h[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};

inline Taylor2 operator+(const Taylor2& a, const Taylor2& b) {
  Taylor2 r;
  r.v = a.v + b.v;
  for (int i = 0; i < 2; ++i) {
    r.g[i] = a.g[i] + b.g[i];
    for (int j = 0; j < 2; ++j) r.h[i][j] = a.h[i][j] + b.h[i][j];
  }
  return r;
}
inline Taylor2 operator-(const Taylor2& a, const Taylor2& b) {
  Taylor2 r;
  r.v = a.v - b.v;
  for (int i = 0; i < 2; ++i) {
    r.g[i] = a.g[i] - b.g[i];
    for (int j = 0; j < 2; ++j) r.h[i][j] = a.h[i][j] - b.h[i][j];
  }
  return r;
}
inline Taylor2 operator*(const Taylor2& a, const Taylor2& b) {
  Taylor2 r;
  r.v = a.v * b.v;
  for (int i = 0; i < 2; ++i) {
    r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    for (int j = 0; j < 2; ++j)
      r.h[i][j] = a.h[i][j] * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.h[i][j];
  }
  return r;
}
// Apply a scalar function with f, f', f'' at a.v.
inline Taylor2 chain(const Taylor2& a, double f, double fp, double fpp) {
  Taylor2 r;
  r.v = f;
  for (int i = 0; i < 2; ++i) {
    r.g[i] = fp * a.g[i];
    for (int j = 0; j < 2; ++j) r.h[i][j] = fp * a.h[i][j] + fpp * a.g[i] * a.g[j];
  }
  return r;
}
inline Taylor2 rsqrt(const Taylor2& a) {
  const double s = 1.0 / std::sqrt(a.v);
  return chain(a, s, -0.5 * s / a.v, 0.75 * s / (a.v * a.v));
}

}  // namespace gapflow

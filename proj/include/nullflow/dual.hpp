// Forward-mode dual numbers with a fixed number of derivative slots.
// The solver evaluates its nodal residual kernel once per node with all
// stencil entries seeded, which yields Jacobian rows that are exact to
// machine precision.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace nullflow {

template <int N>
struct Dual {
  double v = 0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constant lift
  static Dual seeded(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
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
};

template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
inline Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r(-a.v);
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <int N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  const double inv2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return r;
}

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  const double g = 0.5 / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = g * a.d[i];
  return r;
}

// double passthroughs so kernels can be written once for both scalar types
inline double sqrt(double a) { return std::sqrt(a); }
inline double value_of(double a) { return a; }
template <int N>
inline double value_of(const Dual<N>& a) { return a.v; }

}  // namespace nullflow

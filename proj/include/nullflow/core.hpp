// Small shared kernel: fixed-size tensor algebra for chart dimension d <= 3,
// deterministic RNG / hashing, adaptive quadrature and root finding.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace nullflow {

inline constexpr double kPi = std::numbers::pi;
inline constexpr const char* kVersion = "nullflow 0.1.0";

using Vec = std::array<double, 3>;  // chart point / vector; entries past dim are 0

// Dense symmetric-capable d x d container (d <= 3). Entries past dim stay 0.
struct Mat3 {
  double a[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  double& operator()(int i, int j) { return a[i][j]; }
  double operator()(int i, int j) const { return a[i][j]; }
};

// Third-order container, t(i,j,k) = partial_k of a matrix entry (i,j).
struct Ten3 {
  double a[3][3][3] = {};
  double& operator()(int i, int j, int k) { return a[i][j][k]; }
  double operator()(int i, int j, int k) const { return a[i][j][k]; }
};

inline Mat3 identity(int dim) {
  Mat3 m;
  for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

inline double dot(const Vec& a, const Vec& b, int dim) {
  double s = 0;
  for (int i = 0; i < dim; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline double det(const Mat3& m, int dim) {
  if (dim == 1) return m(0, 0);
  if (dim == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

// Inverse of a d x d matrix; throws on (near-)singular input.
Mat3 inverse(const Mat3& m, int dim);

// Smallest eigenvalue of a symmetric d x d matrix (cyclic Jacobi).
double smallest_eigenvalue_sym(const Mat3& m, int dim);

// Largest |eigenvalue| of K relative to g, i.e. of the pencil K v = lambda g v.
double largest_abs_eigenvalue_rel(const Mat3& K, const Mat3& g, int dim);

// g-norm of a covector w: sqrt(w_i ginv^{ij} w_j).
inline double covector_norm(const Vec& w, const Mat3& ginv, int dim) {
  double s = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) s += w[i] * ginv(i, j) * w[j];
  return std::sqrt(std::max(0.0, s));
}

// ---------------------------------------------------------------------------
// Deterministic utilities. Hand-rolled uniform sampling so outputs are
// bit-identical across standard libraries.

struct Rng {
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int n) { return int(next_u64() % std::uint64_t(n)); }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_double17(double v);

// ---------------------------------------------------------------------------
// 1D numerics.

// Adaptive Simpson quadrature on [a, b] to absolute tolerance tol.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-11);

// Brent root bracketing solver; requires f(a) * f(b) <= 0.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double tol = 1e-12);

// Simple chunked parallel loop; identical results for any thread count
// (no shared accumulation). threads == 0 picks hardware concurrency.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  int threads);

// Global thread preference set by the CLI (--threads); 1 by default.
int& worker_threads();

}  // namespace nullflow

#include "nullflow/core.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

namespace nullflow {

Mat3 inverse(const Mat3& m, int dim) {
  const double d = det(m, dim);
  if (!(std::abs(d) > 1e-300)) throw std::runtime_error("singular matrix");
  Mat3 inv;
  if (dim == 1) {
    inv(0, 0) = 1.0 / d;
    return inv;
  }
  if (dim == 2) {
    inv(0, 0) = m(1, 1) / d;
    inv(1, 1) = m(0, 0) / d;
    inv(0, 1) = -m(0, 1) / d;
    inv(1, 0) = -m(1, 0) / d;
    return inv;
  }
  inv(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / d;
  inv(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / d;
  inv(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / d;
  inv(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / d;
  inv(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / d;
  inv(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / d;
  inv(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / d;
  inv(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / d;
  inv(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / d;
  return inv;
}

namespace {

// Cyclic Jacobi eigenvalues for symmetric m (d <= 3).
std::array<double, 3> jacobi_eigs(Mat3 m, int dim) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int p = 0; p < dim; ++p)
      for (int q = p + 1; q < dim; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < dim; ++p)
      for (int q = p + 1; q < dim; ++q) {
        if (std::abs(m(p, q)) < 1e-300) continue;
        const double theta = (m(q, q) - m(p, p)) / (2 * m(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        Mat3 r = identity(3);
        r(p, p) = c;
        r(q, q) = c;
        r(p, q) = s;
        r(q, p) = -s;
        Mat3 tmp;
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) {
            double acc = 0;
            for (int k = 0; k < dim; ++k)
              for (int l = 0; l < dim; ++l) acc += r(k, i) * m(k, l) * r(l, j);
            tmp(i, j) = acc;
          }
        m = tmp;
      }
  }
  std::array<double, 3> e = {m(0, 0), m(1, 1), m(2, 2)};
  std::sort(e.begin(), e.begin() + dim);
  return e;
}

Mat3 cholesky(const Mat3& g, int dim) {
  Mat3 l;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = g(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0) throw std::runtime_error("metric not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

}  // namespace

double smallest_eigenvalue_sym(const Mat3& m, int dim) {
  return jacobi_eigs(m, dim)[0];
}

double largest_abs_eigenvalue_rel(const Mat3& K, const Mat3& g, int dim) {
  // Reduce K v = lambda g v to the symmetric problem (L^{-1} K L^{-T}).
  const Mat3 l = cholesky(g, dim);
  Mat3 linv;
  for (int i = 0; i < dim; ++i) {
    linv(i, i) = 1.0 / l(i, i);
    for (int j = i - 1; j >= 0; --j) {
      double s = 0;
      for (int k = j + 1; k <= i; ++k) s += l(i, k) * linv(k, j);
      linv(i, j) = -s / l(i, i);
    }
  }
  Mat3 b;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      double acc = 0;
      for (int p = 0; p < dim; ++p)
        for (int q = 0; q < dim; ++q) acc += linv(i, p) * K(p, q) * linv(j, q);
      b(i, j) = acc;
    }
  const auto e = jacobi_eigs(b, dim);
  double worst = 0;
  for (int i = 0; i < dim; ++i) worst = std::max(worst, std::abs(e[i]));
  return worst;
}

std::string format_double17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

double simpson(const std::function<double(double)>& f, double a, double fa, double b,
               double fb, double m, double fm) {
  return (b - a) / 6.0 * (fa + 4 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double fa, double b,
                double fb, double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(f, a, fa, m, fm, lm, flm);
  const double right = simpson(f, m, fm, b, fb, rm, frm);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive(f, a, fa, m, fm, lm, flm, left, tol * 0.5, depth - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, tol * 0.5, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  return adaptive(f, a, fa, b, fb, m, fm, simpson(f, a, fa, b, fb, m, fm), tol, 40);
}

double brent_root(const std::function<double(double)>& f, double a, double b, double tol) {
  double fa = f(a), fb = f(b);
  if (fa == 0) return a;
  if (fb == 0) return b;
  if (fa * fb > 0) throw std::runtime_error("brent_root: no sign change in bracket");
  if (std::abs(fa) < std::abs(fb)) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  double c = a, fc = fa, s = b, d = 0;
  bool mflag = true;
  for (int it = 0; it < 200; ++it) {
    if (fb == 0 || std::abs(b - a) < tol) break;
    if (fa != fc && fb != fc) {
      s = a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) +
          c * fa * fb / ((fc - fa) * (fc - fb));
    } else {
      s = b - fb * (b - a) / (fb - fa);
    }
    const double lo = (3 * a + b) / 4;
    const bool cond = !((s > std::min(lo, b) && s < std::max(lo, b))) ||
                      (mflag && std::abs(s - b) >= std::abs(b - c) / 2) ||
                      (!mflag && std::abs(s - b) >= std::abs(c - d) / 2) ||
                      (mflag && std::abs(b - c) < tol) || (!mflag && std::abs(c - d) < tol);
    if (cond) {
      s = 0.5 * (a + b);
      mflag = true;
    } else {
      mflag = false;
    }
    const double fs = f(s);
    d = c;
    c = b;
    fc = fb;
    if (fa * fs < 0) {
      b = s;
      fb = fs;
    } else {
      a = s;
      fa = fs;
    }
    if (std::abs(fa) < std::abs(fb)) {
      std::swap(a, b);
      std::swap(fa, fb);
    }
  }
  return b;
}

int& worker_threads() {
  static int n = 1;
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  int threads) {
  if (threads <= 0) threads = int(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (threads == 1 || n < 4096) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(n, t * chunk), hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace nullflow

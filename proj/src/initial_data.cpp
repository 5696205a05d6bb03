#include "nullflow/initial_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace nullflow {

std::string family_name(Family f) {
  switch (f) {
    case Family::euclidean: return "euclidean";
    case Family::schwarzschild_isotropic: return "schwarzschild_isotropic";
    case Family::radial_traceless: return "radial_traceless";
    case Family::radial_profile: return "radial_profile";
    case Family::tabulated_grid: return "tabulated_grid";
    case Family::custom: return "custom";
  }
  return "?";
}

Mat3 InitialDataSet::metric_inv(const Vec& x) const {
  const Mat3 g = metric(x);
  if (smallest_eigenvalue_sym(g, dim) <= 0.0) {
    std::ostringstream os;
    os << "metric not positive definite at (" << x[0] << ", " << x[1] << ", " << x[2] << ")";
    throw InvalidDataError(os.str());
  }
  return inverse(g, dim);
}

double InitialDataSet::sqrt_det_metric(const Vec& x) const {
  return std::sqrt(det(metric(x), dim));
}

double InitialDataSet::trK(const Vec& x) const {
  const Mat3 gi = metric_inv(x);
  const Mat3 k = extrinsic(x);
  double s = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) s += gi(i, j) * k(i, j);
  return s;
}

namespace {

void require_positive_radius(const Vec& x, int dim) {
  if (norm(x, dim) <= 0.0)
    throw std::domain_error("family evaluator: point at the chart origin");
}

}  // namespace

InitialDataSet make_euclidean(int dim) {
  InitialDataSet d;
  d.dim = dim;
  d.family = Family::euclidean;
  d.decay_constant = 1.0;
  d.metric = [dim](const Vec&) { return identity(dim); };
  d.metric_deriv = [](const Vec&) { return Ten3{}; };
  d.extrinsic = [](const Vec&) { return Mat3{}; };
  d.extrinsic_deriv = [](const Vec&) { return Ten3{}; };
  return d;
}

InitialDataSet make_schwarzschild_isotropic(double mass, int dim) {
  InitialDataSet d;
  d.dim = dim;
  d.family = Family::schwarzschild_isotropic;
  d.mass = mass;
  d.decay_constant = 3.0 * std::max(1.0, mass);
  d.metric = [mass, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    const double phi = 1.0 + mass / (2 * r);
    Mat3 g;
    const double c = std::pow(phi, 4);
    for (int i = 0; i < dim; ++i) g(i, i) = c;
    return g;
  };
  d.metric_deriv = [mass, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    const double phi = 1.0 + mass / (2 * r);
    const double dphi = -mass / (2 * r * r);
    const double dc = 4 * std::pow(phi, 3) * dphi;  // d(phi^4)/dr
    Ten3 t;
    for (int k = 0; k < dim; ++k) {
      const double drdk = x[k] / r;
      for (int i = 0; i < dim; ++i) t(i, i, k) = dc * drdk;
    }
    return t;
  };
  d.extrinsic = [](const Vec&) { return Mat3{}; };
  d.extrinsic_deriv = [](const Vec&) { return Ten3{}; };
  return d;
}

InitialDataSet make_radial_traceless(double mass, double c, int dim) {
  InitialDataSet d = make_schwarzschild_isotropic(mass, dim);
  d.family = Family::radial_traceless;
  d.coefficient = c;
  d.decay_constant = std::max(d.decay_constant, 2.0 * std::abs(c));
  // K_ij = beta(r) phi^4 (delta_ij - dim * x_i x_j / r^2), beta = -c/r^3.
  d.extrinsic = [mass, c, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    const double phi4 = std::pow(1.0 + mass / (2 * r), 4);
    const double beta = -c / (r * r * r);
    Mat3 k;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        k(i, j) = beta * phi4 * ((i == j ? 1.0 : 0.0) - dim * x[i] * x[j] / (r * r));
    return k;
  };
  d.extrinsic_deriv = [mass, c, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    const double phi = 1.0 + mass / (2 * r);
    const double phi4 = std::pow(phi, 4);
    const double dphi4 = 4 * std::pow(phi, 3) * (-mass / (2 * r * r));
    const double beta = -c / (r * r * r);
    const double dbeta = 3 * c / (r * r * r * r);
    Ten3 t;
    for (int k = 0; k < dim; ++k) {
      const double drdk = x[k] / r;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
          const double proj = (i == j ? 1.0 : 0.0) - dim * x[i] * x[j] / (r * r);
          const double dproj =
              -dim * (((i == k ? 1.0 : 0.0) * x[j] + (j == k ? 1.0 : 0.0) * x[i]) / (r * r) -
                      2 * x[i] * x[j] * x[k] / (r * r * r * r));
          t(i, j, k) = (dbeta * phi4 + beta * dphi4) * drdk * proj + beta * phi4 * dproj;
        }
    }
    return t;
  };
  return d;
}

// ---------------------------------------------------------------------------
// Natural cubic spline with analytic derivative.

namespace {

struct Spline {
  std::vector<double> x, y, m;  // m: second derivatives

  static Spline build(const std::vector<double>& xs, const std::vector<double>& ys) {
    Spline s;
    s.x = xs;
    s.y = ys;
    const int n = int(xs.size());
    s.m.assign(n, 0.0);
    if (n < 3) return s;
    std::vector<double> a(n, 0), b(n, 0), cc(n, 0), rhs(n, 0);
    b[0] = b[n - 1] = 1.0;
    for (int i = 1; i + 1 < n; ++i) {
      const double hl = xs[i] - xs[i - 1], hr = xs[i + 1] - xs[i];
      a[i] = hl / 6;
      b[i] = (hl + hr) / 3;
      cc[i] = hr / 6;
      rhs[i] = (ys[i + 1] - ys[i]) / hr - (ys[i] - ys[i - 1]) / hl;
    }
    for (int i = 1; i < n; ++i) {  // Thomas
      const double w = a[i] / b[i - 1];
      b[i] -= w * cc[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    s.m[n - 1] = rhs[n - 1] / b[n - 1];
    for (int i = n - 2; i >= 0; --i) s.m[i] = (rhs[i] - cc[i] * s.m[i + 1]) / b[i];
    return s;
  }

  int segment(double t) const {
    const int n = int(x.size());
    int lo = int(std::upper_bound(x.begin(), x.end(), t) - x.begin()) - 1;
    return std::clamp(lo, 0, n - 2);
  }

  double eval(double t) const {
    const int i = segment(t);
    const double h = x[i + 1] - x[i], A = (x[i + 1] - t) / h, B = (t - x[i]) / h;
    return A * y[i] + B * y[i + 1] +
           ((A * A * A - A) * m[i] + (B * B * B - B) * m[i + 1]) * h * h / 6;
  }

  double deriv(double t) const {
    const int i = segment(t);
    const double h = x[i + 1] - x[i], A = (x[i + 1] - t) / h, B = (t - x[i]) / h;
    return (y[i + 1] - y[i]) / h +
           ((1 - 3 * A * A) * m[i] + (3 * B * B - 1) * m[i + 1]) * h / 6;
  }
};

}  // namespace

InitialDataSet make_radial_profile(const RadialProfileTable& table, int dim) {
  if (table.r.size() < 4) throw InvalidDataError("radial profile needs >= 4 rows");
  auto sa = std::make_shared<Spline>(Spline::build(table.r, table.g_tan));
  auto sb = std::make_shared<Spline>(Spline::build(table.r, table.g_rad));
  auto st = std::make_shared<Spline>(Spline::build(table.r, table.kappa_t));
  auto sn = std::make_shared<Spline>(Spline::build(table.r, table.kappa_n));

  InitialDataSet d;
  d.dim = dim;
  d.family = Family::radial_profile;
  d.decay_constant = 1.0;
  auto radial_mats = [dim](double a, double b, const Vec& x, double r) {
    Mat3 g;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        const double rad = x[i] * x[j] / (r * r);
        g(i, j) = a * ((i == j ? 1.0 : 0.0) - rad) + b * rad;
      }
    return g;
  };
  d.metric = [sa, sb, radial_mats, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    return radial_mats(sa->eval(r), sb->eval(r), x, r);
  };
  d.extrinsic = [sa, sb, st, sn, radial_mats, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    return radial_mats(st->eval(r) * sa->eval(r), sn->eval(r) * sb->eval(r), x, r);
  };
  auto deriv_of = [dim](const std::shared_ptr<Spline>& fa, const std::shared_ptr<Spline>& fb) {
    return [fa, fb, dim](const Vec& x) {
      require_positive_radius(x, dim);
      const double r = norm(x, dim);
      const double a = fa->eval(r), b = fb->eval(r);
      const double da = fa->deriv(r), db = fb->deriv(r);
      Ten3 t;
      for (int k = 0; k < dim; ++k) {
        const double drdk = x[k] / r;
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) {
            const double rad = x[i] * x[j] / (r * r);
            const double drad =
                ((i == k ? 1.0 : 0.0) * x[j] + (j == k ? 1.0 : 0.0) * x[i]) / (r * r) -
                2 * x[i] * x[j] * x[k] / (r * r * r * r);
            t(i, j, k) = (da * ((i == j ? 1.0 : 0.0) - rad) + db * rad) * drdk +
                         (b - a) * drad;
          }
      }
      return t;
    };
  };
  d.metric_deriv = deriv_of(sa, sb);
  // K shares the radial structure with coefficients kt*a and kn*b.
  auto skt = std::make_shared<Spline>(*st), skn = std::make_shared<Spline>(*sn);
  auto ka = std::make_shared<Spline>(*sa), kb = std::make_shared<Spline>(*sb);
  d.extrinsic_deriv = [ka, kb, skt, skn, dim](const Vec& x) {
    require_positive_radius(x, dim);
    const double r = norm(x, dim);
    const double a = skt->eval(r) * ka->eval(r), b = skn->eval(r) * kb->eval(r);
    const double da = skt->deriv(r) * ka->eval(r) + skt->eval(r) * ka->deriv(r);
    const double db = skn->deriv(r) * kb->eval(r) + skn->eval(r) * kb->deriv(r);
    Ten3 t;
    for (int k = 0; k < dim; ++k) {
      const double drdk = x[k] / r;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
          const double rad = x[i] * x[j] / (r * r);
          const double drad =
              ((i == k ? 1.0 : 0.0) * x[j] + (j == k ? 1.0 : 0.0) * x[i]) / (r * r) -
              2 * x[i] * x[j] * x[k] / (r * r * r * r);
          t(i, j, k) = (da * ((i == j ? 1.0 : 0.0) - rad) + db * rad) * drdk + (b - a) * drad;
        }
    }
    return t;
  };
  return d;
}

RadialProfileTable load_radial_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidDataError("cannot open radial profile: " + path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("nullflow-radial-profile 1", 0) != 0)
    throw InvalidDataError("bad radial profile header: " + path);
  RadialProfileTable t;
  double r, a, b, kt, kn;
  while (in >> r >> a >> b >> kt >> kn) {
    t.r.push_back(r);
    t.g_tan.push_back(a);
    t.g_rad.push_back(b);
    t.kappa_t.push_back(kt);
    t.kappa_n.push_back(kn);
  }
  return t;
}

void save_radial_profile(const RadialProfileTable& table, const std::string& path) {
  std::ofstream out(path);
  out << "nullflow-radial-profile 1 rows " << table.r.size() << "\n";
  for (std::size_t i = 0; i < table.r.size(); ++i)
    out << format_double17(table.r[i]) << " " << format_double17(table.g_tan[i]) << " "
        << format_double17(table.g_rad[i]) << " " << format_double17(table.kappa_t[i]) << " "
        << format_double17(table.kappa_n[i]) << "\n";
}

// ---------------------------------------------------------------------------
// Tabulated Cartesian grid with trilinear interpolation.

namespace {

struct GridTable {
  int dim = 3;
  Vec origin{};
  std::array<int, 3> shape{1, 1, 1};
  double h = 1.0;
  // per node: dim*(dim+1)/2 entries for g then for K
  std::vector<double> values;

  int ncomp() const { return dim * (dim + 1) / 2; }
  std::size_t node_index(int i, int j, int k) const {
    return (std::size_t(k) * shape[1] + j) * shape[0] + i;
  }

  // Multilinear basis evaluation with analytic gradient.
  void eval(const Vec& x, int comp_offset, Mat3* out, Ten3* dout) const {
    std::array<int, 3> cell{0, 0, 0};
    std::array<double, 3> t{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      double s = (x[a] - origin[a]) / h;
      int c = int(std::floor(s));
      c = std::clamp(c, 0, shape[a] - 2);
      cell[a] = c;
      t[a] = s - c;
    }
    const int corners = 1 << dim;
    std::array<std::array<int, 2>, 6> sym{};
    int c = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) sym[c++] = {i, j};
    for (int comp = 0; comp < ncomp(); ++comp) {
      double v = 0;
      Vec dv{};
      for (int corner = 0; corner < corners; ++corner) {
        double w = 1.0;
        Vec dw{};
        for (int a = 0; a < dim; ++a) dw[a] = 1.0;
        for (int a = 0; a < dim; ++a) {
          const bool hi = corner & (1 << a);
          const double wa = hi ? t[a] : 1.0 - t[a];
          const double dwa = hi ? 1.0 : -1.0;
          w *= wa;
          for (int b = 0; b < dim; ++b) dw[b] *= (b == a) ? dwa : wa;
        }
        std::array<int, 3> idx = cell;
        for (int a = 0; a < dim; ++a)
          if (corner & (1 << a)) idx[a] += 1;
        const double nodal =
            values[node_index(idx[0], idx[1], idx[2]) * (2 * ncomp()) + comp_offset + comp];
        v += w * nodal;
        for (int a = 0; a < dim; ++a) dv[a] += dw[a] / h * nodal;
      }
      const auto [i, j] = sym[comp];
      (*out)(i, j) = v;
      (*out)(j, i) = v;
      if (dout)
        for (int a = 0; a < dim; ++a) {
          (*dout)(i, j, a) = dv[a];
          (*dout)(j, i, a) = dv[a];
        }
    }
  }
};

}  // namespace

InitialDataSet load_tabulated_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidDataError("cannot open tabulated grid: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  auto table = std::make_shared<GridTable>();
  hs >> magic >> version >> table->dim;
  if (magic != "nullflow-grid" || version != 1)
    throw InvalidDataError("bad tabulated grid header: " + path);
  for (int a = 0; a < table->dim; ++a) hs >> table->shape[a];
  hs >> table->h;
  for (int a = 0; a < table->dim; ++a) hs >> table->origin[a];
  if (!hs) throw InvalidDataError("truncated tabulated grid header: " + path);

  const int nper = 2 * table->ncomp();
  std::size_t nodes = 1;
  for (int a = 0; a < table->dim; ++a) nodes *= std::size_t(table->shape[a]);
  table->values.assign(nodes * nper, 0.0);
  for (std::size_t nidx = 0; nidx < nodes; ++nidx) {
    Vec x;
    for (int a = 0; a < table->dim; ++a)
      if (!(in >> x[a])) throw InvalidDataError("truncated tabulated grid body");
    for (int cidx = 0; cidx < nper; ++cidx)
      if (!(in >> table->values[nidx * nper + cidx]))
        throw InvalidDataError("truncated tabulated grid body");
  }

  InitialDataSet d;
  d.dim = table->dim;
  d.family = Family::tabulated_grid;
  d.decay_constant = 1.0;
  const int nc = table->ncomp();
  d.metric = [table](const Vec& x) {
    Mat3 g;
    table->eval(x, 0, &g, nullptr);
    return g;
  };
  d.metric_deriv = [table](const Vec& x) {
    Mat3 g;
    Ten3 t;
    table->eval(x, 0, &g, &t);
    return t;
  };
  d.extrinsic = [table, nc](const Vec& x) {
    Mat3 k;
    table->eval(x, nc, &k, nullptr);
    return k;
  };
  d.extrinsic_deriv = [table, nc](const Vec& x) {
    Mat3 k;
    Ten3 t;
    table->eval(x, nc, &k, &t);
    return t;
  };
  return d;
}

void save_tabulated_grid(const InitialDataSet& data, const std::string& path, int dim,
                         const Vec& origin, const std::array<int, 3>& shape, double h) {
  std::ofstream out(path);
  out << "nullflow-grid 1 " << dim;
  for (int a = 0; a < dim; ++a) out << " " << shape[a];
  out << " " << format_double17(h);
  for (int a = 0; a < dim; ++a) out << " " << format_double17(origin[a]);
  out << "\n";
  const int nk = (dim == 3) ? shape[2] : 1, nj = (dim >= 2) ? shape[1] : 1;
  for (int k = 0; k < nk; ++k)
    for (int j = 0; j < nj; ++j)
      for (int i = 0; i < shape[0]; ++i) {
        Vec x{origin[0] + i * h, origin[1] + j * h, origin[2] + k * h};
        const Mat3 g = data.metric(x), kk = data.extrinsic(x);
        for (int a = 0; a < dim; ++a) out << format_double17(x[a]) << " ";
        for (int a = 0; a < dim; ++a)
          for (int b = a; b < dim; ++b) out << format_double17(g(a, b)) << " ";
        for (int a = 0; a < dim; ++a)
          for (int b = a; b < dim; ++b) out << format_double17(kk(a, b)) << " ";
        out << "\n";
      }
}

// ---------------------------------------------------------------------------
// Validation.

std::vector<Vec> sphere_points(int dim, double r, int count) {
  std::vector<Vec> pts;
  pts.reserve(count);
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2 * kPi * (i + 0.5) / count;
      pts.push_back({r * std::cos(th), r * std::sin(th), 0.0});
    }
    return pts;
  }
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden * i;
    pts.push_back({r * rho * std::cos(th), r * rho * std::sin(th), r * z});
  }
  return pts;
}

DecayReport validate_asymptotic_flatness(const InitialDataSet& data,
                                         const std::vector<double>& radii,
                                         int samples_per_sphere) {
  if (radii.empty()) throw InvalidDataError("validate_asymptotic_flatness: empty radii");
  DecayReport rep;
  rep.radii = radii;
  rep.decay_constant = data.decay_constant;
  const double n = data.n();
  rep.names = {"metric_deviation", "metric_gradient", "extrinsic", "extrinsic_gradient",
               "extrinsic_coordinate_trace"};
  rep.exponents = {n - 1, n, n, n + 1, (n + 3) / 2.0};
  rep.measured = {0, 0, 0, 0, 0};

  for (double r : radii) {
    for (const Vec& x : sphere_points(data.dim, r, samples_per_sphere)) {
      const Mat3 g = data.metric(x);
      if (smallest_eigenvalue_sym(g, data.dim) <= 0.0) {
        std::ostringstream os;
        os << "non-invertible metric at sample (" << x[0] << ", " << x[1] << ", " << x[2]
           << ")";
        throw InvalidDataError(os.str());
      }
      const Ten3 dg = data.metric_deriv(x);
      const Mat3 k = data.extrinsic(x);
      const Ten3 dk = data.extrinsic_deriv(x);
      double gdev = 0, dgmax = 0, kmax = 0, dkmax = 0, ktr = 0;
      for (int i = 0; i < data.dim; ++i) {
        ktr += k(i, i);
        for (int j = 0; j < data.dim; ++j) {
          gdev = std::max(gdev, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
          kmax = std::max(kmax, std::abs(k(i, j)));
          for (int l = 0; l < data.dim; ++l) {
            dgmax = std::max(dgmax, std::abs(dg(i, j, l)));
            dkmax = std::max(dkmax, std::abs(dk(i, j, l)));
          }
        }
      }
      const std::array<double, 5> q = {gdev, dgmax, kmax, dkmax, std::abs(ktr)};
      for (int row = 0; row < 5; ++row)
        rep.measured[row] = std::max(rep.measured[row], std::pow(r, rep.exponents[row]) * q[row]);
    }
  }
  rep.all_pass = true;
  for (int row = 0; row < 5; ++row) {
    rep.pass[row] = rep.measured[row] <= rep.decay_constant;
    rep.all_pass = rep.all_pass && rep.pass[row];
  }
  return rep;
}

TrKReport validate_trK_sign(const InitialDataSet& data, const std::vector<Vec>& points,
                            double tol) {
  TrKReport rep;
  rep.pass = true;
  rep.worst_value = std::numeric_limits<double>::infinity();
  for (const Vec& x : points) {
    const double t = data.trK(x);
    if (t < rep.worst_value) {
      rep.worst_value = t;
      rep.worst_point = x;
    }
  }
  if (points.empty()) rep.worst_value = 0.0;
  rep.pass = rep.worst_value >= -tol;
  return rep;
}

}  // namespace nullflow

#include "colora/pde/problem.hpp"

#include <cmath>
#include <numbers>

#include "colora/error.hpp"

namespace colora::pde {
namespace {

constexpr double kPi = std::numbers::pi;

// Applies a 5-point periodic stencil with weights w[-2..2] along one axis.
void stencil5(const Grid& g, int axis, const double* u, double* out, const double (&w)[5]) {
  const Eigen::Index s = g.stride(axis);
  const int nk = g.n[static_cast<std::size_t>(axis)];
  const Eigen::Index outer = g.size() / (s * nk);
  for (Eigen::Index o = 0; o < outer; ++o) {
    const Eigen::Index base = o * nk * s;
    for (int i = 0; i < nk; ++i) {
      const Eigen::Index im2 = base + ((i - 2 + 2 * nk) % nk) * s;
      const Eigen::Index im1 = base + ((i - 1 + nk) % nk) * s;
      const Eigen::Index i0 = base + i * s;
      const Eigen::Index ip1 = base + ((i + 1) % nk) * s;
      const Eigen::Index ip2 = base + ((i + 2) % nk) * s;
      for (Eigen::Index j = 0; j < s; ++j)
        out[i0 + j] = w[0] * u[im2 + j] + w[1] * u[im1 + j] + w[2] * u[i0 + j] + w[3] * u[ip1 + j] +
                      w[4] * u[ip2 + j];
    }
  }
}

}  // namespace

Grid Grid::periodic(std::vector<int> n, std::vector<double> lo, std::vector<double> hi) {
  if (n.empty() || n.size() != lo.size() || n.size() != hi.size()) throw InvalidInput("Grid: dimension mismatch");
  for (std::size_t k = 0; k < n.size(); ++k) {
    if (n[k] < 5) throw InvalidInput("Grid: at least 5 points per dimension are required");
    if (!(hi[k] > lo[k])) throw InvalidInput("Grid: empty domain");
  }
  return Grid{std::move(n), std::move(lo), std::move(hi)};
}

Eigen::Index Grid::size() const {
  Eigen::Index s = 1;
  for (int v : n) s *= v;
  return s;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= spacing(k);
  return v;
}

Eigen::Index Grid::stride(int k) const {
  Eigen::Index s = 1;
  for (int j = dim() - 1; j > k; --j) s *= n[static_cast<std::size_t>(j)];
  return s;
}

Mat Grid::points() const {
  const Eigen::Index total = size();
  Mat p(dim(), total);
  for (Eigen::Index idx = 0; idx < total; ++idx)
    for (int k = 0; k < dim(); ++k) {
      const int i = static_cast<int>((idx / stride(k)) % n[static_cast<std::size_t>(k)]);
      p(k, idx) = coord(k, i);
    }
  return p;
}

void d1_periodic(const Grid& g, int axis, const double* u, double* out) {
  const double h = g.spacing(axis);
  const double c = 1.0 / (12.0 * h);
  const double w[5] = {c, -8.0 * c, 0.0, 8.0 * c, -c};
  stencil5(g, axis, u, out, w);
}

void d2_periodic(const Grid& g, int axis, const double* u, double* out) {
  const double h = g.spacing(axis);
  const double c = 1.0 / (12.0 * h * h);
  const double w[5] = {-c, 16.0 * c, -30.0 * c, 16.0 * c, -c};
  stencil5(g, axis, u, out, w);
}

Vec Problem::initial(const Grid& g, double mu) const {
  const Mat pts = g.points();
  const Eigen::Index n = g.size();
  Vec u(n * fields());
  for (int f = 0; f < fields(); ++f)
    for (Eigen::Index i = 0; i < n; ++i) u(f * n + i) = u0(pts.col(i).data(), f, mu);
  return u;
}

// ---------------------------------------------------------------------------

double Advection1D::bump(double x) { return std::exp(-100.0 * (x - 0.5) * (x - 0.5)); }

double Advection1D::u0(const double* x, int, double) const { return bump(x[0]); }

void Advection1D::grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const {
  out.resize(u.size());
  d1_periodic(g, 0, u.data(), out.data());
  out *= -mu;
}

Mat Advection1D::point_rhs(double mu, const PointState& s) const { return -mu * s.du[0]; }

double advection_exact(const std::function<double(double)>& u0, double t, double mu, double x, double lo,
                       double period) {
  double s = std::fmod(x - t * mu - lo, period);
  if (s < 0.0) s += period;
  return u0(lo + s);
}

// ---------------------------------------------------------------------------

double Burgers1D::u0(const double* x, int, double) const {
  const double s = x[0] - kPi / 10.0;
  return std::exp(-(14.0 * kPi) * (14.0 * kPi) * s * s * s * s);
}

void Burgers1D::grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const {
  const Eigen::Index n = g.size();
  Vec ux(n), uxx(n);
  d1_periodic(g, 0, u.data(), ux.data());
  d2_periodic(g, 0, u.data(), uxx.data());
  out = -u.cwiseProduct(ux) + mu * uxx;
}

Mat Burgers1D::point_rhs(double mu, const PointState& s) const {
  return -s.u.cwiseProduct(s.du[0]) + mu * s.ddu[0];
}

// ---------------------------------------------------------------------------

double Burgers2D::u0(const double* x, int, double) const {
  const double a = x[0] - kPi / 10.0;
  const double b = x[1] - kPi / 10.0;
  const double r2 = a * a + b * b;
  return std::exp(-(14.0 * kPi) * (14.0 * kPi) * r2 * r2);
}

void Burgers2D::grid_rhs(const Grid& g, double mu, const Vec& w, Vec& out) const {
  const Eigen::Index n = g.size();
  out.resize(2 * n);
  Vec dx(n), dy(n), dxx(n), dyy(n);
  const auto u = w.head(n);
  const auto v = w.tail(n);
  for (int f = 0; f < 2; ++f) {
    const double* q = w.data() + f * n;
    d1_periodic(g, 0, q, dx.data());
    d1_periodic(g, 1, q, dy.data());
    d2_periodic(g, 0, q, dxx.data());
    d2_periodic(g, 1, q, dyy.data());
    out.segment(f * n, n) = -u.cwiseProduct(dx) - v.cwiseProduct(dy) + mu * (dxx + dyy);
  }
}

Mat Burgers2D::point_rhs(double mu, const PointState& s) const {
  Mat out(2, s.u.cols());
  for (int f = 0; f < 2; ++f)
    out.row(f) = -s.u.row(0).cwiseProduct(s.du[0].row(f)) - s.u.row(1).cwiseProduct(s.du[1].row(f)) +
                 mu * (s.ddu[0].row(f) + s.ddu[1].row(f));
  return out;
}

// ---------------------------------------------------------------------------

double Vlasov2D::potential(double x) {
  return -(0.2 + 0.2 * std::cos(kPi * x * x * x * x) + 0.1 * std::sin(kPi * x));
}

double Vlasov2D::dpotential(double x) {
  return 0.8 * kPi * x * x * x * std::sin(kPi * x * x * x * x) - 0.1 * kPi * std::cos(kPi * x);
}

double Vlasov2D::u0(const double* x, int, double mu) const {
  const double a = x[0] - 0.2 + mu;
  const double b = x[1] - 0.2 + mu;
  return std::exp(-100.0 * (a * a + b * b));
}

void Vlasov2D::grid_rhs(const Grid& g, double, const Vec& u, Vec& out) const {
  const Eigen::Index n = g.size();
  Vec d1x(n), d2x(n);
  d1_periodic(g, 0, u.data(), d1x.data());
  d1_periodic(g, 1, u.data(), d2x.data());
  out.resize(n);
  const int n0 = g.n[0], n1 = g.n[1];
  for (int i = 0; i < n0; ++i) {
    const double dphi = dpotential(g.coord(0, i));
    for (int j = 0; j < n1; ++j) {
      const Eigen::Index idx = static_cast<Eigen::Index>(i) * n1 + j;
      out(idx) = -g.coord(1, j) * d1x(idx) + dphi * d2x(idx);
    }
  }
}

Mat Vlasov2D::point_rhs(double, const PointState& s) const {
  Mat out(1, s.u.cols());
  for (Eigen::Index k = 0; k < s.u.cols(); ++k)
    out(0, k) = -s.x(1, k) * s.du[0](0, k) + dpotential(s.x(0, k)) * s.du[1](0, k);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> Rde1D::hi() const { return {2.0 * kPi}; }

double Rde1D::omega(double eta) { return k_pre * std::exp((eta - eta_c) / alpha); }
double Rde1D::beta(double eta, double mu) { return mu / (1.0 + std::exp(r * (eta - eta_p))); }
double Rde1D::xi(double eta) { return -eps * eta; }

double Rde1D::u0(const double* x, int field, double) const {
  if (field == 0) return 0.4 * std::exp(-2.25 * (x[0] - kPi) * (x[0] - kPi)) + 1.0;
  return 0.75;
}

void Rde1D::grid_rhs(const Grid& g, double mu, const Vec& w, Vec& out) const {
  const Eigen::Index n = g.size();
  out.resize(2 * n);
  Vec ex(n), exx(n), lxx(n);
  d1_periodic(g, 0, w.data(), ex.data());
  d2_periodic(g, 0, w.data(), exx.data());
  d2_periodic(g, 0, w.data() + n, lxx.data());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = w(i), lam = w(n + i);
    const double react = (1.0 - lam) * omega(eta);
    out(i) = -eta * ex(i) + nu * exx(i) + react + xi(eta);
    out(n + i) = nu * lxx(i) + react - beta(eta, mu) * lam;
  }
}

Mat Rde1D::point_rhs(double mu, const PointState& s) const {
  Mat out(2, s.u.cols());
  for (Eigen::Index k = 0; k < s.u.cols(); ++k) {
    const double eta = s.u(0, k), lam = s.u(1, k);
    const double react = (1.0 - lam) * omega(eta);
    out(0, k) = -eta * s.du[0](0, k) + nu * s.ddu[0](0, k) + react + xi(eta);
    out(1, k) = nu * s.ddu[0](1, k) + react - beta(eta, mu) * lam;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Problem> make_problem(const std::string& name) {
  if (name == "advection") return std::make_unique<Advection1D>();
  if (name == "burgers1d") return std::make_unique<Burgers1D>();
  if (name == "burgers2d") return std::make_unique<Burgers2D>();
  if (name == "vlasov") return std::make_unique<Vlasov2D>();
  if (name == "rde") return std::make_unique<Rde1D>();
  throw InvalidInput("unknown problem '" + name + "'");
}

}  // namespace colora::pde

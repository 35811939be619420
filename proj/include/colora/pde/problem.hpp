#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace colora::pde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Uniform tensor grid; periodic dimensions exclude the right endpoint.
/// Points are stored row-major: the last coordinate varies fastest.
struct Grid {
  std::vector<int> n;
  std::vector<double> lo;
  std::vector<double> hi;

  static Grid periodic(std::vector<int> n, std::vector<double> lo, std::vector<double> hi);

  int dim() const { return static_cast<int>(n.size()); }
  Eigen::Index size() const;
  double spacing(int k) const { return (hi[k] - lo[k]) / n[k]; }
  double coord(int k, int i) const { return lo[k] + i * spacing(k); }
  double cell_volume() const;
  /// Coordinates of every point, d x size().
  Mat points() const;
  /// Flat stride of dimension k.
  Eigen::Index stride(int k) const;

  bool operator==(const Grid&) const = default;
};

/// 4th-order central first and second derivatives along one axis of a
/// periodic grid; `u` and `out` hold one field of grid.size() values.
void d1_periodic(const Grid& g, int axis, const double* u, double* out);
void d2_periodic(const Grid& g, int axis, const double* u, double* out);

/// Field values and spatial derivatives at scattered points, physical units.
/// Each matrix is fields x n_points.
struct PointState {
  Mat x;                 // d x n
  Mat u;                 // F x n
  std::vector<Mat> du;   // per dimension
  std::vector<Mat> ddu;  // per dimension, pure second derivatives
};

enum class Scheme { Rk4, Dopri5, ImplicitEuler };

/// Default time integration for a problem's full-order model.
struct SchemeConfig {
  Scheme scheme = Scheme::Dopri5;
  double dt = 1e-3;  // rk4 / implicit Euler
  double rtol = 1e-8;
  double atol = 1e-10;
};

/// A parameterized time-dependent PDE du/dt = f(x, u, du, ddu; mu) on a periodic box.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual int fields() const = 0;
  virtual std::vector<double> lo() const = 0;
  virtual std::vector<double> hi() const = 0;
  virtual double mu_lo() const = 0;
  virtual double mu_hi() const = 0;
  virtual double t_end() const = 0;
  virtual SchemeConfig default_scheme() const = 0;
  virtual std::vector<int> default_grid() const = 0;
  /// Whether point_rhs reads second derivatives.
  virtual bool needs_second() const { return true; }

  /// Initial value of `field` at point x.
  virtual double u0(const double* x, int field, double mu) const = 0;
  /// Method-of-lines rhs; u and out are field-major, each field grid.size() long.
  virtual void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const = 0;
  /// Pointwise rhs used by the Neural Galerkin route.
  virtual Mat point_rhs(double mu, const PointState& s) const = 0;

  Grid make_grid(const std::vector<int>& n) const { return Grid::periodic(n, lo(), hi()); }
  Vec initial(const Grid& g, double mu) const;
};

class Advection1D final : public Problem {
 public:
  std::string name() const override { return "advection"; }
  int dim() const override { return 1; }
  int fields() const override { return 1; }
  std::vector<double> lo() const override { return {0.0}; }
  std::vector<double> hi() const override { return {1.0}; }
  double mu_lo() const override { return 0.5; }
  double mu_hi() const override { return 1.5; }
  double t_end() const override { return 1.0; }
  SchemeConfig default_scheme() const override { return {Scheme::Dopri5, 1e-3, 1e-9, 1e-11}; }
  std::vector<int> default_grid() const override { return {512}; }
  bool needs_second() const override { return false; }
  double u0(const double* x, int field, double mu) const override;
  void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const override;
  Mat point_rhs(double mu, const PointState& s) const override;

  static double bump(double x);
};

/// Viscous Burgers on the unit circle: u_t = -u u_x + mu u_xx.
class Burgers1D final : public Problem {
 public:
  std::string name() const override { return "burgers1d"; }
  int dim() const override { return 1; }
  int fields() const override { return 1; }
  std::vector<double> lo() const override { return {0.0}; }
  std::vector<double> hi() const override { return {1.0}; }
  double mu_lo() const override { return 1e-3; }
  double mu_hi() const override { return 1e-2; }
  double t_end() const override { return 1.0; }
  SchemeConfig default_scheme() const override { return {Scheme::Dopri5, 1e-3, 1e-8, 1e-10}; }
  std::vector<int> default_grid() const override { return {256}; }
  double u0(const double* x, int field, double mu) const override;
  void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const override;
  Mat point_rhs(double mu, const PointState& s) const override;
};

/// Two-field viscous Burgers on [0,1)^2 with identical initial fields.
class Burgers2D final : public Problem {
 public:
  std::string name() const override { return "burgers2d"; }
  int dim() const override { return 2; }
  int fields() const override { return 2; }
  std::vector<double> lo() const override { return {0.0, 0.0}; }
  std::vector<double> hi() const override { return {1.0, 1.0}; }
  double mu_lo() const override { return 1e-3; }
  double mu_hi() const override { return 1e-2; }
  double t_end() const override { return 1.0; }
  SchemeConfig default_scheme() const override { return {Scheme::ImplicitEuler, 1e-3, 1e-8, 1e-10}; }
  std::vector<int> default_grid() const override { return {128, 128}; }
  double u0(const double* x, int field, double mu) const override;
  void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const override;
  Mat point_rhs(double mu, const PointState& s) const override;
};

/// Vlasov transport in phase space [-1,1)^2; mu shifts the initial condition.
class Vlasov2D final : public Problem {
 public:
  std::string name() const override { return "vlasov"; }
  int dim() const override { return 2; }
  int fields() const override { return 1; }
  std::vector<double> lo() const override { return {-1.0, -1.0}; }
  std::vector<double> hi() const override { return {1.0, 1.0}; }
  double mu_lo() const override { return 0.2; }
  double mu_hi() const override { return 0.4; }
  double t_end() const override { return 5.0; }
  SchemeConfig default_scheme() const override { return {Scheme::Dopri5, 1e-3, 1e-8, 1e-10}; }
  std::vector<int> default_grid() const override { return {128, 128}; }
  bool needs_second() const override { return false; }
  double u0(const double* x, int field, double mu) const override;
  void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const override;
  Mat point_rhs(double mu, const PointState& s) const override;

  /// Electric potential and its derivative in x1.
  static double potential(double x);
  static double dpotential(double x);
};

/// Rotating detonation engine model with fields (eta, lambda) on [0, 2 pi).
class Rde1D final : public Problem {
 public:
  static constexpr double nu = 0.025;
  static constexpr double k_pre = 1.0;
  static constexpr double alpha = 0.3;
  static constexpr double eta_c = 1.1;
  static constexpr double eta_p = 0.5;
  static constexpr double r = 5.0;
  static constexpr double eps = 0.11;

  std::string name() const override { return "rde"; }
  int dim() const override { return 1; }
  int fields() const override { return 2; }
  std::vector<double> lo() const override { return {0.0}; }
  std::vector<double> hi() const override;
  double mu_lo() const override { return 2.0; }
  double mu_hi() const override { return 3.1; }
  double t_end() const override { return 20.0; }
  SchemeConfig default_scheme() const override { return {Scheme::ImplicitEuler, 1e-2, 1e-8, 1e-10}; }
  std::vector<int> default_grid() const override { return {256}; }
  double u0(const double* x, int field, double mu) const override;
  void grid_rhs(const Grid& g, double mu, const Vec& u, Vec& out) const override;
  Mat point_rhs(double mu, const PointState& s) const override;

  static double omega(double eta);
  static double beta(double eta, double mu);
  static double xi(double eta);
};

/// Problem by name: advection, burgers1d, burgers2d, vlasov, rde.
std::unique_ptr<Problem> make_problem(const std::string& name);

/// u0((x - t mu) wrapped into [lo, lo + period)).
double advection_exact(const std::function<double(double)>& u0, double t, double mu, double x, double lo = 0.0,
                       double period = 1.0);

}  // namespace colora::pde

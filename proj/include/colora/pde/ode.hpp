#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace colora::pde {

using Vec = Eigen::VectorXd;

/// dy = f(t, y); `dy` is preallocated to the size of y.
using OdeRhs = std::function<void(double t, const Vec& y, Vec& dy)>;

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  long newton_iters = 0;
  long linear_iters = 0;

  bool operator==(const OdeStats&) const = default;
};

struct OdeResult {
  std::vector<Vec> y;  // one entry per requested output time
  OdeStats stats;
};

struct Dopri5Options {
  double rtol = 1e-6;
  double atol = 1e-6;
  double h0 = 0.0;  // 0 selects the initial step automatically
  double hmin = 1e-12;
  double hmax = 0.0;  // 0 means unbounded
  long max_steps = 1000000;
};

/// Optional hooks for dopri5. `project` may modify a state in place and is
/// applied to every accepted step and every dense output; `observe` sees each
/// accepted step together with f at that (projected) state.
struct Dopri5Hooks {
  std::function<bool(double t, Vec& y)> project;
  std::function<void(double t, const Vec& y, const Vec& f)> observe;
};

/// Dormand-Prince 5(4) with embedded error control and 4th-order dense output.
/// Output times must be non-decreasing and not before t0.
OdeResult dopri5(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out,
                 const Dopri5Options& opt = {}, const Dopri5Hooks& hooks = {});

/// Classical fixed-step RK4. Each output interval is split into equal steps of
/// size at most dt.
OdeResult rk4(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out, double dt);

struct NewtonOptions {
  double tol = 1e-10;  // max-norm of the implicit residual
  int max_iters = 25;
  int dense_limit = 128;  // larger systems use matrix-free GMRES
  int gmres_restart = 40;
  int gmres_max_iters = 400;
  double gmres_rtol = 1e-9;
};

/// Fixed-step implicit Euler; every step is solved by damped Newton.
OdeResult implicit_euler(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out, double dt,
                         const NewtonOptions& opt = {});

/// Restarted GMRES for A x = b with A given as a product; x holds the initial
/// guess on entry. Returns the iteration count.
int gmres(const std::function<void(const Vec& v, Vec& av)>& apply, const Vec& b, Vec& x, double rtol, int restart,
          int max_iters);

}  // namespace colora::pde

#include "colora/pde/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "colora/error.hpp"

namespace colora::pde {
namespace {

void check_outputs(double t0, std::span<const double> t_out) {
  double prev = t0;
  for (double t : t_out) {
    if (!(t >= prev)) throw InvalidInput("ode: output times must be non-decreasing and not before t0");
    prev = t;
  }
}

double rms_scaled(const Vec& e, const Vec& y0, const Vec& y1, double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double sk = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = e(i) / sk;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(e.size(), 1)));
}

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

}  // namespace

OdeResult dopri5(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out, const Dopri5Options& opt,
                 const Dopri5Hooks& hooks) {
  check_outputs(t0, t_out);
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw InvalidInput("dopri5: tolerances must be positive");
  OdeResult res;
  const Eigen::Index n = y0.size();
  Vec y = y0;
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n), err(n);
  double t = t0;
  f(t, y, k1);
  ++res.stats.rhs_evals;
  if (hooks.observe) hooks.observe(t, y, k1);

  std::size_t next = 0;
  auto emit = [&](double tt, Vec v) {
    if (hooks.project) hooks.project(tt, v);
    res.y.push_back(std::move(v));
  };
  for (; next < t_out.size() && t_out[next] == t0; ++next) emit(t0, y);
  if (next == t_out.size()) return res;
  const double t_end = t_out.back();
  const double hmax = opt.hmax > 0.0 ? opt.hmax : std::abs(t_end - t0);

  double h = opt.h0;
  if (!(h > 0.0)) {
    double dnf = 0.0, dny = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = opt.atol + opt.rtol * std::abs(y(i));
      dnf += (k1(i) / sk) * (k1(i) / sk);
      dny += (y(i) / sk) * (y(i) / sk);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    tmp = y + h * k1;
    f(t + h, tmp, k2);
    ++res.stats.rhs_evals;
    double der2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = opt.atol + opt.rtol * std::abs(y(i));
      der2 += ((k2(i) - k1(i)) / sk) * ((k2(i) - k1(i)) / sk);
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(der2, std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, hmax});
  }

  bool last_rejected = false;
  while (next < t_out.size()) {
    if (res.stats.accepted + res.stats.rejected >= opt.max_steps)
      throw ConvergenceError("dopri5: step limit reached at t = " + std::to_string(t));
    if (t + 1.01 * h >= t_end) h = t_end - t;
    if (h < opt.hmin)
      throw ConvergenceError("dopri5: step size underflow (h = " + std::to_string(h) + ") at t = " +
                             std::to_string(t));

    tmp = y + h * a21 * k1;
    f(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, tmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t + h, ynew, k7);
    res.stats.rhs_evals += 6;
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double enorm = rms_scaled(err, y, ynew, opt.atol, opt.rtol);
    if (!std::isfinite(enorm) || !ynew.allFinite()) enorm = 1e10;

    if (enorm <= 1.0) {
      const double t_new = (h == t_end - t) ? t_end : t + h;
      while (next < t_out.size() && t_out[next] <= t_new) {
        if (t_out[next] == t_new) {
          emit(t_new, ynew);
        } else {
          const double theta = (t_out[next] - t) / h;
          const Vec ydiff = ynew - y;
          const Vec bspl = h * k1 - ydiff;
          const Vec r4 = ydiff - h * k7 - bspl;
          const Vec r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
          const double th1 = 1.0 - theta;
          emit(t_out[next], y + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * r5))));
        }
        ++next;
      }
      t = t_new;
      y = ynew;
      k1 = k7;
      if (hooks.project && hooks.project(t, y)) {
        f(t, y, k1);
        ++res.stats.rhs_evals;
      }
      ++res.stats.accepted;
      if (hooks.observe) hooks.observe(t, y, k1);
      double fac = enorm == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 10.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, hmax);
      last_rejected = false;
    } else {
      ++res.stats.rejected;
      h *= std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 1.0);
      last_rejected = true;
    }
  }
  return res;
}

OdeResult rk4(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out, double dt) {
  check_outputs(t0, t_out);
  if (!(dt > 0.0)) throw InvalidInput("rk4: step must be positive");
  OdeResult res;
  const Eigen::Index n = y0.size();
  Vec y = y0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  double t = t0;
  for (double target : t_out) {
    const double span = target - t;
    const long steps = span > 0.0 ? static_cast<long>(std::ceil(span / dt - 1e-9)) : 0;
    for (long s = 0; s < steps; ++s) {
      const double ts = t + span * static_cast<double>(s) / static_cast<double>(steps);
      const double h = span / static_cast<double>(steps);
      f(ts, y, k1);
      tmp = y + 0.5 * h * k1;
      f(ts + 0.5 * h, tmp, k2);
      tmp = y + 0.5 * h * k2;
      f(ts + 0.5 * h, tmp, k3);
      tmp = y + h * k3;
      f(ts + h, tmp, k4);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      res.stats.rhs_evals += 4;
      ++res.stats.accepted;
    }
    t = target;
    res.y.push_back(y);
  }
  return res;
}

int gmres(const std::function<void(const Vec& v, Vec& av)>& apply, const Vec& b, Vec& x, double rtol, int restart,
          int max_iters) {
  const Eigen::Index n = b.size();
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero(n);
    return 0;
  }
  const int m = std::max(1, restart);
  Eigen::MatrixXd v(n, m + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
  Vec cs(m), sn(m), g(m + 1), w(n), ax(n);
  int total = 0;
  while (total < max_iters) {
    apply(x, ax);
    Vec r = b - ax;
    const double beta = r.norm();
    if (beta <= rtol * bnorm) return total;
    v.col(0) = r / beta;
    g.setZero();
    g(0) = beta;
    hess.setZero();
    int j = 0;
    bool done = false;
    for (; j < m; ++j) {
      apply(v.col(j), w);
      ++total;
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) {
          const double hij = v.col(i).dot(w);
          hess(i, j) += hij;
          w -= hij * v.col(i);
        }
      hess(j + 1, j) = w.norm();
      if (hess(j + 1, j) > 0.0) v.col(j + 1) = w / hess(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double a = hess(i, j), bb = hess(i + 1, j);
        hess(i, j) = cs(i) * a + sn(i) * bb;
        hess(i + 1, j) = -sn(i) * a + cs(i) * bb;
      }
      const double a = hess(j, j), bb = hess(j + 1, j);
      const double rr = std::hypot(a, bb);
      cs(j) = rr > 0.0 ? a / rr : 1.0;
      sn(j) = rr > 0.0 ? bb / rr : 0.0;
      hess(j, j) = rr;
      hess(j + 1, j) = 0.0;
      g(j + 1) = -sn(j) * g(j);
      g(j) = cs(j) * g(j);
      if (std::abs(g(j + 1)) <= rtol * bnorm || total >= max_iters || rr == 0.0) {
        ++j;
        done = true;
        break;
      }
    }
    const Vec y = hess.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    x += v.leftCols(j) * y;
    if (done && std::abs(g(j)) <= rtol * bnorm) return total;
  }
  return total;
}

OdeResult implicit_euler(const OdeRhs& f, double t0, const Vec& y0, std::span<const double> t_out, double dt,
                         const NewtonOptions& opt) {
  check_outputs(t0, t_out);
  if (!(dt > 0.0)) throw InvalidInput("implicit_euler: step must be positive");
  OdeResult res;
  const Eigen::Index n = y0.size();
  Vec y = y0, z(n), fz(n), g(n), delta(n), ztrial(n), ftrial(n), gtrial(n), fp(n);
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double t = t0;

  auto solve_step = [&](double t_new, double h) {
    z = y;
    f(t_new, z, fz);
    ++res.stats.rhs_evals;
    g = z - y - h * fz;
    double gnorm = g.lpNorm<Eigen::Infinity>();
    int it = 0;
    while (!(gnorm < opt.tol)) {
      if (it >= opt.max_iters || !std::isfinite(gnorm))
        throw ConvergenceError("implicit_euler: Newton did not converge at t = " + std::to_string(t_new) +
                               " (residual " + std::to_string(gnorm) + " after " + std::to_string(it) +
                               " iterations)");
      ++it;
      ++res.stats.newton_iters;
      if (n <= opt.dense_limit) {
        Eigen::MatrixXd jac(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const double eps = sqrt_eps * std::max(std::abs(z(j)), 1.0);
          ztrial = z;
          ztrial(j) += eps;
          f(t_new, ztrial, fp);
          jac.col(j) = -h * (fp - fz) / eps;
          jac(j, j) += 1.0;
        }
        res.stats.rhs_evals += n;
        delta = jac.partialPivLu().solve(-g);
      } else {
        const double znorm = z.norm();
        auto apply = [&](const Vec& v, Vec& av) {
          const double vn = v.norm();
          if (vn == 0.0) {
            av.setZero(n);
            return;
          }
          const double eps = sqrt_eps * (1.0 + znorm) / vn;
          ztrial = z + eps * v;
          f(t_new, ztrial, fp);
          ++res.stats.rhs_evals;
          av = v - h * (fp - fz) / eps;
        };
        delta.setZero(n);
        res.stats.linear_iters += gmres(apply, -g, delta, opt.gmres_rtol, opt.gmres_restart, opt.gmres_max_iters);
      }
      double lambda = 1.0;
      const double g2 = g.norm();
      for (;;) {
        ztrial = z + lambda * delta;
        f(t_new, ztrial, ftrial);
        ++res.stats.rhs_evals;
        gtrial = ztrial - y - h * ftrial;
        if (gtrial.norm() < g2 || lambda < 1.0 / 1024) break;
        lambda *= 0.5;
      }
      z = ztrial;
      fz = ftrial;
      g = gtrial;
      gnorm = g.lpNorm<Eigen::Infinity>();
    }
    y = z;
    ++res.stats.accepted;
  };

  for (double target : t_out) {
    const double span = target - t;
    const long steps = span > 0.0 ? static_cast<long>(std::ceil(span / dt - 1e-9)) : 0;
    for (long s = 0; s < steps; ++s) {
      const double h = span / static_cast<double>(steps);
      solve_step(t + span * static_cast<double>(s + 1) / static_cast<double>(steps), h);
    }
    t = target;
    res.y.push_back(y);
  }
  return res;
}

}  // namespace colora::pde

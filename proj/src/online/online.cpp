#include "colora/online.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "colora/error.hpp"
#include "colora/linalg.hpp"

namespace colora::online {

NetField::NetField(const train::Checkpoint& c)
    : net_(net::make_colora_net(c.arch)), params_(&c.params), norm_(c.norm) {}

NetField::NetField(net::ColoraNet net, const net::ParamStore& params, net::Normalizer norm)
    : net_(std::move(net)), params_(&params), norm_(std::move(norm)) {}

net::Jets NetField::eval(const Vec& phi, const Mat& x, net::JetRequest req) const {
  Mat xn(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.rows(); ++k)
    for (Eigen::Index j = 0; j < x.cols(); ++j) xn(k, j) = norm_.normalize_x(static_cast<int>(k), x(k, j));
  net::Jets out = net::forward_jets(net_, *params_, phi, xn, req);
  for (std::size_t k = 0; k < out.dx.size(); ++k) out.dx[k] /= norm_.x_scale(static_cast<int>(k));
  for (std::size_t k = 0; k < out.dxx.size(); ++k) {
    const double s = norm_.x_scale(static_cast<int>(k));
    out.dxx[k] /= s * s;
  }
  return out;
}

PointRhs problem_rhs(const pde::Problem& p, double mu) {
  return [&p, mu](const pde::PointState& s) { return p.point_rhs(mu, s); };
}

Samples make_samples(const pde::Problem& p, const NGConfig& cfg) {
  const int d = p.dim();
  const auto lo = p.lo();
  const auto hi = p.hi();
  Samples s;
  if (cfg.sampling == Sampling::Grid) {
    std::vector<int> n = cfg.n_x;
    if (n.empty()) n = d == 1 ? p.default_grid() : std::vector<int>(static_cast<std::size_t>(d), 64);
    if (static_cast<int>(n.size()) != d) throw InvalidInput("ng samples: lattice dimension mismatch");
    const pde::Grid g = p.make_grid(n);
    s.x = g.points();
    s.w = Vec::Constant(s.x.cols(), g.cell_volume());
  } else {
    if (cfg.n_random < 1) throw InvalidInput("ng samples: random sampling needs a positive count");
    std::mt19937_64 rng(cfg.seed);
    s.x.resize(d, cfg.n_random);
    double volume = 1.0;
    for (int k = 0; k < d; ++k) volume *= hi[k] - lo[k];
    for (int j = 0; j < cfg.n_random; ++j)
      for (int k = 0; k < d; ++k) s.x(k, j) = std::uniform_real_distribution<double>(lo[k], hi[k])(rng);
    s.w = Vec::Constant(cfg.n_random, volume / cfg.n_random);
  }
  return s;
}

namespace {

Mat weighted_latent_sums(const net::Jets& j, const Vec& w) {
  const auto q = static_cast<Eigen::Index>(j.dphi.size());
  Mat c(j.value.rows(), q);
  for (Eigen::Index i = 0; i < q; ++i) c.col(i) = j.dphi[static_cast<std::size_t>(i)] * w;
  return c;
}

}  // namespace

Assembly ng_assemble(const LatentField& field, const Vec& phi, const Samples& s, const PointRhs& rhs, bool second) {
  const int q = field.latent_dim();
  const int nf = field.fields();
  const Eigen::Index n = s.x.cols();
  if (phi.size() != q) throw InvalidInput("ng_assemble: latent length mismatch");
  if (n * nf < q) throw InvalidInput("ng_assemble: fewer sample rows than latent dimensions");
  net::Jets j = field.eval(phi, s.x, {.spatial = true, .second = second, .latent = true});

  pde::PointState ps;
  ps.x = s.x;
  ps.u = j.value;
  ps.du = std::move(j.dx);
  if (second) ps.ddu = std::move(j.dxx);
  const Mat f = rhs(ps);
  if (f.rows() != nf || f.cols() != n) throw InvalidInput("ng_assemble: rhs returned the wrong shape");

  Assembly a;
  a.J.resize(nf * n, q);
  a.f.resize(nf * n);
  for (int fi = 0; fi < nf; ++fi) {
    a.f.segment(fi * n, n) = f.row(fi).transpose();
    for (int l = 0; l < q; ++l) a.J.col(l).segment(fi * n, n) = j.dphi[static_cast<std::size_t>(l)].row(fi).transpose();
  }
  a.C = weighted_latent_sums(j, s.w);
  a.u = std::move(ps.u);
  return a;
}

Mat mass_constraint(const LatentField& field, const Vec& phi, const Samples& s) {
  return weighted_latent_sums(field.eval(phi, s.x, {.latent = true}), s.w);
}

Vec mass(const LatentField& field, const Vec& phi, const Samples& s) {
  return field.eval(phi, s.x, {}).value * s.w;
}

NgStep ng_solve(const Assembly& a, double tol, bool conserve) {
  if (!a.J.allFinite() || !a.f.allFinite()) throw ConvergenceError("ng_rhs: non-finite least-squares system");
  const linalg::Matrix jm = a.J;
  const linalg::LstsqResult r =
      conserve ? linalg::lstsq_constrained(jm, a.f, linalg::Matrix(a.C), tol) : linalg::lstsq_min_norm(jm, a.f, tol);
  NgStep out;
  out.phidot = r.x;
  out.rank = r.rank;
  out.degenerate = r.degenerate;
  out.rhs_norm = a.f.norm();
  out.residual = (a.J * out.phidot - a.f).norm();
  if (conserve) out.constraint = (a.C * out.phidot).cwiseAbs().maxCoeff();
  return out;
}

NgStep ng_rhs(const LatentField& field, const Vec& phi, const Samples& s, const PointRhs& rhs, const NGConfig& cfg,
              bool second) {
  return ng_solve(ng_assemble(field, phi, s, rhs, second), cfg.lstsq_tol, cfg.conserve);
}

int project_mass(const LatentField& field, Vec& phi, const Samples& s, const Vec& target, double tol, int max_iters) {
  const double scale = std::max(target.cwiseAbs().maxCoeff(), 1e-300);
  int iters = 0;
  for (; iters < max_iters; ++iters) {
    const net::Jets j = field.eval(phi, s.x, {.latent = true});
    const Vec gap = target - j.value * s.w;
    if (gap.cwiseAbs().maxCoeff() <= tol * scale) break;
    const linalg::LstsqResult r = linalg::lstsq_min_norm(linalg::Matrix(weighted_latent_sums(j, s.w)), gap);
    if (r.degenerate) break;
    phi += r.x;
  }
  return iters;
}

LatentTrajectory integrate_latent(const LatentField& field, const PointRhs& rhs, const Vec& phi0,
                                  const std::vector<double>& times, const Samples& s, const NGConfig& cfg,
                                  bool second) {
  if (times.empty()) throw InvalidInput("integrate_latent: no output times");
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0) || !(cfg.lstsq_tol > 0.0))
    throw InvalidInput("integrate_latent: tolerances must be positive");
  if (s.x.cols() * field.fields() < field.latent_dim())
    throw InvalidInput("integrate_latent: fewer samples than latent dimensions");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] < times[i - 1]) throw InvalidInput("integrate_latent: times must be non-decreasing");

  LatentTrajectory out;
  out.times = times;
  const Vec target = mass(field, phi0, s);
  const bool project = cfg.conserve && cfg.project_mass;

  // The last solve is reused when the integrator reports that same state.
  struct Last {
    double t = 0.0;
    Vec y;
    NgStep step;
  } last;
  bool have_last = false;
  auto solve = [&](double t, const Vec& y) -> const NgStep& {
    if (have_last && last.t == t && last.y == y) return last.step;
    NgStep st = ng_rhs(field, y, s, rhs, cfg, second);
    if (!st.phidot.allFinite())
      throw ConvergenceError("integrate_latent: non-finite latent velocity at t = " + std::to_string(t));
    last = Last{t, y, std::move(st)};
    have_last = true;
    return last.step;
  };
  const pde::OdeRhs f = [&](double t, const Vec& y, Vec& dy) { dy = solve(t, y).phidot; };

  pde::Dopri5Hooks hooks;
  if (project)
    hooks.project = [&](double, Vec& y) {
      const Vec before = y;
      project_mass(field, y, s, target);
      return y != before;
    };
  hooks.observe = [&](double t, const Vec& y, const Vec&) {
    const NgStep& st = solve(t, y);
    out.step_times.push_back(t);
    out.residuals.push_back(st.residual);
    out.rhs_norms.push_back(st.rhs_norm);
    out.constraint.push_back(st.constraint);
    out.step_mass.push_back(mass(field, y, s));
    if (st.degenerate) ++out.degenerate_steps;
  };

  pde::Dopri5Options opt;
  opt.rtol = cfg.rtol;
  opt.atol = cfg.atol;
  pde::OdeResult r = pde::dopri5(f, times.front(), phi0, times, opt, hooks);
  out.phi = std::move(r.y);
  out.stats = r.stats;
  return out;
}

Vec initial_latent(const train::Checkpoint& c, const pde::Problem& p, double mu, double t0, const Samples& s,
                   const NGConfig& cfg) {
  const train::Model model(c);
  Vec phi = model.latent(t0, mu);
  if (!cfg.fit_initial) return phi;

  // Gauss-Newton on sum_k w_k |u(x_k; phi) - u0(x_k)|^2 with step halving.
  const NetField field(c);
  const Eigen::Index n = s.x.cols();
  const int nf = field.fields();
  Vec target(nf * n), sw(nf * n);
  for (int fi = 0; fi < nf; ++fi)
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vec xk = s.x.col(k);
      target(fi * n + k) = p.u0(xk.data(), fi, mu);
      sw(fi * n + k) = std::sqrt(s.w(k));
    }
  auto residual = [&](const net::Jets& j) {
    Vec r(nf * n);
    for (int fi = 0; fi < nf; ++fi) r.segment(fi * n, n) = j.value.row(fi).transpose();
    return Vec((r - target).cwiseProduct(sw));
  };
  net::Jets j = field.eval(phi, s.x, {.latent = true});
  Vec r = residual(j);
  for (int it = 0; it < 50; ++it) {
    linalg::Matrix jac(nf * n, field.latent_dim());
    for (int l = 0; l < field.latent_dim(); ++l)
      for (int fi = 0; fi < nf; ++fi)
        jac.col(l).segment(fi * n, n) =
            j.dphi[static_cast<std::size_t>(l)].row(fi).transpose().cwiseProduct(sw.segment(fi * n, n));
    const linalg::LstsqResult step = linalg::lstsq_min_norm(jac, -r, cfg.lstsq_tol);
    if (step.degenerate) break;
    double lam = 1.0;
    bool improved = false;
    for (int h = 0; h < 30 && !improved; ++h, lam *= 0.5) {
      const Vec trial = phi + lam * step.x;
      net::Jets jt = field.eval(trial, s.x, {.latent = true});
      const Vec rt = residual(jt);
      if (rt.squaredNorm() < r.squaredNorm()) {
        phi = trial;
        j = std::move(jt);
        r = rt;
        improved = true;
      }
    }
    if (!improved || lam * step.x.norm() <= 1e-12 * std::max(1.0, phi.norm())) break;
  }
  return phi;
}

LatentTrajectory integrate_eq(const train::Checkpoint& c, const pde::Problem& p, double mu,
                              const std::vector<double>& times, const NGConfig& cfg) {
  if (times.empty()) throw InvalidInput("integrate_eq: no output times");
  const Samples s = make_samples(p, cfg);
  const NetField field(c);
  const Vec phi0 = initial_latent(c, p, mu, times.front(), s, cfg);
  return integrate_latent(field, problem_rhs(p, mu), phi0, times, s, cfg, p.needs_second());
}

std::vector<Mat> forecast_d(const train::Checkpoint& c, double mu, const std::vector<double>& times, const Mat& x) {
  const train::Model model(c);
  std::vector<Mat> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(model.predict(model.latent(t, mu), x));
  return out;
}

std::vector<Mat> render(const LatentField& field, const std::vector<Vec>& phi, const Mat& x) {
  std::vector<Mat> out;
  out.reserve(phi.size());
  for (const Vec& p : phi) out.push_back(field.eval(p, x, {}).value);
  return out;
}

std::vector<Vec> to_frames(const std::vector<Mat>& fields) {
  std::vector<Vec> out;
  out.reserve(fields.size());
  for (const Mat& m : fields) {
    Vec fr(m.size());
    for (Eigen::Index f = 0; f < m.rows(); ++f) fr.segment(f * m.cols(), m.cols()) = m.row(f).transpose();
    out.push_back(std::move(fr));
  }
  return out;
}

Mat residual_landscape(const LatentField& field, const PointRhs& rhs, const Samples& s,
                       const std::vector<double>& axis0, const std::vector<double>& axis1, double tol) {
  if (field.latent_dim() != 2) throw InvalidInput("residual_landscape: requires a two-dimensional latent space");
  Mat out(static_cast<Eigen::Index>(axis0.size()), static_cast<Eigen::Index>(axis1.size()));
  for (std::size_t i = 0; i < axis0.size(); ++i)
    for (std::size_t j = 0; j < axis1.size(); ++j) {
      const Vec phi = (Vec(2) << axis0[i], axis1[j]).finished();
      const NgStep st = ng_solve(ng_assemble(field, phi, s, rhs), tol, false);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          st.rhs_norm > 0.0 ? st.residual / st.rhs_norm : st.residual;
    }
  return out;
}

}  // namespace colora::online

#include "colora/pde/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "colora/error.hpp"

namespace colora::pde {

std::vector<double> uniform_times(double t_end, int intervals) {
  if (intervals < 1) throw InvalidInput("uniform_times: need at least one interval");
  std::vector<double> t(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) t[static_cast<std::size_t>(i)] = t_end * i / intervals;
  return t;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw InvalidInput("linspace: n must be positive");
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

Trajectory integrate(const Problem& p, double mu, const Grid& g, const SchemeConfig& s,
                     const std::vector<double>& times, OdeStats* stats) {
  if (g.dim() != p.dim()) throw InvalidInput("integrate: grid dimension does not match problem");
  const Vec y0 = p.initial(g, mu);
  const OdeRhs rhs = [&](double, const Vec& y, Vec& dy) { p.grid_rhs(g, mu, y, dy); };
  OdeResult r;
  switch (s.scheme) {
    case Scheme::Rk4:
      r = rk4(rhs, 0.0, y0, times, s.dt);
      break;
    case Scheme::Dopri5: {
      Dopri5Options o;
      o.rtol = s.rtol;
      o.atol = s.atol;
      r = dopri5(rhs, 0.0, y0, times, o);
      break;
    }
    case Scheme::ImplicitEuler:
      r = implicit_euler(rhs, 0.0, y0, times, s.dt);
      break;
  }
  Trajectory tr;
  tr.mu = mu;
  tr.times = times;
  tr.frames = std::move(r.y);
  for (std::size_t k = 0; k < tr.frames.size(); ++k)
    if (!tr.frames[k].allFinite())
      throw ConvergenceError(p.name() + ": non-finite solution at t = " + std::to_string(times[k]) +
                             " for mu = " + std::to_string(mu));
  if (stats) *stats = r.stats;
  return tr;
}

SnapshotSet generate_dataset(const Problem& p, const std::vector<double>& mus, const Grid& g,
                             const std::vector<double>& times, const SchemeConfig& s) {
  if (mus.empty()) throw InvalidInput("generate_dataset: empty parameter list");
  SnapshotSet set;
  set.problem = p.name();
  set.grid = g;
  set.fields = p.fields();
  set.times = times;
  for (double mu : mus) set.trajectories.push_back(integrate(p, mu, g, s, times));
  return set;
}

std::vector<double> select_train_test(const std::vector<double>& mu_grid, int m, const std::vector<double>& test_mus) {
  if (mu_grid.empty() || test_mus.empty()) throw InvalidInput("select_train_test: empty candidate or test list");
  const auto [mn, mx] = std::minmax_element(mu_grid.begin(), mu_grid.end());
  const double tie = 1e-9 * std::max(*mx - *mn, 1e-300);
  auto is_test = [&](double v) {
    return std::any_of(test_mus.begin(), test_mus.end(), [&](double t) { return std::abs(t - v) <= tie; });
  };
  for (double t : test_mus)
    if (std::none_of(mu_grid.begin(), mu_grid.end(), [&](double v) { return std::abs(t - v) <= tie; }))
      throw InvalidInput("select_train_test: test value " + std::to_string(t) + " is not on the candidate grid");
  std::vector<double> pool;
  for (double v : mu_grid)
    if (!is_test(v)) pool.push_back(v);
  if (m < 0 || static_cast<std::size_t>(m) > pool.size())
    throw InvalidInput("select_train_test: m = " + std::to_string(m) + " exceeds the " +
                       std::to_string(pool.size()) + " available candidates");
  auto dist = [&](double v) {
    double d = std::numeric_limits<double>::infinity();
    for (double t : test_mus) d = std::min(d, std::abs(v - t));
    return d;
  };
  // Distances are bucketed at the tie resolution so rounding noise cannot reorder equal candidates.
  auto key = [&](double v) { return std::llround(dist(v) / tie); };
  std::sort(pool.begin(), pool.end(), [&](double a, double b) {
    const long long ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    return a < b;
  });
  std::vector<double> chosen(pool.begin(), pool.begin() + m);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace colora::pde

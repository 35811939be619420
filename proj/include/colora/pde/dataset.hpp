#pragma once

#include <string>
#include <vector>

#include "colora/pde/ode.hpp"
#include "colora/pde/problem.hpp"

namespace colora::pde {

/// Frames of one full-order solve; each frame is field-major (fields x grid points).
struct Trajectory {
  double mu = 0.0;
  std::vector<double> times;
  std::vector<Vec> frames;

  bool operator==(const Trajectory&) const = default;
};

struct SnapshotSet {
  std::string problem;
  Grid grid;
  int fields = 1;
  std::vector<double> times;
  std::vector<Trajectory> trajectories;

  bool operator==(const SnapshotSet&) const = default;
};

/// n + 1 equally spaced times on [0, t_end].
std::vector<double> uniform_times(double t_end, int intervals);
/// n equally spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int n);

/// Full-order solve at the requested output times (the first may be 0).
Trajectory integrate(const Problem& p, double mu, const Grid& g, const SchemeConfig& s,
                     const std::vector<double>& times, OdeStats* stats = nullptr);

SnapshotSet generate_dataset(const Problem& p, const std::vector<double>& mus, const Grid& g,
                             const std::vector<double>& times, const SchemeConfig& s);

/// Greedy training selection: candidates (minus the test values) ranked by
/// distance to the nearest test value, largest first, ties to the smaller mu.
/// Returns the chosen m values in ascending order.
std::vector<double> select_train_test(const std::vector<double>& mu_grid, int m, const std::vector<double>& test_mus);

}  // namespace colora::pde

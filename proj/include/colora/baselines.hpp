#pragma once

#include <vector>

#include <Eigen/Dense>

#include "colora/pde/dataset.hpp"

namespace colora::baselines {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Columns are every frame of every trajectory, in trajectory then time order.
Mat snapshot_matrix(const pde::SnapshotSet& s);

struct PodBasis {
  Mat V;  // dof x n, orthonormal columns
  Vec singular_values;  // full spectrum of the training snapshot matrix
  int n = 0;
};

PodBasis pod_basis(const pde::SnapshotSet& train, int n);

/// ||(I - V V^T) S_test||_F / ||S_test||_F for the leading n left singular vectors of the training snapshots.
double pod_error(const pde::SnapshotSet& train, const pde::SnapshotSet& test, int n);
double pod_error(const PodBasis& basis, const pde::SnapshotSet& test);

/// Piecewise-linear interpolation in mu between the bracketing training
/// trajectories; mu outside the training range clamps to the nearest end.
pde::Trajectory interp_baseline(const pde::SnapshotSet& train, double mu_star);

}  // namespace colora::baselines

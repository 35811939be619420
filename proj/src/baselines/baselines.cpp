#include "colora/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "colora/error.hpp"
#include "colora/linalg.hpp"

namespace colora::baselines {

Mat snapshot_matrix(const pde::SnapshotSet& s) {
  if (s.trajectories.empty() || s.trajectories.front().frames.empty())
    throw InvalidInput("snapshot_matrix: no frames");
  const Eigen::Index dof = s.trajectories.front().frames.front().size();
  Eigen::Index cols = 0;
  for (const auto& tr : s.trajectories) cols += static_cast<Eigen::Index>(tr.frames.size());
  Mat m(dof, cols);
  Eigen::Index c = 0;
  for (const auto& tr : s.trajectories)
    for (const auto& fr : tr.frames) {
      if (fr.size() != dof) throw InvalidInput("snapshot_matrix: frames of different sizes");
      m.col(c++) = fr;
    }
  return m;
}

PodBasis pod_basis(const pde::SnapshotSet& train, int n) {
  const Mat s = snapshot_matrix(train);
  if (n < 1 || n > s.cols() || n > s.rows())
    throw InvalidInput("pod: reduced dimension " + std::to_string(n) + " exceeds the " +
                       std::to_string(std::min(s.rows(), s.cols())) + " available modes");
  const linalg::SvdResult f = linalg::svd(linalg::Matrix(s));
  PodBasis b;
  b.V = f.U.leftCols(n);
  b.singular_values = f.S;
  b.n = n;
  return b;
}

double pod_error(const PodBasis& basis, const pde::SnapshotSet& test) {
  const Mat s = snapshot_matrix(test);
  if (s.rows() != basis.V.rows()) throw InvalidInput("pod_error: test data lives on a different grid");
  const Mat coeff = basis.V.transpose() * s;
  const double total = s.norm();
  if (total == 0.0) return 0.0;
  return (s - basis.V * coeff).norm() / total;
}

double pod_error(const pde::SnapshotSet& train, const pde::SnapshotSet& test, int n) {
  return pod_error(pod_basis(train, n), test);
}

pde::Trajectory interp_baseline(const pde::SnapshotSet& train, double mu_star) {
  const auto& trs = train.trajectories;
  if (trs.size() < 2) throw InvalidInput("interp_baseline: needs at least two training trajectories");
  std::vector<std::size_t> order(trs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return trs[a].mu < trs[b].mu; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (trs[order[i]].mu == trs[order[i - 1]].mu) throw InvalidInput("interp_baseline: repeated training mu");

  const auto& first = trs[order.front()];
  const auto& last = trs[order.back()];
  pde::Trajectory out;
  out.mu = mu_star;
  if (mu_star <= first.mu || mu_star >= last.mu) {
    const auto& src = mu_star <= first.mu ? first : last;
    out.times = src.times;
    out.frames = src.frames;
    return out;
  }
  std::size_t hi = 1;
  while (trs[order[hi]].mu < mu_star) ++hi;
  const auto& a = trs[order[hi - 1]];
  const auto& b = trs[order[hi]];
  if (a.frames.size() != b.frames.size()) throw InvalidInput("interp_baseline: trajectories on different time grids");
  if (b.mu == mu_star) {
    out.times = b.times;
    out.frames = b.frames;
    return out;
  }
  const double w = (mu_star - a.mu) / (b.mu - a.mu);
  out.times = a.times;
  out.frames.reserve(a.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) out.frames.push_back((1.0 - w) * a.frames[k] + w * b.frames[k]);
  return out;
}

}  // namespace colora::baselines

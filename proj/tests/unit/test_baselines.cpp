#include <doctest.h>

#include <cmath>

#include "colora/baselines.hpp"
#include "colora/error.hpp"
#include "colora/linalg.hpp"
#include "test_support.hpp"

using namespace colora;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Trajectories whose frames are columns of `m`, `per` frames each.
pde::SnapshotSet from_columns(const MatrixXd& m, int per, std::vector<double> mus) {
  pde::SnapshotSet s;
  s.grid = pde::Grid::periodic({static_cast<int>(m.rows())}, {0.0}, {1.0});
  for (int k = 0; k < per; ++k) s.times.push_back(k);
  for (std::size_t i = 0; i < mus.size(); ++i) {
    pde::Trajectory tr;
    tr.mu = mus[i];
    tr.times = s.times;
    for (int k = 0; k < per; ++k) tr.frames.push_back(m.col(static_cast<Eigen::Index>(i) * per + k));
    s.trajectories.push_back(tr);
  }
  return s;
}

}  // namespace

TEST_CASE("pod error matches the tail energy of the spectrum") {
  const MatrixXd m = test::random_matrix(40, 12, 3) * test::random_matrix(12, 12, 4).asDiagonal().toDenseMatrix();
  const auto train = from_columns(m, 4, {0.1, 0.2, 0.3});
  const VectorXd sv = linalg::svd(linalg::Matrix(m)).S;
  double prev = 2.0;
  for (int n = 1; n <= 10; ++n) {
    const double e = baselines::pod_error(train, train, n);
    const double tail = std::sqrt(sv.tail(sv.size() - n).squaredNorm() / sv.squaredNorm());
    CHECK(std::abs(e - tail) < 1e-10);
    CHECK(e * e + sv.head(n).squaredNorm() / sv.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(e <= prev + 1e-15);
    prev = e;
  }
  CHECK(baselines::pod_error(train, train, 12) < 1e-10);
  CHECK_THROWS_AS(baselines::pod_error(train, train, 13), colora::InvalidInput);
  CHECK_THROWS_AS(baselines::pod_error(train, train, 0), colora::InvalidInput);

  const auto basis = baselines::pod_basis(train, 5);
  CHECK((basis.V.transpose() * basis.V - MatrixXd::Identity(5, 5)).norm() < 1e-10);
}

TEST_CASE("pod error vanishes on the training span") {
  const MatrixXd base = test::random_matrix(30, 3, 7);
  const MatrixXd train_cols = base * test::random_matrix(3, 6, 8);
  const MatrixXd test_cols = base * test::random_matrix(3, 4, 9);
  const auto train = from_columns(train_cols, 3, {1.0, 2.0});
  const auto test_set = from_columns(test_cols, 2, {1.5, 2.5});
  CHECK(baselines::pod_error(train, test_set, 3) < 1e-10);
  CHECK(baselines::pod_error(train, test_set, 2) > 1e-3);
  const auto other_grid = from_columns(test::random_matrix(20, 2, 1), 2, {1.0});
  CHECK_THROWS_AS(baselines::pod_error(train, other_grid, 2), colora::InvalidInput);
}

TEST_CASE("interpolation in the parameter") {
  const VectorXd g0 = test::random_vector(10, 1), g1 = test::random_vector(10, 2);
  auto linear = [&](double mu) {
    MatrixXd m(10, 2);
    m.col(0) = mu * g0;
    m.col(1) = mu * g1;
    return m;
  };
  pde::SnapshotSet train;
  for (double mu : {0.9, 0.1, 0.5}) {
    const auto s = from_columns(linear(mu), 2, {mu});
    train.grid = s.grid;
    train.times = s.times;
    train.trajectories.push_back(s.trajectories[0]);
  }
  for (double mu : {0.1, 0.25, 0.5, 0.77, 0.9}) {
    const auto tr = baselines::interp_baseline(train, mu);
    CHECK(tr.mu == mu);
    CHECK((tr.frames[0] - mu * g0).norm() < 1e-14);
    CHECK((tr.frames[1] - mu * g1).norm() < 1e-14);
  }
  for (const auto& t : train.trajectories) CHECK(baselines::interp_baseline(train, t.mu).frames == t.frames);
  CHECK(baselines::interp_baseline(train, 2.0).frames == train.trajectories[0].frames);
  CHECK(baselines::interp_baseline(train, -1.0).frames == train.trajectories[1].frames);

  train.trajectories.resize(1);
  CHECK_THROWS_AS(baselines::interp_baseline(train, 0.5), colora::InvalidInput);
}

TEST_CASE("interpolation error shrinks as training parameters get closer") {
  const auto problem = pde::make_problem("burgers1d");
  const pde::Grid g = problem->make_grid({128});
  const auto times = pde::uniform_times(0.5, 10);
  const auto scheme = problem->default_scheme();
  const double mu_star = 5.5e-3;
  const auto truth = pde::integrate(*problem, mu_star, g, scheme, times);
  auto err = [&](double half_gap) {
    const auto train = pde::generate_dataset(*problem, {mu_star - half_gap, mu_star + half_gap}, g, times, scheme);
    const auto pred = baselines::interp_baseline(train, mu_star);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      num += (pred.frames[k] - truth.frames[k]).squaredNorm();
      den += truth.frames[k].squaredNorm();
    }
    return std::sqrt(num / den);
  };
  const double coarse = err(2e-3), fine = err(1e-3);
  CHECK(fine > 0.0);
  CHECK(fine < coarse);
}

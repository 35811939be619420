#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>

#include "colora/pde/problem.hpp"
#include "colora/pretrain.hpp"
#include "test_support.hpp"

using namespace colora;
using Eigen::VectorXd;

namespace {

net::ArchConfig toy_arch() {
  net::ArchConfig a;
  a.in_dim = 1;
  a.out_dim = 1;
  a.depth = 3;
  a.width = 8;
  a.rank = 2;
  a.latent_dim = 2;
  a.hyper_depth = 2;
  a.hyper_width = 5;
  a.mu_dim = 1;
  return a;
}

// Frames filled by `value(mu, t, x)` on a 16-point periodic grid of [0, 1).
pde::SnapshotSet toy_data(const std::vector<double>& mus, const std::function<double(double, double, double)>& value) {
  pde::SnapshotSet s;
  s.problem = "advection";
  s.grid = pde::Grid::periodic({16}, {0.0}, {1.0});
  s.fields = 1;
  s.times = {0.0, 0.25, 0.5, 0.75, 1.0};
  const auto pts = s.grid.points();
  for (double mu : mus) {
    pde::Trajectory tr;
    tr.mu = mu;
    tr.times = s.times;
    for (double t : s.times) {
      VectorXd fr(pts.cols());
      for (Eigen::Index i = 0; i < pts.cols(); ++i) fr(i) = value(mu, t, pts(0, i));
      tr.frames.push_back(fr);
    }
    s.trajectories.push_back(tr);
  }
  return s;
}

pde::SnapshotSet advection_data(const std::vector<double>& mus) {
  return toy_data(mus, [](double mu, double t, double x) {
    return pde::advection_exact(pde::Advection1D::bump, t, mu, x);
  });
}

// Every parameter zero except the output bias, so the network predicts `c` everywhere.
train::Checkpoint constant_model(const pde::SnapshotSet& data, double c) {
  const auto problem = pde::make_problem("advection");
  train::Checkpoint ck = train::init_checkpoint(data, *problem, toy_arch(), 1);
  ck.params.flat().setZero();
  const auto net = net::make_colora_net(ck.arch);
  ck.params.view(net.layers.back().prefix + ".b")(0, 0) = c;
  return ck;
}

double loss_of(const train::Checkpoint& ck, const pde::SnapshotSet& data, train::LossMode mode) {
  train::TrainConfig cfg;
  cfg.loss = mode;
  cfg.batch_x = 6;
  cfg.batch_t = 3;
  return train::relative_loss(ck, data, train::sample_batch(data, cfg, 0), cfg, false).loss;
}

}  // namespace

TEST_CASE("relative loss of a constant prediction") {
  for (auto mode : {train::LossMode::Aggregate, train::LossMode::Pointwise}) {
    const auto twos = toy_data({1.0}, [](double, double, double) { return 2.0; });
    CHECK(loss_of(constant_model(twos, 1.0), twos, mode) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(loss_of(constant_model(twos, 2.0), twos, mode) == 0.0);

    // (1 - c)^2 / c^2 = e for c = 1 / (1 - sqrt(e)).
    const auto two_levels = toy_data({0.8, 1.2}, [](double mu, double, double) {
      return 1.0 / (1.0 - std::sqrt(mu < 1.0 ? 0.1 : 0.3));
    });
    CHECK(loss_of(constant_model(two_levels, 1.0), two_levels, mode) == doctest::Approx(0.2).epsilon(1e-12));
  }
}

TEST_CASE("loss gradient matches central differences") {
  const auto data = advection_data({0.7, 1.3});
  const auto problem = pde::make_problem("advection");
  train::Checkpoint ck = train::init_checkpoint(data, *problem, toy_arch(), 3);
  ck.params.flat() += 0.3 * test::random_vector(ck.params.size(), 4);
  const VectorXd dir = test::random_vector(ck.params.size(), 5);
  for (auto mode : {train::LossMode::Aggregate, train::LossMode::Pointwise}) {
    train::TrainConfig cfg;
    cfg.loss = mode;
    cfg.batch_x = 12;
    cfg.batch_t = 4;
    const auto batch = train::sample_batch(data, cfg, 7);
    const auto le = train::relative_loss(ck, data, batch, cfg, true);
    const double h = 1e-5;
    train::Checkpoint plus = ck, minus = ck;
    plus.params.flat() += h * dir;
    minus.params.flat() -= h * dir;
    const double fd = (train::relative_loss(plus, data, batch, cfg, false).loss -
                       train::relative_loss(minus, data, batch, cfg, false).loss) /
                      (2.0 * h);
    CHECK(test::rel_err(le.grad.dot(dir), fd) < 1e-5);
    CHECK(le.loss >= 0.0);
  }
}

TEST_CASE("adam update") {
  train::TrainConfig cfg;
  SUBCASE("zero gradient leaves parameters unchanged") {
    VectorXd p = test::random_vector(6, 1);
    const VectorXd before = p;
    train::AdamState st;
    for (int i = 0; i < 5; ++i) train::adam_step(p, VectorXd::Zero(6), st, 1e-2, cfg);
    CHECK(p == before);
    CHECK(st.step == 5);
  }
  SUBCASE("first step") {
    VectorXd p = VectorXd::Zero(1);
    train::AdamState st;
    train::adam_step(p, VectorXd::Ones(1), st, 5e-3, cfg);
    CHECK(p(0) == doctest::Approx(-4.99999995e-3).epsilon(1e-12));
  }
  SUBCASE("constant gradient moves by the learning rate") {
    VectorXd p = VectorXd::Zero(3);
    train::AdamState st;
    const VectorXd g = (VectorXd(3) << 3.0, -0.2, 50.0).finished();
    for (int i = 0; i < 40; ++i) {
      const VectorXd prev = p;
      train::adam_step(p, g, st, 1e-3, cfg);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(std::abs(p(k) - prev(k)) - 1e-3) < 1e-9);
    }
  }
  SUBCASE("coordinates are updated independently") {
    VectorXd p = test::random_vector(5, 2), q(5);
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    for (int i = 0; i < 5; ++i) q(i) = p(perm[i]);
    train::AdamState sp, sq;
    for (int it = 0; it < 7; ++it) {
      const VectorXd g = test::random_vector(5, 10 + it);
      VectorXd gq(5);
      for (int i = 0; i < 5; ++i) gq(i) = g(perm[i]);
      train::adam_step(p, g, sp, 1e-2, cfg);
      train::adam_step(q, gq, sq, 1e-2, cfg);
    }
    for (int i = 0; i < 5; ++i) CHECK(q(i) == p(perm[i]));
  }
  SUBCASE("size mismatch throws") {
    VectorXd p = VectorXd::Zero(3);
    train::AdamState st;
    CHECK_THROWS_AS(train::adam_step(p, VectorXd::Zero(2), st, 1e-3, cfg), InvalidInput);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(train::cosine_lr(5e-3, 0, 100) == 5e-3);
  CHECK(train::cosine_lr(5e-3, 50, 100) == doctest::Approx(2.5e-3).epsilon(1e-14));
  CHECK(std::abs(train::cosine_lr(5e-3, 100, 100)) < 1e-18);
  for (long s = 1; s <= 100; ++s) CHECK(train::cosine_lr(1.0, s, 100) <= train::cosine_lr(1.0, s - 1, 100));
}

TEST_CASE("minibatch sampling") {
  const auto data = advection_data({0.5, 0.7, 0.9, 1.1, 1.3});
  train::TrainConfig cfg;
  cfg.batch_x = 10;
  cfg.batch_t = 3;
  cfg.batch_traj = 3;
  cfg.seed = 11;
  const auto a = train::sample_batch(data, cfg, 4);
  const auto b = train::sample_batch(data, cfg, 4);
  CHECK(a.traj == b.traj);
  CHECK(a.frame == b.frame);
  CHECK(a.point == b.point);
  CHECK(train::sample_batch(data, cfg, 5).point != a.point);
  CHECK(a.traj.size() == 9);
  CHECK(a.point.size() == 90);
  const std::set<int> distinct(a.traj.begin(), a.traj.end());
  CHECK(distinct.size() == 3);
  CHECK(std::is_sorted(a.traj.begin(), a.traj.end()));
  for (int f : a.frame) CHECK((f >= 0 && f < 5));
  for (auto p : a.point) CHECK((p >= 0 && p < 16));
  cfg.batch_traj = 0;
  const auto all = train::sample_batch(data, cfg, 4);
  CHECK(std::set<int>(all.traj.begin(), all.traj.end()).size() == 5);
}

TEST_CASE("training loop") {
  const auto data = advection_data({0.6, 1.0, 1.4});
  const auto problem = pde::make_problem("advection");
  train::TrainConfig cfg;
  cfg.iterations = 20;
  cfg.batch_x = 16;
  cfg.batch_t = 3;
  cfg.log_every = 5;
  cfg.seed = 2;

  SUBCASE("zero iterations returns the initialization") {
    train::TrainConfig zero = cfg;
    zero.iterations = 0;
    CHECK(train::pretrain(data, *problem, toy_arch(), zero) == train::init_checkpoint(data, *problem, toy_arch(), 2));
  }
  SUBCASE("resuming reproduces an uninterrupted run") {
    const auto full = train::pretrain(data, *problem, toy_arch(), cfg);
    const auto half = train::pretrain(data, *problem, toy_arch(), cfg, nullptr, 10);
    CHECK(half.adam.step == 10);
    const auto resumed = train::pretrain(data, *problem, toy_arch(), cfg, &half);
    CHECK(resumed == full);
    CHECK(full.history.size() == 5);
    CHECK(full.history.back().step == 19);
  }
  SUBCASE("loss decreases") {
    train::TrainConfig longer = cfg;
    longer.iterations = 300;
    longer.log_every = 299;
    const auto smooth = toy_data({0.6, 1.0, 1.4}, [](double mu, double t, double x) {
      return 1.5 + std::sin(2.0 * std::numbers::pi * (x - t * mu));
    });
    const auto c = train::pretrain(smooth, *problem, toy_arch(), longer);
    REQUIRE(c.history.size() == 2);
    CHECK(c.history.back().loss < 0.5 * c.history.front().loss);
  }
  SUBCASE("non-finite data raises with the last good state") {
    auto bad = data;
    for (auto& tr : bad.trajectories)
      for (auto& fr : tr.frames) fr(3) = std::nan("");
    try {
      train::pretrain(bad, *problem, toy_arch(), cfg);
      FAIL("expected divergence");
    } catch (const train::TrainingDiverged& e) {
      CHECK(e.last_good == train::init_checkpoint(bad, *problem, toy_arch(), 2));
    }
  }
  SUBCASE("architecture must match the problem") {
    auto arch = toy_arch();
    arch.out_dim = 2;
    CHECK_THROWS_AS(train::init_checkpoint(data, *problem, arch, 0), InvalidInput);
  }
}

TEST_CASE("forecast error metric") {
  const auto data = advection_data({0.6, 1.4});
  const auto zero = constant_model(data, 0.0);
  CHECK(train::mean_relative_error(zero, data) == 1.0);

  const auto problem = pde::make_problem("advection");
  train::TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_x = 8;
  cfg.batch_t = 2;
  const auto a = train::pretrain(data, *problem, toy_arch(), cfg);
  const auto b = train::pretrain(data, *problem, toy_arch(), cfg);
  CHECK(train::mean_relative_error(a, data) == train::mean_relative_error(b, data));
  CHECK(train::mean_relative_error(a, data, train::LossMode::Pointwise) >= 0.0);

  // Exact prediction has zero error in both modes.
  const auto& tr = data.trajectories[0];
  CHECK(train::trajectory_error(tr, tr.frames, 1, train::LossMode::Aggregate) == 0.0);
  CHECK(train::trajectory_error(tr, tr.frames, 1, train::LossMode::Pointwise) == 0.0);
  std::vector<VectorXd> short_pred(tr.frames.begin(), tr.frames.end() - 1);
  CHECK_THROWS_AS(train::trajectory_error(tr, short_pred, 1, train::LossMode::Aggregate), InvalidInput);
}

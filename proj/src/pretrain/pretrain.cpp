#include "colora/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "colora/runtime.hpp"

namespace colora::train {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Mat normalized_points(const net::Normalizer& norm, const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.rows(); ++k)
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(k, j) = norm.normalize_x(static_cast<int>(k), x(k, j));
  return out;
}

}  // namespace

void adam_step(Vec& params, const Vec& grad, AdamState& state, double lr, const TrainConfig& cfg) {
  if (grad.size() != params.size()) throw InvalidInput("adam_step: gradient and parameter sizes differ");
  if (state.m.size() == 0) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidInput("adam_step: optimizer state does not match parameters");
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mh = state.m(i) / c1;
    const double vh = state.v(i) / c2;
    params(i) -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
  }
}

double cosine_lr(double lr0, long step, long total) {
  if (total <= 0) return lr0;
  const double s = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * s));
}

Model::Model(const Checkpoint& c)
    : net(net::make_colora_net(c.arch)), hyper(net::make_hyper_net(c.arch)), params(&c.params), norm(&c.norm) {}

Vec Model::latent(double t, double mu) const {
  const double m[1] = {mu};
  return net::hyper_eval(hyper, *params, *norm, t, m);
}

Mat Model::predict(const Vec& phi, const Mat& x) const {
  return net::forward_jets(net, *params, phi, normalized_points(*norm, x)).value;
}

Checkpoint init_checkpoint(const pde::SnapshotSet& data, const pde::Problem& problem, const net::ArchConfig& arch,
                           std::uint64_t seed) {
  if (data.trajectories.empty()) throw InvalidInput("pretrain: empty training set");
  if (arch.in_dim != problem.dim() || arch.out_dim != problem.fields())
    throw InvalidInput("pretrain: architecture dimensions do not match problem '" + problem.name() + "'");
  Checkpoint c;
  c.problem = problem.name();
  c.arch = arch;
  c.params = net::init_params(arch, seed);
  std::vector<std::vector<double>> mus;
  for (const auto& tr : data.trajectories) {
    mus.push_back({tr.mu});
    c.train_mus.push_back(tr.mu);
  }
  c.norm = net::Normalizer::fit(data.times, mus, problem.lo(), problem.hi());
  return c;
}

Batch sample_batch(const pde::SnapshotSet& data, const TrainConfig& cfg, long step) {
  const int m = static_cast<int>(data.trajectories.size());
  const int frames = static_cast<int>(data.times.size());
  const Eigen::Index npts = data.grid.size();
  if (m < 1 || frames < 1) throw InvalidInput("sample_batch: empty data");
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(step))));

  std::vector<int> trajs(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) trajs[static_cast<std::size_t>(i)] = i;
  int use = m;
  if (cfg.batch_traj > 0 && cfg.batch_traj < m) {
    use = cfg.batch_traj;
    for (int i = 0; i < use; ++i) {
      std::uniform_int_distribution<int> pick(i, m - 1);
      std::swap(trajs[static_cast<std::size_t>(i)], trajs[static_cast<std::size_t>(pick(rng))]);
    }
    trajs.resize(static_cast<std::size_t>(use));
    std::sort(trajs.begin(), trajs.end());
  }
  std::uniform_int_distribution<int> pick_frame(0, frames - 1);
  std::uniform_int_distribution<Eigen::Index> pick_point(0, npts - 1);
  Batch b;
  for (int tr : trajs)
    for (int k = 0; k < cfg.batch_t; ++k) {
      const int pair = static_cast<int>(b.traj.size());
      b.traj.push_back(tr);
      b.frame.push_back(pick_frame(rng));
      for (int j = 0; j < cfg.batch_x; ++j) {
        b.pair.push_back(pair);
        b.point.push_back(pick_point(rng));
      }
    }
  return b;
}

std::vector<std::vector<double>> denominator_floors(const pde::SnapshotSet& data, double eps_rel) {
  const Eigen::Index n = data.grid.size();
  std::vector<std::vector<double>> out;
  for (const auto& tr : data.trajectories) {
    std::vector<double> f(static_cast<std::size_t>(data.fields), 0.0);
    for (const auto& fr : tr.frames)
      for (int q = 0; q < data.fields; ++q)
        f[static_cast<std::size_t>(q)] =
            std::max(f[static_cast<std::size_t>(q)], fr.segment(q * n, n).cwiseAbs2().maxCoeff());
    for (double& v : f) v *= eps_rel;
    out.push_back(std::move(f));
  }
  return out;
}

LossEval relative_loss(const Checkpoint& c, const pde::SnapshotSet& data, const Batch& b, const TrainConfig& cfg,
                       bool with_grad, const std::vector<std::vector<double>>* floors) {
  if (b.point.empty()) throw InvalidInput("relative_loss: empty batch");
  const Model model(c);
  const int fields = data.fields;
  const Eigen::Index npts = data.grid.size();
  const auto n_pairs = static_cast<Eigen::Index>(b.traj.size());
  const auto n_samples = static_cast<Eigen::Index>(b.point.size());

  Mat inputs(1 + c.arch.mu_dim, n_pairs);
  for (Eigen::Index p = 0; p < n_pairs; ++p) {
    const auto& tr = data.trajectories[static_cast<std::size_t>(b.traj[static_cast<std::size_t>(p)])];
    const double mu[1] = {tr.mu};
    inputs.col(p) = c.norm.normalize_input(data.times[static_cast<std::size_t>(b.frame[static_cast<std::size_t>(p)])], mu);
  }
  const Mat grid_pts = data.grid.points();
  Mat xs(data.grid.dim(), n_samples), target(fields, n_samples);
  for (Eigen::Index s = 0; s < n_samples; ++s) {
    const Eigen::Index pt = b.point[static_cast<std::size_t>(s)];
    const int p = b.pair[static_cast<std::size_t>(s)];
    for (int k = 0; k < data.grid.dim(); ++k) xs(k, s) = c.norm.normalize_x(k, grid_pts(k, pt));
    const auto& fr = data.trajectories[static_cast<std::size_t>(b.traj[static_cast<std::size_t>(p)])]
                         .frames[static_cast<std::size_t>(b.frame[static_cast<std::size_t>(p)])];
    for (int f = 0; f < fields; ++f) target(f, s) = fr(f * npts + pt);
  }

  // Weights turn the weighted squared error sum into the loss.
  std::vector<int> traj_of_sample(static_cast<std::size_t>(n_samples));
  std::vector<int> used;
  for (Eigen::Index s = 0; s < n_samples; ++s) {
    const int tr = b.traj[static_cast<std::size_t>(b.pair[static_cast<std::size_t>(s)])];
    traj_of_sample[static_cast<std::size_t>(s)] = tr;
    if (std::find(used.begin(), used.end(), tr) == used.end()) used.push_back(tr);
  }
  const double n_traj = static_cast<double>(used.size());
  Mat weight(fields, n_samples);
  std::vector<std::vector<double>> local_floors;
  if (cfg.loss == LossMode::Pointwise && floors == nullptr) {
    local_floors = denominator_floors(data, cfg.eps_rel);
    floors = &local_floors;
  }
  for (int tr : used) {
    double count = 0.0;
    std::vector<double> den(static_cast<std::size_t>(fields), 0.0);
    for (Eigen::Index s = 0; s < n_samples; ++s)
      if (traj_of_sample[static_cast<std::size_t>(s)] == tr) {
        count += 1.0;
        for (int f = 0; f < fields; ++f) den[static_cast<std::size_t>(f)] += target(f, s) * target(f, s);
      }
    for (Eigen::Index s = 0; s < n_samples; ++s) {
      if (traj_of_sample[static_cast<std::size_t>(s)] != tr) continue;
      for (int f = 0; f < fields; ++f) {
        double w;
        if (cfg.loss == LossMode::Aggregate) {
          w = 1.0 / std::max(den[static_cast<std::size_t>(f)], 1e-300);
        } else {
          const double floor = (*floors)[static_cast<std::size_t>(tr)][static_cast<std::size_t>(f)];
          w = 1.0 / (count * std::max({target(f, s) * target(f, s), floor, 1e-300}));
        }
        weight(f, s) = w / (n_traj * fields);
      }
    }
  }

  ad::Tape tape;
  const net::TapeParams tp = net::tape_params(tape, c.params);
  const ad::Var phi = net::hyper_forward_tape(tape, model.hyper, tp, tape.constant(inputs));
  const ad::Var alpha = tape.gather_cols(phi, b.pair);
  const ad::Var u = net::net_forward_tape(tape, model.net, tp, alpha, tape.constant(xs));
  const ad::Var diff = tape.sub(u, tape.constant(target));
  const ad::Var loss = tape.sum(tape.mul(tape.mul(diff, diff), tape.constant(weight)));
  LossEval out;
  out.loss = tape.scalar(loss);
  if (with_grad) {
    tape.backward(loss);
    const Mat& g = tape.grad(tp.flat);
    out.grad = g.size() ? Vec(g.col(0)) : Vec::Zero(c.params.size());
  }
  return out;
}

double trajectory_error(const pde::Trajectory& truth, const std::vector<Vec>& pred, int fields, LossMode mode,
                        double eps_rel) {
  if (pred.size() != truth.frames.size()) throw InvalidInput("trajectory_error: frame count mismatch");
  const Eigen::Index total = truth.frames.front().size();
  const Eigen::Index n = total / fields;
  double acc = 0.0;
  for (int f = 0; f < fields; ++f) {
    double num = 0.0, den = 0.0, peak = 0.0;
    for (const auto& fr : truth.frames) peak = std::max(peak, fr.segment(f * n, n).cwiseAbs2().maxCoeff());
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (pred[k].size() != total) throw InvalidInput("trajectory_error: frame size mismatch");
      const auto u = truth.frames[k].segment(f * n, n);
      const auto e = pred[k].segment(f * n, n) - u;
      if (mode == LossMode::Aggregate) {
        num += e.squaredNorm();
        den += u.squaredNorm();
      } else {
        const double floor = eps_rel * peak;
        for (Eigen::Index i = 0; i < n; ++i) num += e(i) * e(i) / std::max({u(i) * u(i), floor, 1e-300});
        den += static_cast<double>(n);
      }
    }
    acc += num / std::max(den, 1e-300);
  }
  return acc / fields;
}

Checkpoint pretrain(const pde::SnapshotSet& data, const pde::Problem& problem, const net::ArchConfig& arch,
                    const TrainConfig& cfg, const Checkpoint* resume, long stop_at) {
  if (cfg.iterations < 0 || !(cfg.lr > 0.0) || cfg.batch_x < 1 || cfg.batch_t < 1)
    throw InvalidInput("pretrain: invalid training configuration");
  tune_allocator();
  Checkpoint c = resume ? *resume : init_checkpoint(data, problem, arch, cfg.seed);
  const long end = stop_at >= 0 ? std::min(stop_at, cfg.iterations) : cfg.iterations;
  const auto floors = denominator_floors(data, cfg.eps_rel);
  for (long step = c.adam.step; step < end; ++step) {
    const Batch b = sample_batch(data, cfg, step);
    const LossEval le = relative_loss(c, data, b, cfg, true, &floors);
    if (!std::isfinite(le.loss) || !le.grad.allFinite())
      throw TrainingDiverged("pretrain: non-finite loss at step " + std::to_string(step), c);
    const double lr = cosine_lr(cfg.lr, step, cfg.iterations);
    if (step % std::max(cfg.log_every, 1) == 0 || step + 1 == cfg.iterations) c.history.push_back({step, lr, le.loss});
    adam_step(c.params.flat(), le.grad, c.adam, lr, cfg);
  }
  return c;
}

std::vector<std::vector<Vec>> forecast_set(const Checkpoint& c, const pde::SnapshotSet& data) {
  const Model model(c);
  const Mat pts = data.grid.points();
  const Eigen::Index n = data.grid.size();
  std::vector<std::vector<Vec>> out;
  for (const auto& tr : data.trajectories) {
    std::vector<Vec> frames;
    for (double t : tr.times) {
      const Mat u = model.predict(model.latent(t, tr.mu), pts);
      Vec fr(u.rows() * n);
      for (Eigen::Index f = 0; f < u.rows(); ++f) fr.segment(f * n, n) = u.row(f).transpose();
      frames.push_back(std::move(fr));
    }
    out.push_back(std::move(frames));
  }
  return out;
}

double mean_relative_error(const Checkpoint& c, const pde::SnapshotSet& data, LossMode mode, double eps_rel) {
  const auto pred = forecast_set(c, data);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += trajectory_error(data.trajectories[i], pred[i], data.fields, mode, eps_rel);
  return acc / static_cast<double>(pred.size());
}

}  // namespace colora::train

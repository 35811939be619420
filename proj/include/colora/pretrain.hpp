#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colora/error.hpp"
#include "colora/net.hpp"
#include "colora/pde/dataset.hpp"

namespace colora::train {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// How the relative error is normalized.
/// Aggregate: per trajectory and field, sum |u_F - u|^2 / sum |u_F|^2.
/// Pointwise: mean of |u_F - u|^2 / max(|u_F|^2, eps_rel * max|u_F|^2).
enum class LossMode { Aggregate, Pointwise };

struct TrainConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long iterations = 1000;
  int batch_x = 256;
  int batch_t = 16;
  int batch_traj = 0;  // 0 uses every trajectory each step
  std::uint64_t seed = 0;
  LossMode loss = LossMode::Aggregate;
  double eps_rel = 1e-8;
  int log_every = 50;
};

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Vec& params, const Vec& grad, AdamState& state, double lr, const TrainConfig& cfg);

/// lr0 * (1 + cos(pi * step / total)) / 2.
double cosine_lr(double lr0, long step, long total);

struct LossRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;

  bool operator==(const LossRecord&) const = default;
};

/// Everything needed to predict with, evaluate, or resume training of a model.
struct Checkpoint {
  std::string problem;
  net::ArchConfig arch;
  net::ParamStore params;
  net::Normalizer norm;
  std::vector<double> train_mus;
  std::vector<LossRecord> history;
  AdamState adam;

  bool operator==(const Checkpoint&) const = default;
};

/// Instantiated networks of a checkpoint; keeps references into it.
struct Model {
  net::ColoraNet net;
  net::HyperNet hyper;
  const net::ParamStore* params = nullptr;
  const net::Normalizer* norm = nullptr;

  explicit Model(const Checkpoint& c);
  /// phi(t, mu) from the hyper-network.
  Vec latent(double t, double mu) const;
  /// Field values (F x n) at physical points x (d x n).
  Mat predict(const Vec& phi, const Mat& x) const;
};

/// Fresh checkpoint: initialized parameters and a normalizer fitted to the data.
Checkpoint init_checkpoint(const pde::SnapshotSet& data, const pde::Problem& problem, const net::ArchConfig& arch,
                           std::uint64_t seed);

/// Training samples: for each selected trajectory, batch_t frames with batch_x grid points each.
struct Batch {
  std::vector<int> traj;      // per (traj, time) pair
  std::vector<int> frame;     // per pair
  std::vector<int> pair;      // per sample
  std::vector<Eigen::Index> point;  // per sample, flat grid index
};

/// Minibatch for a given step; depends only on (seed, step) and the data shape.
Batch sample_batch(const pde::SnapshotSet& data, const TrainConfig& cfg, long step);

/// Per trajectory and field: eps_rel * max |u_F|^2, the pointwise denominator floor.
std::vector<std::vector<double>> denominator_floors(const pde::SnapshotSet& data, double eps_rel);

/// Loss and gradient with respect to the flat parameter vector.
struct LossEval {
  double loss = 0.0;
  Vec grad;
};
/// `floors` (from denominator_floors) is only read in pointwise mode and is
/// computed on the fly when null.
LossEval relative_loss(const Checkpoint& c, const pde::SnapshotSet& data, const Batch& b, const TrainConfig& cfg,
                       bool with_grad = true, const std::vector<std::vector<double>>* floors = nullptr);

/// Relative error of one predicted trajectory (frames field-major, like the data).
/// Returns the per-trajectory value; multi-field data averages the fields.
double trajectory_error(const pde::Trajectory& truth, const std::vector<Vec>& pred, int fields, LossMode mode,
                        double eps_rel = 1e-8);

/// Runs (or continues) the optimization loop until cfg.iterations or `stop_at`
/// (if >= 0) steps have been taken. Resuming with the same config continues
/// the identical sample stream and schedule.
Checkpoint pretrain(const pde::SnapshotSet& data, const pde::Problem& problem, const net::ArchConfig& arch,
                    const TrainConfig& cfg, const Checkpoint* resume = nullptr, long stop_at = -1);

/// Raised when the loss becomes non-finite; carries the last finite state.
class TrainingDiverged : public ConvergenceError {
 public:
  TrainingDiverged(const std::string& msg, Checkpoint last) : ConvergenceError(msg), last_good(std::move(last)) {}
  Checkpoint last_good;
};

/// Hyper-network forecast of every frame of every trajectory.
std::vector<std::vector<Vec>> forecast_set(const Checkpoint& c, const pde::SnapshotSet& data);

/// Mean over trajectories of trajectory_error for the hyper-network forecast.
double mean_relative_error(const Checkpoint& c, const pde::SnapshotSet& data, LossMode mode = LossMode::Aggregate,
                           double eps_rel = 1e-8);

}  // namespace colora::train

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "colora/error.hpp"
#include "colora/net.hpp"
#include "colora/online.hpp"
#include "colora/pde/dataset.hpp"
#include "colora/pretrain.hpp"

namespace colora::harness {

namespace fs = std::filesystem;

/// Rejected experiment configuration (unknown key, wrong type, bad value).
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct MuCandidates {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;  // 0: no candidate grid
  bool operator==(const MuCandidates&) const = default;
};

struct BenchConfig {
  int repetitions = 5;
  std::vector<int> q_list{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> mu;      // speed / conservation; empty uses the test values
  int landscape_n = 41;        // lattice points per latent axis
  double landscape_margin = 0.25;  // relative padding around the latent trajectories
  bool operator==(const BenchConfig&) const = default;
};

struct ExperimentConfig {
  std::string problem;
  std::vector<int> grid;  // per dimension
  int t_intervals = 100;
  std::vector<double> train_mu;
  std::vector<double> test_mu;
  MuCandidates candidates;
  std::vector<int> train_counts;  // data-efficiency sweep
  net::ArchConfig arch;           // in/out dims follow the problem
  train::TrainConfig train;
  online::NGConfig ng;
  pde::SchemeConfig fom;
  BenchConfig bench;
  std::string output = "out";
  std::uint64_t seed = 0;
};

/// Parses and validates a JSON experiment description. Missing keys take the
/// problem defaults; unknown keys anywhere are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const fs::path& path);

/// Fully expanded configuration as sorted JSON (defaults filled in).
std::string canonical_json(const ExperimentConfig& c);
/// FNV-1a 64 of canonical_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);
std::string build_id();

/// Training values: train_mu if given, else the greedy selection of
/// train_counts.front() candidates.
std::vector<double> training_mus(const ExperimentConfig& c);
std::vector<double> output_times(const ExperimentConfig& c);
pde::Grid make_grid(const ExperimentConfig& c);

/// Worker cap from COLORA_THREADS (unset or invalid: hardware concurrency).
int worker_count();

/// FOM trajectories for `mus`, solved on up to worker_count() threads;
/// the result does not depend on the thread count.
pde::SnapshotSet generate(const ExperimentConfig& c, const std::vector<double>& mus);

/// Outputs of one CLI subcommand, relative to the output directory.
struct RunResult {
  std::vector<std::string> files;
};

/// Writes manifest_<command>.json: config hash, seed, build id and the files written.
void write_manifest(const ExperimentConfig& c, const std::string& command, const RunResult& r);

// Subcommands. Each writes under c.output and records a manifest.
RunResult run_generate(const ExperimentConfig& c);
RunResult run_train(const ExperimentConfig& c);
RunResult run_forecast(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {});
RunResult run_integrate(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {});
RunResult run_baseline_pod(const ExperimentConfig& c);
RunResult run_baseline_interp(const ExperimentConfig& c);
RunResult run_bench_nwidth(const ExperimentConfig& c);
RunResult run_bench_speed(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {});
RunResult run_bench_data_efficiency(const ExperimentConfig& c);
RunResult run_bench_conservation(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {});
RunResult run_landscape(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {});
RunResult run_export_latents(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint = {},
                             bool with_eq = false);

// Building blocks shared by the subcommands and the acceptance checks.

/// Training data: out/data/train when it matches the config, else freshly generated.
pde::SnapshotSet training_data(const ExperimentConfig& c);
pde::SnapshotSet test_data(const ExperimentConfig& c);
train::Checkpoint train_model(const ExperimentConfig& c, const pde::SnapshotSet& data);
train::Checkpoint load_model(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint);

/// Mean relative error of the latent-dynamics (EQ) forecast over a data set.
double eq_error(const train::Checkpoint& ck, const ExperimentConfig& c, const pde::SnapshotSet& data);

struct SpeedResult {
  double fom = 0.0;  // median seconds
  double eq = 0.0;
  double d = 0.0;
  double mu = 0.0;
};
/// Warm-up run discarded, then the median of c.bench.repetitions runs of each
/// method on the same output time grid. Only latent states are produced.
SpeedResult measure_speed(const ExperimentConfig& c, const train::Checkpoint& ck, double mu);

struct ConservationRun {
  double mu = 0.0;
  bool conserve = false;
  online::LatentTrajectory traj;
  double max_drift = 0.0;       // max |m(t) - m(0)| / |m(0)| over accepted steps
  double max_constraint = 0.0;  // max |C phidot|
};
ConservationRun conservation_run(const ExperimentConfig& c, const train::Checkpoint& ck, double mu, bool conserve);

struct EfficiencyRow {
  int m = 0;
  std::string method;
  double error = 0.0;
};
std::vector<EfficiencyRow> data_efficiency(const ExperimentConfig& c);

}  // namespace colora::harness

// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: acceptance [N ...]   (no arguments runs all of them)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colora/baselines.hpp"
#include "colora/harness.hpp"
#include "colora/io.hpp"
#include "colora/net.hpp"
#include "colora/online.hpp"
#include "colora/pde/ode.hpp"
#include "colora/pretrain.hpp"
#include "colora/runtime.hpp"

using namespace colora;
namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Pinned thresholds.
constexpr double kAdvectionTol = 1e-12;
constexpr double kAdvectionSeconds = 1.0;
constexpr double kGradientRelTol = 1e-5;
constexpr double kGradientSeconds = 30.0;
constexpr int kGradientNetworks = 20;
constexpr double kNgRhsTol = 1e-10;
constexpr double kNgIntegrateTol = 1e-7;
constexpr double kNwidthMaxError = 1e-2;
constexpr double kNwidthPodFactor = 5.0;
constexpr double kNwidthSeconds = 1800.0;
constexpr double kPodTol = 1e-10;
constexpr double kDriftTol = 1e-9;
constexpr double kConstraintTol = 1e-12;
constexpr double kRk4Order = 4.0, kRk4Slack = 0.3;
constexpr double kEulerOrder = 1.0, kEulerSlack = 0.2;
constexpr double kDopriFactor = 10.0;
constexpr double kSpeedupD = 100.0;
constexpr double kSpeedupEq = 2.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

fs::path workdir(int n) {
  const fs::path d = fs::current_path() / "acceptance_runs" / ("c" + std::to_string(n));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

harness::ExperimentConfig config(const std::string& json, const fs::path& out) {
  harness::ExperimentConfig c = harness::parse_config(json);
  c.output = out.string();
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Exact advection representation

Outcome exact_advection() {
  const auto t0 = std::chrono::steady_clock::now();
  auto gauss = [](double v) { return std::exp(-100.0 * (v - 0.5) * (v - 0.5)); };
  const net::CustomActivation u0{gauss, [=](double v) { return -200.0 * (v - 0.5) * gauss(v); },
                                 [=](double v) { return (40000.0 * (v - 0.5) * (v - 0.5) - 200.0) * gauss(v); }};
  const net::AdvectionNet adv = net::build_advection_net(u0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0.0, 1.0), ut(0.0, 1.0), umu(0.5, 1.5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = ux(rng), t = ut(rng), mu = umu(rng);
    const VectorXd phi = net::AdvectionNet::latent(t, mu);
    const auto u = net::net_eval<double>(adv.net, adv.params, std::vector<double>{phi(0)}, std::vector<double>{x});
    worst = std::max(worst, std::abs(u[0] - gauss(x - t * mu)));
  }
  const double sec = seconds_since(t0);
  return {worst < kAdvectionTol && sec < kAdvectionSeconds,
          "max |u - u0(x - t mu)| = " + num(worst) + " over 1000 samples in " + num(sec) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Gradient suite

pde::SnapshotSet toy_data(std::uint64_t seed) {
  pde::SnapshotSet s;
  s.problem = "advection";
  s.grid = pde::Grid::periodic({12}, {0.0}, {1.0});
  s.fields = 1;
  s.times = {0.0, 0.3, 0.6, 1.0};
  const MatrixXd pts = s.grid.points();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 1.0);
  for (double mu : {0.7, 1.0, 1.3}) {
    const double ph = phase(rng);
    pde::Trajectory tr;
    tr.mu = mu;
    tr.times = s.times;
    for (double t : s.times) {
      VectorXd fr(pts.cols());
      for (Eigen::Index i = 0; i < pts.cols(); ++i)
        fr(i) = 1.2 + std::sin(2 * std::numbers::pi * (pts(0, i) - t * mu + ph));
      tr.frames.push_back(fr);
    }
    s.trajectories.push_back(tr);
  }
  return s;
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto problem = pde::make_problem("advection");
  double worst_loss = 0.0, worst_jac = 0.0;
  for (int k = 0; k < kGradientNetworks; ++k) {
    net::ArchConfig a;
    a.in_dim = 1;
    a.out_dim = 1;
    a.depth = 3 + k % 3;
    a.width = 5 + k % 4;
    a.rank = 1 + k % 3;
    a.latent_dim = 1 + k % 3;
    a.hyper_depth = 2;
    a.hyper_width = 5;
    const pde::SnapshotSet data = toy_data(100 + k);
    train::Checkpoint c = train::init_checkpoint(data, *problem, a, 200 + k);
    std::mt19937_64 rng(300 + k);
    std::normal_distribution<double> normal(0.0, 0.4);
    for (Eigen::Index i = 0; i < c.params.size(); ++i) c.params.flat()(i) += normal(rng);

    train::TrainConfig cfg;
    cfg.batch_x = 6;
    cfg.batch_t = 2;
    cfg.seed = 400 + k;
    cfg.loss = k % 2 ? train::LossMode::Pointwise : train::LossMode::Aggregate;
    const train::Batch b = train::sample_batch(data, cfg, 0);
    const VectorXd g = train::relative_loss(c, data, b, cfg).grad;
    VectorXd fd(g.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      train::Checkpoint cp = c, cm = c;
      cp.params.flat()(i) += h;
      cm.params.flat()(i) -= h;
      fd(i) = (train::relative_loss(cp, data, b, cfg, false).loss - train::relative_loss(cm, data, b, cfg, false).loss) /
              (2 * h);
    }
    worst_loss = std::max(worst_loss, (g - fd).norm() / fd.norm());

    // Latent Jacobian columns from the forward-mode jets.
    const train::Model m(c);
    const VectorXd phi = m.latent(0.4, 1.1);
    const MatrixXd xs = data.grid.points();
    const net::Jets j = net::forward_jets(m.net, c.params, phi, xs, {.latent = true});
    for (int l = 0; l < a.latent_dim; ++l) {
      VectorXd pp = phi, pm = phi;
      pp(l) += h;
      pm(l) -= h;
      const MatrixXd col = (net::forward_jets(m.net, c.params, pp, xs, {}).value -
                            net::forward_jets(m.net, c.params, pm, xs, {}).value) /
                           (2 * h);
      worst_jac = std::max(worst_jac, (j.dphi[static_cast<std::size_t>(l)] - col).norm() / col.norm());
    }
  }
  const double sec = seconds_since(t0);
  return {worst_loss < kGradientRelTol && worst_jac < kGradientRelTol && sec < kGradientSeconds,
          "max rel err: loss gradient " + num(worst_loss) + ", latent Jacobian " + num(worst_jac) + " over " +
              std::to_string(kGradientNetworks) + " networks in " + num(sec) + " s"};
}

// ---------------------------------------------------------------------------
// 3. Galerkin projection of a Fourier field

class FourierField final : public online::LatentField {
 public:
  int dim() const override { return 1; }
  int fields() const override { return 1; }
  int latent_dim() const override { return 2; }
  net::Jets eval(const VectorXd& phi, const MatrixXd& x, net::JetRequest req) const override {
    const Eigen::Index n = x.cols();
    const Eigen::ArrayXd s = x.row(0).array().sin().transpose(), c = x.row(0).array().cos().transpose();
    net::Jets j;
    j.value = (phi(0) * s + phi(1) * c).matrix().transpose();
    if (req.spatial || req.second) j.dx = {(phi(0) * c - phi(1) * s).matrix().transpose()};
    if (req.second) j.dxx = {-j.value};
    if (req.latent) j.dphi = {s.matrix().transpose(), c.matrix().transpose()};
    (void)n;
    return j;
  }
};

Outcome galerkin_oracle() {
  const FourierField field;
  online::Samples s;
  const int n = 64;
  s.x.resize(1, n);
  for (int k = 0; k < n; ++k) s.x(0, k) = 2 * std::numbers::pi * k / n;
  s.w = VectorXd::Constant(n, 2 * std::numbers::pi / n);
  const online::PointRhs heat = [](const pde::PointState& p) { return p.ddu[0]; };
  const online::PointRhs advect = [](const pde::PointState& p) { return p.du[0]; };
  online::NGConfig cfg;
  cfg.rtol = cfg.atol = 1e-11;

  double rhs_err = 0.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd phi = VectorXd::NullaryExpr(2, [&] { return normal(rng); });
    const VectorXd h = online::ng_rhs(field, phi, s, heat, cfg).phidot;
    const VectorXd a = online::ng_rhs(field, phi, s, advect, cfg).phidot;
    rhs_err = std::max(rhs_err, (h + phi).cwiseAbs().maxCoeff());
    rhs_err = std::max(rhs_err, (a - VectorXd{{-phi(1), phi(0)}}).cwiseAbs().maxCoeff());
  }

  const VectorXd phi0{{0.8, -0.3}};
  const std::vector<double> times{0.0, 1.0};
  const VectorXd h1 = online::integrate_latent(field, heat, phi0, times, s, cfg).phi.back();
  const VectorXd a1 = online::integrate_latent(field, advect, phi0, times, s, cfg).phi.back();
  const VectorXd h_exact = phi0 * std::exp(-1.0);
  const VectorXd a_exact{{phi0(0) * std::cos(1.0) - phi0(1) * std::sin(1.0), phi0(0) * std::sin(1.0) + phi0(1) * std::cos(1.0)}};
  const double int_err = std::max((h1 - h_exact).cwiseAbs().maxCoeff(), (a1 - a_exact).cwiseAbs().maxCoeff());
  return {rhs_err < kNgRhsTol && int_err < kNgIntegrateTol,
          "latent rhs error " + num(rhs_err) + ", error at t = 1 " + num(int_err)};
}

// ---------------------------------------------------------------------------
// 4. Latent dimension against linear approximation

const char* kBurgers1d = R"({
  "problem": "burgers1d", "grid": [256], "t_intervals": 100,
  "mu": {"train": [0.001, 0.00199, 0.00298, 0.00496, 0.00595, 0.00694, 0.00892, 0.01],
         "test": [0.00397, 0.00793]},
  "arch": {"depth": 8, "width": 25, "rank": 3, "q": 2},
  "train": {"iterations": 1000, "batch_x": 128, "batch_t": 8},
  "seed": 0
})";

Outcome nwidth_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = config(kBurgers1d, workdir(4));
  const pde::SnapshotSet tr = harness::training_data(c);
  const pde::SnapshotSet te = harness::test_data(c);
  const train::Checkpoint ck = harness::train_model(c, tr);
  const double d = train::mean_relative_error(ck, te);
  const double pod = baselines::pod_error(tr, te, 2);
  const double sec = seconds_since(t0);
  return {d <= kNwidthMaxError && pod >= kNwidthPodFactor * d && sec <= kNwidthSeconds,
          "CoLoRA-D q=2 test error " + num(d) + ", POD n=2 error " + num(pod) + " (" + num(pod / d) + "x), " +
              num(sec) + " s"};
}

// ---------------------------------------------------------------------------
// 5. POD against the tail energy

Outcome pod_tail_energy() {
  const auto c = config(kBurgers1d, workdir(5));
  const pde::SnapshotSet tr = harness::training_data(c);
  const MatrixXd snaps = baselines::snapshot_matrix(tr);
  const VectorXd sv = Eigen::BDCSVD<MatrixXd>(snaps).singularValues();
  double worst = 0.0;
  for (int n = 1; n <= 10; ++n) {
    const double tail = std::sqrt(sv.tail(sv.size() - n).squaredNorm() / sv.squaredNorm());
    worst = std::max(worst, std::abs(baselines::pod_error(tr, tr, n) - tail));
  }
  return {worst < kPodTol, "max |pod_error - tail energy| over n = 1..10: " + num(worst)};
}

// ---------------------------------------------------------------------------
// 6. Mass conservation

const char* kVlasov = R"({
  "problem": "vlasov", "grid": [128, 128], "t_intervals": 50,
  "mu": {"train": [0.2, 0.224, 0.274, 0.3, 0.326, 0.376, 0.4], "test": [0.25, 0.35]},
  "arch": {"q": 2},
  "train": {"iterations": 2000, "batch_x": 512, "batch_t": 2},
  "ng": {"n_x": [32, 32]},
  "seed": 0
})";

Outcome conservation() {
  const auto c = config(kVlasov, workdir(6));
  const train::Checkpoint ck = harness::train_model(c, harness::training_data(c));
  const double mu = 0.25;
  const harness::ConservationRun con = harness::conservation_run(c, ck, mu, true);
  const harness::ConservationRun free = harness::conservation_run(c, ck, mu, false);
  return {con.max_drift < kDriftTol && free.max_drift > con.max_drift && con.max_constraint < kConstraintTol,
          "relative mass drift constrained " + num(con.max_drift) + " vs unconstrained " + num(free.max_drift) +
              ", max |C phidot| " + num(con.max_constraint) + " over " + std::to_string(con.traj.stats.accepted) +
              " steps"};
}

// ---------------------------------------------------------------------------
// 7. Integrator orders

Outcome integrator_orders() {
  const pde::OdeRhs decay = [](double, const VectorXd& y, VectorXd& dy) { dy = -y; };
  const VectorXd y0 = VectorXd::Ones(1);
  const std::vector<double> t1{1.0};
  const double exact = std::exp(-1.0);
  auto rk = [&](double dt) { return std::abs(pde::rk4(decay, 0.0, y0, t1, dt).y[0](0) - exact); };
  auto ie = [&](double dt) { return std::abs(pde::implicit_euler(decay, 0.0, y0, t1, dt).y[0](0) - exact); };
  const double rk_order = std::log2(rk(0.1) / rk(0.05));
  const double ie_order = std::log2(ie(0.01) / ie(0.005));
  double worst = 0.0;
  for (double tol : {1e-4, 1e-6, 1e-8, 1e-10}) {
    pde::Dopri5Options o;
    o.rtol = o.atol = tol;
    worst = std::max(worst, std::abs(pde::dopri5(decay, 0.0, y0, t1, o).y[0](0) - exact) / tol);
  }
  return {std::abs(rk_order - kRk4Order) <= kRk4Slack && std::abs(ie_order - kEulerOrder) <= kEulerSlack &&
              worst < kDopriFactor,
          "rk4 order " + num(rk_order) + ", implicit Euler order " + num(ie_order) +
              ", dopri5 max error / tol " + num(worst)};
}

// ---------------------------------------------------------------------------
// 8. Speedup ordering

const char* kBurgers2d = R"({
  "problem": "burgers2d", "grid": [128, 128], "t_intervals": 50,
  "mu": {"train": [0.001, 0.00199, 0.00298, 0.00496, 0.00595, 0.00694, 0.00892, 0.01],
         "test": [0.00397, 0.00793]},
  "arch": {"q": 2},
  "train": {"iterations": 500, "batch_x": 256, "batch_t": 4},
  "ng": {"n_x": [32, 32]},
  "bench": {"repetitions": 5},
  "seed": 0
})";

Outcome speedup() {
  const auto c = config(kBurgers2d, workdir(8));
  const train::Checkpoint ck = harness::train_model(c, harness::training_data(c));
  const harness::SpeedResult s = harness::measure_speed(c, ck, 0.00397);
  return {s.fom / s.d >= kSpeedupD && s.fom / s.eq >= kSpeedupEq,
          "median FOM " + num(s.fom) + " s, EQ " + num(s.eq) + " s (" + num(s.fom / s.eq) + "x), D " + num(s.d) +
              " s (" + num(s.fom / s.d) + "x)"};
}

// ---------------------------------------------------------------------------
// 9. Data efficiency

const char* kDataEfficiency = R"({
  "problem": "burgers1d", "grid": [256], "t_intervals": 100,
  "mu": {"candidates": {"lo": 0.001, "hi": 0.01, "n": 101},
         "test": [0.00253, 0.0055, 0.00847],
         "train_counts": [10, 98]},
  "arch": {"q": 2},
  "train": {"iterations": 1000, "batch_x": 128, "batch_t": 8, "batch_traj": 8},
  "seed": 0
})";

Outcome data_efficiency() {
  const auto c = config(kDataEfficiency, workdir(9));
  std::map<std::pair<int, std::string>, double> e;
  for (const auto& r : harness::data_efficiency(c)) e[{r.m, r.method}] = r.error;
  const double d10 = e.at({10, "colora_d"}), i10 = e.at({10, "interp"}), i98 = e.at({98, "interp"});
  return {d10 < i10 && i98 < i10, "m=10: CoLoRA-D " + num(d10) + ", EQ " + num(e.at({10, "colora_eq"})) +
                                      ", interp " + num(i10) + "; m=98: CoLoRA-D " + num(e.at({98, "colora_d"})) +
                                      ", interp " + num(i98)};
}

// ---------------------------------------------------------------------------
// 10. Determinism

const char* kTiny = R"({
  "problem": "burgers1d", "grid": [64], "t_intervals": 10,
  "mu": {"train": [0.002, 0.005, 0.008], "test": [0.0046],
         "candidates": {"lo": 0.001, "hi": 0.01, "n": 11}, "train_counts": [3, 5]},
  "arch": {"depth": 4, "width": 8, "rank": 2, "q": 2},
  "train": {"iterations": 30, "batch_x": 16, "batch_t": 2, "log_every": 5},
  "bench": {"q_list": [1, 2], "repetitions": 1, "landscape_n": 5},
  "seed": 7
})";

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return files;
}

void run_pipeline(const harness::ExperimentConfig& c) {
  harness::run_generate(c);
  harness::run_train(c);
  harness::run_forecast(c);
  harness::run_integrate(c);
  harness::run_baseline_pod(c);
  harness::run_baseline_interp(c);
  harness::run_bench_nwidth(c);
  harness::run_bench_conservation(c);
  harness::run_bench_data_efficiency(c);
  harness::run_landscape(c);
  harness::run_export_latents(c, {}, true);
  harness::run_bench_speed(c);
}

// Timing columns are exempt; keep only the parameter column of speed.csv.
void drop_timings(std::map<std::string, std::string>& files) {
  auto it = files.find("speed.csv");
  if (it == files.end()) return;
  std::istringstream in(it->second);
  std::string line, kept;
  while (std::getline(in, line)) kept += line.substr(0, line.find(',')) + "\n";
  it->second = kept;
}

Outcome determinism() {
  const fs::path base = workdir(10);
  const auto c = config(kTiny, base / "run");
  run_pipeline(c);
  auto first = snapshot_tree(base / "run");
  fs::rename(base / "run", base / "first");
  run_pipeline(c);
  auto second = snapshot_tree(base / "run");
  drop_timings(first);
  drop_timings(second);

  std::vector<std::string> differing;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) differing.push_back(name);
  }
  for (const auto& [name, bytes] : second)
    if (!first.count(name)) differing.push_back(name);

  // The worker count must not change generated data.
  setenv("COLORA_THREADS", "1", 1);
  const pde::SnapshotSet serial = harness::generate(c, {0.002, 0.004, 0.006, 0.008});
  setenv("COLORA_THREADS", "3", 1);
  const pde::SnapshotSet threaded = harness::generate(c, {0.002, 0.004, 0.006, 0.008});
  unsetenv("COLORA_THREADS");
  if (!(serial == threaded)) differing.push_back("<generate with 1 vs 3 workers>");

  std::string detail = std::to_string(first.size()) + " output files compared across two runs";
  if (!differing.empty()) {
    detail += "; differing:";
    for (const auto& d : differing) detail += " " + d;
  }
  return {differing.empty() && !first.empty(), detail};
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>> kCriteria = {
    {1, {"exact advection representation", exact_advection}},
    {2, {"gradient suite", gradient_suite}},
    {3, {"Galerkin analytic oracle", galerkin_oracle}},
    {4, {"n-width trend", nwidth_trend}},
    {5, {"POD tail energy", pod_tail_energy}},
    {6, {"mass conservation", conservation}},
    {7, {"integrator orders", integrator_orders}},
    {8, {"speedup ordering", speedup}},
    {9, {"data efficiency", data_efficiency}},
    {10, {"determinism", determinism}},
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long v = std::strtol(argv[i], &end, 10);
    if (*end != '\0' || !kCriteria.count(static_cast<int>(v))) {
      std::cerr << "usage: acceptance [1-10 ...]\n";
      return 2;
    }
    which.push_back(static_cast<int>(v));
  }
  if (which.empty())
    for (const auto& [n, _] : kCriteria) which.push_back(n);

  bool all = true;
  for (int n : which) {
    const auto& [name, check] = kCriteria.at(n);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "CRITERION " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << " ["
              << num(seconds_since(t0)) << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

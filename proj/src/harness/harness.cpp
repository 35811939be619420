#include "colora/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "colora/baselines.hpp"
#include "colora/io.hpp"

namespace colora::harness {

namespace {

using json = nlohmann::json;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Typed access to one JSON object that remembers which keys were read.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  Obj child(const char* key) {
    seen_.insert(key);
    return Obj(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void get(const char* key, int& out) { read(key, out, [](const json& v) { return v.is_number_integer(); }); }
  void get(const char* key, long& out) { read(key, out, [](const json& v) { return v.is_number_integer(); }); }
  void get(const char* key, std::uint64_t& out) {
    read(key, out, [](const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); });
  }
  void get(const char* key, double& out) { read(key, out, [](const json& v) { return v.is_number(); }); }
  void get(const char* key, bool& out) { read(key, out, [](const json& v) { return v.is_boolean(); }); }
  void get(const char* key, std::string& out) { read(key, out, [](const json& v) { return v.is_string(); }); }
  void get(const char* key, std::vector<int>& out) {
    read(key, out, [](const json& v) {
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
    });
  }
  void get(const char* key, std::vector<double>& out) {
    read(key, out, [](const json& v) {
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
    });
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

  std::string where() const { return path_.empty() ? "config: " : "config." + path_ + ": "; }

 private:
  template <class T, class Check>
  void read(const char* key, T& out, Check ok) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!ok(*it)) throw ConfigError(where() + "'" + key + "' has the wrong type");
    out = it->template get<T>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

const char* loss_name(train::LossMode m) { return m == train::LossMode::Aggregate ? "aggregate" : "pointwise"; }
const char* sampling_name(online::Sampling s) { return s == online::Sampling::Grid ? "grid" : "random"; }
const char* scheme_name(pde::Scheme s) {
  switch (s) {
    case pde::Scheme::Rk4: return "rk4";
    case pde::Scheme::Dopri5: return "dopri5";
    case pde::Scheme::ImplicitEuler: return "implicit_euler";
  }
  return "?";
}

template <class E>
E parse_enum(const std::string& s, const std::vector<std::pair<std::string, E>>& names, const std::string& what) {
  for (const auto& [n, e] : names)
    if (n == s) return e;
  throw ConfigError("config: unknown " + what + " '" + s + "'");
}

json config_json(const ExperimentConfig& c) {
  const auto& a = c.arch;
  const auto& t = c.train;
  const auto& n = c.ng;
  return json{
      {"problem", c.problem},
      {"grid", c.grid},
      {"t_intervals", c.t_intervals},
      {"mu",
       {{"train", c.train_mu},
        {"test", c.test_mu},
        {"candidates", {{"lo", c.candidates.lo}, {"hi", c.candidates.hi}, {"n", c.candidates.n}}},
        {"train_counts", c.train_counts}}},
      {"arch",
       {{"depth", a.depth},
        {"width", a.width},
        {"rank", a.rank},
        {"q", a.latent_dim},
        {"mode", a.mode == net::LatentMode::Diag ? "diag" : "scalar"},
        {"periodic", a.periodic},
        {"hyper_depth", a.hyper_depth},
        {"hyper_width", a.hyper_width}}},
      {"train",
       {{"lr", t.lr},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"iterations", t.iterations},
        {"batch_x", t.batch_x},
        {"batch_t", t.batch_t},
        {"batch_traj", t.batch_traj},
        {"loss", loss_name(t.loss)},
        {"eps_rel", t.eps_rel},
        {"log_every", t.log_every}}},
      {"ng",
       {{"sampling", sampling_name(n.sampling)},
        {"n_x", n.n_x},
        {"n_random", n.n_random},
        {"lstsq_tol", n.lstsq_tol},
        {"rtol", n.rtol},
        {"atol", n.atol},
        {"conserve", n.conserve},
        {"project_mass", n.project_mass},
        {"fit_initial", n.fit_initial}}},
      {"fom", {{"scheme", scheme_name(c.fom.scheme)}, {"dt", c.fom.dt}, {"rtol", c.fom.rtol}, {"atol", c.fom.atol}}},
      {"bench",
       {{"repetitions", c.bench.repetitions},
        {"q_list", c.bench.q_list},
        {"mu", c.bench.mu},
        {"landscape_n", c.bench.landscape_n},
        {"landscape_margin", c.bench.landscape_margin}}},
      {"output", c.output},
      {"seed", c.seed}};
}

fs::path out_dir(const ExperimentConfig& c) { return fs::path(c.output); }

std::unique_ptr<pde::Problem> problem_of(const ExperimentConfig& c) { return pde::make_problem(c.problem); }

train::TrainConfig train_config(const ExperimentConfig& c) {
  train::TrainConfig t = c.train;
  t.seed = c.seed;
  return t;
}

online::NGConfig ng_config(const ExperimentConfig& c) {
  online::NGConfig n = c.ng;
  n.seed = c.seed;
  return n;
}

std::string fmt(double v) { return io::format_double(v); }

std::vector<double> phi_row(double mu, double t, const Vec& phi) {
  std::vector<double> r{mu, t};
  for (Eigen::Index i = 0; i < phi.size(); ++i) r.push_back(phi(i));
  return r;
}

std::vector<std::string> cells(const std::vector<double>& v) {
  std::vector<std::string> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(fmt(x));
  return out;
}

std::vector<std::string> latent_header(int q) {
  std::vector<std::string> h{"mu", "t"};
  for (int i = 1; i <= q; ++i) h.push_back("phi_" + std::to_string(i));
  return h;
}

void log(const std::string& msg) { std::cerr << "[colora] " << msg << "\n"; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
double median_seconds(int reps, F&& f) {
  f();  // warm-up
  std::vector<double> ts;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    ts.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return median(std::move(ts));
}

std::vector<double> eval_mus(const ExperimentConfig& c) {
  if (!c.bench.mu.empty()) return c.bench.mu;
  if (!c.test_mu.empty()) return c.test_mu;
  throw ConfigError("config: needs mu.test or bench.mu");
}

pde::Trajectory eq_prediction(const train::Checkpoint& ck, const ExperimentConfig& c, const pde::Problem& p,
                              const pde::Grid& g, double mu, online::LatentTrajectory* keep = nullptr) {
  auto tr = online::integrate_eq(ck, p, mu, output_times(c), ng_config(c));
  const online::NetField field(ck);
  pde::Trajectory out;
  out.mu = mu;
  out.times = tr.times;
  out.frames = online::to_frames(online::render(field, tr.phi, g.points()));
  if (keep) *keep = std::move(tr);
  return out;
}

pde::Trajectory d_prediction(const train::Checkpoint& ck, const ExperimentConfig& c, const pde::Grid& g, double mu) {
  pde::Trajectory out;
  out.mu = mu;
  out.times = output_times(c);
  out.frames = online::to_frames(online::forecast_d(ck, mu, out.times, g.points()));
  return out;
}

void write_snp(const ExperimentConfig& c, const pde::Grid& g, const pde::Trajectory& tr, const fs::path& path) {
  io::SnapshotFile s;
  s.problem = c.problem;
  s.grid = g;
  s.fields = problem_of(c)->fields();
  s.trajectory = tr;
  io::write_snapshot(path, s);
}

double drift_of(const online::LatentTrajectory& t) {
  if (t.step_mass.empty()) return 0.0;
  const Vec& m0 = t.step_mass.front();
  double d = 0.0;
  for (const Vec& m : t.step_mass)
    for (Eigen::Index f = 0; f < m.size(); ++f)
      d = std::max(d, std::abs(m(f) - m0(f)) / std::max(std::abs(m0(f)), 1e-300));
  return d;
}

std::string slug(const std::string& command) {
  std::string s = command;
  std::replace(s.begin(), s.end(), ' ', '_');
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  Obj root(j, "");
  ExperimentConfig c;
  root.get("problem", c.problem);
  require(!c.problem.empty(), "'problem' is required");
  std::unique_ptr<pde::Problem> p;
  try {
    p = pde::make_problem(c.problem);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.grid = p->default_grid();
  c.fom = p->default_scheme();
  c.arch.in_dim = p->dim();
  c.arch.out_dim = p->fields();

  root.get("grid", c.grid);
  root.get("t_intervals", c.t_intervals);
  root.get("output", c.output);
  root.get("seed", c.seed);

  if (root.has("mu")) {
    Obj m = root.child("mu");
    m.get("train", c.train_mu);
    m.get("test", c.test_mu);
    m.get("train_counts", c.train_counts);
    if (m.has("candidates")) {
      Obj k = m.child("candidates");
      k.get("lo", c.candidates.lo);
      k.get("hi", c.candidates.hi);
      k.get("n", c.candidates.n);
      k.finish();
    }
    m.finish();
  }
  if (root.has("arch")) {
    Obj a = root.child("arch");
    std::string mode = "diag";
    a.get("depth", c.arch.depth);
    a.get("width", c.arch.width);
    a.get("rank", c.arch.rank);
    a.get("q", c.arch.latent_dim);
    a.get("mode", mode);
    a.get("periodic", c.arch.periodic);
    a.get("hyper_depth", c.arch.hyper_depth);
    a.get("hyper_width", c.arch.hyper_width);
    a.finish();
    c.arch.mode = parse_enum<net::LatentMode>(mode, {{"diag", net::LatentMode::Diag}, {"scalar", net::LatentMode::Scalar}},
                                              "latent mode");
  }
  if (root.has("train")) {
    Obj t = root.child("train");
    std::string loss = "aggregate";
    t.get("lr", c.train.lr);
    t.get("beta1", c.train.beta1);
    t.get("beta2", c.train.beta2);
    t.get("adam_eps", c.train.adam_eps);
    t.get("iterations", c.train.iterations);
    t.get("batch_x", c.train.batch_x);
    t.get("batch_t", c.train.batch_t);
    t.get("batch_traj", c.train.batch_traj);
    t.get("loss", loss);
    t.get("eps_rel", c.train.eps_rel);
    t.get("log_every", c.train.log_every);
    t.finish();
    c.train.loss = parse_enum<train::LossMode>(
        loss, {{"aggregate", train::LossMode::Aggregate}, {"pointwise", train::LossMode::Pointwise}}, "loss");
  }
  if (root.has("ng")) {
    Obj n = root.child("ng");
    std::string sampling = "grid";
    n.get("sampling", sampling);
    n.get("n_x", c.ng.n_x);
    n.get("n_random", c.ng.n_random);
    n.get("lstsq_tol", c.ng.lstsq_tol);
    n.get("rtol", c.ng.rtol);
    n.get("atol", c.ng.atol);
    n.get("conserve", c.ng.conserve);
    n.get("project_mass", c.ng.project_mass);
    n.get("fit_initial", c.ng.fit_initial);
    n.finish();
    c.ng.sampling = parse_enum<online::Sampling>(
        sampling, {{"grid", online::Sampling::Grid}, {"random", online::Sampling::Random}}, "sampling");
  }
  if (root.has("fom")) {
    Obj f = root.child("fom");
    std::string scheme = scheme_name(c.fom.scheme);
    f.get("scheme", scheme);
    f.get("dt", c.fom.dt);
    f.get("rtol", c.fom.rtol);
    f.get("atol", c.fom.atol);
    f.finish();
    c.fom.scheme = parse_enum<pde::Scheme>(
        scheme,
        {{"rk4", pde::Scheme::Rk4}, {"dopri5", pde::Scheme::Dopri5}, {"implicit_euler", pde::Scheme::ImplicitEuler}},
        "scheme");
  }
  if (root.has("bench")) {
    Obj b = root.child("bench");
    b.get("repetitions", c.bench.repetitions);
    b.get("q_list", c.bench.q_list);
    b.get("mu", c.bench.mu);
    b.get("landscape_n", c.bench.landscape_n);
    b.get("landscape_margin", c.bench.landscape_margin);
    b.finish();
  }
  root.finish();

  require(static_cast<int>(c.grid.size()) == p->dim(), "'grid' needs one size per spatial dimension");
  for (int n : c.grid) require(n >= 8, "grid sizes must be at least 8");
  require(c.t_intervals >= 1, "'t_intervals' must be positive");
  require(finite_all(c.train_mu) && finite_all(c.test_mu) && finite_all(c.bench.mu), "mu values must be finite");
  if (c.candidates.n != 0) {
    require(c.candidates.n >= 2 && std::isfinite(c.candidates.lo) && std::isfinite(c.candidates.hi) &&
                c.candidates.lo < c.candidates.hi,
            "mu.candidates needs lo < hi and n >= 2");
    for (int m : c.train_counts)
      require(m >= 1 && m <= c.candidates.n - static_cast<int>(c.test_mu.size()),
              "mu.train_counts entries must lie in [1, candidates - tests]");
  } else {
    require(c.train_counts.empty(), "mu.train_counts needs mu.candidates");
  }
  require(c.arch.depth >= 2 && c.arch.width >= 1 && c.arch.rank >= 1, "arch depth >= 2, width >= 1, rank >= 1");
  require(c.arch.latent_dim >= 1 && c.arch.hyper_depth >= 1 && c.arch.hyper_width >= 1,
          "arch q, hyper_depth and hyper_width must be positive");
  require(c.train.lr > 0 && c.train.iterations >= 0 && c.train.batch_x >= 1 && c.train.batch_t >= 1 &&
              c.train.batch_traj >= 0 && c.train.log_every >= 1,
          "train needs lr > 0, iterations >= 0, positive batch sizes and log_every");
  require(c.train.beta1 >= 0 && c.train.beta1 < 1 && c.train.beta2 >= 0 && c.train.beta2 < 1 && c.train.adam_eps > 0,
          "train betas must lie in [0, 1) and adam_eps must be positive");
  require(c.ng.n_x.empty() || static_cast<int>(c.ng.n_x.size()) == p->dim(), "ng.n_x needs one size per dimension");
  for (int n : c.ng.n_x) require(n >= 2, "ng.n_x entries must be at least 2");
  require(c.ng.sampling == online::Sampling::Grid || c.ng.n_random >= 1, "random sampling needs ng.n_random >= 1");
  require(c.ng.rtol > 0 && c.ng.atol > 0 && c.ng.lstsq_tol >= 0, "ng tolerances must be positive");
  require(c.fom.dt > 0 && c.fom.rtol > 0 && c.fom.atol > 0, "fom dt and tolerances must be positive");
  require(c.bench.repetitions >= 1, "bench.repetitions must be positive");
  for (int q : c.bench.q_list) require(q >= 1, "bench.q_list entries must be positive");
  require(c.bench.landscape_n >= 2 && c.bench.landscape_margin >= 0, "bench.landscape_n >= 2, margin >= 0");
  require(!c.output.empty(), "'output' must not be empty");
  c.train.seed = c.seed;
  c.ng.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_json(const ExperimentConfig& c) { return config_json(c).dump(); }

std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_json(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string build_id() { return COLORA_BUILD_ID; }

std::vector<double> training_mus(const ExperimentConfig& c) {
  if (!c.train_mu.empty()) return c.train_mu;
  if (c.candidates.n > 0 && !c.train_counts.empty())
    return pde::select_train_test(pde::linspace(c.candidates.lo, c.candidates.hi, c.candidates.n),
                                  c.train_counts.front(), c.test_mu);
  throw ConfigError("config: needs mu.train, or mu.candidates with mu.train_counts");
}

std::vector<double> output_times(const ExperimentConfig& c) {
  return pde::uniform_times(problem_of(c)->t_end(), c.t_intervals);
}

pde::Grid make_grid(const ExperimentConfig& c) { return problem_of(c)->make_grid(c.grid); }

int worker_count() {
  if (const char* env = std::getenv("COLORA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 1024L));
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

pde::SnapshotSet generate(const ExperimentConfig& c, const std::vector<double>& mus) {
  if (mus.empty()) throw InvalidInput("generate: empty parameter list");
  const auto p = problem_of(c);
  const pde::Grid g = make_grid(c);
  const auto times = output_times(c);
  pde::SnapshotSet set;
  set.problem = p->name();
  set.grid = g;
  set.fields = p->fields();
  set.times = times;
  set.trajectories.resize(mus.size());

  const int workers = std::min<int>(worker_count(), static_cast<int>(mus.size()));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    try {
      for (std::size_t i = static_cast<std::size_t>(w); i < mus.size(); i += static_cast<std::size_t>(workers))
        set.trajectories[i] = pde::integrate(*p, mus[i], g, c.fom, times);
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return set;
}

void write_manifest(const ExperimentConfig& c, const std::string& command, const RunResult& r) {
  const json m{{"command", command},
               {"config_hash", config_hash(c)},
               {"seed", c.seed},
               {"build_id", build_id()},
               {"config", config_json(c)},
               {"files", r.files}};
  io::write_file_atomic(out_dir(c) / ("manifest_" + slug(command) + ".json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared steps

namespace {

std::optional<pde::SnapshotSet> cached(const ExperimentConfig& c, const fs::path& dir, const std::vector<double>& mus) {
  if (!fs::exists(dir / "manifest.csv")) return std::nullopt;
  pde::SnapshotSet s = io::read_dataset(dir);
  std::vector<double> have;
  for (const auto& t : s.trajectories) have.push_back(t.mu);
  if (s.problem != c.problem || !(s.grid == make_grid(c)) || s.times != output_times(c) || have != mus) {
    log("ignoring " + dir.string() + ": it does not match the configuration");
    return std::nullopt;
  }
  return s;
}

}  // namespace

pde::SnapshotSet training_data(const ExperimentConfig& c) {
  const auto mus = training_mus(c);
  if (auto s = cached(c, out_dir(c) / "data" / "train", mus)) return std::move(*s);
  return generate(c, mus);
}

pde::SnapshotSet test_data(const ExperimentConfig& c) {
  if (c.test_mu.empty()) throw ConfigError("config: needs mu.test");
  if (auto s = cached(c, out_dir(c) / "data" / "test", c.test_mu)) return std::move(*s);
  return generate(c, c.test_mu);
}

train::Checkpoint train_model(const ExperimentConfig& c, const pde::SnapshotSet& data) {
  return train::pretrain(data, *problem_of(c), c.arch, train_config(c));
}

train::Checkpoint load_model(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  const fs::path path = checkpoint ? *checkpoint : out_dir(c) / "model.ckp";
  if (!fs::exists(path)) throw IoError("missing checkpoint " + path.string() + " (run 'train' first)");
  train::Checkpoint ck = io::read_checkpoint(path);
  if (ck.problem != c.problem)
    throw InvalidInput("checkpoint " + path.string() + " was trained on '" + ck.problem + "', config is '" +
                       c.problem + "'");
  return ck;
}

double eq_error(const train::Checkpoint& ck, const ExperimentConfig& c, const pde::SnapshotSet& data) {
  const auto p = problem_of(c);
  double sum = 0.0;
  for (const auto& tr : data.trajectories) {
    const pde::Trajectory pred = eq_prediction(ck, c, *p, data.grid, tr.mu);
    sum += train::trajectory_error(tr, pred.frames, data.fields, c.train.loss, c.train.eps_rel);
  }
  return sum / static_cast<double>(data.trajectories.size());
}

SpeedResult measure_speed(const ExperimentConfig& c, const train::Checkpoint& ck, double mu) {
  const auto p = problem_of(c);
  const pde::Grid g = make_grid(c);
  const auto times = output_times(c);
  const online::NGConfig ng = ng_config(c);
  const train::Model model(ck);
  const int reps = c.bench.repetitions;
  SpeedResult r;
  r.mu = mu;
  volatile double sink = 0.0;
  r.fom = median_seconds(reps, [&] { sink = pde::integrate(*p, mu, g, c.fom, times).frames.back()(0); });
  r.eq = median_seconds(reps, [&] { sink = online::integrate_eq(ck, *p, mu, times, ng).phi.back()(0); });
  r.d = median_seconds(reps, [&] {
    double acc = 0.0;
    for (double t : times) acc += model.latent(t, mu)(0);
    sink = acc;
  });
  (void)sink;
  return r;
}

ConservationRun conservation_run(const ExperimentConfig& c, const train::Checkpoint& ck, double mu, bool conserve) {
  online::NGConfig ng = ng_config(c);
  ng.conserve = conserve;
  ConservationRun r;
  r.mu = mu;
  r.conserve = conserve;
  r.traj = online::integrate_eq(ck, *problem_of(c), mu, output_times(c), ng);
  r.max_drift = drift_of(r.traj);
  for (double v : r.traj.constraint) r.max_constraint = std::max(r.max_constraint, v);
  return r;
}

std::vector<EfficiencyRow> data_efficiency(const ExperimentConfig& c) {
  if (c.candidates.n <= 0 || c.train_counts.empty()) throw ConfigError("config: data-efficiency needs mu.candidates and mu.train_counts");
  const auto cands = pde::linspace(c.candidates.lo, c.candidates.hi, c.candidates.n);
  std::vector<std::vector<double>> selections;
  std::set<double> needed;
  for (int m : c.train_counts) {
    selections.push_back(pde::select_train_test(cands, m, c.test_mu));
    needed.insert(selections.back().begin(), selections.back().end());
  }
  const std::vector<double> all(needed.begin(), needed.end());
  log("data-efficiency: solving " + std::to_string(all.size()) + " training trajectories");
  const pde::SnapshotSet pool = generate(c, all);
  std::map<double, const pde::Trajectory*> by_mu;
  for (const auto& t : pool.trajectories) by_mu[t.mu] = &t;
  const pde::SnapshotSet test = test_data(c);

  std::vector<EfficiencyRow> rows;
  for (std::size_t k = 0; k < c.train_counts.size(); ++k) {
    const int m = c.train_counts[k];
    pde::SnapshotSet tr = pool;
    tr.trajectories.clear();
    for (double mu : selections[k]) tr.trajectories.push_back(*by_mu.at(mu));
    log("data-efficiency: m = " + std::to_string(m));
    const train::Checkpoint ck = train_model(c, tr);
    rows.push_back({m, "colora_d", train::mean_relative_error(ck, test, c.train.loss, c.train.eps_rel)});
    rows.push_back({m, "colora_eq", eq_error(ck, c, test)});
    double interp = 0.0;
    for (const auto& t : test.trajectories)
      interp += train::trajectory_error(t, baselines::interp_baseline(tr, t.mu).frames, test.fields, c.train.loss,
                                        c.train.eps_rel);
    rows.push_back({m, "interp", interp / static_cast<double>(test.trajectories.size())});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Subcommands

RunResult run_generate(const ExperimentConfig& c) {
  RunResult r;
  const fs::path out = out_dir(c);
  io::write_dataset(out / "data" / "train", generate(c, training_mus(c)));
  r.files.push_back("data/train");
  if (!c.test_mu.empty()) {
    io::write_dataset(out / "data" / "test", generate(c, c.test_mu));
    r.files.push_back("data/test");
  }
  write_manifest(c, "generate", r);
  return r;
}

RunResult run_train(const ExperimentConfig& c) {
  RunResult r;
  const fs::path out = out_dir(c);
  const pde::SnapshotSet data = training_data(c);
  train::Checkpoint ck;
  try {
    ck = train_model(c, data);
  } catch (const train::TrainingDiverged& e) {
    io::write_checkpoint(out / "model_last_good.ckp", e.last_good);
    throw;
  }
  io::write_checkpoint(out / "model.ckp", ck);
  r.files.push_back("model.ckp");

  io::Csv hist({"step", "lr", "loss"});
  for (const auto& h : ck.history) hist.row({std::to_string(h.step), fmt(h.lr), fmt(h.loss)});
  hist.write(out / "train_log.csv");
  r.files.push_back("train_log.csv");

  io::Csv err({"split", "mu", "error"});
  auto add = [&](const char* split, const pde::SnapshotSet& s) {
    const auto pred = train::forecast_set(ck, s);
    for (std::size_t i = 0; i < pred.size(); ++i)
      err.row({split, fmt(s.trajectories[i].mu),
               fmt(train::trajectory_error(s.trajectories[i], pred[i], s.fields, c.train.loss, c.train.eps_rel))});
  };
  add("train", data);
  if (!c.test_mu.empty()) add("test", test_data(c));
  err.write(out / "train_errors.csv");
  r.files.push_back("train_errors.csv");
  write_manifest(c, "train", r);
  return r;
}

RunResult run_forecast(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  RunResult r;
  const fs::path out = out_dir(c);
  const train::Checkpoint ck = load_model(c, checkpoint);
  const pde::SnapshotSet test = test_data(c);
  io::Csv err({"mu", "error"});
  for (std::size_t i = 0; i < test.trajectories.size(); ++i) {
    const auto& truth = test.trajectories[i];
    const pde::Trajectory pred = d_prediction(ck, c, test.grid, truth.mu);
    const std::string name = "forecast/mu_" + std::to_string(i) + ".snp";
    write_snp(c, test.grid, pred, out / name);
    r.files.push_back(name);
    err.row({fmt(truth.mu), fmt(train::trajectory_error(truth, pred.frames, test.fields, c.train.loss, c.train.eps_rel))});
  }
  err.write(out / "forecast_errors.csv");
  r.files.push_back("forecast_errors.csv");
  write_manifest(c, "forecast", r);
  return r;
}

RunResult run_integrate(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  RunResult r;
  const fs::path out = out_dir(c);
  const auto p = problem_of(c);
  const train::Checkpoint ck = load_model(c, checkpoint);
  const pde::SnapshotSet test = test_data(c);
  io::Csv stats({"mu", "error", "accepted", "rejected", "rhs_evals", "degenerate_steps", "max_mass_drift",
                 "max_constraint"});
  io::Csv lat(latent_header(ck.arch.latent_dim));
  for (std::size_t i = 0; i < test.trajectories.size(); ++i) {
    const auto& truth = test.trajectories[i];
    online::LatentTrajectory lt;
    const pde::Trajectory pred = eq_prediction(ck, c, *p, test.grid, truth.mu, &lt);
    const std::string name = "integrate/mu_" + std::to_string(i) + ".snp";
    write_snp(c, test.grid, pred, out / name);
    r.files.push_back(name);
    double cmax = 0.0;
    for (double v : lt.constraint) cmax = std::max(cmax, v);
    stats.row({fmt(truth.mu),
               fmt(train::trajectory_error(truth, pred.frames, test.fields, c.train.loss, c.train.eps_rel)),
               std::to_string(lt.stats.accepted), std::to_string(lt.stats.rejected), std::to_string(lt.stats.rhs_evals),
               std::to_string(lt.degenerate_steps), fmt(drift_of(lt)), fmt(cmax)});
    for (std::size_t k = 0; k < lt.times.size(); ++k) lat.row(cells(phi_row(truth.mu, lt.times[k], lt.phi[k])));
  }
  stats.write(out / "integrate_stats.csv");
  lat.write(out / "latents_eq.csv");
  r.files.push_back("integrate_stats.csv");
  r.files.push_back("latents_eq.csv");
  write_manifest(c, "integrate", r);
  return r;
}

RunResult run_baseline_pod(const ExperimentConfig& c) {
  RunResult r;
  const pde::SnapshotSet tr = training_data(c);
  const bool with_test = !c.test_mu.empty();
  const pde::SnapshotSet te = with_test ? test_data(c) : pde::SnapshotSet{};
  const Mat snaps = baselines::snapshot_matrix(tr);
  const int max_n = static_cast<int>(std::min(snaps.rows(), snaps.cols()));
  io::Csv csv({"n", "pod_err_train", "pod_err_test"});
  for (int n : c.bench.q_list) {
    if (n > max_n) continue;
    const baselines::PodBasis basis = baselines::pod_basis(tr, n);
    csv.row({std::to_string(n), fmt(baselines::pod_error(basis, tr)),
             with_test ? fmt(baselines::pod_error(basis, te)) : std::string("nan")});
  }
  csv.write(out_dir(c) / "pod.csv");
  r.files.push_back("pod.csv");
  write_manifest(c, "baseline pod", r);
  return r;
}

RunResult run_baseline_interp(const ExperimentConfig& c) {
  RunResult r;
  const pde::SnapshotSet tr = training_data(c);
  const pde::SnapshotSet te = test_data(c);
  io::Csv csv({"mu", "error"});
  for (const auto& t : te.trajectories)
    csv.row({fmt(t.mu), fmt(train::trajectory_error(t, baselines::interp_baseline(tr, t.mu).frames, te.fields,
                                                    c.train.loss, c.train.eps_rel))});
  csv.write(out_dir(c) / "interp.csv");
  r.files.push_back("interp.csv");
  write_manifest(c, "baseline interp", r);
  return r;
}

RunResult run_bench_nwidth(const ExperimentConfig& c) {
  RunResult r;
  const fs::path out = out_dir(c);
  const pde::SnapshotSet tr = training_data(c);
  const pde::SnapshotSet te = test_data(c);
  io::Csv csv({"q_or_n", "colora_D_err", "colora_EQ_err", "pod_err"});
  for (int q : c.bench.q_list) {
    ExperimentConfig cq = c;
    cq.arch.latent_dim = q;
    log("nwidth: q = " + std::to_string(q));
    const train::Checkpoint ck = train_model(cq, tr);
    const std::string name = "nwidth/q" + std::to_string(q) + ".ckp";
    io::write_checkpoint(out / name, ck);
    r.files.push_back(name);
    double eq = std::nan("");
    try {
      eq = eq_error(ck, cq, te);
    } catch (const ConvergenceError& e) {
      log(std::string("nwidth: EQ failed: ") + e.what());
    }
    csv.row({std::to_string(q), fmt(train::mean_relative_error(ck, te, c.train.loss, c.train.eps_rel)), fmt(eq),
             fmt(baselines::pod_error(tr, te, q))});
  }
  csv.write(out / "nwidth.csv");
  r.files.push_back("nwidth.csv");
  write_manifest(c, "bench nwidth", r);
  return r;
}

RunResult run_bench_speed(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  RunResult r;
  const train::Checkpoint ck = load_model(c, checkpoint);
  io::Csv csv({"mu", "fom_s", "eq_s", "d_s", "eq_speedup", "d_speedup"});
  for (double mu : eval_mus(c)) {
    const SpeedResult s = measure_speed(c, ck, mu);
    log("speed: mu = " + fmt(mu) + " fom " + fmt(s.fom) + " s, eq " + fmt(s.eq) + " s, d " + fmt(s.d) + " s");
    csv.row({fmt(mu), fmt(s.fom), fmt(s.eq), fmt(s.d), fmt(s.fom / s.eq), fmt(s.fom / s.d)});
  }
  csv.write(out_dir(c) / "speed.csv");
  r.files.push_back("speed.csv");
  write_manifest(c, "bench speed", r);
  return r;
}

RunResult run_bench_data_efficiency(const ExperimentConfig& c) {
  RunResult r;
  io::Csv csv({"m", "method", "error"});
  for (const auto& row : data_efficiency(c)) csv.row({std::to_string(row.m), row.method, fmt(row.error)});
  csv.write(out_dir(c) / "data_efficiency.csv");
  r.files.push_back("data_efficiency.csv");
  write_manifest(c, "bench data-efficiency", r);
  return r;
}

RunResult run_bench_conservation(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  RunResult r;
  const train::Checkpoint ck = load_model(c, checkpoint);
  io::Csv steps({"mode", "mu", "t", "rel_mass_drift", "constraint"});
  io::Csv summary({"mode", "mu", "max_rel_mass_drift", "max_constraint", "accepted"});
  for (double mu : eval_mus(c))
    for (bool conserve : {true, false}) {
      const ConservationRun run = conservation_run(c, ck, mu, conserve);
      const char* mode = conserve ? "constrained" : "unconstrained";
      const auto& t = run.traj;
      for (std::size_t k = 0; k < t.step_times.size(); ++k) {
        double d = 0.0;
        for (Eigen::Index f = 0; f < t.step_mass[k].size(); ++f)
          d = std::max(d, std::abs(t.step_mass[k](f) - t.step_mass[0](f)) / std::max(std::abs(t.step_mass[0](f)), 1e-300));
        steps.row({mode, fmt(mu), fmt(t.step_times[k]), fmt(d), fmt(t.constraint[k])});
      }
      summary.row({mode, fmt(mu), fmt(run.max_drift), fmt(run.max_constraint), std::to_string(t.stats.accepted)});
    }
  steps.write(out_dir(c) / "conservation.csv");
  summary.write(out_dir(c) / "conservation_summary.csv");
  r.files = {"conservation.csv", "conservation_summary.csv"};
  write_manifest(c, "bench conservation", r);
  return r;
}

RunResult run_landscape(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  RunResult r;
  const train::Checkpoint ck = load_model(c, checkpoint);
  if (ck.arch.latent_dim != 2) throw ConfigError("config: landscape needs a checkpoint with q = 2");
  const auto p = problem_of(c);
  const train::Model model(ck);
  const auto times = output_times(c);

  io::Csv lat({"split", "mu", "t", "phi_1", "phi_2"});
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  auto trace = [&](const char* split, const std::vector<double>& mus) {
    for (double mu : mus)
      for (double t : times) {
        const Vec phi = model.latent(t, mu);
        lo = lo.cwiseMin(phi);
        hi = hi.cwiseMax(phi);
        lat.row({split, fmt(mu), fmt(t), fmt(phi(0)), fmt(phi(1))});
      }
  };
  trace("train", ck.train_mus);
  trace("test", c.test_mu);

  const Eigen::Vector2d pad = (c.bench.landscape_margin * (hi - lo)).cwiseMax(1e-6);
  const auto axis0 = pde::linspace(lo(0) - pad(0), hi(0) + pad(0), c.bench.landscape_n);
  const auto axis1 = pde::linspace(lo(1) - pad(1), hi(1) + pad(1), c.bench.landscape_n);
  const double mu = eval_mus(c).front();
  const online::NetField field(ck);
  const online::Samples s = online::make_samples(*p, ng_config(c));
  const Mat res = online::residual_landscape(field, online::problem_rhs(*p, mu), s, axis0, axis1, c.ng.lstsq_tol);

  io::Csv land({"phi_1", "phi_2", "residual"});
  for (std::size_t i = 0; i < axis0.size(); ++i)
    for (std::size_t j = 0; j < axis1.size(); ++j)
      land.row({fmt(axis0[i]), fmt(axis1[j]), fmt(res(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))});
  land.write(out_dir(c) / "landscape.csv");
  lat.write(out_dir(c) / "landscape_latents.csv");
  r.files = {"landscape.csv", "landscape_latents.csv"};
  write_manifest(c, "landscape", r);
  return r;
}

RunResult run_export_latents(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint, bool with_eq) {
  RunResult r;
  const train::Checkpoint ck = load_model(c, checkpoint);
  const train::Model model(ck);
  const auto times = output_times(c);
  std::vector<double> mus = ck.train_mus;
  mus.insert(mus.end(), c.test_mu.begin(), c.test_mu.end());

  io::Csv d(latent_header(ck.arch.latent_dim));
  for (double mu : mus)
    for (double t : times) d.row(cells(phi_row(mu, t, model.latent(t, mu))));
  d.write(out_dir(c) / "latents.csv");
  r.files.push_back("latents.csv");

  if (with_eq) {
    const auto p = problem_of(c);
    io::Csv e(latent_header(ck.arch.latent_dim));
    for (double mu : mus) {
      const auto lt = online::integrate_eq(ck, *p, mu, times, ng_config(c));
      for (std::size_t k = 0; k < lt.times.size(); ++k) e.row(cells(phi_row(mu, lt.times[k], lt.phi[k])));
    }
    e.write(out_dir(c) / "latents_eq.csv");
    r.files.push_back("latents_eq.csv");
  }
  write_manifest(c, "export-latents", r);
  return r;
}

}  // namespace colora::harness

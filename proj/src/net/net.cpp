#include "colora/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace colora::net {

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (contains(name)) throw InvalidInput("ParamStore: duplicate entry " + name);
  if (rows < 0 || cols < 0) throw InvalidInput("ParamStore: negative shape for " + name);
  ParamEntry e{name, rows, cols, values_.size()};
  entries_.push_back(e);
  values_.conservativeResize(values_.size() + e.size());
  values_.tail(e.size()).setZero();
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const ParamEntry& e) { return e.name == name; });
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw InvalidInput("ParamStore: no entry " + name);
}

Eigen::Map<RowMat> ParamStore::view(const std::string& name) {
  const ParamEntry& e = entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const RowMat> ParamStore::view(const std::string& name) const {
  const ParamEntry& e = entry(name);
  return {values_.data() + e.offset, e.rows, e.cols};
}

bool ParamStore::operator==(const ParamStore& o) const {
  if (entries_.size() != o.entries_.size() || values_.size() != o.values_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = o.entries_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset) return false;
  }
  return std::equal(values_.begin(), values_.end(), o.values_.begin());
}

// ---------------------------------------------------------------------------
// Architecture

ColoraNet make_colora_net(const ArchConfig& cfg) {
  if (cfg.in_dim < 1 || cfg.out_dim < 1 || cfg.width < 1 || cfg.rank < 1 || cfg.latent_dim < 1)
    throw InvalidInput("architecture: sizes must be positive");
  const int hidden = cfg.periodic ? cfg.depth - 1 : cfg.depth;
  if (hidden < 1) throw InvalidInput("architecture: depth too small");

  ColoraNet net;
  net.in_dim = cfg.in_dim;
  net.out_dim = cfg.out_dim;
  net.latent_dim = cfg.latent_dim;
  net.periodic = cfg.periodic;
  net.periodic_width = cfg.periodic ? cfg.width : 0;
  net.period = cfg.period;

  int next_latent = 0;
  int in = cfg.periodic ? cfg.width : cfg.in_dim;
  for (int l = 0; l < hidden; ++l) {
    LayerSpec spec;
    spec.in = in;
    spec.out = (l + 1 == hidden) ? cfg.out_dim : cfg.width;
    spec.prefix = "u.L" + std::to_string(l);
    spec.act = Activation::Swish;
    const int cap_rank = std::min({cfg.rank, spec.in, spec.out});
    if (next_latent < cfg.latent_dim) {
      spec.rank = cap_rank;
      if (cfg.mode == LatentMode::Scalar) {
        spec.row_latent.assign(static_cast<std::size_t>(cap_rank), next_latent++);
      } else {
        for (int s = 0; s < cap_rank; ++s)
          spec.row_latent.push_back(next_latent < cfg.latent_dim ? next_latent++ : -1);
      }
    }
    net.layers.push_back(std::move(spec));
    in = cfg.width;
  }
  if (next_latent < cfg.latent_dim)
    throw InvalidInput("architecture: latent dimension " + std::to_string(cfg.latent_dim) +
                       " exceeds what " + std::to_string(hidden) + " layers can carry");
  return net;
}

HyperNet make_hyper_net(const ArchConfig& cfg) {
  if (cfg.hyper_depth < 1 || cfg.hyper_width < 1) throw InvalidInput("architecture: bad hyper-network size");
  HyperNet h;
  h.in_dim = 1 + cfg.mu_dim;
  h.out_dim = cfg.latent_dim;
  int in = h.in_dim;
  for (int l = 0; l < cfg.hyper_depth; ++l) {
    const int out = (l + 1 == cfg.hyper_depth) ? cfg.latent_dim : cfg.hyper_width;
    h.layers.emplace_back(in, out);
    in = out;
  }
  return h;
}

ParamStore make_param_store(const ColoraNet& net, const HyperNet& hyper) {
  ParamStore p;
  if (net.periodic) {
    p.add("u.P.a", net.periodic_width, 1);
    p.add("u.P.c", net.periodic_width, 1);
    p.add("u.P.b", net.periodic_width, 1);
  }
  for (const auto& l : net.layers) {
    p.add(l.prefix + ".W", l.out, l.in);
    p.add(l.prefix + ".b", l.out, 1);
    if (l.rank > 0) {
      p.add(l.prefix + ".A", l.out, l.rank);
      p.add(l.prefix + ".B", l.rank, l.in);
    }
  }
  for (std::size_t l = 0; l < hyper.layers.size(); ++l) {
    p.add("h.L" + std::to_string(l) + ".W", hyper.layers[l].second, hyper.layers[l].first);
    p.add("h.L" + std::to_string(l) + ".b", hyper.layers[l].second, 1);
  }
  return p;
}

ParamStore init_params(const ArchConfig& cfg, std::uint64_t seed) {
  const ColoraNet net = make_colora_net(cfg);
  const HyperNet hyper = make_hyper_net(cfg);
  ParamStore p = make_param_store(net, hyper);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  auto fill_normal = [&](const std::string& name, double stddev) {
    auto v = p.view(name);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = stddev * normal(rng);
  };
  if (net.periodic) {
    fill_normal("u.P.a", 1.0);
    auto c = p.view("u.P.c");
    for (Eigen::Index i = 0; i < c.rows(); ++i) c(i, 0) = phase(rng);
  }
  for (const auto& l : net.layers) {
    fill_normal(l.prefix + ".W", 1.0 / std::sqrt(static_cast<double>(l.in)));
    if (l.rank > 0) fill_normal(l.prefix + ".A", 1.0 / std::sqrt(static_cast<double>(l.in)));
  }
  for (std::size_t l = 0; l < hyper.layers.size(); ++l)
    fill_normal("h.L" + std::to_string(l) + ".W", 1.0 / std::sqrt(static_cast<double>(hyper.layers[l].first)));
  return p;
}

// ---------------------------------------------------------------------------
// Normalizer

Normalizer Normalizer::fit(std::span<const double> times, std::span<const std::vector<double>> mus,
                           std::vector<double> x_lo, std::vector<double> x_hi) {
  if (times.empty() || mus.empty()) throw InvalidInput("Normalizer::fit: empty statistics");
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const double sd = std::sqrt(var);
    return std::pair{mean, sd > 0.0 ? sd : 1.0};
  };
  Normalizer n;
  const auto [tm, ts] = stats(std::vector<double>(times.begin(), times.end()));
  n.in_mean.push_back(tm);
  n.in_std.push_back(ts);
  for (std::size_t c = 0; c < mus.front().size(); ++c) {
    std::vector<double> col;
    for (const auto& m : mus) col.push_back(m.at(c));
    const auto [mm, ms] = stats(col);
    n.in_mean.push_back(mm);
    n.in_std.push_back(ms);
  }
  if (x_lo.size() != x_hi.size()) throw InvalidInput("Normalizer::fit: bounds mismatch");
  for (std::size_t k = 0; k < x_lo.size(); ++k)
    if (!(x_hi[k] > x_lo[k])) throw InvalidInput("Normalizer::fit: empty spatial range");
  n.x_lo = std::move(x_lo);
  n.x_hi = std::move(x_hi);
  return n;
}

Normalizer Normalizer::identity(int in_channels, int x_dim) {
  Normalizer n;
  n.in_mean.assign(static_cast<std::size_t>(in_channels), 0.0);
  n.in_std.assign(static_cast<std::size_t>(in_channels), 1.0);
  n.x_lo.assign(static_cast<std::size_t>(x_dim), 0.0);
  n.x_hi.assign(static_cast<std::size_t>(x_dim), 1.0);
  return n;
}

Vec Normalizer::normalize_input(double t, std::span<const double> mu) const {
  if (mu.size() + 1 != in_mean.size()) throw InvalidInput("Normalizer: parameter dimension mismatch");
  Vec v(static_cast<Eigen::Index>(in_mean.size()));
  v(0) = (t - in_mean[0]) / in_std[0];
  for (std::size_t c = 0; c < mu.size(); ++c)
    v(static_cast<Eigen::Index>(c) + 1) = (mu[c] - in_mean[c + 1]) / in_std[c + 1];
  return v;
}

Vec Normalizer::denormalize_input(const Vec& v) const {
  Vec out(v.size());
  for (Eigen::Index c = 0; c < v.size(); ++c) out(c) = v(c) * in_std[c] + in_mean[c];
  return out;
}

// ---------------------------------------------------------------------------
// Layer-level operations

Vec colora_forward(const RowMat& w, const RowMat& a, const RowMat& b_low, const Vec& bias, const Vec& x,
                   std::span<const double> alpha) {
  const Eigen::Index r = a.cols();
  if (w.cols() != x.size() || w.rows() != bias.size() || a.rows() != w.rows() || b_low.rows() != r ||
      b_low.cols() != x.size())
    throw InvalidInput("colora_forward: shape mismatch");
  Vec low = b_low * x;
  if (alpha.size() == 1) {
    low *= alpha[0];
  } else if (static_cast<Eigen::Index>(alpha.size()) == r) {
    for (Eigen::Index s = 0; s < r; ++s) low(s) *= alpha[static_cast<std::size_t>(s)];
  } else {
    throw InvalidInput("colora_forward: alpha must have 1 or rank entries");
  }
  return w * x + a * low + bias;
}

Vec periodic_forward(const Vec& a, const Vec& c, const Vec& b, double period, const Vec& x) {
  if (a.size() != c.size() || a.size() != b.size()) throw InvalidInput("periodic_forward: shape mismatch");
  const double scale = 2.0 * std::numbers::pi / period;
  Vec out = Vec::Zero(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index k = 0; k < x.size(); ++k) out(i) += a(i) * std::cos(x(k) * scale + c(i)) + b(i);
  return out;
}

// ---------------------------------------------------------------------------
// Batched jets

namespace {

struct Layout {
  Eigen::Index n = 0;  // points
  int d = 0;
  int q = 0;
  bool spatial = false, second = false, latent = false;
  int channels() const { return 1 + (spatial ? d : 0) + (second ? d : 0) + (latent ? q : 0); }
  Eigen::Index dx(int k) const { return (1 + k) * n; }
  Eigen::Index dxx(int k) const { return (1 + d + k) * n; }
  Eigen::Index dphi(int j) const { return (1 + (spatial ? d : 0) + (second ? d : 0) + j) * n; }
};

struct ActDerivs {
  Mat g, dg, ddg;
};

ActDerivs activation_derivs(const ColoraNet& net, Activation act, const Mat& z) {
  ActDerivs out{Mat(z.rows(), z.cols()), Mat(z.rows(), z.cols()), Mat(z.rows(), z.cols())};
  if (act == Activation::Swish) {
    const auto za = z.array();
    const Eigen::ArrayXXd s = (1.0 + (-za).exp()).inverse();
    const Eigen::ArrayXXd ds = s * (1.0 - s);
    out.g = (za * s).matrix();
    out.dg = (s + za * ds).matrix();
    out.ddg = (ds * (2.0 + za * (1.0 - 2.0 * s))).matrix();
    return out;
  }
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double v = z(i, j);
      out.g(i, j) = net.custom->f(v);
      out.dg(i, j) = net.custom->df(v);
      out.ddg(i, j) = net.custom->ddf(v);
    }
  return out;
}

// Applies an elementwise activation to every channel block in place.
void apply_activation(const ColoraNet& net, Activation act, const Layout& lay, Mat& h) {
  if (act == Activation::Identity) return;
  const Eigen::Index n = lay.n;
  const ActDerivs a = activation_derivs(net, act, h.leftCols(n));
  if (lay.second)
    for (int k = 0; k < lay.d; ++k) {
      auto zx = h.middleCols(lay.dx(k), n);
      auto zxx = h.middleCols(lay.dxx(k), n);
      zxx = (a.ddg.array() * zx.array().square() + a.dg.array() * zxx.array()).matrix();
    }
  if (lay.spatial)
    for (int k = 0; k < lay.d; ++k) h.middleCols(lay.dx(k), n).array() *= a.dg.array();
  if (lay.latent)
    for (int j = 0; j < lay.q; ++j) h.middleCols(lay.dphi(j), n).array() *= a.dg.array();
  h.leftCols(n) = a.g;
}

}  // namespace

Jets forward_jets(const ColoraNet& net, const ParamStore& params, const Vec& phi, const Mat& x,
                  JetRequest req) {
  if (x.rows() != net.in_dim) throw InvalidInput("forward_jets: input dimension mismatch");
  if (phi.size() != net.latent_dim) throw InvalidInput("forward_jets: latent length mismatch");
  Layout lay;
  lay.n = x.cols();
  lay.d = net.in_dim;
  lay.q = net.latent_dim;
  lay.second = req.second;
  lay.spatial = req.spatial || req.second;
  lay.latent = req.latent;
  const Eigen::Index n = lay.n;
  const Eigen::Index total = n * lay.channels();

  Mat h;
  if (net.periodic) {
    const auto a = params.view("u.P.a");
    const auto c = params.view("u.P.c");
    const auto b = params.view("u.P.b");
    const double scale = 2.0 * std::numbers::pi / net.period;
    h = Mat::Zero(net.periodic_width, total);
    for (Eigen::Index p = 0; p < n; ++p)
      for (int k = 0; k < lay.d; ++k)
        for (int i = 0; i < net.periodic_width; ++i) {
          const double z = x(k, p) * scale + c(i, 0);
          const double cz = std::cos(z);
          h(i, p) += a(i, 0) * cz + b(i, 0);
          if (lay.spatial) h(i, lay.dx(k) + p) = -a(i, 0) * std::sin(z) * scale;
          if (lay.second) h(i, lay.dxx(k) + p) = -a(i, 0) * cz * scale * scale;
        }
    apply_activation(net, Activation::Swish, lay, h);
  } else {
    h = Mat::Zero(lay.d, total);
    h.leftCols(n) = x;
    if (lay.spatial)
      for (int k = 0; k < lay.d; ++k) h.row(k).segment(lay.dx(k), n).setOnes();
  }

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& spec = net.layers[l];
    const Mat w = params.view(spec.prefix + ".W");
    const Vec bias = params.view(spec.prefix + ".b").col(0);
    Mat y;
    y.noalias() = w * h;
    y.leftCols(n).colwise() += bias;
    if (spec.rank > 0) {
      const Mat a = params.view(spec.prefix + ".A");
      const Mat bl = params.view(spec.prefix + ".B");
      Mat t;
      t.noalias() = bl * h;
      if (lay.latent) {
        for (int s = 0; s < spec.rank; ++s) {
          const int j = spec.row_latent[static_cast<std::size_t>(s)];
          if (j < 0) continue;
          y.middleCols(lay.dphi(j), n).noalias() += a.col(s) * t.row(s).head(n);
        }
      }
      for (int s = 0; s < spec.rank; ++s) {
        const int j = spec.row_latent[static_cast<std::size_t>(s)];
        t.row(s) *= (j < 0) ? 0.0 : phi(j);
      }
      y.noalias() += a * t;
    }
    if (l + 1 < net.layers.size()) apply_activation(net, spec.act, lay, y);
    h = std::move(y);
  }

  Jets out;
  out.value = h.leftCols(n);
  if (lay.spatial)
    for (int k = 0; k < lay.d; ++k) out.dx.push_back(h.middleCols(lay.dx(k), n));
  if (lay.second)
    for (int k = 0; k < lay.d; ++k) out.dxx.push_back(h.middleCols(lay.dxx(k), n));
  if (lay.latent)
    for (int j = 0; j < lay.q; ++j) out.dphi.push_back(h.middleCols(lay.dphi(j), n));
  return out;
}

Mat hyper_forward(const HyperNet& h, const ParamStore& params, const Mat& inputs) {
  if (inputs.rows() != h.in_dim) throw InvalidInput("hyper_forward: input dimension mismatch");
  Mat cur = inputs;
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    const Mat w = params.view("h.L" + std::to_string(l) + ".W");
    const Vec b = params.view("h.L" + std::to_string(l) + ".b").col(0);
    Mat next;
    next.noalias() = w * cur;
    next.colwise() += b;
    if (l + 1 < h.layers.size()) next = next.unaryExpr([](double v) { return ad::swish(v); });
    cur = std::move(next);
  }
  return cur;
}

Vec hyper_eval(const HyperNet& h, const ParamStore& params, const Normalizer& norm, double t,
               std::span<const double> mu) {
  const Vec in = norm.normalize_input(t, mu);
  const std::vector<double> input(in.data(), in.data() + in.size());
  const std::vector<double> out = hyper_eval_point<double>(h, params, input);
  return Eigen::Map<const Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// ---------------------------------------------------------------------------
// Tape forward

ad::Var TapeParams::get(const std::string& name) const {
  const auto& entries = store->entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return vars[i];
  throw InvalidInput("TapeParams: no entry " + name);
}

TapeParams tape_params(ad::Tape& tape, const ParamStore& params) {
  TapeParams p;
  p.store = &params;
  p.flat = tape.leaf(params.flat());
  for (const auto& e : params.entries()) p.vars.push_back(tape.slice(p.flat, e.offset, e.rows, e.cols));
  return p;
}

ad::Var net_forward_tape(ad::Tape& tape, const ColoraNet& net, const TapeParams& p, ad::Var alpha, ad::Var x) {
  const Eigen::Index n = tape.value(x).cols();
  if (tape.value(x).rows() != net.in_dim) throw InvalidInput("net_forward_tape: input dimension mismatch");
  if (tape.value(alpha).rows() != net.latent_dim || tape.value(alpha).cols() != n)
    throw InvalidInput("net_forward_tape: latent block has wrong shape");
  ad::Var h = x;
  if (net.periodic) {
    const double scale = 2.0 * std::numbers::pi / net.period;
    const ad::Var ones = tape.constant(Mat::Ones(net.periodic_width, 1));
    const ad::Var a = p.get("u.P.a");
    const ad::Var c = p.get("u.P.c");
    ad::Var acc{};
    for (int k = 0; k < net.in_dim; ++k) {
      const ad::Var xk = tape.select_rows(x, {k});
      const ad::Var z = tape.add_col(tape.scale(tape.matmul(ones, xk), scale), c);
      const ad::Var term = tape.mul_col(tape.cos(z), a);
      acc = (k == 0) ? term : tape.add(acc, term);
    }
    acc = tape.add_col(acc, tape.scale(p.get("u.P.b"), static_cast<double>(net.in_dim)));
    h = tape.swish(acc);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& spec = net.layers[l];
    ad::Var y = tape.add_col(tape.matmul(p.get(spec.prefix + ".W"), h), p.get(spec.prefix + ".b"));
    if (spec.rank > 0) {
      const ad::Var t = tape.matmul(p.get(spec.prefix + ".B"), h);
      const ad::Var rows = tape.select_rows(alpha, spec.row_latent);
      y = tape.add(y, tape.matmul(p.get(spec.prefix + ".A"), tape.mul(t, rows)));
    }
    if (l + 1 < net.layers.size()) {
      switch (spec.act) {
        case Activation::Swish:
          y = tape.swish(y);
          break;
        case Activation::Identity:
          break;
        case Activation::Custom:
          throw InvalidInput("net_forward_tape: custom activations are not differentiable on the tape");
      }
    }
    h = y;
  }
  (void)n;
  return h;
}

ad::Var hyper_forward_tape(ad::Tape& tape, const HyperNet& h, const TapeParams& p, ad::Var inputs) {
  ad::Var cur = inputs;
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    cur = tape.add_col(tape.matmul(p.get("h.L" + std::to_string(l) + ".W"), cur),
                       p.get("h.L" + std::to_string(l) + ".b"));
    if (l + 1 < h.layers.size()) cur = tape.swish(cur);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Exact translation

AdvectionNet build_advection_net(CustomActivation u0) {
  AdvectionNet out;
  ColoraNet& net = out.net;
  net.in_dim = 1;
  net.out_dim = 1;
  net.latent_dim = 1;
  net.periodic = false;
  net.custom = std::move(u0);
  net.layers = {
      LayerSpec{1, 2, 0, {}, Activation::Identity, "u.L0"},
      LayerSpec{2, 1, 1, {0}, Activation::Custom, "u.L1"},
      LayerSpec{1, 1, 0, {}, Activation::Identity, "u.L2"},
  };
  out.params = make_param_store(net, HyperNet{});
  auto& p = out.params;
  p.view("u.L0.W") << 1.0, 0.0;
  p.view("u.L0.b") << 0.0, 1.0;
  p.view("u.L1.W") << 1.0, 0.0;
  p.view("u.L1.b") << 0.0;
  p.view("u.L1.A") << 1.0;
  p.view("u.L1.B") << 0.0, 1.0;
  p.view("u.L2.W") << 1.0;
  p.view("u.L2.b") << 0.0;
  return out;
}

}  // namespace colora::net

#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "colora/autodiff/dual2.hpp"
#include "colora/autodiff/tape.hpp"
#include "colora/error.hpp"

namespace colora::net {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Parameter storage

struct ParamEntry {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  Eigen::Index size() const { return rows * cols; }
};

/// Named, shaped parameters backed by one flat vector (row-major per entry).
class ParamStore {
 public:
  /// Appends a zero-initialized entry; names must be unique.
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  bool contains(const std::string& name) const;
  const ParamEntry& entry(const std::string& name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }

  Eigen::Map<RowMat> view(const std::string& name);
  Eigen::Map<const RowMat> view(const std::string& name) const;

  Vec& flat() { return values_; }
  const Vec& flat() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  bool operator==(const ParamStore& o) const;

 private:
  std::vector<ParamEntry> entries_;
  Vec values_;
};

// ---------------------------------------------------------------------------
// Architecture

enum class LatentMode { Scalar, Diag };
enum class Activation { Swish, Identity, Custom };

/// Elementwise activation given in closed form with two derivatives.
struct CustomActivation {
  std::function<double(double)> f, df, ddf;
};

struct ArchConfig {
  int in_dim = 1;    // spatial dimension d
  int out_dim = 1;   // number of output fields
  int depth = 8;     // layers of the field network, periodic layer included
  int width = 25;
  int rank = 3;
  int latent_dim = 3;  // q
  LatentMode mode = LatentMode::Diag;
  bool periodic = true;
  double period = 1.0;  // in normalized coordinates
  int hyper_depth = 3;
  int hyper_width = 15;
  int mu_dim = 1;

  bool operator==(const ArchConfig&) const = default;
};

/// One affine layer of the field network, optionally with a low-rank
/// latent-modulated term W x + A diag(alpha) B x + b.
struct LayerSpec {
  int in = 0;
  int out = 0;
  int rank = 0;                 // 0 for a plain linear layer
  std::vector<int> row_latent;  // size rank; latent index feeding alpha_s, -1 = frozen at 0
  Activation act = Activation::Swish;  // applied to this layer's output (ignored for the last layer)
  std::string prefix;
};

/// Structure of the implicit representation u(x; theta, phi).
struct ColoraNet {
  int in_dim = 1;
  int out_dim = 1;
  int latent_dim = 0;
  bool periodic = true;
  int periodic_width = 0;
  double period = 1.0;
  std::vector<LayerSpec> layers;  // ordered from the input side
  std::optional<CustomActivation> custom;
};

/// Structure of the hyper-network h(t, mu; psi) -> phi.
struct HyperNet {
  int in_dim = 2;
  int out_dim = 1;
  std::vector<std::pair<int, int>> layers;  // (in, out) per affine layer
};

/// Builds the field network, assigning latent entries to the layers closest to the input.
ColoraNet make_colora_net(const ArchConfig& cfg);
HyperNet make_hyper_net(const ArchConfig& cfg);

/// Canonical parameter layout for both networks (all zeros).
ParamStore make_param_store(const ColoraNet& net, const HyperNet& hyper);

/// Random initialization, deterministic per seed. W and hyper-network weights
/// ~ N(0, 1/fan_in), A ~ N(0, 1/in), B = 0, biases 0; periodic amplitudes ~ N(0,1),
/// phases ~ U[0, 2pi).
ParamStore init_params(const ArchConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Normalization

/// Maps (t, mu) to zero mean / unit variance and x into [0, 1]^d.
struct Normalizer {
  std::vector<double> in_mean;  // channel 0 is t, then mu components
  std::vector<double> in_std;
  std::vector<double> x_lo;
  std::vector<double> x_hi;

  static Normalizer fit(std::span<const double> times, std::span<const std::vector<double>> mus,
                        std::vector<double> x_lo, std::vector<double> x_hi);
  static Normalizer identity(int in_channels, int x_dim);

  Vec normalize_input(double t, std::span<const double> mu) const;
  Vec denormalize_input(const Vec& v) const;
  double normalize_x(int k, double x) const { return (x - x_lo[k]) / (x_hi[k] - x_lo[k]); }
  double denormalize_x(int k, double s) const { return x_lo[k] + s * (x_hi[k] - x_lo[k]); }
  double x_scale(int k) const { return x_hi[k] - x_lo[k]; }

  bool operator==(const Normalizer&) const = default;
};

// ---------------------------------------------------------------------------
// Layer-level operations

/// W x + alpha A B x + b (scalar mode, one alpha) or W x + A (alpha .* B x) + b (diag mode).
Vec colora_forward(const RowMat& w, const RowMat& a, const RowMat& b_low, const Vec& bias, const Vec& x,
                   std::span<const double> alpha);

/// Per unit i: sum_k a_i cos(2 pi x_k / period + c_i) + b_i.
Vec periodic_forward(const Vec& a, const Vec& c, const Vec& b, double period, const Vec& x);

// ---------------------------------------------------------------------------
// Forward passes

/// Activation value for any supported scalar type.
template <class T>
T activate(const ColoraNet& net, Activation act, const T& z) {
  using std::cos;
  switch (act) {
    case Activation::Swish:
      return ad::swish(z);
    case Activation::Identity:
      return z;
    case Activation::Custom:
      if constexpr (std::is_same_v<T, double>) {
        return net.custom->f(z);
      } else {
        return ad::chain(z, net.custom->f(z.val), net.custom->df(z.val), net.custom->ddf(z.val));
      }
  }
  return z;
}

/// Pointwise evaluation of u at normalized coordinates x, templated on the
/// scalar type (double or Dual2) so derivatives in x or phi follow by seeding.
template <class T>
std::vector<T> net_eval(const ColoraNet& net, const ParamStore& params, std::span<const T> phi,
                        std::span<const T> x) {
  using std::cos;
  if (static_cast<int>(phi.size()) != net.latent_dim) throw InvalidInput("net_eval: latent length mismatch");
  if (static_cast<int>(x.size()) != net.in_dim) throw InvalidInput("net_eval: input dimension mismatch");
  std::vector<T> h;
  if (net.periodic) {
    const auto a = params.view("u.P.a");
    const auto c = params.view("u.P.c");
    const auto b = params.view("u.P.b");
    const double scale = 2.0 * std::numbers::pi / net.period;
    h.assign(static_cast<std::size_t>(net.periodic_width), T(0.0));
    for (int i = 0; i < net.periodic_width; ++i)
      for (int k = 0; k < net.in_dim; ++k)
        h[i] += a(i, 0) * cos(x[k] * scale + T(c(i, 0))) + T(b(i, 0));
    for (auto& v : h) v = ad::swish(v);
  } else {
    h.assign(x.begin(), x.end());
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& spec = net.layers[l];
    const auto w = params.view(spec.prefix + ".W");
    const auto bias = params.view(spec.prefix + ".b");
    std::vector<T> out(static_cast<std::size_t>(spec.out), T(0.0));
    for (int i = 0; i < spec.out; ++i) {
      T acc(bias(i, 0));
      for (int j = 0; j < spec.in; ++j) acc += w(i, j) * h[j];
      out[i] = acc;
    }
    if (spec.rank > 0) {
      const auto a = params.view(spec.prefix + ".A");
      const auto bl = params.view(spec.prefix + ".B");
      for (int s = 0; s < spec.rank; ++s) {
        const int latent = spec.row_latent[s];
        if (latent < 0) continue;
        T t(0.0);
        for (int j = 0; j < spec.in; ++j) t += bl(s, j) * h[j];
        t *= phi[latent];
        for (int i = 0; i < spec.out; ++i) out[i] += a(i, s) * t;
      }
    }
    if (l + 1 < net.layers.size())
      for (auto& v : out) v = activate(net, spec.act, v);
    h = std::move(out);
  }
  return h;
}

/// Requested derivative channels for the batched forward pass.
struct JetRequest {
  bool spatial = false;  // first derivatives in each x_k
  bool second = false;   // pure second derivatives in each x_k (implies spatial)
  bool latent = false;   // first derivatives in each phi_j
};

/// Batched forward pass results; every matrix is out_dim x n_points and
/// spatial derivatives refer to normalized coordinates.
struct Jets {
  Mat value;
  std::vector<Mat> dx;
  std::vector<Mat> dxx;
  std::vector<Mat> dphi;
};

/// Evaluates u and the requested derivatives at the columns of x (d x n).
Jets forward_jets(const ColoraNet& net, const ParamStore& params, const Vec& phi, const Mat& x,
                  JetRequest req = {});

/// Hyper-network on normalized inputs (in_dim x n) -> phi (q x n).
Mat hyper_forward(const HyperNet& h, const ParamStore& params, const Mat& inputs);

template <class T>
std::vector<T> hyper_eval_point(const HyperNet& h, const ParamStore& params, std::span<const T> input) {
  std::vector<T> cur(input.begin(), input.end());
  for (std::size_t l = 0; l < h.layers.size(); ++l) {
    const auto w = params.view("h.L" + std::to_string(l) + ".W");
    const auto b = params.view("h.L" + std::to_string(l) + ".b");
    std::vector<T> next(static_cast<std::size_t>(h.layers[l].second));
    for (int i = 0; i < h.layers[l].second; ++i) {
      T acc(b(i, 0));
      for (int j = 0; j < h.layers[l].first; ++j) acc += w(i, j) * cur[j];
      next[i] = (l + 1 < h.layers.size()) ? ad::swish(acc) : acc;
    }
    cur = std::move(next);
  }
  return cur;
}

/// phi(t, mu) from the hyper-network; inputs are normalized here.
Vec hyper_eval(const HyperNet& h, const ParamStore& params, const Normalizer& norm, double t,
               std::span<const double> mu);

/// Tape variables for the parameters of both networks, sliced from one flat leaf.
struct TapeParams {
  ad::Var flat;
  std::vector<ad::Var> vars;  // parallel to ParamStore::entries()
  const ParamStore* store = nullptr;
  ad::Var get(const std::string& name) const;
};
TapeParams tape_params(ad::Tape& tape, const ParamStore& params);

/// Field network on the tape. alpha: latent rows (q x n), x: normalized inputs (d x n).
ad::Var net_forward_tape(ad::Tape& tape, const ColoraNet& net, const TapeParams& p, ad::Var alpha, ad::Var x);
/// Hyper-network on the tape: normalized inputs (in_dim x n) -> (q x n).
ad::Var hyper_forward_tape(ad::Tape& tape, const HyperNet& h, const TapeParams& p, ad::Var inputs);

// ---------------------------------------------------------------------------
// Exact translation construction

struct AdvectionNet {
  ColoraNet net;
  ParamStore params;
  /// Latent rule phi(t, mu) = -t mu.
  static Vec latent(double t, double mu) { return Vec::Constant(1, -t * mu); }
};

/// Three-layer network reproducing u0(x - t mu) with u0 as an activation.
AdvectionNet build_advection_net(CustomActivation u0);

}  // namespace colora::net

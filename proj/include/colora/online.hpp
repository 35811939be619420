#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "colora/net.hpp"
#include "colora/pde/ode.hpp"
#include "colora/pde/problem.hpp"
#include "colora/pretrain.hpp"

namespace colora::online {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A field u(x; phi) that can report its value, spatial derivatives (physical
/// units) and latent derivatives at a set of points. Every matrix in the
/// returned jets is fields x n_points.
class LatentField {
 public:
  virtual ~LatentField() = default;
  virtual int dim() const = 0;
  virtual int fields() const = 0;
  virtual int latent_dim() const = 0;
  virtual net::Jets eval(const Vec& phi, const Mat& x, net::JetRequest req) const = 0;
};

/// The field network of a checkpoint, taking physical coordinates.
class NetField final : public LatentField {
 public:
  explicit NetField(const train::Checkpoint& c);
  NetField(net::ColoraNet net, const net::ParamStore& params, net::Normalizer norm);

  int dim() const override { return net_.in_dim; }
  int fields() const override { return net_.out_dim; }
  int latent_dim() const override { return net_.latent_dim; }
  net::Jets eval(const Vec& phi, const Mat& x, net::JetRequest req) const override;

 private:
  net::ColoraNet net_;
  const net::ParamStore* params_;
  net::Normalizer norm_;
};

/// Pointwise PDE right-hand side evaluated on field jets (fields x n_points).
using PointRhs = std::function<Mat(const pde::PointState&)>;
PointRhs problem_rhs(const pde::Problem& p, double mu);

enum class Sampling { Grid, Random };

struct NGConfig {
  Sampling sampling = Sampling::Grid;
  std::vector<int> n_x;        // Grid: points per dimension; empty picks the problem default
  int n_random = 0;            // Random: sample count
  std::uint64_t seed = 0;      // Random: sample positions
  double lstsq_tol = 1e-10;    // relative singular value cutoff
  double rtol = 1e-6;
  double atol = 1e-6;
  bool conserve = false;       // mass constraint on phi-dot
  bool project_mass = true;    // with conserve: pull each accepted state back onto the initial mass
  bool fit_initial = false;    // fit phi(0) to u0 instead of taking it from the hyper-network
};

/// Collocation points (d x n) with quadrature weights.
struct Samples {
  Mat x;
  Vec w;
};

/// Uniform lattice with cell-volume weights, or uniform random points with
/// weights volume / n. Default lattice: the problem grid for d = 1, 64 per axis otherwise.
Samples make_samples(const pde::Problem& p, const NGConfig& cfg);

/// Least-squares system of one Neural Galerkin step. Rows are field-major
/// (row f * n + k belongs to field f at sample k).
struct Assembly {
  Mat J;  // (F n) x q
  Vec f;  // F n
  Mat C;  // F x q, quadrature-weighted latent derivatives (mass rows)
  Mat u;  // F x n field values
};

Assembly ng_assemble(const LatentField& field, const Vec& phi, const Samples& s, const PointRhs& rhs,
                     bool second = true);

/// C_{f j} = sum_k w_k du_f(x_k)/dphi_j.
Mat mass_constraint(const LatentField& field, const Vec& phi, const Samples& s);
/// Quadrature mass of each field.
Vec mass(const LatentField& field, const Vec& phi, const Samples& s);

struct NgStep {
  Vec phidot;
  double residual = 0.0;    // ||J phidot - f||
  double rhs_norm = 0.0;    // ||f||
  double constraint = 0.0;  // max |C phidot|, 0 when unconstrained
  int rank = 0;
  bool degenerate = false;
};

/// Minimum-norm least-squares phi-dot, optionally subject to C phidot = 0.
NgStep ng_solve(const Assembly& a, double tol, bool conserve);
NgStep ng_rhs(const LatentField& field, const Vec& phi, const Samples& s, const PointRhs& rhs, const NGConfig& cfg,
              bool second = true);

/// Newton iterations with minimum-norm corrections until the quadrature mass
/// equals `target` to `tol` (relative). Returns the number of corrections.
int project_mass(const LatentField& field, Vec& phi, const Samples& s, const Vec& target, double tol = 1e-14,
                 int max_iters = 8);

struct LatentTrajectory {
  std::vector<double> times;
  std::vector<Vec> phi;  // per output time
  // Per accepted step (the initial state included).
  std::vector<double> step_times;
  std::vector<double> residuals;
  std::vector<double> rhs_norms;
  std::vector<double> constraint;
  std::vector<Vec> step_mass;
  long degenerate_steps = 0;
  pde::OdeStats stats;

  bool operator==(const LatentTrajectory&) const = default;
};

/// dopri5 on phi-dot = ng_rhs from phi0, with outputs at `times` (dense output).
LatentTrajectory integrate_latent(const LatentField& field, const PointRhs& rhs, const Vec& phi0,
                                  const std::vector<double>& times, const Samples& s, const NGConfig& cfg,
                                  bool second = true);

/// Initial latent state: the hyper-network at times.front(), or the least-squares fit to u0.
Vec initial_latent(const train::Checkpoint& c, const pde::Problem& p, double mu, double t0, const Samples& s,
                   const NGConfig& cfg);

/// Equation-driven prediction for a checkpoint at parameter mu.
LatentTrajectory integrate_eq(const train::Checkpoint& c, const pde::Problem& p, double mu,
                              const std::vector<double>& times, const NGConfig& cfg);

/// Data-driven prediction: hyper-network latent at each time, then the field
/// network at x (physical, d x n). Returns one F x n matrix per time.
std::vector<Mat> forecast_d(const train::Checkpoint& c, double mu, const std::vector<double>& times, const Mat& x);

/// Field values (F x n) for a sequence of latent states.
std::vector<Mat> render(const LatentField& field, const std::vector<Vec>& phi, const Mat& x);

/// Flattens F x n predictions into field-major frames comparable with snapshot data.
std::vector<Vec> to_frames(const std::vector<Mat>& fields);

/// Normalized least-squares residual ||J phidot* - f|| / ||f|| at every point
/// of the lattice axis0 x axis1 (q must be 2). Entry (i, j) belongs to (axis0[i], axis1[j]).
Mat residual_landscape(const LatentField& field, const PointRhs& rhs, const Samples& s,
                       const std::vector<double>& axis0, const std::vector<double>& axis1, double tol = 1e-10);

}  // namespace colora::online

#include "colora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "colora/error.hpp"

namespace colora::linalg {
namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr double kRotationTol = 1e-14;
constexpr int kMaxSweeps = 100;

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

// Completes the columns flagged in `missing` so that all columns of `u` are
// orthonormal. Candidates are the unit vectors, taken in order of largest
// residual after projection (two passes of Gram-Schmidt).
void complete_basis(ColMatrix& u, const std::vector<bool>& missing) {
  const Eigen::Index m = u.rows();
  std::vector<Eigen::Index> have;
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    if (!missing[j]) have.push_back(j);
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    if (!missing[j]) continue;
    Eigen::VectorXd best;
    double best_norm = -1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(m, i);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index k : have) v -= u.col(k).dot(v) * u.col(k);
      const double nv = v.norm();
      if (nv > best_norm + 1e-12) {
        best_norm = nv;
        best = v;
      }
      if (best_norm > 0.7) break;
    }
    u.col(j) = best / best_norm;
    have.push_back(j);
  }
}

// Jacobi sweeps on a tall (rows >= cols) matrix stored column-major.
// On return the columns of `w` are mutually orthogonal and w = M V.
void jacobi_sweeps(ColMatrix& w, ColMatrix& v, double negligible) {
  const Eigen::Index n = w.cols();
  v.setIdentity(n, n);
  const double negligible_sq = negligible * negligible;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || alpha <= negligible_sq || beta <= negligible_sq ||
            std::abs(gamma) <= kRotationTol * std::sqrt(alpha * beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw ConvergenceError("svd: Jacobi sweeps did not converge");
}

// SVD of a matrix with rows >= cols.
SvdResult svd_tall(ColMatrix w) {
  const Eigen::Index m = w.rows();
  const Eigen::Index n = w.cols();
  ColMatrix v;
  // Columns below this norm are numerically zero and are not rotated.
  const double negligible = 1e-15 * w.norm();
  jacobi_sweeps(w, v, negligible);

  Eigen::VectorXd norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = w.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  SvdResult out;
  out.S.resize(n);
  ColMatrix u(m, n);
  out.Vt.resize(n, n);
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    out.S(k) = norms(j);
    out.Vt.row(k) = v.col(j).transpose();
    if (norms(j) > negligible && norms(j) > 1e-300) {
      u.col(k) = w.col(j) / norms(j);
    } else {
      u.col(k).setZero();
      missing[static_cast<std::size_t>(k)] = true;
    }
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(u, missing);
  out.U = u;
  return out;
}

// Thin Householder QR of a tall matrix: returns Q (m x n) and R (n x n).
void householder_qr(ColMatrix a, ColMatrix& q, ColMatrix& r) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  std::vector<Eigen::VectorXd> reflectors(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd x = a.col(j).tail(m - j);
    const double xn = x.norm();
    Eigen::VectorXd hv = x;
    if (xn > 0.0) {
      hv(0) += (x(0) >= 0.0 ? xn : -xn);
      const double hn = hv.norm();
      hv /= hn;
      auto block = a.bottomRightCorner(m - j, n - j);
      const Eigen::RowVectorXd proj = hv.transpose() * block;
      block.noalias() -= 2.0 * hv * proj;
    } else {
      hv.setZero();
    }
    reflectors[static_cast<std::size_t>(j)] = std::move(hv);
  }
  r = a.topRows(n).triangularView<Eigen::Upper>();
  q = ColMatrix::Identity(m, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const auto& hv = reflectors[static_cast<std::size_t>(j)];
    auto block = q.bottomRightCorner(m - j, n - j);
    const Eigen::RowVectorXd proj = hv.transpose() * block;
    block.noalias() -= 2.0 * hv * proj;
  }
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) throw InvalidInput("svd: empty matrix");
  require_finite(m, "svd");
  if (m.rows() < m.cols()) {
    SvdResult t = svd(Matrix(m.transpose()));
    SvdResult out;
    out.U = t.Vt.transpose();
    out.S = std::move(t.S);
    out.Vt = t.U.transpose();
    return out;
  }
  if (m.rows() > 4 * m.cols()) {
    ColMatrix q, r;
    householder_qr(ColMatrix(m), q, r);
    SvdResult small = svd_tall(r);
    small.U = Matrix(q * small.U);
    return small;
  }
  return svd_tall(ColMatrix(m));
}

LstsqResult lstsq_min_norm(const Matrix& a, const Vector& b, double rel_tol) {
  if (a.rows() != b.size())
    throw InvalidInput("lstsq_min_norm: A has " + std::to_string(a.rows()) + " rows but b has " +
                       std::to_string(b.size()) + " entries");
  if (!b.allFinite()) throw InvalidInput("lstsq_min_norm: non-finite right-hand side");
  LstsqResult out;
  out.x = Vector::Zero(a.cols());
  const SvdResult f = svd(a);
  const double smax = f.S.size() > 0 ? f.S(0) : 0.0;
  if (!(smax > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double cut = rel_tol * smax;
  const Vector utb = f.U.transpose() * b;
  for (Eigen::Index i = 0; i < f.S.size(); ++i) {
    if (!(f.S(i) > cut)) break;
    out.x += f.Vt.row(i).transpose() * (utb(i) / f.S(i));
    ++out.rank;
  }
  return out;
}

Matrix null_space(const Matrix& c, double rel_tol) {
  const Eigen::Index n = c.cols();
  if (n < 1) throw InvalidInput("null_space: zero columns");
  Matrix padded = c;
  if (c.rows() < n) {
    padded = Matrix::Zero(n, n);
    padded.topRows(c.rows()) = c;
  }
  const SvdResult f = svd(padded);
  const double smax = f.S(0);
  Eigen::Index rank = 0;
  if (smax > 0.0)
    while (rank < f.S.size() && f.S(rank) > rel_tol * smax) ++rank;
  return f.Vt.bottomRows(n - rank).transpose();
}

LstsqResult lstsq_constrained(const Matrix& a, const Vector& b, const Matrix& c, double rel_tol) {
  if (c.cols() != a.cols())
    throw InvalidInput("lstsq_constrained: C has " + std::to_string(c.cols()) + " columns, A has " +
                       std::to_string(a.cols()));
  require_finite(c, "lstsq_constrained");
  const Matrix basis = null_space(c, rel_tol);
  LstsqResult out;
  if (basis.cols() == 0) {
    out.x = Vector::Zero(a.cols());
    out.degenerate = true;
    return out;
  }
  LstsqResult reduced = lstsq_min_norm(Matrix(a * basis), b, rel_tol);
  out.x = basis * reduced.x;
  out.rank = reduced.rank;
  out.degenerate = reduced.degenerate;
  return out;
}

}  // namespace colora::linalg

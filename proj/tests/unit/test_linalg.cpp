#include <cmath>

#include "colora/error.hpp"
#include "colora/linalg.hpp"
#include "doctest.h"
#include "test_support.hpp"

using colora::linalg::Matrix;
using colora::linalg::Vector;
namespace la = colora::linalg;

namespace {

double orthonormality_defect(const Matrix& q_cols) {
  const Matrix g = q_cols.transpose() * q_cols;
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

void check_svd(const Matrix& m) {
  const la::SvdResult f = la::svd(m);
  const Eigen::Index k = std::min(m.rows(), m.cols());
  REQUIRE(f.U.rows() == m.rows());
  REQUIRE(f.U.cols() == k);
  REQUIRE(f.S.size() == k);
  REQUIRE(f.Vt.rows() == k);
  REQUIRE(f.Vt.cols() == m.cols());
  for (Eigen::Index i = 0; i + 1 < k; ++i) CHECK(f.S(i) >= f.S(i + 1));
  CHECK(f.S.minCoeff() >= 0.0);
  CHECK(orthonormality_defect(f.U) < 1e-10);
  CHECK(orthonormality_defect(Matrix(f.Vt.transpose())) < 1e-10);
  const Matrix rec = f.U * f.S.asDiagonal() * f.Vt;
  const double scale = std::max(m.norm(), 1e-300);
  CHECK((rec - m).norm() / scale < 1e-10);
  // Independent oracle: Eigen's divide-and-conquer SVD.
  Eigen::BDCSVD<Eigen::MatrixXd> ref(m);
  CHECK((ref.singularValues() - f.S).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, f.S(0)));
}

}  // namespace

TEST_CASE("svd of identity and diagonal matrices") {
  const la::SvdResult id = la::svd(Matrix::Identity(3, 3));
  CHECK((id.S - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-15);

  Matrix d(2, 2);
  d << 3, 0, 0, 1;
  const la::SvdResult f = la::svd(d);
  CHECK(f.S(0) == doctest::Approx(3.0));
  CHECK(f.S(1) == doctest::Approx(1.0));
  CHECK((f.U.cwiseAbs() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((f.Vt.cwiseAbs() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("svd reconstructs random matrices of every aspect ratio") {
  check_svd(colora::test::random_matrix(6, 4, 1));
  check_svd(colora::test::random_matrix(4, 9, 2));
  check_svd(colora::test::random_matrix(60, 5, 3));  // QR-reduced path
  check_svd(colora::test::random_matrix(1, 7, 4));
  check_svd(colora::test::random_matrix(7, 7, 5));
}

TEST_CASE("svd completes U for rank-deficient input") {
  Matrix m = colora::test::random_matrix(5, 3, 7);
  m.col(2).setZero();
  check_svd(m);
  Matrix zero = Matrix::Zero(4, 3);
  const la::SvdResult f = la::svd(zero);
  CHECK(f.S.cwiseAbs().maxCoeff() == 0.0);
  CHECK(orthonormality_defect(f.U) < 1e-12);

  Matrix tall = colora::test::random_matrix(40, 2, 8);
  Matrix dup(40, 4);
  dup << tall, tall;  // rank 2, QR path
  check_svd(dup);
}

TEST_CASE("stacking a matrix on itself scales singular values by sqrt 2") {
  const Matrix m = colora::test::random_matrix(5, 4, 11);
  Matrix stacked(10, 4);
  stacked << m, m;
  const la::SvdResult a = la::svd(m);
  const la::SvdResult b = la::svd(stacked);
  CHECK((b.S - std::sqrt(2.0) * a.S).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("svd rejects non-finite input and is deterministic") {
  Matrix m = colora::test::random_matrix(3, 3, 12);
  const la::SvdResult a = la::svd(m);
  const la::SvdResult b = la::svd(m);
  CHECK(a.U == b.U);
  CHECK(a.S == b.S);
  CHECK(a.Vt == b.Vt);
  m(1, 1) = std::nan("");
  CHECK_THROWS_AS(la::svd(m), colora::InvalidInput);
}

TEST_CASE("minimum-norm least squares") {
  Vector b(2);
  b << 3, 4;
  CHECK((la::lstsq_min_norm(Matrix::Identity(2, 2), b).x - b).norm() < 1e-15);

  Matrix ones = Matrix::Ones(2, 2);
  Vector two = Vector::Constant(2, 2.0);
  const la::LstsqResult r = la::lstsq_min_norm(ones, two);
  CHECK(r.rank == 1);
  CHECK((r.x - Vector::Ones(2)).norm() < 1e-14);

  CHECK_THROWS_AS(la::lstsq_min_norm(ones, Vector::Ones(3)), colora::InvalidInput);
  const la::LstsqResult z = la::lstsq_min_norm(Matrix::Zero(3, 2), Vector::Ones(3));
  CHECK(z.degenerate);
  CHECK(z.x.norm() == 0.0);
}

TEST_CASE("overdetermined least squares matches the normal equations") {
  const Matrix a = colora::test::random_matrix(20, 3, 21);
  const Vector b = colora::test::random_vector(20, 22);
  const Vector x = la::lstsq_min_norm(a, b).x;
  const Eigen::MatrixXd ata = a.transpose() * a;
  const Vector oracle = ata.ldlt().solve(a.transpose() * b);
  CHECK((x - oracle).cwiseAbs().maxCoeff() < 1e-8);
  // Residual orthogonal to range(A).
  const Vector res = a * x - b;
  CHECK((a.transpose() * res).norm() < 1e-8 * (a.norm() * b.norm()));
}

TEST_CASE("constrained least squares") {
  const Matrix a = colora::test::random_matrix(10, 3, 31);
  const Vector b = colora::test::random_vector(10, 32);

  SUBCASE("zero constraint reduces to the unconstrained problem") {
    const Vector x = la::lstsq_constrained(a, b, Matrix::Zero(1, 3)).x;
    CHECK((x - la::lstsq_min_norm(a, b).x).norm() < 1e-12);
  }
  SUBCASE("full constraint forces zero and flags degeneracy") {
    const la::LstsqResult r = la::lstsq_constrained(a, b, Matrix::Identity(3, 3));
    CHECK(r.degenerate);
    CHECK(r.x.norm() == 0.0);
  }
  SUBCASE("matches the KKT block solve") {
    const Matrix c = colora::test::random_matrix(1, 3, 33);
    const Vector x = la::lstsq_constrained(a, b, c).x;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(4, 4);
    kkt.topLeftCorner(3, 3) = a.transpose() * a;
    kkt.topRightCorner(3, 1) = c.transpose();
    kkt.bottomLeftCorner(1, 3) = c;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4);
    rhs.head(3) = a.transpose() * b;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    CHECK((x - sol.head(3)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((c * x).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("constraint satisfied across many random instances") {
    for (std::uint64_t s = 0; s < 25; ++s) {
      const Matrix aa = colora::test::random_matrix(12, 5, 100 + s);
      const Matrix cc = colora::test::random_matrix(2, 5, 200 + s);
      const Vector bb = colora::test::random_vector(12, 300 + s);
      const Vector x = la::lstsq_constrained(aa, bb, cc).x;
      CHECK((cc * x).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  CHECK_THROWS_AS(la::lstsq_constrained(a, b, Matrix::Zero(1, 2)), colora::InvalidInput);
}

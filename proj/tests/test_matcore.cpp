#include <gtest/gtest.h>

#include <cmath>

#include "exprnn/matcore.hpp"
#include "exprnn/random.hpp"
#include "oracles.hpp"

using namespace exprnn;

TEST(Matmul, IdentityIsNeutral) {
  Rng rng(1);
  const Matrix x = random_matrix(3, 3, rng);
  EXPECT_EQ(matmul(Matrix::identity(3), x), x);
}

TEST(Matmul, RotationGeneratorSquaresToMinusIdentity) {
  const Matrix j{{0, 1}, {-1, 0}};
  EXPECT_EQ(matmul(j, j), Matrix({{-1, 0}, {0, -1}}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  Rng rng(11);
  const Matrix a = random_matrix(5, 5, rng);
  const Matrix b = random_matrix(5, 5, rng);
  EXPECT_EQ(matmul(a, b), oracle::triple_loop_product(a, b));
  const Matrix r = random_matrix(5, 3, rng);
  EXPECT_EQ(matmul(a, r), oracle::triple_loop_product(a, r));
  EXPECT_EQ(matmul_tn(a, r), oracle::triple_loop_product(a.transpose(), r));
}

TEST(Matmul, DimensionMismatchNamesShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3 by 2x3"), std::string::npos) << e.what();
  }
}

TEST(Matmul, AssociativeOnSeededTriples) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng),
                 c = random_matrix(n, n, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    EXPECT_LE(oracle::rel_error(left, right), 1e-12);
  }
}

TEST(Lu, Determinants) {
  EXPECT_EQ(determinant(Matrix::identity(4)), 1.0);
  EXPECT_DOUBLE_EQ(determinant(Matrix{{2, 0}, {0, 3}}), 6.0);
  Rng rng(21);
  const Matrix a = random_matrix(6, 6, rng);
  const double want = oracle::cofactor_det(a);
  EXPECT_NEAR(determinant(a), want, 1e-12 * std::abs(want));
}

TEST(Lu, PermutationSign) {
  const Matrix swap{{0, 1}, {1, 0}};
  EXPECT_DOUBLE_EQ(determinant(swap), -1.0);
}

TEST(Lu, SolveResidualIsSmall) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + trial;
    Matrix a = random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);  // well conditioned
    const Matrix b = random_matrix(n, 2, rng);
    const Matrix x = solve(a, b);
    EXPECT_LE(max_abs(matmul(a, x) - b), 1e-10 * max_abs(b));
  }
}

TEST(Lu, SingularMatrixIsReported) {
  EXPECT_THROW(lu_factor(Matrix{{1, 2}, {2, 4}}), SingularMatrixError);
  EXPECT_THROW(lu_factor(Matrix(3, 3)), SingularMatrixError);
}

TEST(Norms, Examples) {
  EXPECT_EQ(one_norm(Matrix::identity(3)), 1.0);
  EXPECT_DOUBLE_EQ(fro_norm(Matrix::identity(3)), std::sqrt(3.0));
  EXPECT_EQ(one_norm(Matrix{{1, -2}, {3, 4}}), 6.0);
  EXPECT_EQ(inf_norm(Matrix{{1, -2}, {3, 4}}), 7.0);
}

TEST(JacobiSvd, Identity) {
  const Svd s = jacobi_svd(Matrix::identity(3));
  EXPECT_EQ(s.u, Matrix::identity(3));
  EXPECT_EQ(s.v, Matrix::identity(3));
  EXPECT_EQ(s.sigma, (std::vector<double>{1, 1, 1}));
}

TEST(JacobiSvd, DiagonalSortsDescending) {
  const Svd s = jacobi_svd(Matrix{{1, 0}, {0, 3}});
  EXPECT_DOUBLE_EQ(s.sigma[0], 3.0);
  EXPECT_DOUBLE_EQ(s.sigma[1], 1.0);
  const Svd t = jacobi_svd(Matrix{{3, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(t.sigma[0], 3.0);
  EXPECT_DOUBLE_EQ(t.sigma[1], 1.0);
}

namespace {

void expect_valid_svd(const Matrix& a, const Svd& s) {
  const std::size_t n = a.rows();
  const Matrix recon = matmul(matmul(s.u, Matrix::diagonal(s.sigma)), s.v.transpose());
  EXPECT_LE(fro_norm(recon - a), 1e-12 * std::max(1.0, fro_norm(a)));
  EXPECT_LE(ortho_residual(s.u), 1e-12 * n);
  EXPECT_LE(ortho_residual(s.v), 1e-12 * n);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_GE(s.sigma[i], 0.0);
    if (i > 0) {
      EXPECT_LE(s.sigma[i], s.sigma[i - 1]);
    }
  }
}

}  // namespace

TEST(JacobiSvd, SeededReconstruction) {
  Rng rng(31);
  for (std::size_t n : {2u, 5u, 9u, 40u}) {
    const Matrix a = random_matrix(n, n, rng);
    expect_valid_svd(a, jacobi_svd(a));
  }
}

TEST(JacobiSvd, MatchesCubicOracleAtN3) {
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(3, 3, rng);
    const auto ev = oracle::symmetric3_eigenvalues(matmul_tn(a, a));
    const Svd s = jacobi_svd(a);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(s.sigma[i], std::sqrt(std::max(ev[i], 0.0)), 1e-10) << "trial " << trial;
    }
  }
}

TEST(JacobiSvd, RankDeficientStillHasOrthogonalFactors) {
  const Matrix a{{1, 2, 3}, {2, 4, 6}, {1, 0, 1}};
  const Svd s = jacobi_svd(a);
  expect_valid_svd(a, s);
  EXPECT_LE(s.sigma[2], 1e-14);
  expect_valid_svd(Matrix(4, 4), jacobi_svd(Matrix(4, 4)));
}

TEST(JacobiSvd, RejectsOversizedInput) {
  EXPECT_THROW(jacobi_svd(Matrix(513, 513)), DimensionError);
}

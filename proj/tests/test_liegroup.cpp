#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "exprnn/liegroup.hpp"
#include "exprnn/random.hpp"
#include "oracles.hpp"

using namespace exprnn;

namespace {

Matrix random_rotation(std::size_t n, Rng& rng, double scale = 1.0) {
  return expm(random_skew(n, rng, scale));
}

/// f(B) = tr(MᵀB) has Euclidean gradient M.
struct LinearObjective {
  Matrix m;
  double operator()(const Matrix& b) const { return metric_inner(m, b); }
};

}  // namespace

TEST(SkewVec, ZeroVector) {
  EXPECT_EQ(skew_from_vec(std::vector<double>(6, 0.0), 4), Matrix(4, 4));
}

TEST(SkewVec, SingleGenerator) {
  const std::vector<double> v{0.8};
  EXPECT_EQ(skew_from_vec(v, 2), Matrix({{0, 0.8}, {-0.8, 0}}));
}

TEST(SkewVec, RoundTripIsBitExact) {
  Rng rng(81);
  std::vector<double> v(skew_dim(7));
  for (double& x : v) x = uniform(rng, -3, 3);
  const Matrix a = skew_from_vec(v, 7);
  EXPECT_EQ(vec_from_skew(a), v);
  EXPECT_EQ(a.transpose(), -a);
}

TEST(SkewVec, ErrorsAndDegenerateN) {
  EXPECT_THROW(skew_from_vec(std::vector<double>(2), 3), DimensionError);
  EXPECT_THROW(vec_from_skew(Matrix::identity(3)), DomainError);
  const SkewParam p = SkewParam::zeros(1);
  EXPECT_TRUE(p.v.empty());
  EXPECT_EQ(expm(p.matrix()), Matrix::identity(1));
}

TEST(TangentProject, AtIdentityIsSkewPart) {
  Rng rng(82);
  const Matrix x = random_matrix(4, 4, rng);
  EXPECT_LE(max_abs(tangent_project(Matrix::identity(4), x) - skew_part(x)), 1e-16);
}

TEST(TangentProject, SymmetricDirectionsAreNormal) {
  Rng rng(83);
  const Matrix b = random_rotation(5, rng);
  const Matrix s = random_symmetric(5, rng);
  EXPECT_LE(max_abs(tangent_project(b, matmul(b, s))), 1e-14);
}

TEST(TangentProject, IdempotentAndTangent) {
  Rng rng(84);
  const Matrix b = random_rotation(5, rng, 2.0);
  const Matrix x = random_matrix(5, 5, rng);
  const Matrix p = tangent_project(b, x);
  EXPECT_LE(fro_norm(tangent_project(b, p) - p), 1e-12);
  const Matrix btp = matmul_tn(b, p);
  EXPECT_LE(fro_norm(btp + btp.transpose()), 1e-12);
}

TEST(TangentProject, RejectsNonOrthogonalBase) {
  EXPECT_THROW(tangent_project(Matrix::identity(3) * 2.0, Matrix::identity(3)), DomainError);
}

TEST(RiemannianGrad, TraceAtIdentityVanishes) {
  EXPECT_EQ(max_abs(riemannian_grad(Matrix::identity(4), Matrix::identity(4))), 0.0);
}

TEST(RiemannianGrad, MatchesDirectionalDerivativesAlongGeodesics) {
  Rng rng(85);
  const std::size_t n = 4;
  const LinearObjective f{random_matrix(n, n, rng)};
  const Matrix b = random_rotation(n, rng);
  const Matrix g = riemannian_grad(b, f.m);
  const double h = 1e-5;
  for (const Matrix& e : so_basis(n)) {
    // geodesic t ↦ B·exp(tE) leaves B with velocity B·E
    const double fd = (f(matmul(b, expm(e * h))) - f(matmul(b, expm(e * -h)))) / (2 * h);
    EXPECT_NEAR(fd, metric_inner(g, matmul(b, e)), 1e-6);
  }
}

TEST(RiemannianGrad, OrthogonalToNormalDirections) {
  Rng rng(86);
  const Matrix b = random_rotation(5, rng);
  const Matrix g = riemannian_grad(b, random_matrix(5, 5, rng));
  const Matrix s = random_symmetric(5, rng);
  EXPECT_LE(std::abs(metric_inner(g, matmul(b, s))), 1e-12);
}

TEST(RgdStep, ZeroStepIsIdentity) {
  Rng rng(87);
  const Matrix b = random_rotation(4, rng);
  EXPECT_EQ(rgd_step(b, random_matrix(4, 4, rng), 0.0), b);
}

TEST(RgdStep, FromIdentity) {
  Rng rng(88);
  const Matrix m = random_matrix(4, 4, rng);
  const double eta = 0.3;
  const Matrix want = expm(skew_part(m) * -eta);
  EXPECT_LE(max_abs(rgd_step(Matrix::identity(4), m, eta) - want), 1e-15);
}

TEST(RgdStep, ProcrustesDescentKeepsOrthogonality) {
  Rng rng(89);
  const std::size_t n = 6;
  const Matrix q = random_rotation(n, rng);
  auto objective = [&](const Matrix& b) { return std::pow(fro_norm(b - q), 2); };
  Matrix b = Matrix::identity(n);
  double prev = objective(b);
  for (int step = 0; step < 50; ++step) {
    b = rgd_step(b, (b - q) * 2.0, 0.1 / n);
    const double cur = objective(b);
    EXPECT_LT(cur, prev) << step;
    prev = cur;
  }
  EXPECT_LE(ortho_residual(b), 1e-11 * n);
}

TEST(RgdStep, Errors) {
  EXPECT_THROW(rgd_step(Matrix::identity(3) * 1.1, Matrix(3, 3), 0.1), DomainError);
  EXPECT_THROW(rgd_step(Matrix::identity(3), Matrix(3, 3), -0.1), DomainError);
}

class RetractionKinds : public ::testing::TestWithParam<Retraction> {};

TEST_P(RetractionKinds, ZeroStepReturnsBase) {
  Rng rng(90);
  const Matrix b = random_rotation(4, rng);
  EXPECT_EQ(retraction_step(b, random_matrix(4, 4, rng), 0.0, GetParam()), b);
}

TEST_P(RetractionKinds, DifferentialAtZeroIsIdentity) {
  Rng rng(91);
  const std::size_t n = 5;
  const Matrix b = random_rotation(n, rng);
  Matrix g = random_matrix(n, n, rng);
  g *= 1.0 / fro_norm(riemannian_grad(b, g));
  const double h = 1e-6;
  Matrix fd = retraction_step(b, g, h, GetParam()) - b;
  fd *= 1.0 / h;
  EXPECT_LE(fro_norm(fd + riemannian_grad(b, g)), 1e-6) << GetParam().name();
}

TEST_P(RetractionKinds, StaysSpecialOrthogonal) {
  Rng rng(92);
  const std::size_t n = 6;
  Matrix b = Matrix::identity(n);
  const Matrix m = random_matrix(n, n, rng);
  for (int step = 0; step < 200; ++step) b = retraction_step(b, m, 0.05, GetParam());
  EXPECT_LE(ortho_residual(b), 1e-11 * n);
  EXPECT_NEAR(determinant(b), 1.0, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(All, RetractionKinds,
                         ::testing::Values(Retraction::cayley(),
                                           Retraction::pade(PadeDegree::k5),
                                           Retraction::pade(PadeDegree::k13),
                                           Retraction::projection()));

TEST(Retraction, CayleyEqualsUnscaledDegreeOnePade) {
  Rng rng(93);
  const Matrix b = random_rotation(4, rng);
  Matrix g = random_matrix(4, 4, rng);
  const double eta = 1e-9;  // ‖η∇̃‖₁ stays below θ₁, so no squaring happens
  EXPECT_LE(max_abs(retraction_step(b, g, eta, Retraction::cayley()) -
                    retraction_step(b, g, eta, Retraction::pade(PadeDegree::k1))),
            1e-15);
}

TEST(GradPullback, TraceAtOriginVanishes) {
  EXPECT_EQ(max_abs(grad_pullback(Matrix(4, 4), Matrix::identity(4))), 0.0);
}

namespace {

/// Directional derivative of f∘exp∘α along each coordinate of v.
std::vector<double> coordinate_fd(const std::function<double(const Matrix&)>& f, const Matrix& a,
                                  double h) {
  const std::size_t n = a.rows();
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Matrix e(n, n);
      e(i, j) = 1.0;
      e(j, i) = -1.0;
      out.push_back(
          oracle::central_difference([&](const Matrix& x) { return f(expm(x)); }, a, e, h));
    }
  return out;
}

}  // namespace

TEST(GradPullback, AtOriginSignPinnedByFiniteDifferences) {
  Rng rng(94);
  const std::size_t n = 4;
  const LinearObjective f{random_matrix(n, n, rng)};
  const Matrix s = grad_pullback(Matrix(n, n), f.m);
  // At the origin the pullback is the skew part ½(G − Gᵀ) of G.
  EXPECT_LE(max_abs(s - skew_part(f.m)), 1e-15);
  const auto fd = coordinate_fd(f, Matrix(n, n), 1e-5);
  const auto cg = coordinate_gradient(s);
  for (std::size_t k = 0; k < fd.size(); ++k) EXPECT_NEAR(cg[k], fd[k], 1e-8);
}

TEST(GradPullback, MatchesCoordinateFiniteDifferences) {
  Rng rng(95);
  const std::size_t n = 6;
  const LinearObjective f{random_matrix(n, n, rng)};
  const Matrix a = random_skew(n, rng, 1.0);
  const Matrix s = grad_pullback(a, f.m);
  EXPECT_EQ(s.transpose(), -s);
  const auto fd = coordinate_fd(f, a, 1e-5);
  const auto cg = coordinate_gradient(s);
  for (std::size_t k = 0; k < fd.size(); ++k) {
    EXPECT_NEAR(cg[k], fd[k], 1e-6 * std::max(1.0, std::abs(fd[k]))) << k;
  }
}

TEST(GradPullback, MatchesGeneralAdjointFormula) {
  Rng rng(96);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + trial % 5;
    const Matrix a = random_skew(n, rng, 1.5);
    const Matrix g = random_matrix(n, n, rng);
    const Matrix via_adjoint = skew_part(dexp_adjoint_series(a, g));
    EXPECT_LE(oracle::rel_error(grad_pullback(a, g), via_adjoint), 1e-10);
  }
}

TEST(GradPullback, RejectsNonSkew) {
  EXPECT_THROW(grad_pullback(Matrix::identity(3), Matrix::identity(3)), DomainError);
}

TEST(OrthoLayer, CacheLifecycle) {
  Rng rng(97);
  OrthoLayer layer(SkewParam::from_matrix(random_skew(5, rng)));
  EXPECT_TRUE(layer.stale());
  EXPECT_THROW((void)layer.kernel(), StaleCacheError);
  layer.refresh();
  layer.refresh();
  EXPECT_EQ(layer.expm_eval_count(), 1u);
  EXPECT_LE(ortho_residual(layer.kernel()), 1e-12 * 5);
  EXPECT_EQ(layer.kernel(), expm(layer.skew()));
  layer.mutable_values()[0] += 0.1;
  EXPECT_THROW(layer.pullback(Matrix(5, 5)), StaleCacheError);
  layer.refresh();
  EXPECT_EQ(layer.expm_eval_count(), 2u);
}

TEST(ExpparamStep, ZeroStepLeavesParameters) {
  Rng rng(98);
  OrthoLayer layer(SkewParam::from_matrix(random_skew(4, rng)));
  const auto before = layer.param().v;
  expparam_step(layer, random_matrix(4, 4, rng), 0.0);
  EXPECT_EQ(layer.param().v, before);
}

TEST(ExpparamStep, AbelianCaseEqualsRiemannianStep) {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    OrthoLayer layer(SkewParam{2, {uniform(rng, -2, 2)}});
    const Matrix m = random_matrix(2, 2, rng);
    const double eta = 0.2;
    const Matrix b = layer.refresh();
    const Matrix rgd = rgd_step(b, m, eta);
    expparam_step(layer, m, eta);
    EXPECT_LE(max_abs(layer.refresh() - rgd), 1e-10);
  }
}

TEST(ExpparamStep, ExponentialIsNotALocalIsometryInSO3) {
  Rng rng(100);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_skew(3, rng, 2.0);
    const Matrix x = random_skew(3, rng), y = random_skew(3, rng);
    const double lhs = metric_inner(expm_frechet(a, x).second, expm_frechet(a, y).second);
    worst = std::max(worst, std::abs(lhs - metric_inner(x, y)));
  }
  EXPECT_GT(worst, 1e-3);
}

TEST(ExpparamStep, OptimizerDrivenStepUsesPulledBackGradient) {
  Rng rng(101);
  OrthoLayer layer(SkewParam::from_matrix(random_skew(4, rng)));
  const Matrix m = random_matrix(4, 4, rng);
  layer.refresh();
  const auto expected_grad = vec_from_skew(grad_pullback(layer.skew(), m));
  auto v = layer.param().v;
  Optimizer sgd(OptimizerConfig{OptimizerKind::sgd});
  expparam_step(layer, m, sgd, 0.5);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(layer.param().v[i], v[i] - 0.5 * expected_grad[i]);
  EXPECT_TRUE(layer.stale());
  EXPECT_EQ(layer.pullback_eval_count(), 1u);
}

TEST(SphereRetraction, Examples) {
  const std::vector<double> x{1, 0, 0}, zero{0, 0, 0}, v{0, 1, 0};
  EXPECT_EQ(sphere_retraction(x, zero), x);
  const auto y = sphere_retraction(x, v);
  EXPECT_NEAR(y[0], 1 / std::sqrt(2.0), 1e-16);
  EXPECT_NEAR(y[1], 1 / std::sqrt(2.0), 1e-16);
  EXPECT_THROW(sphere_retraction(std::vector<double>{2, 0, 0}, zero), DomainError);
  EXPECT_THROW(sphere_retraction(x, std::vector<double>{1, 0, 0}), DomainError);
}

TEST(SphereRetraction, DifferentialAtZeroIsIdentity) {
  Rng rng(102);
  std::vector<double> x(4), v(4);
  double nx = 0;
  for (double& c : x) {
    c = uniform(rng, -1, 1);
    nx += c * c;
  }
  for (double& c : x) c /= std::sqrt(nx);
  double dot = 0, nv = 0;
  for (double& c : v) c = uniform(rng, -1, 1);
  for (int i = 0; i < 4; ++i) dot += x[i] * v[i];
  for (int i = 0; i < 4; ++i) {
    v[i] -= dot * x[i];
    nv += v[i] * v[i];
  }
  for (double& c : v) c /= std::sqrt(nv);
  const double h = 1e-6;
  std::vector<double> hv(4);
  for (int i = 0; i < 4; ++i) hv[i] = h * v[i];
  const auto y = sphere_retraction(x, hv);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR((y[i] - x[i]) / h, v[i], 1e-6);
}

TEST(MetricInner, Properties) {
  EXPECT_EQ(metric_inner(Matrix::identity(3), Matrix::identity(3)), 3.0);
  Rng rng(103);
  const Matrix x = random_matrix(4, 4, rng), y = random_matrix(4, 4, rng);
  EXPECT_EQ(metric_inner(x, y), metric_inner(y, x));
  const Matrix q = random_rotation(4, rng);
  const double rotated = metric_inner(matmul(matmul(q, x), q.transpose()),
                                      matmul(matmul(q, y), q.transpose()));
  EXPECT_NEAR(rotated, metric_inner(x, y), 1e-12);
  EXPECT_THROW(metric_inner(Matrix(2, 2), Matrix(3, 3)), DimensionError);
}

#pragma once

// Numerical property measurements shared by `exprnn verify` and the
// acceptance binary. Each function returns the measured quantities; callers
// decide pass or fail.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "exprnn/exprnn.hpp"
#include "exprnn/liegroup.hpp"
#include "exprnn/random.hpp"

namespace exprnn::verify {

struct Check {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
};

inline Check at_most(std::string name, double measured, double threshold) {
  return {std::move(name), measured <= threshold, measured, threshold};
}

inline Check at_least(std::string name, double measured, double threshold) {
  return {std::move(name), measured >= threshold, measured, threshold};
}

inline double rel_error(std::span<const double> got, std::span<const double> want) {
  double d = 0.0, s = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    d += (got[i] - want[i]) * (got[i] - want[i]);
    s += want[i] * want[i];
  }
  return s == 0.0 ? std::sqrt(d) : std::sqrt(d / s);
}

inline double rel_error(const Matrix& got, const Matrix& want) {
  return rel_error(got.values(), want.values());
}

inline Matrix scaled_to_fro(Matrix a, double target) {
  const double f = fro_norm(a);
  if (f > 0.0) a *= target / f;
  return a;
}

/// Rotation by angle θ about a random unit axis, as a skew 3×3 matrix.
inline Matrix axis_rotation_generator(double theta, Rng& rng) {
  double u[3];
  double norm = 0.0;
  for (double& c : u) {
    c = uniform(rng, -1.0, 1.0);
    norm += c * c;
  }
  norm = std::sqrt(norm);
  for (double& c : u) c *= theta / norm;
  return Matrix{{0, -u[2], u[1]}, {u[2], 0, -u[0]}, {-u[1], u[0], 0}};
}

struct OrthogonalityStats {
  double worst_residual_per_n = 0.0;  // max ‖BᵀB − I‖_F / n
  double worst_det_error = 0.0;       // max |det B − 1|
};

/// `count` skew matrices with n uniform in {2, …, max_n} and ‖A‖_F uniform
/// in (0, max_fro].
inline OrthogonalityStats orthogonality_sweep(int count, std::size_t max_n, double max_fro,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> dim(2, max_n);
  OrthogonalityStats s;
  for (int k = 0; k < count; ++k) {
    const std::size_t n = dim(rng);
    const Matrix a = scaled_to_fro(random_skew(n, rng), uniform(rng, 0.0, max_fro));
    const Matrix b = expm(a);
    s.worst_residual_per_n =
        std::max(s.worst_residual_per_n, ortho_residual(b) / static_cast<double>(n));
    s.worst_det_error = std::max(s.worst_det_error, std::abs(determinant(b) - 1.0));
  }
  return s;
}

/// Worst relative error between the coordinate gradient of f∘exp∘α from
/// grad_pullback and central differences, over random (A, f) with
/// f(B) = tr(MᵀB) + ½‖B − C‖²_F.
inline double pullback_fd_error(int instances, std::size_t max_n, double h, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> dim(2, max_n);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = dim(rng);
    const Matrix a = random_skew(n, rng, uniform(rng, 0.2, 1.5));
    const Matrix m = random_matrix(n, n, rng);
    const Matrix c = random_matrix(n, n, rng);
    auto f = [&](const Matrix& b) {
      const Matrix d = b - c;
      return metric_inner(m, b) + 0.5 * metric_inner(d, d);
    };
    const Matrix b = expm(a);
    const std::vector<double> got = coordinate_gradient(grad_pullback(a, m + (b - c), b));
    std::vector<double> fd;
    std::vector<double> v = vec_from_skew(a);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double fp = f(expm(skew_from_vec(v, n)));
      v[i] = keep - h;
      const double fm = f(expm(skew_from_vec(v, n)));
      v[i] = keep;
      fd.push_back((fp - fm) / (2 * h));
    }
    worst = std::max(worst, rel_error(got, fd));
  }
  return worst;
}

/// Relative error of every parameter group's BPTT gradient against central
/// differences of the cross-entropy loss; returns the worst group.
inline double bptt_fd_error(std::size_t p, std::size_t d, std::size_t len, std::size_t batch,
                            double h, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t classes = 5;
  RnnModel m = make_model(d, p, classes, KernelInit::cayley, rng);
  for (double& v : m.kernel.mutable_values()) v += uniform(rng, -0.5, 0.5);
  for (double& b : m.modrelu_bias) b = uniform(rng, -0.2, 0.2);
  std::vector<Matrix> xs;
  for (std::size_t t = 0; t < len; ++t) xs.push_back(random_matrix(batch, d, rng));
  std::vector<std::vector<int>> ys(len, std::vector<int>(batch));
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  for (auto& row : ys)
    for (int& y : row) y = cls(rng);

  auto loss = [&](RnnModel& model) {
    model.kernel.refresh();
    return cross_entropy(forward(model, xs, Head::per_step).logits, ys).loss;
  };
  m.kernel.refresh();
  const ForwardResult res = forward(m, xs, Head::per_step);
  const Gradients g = backward(m, res.tape, cross_entropy(res.logits, ys).dlogits);

  using Access = std::function<std::span<double>(RnnModel&)>;
  auto group_error = [&](const Access& access, std::span<const double> analytic) {
    std::vector<double> fd(analytic.size());
    for (std::size_t k = 0; k < fd.size(); ++k) {
      RnnModel plus = m, minus = m;
      access(plus)[k] += h;
      access(minus)[k] -= h;
      fd[k] = (loss(plus) - loss(minus)) / (2 * h);
    }
    return rel_error(analytic, fd);
  };
  return std::max({
      group_error([](RnnModel& x) { return x.kernel.mutable_values(); }, g.kernel),
      group_error([](RnnModel& x) { return x.input_map.values(); }, g.input_map.values()),
      group_error([](RnnModel& x) { return std::span<double>(x.modrelu_bias); }, g.modrelu_bias),
      group_error([](RnnModel& x) { return x.readout.values(); }, g.readout.values()),
      group_error([](RnnModel& x) { return std::span<double>(x.readout_bias); }, g.readout_bias),
  });
}

/// Worst relative gap between the block-triangular Fréchet derivative and
/// the ad-series dexp over `pairs` random (A skew, E general) with ‖A‖₁
/// uniform in (0, max_norm].
inline double frechet_vs_series(int pairs, double max_norm, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> dim(2, 8);
  double worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const std::size_t n = dim(rng);
    Matrix a = random_skew(n, rng);
    a *= uniform(rng, 0.0, max_norm) / one_norm(a);
    const Matrix e = random_matrix(n, n, rng);
    worst = std::max(worst, rel_error(expm_frechet(a, e).second, dexp_series(a, e)));
  }
  return worst;
}

struct CayleyOrder {
  double slope = 0.0;          // least-squares slope of log‖cay − exp‖ vs log scale
  double pade1_gap = 0.0;      // max |cayley − pade degree 1|
};

inline CayleyOrder cayley_order(std::uint64_t seed) {
  Rng rng(seed);
  const Matrix a = scaled_to_fro(random_skew(6, rng), 1.0);
  std::vector<double> xs, ys;
  for (int k = 1; k <= 6; ++k) {
    const Matrix s = a * std::ldexp(1.0, -k);
    xs.push_back(std::log(std::ldexp(1.0, -k)));
    ys.push_back(std::log(fro_norm(cayley(s) - expm(s))));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  CayleyOrder r;
  r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  for (double scale : {0.01, 0.5, 2.0}) {
    const Matrix s = a * scale;
    r.pade1_gap = std::max(r.pade1_gap, max_abs(cayley(s) - pade(s, PadeDegree::k1)));
  }
  return r;
}

struct RetractionAxioms {
  std::string name;
  bool zero_is_identity = false;  // r_x(0) == x bit for bit
  double differential_error = 0.0;  // ‖central difference of r_x(tξ) at 0 − ξ‖ / ‖ξ‖
};

/// SO(n) retractions r_B(ξ) with ξ = −∇̃f(B); the step API takes the
/// Euclidean gradient G and η, so r_B(tξ) = retraction_step(B, G, t).
inline RetractionAxioms so_retraction_axioms(Retraction r, std::size_t n, double h,
                                             std::uint64_t seed) {
  Rng rng(seed);
  const Matrix b = expm(random_skew(n, rng, 1.0));
  Matrix g = random_matrix(n, n, rng);
  g *= 1.0 / fro_norm(riemannian_grad(b, g));
  const Matrix xi = -riemannian_grad(b, g);
  RetractionAxioms out{r.name()};
  out.zero_is_identity = retraction_step(b, g, 0.0, r) == b &&
                         retraction_step(b, Matrix(n, n), 1.0, r) == b;
  Matrix fd = retraction_step(b, g, h, r) - retraction_step(b, -g, h, r);
  fd *= 1.0 / (2 * h);
  out.differential_error = fro_norm(fd - xi) / fro_norm(xi);
  return out;
}

inline RetractionAxioms sphere_axioms(std::size_t dim, double h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(dim), v(dim);
  double nx = 0.0;
  for (double& c : x) {
    c = uniform(rng, -1, 1);
    nx += c * c;
  }
  for (double& c : x) c /= std::sqrt(nx);
  double dot = 0.0, nv = 0.0;
  for (double& c : v) c = uniform(rng, -1, 1);
  for (std::size_t i = 0; i < dim; ++i) dot += v[i] * x[i];
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] -= dot * x[i];
    nv += v[i] * v[i];
  }
  for (double& c : v) c /= std::sqrt(nv);
  RetractionAxioms out{"sphere"};
  out.zero_is_identity = sphere_retraction(x, std::vector<double>(dim, 0.0)) == x;
  std::vector<double> hp(dim), hm(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    hp[i] = h * v[i];
    hm[i] = -h * v[i];
  }
  const auto rp = sphere_retraction(x, hp);
  const auto rm = sphere_retraction(x, hm);
  double err = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = (rp[i] - rm[i]) / (2 * h) - v[i];
    err += d * d;
  }
  out.differential_error = std::sqrt(err);
  return out;
}

/// |⟨dexp_A X, dexp_A Y⟩ − ⟨X, Y⟩| for the left-trivialised dexp on so(n).
inline double isometry_defect(const Matrix& a, const Matrix& x, const Matrix& y) {
  const Matrix einv = expm(-a);
  const Matrix dx = matmul(einv, expm_frechet(a, x).second);
  const Matrix dy = matmul(einv, expm_frechet(a, y).second);
  return std::abs(metric_inner(dx, dy) - metric_inner(x, y));
}

struct AbelianDichotomy {
  double so2_step_gap = 0.0;       // max ‖expparam step − RGD step‖ on SO(2)
  double so2_isometry_defect = 0.0;
  double so3_max_isometry_defect = 0.0;  // over the sampled triples
};

inline AbelianDichotomy abelian_dichotomy(int triples, std::uint64_t seed) {
  Rng rng(seed);
  AbelianDichotomy r;
  for (int k = 0; k < triples; ++k) {
    const Matrix a = random_skew(2, rng, 3.0);
    const Matrix g = random_matrix(2, 2, rng);
    const double eta = uniform(rng, 0.01, 0.5);
    OrthoLayer layer(SkewParam::from_matrix(a));
    const Matrix b = layer.refresh();
    expparam_step(layer, g, eta);
    r.so2_step_gap =
        std::max(r.so2_step_gap, max_abs(layer.refresh() - rgd_step(b, g, eta)));
    r.so2_isometry_defect = std::max(
        r.so2_isometry_defect,
        isometry_defect(a, random_skew(2, rng), random_skew(2, rng)));
  }
  for (int k = 0; k < triples; ++k) {
    const Matrix a = random_skew(3, rng, 2.0);
    const Matrix x = scaled_to_fro(random_skew(3, rng), 1.0);
    const Matrix y = scaled_to_fro(random_skew(3, rng), 1.0);
    r.so3_max_isometry_defect = std::max(r.so3_max_isometry_defect, isometry_defect(a, x, y));
  }
  return r;
}

/// Smallest singular value of E ↦ e^{−A} L(A, E) on the given orthonormal
/// basis of directions.
inline double dexp_sigma_min(const Matrix& a, const std::vector<Matrix>& basis) {
  const Matrix einv = expm(-a);
  Matrix op(basis.size(), basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const Matrix img = matmul(einv, expm_frechet(a, basis[j]).second);
    for (std::size_t i = 0; i < basis.size(); ++i) op(i, j) = metric_inner(basis[i], img);
  }
  const Svd s = jacobi_svd(op);
  return s.sigma.back();
}

inline std::vector<Matrix> entry_basis(std::size_t n) {
  std::vector<Matrix> b;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Matrix e(n, n);
      e(i, j) = 1.0;
      b.push_back(std::move(e));
    }
  return b;
}

struct SingularLocus {
  double ambient_at_pi = 0.0;
  double ambient_at_half_pi = 0.0;
  double restricted_at_pi = 0.0;
  double restricted_at_half_pi = 0.0;
  double restricted_at_two_pi = 0.0;
};

inline SingularLocus singular_locus(std::uint64_t seed) {
  Rng rng(seed);
  const Matrix k = axis_rotation_generator(1.0, rng);
  const auto amb = entry_basis(3);
  const auto so3 = so_basis(3);
  const double pi = std::numbers::pi;
  return {dexp_sigma_min(k * pi, amb), dexp_sigma_min(k * (pi / 2), amb),
          dexp_sigma_min(k * pi, so3), dexp_sigma_min(k * (pi / 2), so3),
          dexp_sigma_min(k * (2 * pi), so3)};
}

struct DriftRun {
  std::string method;
  double worst_residual = 0.0;  // max over all iterates of ‖BᵀB − I‖_F
  double objective = 0.0;       // final ½‖B − Q‖²_F
};

/// Minimises ½‖B − Q‖²_F over SO(n) from B = I with three update rules.
inline std::vector<DriftRun> procrustes_drift(std::size_t n, int steps, double eta,
                                              std::uint64_t seed) {
  Rng rng(seed);
  const Matrix q = expm(random_skew(n, rng, 0.4));
  auto objective = [&](const Matrix& b) {
    const Matrix d = b - q;
    return 0.5 * metric_inner(d, d);
  };
  std::vector<DriftRun> runs;

  OrthoLayer layer(SkewParam::zeros(n));
  DriftRun ep{"expparam"};
  for (int k = 0; k < steps; ++k) {
    const Matrix& b = layer.refresh();
    expparam_step(layer, b - q, eta);
    ep.worst_residual = std::max(ep.worst_residual, ortho_residual(layer.refresh()));
  }
  ep.objective = objective(layer.refresh());
  runs.push_back(ep);

  for (const auto& [name, r] : {std::pair<std::string, std::optional<Retraction>>{"rgd", {}},
                                {"cayley", Retraction::cayley()}}) {
    DriftRun run{name};
    Matrix b = Matrix::identity(n);
    for (int k = 0; k < steps; ++k) {
      b = r ? retraction_step(b, b - q, eta, *r) : rgd_step(b, b - q, eta);
      run.worst_residual = std::max(run.worst_residual, ortho_residual(b));
    }
    run.objective = objective(b);
    runs.push_back(run);
  }
  return runs;
}

/// Property suite behind `exprnn verify <scope>`.
inline std::vector<Check> run_scope(const std::string& scope, std::uint64_t seed) {
  std::vector<Check> out;
  const bool all = scope == "all";
  if (all || scope == "expm") {
    const auto o = orthogonality_sweep(200, 64, 50.0, seed);
    out.push_back(at_most("expm.orthogonality_residual_per_n", o.worst_residual_per_n, 1e-12));
    out.push_back(at_most("expm.det_error", o.worst_det_error, 1e-9));
    out.push_back(at_most("expm.frechet_vs_series_norm1", frechet_vs_series(50, 1.0, seed), 1e-10));
    out.push_back(at_most("expm.frechet_vs_series_norm10", frechet_vs_series(50, 10.0, seed), 1e-8));
    const auto c = cayley_order(seed);
    out.push_back(at_most("expm.cayley_minus_pade1", c.pade1_gap, 1e-15));
    out.push_back(at_most("expm.cayley_slope_offset", std::abs(c.slope - 3.0), 0.2));
  }
  if (all || scope == "gradients") {
    out.push_back(at_most("gradients.pullback_fd_rel", pullback_fd_error(50, 8, 1e-5, seed), 1e-6));
    out.push_back(at_most("gradients.bptt_fd_rel", bptt_fd_error(6, 3, 8, 4, 1e-5, seed), 1e-5));
  }
  if (all || scope == "retractions") {
    for (Retraction r : {Retraction::cayley(), Retraction::pade(PadeDegree::k5),
                         Retraction::projection()}) {
      const auto ax = so_retraction_axioms(r, 5, 1e-5, seed);
      out.push_back(at_most("retractions." + ax.name + ".zero_mismatch",
                            ax.zero_is_identity ? 0.0 : 1.0, 0.0));
      out.push_back(at_most("retractions." + ax.name + ".differential", ax.differential_error, 1e-6));
    }
    const auto sp = sphere_axioms(6, 1e-5, seed);
    out.push_back(at_most("retractions.sphere.zero_mismatch", sp.zero_is_identity ? 0.0 : 1.0, 0.0));
    out.push_back(at_most("retractions.sphere.differential", sp.differential_error, 1e-6));
    const auto runs = procrustes_drift(8, 1000, 0.2, seed);
    double lo = runs.front().objective, hi = lo;
    for (const DriftRun& d : runs) {
      out.push_back(at_most("retractions.drift." + d.method + ".residual_per_n",
                            d.worst_residual / 8.0, 1e-11));
      lo = std::min(lo, d.objective);
      hi = std::max(hi, d.objective);
    }
    out.push_back(at_most("retractions.drift.objective_spread", hi - lo, 1e-6));
  }
  if (all || scope == "geometry") {
    const auto ab = abelian_dichotomy(100, seed);
    out.push_back(at_most("geometry.so2_expparam_vs_rgd", ab.so2_step_gap, 1e-10));
    out.push_back(at_most("geometry.so2_isometry_defect", ab.so2_isometry_defect, 1e-10));
    out.push_back(at_least("geometry.so3_max_isometry_defect", ab.so3_max_isometry_defect, 1e-3));
    const auto sl = singular_locus(seed);
    out.push_back(at_most("geometry.dexp_sigma_min_at_pi", sl.ambient_at_pi, 1e-8));
    out.push_back(at_least("geometry.dexp_sigma_min_at_half_pi", sl.ambient_at_half_pi, 0.1));
  }
  if (out.empty()) throw DomainError("unknown verify scope '" + scope + "'");
  return out;
}

}  // namespace exprnn::verify

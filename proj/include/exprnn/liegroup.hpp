#pragma once

// Geometry of SO(n): the skew parametrization, tangent projection,
// Riemannian gradient descent and retractions, and the pullback of a
// Euclidean gradient through the exponential map.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exprnn/errors.hpp"
#include "exprnn/expm.hpp"
#include "exprnn/matcore.hpp"
#include "exprnn/optim.hpp"

namespace exprnn {

inline std::size_t skew_dim(std::size_t n) { return n * (n - 1) / 2; }

/// ⟨x, y⟩ = tr(xᵀy)
inline double metric_inner(const Matrix& x, const Matrix& y) {
  x.require_same_shape(y, "metric_inner");
  double s = 0.0;
  const auto xv = x.values();
  const auto yv = y.values();
  for (std::size_t k = 0; k < xv.size(); ++k) s += xv[k] * yv[k];
  return s;
}

/// Strictly upper-triangular entries, row-major, mirrored with opposite sign.
inline Matrix skew_from_vec(std::span<const double> v, std::size_t n) {
  if (v.size() != skew_dim(n)) {
    throw DimensionError("skew_from_vec: " + std::to_string(v.size()) +
                         " parameters for n = " + std::to_string(n) + " (expected " +
                         std::to_string(skew_dim(n)) + ")");
  }
  Matrix a(n, n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      a(i, j) = v[k];
      a(j, i) = -v[k];
    }
  return a;
}

inline std::vector<double> vec_from_skew(const Matrix& a) {
  require_skew(a, "vec_from_skew");
  const std::size_t n = a.rows();
  std::vector<double> v;
  v.reserve(skew_dim(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) v.push_back(a(i, j));
  return v;
}

struct SkewParam {
  std::size_t n = 0;
  std::vector<double> v;

  static SkewParam zeros(std::size_t n) { return {n, std::vector<double>(skew_dim(n), 0.0)}; }
  static SkewParam from_matrix(const Matrix& a) { return {a.rows(), vec_from_skew(a)}; }

  [[nodiscard]] Matrix matrix() const { return skew_from_vec(v, n); }
};

/// Orthonormal basis of so(n) under tr(XᵀY): (E_ij − E_ji)/√2, i < j.
inline std::vector<Matrix> so_basis(std::size_t n) {
  std::vector<Matrix> basis;
  const double w = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Matrix e(n, n);
      e(i, j) = w;
      e(j, i) = -w;
      basis.push_back(std::move(e));
    }
  return basis;
}

inline void require_orthogonal(const Matrix& b, const char* what, double tol = 1e-8) {
  require_square(b, what);
  const double r = ortho_residual(b);
  if (!(r <= tol * static_cast<double>(b.rows()))) {
    throw DomainError(std::string(what) + ": base point is not orthogonal (||B^T B - I||_F = " +
                      std::to_string(r) + ")");
  }
}

/// Orthogonal projection of x onto T_B SO(n): ½(x − B xᵀ B).
inline Matrix tangent_project(const Matrix& b, const Matrix& x) {
  require_orthogonal(b, "tangent_project");
  b.require_same_shape(x, "tangent_project");
  Matrix out = x;
  out.axpy(-1.0, matmul(b, matmul_tn(x, b)));
  out *= 0.5;
  return out;
}

/// Riemannian gradient on SO(n) of f given its Euclidean gradient at b.
inline Matrix riemannian_grad(const Matrix& b, const Matrix& euclid_grad) {
  return tangent_project(b, euclid_grad);
}

namespace detail {

/// Bᵀ·∇̃f(B) = skew(BᵀG), the gradient transported to the Lie algebra.
inline Matrix algebra_gradient(const Matrix& b, const Matrix& euclid_grad) {
  return skew_part(matmul_tn(b, euclid_grad));
}

inline void require_step(const Matrix& b, const Matrix& g, double eta, const char* what) {
  require_orthogonal(b, what);
  b.require_same_shape(g, what);
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw DomainError(std::string(what) + ": step size must be finite and nonnegative");
  }
}

}  // namespace detail

/// B ← B·exp(−η Bᵀ∇̃f(B)).
inline Matrix rgd_step(const Matrix& b, const Matrix& euclid_grad, double eta) {
  detail::require_step(b, euclid_grad, eta, "rgd_step");
  if (eta == 0.0) return b;
  Matrix x = detail::algebra_gradient(b, euclid_grad);
  x *= -eta;
  return matmul(b, expm(x));
}

struct Retraction {
  enum class Kind { cayley, pade, projection };
  Kind kind = Kind::cayley;
  PadeDegree degree = PadeDegree::k1;  ///< used by Kind::pade

  static Retraction cayley() { return {Kind::cayley, PadeDegree::k1}; }
  static Retraction pade(PadeDegree m) { return {Kind::pade, m}; }
  static Retraction projection() { return {Kind::projection, PadeDegree::k1}; }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::cayley: return "cayley";
      case Kind::pade: return "pade_ss(" + std::to_string(static_cast<int>(degree)) + ")";
      case Kind::projection: return "projection";
    }
    return "?";
  }
};

/// B·φ(−η Bᵀ∇̃f(B)) for φ = Cayley or scaled-and-squared Padé; for the
/// projection retraction, the orthogonal polar factor U Vᵀ of B − η∇̃f(B).
inline Matrix retraction_step(const Matrix& b, const Matrix& euclid_grad, double eta,
                              Retraction r) {
  detail::require_step(b, euclid_grad, eta, "retraction_step");
  if (eta == 0.0) return b;
  switch (r.kind) {
    case Retraction::Kind::cayley: {
      Matrix x = detail::algebra_gradient(b, euclid_grad);
      x *= -eta;
      return matmul(b, cayley(x));
    }
    case Retraction::Kind::pade: {
      Matrix x = detail::algebra_gradient(b, euclid_grad);
      x *= -eta;
      return matmul(b, pade_scaled(x, r.degree));
    }
    case Retraction::Kind::projection: {
      const Matrix g = riemannian_grad(b, euclid_grad);
      // B is already its own polar factor; the SVD would only add rounding.
      if (max_abs(g) == 0.0) return b;
      Matrix y = b;
      y.axpy(-eta, g);
      const Svd svd = jacobi_svd(y);
      return matmul(svd.u, svd.v.transpose());
    }
  }
  return b;
}

/// Gradient of f∘exp at the skew matrix a with respect to tr(XᵀY) on so(n),
/// given the Euclidean gradient G of f at B = e^a:
///   B · dexp_{−a}(½(BᵀG − GᵀB)),
/// re-skewed before returning. The sign is the one that matches finite
/// differences of f∘exp.
inline Matrix grad_pullback(const Matrix& a, const Matrix& euclid_grad, const Matrix& b) {
  require_skew(a, "grad_pullback");
  a.require_same_shape(euclid_grad, "grad_pullback");
  a.require_same_shape(b, "grad_pullback");
  const Matrix y = detail::algebra_gradient(b, euclid_grad);
  const Matrix d = expm_frechet(-a, y).second;
  return skew_part(matmul(b, d));
}

inline Matrix grad_pullback(const Matrix& a, const Matrix& euclid_grad) {
  return grad_pullback(a, euclid_grad, expm(a));
}

/// Partial derivatives with respect to the stored vector v of α(v) = a.
/// Each coordinate moves two entries of a, so this is twice the strictly
/// upper part of the metric gradient.
inline std::vector<double> coordinate_gradient(const Matrix& skew_grad) {
  std::vector<double> g = vec_from_skew(skew_grad);
  for (double& x : g) x *= 2.0;
  return g;
}

/// Retraction of the unit sphere: (x + v)/‖x + v‖.
inline std::vector<double> sphere_retraction(std::span<const double> x, std::span<const double> v) {
  if (x.size() != v.size()) throw DimensionError("sphere_retraction: length mismatch");
  double nx = 0.0, dot = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    dot += x[i] * v[i];
    nv += v[i] * v[i];
  }
  if (std::abs(std::sqrt(nx) - 1.0) > 1e-10) throw DomainError("sphere_retraction: x is not unit");
  if (std::abs(dot) > 1e-10 * std::max(1.0, std::sqrt(nv))) {
    throw DomainError("sphere_retraction: v is not tangent at x");
  }
  std::vector<double> y(x.size());
  double ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] + v[i];
    ny += y[i] * y[i];
  }
  if (ny == 0.0) throw DomainError("sphere_retraction: x + v = 0");
  if (nv == 0.0) return {x.begin(), x.end()};
  ny = std::sqrt(ny);
  for (double& c : y) c /= ny;
  return y;
}

// ---------------------------------------------------------------------------
// OrthoLayer
// ---------------------------------------------------------------------------

/// A skew parameter together with its cached exponential. The cache goes
/// stale whenever the parameter changes and is rebuilt by refresh(); reading
/// a stale cache is an error, so each optimizer step costs exactly one
/// exponential and one gradient pullback.
class OrthoLayer {
 public:
  OrthoLayer() = default;
  explicit OrthoLayer(SkewParam param) : param_(std::move(param)) {
    if (param_.v.size() != skew_dim(param_.n)) {
      throw DimensionError("OrthoLayer: parameter length does not match n");
    }
  }

  [[nodiscard]] std::size_t n() const { return param_.n; }
  [[nodiscard]] const SkewParam& param() const { return param_; }
  [[nodiscard]] bool stale() const { return stale_; }

  /// Mutable access to v; marks the cache stale.
  std::span<double> mutable_values() {
    stale_ = true;
    return param_.v;
  }

  void set_values(std::span<const double> v) {
    if (v.size() != param_.v.size()) throw DimensionError("OrthoLayer::set_values: length mismatch");
    param_.v.assign(v.begin(), v.end());
    stale_ = true;
  }

  [[nodiscard]] Matrix skew() const { return param_.matrix(); }

  /// Recomputes exp(α(v)) if the parameter changed since the last call.
  const Matrix& refresh() {
    if (stale_) {
      kernel_ = expm(skew());
      stale_ = false;
      ++expm_evals_;
    }
    return kernel_;
  }

  [[nodiscard]] const Matrix& kernel() const {
    if (stale_) throw StaleCacheError("OrthoLayer: kernel read after its parameter changed");
    return kernel_;
  }

  /// Metric gradient on so(n) of the loss, given ∂loss/∂B at the cached B.
  Matrix pullback(const Matrix& grad_b) {
    const Matrix& b = kernel();
    ++pullback_evals_;
    return grad_pullback(skew(), grad_b, b);
  }

  [[nodiscard]] std::size_t expm_eval_count() const { return expm_evals_; }
  [[nodiscard]] std::size_t pullback_eval_count() const { return pullback_evals_; }

  [[nodiscard]] double param_norm() const { return fro_norm(skew()); }

  /// ‖A‖₂ ≤ ‖A‖_F < π keeps every eigenvalue angle inside (−π, π), where the
  /// exponential is a diffeomorphism. Crossing the bound is reported, not
  /// prevented.
  [[nodiscard]] bool may_leave_injectivity_region() const { return param_norm() >= M_PI; }

 private:
  SkewParam param_;
  Matrix kernel_;
  bool stale_ = true;
  std::size_t expm_evals_ = 0;
  std::size_t pullback_evals_ = 0;
};

/// One step of plain gradient descent on the skew parameter:
/// A ← A − η ∇(f∘exp)(A), with ∇ the metric gradient.
inline void expparam_step(OrthoLayer& layer, const Matrix& euclid_grad, double eta) {
  if (!(eta >= 0.0)) throw DomainError("expparam_step: step size must be nonnegative");
  layer.refresh();
  const Matrix g = layer.pullback(euclid_grad);
  if (eta == 0.0) return;
  const std::vector<double> gv = vec_from_skew(g);
  auto v = layer.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= eta * gv[i];
}

/// Same step driven by a Euclidean optimizer on the parameter vector.
inline void expparam_step(OrthoLayer& layer, const Matrix& euclid_grad, Optimizer& opt,
                          double lr, const std::string& group_id = "orthogonal") {
  layer.refresh();
  const std::vector<double> gv = vec_from_skew(layer.pullback(euclid_grad));
  opt.step(group_id, lr, layer.mutable_values(), gv);
}

}  // namespace exprnn

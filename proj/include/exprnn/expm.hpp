#pragma once

// Matrix exponential by scaling and squaring with diagonal Padé approximants,
// the Cayley map, and the Fréchet derivative of the exponential.
//
// The Fréchet derivative L(A, E) is the top-right block of
// exp([[A, E], [0, A]]). That block matrix stays block upper triangular with
// equal diagonal blocks under every operation the Padé evaluation performs,
// so BlockTriangular carries only (diagonal, corner) and each product costs
// three n×n multiplications instead of eight for the dense 2n×2n matrix.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "exprnn/errors.hpp"
#include "exprnn/matcore.hpp"

namespace exprnn {

/// Degree of a diagonal Padé approximant. Degree 1 is the Cayley map.
enum class PadeDegree : int { k1 = 1, k3 = 3, k5 = 5, k7 = 7, k9 = 9, k13 = 13 };

inline constexpr std::array<PadeDegree, 6> kPadeDegrees{
    PadeDegree::k1, PadeDegree::k3, PadeDegree::k5,
    PadeDegree::k7, PadeDegree::k9, PadeDegree::k13};

inline PadeDegree pade_degree(int m) {
  for (PadeDegree d : kPadeDegrees)
    if (static_cast<int>(d) == m) return d;
  throw DomainError("Pade degree must be one of 1, 3, 5, 7, 9, 13; got " + std::to_string(m));
}

/// Largest ‖A‖₁ for which the degree-m approximant is accurate to double
/// precision (backward error bound of unit roundoff). Values from Higham,
/// "The scaling and squaring method for the matrix exponential revisited",
/// SIAM J. Matrix Anal. Appl. 26(4), 2005, Table 2.3.
inline double pade_theta(PadeDegree m) {
  switch (m) {
    case PadeDegree::k1: return 3.650024139523051e-8;
    case PadeDegree::k3: return 1.495585217958292e-2;
    case PadeDegree::k5: return 2.539398330063230e-1;
    case PadeDegree::k7: return 9.504178996162932e-1;
    case PadeDegree::k9: return 2.097847961257068e0;
    case PadeDegree::k13: return 5.371920351148152e0;
  }
  return 0.0;
}

/// Coefficients c₀..c_m of the diagonal Padé numerator; the denominator uses
/// (−1)^k c_k.
inline std::array<double, 14> pade_coefficients(PadeDegree degree) {
  const int m = static_cast<int>(degree);
  std::array<double, 14> c{};
  c[0] = 1.0;
  for (int k = 1; k <= m; ++k) {
    c[k] = c[k - 1] * static_cast<double>(m + 1 - k) / static_cast<double>((2 * m + 1 - k) * k);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Block upper-triangular algebra for [[D, F], [0, D]]
// ---------------------------------------------------------------------------

struct BlockTriangular {
  Matrix diag;
  Matrix corner;

  BlockTriangular& operator+=(const BlockTriangular& o) {
    diag += o.diag;
    corner += o.corner;
    return *this;
  }
  BlockTriangular& operator-=(const BlockTriangular& o) {
    diag -= o.diag;
    corner -= o.corner;
    return *this;
  }
  BlockTriangular& operator*=(double s) {
    diag *= s;
    corner *= s;
    return *this;
  }
  void axpy(double s, const BlockTriangular& o) {
    diag.axpy(s, o.diag);
    corner.axpy(s, o.corner);
  }
  [[nodiscard]] std::size_t rows() const { return diag.rows(); }

  /// Assembles the dense 2n×2n matrix.
  [[nodiscard]] Matrix dense() const {
    const std::size_t n = diag.rows();
    Matrix m(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        m(i, j) = diag(i, j);
        m(i, n + j) = corner(i, j);
        m(n + i, n + j) = diag(i, j);
      }
    return m;
  }
};

namespace detail {

inline Matrix mul(const Matrix& a, const Matrix& b) { return matmul(a, b); }

inline BlockTriangular mul(const BlockTriangular& a, const BlockTriangular& b) {
  BlockTriangular r{matmul(a.diag, b.diag), matmul(a.diag, b.corner)};
  matmul_acc(r.corner, a.corner, b.diag);
  return r;
}

inline Matrix eye_like(const Matrix& a) { return Matrix::identity(a.rows()); }

inline BlockTriangular eye_like(const BlockTriangular& a) {
  return {Matrix::identity(a.rows()), Matrix(a.rows(), a.rows())};
}

inline Matrix zeros_like(const Matrix& a) { return Matrix(a.rows(), a.cols()); }

inline BlockTriangular zeros_like(const BlockTriangular& a) {
  return {Matrix(a.rows(), a.rows()), Matrix(a.rows(), a.rows())};
}

inline double norm1(const Matrix& a) { return one_norm(a); }

/// ‖[[D, F], [0, D]]‖₁: left columns sum |D|, right columns sum |F| + |D|.
inline double norm1(const BlockTriangular& a) {
  const std::size_t n = a.rows();
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double d = 0.0, f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d += std::abs(a.diag(i, j));
      f += std::abs(a.corner(i, j));
    }
    best = std::max(best, d + f);
  }
  return best;
}

inline bool finite(const Matrix& a) { return all_finite(a); }
inline bool finite(const BlockTriangular& a) { return all_finite(a.diag) && all_finite(a.corner); }

/// Solves q·x = p.
inline Matrix solve_left(const Matrix& q, const Matrix& p) { return solve(q, p); }

inline BlockTriangular solve_left(const BlockTriangular& q, const BlockTriangular& p) {
  const LuFactors lu = lu_factor(q.diag);
  BlockTriangular x{lu.solve(p.diag), Matrix()};
  Matrix rhs = p.corner;
  rhs -= matmul(q.corner, x.diag);
  x.corner = lu.solve(rhs);
  return x;
}

/// r = p_m(a)·q_m(a)⁻¹ via the even/odd split p = V + U, q = V − U.
template <class T>
T pade_eval(const T& a, PadeDegree degree) {
  const auto c = pade_coefficients(degree);
  const int m = static_cast<int>(degree);
  const T id = eye_like(a);
  T u = zeros_like(a);
  T v = zeros_like(a);

  if (m == 13) {
    const T a2 = mul(a, a);
    const T a4 = mul(a2, a2);
    const T a6 = mul(a4, a2);
    T inner_u = zeros_like(a);
    inner_u.axpy(c[13], a6);
    inner_u.axpy(c[11], a4);
    inner_u.axpy(c[9], a2);
    T tail_u = mul(a6, inner_u);
    tail_u.axpy(c[7], a6);
    tail_u.axpy(c[5], a4);
    tail_u.axpy(c[3], a2);
    tail_u.axpy(c[1], id);
    u = mul(a, tail_u);

    T inner_v = zeros_like(a);
    inner_v.axpy(c[12], a6);
    inner_v.axpy(c[10], a4);
    inner_v.axpy(c[8], a2);
    v = mul(a6, inner_v);
    v.axpy(c[6], a6);
    v.axpy(c[4], a4);
    v.axpy(c[2], a2);
    v.axpy(c[0], id);
  } else {
    // Even powers a^0, a^2, ..., a^(m-1).
    T odd = zeros_like(a);
    odd.axpy(c[1], id);
    v.axpy(c[0], id);
    if (m > 1) {
      const T a2 = mul(a, a);
      T power = a2;
      for (int k = 2; k <= m; k += 2) {
        v.axpy(c[k], power);
        if (k + 1 <= m) odd.axpy(c[k + 1], power);
        if (k + 2 <= m) power = mul(power, a2);
      }
    }
    u = mul(a, odd);
  }
  T num = v;
  num += u;
  T den = std::move(v);
  den -= u;
  try {
    return solve_left(den, num);
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError(std::string("pade: singular denominator (argument norm too large "
                                          "for the requested degree): ") +
                              e.what());
  }
}

/// Scaling exponent s ≥ 0 such that ‖a‖₁ / 2^s ≤ θ.
inline int scaling_exponent(double norm, double theta) {
  if (!(norm > theta)) return 0;
  return static_cast<int>(std::ceil(std::log2(norm / theta)));
}

template <class T>
T square_repeatedly(T r, int s) {
  for (int i = 0; i < s; ++i) r = mul(r, r);
  return r;
}

template <class T>
T pade_scaled(const T& a, PadeDegree degree) {
  const int s = scaling_exponent(norm1(a), pade_theta(degree));
  T scaled = a;
  scaled *= std::ldexp(1.0, -s);
  return square_repeatedly(pade_eval(scaled, degree), s);
}

template <class T>
T expm_generic(const T& a) {
  if (!finite(a)) throw DomainError("expm: argument has non-finite entries");
  const double norm = norm1(a);
  for (PadeDegree m : {PadeDegree::k3, PadeDegree::k5, PadeDegree::k7, PadeDegree::k9}) {
    if (norm <= pade_theta(m)) return pade_eval(a, m);
  }
  return pade_scaled(a, PadeDegree::k13);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// p_m(a)·q_m(a)⁻¹ without scaling. Accurate only for ‖a‖₁ ≤ θ_m.
inline Matrix pade(const Matrix& a, PadeDegree m) {
  require_square(a, "pade");
  return detail::pade_eval(a, m);
}

/// Degree-m Padé approximant combined with scaling and squaring.
inline Matrix pade_scaled(const Matrix& a, PadeDegree m) {
  require_square(a, "pade_scaled");
  if (!all_finite(a)) throw DomainError("pade_scaled: argument has non-finite entries");
  return detail::pade_scaled(a, m);
}

/// Matrix exponential: the cheapest Padé degree in {3, 5, 7, 9} whose θ
/// covers ‖a‖₁, otherwise degree 13 on a/2^s followed by s squarings.
inline Matrix expm(const Matrix& a) {
  require_square(a, "expm");
  return detail::expm_generic(a);
}

/// (I + a/2)(I − a/2)⁻¹. The two factors commute, so this is computed as a
/// solve against I − a/2.
inline Matrix cayley(const Matrix& a) {
  require_square(a, "cayley");
  const std::size_t n = a.rows();
  Matrix p = Matrix::identity(n);
  p.axpy(0.5, a);
  Matrix q = Matrix::identity(n);
  q.axpy(-0.5, a);
  try {
    return solve(q, p);
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError(std::string("cayley: I - a/2 is singular: ") + e.what());
  }
}

/// exp(a) together with the Fréchet derivative L(a, e) = d/dt exp(a + t e)|₀,
/// both read off exp([[a, e], [0, a]]).
inline std::pair<Matrix, Matrix> expm_frechet(const Matrix& a, const Matrix& e) {
  require_square(a, "expm_frechet");
  if (e.rows() != a.rows() || e.cols() != a.cols()) {
    throw DimensionError("expm_frechet: direction is " + e.shape() + ", point is " + a.shape());
  }
  BlockTriangular r = detail::expm_generic(BlockTriangular{a, e});
  return {std::move(r.diag), std::move(r.corner)};
}

/// Lie bracket [x, y] = xy − yx.
inline Matrix bracket(const Matrix& x, const Matrix& y) {
  Matrix r = matmul(x, y);
  r -= matmul(y, x);
  return r;
}

inline constexpr double kSeriesNormGuard = 20.0;
inline constexpr int kMaxSeriesTerms = 300;

namespace detail {

/// Σ_k (sign·ad_a)^k y / (k+1)!, truncated once a term drops below tol·‖sum‖.
inline Matrix ad_series(const Matrix& a, const Matrix& y, double sign, double tol,
                        const char* what) {
  Matrix sum = y;
  Matrix term = y;
  for (int k = 1; k <= kMaxSeriesTerms; ++k) {
    term = bracket(a, term);
    term *= sign / static_cast<double>(k + 1);
    sum += term;
    const double tn = fro_norm(term);
    const double sn = fro_norm(sum);
    if (tn <= tol * sn || tn == 0.0) return sum;
  }
  throw ConvergenceError(std::string(what) + ": ad-series not converged after " +
                         std::to_string(kMaxSeriesTerms) + " terms");
}

inline void require_series_domain(const Matrix& a, const Matrix& y, const char* what) {
  require_square(a, what);
  a.require_same_shape(y, what);
  if (!all_finite(a) || !all_finite(y)) {
    throw DomainError(std::string(what) + ": non-finite input");
  }
  if (one_norm(a) > kSeriesNormGuard) {
    throw DomainError(std::string(what) + ": ||a||_1 = " + std::to_string(one_norm(a)) +
                      " exceeds the series guard " + std::to_string(kSeriesNormGuard));
  }
}

}  // namespace detail

/// dexp_a(y) = e^a Σ_k (−ad_a)^k y / (k+1)!. Independent of expm_frechet
/// apart from the single e^a factor; used to cross-check it.
inline Matrix dexp_series(const Matrix& a, const Matrix& y, double tol = 1e-16) {
  detail::require_series_domain(a, y, "dexp_series");
  if (max_abs(y) == 0.0) return Matrix(a.rows(), a.cols());
  return matmul(expm(a), detail::ad_series(a, y, -1.0, tol, "dexp_series"));
}

inline void require_skew(const Matrix& a, const char* what, double rel_tol = 1e-10) {
  require_square(a, what);
  Matrix sym = a;
  sym += a.transpose();
  const double scale = fro_norm(a);
  if (fro_norm(sym) > rel_tol * scale) {
    throw DomainError(std::string(what) + ": matrix is not skew-symmetric (||a + a^T||_F = " +
                      std::to_string(fro_norm(sym)) + ")");
  }
}

/// Adjoint of dexp_a under ⟨X, Y⟩ = tr(XᵀY) for skew a:
/// Σ_k (ad_a)^k (e^{−a} g) / (k+1)!, which equals L(−a, g).
inline Matrix dexp_adjoint(const Matrix& a, const Matrix& g) {
  require_skew(a, "dexp_adjoint");
  a.require_same_shape(g, "dexp_adjoint");
  return expm_frechet(-a, g).second;
}

/// Series route to dexp_adjoint.
inline Matrix dexp_adjoint_series(const Matrix& a, const Matrix& g, double tol = 1e-16) {
  require_skew(a, "dexp_adjoint_series");
  detail::require_series_domain(a, g, "dexp_adjoint_series");
  const Matrix start = matmul(expm(-a), g);
  if (max_abs(start) == 0.0) return start;
  return detail::ad_series(a, start, 1.0, tol, "dexp_adjoint_series");
}

}  // namespace exprnn

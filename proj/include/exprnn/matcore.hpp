#pragma once

// Dense row-major real matrices and the handful of factorizations the rest
// of the library needs (LU with partial pivoting, one-sided Jacobi SVD).
// Every loop runs in a fixed order, so results are bit-reproducible on a
// given platform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exprnn/errors.hpp"

namespace exprnn {

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: " + std::to_string(data_.size()) +
                           " values for a " + std::to_string(rows_) + "x" +
                           std::to_string(cols_) + " matrix");
    }
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool is_square() const { return rows_ == cols_; }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  [[nodiscard]] double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }

  [[nodiscard]] std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  [[nodiscard]] std::string shape() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  [[nodiscard]] Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// this += s * o
  void axpy(double s, const Matrix& o) {
    require_same_shape(o, "axpy");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * o.data_[k];
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  void require_same_shape(const Matrix& o, const char* what) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw DimensionError(std::string(what) + ": shape mismatch " + shape() +
                           " vs " + o.shape());
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }
inline Matrix operator-(Matrix a) { return a *= -1.0; }

inline void require_square(const Matrix& a, const char* what) {
  if (!a.is_square() || a.rows() == 0) {
    throw DimensionError(std::string(what) + ": expected a non-empty square matrix, got " +
                         a.shape());
  }
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

/// c += a * b. The k loop is outermost per output row, so each entry of c
/// accumulates its terms in increasing k.
inline void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw DimensionError("matmul: cannot multiply " + a.shape() + " by " + b.shape() +
                         " into " + c.shape());
  }
  const std::size_t m = a.rows(), inner = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = pa[i * inner + k];
      const double* brow = pb + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  Matrix c(a.rows(), b.cols());
  matmul_acc(c, a, b);
  return c;
}

/// c += aᵀ * b without materializing the transpose.
inline void matmul_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols()) {
    throw DimensionError("matmul_tn: cannot multiply (" + a.shape() + ")^T by " +
                         b.shape() + " into " + c.shape());
  }
  const std::size_t inner = a.rows(), m = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double* arow = pa + k * m;
    const double* brow = pb + k * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
}

inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  matmul_tn_acc(c, a, b);
  return c;
}

inline std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: " + a.shape() + " times vector of length " +
                         std::to_string(x.size()));
  }
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * x[k];
    y[i] = s;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Norms and small helpers
// ---------------------------------------------------------------------------

/// Maximum absolute column sum.
inline double one_norm(const Matrix& a) {
  std::vector<double> col(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) col[j] += std::abs(a(i, j));
  return col.empty() ? 0.0 : *std::max_element(col.begin(), col.end());
}

inline double inf_norm(const Matrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

inline double fro_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

inline double trace(const Matrix& a) {
  require_square(a, "trace");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

/// ½(a − aᵀ)
inline Matrix skew_part(const Matrix& a) {
  require_square(a, "skew_part");
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) - a(j, i));
  return s;
}

/// ½(a + aᵀ)
inline Matrix sym_part(const Matrix& a) {
  require_square(a, "sym_part");
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

/// ‖aᵀa − I‖_F
inline double ortho_residual(const Matrix& a) {
  require_square(a, "ortho_residual");
  Matrix g = matmul_tn(a, a);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return fro_norm(g);
}

inline Matrix block(const Matrix& a, std::size_t r0, std::size_t c0, std::size_t rows,
                    std::size_t cols) {
  if (r0 + rows > a.rows() || c0 + cols > a.cols()) {
    throw DimensionError("block: window out of range for " + a.shape());
  }
  Matrix b(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) b(i, j) = a(r0 + i, c0 + j);
  return b;
}

// ---------------------------------------------------------------------------
// LU with partial pivoting
// ---------------------------------------------------------------------------

inline constexpr double kSingularPivot = 1e-300;

/// Packed factors P·a = L·U (unit-diagonal L below the diagonal, U on and above).
struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> perm;  ///< row i of P·a is row perm[i] of a
  int perm_sign = 1;
  double det = 1.0;

  [[nodiscard]] std::size_t n() const { return lu.rows(); }

  /// Solves a·x = b for every column of b.
  [[nodiscard]] Matrix solve(const Matrix& b) const {
    const std::size_t n = lu.rows();
    if (b.rows() != n) {
      throw DimensionError("lu solve: factors are " + lu.shape() + ", rhs is " + b.shape());
    }
    const std::size_t m = b.cols();
    Matrix x(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) x(i, j) = b(perm[i], j);
    // forward substitution with unit L
    for (std::size_t i = 0; i < n; ++i) {
      double* xi = x.row(i).data();
      for (std::size_t k = 0; k < i; ++k) {
        const double l = lu(i, k);
        if (l == 0.0) continue;
        const double* xk = x.row(k).data();
        for (std::size_t j = 0; j < m; ++j) xi[j] -= l * xk[j];
      }
    }
    // back substitution with U
    for (std::size_t ii = n; ii-- > 0;) {
      double* xi = x.row(ii).data();
      for (std::size_t k = ii + 1; k < n; ++k) {
        const double u = lu(ii, k);
        if (u == 0.0) continue;
        const double* xk = x.row(k).data();
        for (std::size_t j = 0; j < m; ++j) xi[j] -= u * xk[j];
      }
      const double d = lu(ii, ii);
      for (std::size_t j = 0; j < m; ++j) xi[j] /= d;
    }
    return x;
  }

  [[nodiscard]] std::vector<double> solve(std::span<const double> b) const {
    Matrix rhs(b.size(), 1, std::vector<double>(b.begin(), b.end()));
    Matrix x = solve(rhs);
    return {x.values().begin(), x.values().end()};
  }
};

inline LuFactors lu_factor(const Matrix& a) {
  require_square(a, "lu_factor");
  const std::size_t n = a.rows();
  LuFactors f{a, std::vector<std::size_t>(n), 1, 1.0};
  std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
  Matrix& lu = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        piv = i;
      }
    }
    if (!(best >= kSingularPivot)) {
      throw SingularMatrixError("lu_factor: pivot magnitude " + std::to_string(best) +
                                " at column " + std::to_string(k) + " of " + a.shape() +
                                " matrix");
    }
    if (piv != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(piv).begin());
      std::swap(f.perm[k], f.perm[piv]);
      f.perm_sign = -f.perm_sign;
    }
    const double pivot = lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = lu(i, k) / pivot;
      lu(i, k) = l;
      if (l == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= l * lu(k, j);
    }
  }
  f.det = static_cast<double>(f.perm_sign);
  for (std::size_t i = 0; i < n; ++i) f.det *= lu(i, i);
  return f;
}

inline double determinant(const Matrix& a) { return lu_factor(a).det; }

/// Solves a·x = b.
inline Matrix solve(const Matrix& a, const Matrix& b) { return lu_factor(a).solve(b); }

// ---------------------------------------------------------------------------
// One-sided (Hestenes) Jacobi SVD
// ---------------------------------------------------------------------------

struct Svd {
  Matrix u;
  std::vector<double> sigma;  ///< descending, nonnegative
  Matrix v;
};

inline constexpr std::size_t kMaxSvdDimension = 512;
inline constexpr int kMaxJacobiSweeps = 80;

/// a = U·diag(σ)·Vᵀ. Columns of a are orthogonalized by plane rotations
/// accumulated into V; U's columns are the normalized results, completed to
/// an orthonormal basis where σ vanishes.
inline Svd jacobi_svd(const Matrix& a) {
  require_square(a, "jacobi_svd");
  const std::size_t n = a.rows();
  if (n > kMaxSvdDimension) {
    throw DimensionError("jacobi_svd: dimension " + std::to_string(n) + " exceeds " +
                         std::to_string(kMaxSvdDimension));
  }
  // Work on columns stored as rows of the transpose for contiguous access.
  Matrix w = a.transpose();
  Matrix vt = Matrix::identity(n);
  const double tol = std::max(1e-15, static_cast<double>(n) * 2.220446049250313e-16);
  // Columns below the rounding floor of a are treated as exact zeros.
  const double negligible = std::pow(2.220446049250313e-16 * fro_norm(a), 2);

  double off = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    converged = true;
    off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto wp = w.row(p);
        auto wq = w.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          alpha += wp[k] * wp[k];
          beta += wq[k] * wq[k];
          gamma += wp[k] * wq[k];
        }
        if (gamma == 0.0 || alpha <= negligible || beta <= negligible) continue;
        const double scale = std::sqrt(alpha * beta);
        off += gamma * gamma;
        if (std::abs(gamma) <= tol * scale) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          const double x = wp[k], y = wq[k];
          wp[k] = c * x - s * y;
          wq[k] = s * x + c * y;
        }
        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vp[k], y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
  }
  if (!converged) {
    throw ConvergenceError("jacobi_svd: no convergence after " +
                           std::to_string(kMaxJacobiSweeps) +
                           " sweeps, residual off-diagonal norm " +
                           std::to_string(std::sqrt(off)));
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double x : w.row(j)) s += x * x;
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(n, n), std::vector<double>(n), Matrix(n, n)};
  const double smax = norms[order[0]];
  const double null_tol = smax * static_cast<double>(n) * 1e-15;
  std::vector<bool> filled(n, false);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    out.sigma[jj] = norms[j];
    for (std::size_t k = 0; k < n; ++k) out.v(k, jj) = vt(j, k);
    if (norms[j] > null_tol && norms[j] > 0.0) {
      for (std::size_t k = 0; k < n; ++k) out.u(k, jj) = w(j, k) / norms[j];
      filled[jj] = true;
    }
  }
  // Complete U on the numerical null space with Gram-Schmidt over e_0, e_1, ...
  std::size_t candidate = 0;
  for (std::size_t jj = 0; jj < n; ++jj) {
    if (filled[jj]) continue;
    while (candidate < n) {
      std::vector<double> x(n, 0.0);
      x[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < n; ++c) {
          if (!filled[c]) continue;
          double d = 0.0;
          for (std::size_t k = 0; k < n; ++k) d += out.u(k, c) * x[k];
          for (std::size_t k = 0; k < n; ++k) x[k] -= d * out.u(k, c);
        }
      }
      double nx = 0.0;
      for (double v : x) nx += v * v;
      nx = std::sqrt(nx);
      if (nx > 0.5) {
        for (std::size_t k = 0; k < n; ++k) out.u(k, jj) = x[k] / nx;
        filled[jj] = true;
        break;
      }
    }
    out.sigma[jj] = std::max(out.sigma[jj], 0.0);
  }
  return out;
}

}  // namespace exprnn

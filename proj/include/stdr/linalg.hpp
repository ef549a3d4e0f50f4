#pragma once

// Symmetric eigen/singular solvers: dense Eigen decompositions for small
// problems, Lanczos with full reorthogonalisation for large ones.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "stdr/error.hpp"
#include "stdr/matrix.hpp"

namespace stdr {

/// Problems up to this size use dense decompositions.
inline constexpr Index kDenseLimit = 192;

struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // columns match values
  int matvecs = 0;
};

namespace detail {

/// Deterministic, well spread start vector.
inline Vector start_vector(Index n) {
  Vector v(n);
  std::uint64_t x = 0x9E3779B97F4A7C15ULL;
  for (Index i = 0; i < n; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    v[i] = 0.5 + static_cast<double>(x >> 11) * 0x1.0p-53;
  }
  return v;
}

inline void project_out(Vector& w, const Matrix& basis, Index cols) {
  if (cols == 0) return;
  w.noalias() -= basis.leftCols(cols) * (basis.leftCols(cols).transpose() * w);
}

}  // namespace detail

/// Largest k eigenpairs of the symmetric operator `apply` (y = A x) on the
/// orthogonal complement of the orthonormal columns of `deflate`. Converged
/// when every Ritz residual is <= tol * max|Ritz value|.
template <class Apply>
EigenPairs lanczos_largest(Apply&& apply, Index n, int k, const Matrix& deflate,
                           double tol = 1e-11, Index max_basis = 160, int max_restarts = 60) {
  const Index ndef = deflate.cols();
  const Index dim = n - ndef;
  if (k < 1 || dim < k) throw NumericalError("lanczos: subspace too small for requested pairs");
  const Index cap = std::min<Index>(dim, std::max<Index>(max_basis, 4 * k));
  EigenPairs out;
  Vector start = detail::start_vector(n);
  Matrix q(n, cap + 1);
  for (int restart = 0; restart <= max_restarts; ++restart) {
    detail::project_out(start, deflate, ndef);
    double nrm = start.norm();
    if (nrm == 0.0) throw NumericalError("lanczos: start vector vanished after deflation");
    q.col(0) = start / nrm;
    std::vector<double> alpha, beta;
    Vector w(n);
    Index j = 0;
    Eigen::SelfAdjointEigenSolver<Matrix> tri;
    bool converged = false;
    for (; j < cap; ++j) {
      apply(q.col(j), w);
      ++out.matvecs;
      detail::project_out(w, deflate, ndef);
      alpha.push_back(q.col(j).dot(w));
      // full reorthogonalisation, twice for stability
      detail::project_out(w, q, j + 1);
      detail::project_out(w, q, j + 1);
      detail::project_out(w, deflate, ndef);
      double b = w.norm();
      const Index size = j + 1;
      const bool last = (size == cap);
      const double scale = std::max(std::abs(alpha.front()), 1e-300);
      const bool invariant = b <= 1e-13 * scale;
      if (size >= k && (size % 4 == 0 || last || invariant)) {
        Matrix t = Matrix::Zero(size, size);
        for (Index i = 0; i < size; ++i) {
          t(i, i) = alpha[i];
          if (i + 1 < size) t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        tri.compute(t);
        const Vector& ev = tri.eigenvalues();
        double top = std::max(std::abs(ev[size - 1]), std::abs(ev[0]));
        bool ok = true;
        for (int i = 0; i < k; ++i) {
          double res = b * std::abs(tri.eigenvectors()(size - 1, size - 1 - i));
          if (res > tol * std::max(top, 1e-300)) ok = false;
        }
        if (ok || invariant || last) {
          out.values.resize(k);
          out.vectors.resize(n, k);
          for (int i = 0; i < k; ++i) {
            out.values[i] = ev[size - 1 - i];
            out.vectors.col(i) = q.leftCols(size) * tri.eigenvectors().col(size - 1 - i);
            out.vectors.col(i).normalize();
          }
          if (ok || (invariant && size == dim)) {
            converged = true;
            break;
          }
          if (invariant) break;  // restart from the Ritz vectors
          if (last) break;
        }
      }
      beta.push_back(b);
      q.col(j + 1) = w / b;
    }
    if (converged) return out;
    if (out.vectors.cols() == k) {
      start = out.vectors.rowwise().sum();
      // nudge so that a Krylov space exhausted by an invariant subspace grows
      start += 1e-3 * detail::start_vector(n + restart + 1).head(n);
    } else {
      start = detail::start_vector(n + restart + 1).head(n);
    }
  }
  throw NumericalError("lanczos: no convergence within the restart cap");
}

/// Dense symmetric eigendecomposition, eigenvalues ascending.
inline Eigen::SelfAdjointEigenSolver<Matrix> dense_eigen(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
  return es;
}

/// Flips the sign so the first entry with magnitude > 1e-12 is positive.
/// Returns the factor applied (+1 or -1).
inline double canonical_sign(Vector& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0) {
        v = -v;
        return -1.0;
      }
      return 1.0;
    }
  return 1.0;
}

struct SingularTriplet {
  Vector u;
  double sigma1 = 0.0;
  Vector v;
  double sigma2 = 0.0;  // second singular value (0 if min dimension is 1)
};

/// Leading singular triplet and second singular value of M.
inline SingularTriplet top_singular(const Matrix& m) {
  const Index p = m.rows(), q = m.cols();
  if (p == 0 || q == 0 || m.cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateError("singular vectors of a zero matrix");
  SingularTriplet out;
  if (std::min(p, q) == 1) {
    // rank one by shape
    out.sigma1 = m.norm();
    if (q == 1) {
      out.u = m.col(0) / out.sigma1;
      out.v = Vector::Ones(1);
    } else {
      out.u = Vector::Ones(1);
      out.v = m.row(0).transpose() / out.sigma1;
    }
  } else if (std::min(p, q) <= kDenseLimit) {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.sigma1 = svd.singularValues()[0];
    out.sigma2 = svd.singularValues()[1];
    out.u = svd.matrixU().col(0);
    out.v = svd.matrixV().col(0);
  } else {
    const bool tall = p >= q;
    const Matrix empty(tall ? q : p, 0);
    Vector tmp(tall ? p : q);
    auto gram = [&](const auto& x, Vector& y) {
      if (tall) {
        tmp.noalias() = m * x;
        y.noalias() = m.transpose() * tmp;
      } else {
        tmp.noalias() = m.transpose() * x;
        y.noalias() = m * tmp;
      }
    };
    EigenPairs ep = lanczos_largest(gram, tall ? q : p, 2, empty, 1e-12);
    // Singular values from the Gram spectrum lose half the digits; redo them
    // on the Ritz subspace in the original space (small SVD of M V).
    Matrix basis = ep.vectors.leftCols(2).householderQr().householderQ() *
                   Matrix::Identity(ep.vectors.rows(), 2);
    Matrix image = tall ? Matrix(m * basis) : Matrix(m.transpose() * basis);
    Eigen::JacobiSVD<Matrix> small(image, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.sigma1 = small.singularValues()[0];
    out.sigma2 = small.singularValues()[1];
    Vector near = basis * small.matrixV().col(0);
    Vector far = small.matrixU().col(0);
    if (tall) {
      out.v = near.normalized();
      out.u = far.normalized();
    } else {
      out.u = near.normalized();
      out.v = far.normalized();
    }
  }
  double s = canonical_sign(out.u);
  out.v *= s;
  return out;
}

}  // namespace stdr

#pragma once

// Empirical similarity estimation, graph Laplacians, Fiedler vectors and the
// singular-value helpers shared by the partition and merge steps.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stdr/alignment.hpp"
#include "stdr/error.hpp"
#include "stdr/linalg.hpp"
#include "stdr/matrix.hpp"

namespace stdr {

namespace detail {

/// |det| of the column-normalised joint matrix; zero-sum columns become
/// uniform.
inline double conditional_det(const Matrix& joint) {
  const Index ell = joint.rows();
  Matrix p = joint;
  for (Index b = 0; b < ell; ++b) {
    double s = p.col(b).sum();
    if (s > 0)
      p.col(b) /= s;
    else
      p.col(b).setConstant(1.0 / ell);
  }
  return std::abs(p.determinant());
}

}  // namespace detail

/// S_hat(i,j) = sqrt(|det P(x_i|x_j)| |det P(x_j|x_i)|) from joint state
/// frequencies, unit diagonal, clamped to [0,1].
inline SimilarityMatrix estimate_similarity(const Alignment& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const int ell = x.ell();
  if (m == 0 || n == 0) throw Error(ErrorKind::usage, "estimate_similarity: empty alignment");
  // joint counts via indicator products: counts_ab = E_a E_b^T (exact in
  // float for n < 2^24)
  using FMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<FMatrix> ind(ell, FMatrix::Zero(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    const auto* r = x.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (r[j] >= ell) throw Error(ErrorKind::input_format, "alignment symbol out of range");
      ind[r[j]](i, j) = 1.0f;
    }
  }
  Matrix s = Matrix::Identity(m, m);
  Matrix joint(ell, ell);
  const Index block = 256;
  std::vector<Eigen::MatrixXf> counts(ell * ell);
  for (Index i0 = 0; i0 < static_cast<Index>(m); i0 += block) {
    const Index rows = std::min<Index>(block, m - i0);
    for (int a = 0; a < ell; ++a)
      for (int b = 0; b < ell; ++b)
        counts[a * ell + b].noalias() = ind[a].middleRows(i0, rows) * ind[b].transpose();
    for (Index r = 0; r < rows; ++r) {
      const Index i = i0 + r;
      for (Index j = i + 1; j < static_cast<Index>(m); ++j) {
        // joint(a,b): x_i = a, x_j = b; columns index x_j, giving P(x_i|x_j)
        for (int a = 0; a < ell; ++a)
          for (int b = 0; b < ell; ++b) joint(a, b) = counts[a * ell + b](r, j);
        double d1 = detail::conditional_det(joint);
        double d2 = detail::conditional_det(joint.transpose());
        s(i, j) = s(j, i) = std::sqrt(d1 * d2);
      }
    }
  }
  return SimilarityMatrix(x.labels(), std::move(s));
}

/// L = D - S with D_ii = sum_j S_ij (diagonal of S included on both sides).
inline Matrix laplacian(const Matrix& s) {
  Matrix l = -s;
  l.diagonal() += s.rowwise().sum();
  return l;
}

inline Matrix laplacian(const SimilarityMatrix& s) { return laplacian(s.values()); }

struct FiedlerResult {
  Vector vector;
  double lambda2 = 0.0;
};

/// Second-smallest eigenpair of the Laplacian L = D - S of a similarity
/// block. Dense solve for small m, deflated Lanczos otherwise.
inline FiedlerResult fiedler_from_similarity(const Matrix& s) {
  const Index m = s.rows();
  if (m < 2) throw Error(ErrorKind::usage, "fiedler vector needs at least two nodes");
  Vector degree = s.rowwise().sum();
  const double norm_l = 2.0 * (degree - s.diagonal()).cwiseAbs().maxCoeff();  // >= ||L||_2
  FiedlerResult out;
  if (m <= kDenseLimit) {
    auto es = dense_eigen(laplacian(s));
    out.lambda2 = es.eigenvalues()[1];
    out.vector = es.eigenvectors().col(1);
  } else {
    // largest eigenpair of c I - L on the complement of the constant vector
    const double c = norm_l;
    Vector shift = Vector::Constant(m, c) - degree;
    Matrix ones = Matrix::Constant(m, 1, 1.0 / std::sqrt(static_cast<double>(m)));
    auto op = [&](const auto& x, Vector& y) {
      y.noalias() = s * x;
      y.array() += shift.array() * x.array();
    };
    EigenPairs ep = lanczos_largest(op, m, 1, ones, 1e-12, 200);
    out.lambda2 = c - ep.values[0];
    out.vector = ep.vectors.col(0);
  }
  if (!(out.lambda2 > 1e-10 * std::max(norm_l, 1e-300)))
    throw DisconnectedGraphError("similarity graph is disconnected (lambda2 = " +
                                 std::to_string(out.lambda2) + ")");
  out.vector.normalize();
  canonical_sign(out.vector);
  return out;
}

/// Fiedler pair of a Laplacian given explicitly.
inline FiedlerResult fiedler_vector(const Matrix& l) {
  Matrix s = -l;
  s.diagonal().setZero();
  return fiedler_from_similarity(s);
}

inline SingularTriplet leading_singular_triplet(const Matrix& m) { return top_singular(m); }

inline double second_singular_value(const Matrix& m) { return top_singular(m).sigma2; }

}  // namespace stdr

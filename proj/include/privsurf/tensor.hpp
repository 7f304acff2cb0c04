#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <vector>

#include "privsurf/error.hpp"

namespace privsurf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using Dims3 = std::array<Eigen::Index, 3>;

/// Dense third-order tensor of shape I x J x K.
///
/// Storage is column-major over (i, j, k): entry (i, j, k) lives at offset
/// i + I * (j + J * k), so every frontal slice k is a contiguous column-major
/// I x J block.
class DenseTensor3 {
 public:
  DenseTensor3() = default;
  DenseTensor3(Eigen::Index I, Eigen::Index J, Eigen::Index K);
  DenseTensor3(Dims3 dims, std::vector<double> values);

  static DenseTensor3 zeros(Dims3 dims) { return {dims[0], dims[1], dims[2]}; }
  /// Stacks equally sized matrices as frontal slices.
  static DenseTensor3 from_slices(const std::vector<Matrix>& slices);

  const Dims3& dims() const noexcept { return dims_; }
  Eigen::Index dim(int mode) const { return dims_.at(static_cast<std::size_t>(mode - 1)); }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(values_.size()); }

  double& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    return values_[static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k))];
  }
  double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return values_[static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k))];
  }

  Eigen::Map<Matrix> slice(Eigen::Index k);
  Eigen::Map<const Matrix> slice(Eigen::Index k) const;

  const std::vector<double>& values() const noexcept { return values_; }
  Eigen::Map<const Vector> flat() const;

  bool operator==(const DenseTensor3& other) const = default;

 private:
  Dims3 dims_{0, 0, 0};
  std::vector<double> values_;
};

/// Matrix with an observation mask; masked-out entries hold 0.
struct MaskedMatrix {
  Matrix data;
  Mask mask;  // true = observed

  MaskedMatrix() = default;
  /// Fully observed.
  explicit MaskedMatrix(Matrix values);
  /// Zeroes every entry whose mask is false.
  MaskedMatrix(Matrix values, Mask observed);

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  Eigen::Index observed_count() const { return mask.count(); }
  double observed_fraction() const;
};

/// Mode-n unfolding (mode in {1,2,3}). Columns follow the convention that the
/// earlier non-unfolded mode varies fastest:
///   mode 1: I x JK, column j + J*k
///   mode 2: J x IK, column i + I*k
///   mode 3: K x IJ, column i + I*j
/// With this ordering X(1) = U * khatri_rao(W, V)^T for a CP model.
Matrix matricize(const DenseTensor3& t, int mode);

/// Inverse of matricize.
DenseTensor3 fold(const Matrix& m, int mode, Dims3 dims);

/// Column-wise Kronecker product; row (i * b.rows() + j) of column r is
/// a(i, r) * b(j, r).
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// n-mode product t x_n m, where m has dim(mode) columns.
DenseTensor3 mode_product(const DenseTensor3& t, const Matrix& m, int mode);

struct ThinSvd {
  Matrix U;
  Vector s;  // non-increasing, non-negative
  Matrix V;
};

/// Economy SVD m = U diag(s) V^T with min(rows, cols) singular triplets.
/// Rank-deficient inputs keep their zero singular values.
ThinSvd thin_svd(const Matrix& m);

/// Orthogonal polar factor P Z^T of m = P S Z^T (m is tall, n >= r).
Matrix polar_factor(const Matrix& m);

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// rel_tol * s_max are treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-12);

/// Numerical rank under the same relative threshold as pseudo_inverse.
Eigen::Index numerical_rank(const Matrix& m, double rel_tol = 1e-12);

double frobenius_norm(const Matrix& m);
double frobenius_norm(const DenseTensor3& t);

bool all_finite(const Matrix& m);
bool all_finite(const DenseTensor3& t);

}  // namespace privsurf

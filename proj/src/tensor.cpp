#include "privsurf/tensor.hpp"

#include <cmath>
#include <string>

namespace privsurf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::RankOutOfRange: return "rank_out_of_range";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::ZeroNorm: return "zero_norm";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::MissingData: return "missing_data";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

DenseTensor3::DenseTensor3(Eigen::Index I, Eigen::Index J, Eigen::Index K)
    : dims_{I, J, K}, values_(static_cast<std::size_t>(I * J * K), 0.0) {
  if (I <= 0 || J <= 0 || K <= 0) {
    throw Error(ErrorCode::InvalidArgument, "tensor dimensions must be positive");
  }
}

DenseTensor3::DenseTensor3(Dims3 dims, std::vector<double> values)
    : dims_(dims), values_(std::move(values)) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw Error(ErrorCode::InvalidArgument, "tensor dimensions must be positive");
  }
  if (static_cast<Eigen::Index>(values_.size()) != dims[0] * dims[1] * dims[2]) {
    throw Error(ErrorCode::ShapeMismatch, "tensor value count does not match I*J*K");
  }
}

DenseTensor3 DenseTensor3::from_slices(const std::vector<Matrix>& slices) {
  if (slices.empty()) throw Error(ErrorCode::EmptyInput, "no slices to stack");
  const auto I = slices.front().rows();
  const auto J = slices.front().cols();
  DenseTensor3 t(I, J, static_cast<Eigen::Index>(slices.size()));
  for (std::size_t k = 0; k < slices.size(); ++k) {
    if (slices[k].rows() != I || slices[k].cols() != J) {
      throw Error(ErrorCode::ShapeMismatch, "frontal slices differ in shape");
    }
    t.slice(static_cast<Eigen::Index>(k)) = slices[k];
  }
  return t;
}

Eigen::Map<Matrix> DenseTensor3::slice(Eigen::Index k) {
  return {values_.data() + k * dims_[0] * dims_[1], dims_[0], dims_[1]};
}

Eigen::Map<const Matrix> DenseTensor3::slice(Eigen::Index k) const {
  return {values_.data() + k * dims_[0] * dims_[1], dims_[0], dims_[1]};
}

Eigen::Map<const Vector> DenseTensor3::flat() const {
  return {values_.data(), size()};
}

MaskedMatrix::MaskedMatrix(Matrix values)
    : data(std::move(values)), mask(Mask::Constant(data.rows(), data.cols(), true)) {}

MaskedMatrix::MaskedMatrix(Matrix values, Mask observed)
    : data(std::move(values)), mask(std::move(observed)) {
  if (data.rows() != mask.rows() || data.cols() != mask.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from data shape");
  }
  data = mask.select(data.array(), 0.0).matrix();
}

double MaskedMatrix::observed_fraction() const {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>(mask.count()) / static_cast<double>(mask.size());
}

namespace {

void check_mode(int mode) {
  if (mode < 1 || mode > 3) {
    throw Error(ErrorCode::InvalidArgument, "mode must be 1, 2 or 3, got " + std::to_string(mode));
  }
}

}  // namespace

Matrix matricize(const DenseTensor3& t, int mode) {
  check_mode(mode);
  const auto [I, J, K] = t.dims();
  switch (mode) {
    case 1: {
      // The storage order already matches the mode-1 unfolding.
      return Eigen::Map<const Matrix>(t.values().data(), I, J * K);
    }
    case 2: {
      Matrix out(J, I * K);
      for (Eigen::Index k = 0; k < K; ++k) {
        out.middleCols(I * k, I) = t.slice(k).transpose();
      }
      return out;
    }
    default: {
      Matrix out(K, I * J);
      for (Eigen::Index k = 0; k < K; ++k) {
        out.row(k) = t.slice(k).reshaped().transpose();
      }
      return out;
    }
  }
}

DenseTensor3 fold(const Matrix& m, int mode, Dims3 dims) {
  check_mode(mode);
  const auto [I, J, K] = dims;
  const Eigen::Index rows = dims[static_cast<std::size_t>(mode - 1)];
  if (m.rows() != rows || m.cols() * rows != I * J * K) {
    throw Error(ErrorCode::ShapeMismatch,
                "matrix of shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    " cannot fold into mode " + std::to_string(mode));
  }
  DenseTensor3 t(I, J, K);
  switch (mode) {
    case 1:
      std::copy(m.data(), m.data() + m.size(), t.slice(0).data());
      break;
    case 2:
      for (Eigen::Index k = 0; k < K; ++k) t.slice(k) = m.middleCols(I * k, I).transpose();
      break;
    default:
      for (Eigen::Index k = 0; k < K; ++k) {
        t.slice(k).reshaped() = m.row(k).transpose();
      }
      break;
  }
  return t;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "khatri_rao operands differ in column count");
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
    }
  }
  return out;
}

DenseTensor3 mode_product(const DenseTensor3& t, const Matrix& m, int mode) {
  check_mode(mode);
  if (m.cols() != t.dim(mode)) {
    throw Error(ErrorCode::ShapeMismatch, "mode_product: matrix columns differ from tensor dimension");
  }
  Dims3 dims = t.dims();
  dims[static_cast<std::size_t>(mode - 1)] = m.rows();
  return fold(m * matricize(t, mode), mode, dims);
}

ThinSvd thin_svd(const Matrix& m) {
  if (m.size() == 0) return {Matrix(m.rows(), 0), Vector(0), Matrix(m.cols(), 0)};
  // Jacobi is accurate to full precision for the small column counts used
  // here; the QR preconditioner keeps tall inputs cheap.
  Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(
      m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix polar_factor(const Matrix& m) {
  const ThinSvd svd = thin_svd(m);
  return svd.U * svd.V.transpose();
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
  const ThinSvd svd = thin_svd(m);
  if (svd.s.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  const double cutoff = rel_tol * svd.s(0);
  Vector inv = Vector::Zero(svd.s.size());
  for (Eigen::Index i = 0; i < svd.s.size(); ++i) {
    if (svd.s(i) > cutoff && svd.s(i) > 0.0) inv(i) = 1.0 / svd.s(i);
  }
  return svd.V * inv.asDiagonal() * svd.U.transpose();
}

Eigen::Index numerical_rank(const Matrix& m, double rel_tol) {
  const ThinSvd svd = thin_svd(m);
  if (svd.s.size() == 0 || svd.s(0) == 0.0) return 0;
  const double cutoff = rel_tol * svd.s(0);
  return (svd.s.array() > cutoff).count();
}

double frobenius_norm(const Matrix& m) { return m.norm(); }

double frobenius_norm(const DenseTensor3& t) { return t.flat().norm(); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool all_finite(const DenseTensor3& t) { return t.flat().allFinite(); }

}  // namespace privsurf

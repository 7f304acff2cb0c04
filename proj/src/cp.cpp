#include "privsurf/cp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace privsurf {

namespace {

// Unit-normalizes the columns of f in place and returns their former norms.
Vector take_column_norms(Matrix& f) {
  Vector norms = f.colwise().norm().transpose();
  for (Eigen::Index r = 0; r < f.cols(); ++r) {
    if (norms(r) > 0.0) f.col(r) /= norms(r);
  }
  return norms;
}

Matrix leading_left_vectors(const Matrix& m, Eigen::Index rank) {
  return thin_svd(m).U.leftCols(rank);
}

Matrix random_factor(Eigen::Index rows, Eigen::Index rank, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Matrix f(rows, rank);
  for (Eigen::Index r = 0; r < rank; ++r) {
    for (Eigen::Index i = 0; i < rows; ++i) f(i, r) = uni(rng);
  }
  return f;
}

// Least-squares factor update: unfolded * kr * pinv(gram).
Matrix ls_update(const Matrix& unfolded, const Matrix& kr, const Matrix& gram) {
  return unfolded * kr * pseudo_inverse(gram);
}

double squared_residual(const Matrix& x1, const CpModel& m) {
  const Matrix approx = m.U * m.lambda.asDiagonal() * khatri_rao(m.W, m.V).transpose();
  return (x1 - approx).squaredNorm();
}

}  // namespace

void normalize(CpModel& m) {
  const Eigen::Index R = m.rank();
  for (Matrix* f : {&m.U, &m.V, &m.W}) {
    const Vector norms = take_column_norms(*f);
    m.lambda.array() *= norms.array();
  }
  for (Eigen::Index r = 0; r < R; ++r) {
    Eigen::Index arg = 0;
    m.U.col(r).cwiseAbs().maxCoeff(&arg);
    if (m.U(arg, r) < 0.0) {
      m.U.col(r) *= -1.0;
      m.V.col(r) *= -1.0;
    }
    m.V.col(r).cwiseAbs().maxCoeff(&arg);
    if (m.V(arg, r) < 0.0) {
      m.V.col(r) *= -1.0;
      m.W.col(r) *= -1.0;
    }
    if (m.lambda(r) < 0.0) {
      m.lambda(r) = -m.lambda(r);
      m.W.col(r) *= -1.0;
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (m.lambda(a) != m.lambda(b)) return m.lambda(a) > m.lambda(b);
    const auto ca = m.U.col(a);
    const auto cb = m.U.col(b);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
  });
  CpModel sorted{Matrix(m.U.rows(), R), Matrix(m.V.rows(), R), Matrix(m.W.rows(), R), Vector(R)};
  for (Eigen::Index r = 0; r < R; ++r) {
    const Eigen::Index src = order[static_cast<std::size_t>(r)];
    sorted.U.col(r) = m.U.col(src);
    sorted.V.col(r) = m.V.col(src);
    sorted.W.col(r) = m.W.col(src);
    sorted.lambda(r) = m.lambda(src);
  }
  m = std::move(sorted);
}

CpResult cp_als(const DenseTensor3& t, Eigen::Index rank, const CpOptions& opts) {
  const auto [I, J, K] = t.dims();
  if (rank < 1 || rank > std::min({I, J, K})) {
    throw Error(ErrorCode::RankOutOfRange,
                "cp_als: rank " + std::to_string(rank) + " outside [1, min(I,J,K)]");
  }
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "cp_als: tol must be positive");
  if (!all_finite(t)) throw Error(ErrorCode::NonFinite, "cp_als: tensor has non-finite entries");

  CpResult result;
  const double norm_x = frobenius_norm(t);
  if (norm_x == 0.0) {
    // Degenerate case: zero scales, fit defined as 1.
    result.model = {Matrix::Constant(I, rank, 1.0 / std::sqrt(double(I))),
                    Matrix::Constant(J, rank, 1.0 / std::sqrt(double(J))),
                    Matrix::Constant(K, rank, 1.0 / std::sqrt(double(K))), Vector::Zero(rank)};
    result.fit = 1.0;
    result.converged = true;
    return result;
  }

  const Matrix x1 = matricize(t, 1);
  const Matrix x2 = matricize(t, 2);
  const Matrix x3 = matricize(t, 3);

  CpModel& m = result.model;
  bool use_svd = opts.init == CpInit::Svd;
  if (use_svd) {
    use_svd = numerical_rank(x1) >= rank && numerical_rank(x2) >= rank && numerical_rank(x3) >= rank;
    result.random_init = !use_svd;
  }
  if (use_svd) {
    m.U = leading_left_vectors(x1, rank);
    m.V = leading_left_vectors(x2, rank);
    m.W = leading_left_vectors(x3, rank);
  } else {
    std::mt19937_64 rng(opts.seed);
    m.U = random_factor(I, rank, rng);
    m.V = random_factor(J, rank, rng);
    m.W = random_factor(K, rank, rng);
    take_column_norms(m.U);
    take_column_norms(m.V);
    take_column_norms(m.W);
  }
  m.lambda = Vector::Ones(rank);

  double prev_fit = 0.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    m.U = ls_update(x1, khatri_rao(m.W, m.V),
                    (m.W.transpose() * m.W).cwiseProduct(m.V.transpose() * m.V));
    take_column_norms(m.U);
    m.V = ls_update(x2, khatri_rao(m.W, m.U),
                    (m.W.transpose() * m.W).cwiseProduct(m.U.transpose() * m.U));
    take_column_norms(m.V);
    m.W = ls_update(x3, khatri_rao(m.V, m.U),
                    (m.V.transpose() * m.V).cwiseProduct(m.U.transpose() * m.U));
    m.lambda = take_column_norms(m.W);

    const double err2 = squared_residual(x1, m);
    result.error_history.push_back(err2);
    result.fit = 1.0 - std::sqrt(err2) / norm_x;
    result.iterations = it + 1;
    if (it > 0 && std::abs(result.fit - prev_fit) < opts.tol) {
      result.converged = true;
      break;
    }
    prev_fit = result.fit;
  }
  normalize(m);
  return result;
}

DenseTensor3 cp_reconstruct(const CpModel& m) {
  const Matrix x1 = m.U * m.lambda.asDiagonal() * khatri_rao(m.W, m.V).transpose();
  return fold(x1, 1, m.dims());
}

double cp_fit(const CpModel& m, const DenseTensor3& t) {
  if (m.dims() != t.dims()) throw Error(ErrorCode::ShapeMismatch, "cp_fit: model and tensor shapes differ");
  const double norm_x = frobenius_norm(t);
  if (norm_x == 0.0) throw Error(ErrorCode::ZeroNorm, "cp_fit: tensor has zero norm");
  const Matrix residual = matricize(t, 1) - m.U * m.lambda.asDiagonal() * khatri_rao(m.W, m.V).transpose();
  return 1.0 - residual.norm() / norm_x;
}

CoreConsistency core_consistency(const CpModel& m, const DenseTensor3& t) {
  if (m.dims() != t.dims()) {
    throw Error(ErrorCode::ShapeMismatch, "core_consistency: model and tensor shapes differ");
  }
  const Eigen::Index R = m.rank();
  const double lambda_sq = m.lambda.squaredNorm();
  if (lambda_sq == 0.0) throw Error(ErrorCode::ZeroNorm, "core_consistency: model has zero scales");

  CoreConsistency out;
  out.rank_deficient = numerical_rank(m.U) < R || numerical_rank(m.V) < R || numerical_rank(m.W) < R;

  DenseTensor3 core = mode_product(t, pseudo_inverse(m.U), 1);
  core = mode_product(core, pseudo_inverse(m.V), 2);
  core = mode_product(core, pseudo_inverse(m.W), 3);

  double deviation = 0.0;
  for (Eigen::Index k = 0; k < R; ++k) {
    for (Eigen::Index j = 0; j < R; ++j) {
      for (Eigen::Index i = 0; i < R; ++i) {
        const double target = (i == j && j == k) ? m.lambda(i) : 0.0;
        const double d = core(i, j, k) - target;
        deviation += d * d;
      }
    }
  }
  out.value = 100.0 * (1.0 - deviation / lambda_sq);
  return out;
}

}  // namespace privsurf

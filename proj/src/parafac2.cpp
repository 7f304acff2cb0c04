#include "privsurf/parafac2.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "privsurf/parallel.hpp"

namespace privsurf {

namespace {

void check_inputs(const MultiSet& ms, Eigen::Index rank) {
  ms.validate();
  const Eigen::Index limit = std::min(ms.users(), ms.min_rows());
  if (rank < 1 || rank > limit) {
    throw Error(ErrorCode::RankOutOfRange, "parafac2_als: rank " + std::to_string(rank) +
                                               " outside [1, min(J, min_k I_k)] = [1, " +
                                               std::to_string(limit) + "]");
  }
  Eigen::Array<bool, 1, Eigen::Dynamic> user_seen =
      Eigen::Array<bool, 1, Eigen::Dynamic>::Constant(ms.users(), false);
  for (Eigen::Index k = 0; k < ms.slice_count(); ++k) {
    const auto& s = ms.slices[static_cast<std::size_t>(k)];
    if (s.observed_count() == 0) {
      throw Error(ErrorCode::MissingData, "parafac2_als: slice " + std::to_string(k) + " ('" +
                                              ms.info[static_cast<std::size_t>(k)].name +
                                              "') has no observed entries");
    }
    if (!s.data.allFinite()) throw Error(ErrorCode::NonFinite, "parafac2_als: non-finite data");
    user_seen = user_seen || s.mask.colwise().any();
  }
  if (!user_seen.all()) {
    Eigen::Index j = 0;
    while (user_seen(j)) ++j;
    throw Error(ErrorCode::MissingData,
                "parafac2_als: user column " + std::to_string(j) + " has no observed entries");
  }
}

// Moves column scales of V and H into S and flips signs so the largest
// magnitude entry of each V column is positive.
void absorb_scales(Parafac2Model& m) {
  for (Matrix* f : {&m.V, &m.H}) {
    for (Eigen::Index r = 0; r < f->cols(); ++r) {
      const double n = f->col(r).norm();
      if (n > 0.0) {
        f->col(r) /= n;
        m.S.col(r) *= n;
      }
    }
  }
  for (Eigen::Index r = 0; r < m.V.cols(); ++r) {
    Eigen::Index arg = 0;
    m.V.col(r).cwiseAbs().maxCoeff(&arg);
    if (m.V(arg, r) < 0.0) {
      m.V.col(r) *= -1.0;
      m.H.col(r) *= -1.0;
    }
  }
}

Matrix model_slice(const Matrix& q, const Matrix& h, const Eigen::RowVectorXd& s, const Matrix& v) {
  return q * (h * s.asDiagonal() * v.transpose());
}

}  // namespace

Matrix Parafac2Model::U(Eigen::Index k) const {
  if (k < 0 || k >= slice_count()) throw Error(ErrorCode::InvalidArgument, "slice index out of range");
  return Q[static_cast<std::size_t>(k)] * H;
}

void normalize(Parafac2Model& m) {
  absorb_scales(m);
  const Eigen::Index R = m.rank();
  const Eigen::RowVectorXd weight = m.S.cwiseAbs().colwise().sum();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return weight(a) > weight(b); });
  Matrix H(m.H.rows(), R), S(m.S.rows(), R), V(m.V.rows(), R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const Eigen::Index src = order[static_cast<std::size_t>(r)];
    H.col(r) = m.H.col(src);
    S.col(r) = m.S.col(src);
    V.col(r) = m.V.col(src);
  }
  m.H = std::move(H);
  m.S = std::move(S);
  m.V = std::move(V);
}

Parafac2Model parafac2_als(const MultiSet& ms, Eigen::Index rank, const Parafac2Options& opts) {
  check_inputs(ms, rank);
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "parafac2_als: tol must be positive");

  const Eigen::Index K = ms.slice_count();
  const Eigen::Index J = ms.users();
  const Eigen::Index R = rank;
  const auto Ks = static_cast<std::size_t>(K);

  // Completed data; masked entries start at zero (MaskedMatrix invariant).
  std::vector<Matrix> X(Ks);
  for (std::size_t k = 0; k < Ks; ++k) X[k] = ms.slices[k].data;

  Parafac2Model m;
  m.info = ms.info;
  m.user_ids = ms.user_ids;
  m.Q.resize(Ks);
  m.H = Matrix::Identity(R, R);
  m.S = Matrix::Ones(K, R);

  if (opts.init == Parafac2Init::Svd) {
    Matrix stacked(K * R, J);
    for (std::size_t k = 0; k < Ks; ++k) {
      m.Q[k] = thin_svd(X[k]).U.leftCols(R);
      stacked.middleRows(static_cast<Eigen::Index>(k) * R, R) = m.Q[k].transpose() * X[k];
    }
    m.V = thin_svd(stacked).V.leftCols(R);
  } else {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    m.V = Matrix(J, R);
    for (Eigen::Index i = 0; i < m.V.size(); ++i) m.V.data()[i] = uni(rng);
  }

  double prev_fit = 0.0;
  Matrix prev_H, prev_V, prev_S;
  for (int it = 0; it < opts.max_iters; ++it) {
    // (a) Q_k: orthogonal polar factor of X_k V S_k H^T.
    parallel_for(Ks, opts.jobs, [&](std::size_t k) {
      const Matrix target = X[k] * (m.V * m.S.row(static_cast<Eigen::Index>(k)).asDiagonal() * m.H.transpose());
      m.Q[k] = polar_factor(target);
    });

    // (b) One CP-ALS pass on the R x J x K tensor with slices Y_k = Q_k^T X_k.
    std::vector<Matrix> Y(Ks);
    for (std::size_t k = 0; k < Ks; ++k) Y[k] = m.Q[k].transpose() * X[k];
    const DenseTensor3 y = DenseTensor3::from_slices(Y);
    const Matrix y1 = matricize(y, 1);
    const Matrix y2 = matricize(y, 2);
    const Matrix y3 = matricize(y, 3);
    m.H = y1 * khatri_rao(m.S, m.V) *
          pseudo_inverse((m.S.transpose() * m.S).cwiseProduct(m.V.transpose() * m.V));
    m.V = y2 * khatri_rao(m.S, m.H) *
          pseudo_inverse((m.S.transpose() * m.S).cwiseProduct(m.H.transpose() * m.H));
    m.S = y3 * khatri_rao(m.V, m.H) *
          pseudo_inverse((m.V.transpose() * m.V).cwiseProduct(m.H.transpose() * m.H));
    absorb_scales(m);

    // Line-search extrapolation along the last update direction; the step is
    // kept only when it lowers the completed-data objective.
    if (opts.extrapolate && it > 0) {
      double current = 0.0;
      for (std::size_t k = 0; k < Ks; ++k) {
        current += (X[k] - model_slice(m.Q[k], m.H, m.S.row(static_cast<Eigen::Index>(k)), m.V)).squaredNorm();
      }
      const double step = std::cbrt(static_cast<double>(it + 1));
      Parafac2Model trial = m;
      trial.H = m.H + step * (m.H - prev_H);
      trial.V = m.V + step * (m.V - prev_V);
      trial.S = m.S + step * (m.S - prev_S);
      std::vector<Matrix> trial_q(Ks);
      parallel_for(Ks, opts.jobs, [&](std::size_t k) {
        trial_q[k] = polar_factor(X[k] * (trial.V * trial.S.row(static_cast<Eigen::Index>(k)).asDiagonal() *
                                          trial.H.transpose()));
      });
      double extrapolated = 0.0;
      for (std::size_t k = 0; k < Ks; ++k) {
        extrapolated += (X[k] - model_slice(trial_q[k], trial.H, trial.S.row(static_cast<Eigen::Index>(k)), trial.V))
                            .squaredNorm();
      }
      if (extrapolated < current) {
        m.H = std::move(trial.H);
        m.V = std::move(trial.V);
        m.S = std::move(trial.S);
        m.Q = std::move(trial_q);
        absorb_scales(m);
      }
    }
    prev_H = m.H;
    prev_V = m.V;
    prev_S = m.S;

    // (c) Impute masked entries and score the completed data. After imputation
    // the completed residual equals the observed residual.
    double objective = 0.0;
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < Ks; ++k) {
      const Matrix approx = model_slice(m.Q[k], m.H, m.S.row(static_cast<Eigen::Index>(k)), m.V);
      const auto& mask = ms.slices[k].mask;
      X[k] = mask.select(ms.slices[k].data.array(), approx.array()).matrix();
      objective += (X[k] - approx).squaredNorm();
      norm_sq += X[k].squaredNorm();
    }
    const double fit = norm_sq > 0.0 ? 1.0 - std::sqrt(objective / norm_sq) : 1.0;
    m.objective_history.push_back(objective);
    m.fit_history.push_back(fit);
    m.iterations = it + 1;
    if (it > 0 && std::abs(fit - prev_fit) < opts.tol) {
      m.converged = true;
      break;
    }
    prev_fit = fit;
  }
  normalize(m);
  return m;
}

MultiSet impute_missing(const MultiSet& ms, const Parafac2Model& m) {
  ms.validate();
  if (ms.slice_count() != m.slice_count() || ms.users() != m.users()) {
    throw Error(ErrorCode::ShapeMismatch, "impute_missing: model does not match multi-set shape");
  }
  MultiSet out = ms;
  for (Eigen::Index k = 0; k < ms.slice_count(); ++k) {
    auto& s = out.slices[static_cast<std::size_t>(k)];
    if (m.Q[static_cast<std::size_t>(k)].rows() != s.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "impute_missing: slice row count differs from model");
    }
    if (s.mask.all()) continue;
    const Matrix approx = parafac2_reconstruct(m, k);
    s.data = s.mask.select(s.data.array(), approx.array()).matrix();
  }
  return out;
}

Matrix parafac2_reconstruct(const Parafac2Model& m, Eigen::Index k) {
  if (k < 0 || k >= m.slice_count()) {
    throw Error(ErrorCode::InvalidArgument, "parafac2_reconstruct: slice index " + std::to_string(k) +
                                                " out of range");
  }
  return model_slice(m.Q[static_cast<std::size_t>(k)], m.H, m.S.row(k), m.V);
}

double constraint_deviation(const Parafac2Model& m) {
  const Matrix phi = m.phi();
  const double scale = phi.norm();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < m.slice_count(); ++k) {
    const Matrix u = m.U(k);
    const double d = (u.transpose() * u - phi).norm();
    worst = std::max(worst, scale > 0.0 ? d / scale : d);
  }
  return worst;
}

double orthonormality_residual(const Parafac2Model& m) {
  double worst = 0.0;
  for (const auto& q : m.Q) {
    worst = std::max(worst, (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm());
  }
  return worst;
}

double observed_residual(const Parafac2Model& m, const MultiSet& ms) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < ms.slice_count(); ++k) {
    const auto& s = ms.slices[static_cast<std::size_t>(k)];
    const Matrix diff = s.data - parafac2_reconstruct(m, k);
    total += s.mask.select(diff.array().square(), 0.0).sum();
  }
  return total;
}

}  // namespace privsurf

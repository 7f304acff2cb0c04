#pragma once

#include <cstdint>
#include <vector>

#include "privsurf/multiset.hpp"
#include "privsurf/tensor.hpp"

namespace privsurf {

/// PARAFAC2 model of a multi-set: X_k ~ U_k diag(S_k) V^T with U_k = Q_k H.
///
/// Q_k has orthonormal columns, so U_k^T U_k = H^T H is the same for every
/// slice. V and H have unit-norm columns with their scale carried by S; the
/// largest-magnitude entry of each V column is positive; components are
/// ordered by sum_k |S(k, r)| descending.
struct Parafac2Model {
  std::vector<Matrix> Q;  // K matrices, I_k x R
  Matrix H;               // R x R
  Matrix S;               // K x R, row k is the diagonal of S_k
  Matrix V;               // J x R

  std::vector<SliceInfo> info;
  std::vector<std::string> user_ids;

  std::vector<double> fit_history;        // relative fit on completed data, per sweep
  std::vector<double> objective_history;  // completed-data squared residual, per sweep
  int iterations = 0;
  bool converged = false;

  Eigen::Index rank() const { return H.cols(); }
  Eigen::Index slice_count() const { return static_cast<Eigen::Index>(Q.size()); }
  Eigen::Index users() const { return V.rows(); }
  double fit() const { return fit_history.empty() ? 0.0 : fit_history.back(); }

  /// U_k = Q_k H.
  Matrix U(Eigen::Index k) const;
  /// H^T H.
  Matrix phi() const { return H.transpose() * H; }
};

enum class Parafac2Init { Svd, Random };

struct Parafac2Options {
  int max_iters = 500;
  double tol = 1e-8;  // on |delta relative fit| of the completed data
  Parafac2Init init = Parafac2Init::Svd;
  std::uint64_t seed = 0;
  int jobs = 1;  // threads for the per-slice Q_k updates
  bool extrapolate = true;  // accelerated sweeps; false gives plain ALS
};

/// Alternating least squares for PARAFAC2 with iterative imputation of
/// masked entries after every sweep. Returns the final model; if max_iters
/// is reached first, `converged` is false.
Parafac2Model parafac2_als(const MultiSet& ms, Eigen::Index rank, const Parafac2Options& opts = {});

/// Replaces masked entries with the model reconstruction. Observed entries and
/// masks are left as they are.
MultiSet impute_missing(const MultiSet& ms, const Parafac2Model& m);

/// Q_k H diag(S_k) V^T.
Matrix parafac2_reconstruct(const Parafac2Model& m, Eigen::Index k);

/// max_k ||U_k^T U_k - H^T H||_F / ||H^T H||_F.
double constraint_deviation(const Parafac2Model& m);

/// max_k ||Q_k^T Q_k - I||_F.
double orthonormality_residual(const Parafac2Model& m);

/// Sum over slices of squared residuals at observed entries.
double observed_residual(const Parafac2Model& m, const MultiSet& ms);

/// Sign, scale and ordering rules described on Parafac2Model.
void normalize(Parafac2Model& m);

}  // namespace privsurf

#pragma once

#include <cstdint>
#include <vector>

#include "privsurf/tensor.hpp"

namespace privsurf {

/// Rank-R CP model of an I x J x K tensor:
///   t(i,j,k) ~ sum_r lambda[r] * U(i,r) * V(j,r) * W(k,r)
///
/// After cp_als every factor column has unit norm, lambda is non-negative and
/// non-increasing, and the largest-magnitude entries of each U and V column
/// are positive (signs are carried by W).
struct CpModel {
  Matrix U;
  Matrix V;
  Matrix W;
  Vector lambda;

  Eigen::Index rank() const { return lambda.size(); }
  Dims3 dims() const { return {U.rows(), V.rows(), W.rows()}; }
};

enum class CpInit { Svd, Random };

struct CpOptions {
  int max_iters = 500;
  double tol = 1e-8;  // on |delta fit|
  CpInit init = CpInit::Svd;
  std::uint64_t seed = 0;
};

struct CpResult {
  CpModel model;
  double fit = 0.0;
  int iterations = 0;
  bool converged = false;
  bool random_init = false;          // SVD init was requested but not possible
  std::vector<double> error_history; // squared residual after each sweep
};

CpResult cp_als(const DenseTensor3& t, Eigen::Index rank, const CpOptions& opts = {});

DenseTensor3 cp_reconstruct(const CpModel& m);

/// 1 - ||t - reconstruct(m)|| / ||t||. Throws ZeroNorm for a zero tensor.
double cp_fit(const CpModel& m, const DenseTensor3& t);

struct CoreConsistency {
  double value = 0.0;        // <= 100
  bool rank_deficient = false;  // a factor lacked full column rank; pseudo-inverse used
};

/// Core consistency diagnostic. The least-squares Tucker core G of t given the
/// (unit-column) factors is compared against the superdiagonal core holding
/// lambda: 100 * (1 - ||G - diag3(lambda)||^2 / ||lambda||^2).
CoreConsistency core_consistency(const CpModel& m, const DenseTensor3& t);

/// Rescales columns to unit norm, applies the sign rules, and orders components
/// by lambda (ties: lexicographic on U columns).
void normalize(CpModel& m);

}  // namespace privsurf

// Planted-model generators and alignment helpers shared by the test suites.
// Everything here is built from first principles so it stays independent of
// the solver code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "privsurf/cp.hpp"
#include "privsurf/parafac2.hpp"

namespace privsurf::testing {

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                             double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Matrix random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_normal(rows, cols, rng));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Brute-force triple loop: sum_r lambda_r U(i,r) V(j,r) W(k,r).
inline DenseTensor3 outer_product_sum(const Matrix& U, const Matrix& V, const Matrix& W,
                                      const Vector& lambda) {
  DenseTensor3 t(U.rows(), V.rows(), W.rows());
  for (Eigen::Index k = 0; k < W.rows(); ++k)
    for (Eigen::Index j = 0; j < V.rows(); ++j)
      for (Eigen::Index i = 0; i < U.rows(); ++i) {
        double acc = 0.0;
        for (Eigen::Index r = 0; r < U.cols(); ++r) acc += lambda(r) * U(i, r) * V(j, r) * W(k, r);
        t(i, j, k) = acc;
      }
  return t;
}

struct PlantedCp {
  Matrix U, V, W;
  DenseTensor3 tensor;
};

inline PlantedCp planted_cp(Dims3 dims, Eigen::Index rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PlantedCp p;
  p.U = random_normal(dims[0], rank, rng);
  p.V = random_normal(dims[1], rank, rng);
  p.W = random_normal(dims[2], rank, rng);
  p.tensor = outer_product_sum(p.U, p.V, p.W, Vector::Ones(rank));
  return p;
}

struct PlantedParafac2 {
  MultiSet data;            // possibly masked / noisy
  std::vector<Matrix> clean;  // noiseless, fully observed slices
  std::vector<Matrix> Q;
  Matrix H, S, V;
  std::vector<int> labels;  // planted cluster of each user (cluster layout only)
};

struct PlantedParafac2Spec {
  std::vector<Eigen::Index> rows;  // I_k per slice
  Eigen::Index users = 48;
  Eigen::Index rank = 4;
  bool clustered = false;   // V = cluster indicators + small jitter
  double jitter = 0.1;
  std::uint64_t seed = 0;
};

/// X_k = Q_k H diag(S_k) V^T with random orthonormal Q_k and H, and positive
/// scales S.
inline PlantedParafac2 planted_parafac2(const PlantedParafac2Spec& spec) {
  std::mt19937_64 rng(spec.seed);
  PlantedParafac2 p;
  const Eigen::Index K = static_cast<Eigen::Index>(spec.rows.size());
  const Eigen::Index R = spec.rank;
  p.H = random_orthonormal(R, R, rng);
  p.S = random_uniform(K, R, rng, 0.5, 2.0);
  if (spec.clustered) {
    p.V = random_uniform(spec.users, R, rng, 0.0, spec.jitter);
    for (Eigen::Index j = 0; j < spec.users; ++j) {
      const int c = static_cast<int>(j % R);
      p.labels.push_back(c);
      p.V(j, c) += 1.0;
    }
  } else {
    p.V = random_normal(spec.users, R, rng);
  }
  std::vector<Matrix> slices;
  for (Eigen::Index k = 0; k < K; ++k) {
    p.Q.push_back(random_orthonormal(spec.rows[static_cast<std::size_t>(k)], R, rng));
    p.clean.push_back(p.Q.back() * p.H * p.S.row(k).asDiagonal() * p.V.transpose());
    slices.push_back(p.clean.back());
  }
  p.data = make_multiset(std::move(slices));
  return p;
}

/// Masks each entry independently with the given probability, keeping at
/// least one observed entry per user column in every slice.
inline void mask_at_random(MultiSet& ms, double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(fraction);
  for (auto& s : ms.slices) {
    Mask mask = Mask::Constant(s.rows(), s.cols(), true);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = !drop(rng);
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (!mask.col(j).any()) mask(0, j) = true;
    }
    s = MaskedMatrix(s.data, mask);
  }
}

/// Adds i.i.d. Gaussian noise at the given signal-to-noise ratio in dB
/// (ratio of total signal power to total noise power).
inline void add_noise_db(MultiSet& ms, double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double signal = 0.0;
  Eigen::Index count = 0;
  for (const auto& s : ms.slices) {
    signal += s.data.squaredNorm();
    count += s.data.size();
  }
  const double noise_power = signal / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(noise_power / static_cast<double>(count));
  for (auto& s : ms.slices) {
    s.data += sigma * random_normal(s.rows(), s.cols(), rng);
    s.data = s.mask.select(s.data.array(), 0.0).matrix();
  }
}

inline double congruence(const Vector& a, const Vector& b) {
  const double d = a.norm() * b.norm();
  return d > 0.0 ? std::abs(a.dot(b)) / d : 0.0;
}

/// Greedy column matching by absolute congruence. Returns, for each column of
/// `truth`, the congruence of its matched column in `estimate`.
inline std::vector<double> matched_congruence(const Matrix& truth, const Matrix& estimate) {
  const Eigen::Index R = truth.cols();
  Matrix c(R, estimate.cols());
  for (Eigen::Index a = 0; a < R; ++a)
    for (Eigen::Index b = 0; b < estimate.cols(); ++b) c(a, b) = congruence(truth.col(a), estimate.col(b));
  std::vector<double> out(static_cast<std::size_t>(R), 0.0);
  std::vector<bool> row_used(static_cast<std::size_t>(R), false), col_used(static_cast<std::size_t>(estimate.cols()), false);
  for (Eigen::Index step = 0; step < std::min(R, estimate.cols()); ++step) {
    double best = -1.0;
    Eigen::Index ba = 0, bb = 0;
    for (Eigen::Index a = 0; a < R; ++a) {
      if (row_used[static_cast<std::size_t>(a)]) continue;
      for (Eigen::Index b = 0; b < estimate.cols(); ++b) {
        if (col_used[static_cast<std::size_t>(b)]) continue;
        if (c(a, b) > best) { best = c(a, b); ba = a; bb = b; }
      }
    }
    row_used[static_cast<std::size_t>(ba)] = true;
    col_used[static_cast<std::size_t>(bb)] = true;
    out[static_cast<std::size_t>(ba)] = best;
  }
  return out;
}

inline double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace privsurf::testing

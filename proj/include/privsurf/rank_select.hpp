#pragma once

#include <string>
#include <vector>

#include "privsurf/cp.hpp"
#include "privsurf/parafac2.hpp"

namespace privsurf {

struct RankCandidate {
  Eigen::Index rank = 0;
  double core_consistency = 0.0;
  bool rank_deficient = false;  // a CP factor of the compressed tensor lacked full rank
  double parafac2_fit = 0.0;
  double cp_fit = 0.0;          // fit of the CP model to the compressed tensor
  bool qualifies = false;       // core_consistency >= threshold and full-rank factors
};

struct RankSweepResult {
  std::vector<RankCandidate> candidates;  // ascending rank
  Eigen::Index chosen_rank = 0;
  double threshold = 50.0;
  std::vector<std::string> trace;  // human-readable selection steps
};

struct RankSweepOptions {
  double threshold = 50.0;
  Parafac2Options parafac2{.max_iters = 100};
  CpOptions cp{};
  int jobs = 1;  // candidates evaluated concurrently
};

/// R x J x K tensor whose frontal slice k is Q_k^T X_k, with masked entries
/// of X_k replaced by the model reconstruction.
DenseTensor3 compressed_tensor(const Parafac2Model& m, const MultiSet& ms);

/// Fits PARAFAC2 at every rank in [r_min, r_max], runs CP on the compressed
/// tensor at the same rank and scores it with core consistency. The chosen
/// rank is the largest one scoring at least the threshold with full-rank CP
/// factors, or the best-scoring rank when none does.
///
/// r_max is also bounded by K, since the compressed tensor has K frontal slices.
RankSweepResult auto_rank(const MultiSet& ms, Eigen::Index r_min, Eigen::Index r_max,
                          const RankSweepOptions& opts = {});

}  // namespace privsurf

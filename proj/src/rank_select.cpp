#include "privsurf/rank_select.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "privsurf/parallel.hpp"

namespace privsurf {

DenseTensor3 compressed_tensor(const Parafac2Model& m, const MultiSet& ms) {
  if (ms.slice_count() != m.slice_count() || ms.users() != m.users()) {
    throw Error(ErrorCode::ShapeMismatch, "compressed_tensor: model does not match multi-set shape");
  }
  const MultiSet completed = impute_missing(ms, m);
  DenseTensor3 out(m.rank(), m.users(), m.slice_count());
  for (Eigen::Index k = 0; k < m.slice_count(); ++k) {
    out.slice(k) = m.Q[static_cast<std::size_t>(k)].transpose() * completed.slices[static_cast<std::size_t>(k)].data;
  }
  return out;
}

RankSweepResult auto_rank(const MultiSet& ms, Eigen::Index r_min, Eigen::Index r_max,
                          const RankSweepOptions& opts) {
  if (r_min < 1 || r_max < r_min) {
    throw Error(ErrorCode::InvalidArgument, "auto_rank: empty rank range [" + std::to_string(r_min) + ", " +
                                                std::to_string(r_max) + "]");
  }
  ms.validate();
  const Eigen::Index limit = std::min({ms.users(), ms.min_rows(), ms.slice_count()});
  if (r_max > limit) {
    throw Error(ErrorCode::RankOutOfRange, "auto_rank: r_max " + std::to_string(r_max) +
                                               " exceeds min(J, min_k I_k, K) = " + std::to_string(limit));
  }

  RankSweepResult result;
  result.threshold = opts.threshold;
  const auto n = static_cast<std::size_t>(r_max - r_min + 1);
  result.candidates.resize(n);
  parallel_for(n, opts.jobs, [&](std::size_t i) {
    RankCandidate& c = result.candidates[i];
    c.rank = r_min + static_cast<Eigen::Index>(i);
    const Parafac2Model model = parafac2_als(ms, c.rank, opts.parafac2);
    c.parafac2_fit = model.fit();
    const DenseTensor3 y = compressed_tensor(model, ms);
    const CpResult cp = cp_als(y, c.rank, opts.cp);
    c.cp_fit = cp.fit;
    if (cp.model.lambda.squaredNorm() > 0.0) {
      const CoreConsistency cc = core_consistency(cp.model, y);
      c.core_consistency = cc.value;
      c.rank_deficient = cc.rank_deficient;
    }
    // A score computed through a pseudo-inverse of rank-deficient factors does
    // not certify the extra components, so such candidates never qualify.
    c.qualifies = c.core_consistency >= opts.threshold && !c.rank_deficient;
  });

  char line[160];
  for (const auto& c : result.candidates) {
    std::snprintf(line, sizeof line, "R=%ld core_consistency=%.4f fit=%.6f %s%s", static_cast<long>(c.rank),
                  c.core_consistency, c.parafac2_fit, c.qualifies ? "qualifies" : "below threshold",
                  c.rank_deficient ? " (rank-deficient factors)" : "");
    result.trace.emplace_back(line);
  }
  const auto largest = std::find_if(result.candidates.rbegin(), result.candidates.rend(),
                                    [](const RankCandidate& c) { return c.qualifies; });
  if (largest != result.candidates.rend()) {
    result.chosen_rank = largest->rank;
    result.trace.push_back("chose largest qualifying rank " + std::to_string(result.chosen_rank));
  } else {
    // Ties resolve toward the larger rank.
    auto best = result.candidates.begin();
    for (auto it = result.candidates.begin(); it != result.candidates.end(); ++it) {
      if (it->core_consistency >= best->core_consistency) best = it;
    }
    result.chosen_rank = best->rank;
    result.trace.push_back("no rank qualifies; chose best-scoring rank " + std::to_string(result.chosen_rank));
  }
  return result;
}

}  // namespace privsurf

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "privsurf/granularity.hpp"
#include "privsurf/tensor.hpp"

namespace privsurf {

/// Per-slice metadata: which feature the slice holds and its time grid.
struct SliceInfo {
  std::string name;
  Granularity granularity = Granularity::Hour1;
  std::int64_t start = 0;  // UTC epoch seconds of the first bin

  bool operator==(const SliceInfo&) const = default;
};

/// K masked slices sharing the user mode: slice k is I_k x J (time bins x users).
struct MultiSet {
  std::vector<MaskedMatrix> slices;
  std::vector<SliceInfo> info;          // parallel to slices
  std::vector<std::string> user_ids;    // size J, or empty for anonymous data

  Eigen::Index slice_count() const { return static_cast<Eigen::Index>(slices.size()); }
  Eigen::Index users() const { return slices.empty() ? 0 : slices.front().cols(); }
  Eigen::Index min_rows() const;
  double observed_fraction() const;
  std::vector<double> observed_fractions() const;

  /// Checks the shared-column invariant and metadata sizes; throws ShapeMismatch.
  void validate() const;
};

/// Divides every slice by the Frobenius norm of its observed entries so each
/// feature carries equal weight regardless of bin count. Returns the divisors
/// (1 for all-zero slices).
std::vector<double> scale_slices_to_unit_norm(MultiSet& ms);

/// Fully observed multi-set with default metadata (names "slice_<k>").
MultiSet make_multiset(std::vector<Matrix> slices);

}  // namespace privsurf

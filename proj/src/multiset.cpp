#include "privsurf/multiset.hpp"

#include <algorithm>
#include <limits>

namespace privsurf {

std::string_view to_token(Granularity g) {
  switch (g) {
    case Granularity::Minute1: return "1m";
    case Granularity::Minute15: return "15m";
    case Granularity::Minute30: return "30m";
    case Granularity::Hour1: return "1h";
    case Granularity::Day1: return "1d";
  }
  return "?";
}

Granularity parse_granularity(std::string_view token) {
  for (Granularity g : kAllGranularities) {
    if (to_token(g) == token) return g;
  }
  throw Error(ErrorCode::Parse, "unknown granularity token '" + std::string(token) +
                                    "' (expected 1m|15m|30m|1h|1d)");
}

Eigen::Index MultiSet::min_rows() const {
  Eigen::Index m = std::numeric_limits<Eigen::Index>::max();
  for (const auto& s : slices) m = std::min(m, s.rows());
  return slices.empty() ? 0 : m;
}

double MultiSet::observed_fraction() const {
  double observed = 0.0;
  double total = 0.0;
  for (const auto& s : slices) {
    observed += static_cast<double>(s.observed_count());
    total += static_cast<double>(s.mask.size());
  }
  return total > 0.0 ? observed / total : 0.0;
}

std::vector<double> MultiSet::observed_fractions() const {
  std::vector<double> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(s.observed_fraction());
  return out;
}

void MultiSet::validate() const {
  if (slices.empty()) throw Error(ErrorCode::EmptyInput, "multi-set has no slices");
  const Eigen::Index J = users();
  for (const auto& s : slices) {
    if (s.cols() != J) throw Error(ErrorCode::ShapeMismatch, "multi-set slices differ in user count");
    if (s.rows() < 1) throw Error(ErrorCode::ShapeMismatch, "multi-set slice has no rows");
    if (s.mask.rows() != s.rows() || s.mask.cols() != s.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "multi-set slice mask shape differs from data");
    }
  }
  if (info.size() != slices.size()) {
    throw Error(ErrorCode::ShapeMismatch, "multi-set metadata count differs from slice count");
  }
  if (!user_ids.empty() && static_cast<Eigen::Index>(user_ids.size()) != J) {
    throw Error(ErrorCode::ShapeMismatch, "multi-set roster size differs from user count");
  }
}

MultiSet make_multiset(std::vector<Matrix> slices) {
  MultiSet ms;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    ms.slices.emplace_back(std::move(slices[k]));
    ms.info.push_back({"slice_" + std::to_string(k), Granularity::Hour1, 0});
  }
  return ms;
}

std::vector<double> scale_slices_to_unit_norm(MultiSet& ms) {
  std::vector<double> scales;
  scales.reserve(ms.slices.size());
  for (auto& s : ms.slices) {
    const double n = s.data.norm();
    scales.push_back(n > 0.0 ? n : 1.0);
    if (n > 0.0) s.data /= n;
  }
  return scales;
}

}  // namespace privsurf

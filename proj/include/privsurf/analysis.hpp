#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "privsurf/parafac2.hpp"

namespace privsurf {

struct Membership {
  Eigen::Index cluster = 0;
  double weight = 0.0;    // |V(j, cluster)|
  bool negative = false;  // the signed loading was negative
};

struct ClusterAssignment {
  std::vector<std::string> user_ids;              // may be empty for anonymous models
  std::vector<std::vector<Membership>> per_user;  // J lists of length top_k
  Eigen::Index clusters = 0;                      // R

  /// First-ranked cluster per user.
  std::vector<int> top1() const;
};

/// Ranks clusters for each user by |V(j, r)| descending; equal weights go to
/// the lower cluster index. Throws InvalidArgument unless 1 <= top_k <= R.
ClusterAssignment assign_clusters(const Parafac2Model& m, Eigen::Index top_k);

struct FeatureWeight {
  std::string name;
  Eigen::Index slice = 0;
  double weight = 0.0;  // |S(k, r)|
};

/// For each cluster r, slices ranked by |S(k, r)| descending (ties: lower k).
std::vector<std::vector<FeatureWeight>> feature_importance(const Parafac2Model& m);

struct TemporalSignature {
  std::string feature;
  Eigen::Index slice = 0;
  Eigen::Index component = 0;
  std::int64_t bin_seconds = 0;
  std::vector<std::int64_t> timestamps;  // UTC start of each bin
  Vector values;                         // column r of Q_k H
};

TemporalSignature temporal_signature(const Parafac2Model& m, Eigen::Index k, Eigen::Index r);

/// Per-user psychometric measures.
struct ScoreTable {
  std::map<std::string, std::map<std::string, double>> by_user;

  bool has_measure(const std::string& measure) const;
  std::vector<std::string> measures() const;  // sorted union over users
};

/// Reads CSV `user_id,measure,value`. Afterwards, for every measure "<x>_post"
/// present for some user, users lacking it but having "<x>_pre" get the pre
/// value. Rows that do not parse throw Error(Parse) with the line number.
ScoreTable load_scores(std::istream& in);

struct ClusterStats {
  Eigen::Index cluster = 0;
  std::vector<std::string> members;  // scored members used, by weight
  double variance = 0.0;             // sample variance (n - 1)
  double iqr = 0.0;
  bool skipped = false;              // fewer than 2 scored members
};

struct HomogeneityReport {
  std::string measure;
  Eigen::Index top_n = 10;
  std::vector<ClusterStats> clusters;
  double mean_variance = 0.0;  // over non-skipped clusters
  double mean_iqr = 0.0;
  double baseline_mean_variance = 0.0;
  double baseline_mean_iqr = 0.0;
  int baseline_trials = 0;
  Eigen::Index baseline_sample_size = 0;
};

struct HomogeneityOptions {
  Eigen::Index top_n = 10;
  int baseline_trials = 1000;
  std::uint64_t seed = 0;
};

/// Members of cluster r are the users whose assignment list contains r,
/// ranked by weight (ties: roster order); the first top_n that have a score
/// are used. The baseline draws top_n scored users uniformly without
/// replacement per trial.
HomogeneityReport cluster_homogeneity(const ClusterAssignment& assign, const ScoreTable& scores,
                                      const std::string& measure, const HomogeneityOptions& opts = {});

/// Sample variance with n - 1 in the denominator.
double sample_variance(const std::vector<double>& x);
/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> x, double q);
double interquartile_range(const std::vector<double>& x);

struct Correlation {
  double r = 0.0;
  double p = 1.0;  // two-sided, t distribution with n - 2 degrees of freedom
  Eigen::Index n = 0;
};

/// Pearson correlation. Throws ShapeMismatch for unequal lengths,
/// InvalidArgument for n < 3 and ZeroNorm for a constant series.
Correlation correlate_with_events(const Vector& signature, const Vector& events);

/// user -> date (YYYY-MM-DD) -> count.
struct EventSeries {
  std::map<std::string, std::map<std::string, double>> by_user;
};

/// Reads CSV `user_id,date,count`.
EventSeries load_event_series(std::istream& in);

/// Sums the counts of `members` into the bins of `sig`. A date maps to its
/// local midnight (given the study's UTC offset); dates outside the grid are
/// dropped.
Vector resample_events(const EventSeries& series, const std::vector<std::string>& members,
                       const TemporalSignature& sig, int utc_offset_minutes);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace privsurf

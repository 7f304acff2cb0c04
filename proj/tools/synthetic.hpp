#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace privsurf::synth {

/// Synthetic phone-sensing cohort: users fall into behavioural clusters that
/// differ in sleep schedule, mobility, sociability and phone use, plus a
/// cluster-specific day-to-day rhythm. Each user has device-off gaps of whole
/// hours covering `off_min`..`off_max` of the study.
struct CohortSpec {
  int users = 48;
  int days = 66;
  int clusters = 4;
  std::string start_date = "2013-03-27";
  int utc_offset_minutes = -240;
  double off_min = 0.05;
  double off_max = 0.18;
  std::uint64_t seed = 1;
};

struct CohortTruth {
  std::vector<std::string> user_ids;
  std::vector<int> labels;            // cluster per user
  std::vector<double> off_fraction;   // device-off share of hours per user
  std::vector<double> deadlines;      // shared calendar, per day
  std::int64_t window_start = 0;
};

using EventSink = std::function<void(const std::string& user, std::string_view sensor, std::int64_t t,
                                     const std::string& payload)>;

/// Emits every event through `sink` in user order, then time order within
/// sensor. Deterministic for a given spec.
CohortTruth generate_cohort(const CohortSpec& spec, const EventSink& sink);

/// Writes events.csv, scores.csv, deadlines.csv, config.json and truth.json
/// into `dir` (config-3-like surface: every feature at 1-hour or 1-day).
CohortTruth write_cohort(const CohortSpec& spec, const std::filesystem::path& dir);

}  // namespace privsurf::synth

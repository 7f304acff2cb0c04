#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privsurf/events.hpp"
#include "privsurf/granularity.hpp"
#include "privsurf/multiset.hpp"

namespace privsurf {

enum class FeatureKind : std::uint8_t { DurationMinutes, EventCount, UniqueCount, ChangeCount };

std::string_view to_string(FeatureKind k);

/// How one feature is derived from one sensor. `label` selects the activity or
/// audio class for labelled duration features and is empty otherwise.
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::EventCount;
  Sensor sensor = Sensor::Call;
  std::string label;

  bool operator==(const FeatureSpec&) const = default;
};

/// The 18 default features: activity stationary/walking/running/unknown
/// minutes and activity changes; audio silence/voice/noise/unknown minutes;
/// conversation, dark, phone charge and phone lock minutes; unique GPS
/// locations, WiFi access points and Bluetooth devices; call and SMS counts.
const std::vector<FeatureSpec>& default_features();
std::optional<FeatureSpec> find_feature(std::string_view name);

/// Half-open UTC interval [start, end). Bins are anchored at `start`.
struct StudyWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start; }
  /// Local midnight of `date` (YYYY-MM-DD) at a fixed UTC offset, converted to
  /// UTC once, followed by `days` whole days.
  static StudyWindow from_local_date(std::string_view date, int utc_offset_minutes, int days);
  /// Number of bins; throws InvalidArgument when the length is not a whole
  /// number of bins.
  Eigen::Index bins(Granularity g) const;

  bool operator==(const StudyWindow&) const = default;
};

struct SurfaceEntry {
  FeatureSpec feature;
  Granularity granularity = Granularity::Hour1;

  bool operator==(const SurfaceEntry&) const = default;
};

struct PrivacySurfaceConfig {
  std::vector<SurfaceEntry> entries;
  StudyWindow window;
  std::vector<std::string> roster;

  /// Unique feature names, non-empty entries, window of at least one day.
  /// Throws Error(Config).
  void validate() const;
};

/// Unnormalized per-bin values: overlap seconds for duration kinds, counts
/// for the others. Masked bins hold 0.
struct RawFeature {
  Matrix values;  // bins x users
  Mask observed;
};

/// Bins in which the user has at least one event of any sensor. Interval
/// events mark every bin they overlap; point events mark the bin holding them.
Mask presence(const EventStore& store, const std::vector<std::string>& roster, Granularity g,
              const StudyWindow& window);

RawFeature aggregate_raw(const EventStore& store, const FeatureSpec& spec, Granularity g,
                         const StudyWindow& window, const std::vector<std::string>& roster);

/// Duration kinds become seconds / bin length clipped to [0, 1]; count kinds
/// become log(1 + count).
MaskedMatrix normalize_feature(const RawFeature& raw, FeatureKind kind, Granularity g);

MaskedMatrix aggregate_feature(const EventStore& store, const FeatureSpec& spec, Granularity g,
                               const StudyWindow& window, const std::vector<std::string>& roster);

/// One slice per config entry, columns in roster order.
MultiSet build_surface(const EventStore& store, const PrivacySurfaceConfig& cfg, int jobs = 1);

struct IntrusivenessSummary {
  std::vector<std::pair<std::string, int>> levels;  // per entry, 1 = 1-day ... 5 = 1-minute
  int min = 0;
  double median = 0.0;  // midpoint of the two middle levels for even counts
  int max = 0;
};

IntrusivenessSummary intrusiveness_rank(const PrivacySurfaceConfig& cfg);

}  // namespace privsurf

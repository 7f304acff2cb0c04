#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace privsurf {

/// The eleven phone sensors an event can come from.
enum class Sensor : std::uint8_t {
  Activity,
  Audio,
  Gps,
  Wifi,
  Bluetooth,
  Call,
  Sms,
  Conversation,
  Dark,
  PhoneCharge,
  PhoneLock,
};

inline constexpr std::size_t kSensorCount = 11;

std::string_view to_string(Sensor s);
std::optional<Sensor> parse_sensor(std::string_view name);

/// One parsed record. `duration` is in seconds and is zero for point events
/// (GPS fixes, scans, calls, SMS). `value` holds the activity/audio label, the
/// network or device id, or the rounded "lat;lon" key; it is empty for the
/// pure duration sensors.
struct SensorEvent {
  std::string user_id;
  Sensor sensor = Sensor::Activity;
  std::int64_t timestamp = 0;  // UTC epoch seconds
  std::int64_t duration = 0;
  std::string value;

  std::int64_t end() const { return timestamp + duration; }
};

/// Parses a payload for the given sensor. Conventions:
///   activity, audio        "label" (one 60 s sample) or "label;seconds"
///   conversation, dark,
///   phonecharge, phonelock "seconds"
///   gps                    "lat;lon" (rounded to 4 decimals for identity)
///   wifi, bluetooth        identifier string
///   call, sms              anything (ignored)
/// Returns false when the payload is malformed.
bool parse_payload(Sensor sensor, std::string_view payload, SensorEvent& out);

inline constexpr std::int64_t kDefaultSampleSeconds = 60;

struct IngestReport {
  std::int64_t rows = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::array<std::int64_t, kSensorCount> per_sensor{};
  std::vector<std::string> sources;
  std::int64_t first_timestamp = 0;
  std::int64_t last_timestamp = 0;
};

/// Events indexed by user, then sensor, sorted by (timestamp, duration, value).
/// Read-only once ingest has finished.
class EventStore {
 public:
  using SensorEvents = std::array<std::vector<SensorEvent>, kSensorCount>;

  void add(SensorEvent e);
  /// Sorts every per-sensor list; called once after the last add().
  void finalize();

  const SensorEvents* find(const std::string& user) const;
  std::vector<std::string> users() const;  // sorted
  std::int64_t size() const { return size_; }

  const IngestReport& report() const { return report_; }
  IngestReport& report() { return report_; }

 private:
  std::map<std::string, SensorEvents> by_user_;
  std::int64_t size_ = 0;
  IngestReport report_;
};

/// Reads CSV records with header `user_id,sensor,timestamp,payload`. Malformed
/// rows are counted in the report and skipped. Throws Error(Io) when the
/// source cannot be read and Error(EmptyInput) when no row is valid.
EventStore ingest_events(std::istream& in, const std::string& source_name = "<stream>");

/// Accepts a CSV file or a directory; directories contribute every *.csv file
/// in lexicographic path order.
EventStore ingest_events(const std::filesystem::path& path);

}  // namespace privsurf

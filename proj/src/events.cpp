#include "privsurf/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <tuple>

#include "privsurf/csv.hpp"
#include "privsurf/error.hpp"

namespace privsurf {

namespace {

constexpr std::array<std::string_view, kSensorCount> kSensorNames = {
    "activity", "audio", "gps", "wifi", "bluetooth", "call", "sms",
    "conversation", "dark", "phonecharge", "phonelock"};

constexpr std::array<std::string_view, 4> kActivityLabels = {"stationary", "walking", "running", "unknown"};
constexpr std::array<std::string_view, 4> kAudioLabels = {"silence", "voice", "noise", "unknown"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

bool parse_labelled(std::string_view payload, bool audio, SensorEvent& out) {
  std::string_view label = payload;
  out.duration = kDefaultSampleSeconds;
  if (const auto semi = payload.find(';'); semi != std::string_view::npos) {
    label = payload.substr(0, semi);
    const auto secs = csv::to_int(payload.substr(semi + 1));
    if (!secs || *secs <= 0) return false;
    out.duration = *secs;
  }
  label = csv::trim(label);
  if (audio ? !contains(kAudioLabels, label) : !contains(kActivityLabels, label)) return false;
  out.value = std::string(label);
  return true;
}

std::string rounded_location(double lat, double lon) {
  char buf[64];
  // +0.0 folds negative zero so that -0.00001 and 0.00001 share a key.
  std::snprintf(buf, sizeof buf, "%.4f;%.4f", std::round(lat * 1e4) / 1e4 + 0.0,
                std::round(lon * 1e4) / 1e4 + 0.0);
  return buf;
}

}  // namespace

std::string_view to_string(Sensor s) { return kSensorNames[static_cast<std::size_t>(s)]; }

std::optional<Sensor> parse_sensor(std::string_view name) {
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    if (kSensorNames[i] == name) return static_cast<Sensor>(i);
  }
  return std::nullopt;
}

bool parse_payload(Sensor sensor, std::string_view payload, SensorEvent& out) {
  payload = csv::trim(payload);
  out.duration = 0;
  out.value.clear();
  switch (sensor) {
    case Sensor::Activity: return parse_labelled(payload, false, out);
    case Sensor::Audio: return parse_labelled(payload, true, out);
    case Sensor::Conversation:
    case Sensor::Dark:
    case Sensor::PhoneCharge:
    case Sensor::PhoneLock: {
      const auto secs = csv::to_int(payload);
      if (!secs || *secs < 0) return false;
      out.duration = *secs;
      return true;
    }
    case Sensor::Gps: {
      const auto semi = payload.find(';');
      if (semi == std::string_view::npos) return false;
      const auto lat = csv::to_double(payload.substr(0, semi));
      const auto lon = csv::to_double(payload.substr(semi + 1));
      if (!lat || !lon || std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0) return false;
      out.value = rounded_location(*lat, *lon);
      return true;
    }
    case Sensor::Wifi:
    case Sensor::Bluetooth:
      if (payload.empty()) return false;
      out.value = std::string(payload);
      return true;
    case Sensor::Call:
    case Sensor::Sms: return true;
  }
  return false;
}

void EventStore::add(SensorEvent e) {
  auto& slot = by_user_[e.user_id][static_cast<std::size_t>(e.sensor)];
  if (size_ == 0) {
    report_.first_timestamp = e.timestamp;
    report_.last_timestamp = e.timestamp;
  } else {
    report_.first_timestamp = std::min(report_.first_timestamp, e.timestamp);
    report_.last_timestamp = std::max(report_.last_timestamp, e.timestamp);
  }
  ++report_.per_sensor[static_cast<std::size_t>(e.sensor)];
  slot.push_back(std::move(e));
  ++size_;
}

void EventStore::finalize() {
  for (auto& [user, sensors] : by_user_) {
    for (auto& list : sensors) {
      std::sort(list.begin(), list.end(), [](const SensorEvent& a, const SensorEvent& b) {
        return std::tie(a.timestamp, a.duration, a.value) < std::tie(b.timestamp, b.duration, b.value);
      });
    }
  }
}

const EventStore::SensorEvents* EventStore::find(const std::string& user) const {
  const auto it = by_user_.find(user);
  return it == by_user_.end() ? nullptr : &it->second;
}

std::vector<std::string> EventStore::users() const {
  std::vector<std::string> out;
  out.reserve(by_user_.size());
  for (const auto& [user, _] : by_user_) out.push_back(user);
  return out;
}

namespace {

void ingest_into(EventStore& store, std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) return;  // empty source contributes nothing
  std::string_view header = line;
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  const auto cols = csv::split(header);
  if (cols.size() != 4 || csv::trim(cols[0]) != "user_id" || csv::trim(cols[1]) != "sensor" ||
      csv::trim(cols[2]) != "timestamp" || csv::trim(cols[3]) != "payload") {
    throw Error(ErrorCode::Parse, source + ": expected header user_id,sensor,timestamp,payload");
  }
  auto& report = store.report();
  report.sources.push_back(source);
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    ++report.rows;
    const auto f = csv::split(line);
    SensorEvent e;
    bool ok = f.size() == 4;
    if (ok) {
      e.user_id = std::string(csv::trim(f[0]));
      const auto sensor = parse_sensor(csv::trim(f[1]));
      const auto ts = csv::to_int(f[2]);
      ok = !e.user_id.empty() && sensor && ts && *ts >= 0;
      if (ok) {
        e.sensor = *sensor;
        e.timestamp = *ts;
        ok = parse_payload(e.sensor, f[3], e);
      }
    }
    if (!ok) {
      ++report.rejected;
      continue;
    }
    ++report.accepted;
    store.add(std::move(e));
  }
  if (in.bad()) throw Error(ErrorCode::Io, source + ": read failure");
}

void require_events(const EventStore& store) {
  if (store.size() == 0) throw Error(ErrorCode::EmptyInput, "ingest: no valid events");
}

}  // namespace

EventStore ingest_events(std::istream& in, const std::string& source_name) {
  if (!in) throw Error(ErrorCode::Io, source_name + ": unreadable source");
  EventStore store;
  ingest_into(store, in, source_name);
  require_events(store);
  store.finalize();
  return store;
}

EventStore ingest_events(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path, ec)) {
    files.push_back(path);
  } else {
    throw Error(ErrorCode::Io, path.string() + ": no such file or directory");
  }
  EventStore store;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::Io, file.string() + ": cannot open");
    ingest_into(store, in, file.string());
  }
  require_events(store);
  store.finalize();
  return store;
}

}  // namespace privsurf

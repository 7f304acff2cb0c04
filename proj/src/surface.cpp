#include "privsurf/surface.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <unordered_set>

#include "privsurf/csv.hpp"
#include "privsurf/parallel.hpp"

namespace privsurf {

namespace {

constexpr std::int64_t kDay = 86400;

// Floor division for possibly negative offsets.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

struct BinGrid {
  std::int64_t start = 0;
  std::int64_t width = 0;
  Eigen::Index count = 0;

  // Bin holding instant t, or -1 outside the window.
  Eigen::Index bin_of(std::int64_t t) const {
    const std::int64_t b = floor_div(t - start, width);
    return (b >= 0 && b < count) ? static_cast<Eigen::Index>(b) : -1;
  }

  // Calls fn(bin, overlap_seconds) for every bin overlapping [a, b), b > a.
  template <typename Fn>
  void for_overlap(std::int64_t a, std::int64_t b, Fn&& fn) const {
    const std::int64_t lo = std::max<std::int64_t>(floor_div(a - start, width), 0);
    const std::int64_t hi = std::min<std::int64_t>(floor_div(b - 1 - start, width), count - 1);
    for (std::int64_t bin = lo; bin <= hi; ++bin) {
      const std::int64_t s = start + bin * width;
      const std::int64_t overlap = std::min(b, s + width) - std::max(a, s);
      if (overlap > 0) fn(static_cast<Eigen::Index>(bin), overlap);
    }
  }
};

BinGrid grid_for(const StudyWindow& w, Granularity g) { return {w.start, bin_seconds(g), w.bins(g)}; }

void mark_presence(const EventStore::SensorEvents& events, const BinGrid& grid, Mask& mask, Eigen::Index col) {
  for (const auto& list : events) {
    for (const auto& e : list) {
      if (e.duration > 0) {
        grid.for_overlap(e.timestamp, e.end(), [&](Eigen::Index b, std::int64_t) { mask(b, col) = true; });
      } else if (const Eigen::Index b = grid.bin_of(e.timestamp); b >= 0) {
        mask(b, col) = true;
      }
    }
  }
}

void accumulate(const std::vector<SensorEvent>& events, const FeatureSpec& spec, const BinGrid& grid,
                Matrix& values, Eigen::Index col) {
  switch (spec.kind) {
    case FeatureKind::DurationMinutes:
      for (const auto& e : events) {
        if (!spec.label.empty() && e.value != spec.label) continue;
        if (e.duration <= 0) continue;
        grid.for_overlap(e.timestamp, e.end(),
                         [&](Eigen::Index b, std::int64_t secs) { values(b, col) += static_cast<double>(secs); });
      }
      break;
    case FeatureKind::EventCount:
      for (const auto& e : events) {
        if (const Eigen::Index b = grid.bin_of(e.timestamp); b >= 0) values(b, col) += 1.0;
      }
      break;
    case FeatureKind::UniqueCount: {
      std::vector<std::set<std::string_view>> seen(static_cast<std::size_t>(grid.count));
      for (const auto& e : events) {
        if (const Eigen::Index b = grid.bin_of(e.timestamp); b >= 0) seen[static_cast<std::size_t>(b)].insert(e.value);
      }
      for (Eigen::Index b = 0; b < grid.count; ++b) {
        values(b, col) = static_cast<double>(seen[static_cast<std::size_t>(b)].size());
      }
      break;
    }
    case FeatureKind::ChangeCount:
      // A change is an event whose label differs from the previous event of
      // the same sensor; it is counted in the bin where the new label starts.
      for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].value == events[i - 1].value) continue;
        if (const Eigen::Index b = grid.bin_of(events[i].timestamp); b >= 0) values(b, col) += 1.0;
      }
      break;
  }
}

bool is_duration(FeatureKind k) { return k == FeatureKind::DurationMinutes; }

}  // namespace

std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::DurationMinutes: return "duration-minutes";
    case FeatureKind::EventCount: return "event-count";
    case FeatureKind::UniqueCount: return "unique-count";
    case FeatureKind::ChangeCount: return "change-count";
  }
  return "unknown";
}

const std::vector<FeatureSpec>& default_features() {
  using K = FeatureKind;
  using S = Sensor;
  static const std::vector<FeatureSpec> features = {
      {"stationary", K::DurationMinutes, S::Activity, "stationary"},
      {"walking", K::DurationMinutes, S::Activity, "walking"},
      {"running", K::DurationMinutes, S::Activity, "running"},
      {"activity_unknown", K::DurationMinutes, S::Activity, "unknown"},
      {"activity_changes", K::ChangeCount, S::Activity, ""},
      {"silence", K::DurationMinutes, S::Audio, "silence"},
      {"voice", K::DurationMinutes, S::Audio, "voice"},
      {"noise", K::DurationMinutes, S::Audio, "noise"},
      {"audio_unknown", K::DurationMinutes, S::Audio, "unknown"},
      {"conversation", K::DurationMinutes, S::Conversation, ""},
      {"dark", K::DurationMinutes, S::Dark, ""},
      {"phonecharge", K::DurationMinutes, S::PhoneCharge, ""},
      {"phonelock", K::DurationMinutes, S::PhoneLock, ""},
      {"gps", K::UniqueCount, S::Gps, ""},
      {"wifi", K::UniqueCount, S::Wifi, ""},
      {"bluetooth", K::UniqueCount, S::Bluetooth, ""},
      {"calls", K::EventCount, S::Call, ""},
      {"sms", K::EventCount, S::Sms, ""},
  };
  return features;
}

std::optional<FeatureSpec> find_feature(std::string_view name) {
  for (const auto& f : default_features()) {
    if (f.name == name) return f;
  }
  return std::nullopt;
}

StudyWindow StudyWindow::from_local_date(std::string_view date, int utc_offset_minutes, int days) {
  using namespace std::chrono;
  const auto fail = [&] { return Error(ErrorCode::Config, "invalid study start date '" + std::string(date) + "'"); };
  if (date.size() != 10 || date[4] != '-' || date[7] != '-') throw fail();
  const auto y = csv::to_int(date.substr(0, 4));
  const auto m = csv::to_int(date.substr(5, 2));
  const auto d = csv::to_int(date.substr(8, 2));
  if (!y || !m || !d) throw fail();
  const year_month_day ymd{year{static_cast<int>(*y)}, month{static_cast<unsigned>(*m)},
                           day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) throw fail();
  if (days < 1) throw Error(ErrorCode::Config, "study window must span at least one day");
  const std::int64_t midnight_local = sys_days{ymd}.time_since_epoch().count() * kDay;
  StudyWindow w;
  w.start = midnight_local - std::int64_t{60} * utc_offset_minutes;
  w.end = w.start + std::int64_t{days} * kDay;
  return w;
}

Eigen::Index StudyWindow::bins(Granularity g) const {
  const std::int64_t width = bin_seconds(g);
  if (length() <= 0 || length() % width != 0) {
    throw Error(ErrorCode::InvalidArgument, "study window of " + std::to_string(length()) +
                                                " s is not aligned to " + std::string(to_token(g)) + " bins");
  }
  return static_cast<Eigen::Index>(length() / width);
}

void PrivacySurfaceConfig::validate() const {
  if (entries.empty()) throw Error(ErrorCode::Config, "surface config has no entries");
  std::unordered_set<std::string> names;
  for (const auto& e : entries) {
    if (!names.insert(e.feature.name).second) {
      throw Error(ErrorCode::Config, "duplicate feature '" + e.feature.name + "' in surface config");
    }
  }
  if (window.length() < kDay) throw Error(ErrorCode::Config, "study window must span at least one day");
}

Mask presence(const EventStore& store, const std::vector<std::string>& roster, Granularity g,
              const StudyWindow& window) {
  const BinGrid grid = grid_for(window, g);
  Mask mask = Mask::Constant(grid.count, static_cast<Eigen::Index>(roster.size()), false);
  for (std::size_t j = 0; j < roster.size(); ++j) {
    if (const auto* events = store.find(roster[j])) mark_presence(*events, grid, mask, static_cast<Eigen::Index>(j));
  }
  return mask;
}

namespace {

RawFeature aggregate_with_presence(const EventStore& store, const FeatureSpec& spec, const BinGrid& grid,
                                   const std::vector<std::string>& roster, const Mask& observed) {
  RawFeature raw{Matrix::Zero(grid.count, static_cast<Eigen::Index>(roster.size())), observed};
  for (std::size_t j = 0; j < roster.size(); ++j) {
    if (const auto* events = store.find(roster[j])) {
      accumulate((*events)[static_cast<std::size_t>(spec.sensor)], spec, grid, raw.values,
                 static_cast<Eigen::Index>(j));
    }
  }
  raw.values = observed.select(raw.values.array(), 0.0).matrix();
  return raw;
}

void check_spec(const FeatureSpec& spec) {
  const auto known = find_feature(spec.name);
  if (!known || *known != spec) throw Error(ErrorCode::Config, "unknown feature spec '" + spec.name + "'");
}

}  // namespace

RawFeature aggregate_raw(const EventStore& store, const FeatureSpec& spec, Granularity g,
                         const StudyWindow& window, const std::vector<std::string>& roster) {
  check_spec(spec);
  const BinGrid grid = grid_for(window, g);
  return aggregate_with_presence(store, spec, grid, roster, presence(store, roster, g, window));
}

MaskedMatrix normalize_feature(const RawFeature& raw, FeatureKind kind, Granularity g) {
  Matrix v;
  if (is_duration(kind)) {
    v = (raw.values.array() / static_cast<double>(bin_seconds(g))).min(1.0).max(0.0).matrix();
  } else {
    v = raw.values.array().log1p().matrix();
  }
  return MaskedMatrix(std::move(v), raw.observed);
}

MaskedMatrix aggregate_feature(const EventStore& store, const FeatureSpec& spec, Granularity g,
                               const StudyWindow& window, const std::vector<std::string>& roster) {
  return normalize_feature(aggregate_raw(store, spec, g, window, roster), spec.kind, g);
}

MultiSet build_surface(const EventStore& store, const PrivacySurfaceConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.roster.empty()) throw Error(ErrorCode::Config, "surface roster is empty");
  for (const auto& e : cfg.entries) {
    check_spec(e.feature);
    cfg.window.bins(e.granularity);
  }

  // Presence depends only on granularity; compute each level once.
  std::vector<Granularity> levels;
  for (const auto& e : cfg.entries) {
    if (std::find(levels.begin(), levels.end(), e.granularity) == levels.end()) levels.push_back(e.granularity);
  }
  std::vector<Mask> masks(levels.size());
  parallel_for(levels.size(), jobs, [&](std::size_t i) { masks[i] = presence(store, cfg.roster, levels[i], cfg.window); });

  MultiSet ms;
  ms.user_ids = cfg.roster;
  ms.slices.resize(cfg.entries.size());
  ms.info.resize(cfg.entries.size());
  parallel_for(cfg.entries.size(), jobs, [&](std::size_t k) {
    const auto& entry = cfg.entries[k];
    const auto level = static_cast<std::size_t>(std::find(levels.begin(), levels.end(), entry.granularity) - levels.begin());
    const RawFeature raw =
        aggregate_with_presence(store, entry.feature, grid_for(cfg.window, entry.granularity), cfg.roster, masks[level]);
    ms.slices[k] = normalize_feature(raw, entry.feature.kind, entry.granularity);
    ms.info[k] = {entry.feature.name, entry.granularity, cfg.window.start};
  });
  for (std::size_t k = 0; k < ms.slices.size(); ++k) {
    if (ms.slices[k].observed_count() == 0) {
      throw Error(ErrorCode::MissingData, "surface slice '" + ms.info[k].name + "' has no observed bins");
    }
  }
  return ms;
}

IntrusivenessSummary intrusiveness_rank(const PrivacySurfaceConfig& cfg) {
  IntrusivenessSummary out;
  std::vector<int> sorted;
  for (const auto& e : cfg.entries) {
    const int level = intrusiveness_level(e.granularity);
    out.levels.emplace_back(e.feature.name, level);
    sorted.push_back(level);
  }
  if (sorted.empty()) return out;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  out.min = sorted.front();
  out.max = sorted.back();
  out.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return out;
}

}  // namespace privsurf

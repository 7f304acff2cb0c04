#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "privsurf/surface.hpp"

namespace privsurf::synth {

namespace {

constexpr std::int64_t kHour = 3600;
constexpr std::int64_t kDay = 86400;
constexpr int kBlocksPerHour = 4;  // activity/audio inference blocks of 15 min

// Behaviour profile of one cluster. Hours are local; sleep may pass midnight.
struct Profile {
  int wake;
  int sleep;  // 24..27 means after midnight
  double walk, run, voice, noise, conversation, lock, mobility, wifi, bluetooth, calls, sms;
  double rhythm_period, rhythm_phase, rhythm_depth;
  double deadline_response;  // < 0: less mobile on deadline-heavy days
};

const Profile& profile(int c) {
  static const std::vector<Profile> profiles = {
      {7, 23, 0.35, 0.08, 0.30, 0.10, 0.25, 0.15, 0.50, 3.0, 0.4, 0.20, 0.30, 7.0, 0.0, 0.45, -0.8},
      {11, 27, 0.05, 0.00, 0.10, 0.35, 0.05, 0.70, 0.05, 0.3, 0.2, 0.05, 2.00, 14.0, 1.5, 0.40, -0.1},
      {5, 21, 0.20, 0.02, 0.55, 0.05, 0.50, 0.25, 0.20, 1.0, 3.0, 0.60, 0.40, 9.0, 3.0, 0.35, -0.2},
      {9, 25, 0.10, 0.01, 0.20, 0.55, 0.15, 0.40, 0.80, 6.0, 1.0, 0.10, 1.00, 22.0, 0.7, 0.50, -0.6},
  };
  return profiles[static_cast<std::size_t>(c) % profiles.size()];
}

bool awake_at(const Profile& p, int hour) {
  const int h = hour < p.wake ? hour + 24 : hour;
  return h >= p.wake && h < p.sleep;
}

std::vector<double> deadline_calendar(int days) {
  std::vector<double> d(static_cast<std::size_t>(days), 0.0);
  for (int i = 0; i < days; ++i) {
    // Term structure: early ramp, mid-term peak around day 34, finals at the end.
    const double t = static_cast<double>(i);
    d[static_cast<std::size_t>(i)] = 2.0 * std::exp(-std::pow((t - 10.0) / 4.0, 2)) +
                                     4.0 * std::exp(-std::pow((t - 34.0) / 3.0, 2)) +
                                     3.0 * std::exp(-std::pow((t - 60.0) / 4.0, 2)) + ((i % 7) == 4 ? 0.5 : 0.0);
  }
  return d;
}

struct Gap {
  std::int64_t begin, end;
};

// Hour-aligned device-off intervals covering close to `fraction` of the study.
std::vector<Gap> device_gaps(std::int64_t start, int days, double fraction, std::mt19937_64& rng) {
  const int hours = days * 24;
  const int target = static_cast<int>(std::lround(fraction * hours));
  std::vector<char> off(static_cast<std::size_t>(hours), 0);
  std::uniform_int_distribution<int> at(0, hours - 1);
  std::uniform_int_distribution<int> len(2, 30);
  int covered = 0;
  while (covered < target) {
    const int a = at(rng);
    const int b = std::min(hours, a + std::min(len(rng), target - covered));
    for (int h = a; h < b; ++h) {
      if (!off[static_cast<std::size_t>(h)]) {
        off[static_cast<std::size_t>(h)] = 1;
        ++covered;
      }
    }
  }
  std::vector<Gap> gaps;
  for (int h = 0; h < hours; ++h) {
    if (!off[static_cast<std::size_t>(h)]) continue;
    if (!gaps.empty() && gaps.back().end == start + h * kHour) {
      gaps.back().end += kHour;
    } else {
      gaps.push_back({start + h * kHour, start + (h + 1) * kHour});
    }
  }
  return gaps;
}

class UserEmitter {
 public:
  UserEmitter(const std::string& user, std::vector<Gap> gaps, const EventSink& sink)
      : user_(user), gaps_(std::move(gaps)), sink_(sink) {}

  // Point event; dropped while the device is off.
  void point(std::string_view sensor, std::int64_t t, const std::string& payload) {
    if (!off(t)) sink_(user_, sensor, t, payload);
  }

  // Interval event; dropped if it starts while off, clipped at the next gap.
  void interval(std::string_view sensor, std::int64_t t, std::int64_t dur, const std::string& label) {
    if (off(t)) return;
    dur = std::min(dur, next_gap(t) - t);
    if (dur <= 0) return;
    sink_(user_, sensor, t, label.empty() ? std::to_string(dur) : label + ";" + std::to_string(dur));
  }

 private:
  bool off(std::int64_t t) const {
    return std::any_of(gaps_.begin(), gaps_.end(), [&](const Gap& g) { return t >= g.begin && t < g.end; });
  }
  std::int64_t next_gap(std::int64_t t) const {
    for (const auto& g : gaps_) {
      if (g.begin > t) return g.begin;
    }
    return INT64_MAX;
  }

  const std::string& user_;
  std::vector<Gap> gaps_;
  const EventSink& sink_;
};

std::string location(double lat, double lon) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.5f;%.5f", lat, lon);
  return buf;
}

}  // namespace

CohortTruth generate_cohort(const CohortSpec& spec, const EventSink& sink) {
  CohortTruth truth;
  truth.window_start = StudyWindow::from_local_date(spec.start_date, spec.utc_offset_minutes, spec.days).start;
  truth.deadlines = deadline_calendar(spec.days);
  const double deadline_max = *std::max_element(truth.deadlines.begin(), truth.deadlines.end());

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int u = 0; u < spec.users; ++u) {
    char id[16];
    std::snprintf(id, sizeof id, "u%02d", u);
    const std::string user = id;
    const int c = u % spec.clusters;
    const Profile& p = profile(c);
    truth.user_ids.push_back(user);
    truth.labels.push_back(c);

    const double off_fraction = spec.off_min + (spec.off_max - spec.off_min) * unit(rng);
    std::vector<Gap> gaps = device_gaps(truth.window_start, spec.days, off_fraction, rng);
    std::int64_t off_seconds = 0;
    for (const auto& g : gaps) off_seconds += g.end - g.begin;
    truth.off_fraction.push_back(static_cast<double>(off_seconds) / static_cast<double>(spec.days * kDay));
    UserEmitter emit(user, std::move(gaps), sink);

    const double scale = 0.85 + 0.3 * unit(rng);
    const double home_lat = 43.70 + 0.02 * unit(rng);
    const double home_lon = -72.29 + 0.02 * unit(rng);
    for (int d = 0; d < spec.days; ++d) {
      const std::int64_t day0 = truth.window_start + d * kDay;
      const double rhythm =
          1.0 + p.rhythm_depth * std::sin(2.0 * std::numbers::pi * d / p.rhythm_period + p.rhythm_phase);
      const double pressure = truth.deadlines[static_cast<std::size_t>(d)] / deadline_max;
      const double activity = std::clamp(rhythm * (1.0 + p.deadline_response * pressure) * scale, 0.05, 3.0);

      // Sleep-aligned duration sensors, one episode per night.
      const std::int64_t sleep_start = day0 + p.sleep * kHour + static_cast<std::int64_t>(unit(rng) * 1800);
      const std::int64_t sleep_len = (p.wake + 24 - p.sleep) * kHour;
      emit.interval("dark", sleep_start, sleep_len - static_cast<std::int64_t>(unit(rng) * 1800), "");
      emit.interval("phonecharge", sleep_start + 600, sleep_len / 2 + static_cast<std::int64_t>(unit(rng) * 3600), "");

      for (int h = 0; h < 24; ++h) {
        const std::int64_t t0 = day0 + h * kHour;
        const bool awake = awake_at(p, h);
        for (int b = 0; b < kBlocksPerHour; ++b) {
          const std::int64_t tb = t0 + b * (kHour / kBlocksPerHour);
          const double r = unit(rng);
          std::string act = "stationary";
          if (awake) {
            const double walk = std::min(0.9, p.walk * activity);
            const double run = std::min(0.5, p.run * activity);
            if (r < walk) act = "walking";
            else if (r < walk + run) act = "running";
            else if (r > 0.96) act = "unknown";
          } else if (r > 0.98) {
            act = "unknown";
          }
          emit.interval("activity", tb, kHour / kBlocksPerHour, act);

          const double ra = unit(rng);
          std::string aud = "silence";
          if (awake) {
            const double voice = std::min(0.8, p.voice * rhythm);
            if (ra < voice) aud = "voice";
            else if (ra < voice + p.noise) aud = "noise";
            else if (ra > 0.97) aud = "unknown";
          } else if (ra > 0.95) {
            aud = "noise";
          }
          emit.interval("audio", tb, kHour / kBlocksPerHour, aud);
        }
        if (!awake) continue;

        if (unit(rng) < p.conversation * rhythm) {
          emit.interval("conversation", t0 + static_cast<std::int64_t>(unit(rng) * 1800),
                        300 + static_cast<std::int64_t>(unit(rng) * 1500), "");
        }
        if (unit(rng) < p.lock) {
          emit.interval("phonelock", t0 + static_cast<std::int64_t>(unit(rng) * 1200),
                        600 + static_cast<std::int64_t>(unit(rng) * 1800), "");
        }
        std::poisson_distribution<int> fixes(2.0);
        for (int f = fixes(rng); f > 0; --f) {
          const bool away = unit(rng) < std::min(0.95, p.mobility * activity);
          const double lat = away ? 43.60 + 0.2 * unit(rng) : home_lat;
          const double lon = away ? -72.40 + 0.2 * unit(rng) : home_lon;
          emit.point("gps", t0 + static_cast<std::int64_t>(unit(rng) * kHour), location(lat, lon));
        }
        std::poisson_distribution<int> aps(p.wifi * activity);
        emit.point("wifi", t0 + 60, "home-" + user);
        for (int a = aps(rng); a > 0; --a) {
          emit.point("wifi", t0 + static_cast<std::int64_t>(unit(rng) * kHour),
                     "ap-" + std::to_string(static_cast<int>(unit(rng) * 400)));
        }
        std::poisson_distribution<int> bts(p.bluetooth * rhythm);
        for (int a = bts(rng); a > 0; --a) {
          emit.point("bluetooth", t0 + static_cast<std::int64_t>(unit(rng) * kHour),
                     "bt-" + std::to_string(static_cast<int>(unit(rng) * 300)));
        }
        std::poisson_distribution<int> calls(p.calls * rhythm);
        for (int a = calls(rng); a > 0; --a) emit.point("call", t0 + static_cast<std::int64_t>(unit(rng) * kHour), "out");
        std::poisson_distribution<int> sms(p.sms * rhythm);
        for (int a = sms(rng); a > 0; --a) emit.point("sms", t0 + static_cast<std::int64_t>(unit(rng) * kHour), "in");
      }
    }
  }
  return truth;
}

CohortTruth write_cohort(const CohortSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream events(dir / "events.csv", std::ios::binary);
  events << "user_id,sensor,timestamp,payload\n";
  const CohortTruth truth = generate_cohort(spec, [&](const std::string& user, std::string_view sensor,
                                                      std::int64_t t, const std::string& payload) {
    events << user << ',' << sensor << ',' << t << ',' << payload << '\n';
  });
  events.close();

  // Scores: cluster means spread widely, unit within-cluster spread; a few
  // users lack post-surveys so the pre-fill rule is exercised.
  std::mt19937_64 rng(spec.seed ^ 0x5eedULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::vector<std::pair<std::string, std::vector<double>>> measures = {
      {"phq9", {6.0, 11.0, 3.0, 8.0}}, {"pss", {23.0, 20.0, 16.0, 27.0}},
      {"flourishing", {44.0, 38.0, 48.0, 41.0}}, {"loneliness", {40.0, 48.0, 33.0, 44.0}}};
  std::ofstream scores(dir / "scores.csv", std::ios::binary);
  scores << "user_id,measure,value\n";
  for (std::size_t u = 0; u < truth.user_ids.size(); ++u) {
    const auto c = static_cast<std::size_t>(truth.labels[u]) % 4;
    for (const auto& [name, means] : measures) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", means[c] + noise(rng));
      scores << truth.user_ids[u] << ',' << name << "_pre," << buf << '\n';
      if (u % 7 != 3) {
        std::snprintf(buf, sizeof buf, "%.3f", means[c] + noise(rng));
        scores << truth.user_ids[u] << ',' << name << "_post," << buf << '\n';
      }
    }
  }

  std::ofstream deadlines(dir / "deadlines.csv", std::ios::binary);
  deadlines << "user_id,date,count\n";
  const StudyWindow w = StudyWindow::from_local_date(spec.start_date, spec.utc_offset_minutes, spec.days);
  for (const auto& user : truth.user_ids) {
    for (int d = 0; d < spec.days; ++d) {
      const long count = std::lround(truth.deadlines[static_cast<std::size_t>(d)]);
      if (count == 0) continue;
      // Local calendar date of day d.
      const std::chrono::sys_days day{std::chrono::days{(w.start + spec.utc_offset_minutes * 60) / kDay + d}};
      const std::chrono::year_month_day ymd{day};
      char date[16];
      std::snprintf(date, sizeof date, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      deadlines << user << ',' << date << ',' << count << '\n';
    }
  }

  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  const std::vector<std::string> hourly = {"wifi", "voice", "stationary", "walking", "silence", "dark", "phonelock", "sms"};
  for (const auto& f : default_features()) {
    const bool h = std::find(hourly.begin(), hourly.end(), f.name) != hourly.end();
    entries.push_back({{"feature", f.name}, {"granularity", h ? "1h" : "1d"}});
  }
  nlohmann::ordered_json config = {
      {"events", "events.csv"},
      {"scores", "scores.csv"},
      {"event_series", "deadlines.csv"},
      {"output", "out"},
      {"surface",
       {{"window", {{"start_date", spec.start_date}, {"utc_offset_minutes", spec.utc_offset_minutes}, {"days", spec.days}}},
        {"roster", truth.user_ids},
        {"entries", entries}}},
      {"rank", "auto"},
      {"rank_range", {2, 8}},
      {"analysis", {{"top_k", 2}, {"top_n", 10}, {"baseline_trials", 1000}}},
      {"seed", spec.seed},
      {"jobs", 4}};
  std::ofstream(dir / "config.json", std::ios::binary) << config.dump(2) << '\n';

  nlohmann::ordered_json t = {{"user_ids", truth.user_ids},
                              {"labels", truth.labels},
                              {"off_fraction", truth.off_fraction},
                              {"window_start", truth.window_start}};
  std::ofstream(dir / "truth.json", std::ios::binary) << t.dump(2) << '\n';
  return truth;
}

}  // namespace privsurf::synth

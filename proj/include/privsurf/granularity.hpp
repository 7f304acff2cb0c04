#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace privsurf {

/// Temporal bin length of a feature. Finer bins are more intrusive.
enum class Granularity : std::uint8_t { Minute1, Minute15, Minute30, Hour1, Day1 };

inline constexpr std::array<Granularity, 5> kAllGranularities = {
    Granularity::Minute1, Granularity::Minute15, Granularity::Minute30, Granularity::Hour1,
    Granularity::Day1};

constexpr int bin_minutes(Granularity g) {
  switch (g) {
    case Granularity::Minute1: return 1;
    case Granularity::Minute15: return 15;
    case Granularity::Minute30: return 30;
    case Granularity::Hour1: return 60;
    case Granularity::Day1: return 1440;
  }
  return 0;
}

constexpr std::int64_t bin_seconds(Granularity g) { return std::int64_t{60} * bin_minutes(g); }

/// Ordinal intrusiveness: 1 = 1-day (least) ... 5 = 1-minute (most).
constexpr int intrusiveness_level(Granularity g) {
  switch (g) {
    case Granularity::Minute1: return 5;
    case Granularity::Minute15: return 4;
    case Granularity::Minute30: return 3;
    case Granularity::Hour1: return 2;
    case Granularity::Day1: return 1;
  }
  return 0;
}

/// Token form used in config files: 1m, 15m, 30m, 1h, 1d.
std::string_view to_token(Granularity g);
/// Throws Error(Parse) for unknown tokens.
Granularity parse_granularity(std::string_view token);

}  // namespace privsurf

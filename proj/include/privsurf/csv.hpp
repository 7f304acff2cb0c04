#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace privsurf::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
/// A trailing '\r' is dropped.
std::vector<std::string> split(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

std::string_view trim(std::string_view s);

std::optional<std::int64_t> to_int(std::string_view s);
std::optional<double> to_double(std::string_view s);

/// Shortest round-trip representation.
std::string format_double(double v);

}  // namespace privsurf::csv

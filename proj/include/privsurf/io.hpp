#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "privsurf/analysis.hpp"
#include "privsurf/parafac2.hpp"
#include "privsurf/rank_select.hpp"
#include "privsurf/surface.hpp"

namespace privsurf::io {

using nlohmann::ordered_json;

/// Matrices are written row-major as arrays of rows.
ordered_json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const ordered_json& j);

/// Surface config layout:
///   {"window": {"start_date": "YYYY-MM-DD", "utc_offset_minutes": int, "days": int}
///            | {"start": epoch, "end": epoch},
///    "roster": [user ids],
///    "entries": [{"feature": name, "granularity": "1m|15m|30m|1h|1d"}]}
/// `roster` may be omitted; callers then fill it from the event store.
PrivacySurfaceConfig surface_config_from_json(const ordered_json& j);
ordered_json surface_config_to_json(const PrivacySurfaceConfig& cfg);

ordered_json to_json(const IntrusivenessSummary& s);
ordered_json to_json(const IngestReport& r);

/// Model layout: rank, dims, user_ids, slices (metadata), H, S, V, Q,
/// fit/objective histories, iterations, converged.
ordered_json model_to_json(const Parafac2Model& m);
Parafac2Model model_from_json(const ordered_json& j);

ordered_json to_json(const RankSweepResult& r);
ordered_json to_json(const ClusterAssignment& a);
ordered_json to_json(const std::vector<std::vector<FeatureWeight>>& importance);
ordered_json to_json(const TemporalSignature& s);
ordered_json to_json(const HomogeneityReport& h);
ordered_json to_json(const Correlation& c);

/// Writes `<dir>/surface.json` plus one data CSV and one mask CSV per slice
/// (rows = bins, columns = users, header = user ids). Returns the manifest.
ordered_json write_surface(const std::filesystem::path& dir, const MultiSet& ms, const PrivacySurfaceConfig& cfg);
/// Reads a manifest written by write_surface.
MultiSet read_surface(const std::filesystem::path& manifest);

ordered_json read_json(const std::filesystem::path& path);
/// Pretty-printed, two-space indent, trailing newline.
void write_json(const std::filesystem::path& path, const ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace privsurf::io

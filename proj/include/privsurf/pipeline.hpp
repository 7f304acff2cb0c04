#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privsurf/io.hpp"

namespace privsurf {

/// Everything one pipeline run needs. Relative paths in the config file are
/// resolved against the config file's directory.
struct PipelineConfig {
  std::filesystem::path config_path;
  std::filesystem::path events;
  std::optional<std::filesystem::path> scores;
  std::optional<std::filesystem::path> event_series;
  std::filesystem::path output;

  PrivacySurfaceConfig surface;
  int utc_offset_minutes = 0;
  bool unit_norm_slices = true;  // scale each slice to unit norm before fitting

  std::optional<Eigen::Index> rank;  // empty = auto
  Eigen::Index rank_min = 2;
  Eigen::Index rank_max = 8;
  std::vector<Eigen::Index> compare_ranks;  // empty = the run's rank

  Parafac2Options solver;
  RankSweepOptions rank_select;

  bool analysis = true;
  Eigen::Index top_k = 2;
  HomogeneityOptions homogeneity;
  std::vector<std::string> measures;  // empty = every measure in the scores file
  Eigen::Index signature_features = 3;  // signatures reported per cluster

  std::uint64_t seed = 0;
  int jobs = 1;
  bool csv_tables = false;
};

/// Reads and validates a config file. `seed` must be present in the file
/// unless supplied through `seed_override`.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                     std::optional<std::uint64_t> seed_override = std::nullopt);

/// Deterministic per-stage seed derived from the run seed and the stage name.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

enum class Stage { Ingest, Surface, Rank, Decompose, Analyze, Run };

std::string_view to_string(Stage s);

/// Error raised inside a stage; carries the stage label for error.json.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause) : Error(cause.code(), cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Runs the chain up to and including `last`, writing each stage's outputs
/// under cfg.output:
///   ingest.json, surface/, rank_sweep.json, model.json, cluster_report.json,
///   run_log.json; INCOMPLETE exists until the run finishes.
/// Analyze reuses <output>/model.json when it is run on its own. Throws
/// StageError on failure after writing error.json.
void run_stages(const PipelineConfig& cfg, Stage last);

/// Per surface x rank x measure homogeneity table with a baseline row per
/// surface. Writes comparison.json (and comparison.csv when csv_tables) to
/// `output`. Throws Error(Config) if rosters differ.
io::ordered_json compare_surfaces(const std::vector<PipelineConfig>& cfgs, const std::filesystem::path& output);

}  // namespace privsurf

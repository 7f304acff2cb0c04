// Command-line front end: one subcommand per pipeline stage plus `run` and
// `compare`. Exit status is 0 on success, 1 when a stage fails (error.json is
// written to the output directory) and 2 for usage or config errors.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "privsurf/pipeline.hpp"

namespace {

using privsurf::PipelineConfig;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string rank;
  std::string out;
  int jobs = 0;
  std::string format = "json";
};

void add_common(CLI::App* cmd, CommonFlags& f, bool single_config = true) {
  if (single_config) cmd->add_option("--config", f.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config)");
  cmd->add_option("--rank", f.rank, "Fixed rank R or 'auto'");
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--format", f.format, "Also write flat tables when 'csv'")->check(CLI::IsMember({"json", "csv"}));
}

PipelineConfig make_config(const std::string& path, const CommonFlags& f) {
  PipelineConfig cfg = privsurf::load_pipeline_config(path, f.seed);
  if (!f.out.empty()) cfg.output = f.out;
  if (f.jobs > 0) cfg.jobs = f.jobs;
  cfg.csv_tables = f.format == "csv";
  if (f.rank == "auto") {
    cfg.rank.reset();
  } else if (!f.rank.empty()) {
    try {
      const long r = std::stol(f.rank);
      if (r < 1) throw std::invalid_argument("rank");
      cfg.rank = r;
    } catch (const std::exception&) {
      throw privsurf::Error(privsurf::ErrorCode::Config, "--rank must be a positive integer or 'auto'");
    }
  }
  return cfg;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("privsurf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  const char* env = std::getenv("PRIVSURF_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Privacy-surface multi-set construction, PARAFAC2 clustering and cluster analysis"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<std::string> compare_configs;
  const std::vector<std::pair<std::string, privsurf::Stage>> stages = {
      {"ingest", privsurf::Stage::Ingest},       {"surface", privsurf::Stage::Surface},
      {"rank", privsurf::Stage::Rank},           {"decompose", privsurf::Stage::Decompose},
      {"analyze", privsurf::Stage::Analyze},     {"run", privsurf::Stage::Run}};
  const std::map<std::string, std::string> help = {
      {"ingest", "Parse event CSVs and report counts"},
      {"surface", "Build the privacy-surface multi-set"},
      {"rank", "Sweep candidate ranks with core consistency"},
      {"decompose", "Fit PARAFAC2 at the fixed or selected rank"},
      {"analyze", "Clusters, importances, signatures, homogeneity, correlations"},
      {"run", "All stages in order"}};
  std::map<CLI::App*, privsurf::Stage> stage_of;
  for (const auto& [name, stage] : stages) {
    CLI::App* cmd = app.add_subcommand(name, help.at(name));
    add_common(cmd, flags);
    stage_of[cmd] = stage;
  }
  CLI::App* compare = app.add_subcommand("compare", "Homogeneity table across several surface configs");
  compare->add_option("--config", compare_configs, "Pipeline configs (repeatable)")->required()->check(CLI::ExistingFile);
  add_common(compare, flags, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (compare->parsed()) {
      std::vector<PipelineConfig> cfgs;
      for (const auto& path : compare_configs) cfgs.push_back(make_config(path, flags));
      const auto out = flags.out.empty() ? cfgs.front().output : std::filesystem::path(flags.out);
      privsurf::compare_surfaces(cfgs, out);
      std::cout << (out / "comparison.json").string() << '\n';
      return 0;
    }
    for (const auto& [cmd, stage] : stage_of) {
      if (!cmd->parsed()) continue;
      const PipelineConfig cfg = make_config(flags.config, flags);
      privsurf::run_stages(cfg, stage);
      std::cout << cfg.output.string() << '\n';
      return 0;
    }
  } catch (const privsurf::StageError& e) {
    std::cerr << "error [" << e.stage() << "/" << privsurf::to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const privsurf::Error& e) {
    std::cerr << "error [" << privsurf::to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "privsurf/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "privsurf/csv.hpp"

namespace privsurf {

namespace fs = std::filesystem;
using io::ordered_json;

namespace {

template <typename T>
T field(const ordered_json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config field '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct RunState {
  explicit RunState(const PipelineConfig& c, bool write = true) : cfg(c), persist(write) {}

  const PipelineConfig& cfg;
  bool persist;  // write stage outputs under cfg.output
  ordered_json log = ordered_json::object();
  std::optional<EventStore> store;
  std::optional<MultiSet> surface;  // as fitted (after optional scaling)
  std::vector<double> slice_scales;
  std::optional<RankSweepResult> sweep;
  std::optional<Parafac2Model> model;
};

template <typename Fn>
auto timed_stage(RunState& st, const char* name, Fn&& fn) {
  spdlog::info("stage {}: start", name);
  Timer t;
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      st.log["stages"].push_back({{"stage", name}, {"seconds", t.seconds()}});
      spdlog::info("stage {}: done in {:.3f} s", name, t.seconds());
    } else {
      auto result = fn();
      st.log["stages"].push_back({{"stage", name}, {"seconds", t.seconds()}});
      spdlog::info("stage {}: done in {:.3f} s", name, t.seconds());
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const nlohmann::json::exception& e) {
    throw StageError(name, Error(ErrorCode::Parse, e.what()));
  } catch (const fs::filesystem_error& e) {
    throw StageError(name, Error(ErrorCode::Io, e.what()));
  }
}

void stage_ingest(RunState& st) {
  if (st.store) return;
  st.store = timed_stage(st, "ingest", [&] {
    EventStore store = ingest_events(st.cfg.events);
    if (st.persist) io::write_json(st.cfg.output / "ingest.json", io::to_json(store.report()));
    spdlog::info("ingest: {} accepted, {} rejected", store.report().accepted, store.report().rejected);
    return store;
  });
}

PrivacySurfaceConfig effective_surface_config(const PipelineConfig& cfg, const EventStore& store) {
  PrivacySurfaceConfig sc = cfg.surface;
  if (sc.roster.empty()) sc.roster = store.users();
  return sc;
}

void stage_surface(RunState& st) {
  if (st.surface) return;
  stage_ingest(st);
  st.surface = timed_stage(st, "surface", [&] {
    const auto sc = effective_surface_config(st.cfg, *st.store);
    MultiSet ms = build_surface(*st.store, sc, st.cfg.jobs);
    if (st.persist) io::write_surface(st.cfg.output / "surface", ms, sc);
    spdlog::info("surface: {} slices, {} users, observed fraction {:.4f}", ms.slice_count(), ms.users(),
                 ms.observed_fraction());
    if (st.cfg.unit_norm_slices) st.slice_scales = scale_slices_to_unit_norm(ms);
    return ms;
  });
}

Eigen::Index stage_rank(RunState& st, bool forced) {
  if (st.cfg.rank && !forced) return *st.cfg.rank;
  stage_surface(st);
  st.sweep = timed_stage(st, "rank", [&] {
    RankSweepOptions opts = st.cfg.rank_select;
    opts.parafac2.seed = stage_seed(st.cfg.seed, "rank");
    opts.cp.seed = stage_seed(st.cfg.seed, "rank/cp");
    opts.jobs = st.cfg.jobs;
    const Eigen::Index limit = std::min({st.surface->users(), st.surface->min_rows(), st.surface->slice_count()});
    if (st.cfg.rank_min > limit) {
      throw Error(ErrorCode::Config, "rank_range minimum exceeds min(J, min_k I_k, K) = " + std::to_string(limit));
    }
    RankSweepResult r = auto_rank(*st.surface, st.cfg.rank_min, std::min(st.cfg.rank_max, limit), opts);
    if (st.persist) io::write_json(st.cfg.output / "rank_sweep.json", io::to_json(r));
    for (const auto& line : r.trace) spdlog::info("rank: {}", line);
    return r;
  });
  st.log["chosen_rank"] = st.sweep->chosen_rank;
  return st.sweep->chosen_rank;
}

void stage_decompose(RunState& st) {
  const Eigen::Index rank = stage_rank(st, false);
  stage_surface(st);
  st.model = timed_stage(st, "decompose", [&] {
    Parafac2Options opts = st.cfg.solver;
    opts.seed = stage_seed(st.cfg.seed, "decompose");
    opts.jobs = st.cfg.jobs;
    Parafac2Model m = parafac2_als(*st.surface, rank, opts);
    ordered_json j = io::model_to_json(m);
    j["preprocessing"] = {{"slice_scaling", st.cfg.unit_norm_slices ? "unit_norm" : "none"},
                          {"slice_scales", st.slice_scales}};
    io::write_json(st.cfg.output / "model.json", j);
    spdlog::info("decompose: rank {} fit {:.6f} after {} sweeps{}", rank, m.fit(), m.iterations,
                 m.converged ? "" : " (not converged)");
    return m;
  });
  st.log["rank"] = st.model->rank();
  st.log["fit_history"] = st.model->fit_history;
  st.log["converged"] = st.model->converged;
}

template <typename Loader>
auto load_file(const fs::path& path, Loader&& loader) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "referenced file " + path.string() + " does not exist or is unreadable");
  return loader(in);
}

void write_csv_tables(const PipelineConfig& cfg, const ClusterAssignment& assign,
                      const std::vector<std::vector<FeatureWeight>>& importance,
                      const std::vector<HomogeneityReport>& homogeneity) {
  std::ostringstream a;
  a << "user_id,rank,cluster,weight,negative_loading\n";
  for (std::size_t j = 0; j < assign.per_user.size(); ++j) {
    for (std::size_t t = 0; t < assign.per_user[j].size(); ++t) {
      const auto& m = assign.per_user[j][t];
      a << csv::escape(assign.user_ids[j]) << ',' << t + 1 << ',' << m.cluster << ',' << csv::format_double(m.weight)
        << ',' << (m.negative ? 1 : 0) << '\n';
    }
  }
  io::write_text(cfg.output / "assignments.csv", a.str());

  std::ostringstream f;
  f << "cluster,rank,feature,weight\n";
  for (std::size_t r = 0; r < importance.size(); ++r) {
    for (std::size_t t = 0; t < importance[r].size(); ++t) {
      f << r << ',' << t + 1 << ',' << csv::escape(importance[r][t].name) << ','
        << csv::format_double(importance[r][t].weight) << '\n';
    }
  }
  io::write_text(cfg.output / "importance.csv", f.str());

  std::ostringstream h;
  h << "measure,cluster,variance,iqr,skipped\n";
  for (const auto& rep : homogeneity) {
    for (const auto& c : rep.clusters) {
      h << csv::escape(rep.measure) << ',' << c.cluster << ',' << csv::format_double(c.variance) << ','
        << csv::format_double(c.iqr) << ',' << (c.skipped ? 1 : 0) << '\n';
    }
    h << csv::escape(rep.measure) << ",baseline," << csv::format_double(rep.baseline_mean_variance) << ','
      << csv::format_double(rep.baseline_mean_iqr) << ",0\n";
  }
  io::write_text(cfg.output / "homogeneity.csv", h.str());
}

// Slice used to correlate a cluster with the event series: its most important
// daily feature when one exists, otherwise its most important feature.
Eigen::Index correlation_slice(const Parafac2Model& m, const std::vector<FeatureWeight>& ranked) {
  for (const auto& f : ranked) {
    if (m.info[static_cast<std::size_t>(f.slice)].granularity == Granularity::Day1) return f.slice;
  }
  return ranked.front().slice;
}

void stage_analyze(RunState& st) {
  if (!st.model) {
    const fs::path model_path = st.cfg.output / "model.json";
    st.model = timed_stage(st, "load-model", [&] {
      if (!fs::exists(model_path)) {
        throw Error(ErrorCode::Config, "analyze needs " + model_path.string() + "; run decompose first");
      }
      return io::model_from_json(io::read_json(model_path));
    });
  }
  timed_stage(st, "analyze", [&] {
    const PipelineConfig& cfg = st.cfg;
    const Parafac2Model& m = *st.model;
    const Eigen::Index top_k = std::min(cfg.top_k, m.rank());
    const ClusterAssignment assign = assign_clusters(m, top_k);
    const auto importance = feature_importance(m);

    ordered_json report = {{"rank", m.rank()},
                           {"fit", m.fit()},
                           {"converged", m.converged},
                           {"users", m.users()},
                           {"assignments", io::to_json(assign)},
                           {"feature_importance", io::to_json(importance)}};

    ordered_json signatures = ordered_json::array();
    const auto per_cluster = static_cast<std::size_t>(std::min(cfg.signature_features, m.slice_count()));
    for (Eigen::Index r = 0; r < m.rank(); ++r) {
      for (std::size_t t = 0; t < per_cluster; ++t) {
        signatures.push_back(io::to_json(temporal_signature(m, importance[static_cast<std::size_t>(r)][t].slice, r)));
      }
    }
    report["signatures"] = signatures;

    std::vector<HomogeneityReport> homogeneity;
    ordered_json hom = ordered_json::array();
    if (cfg.analysis) {
      if (!cfg.scores) throw Error(ErrorCode::Config, "analysis is enabled but no scores file is configured");
      const ScoreTable scores = load_file(*cfg.scores, [](std::istream& in) { return load_scores(in); });
      const auto measures = cfg.measures.empty() ? scores.measures() : cfg.measures;
      HomogeneityOptions hopts = cfg.homogeneity;
      hopts.seed = stage_seed(cfg.seed, "analyze");
      for (const auto& measure : measures) {
        homogeneity.push_back(cluster_homogeneity(assign, scores, measure, hopts));
        hom.push_back(io::to_json(homogeneity.back()));
      }
    }
    report["homogeneity"] = hom;

    ordered_json corr = ordered_json::array();
    if (cfg.analysis && cfg.event_series) {
      const EventSeries series = load_file(*cfg.event_series, [](std::istream& in) { return load_event_series(in); });
      const auto top1 = assign.top1();
      for (Eigen::Index r = 0; r < m.rank(); ++r) {
        std::vector<std::string> members;
        for (std::size_t j = 0; j < top1.size(); ++j) {
          if (top1[j] == r) members.push_back(assign.user_ids[j]);
        }
        const Eigen::Index k = correlation_slice(m, importance[static_cast<std::size_t>(r)]);
        const TemporalSignature sig = temporal_signature(m, k, r);
        ordered_json entry = {{"cluster", r}, {"feature", sig.feature}, {"members", members.size()}};
        try {
          const Correlation c =
              correlate_with_events(sig.values, resample_events(series, members, sig, cfg.utc_offset_minutes));
          entry["status"] = "ok";
          entry["r"] = c.r;
          entry["p"] = c.p;
          entry["n"] = c.n;
        } catch (const Error& e) {
          entry["status"] = std::string(to_string(e.code()));
        }
        corr.push_back(std::move(entry));
      }
    }
    report["correlations"] = corr;

    Eigen::Index negative = 0;
    for (const auto& list : assign.per_user) {
      for (const auto& mship : list) negative += mship.negative ? 1 : 0;
    }
    report["flags"] = {{"negative_loadings", negative}};

    io::write_json(cfg.output / "cluster_report.json", report);
    if (cfg.csv_tables) write_csv_tables(cfg, assign, importance, homogeneity);
  });
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix(seed ^ mix(h));
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Surface: return "surface";
    case Stage::Rank: return "rank";
    case Stage::Decompose: return "decompose";
    case Stage::Analyze: return "analyze";
    case Stage::Run: return "run";
  }
  return "unknown";
}

PipelineConfig load_pipeline_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  const ordered_json j = io::read_json(path);
  if (!j.is_object()) throw Error(ErrorCode::Config, path.string() + ": config must be a JSON object");
  const fs::path base = path.parent_path();
  PipelineConfig cfg;
  cfg.config_path = path;

  if (!j.contains("events")) throw Error(ErrorCode::Config, "config: missing field 'events'");
  cfg.events = resolve(base, field<std::string>(j, "events", ""));
  if (j.contains("scores")) cfg.scores = resolve(base, field<std::string>(j, "scores", ""));
  if (j.contains("event_series")) cfg.event_series = resolve(base, field<std::string>(j, "event_series", ""));
  cfg.output = resolve(base, field<std::string>(j, "output", "out"));

  if (!j.contains("surface")) throw Error(ErrorCode::Config, "config: missing field 'surface'");
  const ordered_json surface =
      j["surface"].is_string() ? io::read_json(resolve(base, j["surface"].get<std::string>())) : j["surface"];
  cfg.surface = io::surface_config_from_json(surface);
  cfg.utc_offset_minutes = field<int>(surface.value("window", ordered_json::object()), "utc_offset_minutes", 0);

  if (j.contains("rank")) {
    const auto& r = j["rank"];
    if (r.is_string() && r.get<std::string>() == "auto") {
      cfg.rank.reset();
    } else if (r.is_number_integer() && r.get<long>() >= 1) {
      cfg.rank = r.get<Eigen::Index>();
    } else {
      throw Error(ErrorCode::Config, "config: rank must be a positive integer or \"auto\"");
    }
  }
  if (j.contains("rank_range")) {
    const auto range = field<std::vector<Eigen::Index>>(j, "rank_range", {});
    if (range.size() != 2 || range[0] < 1 || range[1] < range[0]) {
      throw Error(ErrorCode::Config, "config: rank_range must be [r_min, r_max] with 1 <= r_min <= r_max");
    }
    cfg.rank_min = range[0];
    cfg.rank_max = range[1];
  }
  cfg.compare_ranks = field<std::vector<Eigen::Index>>(j, "compare_ranks", {});

  const ordered_json pre = j.value("preprocess", ordered_json::object());
  const auto scaling = field<std::string>(pre, "slice_scaling", "unit_norm");
  if (scaling != "unit_norm" && scaling != "none") {
    throw Error(ErrorCode::Config, "config: preprocess.slice_scaling must be \"unit_norm\" or \"none\"");
  }
  cfg.unit_norm_slices = scaling == "unit_norm";

  const ordered_json solver = j.value("solver", ordered_json::object());
  cfg.solver.max_iters = field<int>(solver, "max_iters", cfg.solver.max_iters);
  cfg.solver.tol = field<double>(solver, "tol", cfg.solver.tol);
  cfg.solver.extrapolate = field<bool>(solver, "extrapolate", cfg.solver.extrapolate);
  if (cfg.solver.max_iters < 1 || !(cfg.solver.tol > 0.0)) {
    throw Error(ErrorCode::Config, "config: solver.max_iters must be >= 1 and solver.tol > 0");
  }

  const ordered_json rs = j.value("rank_select", ordered_json::object());
  cfg.rank_select.threshold = field<double>(rs, "threshold", cfg.rank_select.threshold);
  cfg.rank_select.parafac2.max_iters = field<int>(rs, "max_iters", cfg.rank_select.parafac2.max_iters);
  cfg.rank_select.parafac2.tol = cfg.solver.tol;
  cfg.rank_select.parafac2.extrapolate = cfg.solver.extrapolate;

  const ordered_json an = j.value("analysis", ordered_json::object());
  cfg.analysis = field<bool>(an, "enabled", true);
  cfg.top_k = field<Eigen::Index>(an, "top_k", cfg.top_k);
  cfg.homogeneity.top_n = field<Eigen::Index>(an, "top_n", cfg.homogeneity.top_n);
  cfg.homogeneity.baseline_trials = field<int>(an, "baseline_trials", cfg.homogeneity.baseline_trials);
  cfg.measures = field<std::vector<std::string>>(an, "measures", {});
  cfg.signature_features = field<Eigen::Index>(an, "signature_features", cfg.signature_features);
  if (cfg.top_k < 1 || cfg.homogeneity.top_n < 2 || cfg.homogeneity.baseline_trials < 1 || cfg.signature_features < 0) {
    throw Error(ErrorCode::Config, "config: analysis options out of range");
  }

  if (seed_override) {
    cfg.seed = *seed_override;
  } else if (j.contains("seed")) {
    cfg.seed = field<std::uint64_t>(j, "seed", 0);
  } else {
    throw Error(ErrorCode::Config, "config: 'seed' is required (or pass --seed)");
  }
  cfg.jobs = field<int>(j, "jobs", 1);
  if (cfg.jobs < 1) throw Error(ErrorCode::Config, "config: jobs must be >= 1");
  return cfg;
}

void run_stages(const PipelineConfig& cfg, Stage last) {
  fs::create_directories(cfg.output);
  const fs::path marker = cfg.output / "INCOMPLETE";
  fs::remove(cfg.output / "error.json");
  io::write_text(marker, std::string(to_string(last)) + "\n");

  RunState st{cfg};
  st.log["command"] = std::string(to_string(last));
  st.log["seed"] = cfg.seed;
  st.log["jobs"] = cfg.jobs;
  st.log["stages"] = ordered_json::array();
  Timer total;
  try {
    switch (last) {
      case Stage::Ingest: stage_ingest(st); break;
      case Stage::Surface: stage_surface(st); break;
      case Stage::Rank: stage_rank(st, true); break;
      case Stage::Decompose: stage_decompose(st); break;
      case Stage::Analyze: stage_analyze(st); break;
      case Stage::Run:
        stage_decompose(st);
        stage_analyze(st);
        break;
    }
  } catch (const StageError& e) {
    io::write_json(cfg.output / "error.json",
                   {{"stage", e.stage()}, {"code", to_string(e.code())}, {"message", e.what()}});
    st.log["status"] = "failed";
    st.log["total_seconds"] = total.seconds();
    io::write_json(cfg.output / "run_log.json", st.log);
    throw;
  }
  st.log["status"] = "ok";
  st.log["total_seconds"] = total.seconds();
  io::write_json(cfg.output / "run_log.json", st.log);
  fs::remove(marker);
}

ordered_json compare_surfaces(const std::vector<PipelineConfig>& cfgs, const fs::path& output) {
  if (cfgs.empty()) throw Error(ErrorCode::Config, "compare: no configs");
  fs::create_directories(output);
  ordered_json rows = ordered_json::array();
  std::optional<std::vector<std::string>> roster;
  std::ostringstream table;
  table << "surface,rank,measure,mean_variance,mean_iqr\n";
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    const PipelineConfig& cfg = cfgs[c];
    RunState st{cfg, false};
    st.log["stages"] = ordered_json::array();
    const std::string label = cfg.config_path.stem().string();
    stage_surface(st);
    if (!roster) {
      roster = st.surface->user_ids;
    } else if (*roster != st.surface->user_ids) {
      throw Error(ErrorCode::Config, "compare: roster of '" + label + "' differs from the first surface");
    }
    if (!cfg.scores) throw Error(ErrorCode::Config, "compare: '" + label + "' has no scores file");
    const ScoreTable scores = load_file(*cfg.scores, [](std::istream& in) { return load_scores(in); });
    const auto measures = cfg.measures.empty() ? scores.measures() : cfg.measures;

    std::vector<Eigen::Index> ranks = cfg.compare_ranks;
    if (ranks.empty()) ranks.push_back(stage_rank(st, false));
    const IntrusivenessSummary intr = intrusiveness_rank(cfg.surface);
    std::map<std::string, std::pair<double, double>> baseline;
    for (const Eigen::Index R : ranks) {
      Parafac2Options opts = cfg.solver;
      opts.seed = stage_seed(cfg.seed, "decompose");
      opts.jobs = cfg.jobs;
      const Parafac2Model m = parafac2_als(*st.surface, R, opts);
      const ClusterAssignment assign = assign_clusters(m, std::min(cfg.top_k, R));
      HomogeneityOptions hopts = cfg.homogeneity;
      hopts.seed = stage_seed(cfg.seed, "analyze");
      for (const auto& measure : measures) {
        const HomogeneityReport h = cluster_homogeneity(assign, scores, measure, hopts);
        rows.push_back({{"surface", label},
                        {"rank", R},
                        {"measure", measure},
                        {"mean_variance", h.mean_variance},
                        {"mean_iqr", h.mean_iqr},
                        {"fit", m.fit()},
                        {"intrusiveness", io::to_json(intr)}});
        table << csv::escape(label) << ',' << R << ',' << csv::escape(measure) << ','
              << csv::format_double(h.mean_variance) << ',' << csv::format_double(h.mean_iqr) << '\n';
        baseline[measure] = {h.baseline_mean_variance, h.baseline_mean_iqr};
      }
    }
    for (const auto& [measure, b] : baseline) {
      rows.push_back({{"surface", label},
                      {"rank", "baseline"},
                      {"measure", measure},
                      {"mean_variance", b.first},
                      {"mean_iqr", b.second}});
      table << csv::escape(label) << ",baseline," << csv::escape(measure) << ',' << csv::format_double(b.first) << ','
            << csv::format_double(b.second) << '\n';
    }
  }
  const ordered_json out = {{"rows", rows}};
  io::write_json(output / "comparison.json", out);
  if (cfgs.front().csv_tables) io::write_text(output / "comparison.csv", table.str());
  return out;
}

}  // namespace privsurf

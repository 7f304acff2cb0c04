#include "privsurf/io.hpp"

#include <fstream>
#include <sstream>

#include "privsurf/csv.hpp"

namespace privsurf::io {

namespace {

template <typename T>
T get(const ordered_json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::Config, std::string(what) + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string(what) + ": field '" + key + "': " + e.what());
  }
}

std::string slice_file_stem(std::size_t k, const std::string& name) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "slice_%02zu_", k);
  return buf + name;
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::Ref<const Matrix>& m) {
  std::ostringstream out;
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << csv::escape(header[j]);
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << csv::format_double(m(i, j));
    out << '\n';
  }
  write_text(path, out.str());
}

Matrix read_matrix_csv(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);  // header
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, path.string() + ": too few rows");
    const auto f = csv::split(line);
    if (static_cast<Eigen::Index>(f.size()) != cols) {
      throw Error(ErrorCode::Parse, path.string() + ": row " + std::to_string(i + 1) + " has wrong width");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto v = csv::to_double(f[static_cast<std::size_t>(j)]);
      if (!v) throw Error(ErrorCode::Parse, path.string() + ": bad value at row " + std::to_string(i + 1));
      m(i, j) = *v;
    }
  }
  return m;
}

ordered_json slice_info_json(const SliceInfo& s, Eigen::Index rows) {
  return {{"name", s.name}, {"granularity", to_token(s.granularity)}, {"start", s.start}, {"rows", rows}};
}

}  // namespace

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const ordered_json& j) {
  if (!j.is_array()) throw Error(ErrorCode::Parse, "matrix: expected array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::Parse, "matrix: ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorCode::Parse, "matrix: non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

PrivacySurfaceConfig surface_config_from_json(const ordered_json& j) {
  constexpr const char* what = "surface config";
  PrivacySurfaceConfig cfg;
  const auto window = get<ordered_json>(j, "window", what);
  if (window.contains("start_date")) {
    cfg.window = StudyWindow::from_local_date(get<std::string>(window, "start_date", what),
                                              window.value("utc_offset_minutes", 0), get<int>(window, "days", what));
  } else {
    cfg.window.start = get<std::int64_t>(window, "start", what);
    cfg.window.end = get<std::int64_t>(window, "end", what);
  }
  if (j.contains("roster")) cfg.roster = get<std::vector<std::string>>(j, "roster", what);
  for (const auto& e : get<ordered_json>(j, "entries", what)) {
    const auto name = get<std::string>(e, "feature", what);
    const auto spec = find_feature(name);
    if (!spec) throw Error(ErrorCode::Config, "surface config: unknown feature '" + name + "'");
    Granularity g;
    try {
      g = parse_granularity(get<std::string>(e, "granularity", what));
    } catch (const Error& err) {
      throw Error(ErrorCode::Config, std::string("surface config: ") + err.what());
    }
    cfg.entries.push_back({*spec, g});
  }
  cfg.validate();
  return cfg;
}

ordered_json surface_config_to_json(const PrivacySurfaceConfig& cfg) {
  ordered_json entries = ordered_json::array();
  for (const auto& e : cfg.entries) entries.push_back({{"feature", e.feature.name}, {"granularity", to_token(e.granularity)}});
  return {{"window", {{"start", cfg.window.start}, {"end", cfg.window.end}}},
          {"roster", cfg.roster},
          {"entries", entries}};
}

ordered_json to_json(const IntrusivenessSummary& s) {
  ordered_json levels = ordered_json::array();
  for (const auto& [name, level] : s.levels) levels.push_back({{"feature", name}, {"level", level}});
  return {{"levels", levels}, {"min", s.min}, {"median", s.median}, {"max", s.max}};
}

ordered_json to_json(const IngestReport& r) {
  ordered_json per_sensor = ordered_json::object();
  for (std::size_t i = 0; i < kSensorCount; ++i) per_sensor[std::string(to_string(static_cast<Sensor>(i)))] = r.per_sensor[i];
  return {{"rows", r.rows},
          {"accepted", r.accepted},
          {"rejected", r.rejected},
          {"per_sensor", per_sensor},
          {"first_timestamp", r.first_timestamp},
          {"last_timestamp", r.last_timestamp}};
}

ordered_json model_to_json(const Parafac2Model& m) {
  ordered_json slices = ordered_json::array();
  ordered_json q = ordered_json::array();
  for (Eigen::Index k = 0; k < m.slice_count(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const SliceInfo info = ks < m.info.size() ? m.info[ks] : SliceInfo{"slice_" + std::to_string(k)};
    slices.push_back(slice_info_json(info, m.Q[ks].rows()));
    q.push_back(matrix_to_json(m.Q[ks]));
  }
  return {{"rank", m.rank()},
          {"dims", {{"K", m.slice_count()}, {"J", m.users()}, {"R", m.rank()}}},
          {"user_ids", m.user_ids},
          {"slices", slices},
          {"fit", m.fit()},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"fit_history", m.fit_history},
          {"objective_history", m.objective_history},
          {"H", matrix_to_json(m.H)},
          {"S", matrix_to_json(m.S)},
          {"V", matrix_to_json(m.V)},
          {"Q", q}};
}

Parafac2Model model_from_json(const ordered_json& j) {
  constexpr const char* what = "model";
  Parafac2Model m;
  try {
    m.H = matrix_from_json(get<ordered_json>(j, "H", what));
    m.S = matrix_from_json(get<ordered_json>(j, "S", what));
    m.V = matrix_from_json(get<ordered_json>(j, "V", what));
    for (const auto& q : get<ordered_json>(j, "Q", what)) m.Q.push_back(matrix_from_json(q));
    for (const auto& s : get<ordered_json>(j, "slices", what)) {
      m.info.push_back({get<std::string>(s, "name", what), parse_granularity(get<std::string>(s, "granularity", what)),
                        get<std::int64_t>(s, "start", what)});
    }
    m.user_ids = get<std::vector<std::string>>(j, "user_ids", what);
    m.fit_history = get<std::vector<double>>(j, "fit_history", what);
    m.objective_history = get<std::vector<double>>(j, "objective_history", what);
    m.iterations = get<int>(j, "iterations", what);
    m.converged = get<bool>(j, "converged", what);
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, e.what());
  }
  const Eigen::Index R = m.H.cols();
  bool ok = m.H.rows() == R && m.S.cols() == R && m.V.cols() == R &&
            m.S.rows() == static_cast<Eigen::Index>(m.Q.size()) && m.info.size() == m.Q.size() &&
            (m.user_ids.empty() || static_cast<Eigen::Index>(m.user_ids.size()) == m.V.rows());
  for (const auto& q : m.Q) ok = ok && q.cols() == R;
  if (!ok) throw Error(ErrorCode::Parse, "model: inconsistent factor shapes");
  return m;
}

ordered_json to_json(const RankSweepResult& r) {
  ordered_json cands = ordered_json::array();
  for (const auto& c : r.candidates) {
    cands.push_back({{"rank", c.rank},
                     {"core_consistency", c.core_consistency},
                     {"rank_deficient", c.rank_deficient},
                     {"parafac2_fit", c.parafac2_fit},
                     {"cp_fit", c.cp_fit},
                     {"qualifies", c.qualifies}});
  }
  return {{"chosen_rank", r.chosen_rank}, {"threshold", r.threshold}, {"candidates", cands}, {"trace", r.trace}};
}

ordered_json to_json(const ClusterAssignment& a) {
  ordered_json users = ordered_json::array();
  for (std::size_t j = 0; j < a.per_user.size(); ++j) {
    ordered_json list = ordered_json::array();
    for (const auto& m : a.per_user[j]) {
      list.push_back({{"cluster", m.cluster}, {"weight", m.weight}, {"negative_loading", m.negative}});
    }
    users.push_back({{"user_id", j < a.user_ids.size() ? a.user_ids[j] : std::to_string(j)}, {"clusters", list}});
  }
  return {{"clusters", a.clusters}, {"users", users}};
}

ordered_json to_json(const std::vector<std::vector<FeatureWeight>>& importance) {
  ordered_json out = ordered_json::array();
  for (std::size_t r = 0; r < importance.size(); ++r) {
    ordered_json list = ordered_json::array();
    for (const auto& f : importance[r]) list.push_back({{"feature", f.name}, {"slice", f.slice}, {"weight", f.weight}});
    out.push_back({{"cluster", r}, {"features", list}});
  }
  return out;
}

ordered_json to_json(const TemporalSignature& s) {
  std::vector<double> values(s.values.data(), s.values.data() + s.values.size());
  return {{"feature", s.feature},       {"slice", s.slice},           {"cluster", s.component},
          {"bin_seconds", s.bin_seconds}, {"timestamps", s.timestamps}, {"values", values}};
}

ordered_json to_json(const HomogeneityReport& h) {
  ordered_json clusters = ordered_json::array();
  for (const auto& c : h.clusters) {
    clusters.push_back({{"cluster", c.cluster},
                        {"members", c.members},
                        {"variance", c.variance},
                        {"iqr", c.iqr},
                        {"skipped", c.skipped}});
  }
  return {{"measure", h.measure},
          {"top_n", h.top_n},
          {"clusters", clusters},
          {"mean_variance", h.mean_variance},
          {"mean_iqr", h.mean_iqr},
          {"baseline", {{"mean_variance", h.baseline_mean_variance},
                        {"mean_iqr", h.baseline_mean_iqr},
                        {"trials", h.baseline_trials},
                        {"sample_size", h.baseline_sample_size}}}};
}

ordered_json to_json(const Correlation& c) { return {{"r", c.r}, {"p", c.p}, {"n", c.n}}; }

ordered_json write_surface(const std::filesystem::path& dir, const MultiSet& ms, const PrivacySurfaceConfig& cfg) {
  ms.validate();
  std::filesystem::create_directories(dir);
  ordered_json slices = ordered_json::array();
  for (std::size_t k = 0; k < ms.slices.size(); ++k) {
    const auto& s = ms.slices[k];
    const std::string stem = slice_file_stem(k, ms.info[k].name);
    write_matrix_csv(dir / (stem + ".csv"), ms.user_ids, s.data);
    write_matrix_csv(dir / (stem + ".mask.csv"), ms.user_ids, s.mask.cast<double>().matrix());
    auto entry = slice_info_json(ms.info[k], s.rows());
    entry["observed_fraction"] = s.observed_fraction();
    entry["data"] = stem + ".csv";
    entry["mask"] = stem + ".mask.csv";
    slices.push_back(std::move(entry));
  }
  ordered_json manifest = {{"users", ms.users()},
                           {"user_ids", ms.user_ids},
                           {"window", {{"start", cfg.window.start}, {"end", cfg.window.end}}},
                           {"observed_fraction", ms.observed_fraction()},
                           {"intrusiveness", to_json(intrusiveness_rank(cfg))},
                           {"slices", slices}};
  write_json(dir / "surface.json", manifest);
  return manifest;
}

MultiSet read_surface(const std::filesystem::path& manifest_path) {
  constexpr const char* what = "surface manifest";
  const auto manifest = read_json(manifest_path);
  const auto dir = manifest_path.parent_path();
  MultiSet ms;
  ms.user_ids = get<std::vector<std::string>>(manifest, "user_ids", what);
  const auto J = static_cast<Eigen::Index>(ms.user_ids.size());
  for (const auto& s : get<ordered_json>(manifest, "slices", what)) {
    const auto rows = get<Eigen::Index>(s, "rows", what);
    const Matrix data = read_matrix_csv(dir / get<std::string>(s, "data", what), rows, J);
    const Matrix mask = read_matrix_csv(dir / get<std::string>(s, "mask", what), rows, J);
    ms.slices.emplace_back(data, (mask.array() != 0.0).eval());
    ms.info.push_back({get<std::string>(s, "name", what), parse_granularity(get<std::string>(s, "granularity", what)),
                       get<std::int64_t>(s, "start", what)});
  }
  if (ms.slices.empty()) throw Error(ErrorCode::Parse, "surface manifest lists no slices");
  ms.validate();
  return ms;
}

ordered_json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, path.string() + ": cannot open");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, path.string() + ": cannot write");
  out << text;
  if (!out) throw Error(ErrorCode::Io, path.string() + ": write failed");
}

}  // namespace privsurf::io

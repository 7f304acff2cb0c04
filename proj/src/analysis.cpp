#include "privsurf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <random>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "privsurf/csv.hpp"
#include "privsurf/surface.hpp"

namespace privsurf {

std::vector<int> ClusterAssignment::top1() const {
  std::vector<int> out;
  out.reserve(per_user.size());
  for (const auto& list : per_user) out.push_back(list.empty() ? -1 : static_cast<int>(list.front().cluster));
  return out;
}

ClusterAssignment assign_clusters(const Parafac2Model& m, Eigen::Index top_k) {
  const Eigen::Index R = m.rank();
  if (top_k < 1 || top_k > R) {
    throw Error(ErrorCode::InvalidArgument,
                "assign_clusters: top_k " + std::to_string(top_k) + " outside [1, " + std::to_string(R) + "]");
  }
  ClusterAssignment out;
  out.user_ids = m.user_ids;
  out.clusters = R;
  out.per_user.resize(static_cast<std::size_t>(m.users()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
  for (Eigen::Index j = 0; j < m.users(); ++j) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(m.V(j, a)) > std::abs(m.V(j, b));
    });
    auto& list = out.per_user[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < top_k; ++t) {
      const Eigen::Index r = order[static_cast<std::size_t>(t)];
      list.push_back({r, std::abs(m.V(j, r)), m.V(j, r) < 0.0});
    }
  }
  return out;
}

std::vector<std::vector<FeatureWeight>> feature_importance(const Parafac2Model& m) {
  std::vector<std::vector<FeatureWeight>> out(static_cast<std::size_t>(m.rank()));
  for (Eigen::Index r = 0; r < m.rank(); ++r) {
    auto& list = out[static_cast<std::size_t>(r)];
    for (Eigen::Index k = 0; k < m.slice_count(); ++k) {
      const auto ks = static_cast<std::size_t>(k);
      list.push_back({ks < m.info.size() ? m.info[ks].name : "slice_" + std::to_string(k), k, std::abs(m.S(k, r))});
    }
    std::stable_sort(list.begin(), list.end(),
                     [](const FeatureWeight& a, const FeatureWeight& b) { return a.weight > b.weight; });
  }
  return out;
}

TemporalSignature temporal_signature(const Parafac2Model& m, Eigen::Index k, Eigen::Index r) {
  if (k < 0 || k >= m.slice_count() || r < 0 || r >= m.rank()) {
    throw Error(ErrorCode::InvalidArgument, "temporal_signature: index (" + std::to_string(k) + ", " +
                                                std::to_string(r) + ") out of range");
  }
  TemporalSignature sig;
  sig.slice = k;
  sig.component = r;
  sig.values = m.Q[static_cast<std::size_t>(k)] * m.H.col(r);
  std::int64_t start = 0;
  if (static_cast<std::size_t>(k) < m.info.size()) {
    const auto& info = m.info[static_cast<std::size_t>(k)];
    sig.feature = info.name;
    sig.bin_seconds = bin_seconds(info.granularity);
    start = info.start;
  }
  sig.timestamps.resize(static_cast<std::size_t>(sig.values.size()));
  for (std::size_t i = 0; i < sig.timestamps.size(); ++i) {
    sig.timestamps[i] = start + static_cast<std::int64_t>(i) * sig.bin_seconds;
  }
  return sig;
}

bool ScoreTable::has_measure(const std::string& measure) const {
  return std::any_of(by_user.begin(), by_user.end(), [&](const auto& u) { return u.second.count(measure) > 0; });
}

std::vector<std::string> ScoreTable::measures() const {
  std::set<std::string> names;
  for (const auto& [user, values] : by_user) {
    for (const auto& [name, _] : values) names.insert(name);
  }
  return {names.begin(), names.end()};
}

namespace {

template <typename RowFn>
void read_table(std::istream& in, const std::vector<std::string_view>& header, const char* what, RowFn&& row) {
  if (!in) throw Error(ErrorCode::Io, std::string(what) + ": unreadable source");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyInput, std::string(what) + ": empty file");
  std::string_view h = line;
  if (h.starts_with("\xEF\xBB\xBF")) h.remove_prefix(3);
  const auto cols = csv::split(h);
  bool ok = cols.size() == header.size();
  for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = csv::trim(cols[i]) == header[i];
  if (!ok) throw Error(ErrorCode::Parse, std::string(what) + ": unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size() || !row(f)) {
      throw Error(ErrorCode::Parse, std::string(what) + ": malformed line " + std::to_string(lineno));
    }
  }
}

}  // namespace

ScoreTable load_scores(std::istream& in) {
  ScoreTable t;
  read_table(in, {"user_id", "measure", "value"}, "scores", [&](const std::vector<std::string>& f) {
    const auto v = csv::to_double(f[2]);
    const auto user = csv::trim(f[0]);
    const auto measure = csv::trim(f[1]);
    if (!v || user.empty() || measure.empty()) return false;
    t.by_user[std::string(user)][std::string(measure)] = *v;
    return true;
  });
  constexpr std::string_view kPost = "_post";
  for (const auto& measure : t.measures()) {
    if (!measure.ends_with(kPost)) continue;
    const std::string pre = measure.substr(0, measure.size() - kPost.size()) + "_pre";
    for (auto& [user, values] : t.by_user) {
      if (values.count(measure) == 0) {
        if (const auto it = values.find(pre); it != values.end()) values[measure] = it->second;
      }
    }
  }
  return t;
}

double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (const double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double interquartile_range(const std::vector<double>& x) { return quantile(x, 0.75) - quantile(x, 0.25); }

HomogeneityReport cluster_homogeneity(const ClusterAssignment& assign, const ScoreTable& scores,
                                      const std::string& measure, const HomogeneityOptions& opts) {
  if (!scores.has_measure(measure)) throw Error(ErrorCode::MissingData, "homogeneity: measure '" + measure + "' missing");
  if (opts.top_n < 2) throw Error(ErrorCode::InvalidArgument, "homogeneity: top_n must be at least 2");
  if (opts.baseline_trials < 1) throw Error(ErrorCode::InvalidArgument, "homogeneity: baseline_trials must be positive");
  if (assign.user_ids.size() != assign.per_user.size()) {
    throw Error(ErrorCode::ShapeMismatch, "homogeneity: assignment has no user ids to match scores");
  }

  const auto score_of = [&](std::size_t j) -> std::optional<double> {
    const auto u = scores.by_user.find(assign.user_ids[j]);
    if (u == scores.by_user.end()) return std::nullopt;
    const auto v = u->second.find(measure);
    if (v == u->second.end()) return std::nullopt;
    return v->second;
  };

  HomogeneityReport rep;
  rep.measure = measure;
  rep.top_n = opts.top_n;
  std::size_t used = 0;
  for (Eigen::Index r = 0; r < assign.clusters; ++r) {
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t j = 0; j < assign.per_user.size(); ++j) {
      for (const auto& mship : assign.per_user[j]) {
        if (mship.cluster == r) ranked.emplace_back(mship.weight, j);
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    ClusterStats cs;
    cs.cluster = r;
    std::vector<double> values;
    for (const auto& [weight, j] : ranked) {
      if (static_cast<Eigen::Index>(values.size()) == opts.top_n) break;
      if (const auto v = score_of(j)) {
        values.push_back(*v);
        cs.members.push_back(assign.user_ids[j]);
      }
    }
    if (values.size() < 2) {
      cs.skipped = true;
    } else {
      cs.variance = sample_variance(values);
      cs.iqr = interquartile_range(values);
      rep.mean_variance += cs.variance;
      rep.mean_iqr += cs.iqr;
      ++used;
    }
    rep.clusters.push_back(std::move(cs));
  }
  if (used > 0) {
    rep.mean_variance /= static_cast<double>(used);
    rep.mean_iqr /= static_cast<double>(used);
  }

  std::vector<double> pool;
  for (std::size_t j = 0; j < assign.user_ids.size(); ++j) {
    if (const auto v = score_of(j)) pool.push_back(*v);
  }
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(opts.top_n), pool.size());
  rep.baseline_sample_size = static_cast<Eigen::Index>(n);
  rep.baseline_trials = opts.baseline_trials;
  if (n >= 2) {
    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> idx(pool.size());
    std::vector<double> sample(n);
    for (int t = 0; t < opts.baseline_trials; ++t) {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      // Partial Fisher-Yates: the first n slots become a uniform sample.
      for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        sample[i] = pool[idx[i]];
      }
      rep.baseline_mean_variance += sample_variance(sample);
      rep.baseline_mean_iqr += interquartile_range(sample);
    }
    rep.baseline_mean_variance /= opts.baseline_trials;
    rep.baseline_mean_iqr /= opts.baseline_trials;
  }
  return rep;
}

Correlation correlate_with_events(const Vector& signature, const Vector& events) {
  if (signature.size() != events.size()) {
    throw Error(ErrorCode::ShapeMismatch, "correlate_with_events: series lengths differ");
  }
  const Eigen::Index n = signature.size();
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "correlate_with_events: need at least 3 points");
  const Vector a = signature.array() - signature.mean();
  const Vector b = events.array() - events.mean();
  const double sa = a.norm();
  const double sb = b.norm();
  if (sa == 0.0 || sb == 0.0) throw Error(ErrorCode::ZeroNorm, "correlate_with_events: constant series");
  Correlation c;
  c.n = n;
  c.r = std::clamp(a.dot(b) / (sa * sb), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - c.r * c.r;
  if (denom <= 0.0) {
    c.p = 0.0;
  } else {
    const double t = std::abs(c.r) * std::sqrt(df / denom);
    const boost::math::students_t dist(df);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  }
  return c;
}

EventSeries load_event_series(std::istream& in) {
  EventSeries s;
  read_table(in, {"user_id", "date", "count"}, "event series", [&](const std::vector<std::string>& f) {
    const auto v = csv::to_double(f[2]);
    const auto user = csv::trim(f[0]);
    const auto date = csv::trim(f[1]);
    if (!v || user.empty() || date.size() != 10) return false;
    s.by_user[std::string(user)][std::string(date)] += *v;
    return true;
  });
  return s;
}

Vector resample_events(const EventSeries& series, const std::vector<std::string>& members,
                       const TemporalSignature& sig, int utc_offset_minutes) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(sig.timestamps.size()));
  if (sig.timestamps.empty() || sig.bin_seconds <= 0) return out;
  const std::int64_t start = sig.timestamps.front();
  for (const auto& user : members) {
    const auto it = series.by_user.find(user);
    if (it == series.by_user.end()) continue;
    for (const auto& [date, count] : it->second) {
      const std::int64_t t = StudyWindow::from_local_date(date, utc_offset_minutes, 1).start;
      if (t < start) continue;
      const std::int64_t bin = (t - start) / sig.bin_seconds;
      if (bin < out.size()) out(static_cast<Eigen::Index>(bin)) += count;
    }
  }
  return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "adjusted_rand_index: label counts differ");
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  const auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, v] : joint) sum_joint += c2(v);
  for (const auto& [_, v] : ra) sum_a += c2(v);
  for (const auto& [_, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (sum_joint - expected) / (max_index - expected);
}

}  // namespace privsurf

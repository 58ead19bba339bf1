#pragma once

// Experiment runner: configuration, the four scans, and their output.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "dlab/density_lab.hpp"
#include "dlab/errors.hpp"
#include "dlab/parallel.hpp"
#include "dlab/perm_lab.hpp"
#include "dlab/poly_roots.hpp"
#include "dlab/rng.hpp"
#include "dlab/sign_seq.hpp"
#include "json.hpp"

namespace dlab {

// Configuration

enum class DistKind { Rademacher, Gaussian, Uniform, Cauchy, Atom0, Multiset };

struct Dist {
  DistKind kind = DistKind::Rademacher;
  double p0 = 0;               // atom0: P{coefficient = 0}; the rest is standard Gaussian
  std::vector<double> values;  // multiset: tiled cyclically to n + 1 entries, then shuffled
};

inline const char* to_string(DistKind k) {
  switch (k) {
    case DistKind::Rademacher: return "rademacher";
    case DistKind::Gaussian: return "gaussian";
    case DistKind::Uniform: return "uniform";
    case DistKind::Cauchy: return "cauchy";
    case DistKind::Atom0: return "atom0";
    case DistKind::Multiset: return "multiset";
  }
  return "?";
}

struct ExperimentConfig {
  std::string experiment = "zero-scan";
  std::vector<std::size_t> n_list{16, 32, 64};
  std::uint64_t trials = 1000;
  Dist dist;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out;  // empty: standard output
  std::string format = "csv";

  // ac-scan
  std::vector<std::string> families{"ap", "gaussian", "two_atom"};
  std::vector<Rational> L_grid{Rational(0), Rational(1, 2), Rational(1), Rational(2)};
  Rational h = 1;
  std::size_t exact_cap = 10;
  std::size_t draws = 1;  // weight draws averaged for random families

  // density-scan
  std::vector<double> weights;  // empty: normalized Gaussian draw of length n_list[0]
  std::size_t grid_points = 201;
  double tol = 1e-8;
  double lambda_max = 1e9;

  void validate() const;
};

namespace detail {

inline std::string trim_copy(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::string body = trim_copy(s);
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::stringstream ss(body);
  while (std::getline(ss, cur, ',')) {
    cur = trim_copy(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a real number, got '" + v + "'");
  }
}

inline Rational parse_rational_or_decimal(const std::string& key, const std::string& v) {
  try {
    return parse_rational(v);
  } catch (const ParseError&) {
  }
  const double x = parse_real(key, v);
  return dyadic(x);
}

// "4..10" expands to 4,5,...,10; "16..1024x2" doubles.
inline std::vector<std::size_t> parse_n_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_u64("n_list", item));
      continue;
    }
    const auto lo = parse_u64("n_list", item.substr(0, dots));
    std::string rest = item.substr(dots + 2);
    std::uint64_t factor = 0;
    if (const auto x = rest.find('x'); x != std::string::npos) {
      factor = parse_u64("n_list", rest.substr(x + 1));
      rest = rest.substr(0, x);
      if (factor < 2) throw ConfigError("n_list growth factor must be at least 2");
    }
    const auto hi = parse_u64("n_list", rest);
    if (lo > hi || lo == 0) throw ConfigError("bad n_list range '" + item + "'");
    for (std::uint64_t n = lo; n <= hi; n = factor ? n * factor : n + 1) out.push_back(n);
  }
  return out;
}

inline DistKind parse_dist_kind(const std::string& v) {
  if (v == "rademacher") return DistKind::Rademacher;
  if (v == "gaussian") return DistKind::Gaussian;
  if (v == "uniform") return DistKind::Uniform;
  if (v == "cauchy") return DistKind::Cauchy;
  if (v == "atom0") return DistKind::Atom0;
  if (v == "multiset") return DistKind::Multiset;
  throw ConfigError("unknown dist '" + v + "'");
}

// "2" rather than "2/1" in metric labels
inline std::string label(const Rational& q) {
  return q.get_den() == 1 ? q.get_num().get_str() : to_text(q);
}

}  // namespace detail

/// Sets one field from its text form. Keys match the ExperimentConfig
/// members; `n` is accepted for n_list and `dist` also takes the compact
/// forms "atom0(0.3)" and "multiset(1,1,2)".
inline void apply_setting(ExperimentConfig& c, const std::string& key_in, const std::string& value_in) {
  const std::string key = detail::trim_copy(key_in);
  const std::string v = detail::trim_copy(value_in);
  if (key == "experiment") {
    c.experiment = v;
  } else if (key == "n_list" || key == "n") {
    c.n_list = detail::parse_n_list(v);
  } else if (key == "trials") {
    c.trials = detail::parse_u64(key, v);
  } else if (key == "dist") {
    const auto paren = v.find('(');
    if (paren != std::string::npos && !v.empty() && v.back() == ')') {
      c.dist.kind = detail::parse_dist_kind(v.substr(0, paren));
      const std::string arg = v.substr(paren + 1, v.size() - paren - 2);
      if (c.dist.kind == DistKind::Atom0) apply_setting(c, "p0", arg);
      else if (c.dist.kind == DistKind::Multiset) apply_setting(c, "values", arg);
      else throw ConfigError("dist '" + v + "' takes no argument");
    } else {
      c.dist.kind = detail::parse_dist_kind(v);
    }
  } else if (key == "p0") {
    c.dist.p0 = detail::parse_real(key, v);
  } else if (key == "values") {
    c.dist.values.clear();
    for (const auto& s : detail::split_list(v)) c.dist.values.push_back(detail::parse_real(key, s));
  } else if (key == "seed") {
    c.seed = detail::parse_u64(key, v);
  } else if (key == "workers") {
    c.workers = static_cast<unsigned>(detail::parse_u64(key, v));
  } else if (key == "out") {
    c.out = v;
  } else if (key == "format") {
    c.format = v;
  } else if (key == "families") {
    c.families = detail::split_list(v);
  } else if (key == "L_grid") {
    c.L_grid.clear();
    for (const auto& s : detail::split_list(v)) c.L_grid.push_back(detail::parse_rational_or_decimal(key, s));
  } else if (key == "h") {
    c.h = detail::parse_rational_or_decimal(key, v);
  } else if (key == "exact_cap") {
    c.exact_cap = detail::parse_u64(key, v);
  } else if (key == "draws") {
    c.draws = detail::parse_u64(key, v);
  } else if (key == "weights") {
    c.weights.clear();
    for (const auto& s : detail::split_list(v)) c.weights.push_back(detail::parse_real(key, s));
  } else if (key == "grid_points") {
    c.grid_points = detail::parse_u64(key, v);
  } else if (key == "tol") {
    c.tol = detail::parse_real(key, v);
  } else if (key == "lambda_max") {
    c.lambda_max = detail::parse_real(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void ExperimentConfig::validate() const {
  static const std::vector<std::string> kinds{"zero-scan", "ac-scan", "props", "density-scan"};
  if (std::find(kinds.begin(), kinds.end(), experiment) == kinds.end())
    throw ConfigError("unknown experiment '" + experiment + "'");
  if (n_list.empty()) throw ConfigError("n_list must be nonempty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0) throw ConfigError("n_list entries must be positive");
    if (i && n_list[i] <= n_list[i - 1]) throw ConfigError("n_list must be strictly ascending");
  }
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
  if (dist.kind == DistKind::Atom0 && !(dist.p0 >= 0 && dist.p0 < 1)) throw ConfigError("p0 must lie in [0, 1)");
  if (dist.kind == DistKind::Multiset) {
    if (dist.values.empty()) throw ConfigError("multiset needs values");
    if (std::all_of(dist.values.begin(), dist.values.end(), [](double x) { return x == 0; }))
      throw ConfigError("multiset values must not all be zero");
  }
  if (families.empty()) throw ConfigError("families must be nonempty");
  for (const auto& f : families)
    if (f != "ap" && f != "gaussian" && f != "two_atom") throw ConfigError("unknown weight family '" + f + "'");
  if (L_grid.empty()) throw ConfigError("L_grid must be nonempty");
  if (h <= 0) throw ConfigError("h must be positive");
  if (draws == 0) throw ConfigError("draws must be at least 1");
  if (grid_points == 0) throw ConfigError("grid_points must be at least 1");
  if (!(tol > 0) || !(lambda_max > 0)) throw ConfigError("tol and lambda_max must be positive");
  for (double w : weights)
    if (w == 0) throw ConfigError("weights must be nonzero");
  if (weights.size() > kClosedFormCap) throw ConfigError("at most 20 weights");
}

/// Flat key = value text (# starts a comment) or a JSON object.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  const std::string body = detail::trim_copy(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("JSON config must be an object");
    for (const auto& [k, v] : j.items()) {
      std::string s;
      if (v.is_string()) s = v.get<std::string>();
      else if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) s += ",";
          s += v[i].is_string() ? v[i].get<std::string>() : v[i].dump();
        }
      } else s = v.dump();
      apply_setting(base, k, s);
    }
    return base;
  }
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["n_list"] = c.n_list;
  j["trials"] = c.trials;
  j["dist"] = to_string(c.dist.kind);
  if (c.dist.kind == DistKind::Atom0) j["p0"] = c.dist.p0;
  if (c.dist.kind == DistKind::Multiset) j["values"] = c.dist.values;
  j["seed"] = c.seed;
  j["format"] = c.format;
  j["families"] = c.families;
  std::vector<std::string> Ls;
  for (const auto& L : c.L_grid) Ls.push_back(detail::label(L));
  j["L_grid"] = Ls;
  j["h"] = detail::label(c.h);
  j["exact_cap"] = c.exact_cap;
  j["draws"] = c.draws;
  if (!c.weights.empty()) j["weights"] = c.weights;
  j["grid_points"] = c.grid_points;
  j["tol"] = c.tol;
  j["lambda_max"] = c.lambda_max;
  j["rng_id"] = kRngId;
  return j;
}

// Results

struct ResultRow {
  std::string experiment;
  std::size_t n = 0;
  std::string metric;
  double value = 0;
  double stderr_ = std::numeric_limits<double>::quiet_NaN();  // empty in CSV when not applicable
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  std::int64_t wall_ms = 0;

  static std::string csv_header() { return "experiment,n,metric,value,stderr,trials,seed,wall_ms"; }

  std::string csv_row() const {
    return experiment + "," + std::to_string(n) + "," + metric + "," + fmt_double(value) + "," +
           (std::isnan(stderr_) ? std::string() : fmt_double(stderr_)) + "," + std::to_string(trials) + "," +
           std::to_string(seed) + "," + std::to_string(wall_ms);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["n"] = n;
    j["metric"] = metric;
    j["value"] = std::isfinite(value) ? nlohmann::json(value) : nlohmann::json(fmt_double(value));
    j["stderr"] = std::isnan(stderr_) ? nlohmann::json(nullptr) : nlohmann::json(stderr_);
    j["trials"] = trials;
    j["seed"] = seed;
    j["wall_ms"] = wall_ms;
    return j;
  }
};

struct DensityScanRow {
  double t = 0, p_exact = 0, p_fourier = 0, envelope_value = 0;
  static std::string csv_header() { return "t,p_exact,p_fourier,envelope_value"; }
  std::string csv_row() const {
    return fmt_double(t) + "," + fmt_double(p_exact) + "," + fmt_double(p_fourier) + "," + fmt_double(envelope_value);
  }
};

struct RunResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> event_rows;  // ac-scan: one event CSV row per probability
  std::vector<DensityScanRow> density_rows;
  nlohmann::json metadata;
  std::vector<std::string> failures;  // invariants that did not hold

  bool ok() const { return failures.empty(); }
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void draw_coefficients(const Dist& d, Rng& rng, std::vector<double>& c) {
  switch (d.kind) {
    case DistKind::Rademacher:
      for (auto& x : c) x = rng.rademacher();
      break;
    case DistKind::Gaussian:
      for (auto& x : c) x = rng.gaussian();
      break;
    case DistKind::Uniform:
      for (auto& x : c) x = rng.uniform_sym();
      break;
    case DistKind::Cauchy:
      for (auto& x : c) x = rng.cauchy();
      break;
    case DistKind::Atom0:
      for (auto& x : c) x = rng.uniform01() < d.p0 ? 0.0 : rng.gaussian();
      break;
    case DistKind::Multiset:
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = d.values[i % d.values.size()];
      rng.shuffle(std::span<double>(c));
      break;
  }
}

struct ZeroAccumulator {
  std::uint64_t nonzero = 0, all_zero = 0, violations = 0, fallbacks = 0;
  double s_nstar = 0, s_nstar2 = 0, s_total = 0, s_total2 = 0, s_zero = 0, s_zero2 = 0;
  std::array<double, 7> regions{};  // zero, one, minus one, (0,1), (-1,0), (1,inf), (-inf,-1)
  std::vector<std::uint64_t> zero_hist;

  void merge(const ZeroAccumulator& o) {
    nonzero += o.nonzero;
    all_zero += o.all_zero;
    violations += o.violations;
    fallbacks += o.fallbacks;
    s_nstar += o.s_nstar;
    s_nstar2 += o.s_nstar2;
    s_total += o.s_total;
    s_total2 += o.s_total2;
    s_zero += o.s_zero;
    s_zero2 += o.s_zero2;
    for (std::size_t i = 0; i < regions.size(); ++i) regions[i] += o.regions[i];
    if (zero_hist.size() < o.zero_hist.size()) zero_hist.resize(o.zero_hist.size(), 0);
    for (std::size_t i = 0; i < o.zero_hist.size(); ++i) zero_hist[i] += o.zero_hist[i];
  }
};

inline std::pair<double, double> mean_and_stderr(double s, double s2, std::uint64_t N) {
  if (N == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double m = s / static_cast<double>(N);
  if (N == 1) return {m, std::numeric_limits<double>::quiet_NaN()};
  const double var = std::max(0.0, (s2 - s * m) / static_cast<double>(N - 1));
  return {m, std::sqrt(var / static_cast<double>(N))};
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }


}  // namespace detail

/// Law of the multiplicity at 0 given P != 0 under iid coefficients with
/// P{0} = p0: P{K = k} = p0^k (1 - p0) / (1 - p0^(n+1)), k = 0..n.
inline std::vector<double> truncated_geometric_pmf(double p0, std::size_t n) {
  std::vector<double> p(n + 1);
  const double norm = 1 - std::pow(p0, static_cast<double>(n + 1));
  for (std::size_t k = 0; k <= n; ++k) p[k] = std::pow(p0, static_cast<double>(k)) * (1 - p0) / norm;
  return p;
}

inline double truncated_geometric_mean(double p0, std::size_t n) {
  const auto p = truncated_geometric_pmf(p0, n);
  double m = 0;
  for (std::size_t k = 0; k <= n; ++k) m += static_cast<double>(k) * p[k];
  return m;
}

struct ChiSquare {
  double statistic = 0;
  std::size_t df = 0;
  double p_value = 1;
};

/// Pearson test of counts against pmf. Cells with expected count under 5
/// are pooled from the right.
inline ChiSquare chi_square_test(const std::vector<std::uint64_t>& counts, const std::vector<double>& pmf) {
  std::uint64_t N = 0;
  for (auto c : counts) N += c;
  std::vector<double> obs, expct;
  double o_acc = 0, e_acc = 0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    o_acc += k < counts.size() ? static_cast<double>(counts[k]) : 0.0;
    e_acc += pmf[k] * static_cast<double>(N);
    const bool last = k + 1 == pmf.size();
    double rest = 0;
    for (std::size_t j = k + 1; j < pmf.size(); ++j) rest += pmf[j] * static_cast<double>(N);
    if ((e_acc >= 5 && rest >= 5) || last) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
      o_acc = e_acc = 0;
    }
  }
  ChiSquare r;
  for (std::size_t i = 0; i < obs.size(); ++i) r.statistic += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  r.df = obs.size() > 1 ? obs.size() - 1 : 0;
  if (r.df > 0) {
    const boost::math::chi_squared dist(static_cast<double>(r.df));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  return r;
}

// Zero scan

inline RunResult run_zero_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  res.metadata = config_json(cfg);
  const std::string ex = "zero-scan";
  for (std::size_t n : cfg.n_list) {
    detail::Stopwatch sw;
    const std::uint64_t seed_n = derive_seed(cfg.seed, n);
    ChunkPlan plan{.total = cfg.trials, .chunk_size = 256, .seed = seed_n, .workers = cfg.workers};
    const auto acc = chunked_reduce(
        plan, detail::ZeroAccumulator{},
        [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
          detail::ZeroAccumulator a;
          a.zero_hist.assign(n + 1, 0);
          std::vector<double> c(n + 1);
          for (auto i = b; i < e; ++i) {
            detail::draw_coefficients(cfg.dist, rng, c);
            if (std::all_of(c.begin(), c.end(), [](double x) { return x == 0; })) {
              ++a.all_zero;
              continue;
            }
            bool fb = false;
            const RootTally t = tally_sampled(c, &fb);
            const auto rep = bound_check_sampled(c, t);
            ++a.nonzero;
            a.fallbacks += fb;
            a.violations += rep.holds() ? 0 : 1;
            const double ns = static_cast<double>(t.n_star), tot = static_cast<double>(t.total());
            a.s_nstar += ns;
            a.s_nstar2 += ns * ns;
            a.s_total += tot;
            a.s_total2 += tot * tot;
            a.s_zero += static_cast<double>(t.at_zero);
            a.s_zero2 += static_cast<double>(t.at_zero * t.at_zero);
            const std::array<std::size_t, 7> r{t.at_zero,     t.at_one,      t.at_minus_one, t.in_pos_unit,
                                               t.in_neg_unit, t.pos_outside, t.neg_outside};
            for (std::size_t k = 0; k < 7; ++k) a.regions[k] += static_cast<double>(r[k]);
            ++a.zero_hist[std::min<std::size_t>(t.at_zero, n)];
          }
          return a;
        },
        [](detail::ZeroAccumulator& x, const detail::ZeroAccumulator& y) { x.merge(y); });

    const std::int64_t ms = sw.ms();
    auto row = [&](const std::string& metric, double value, double se = detail::nan()) {
      res.rows.push_back({ex, n, metric, value, se, cfg.trials, cfg.seed, ms});
    };
    const auto [mn, mn_se] = detail::mean_and_stderr(acc.s_nstar, acc.s_nstar2, acc.nonzero);
    const auto [mt, mt_se] = detail::mean_and_stderr(acc.s_total, acc.s_total2, acc.nonzero);
    const double ln = std::log(static_cast<double>(n));
    row("mean_n_star", mn, mn_se);
    row("mean_n_star_over_ln_n", mn / ln, mn_se / ln);
    row("mean_real_roots", mt, mt_se);
    static const char* names[7] = {"mean_at_zero",     "mean_at_one",      "mean_at_minus_one", "mean_in_0_1",
                                   "mean_in_minus1_0", "mean_in_1_inf",    "mean_in_minus_inf_minus1"};
    for (std::size_t k = 0; k < 7; ++k)
      row(names[k], acc.nonzero ? acc.regions[k] / static_cast<double>(acc.nonzero) : detail::nan());
    row("bound_violations", static_cast<double>(acc.violations));
    row("bound_pass_rate", acc.nonzero ? 1.0 - static_cast<double>(acc.violations) / static_cast<double>(acc.nonzero) : 1.0);
    row("all_zero_samples", static_cast<double>(acc.all_zero));
    row("exact_fallbacks", static_cast<double>(acc.fallbacks));
    if (acc.violations)
      res.failures.push_back("n=" + std::to_string(n) + ": " + std::to_string(acc.violations) + " bound violations");

    if (cfg.dist.kind == DistKind::Atom0) {
      const auto [mz, mz_se] = detail::mean_and_stderr(acc.s_zero, acc.s_zero2, acc.nonzero);
      const double cap = cfg.dist.p0 / (1 - cfg.dist.p0);
      const double exact = truncated_geometric_mean(cfg.dist.p0, n);
      const auto chi = chi_square_test(acc.zero_hist, truncated_geometric_pmf(cfg.dist.p0, n));
      row("mean_zero_multiplicity", mz, mz_se);
      row("zero_multiplicity_cap", cap);
      row("zero_multiplicity_exact_mean", exact);
      row("zero_multiplicity_chi2", chi.statistic);
      row("zero_multiplicity_chi2_pvalue", chi.p_value);
      if (!(mz <= cap + 3 * mz_se)) res.failures.push_back("n=" + std::to_string(n) + ": zero multiplicity above p0/(1-p0)");
      if (!(chi.p_value > 0.001)) res.failures.push_back("n=" + std::to_string(n) + ": zero multiplicity law rejected");
    }
  }
  return res;
}

// Anti-concentration scan

/// Least-squares slope of y on x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return detail::nan();
  return detail::fit_line(x, y).first;
}

struct WindowProbability {
  double p = 0;
  double stderr_ = 0;
  std::uint64_t trials = 0;  // 0 for exact enumeration
  std::vector<std::string> event_rows;
};

/// WINDOW{L, h} probability for a weight family, averaged over cfg.draws
/// weight draws when the family is random. Exact for n <= exact_cap.
inline WindowProbability window_probability(const ExperimentConfig& cfg, const std::string& family, std::size_t n,
                                            const Rational& L) {
  const std::size_t draws = family == "gaussian" ? cfg.draws : 1;
  WindowProbability out;
  double s = 0, s2 = 0, se2 = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    const auto u = weight_family(family, n, derive_seed(cfg.seed, d));
    const auto ev = PermEvent::window(u, L, cfg.h);
    ProbEstimate pe;
    if (n <= cfg.exact_cap) {
      pe = event_probability_exact(ev, n, {.cap = cfg.exact_cap, .workers = cfg.workers});
    } else {
      const std::uint64_t s_seed = derive_seed(derive_seed(cfg.seed, n), d);
      pe = event_probability_mc(ev, n, cfg.trials, s_seed, {.workers = cfg.workers});
      out.trials = cfg.trials;
    }
    s += pe.p_hat;
    s2 += pe.p_hat * pe.p_hat;
    se2 += pe.stderr_ * pe.stderr_;
    out.event_rows.push_back(event_csv_row(ev, pe));
  }
  const double D = static_cast<double>(draws);
  out.p = s / D;
  // spread across draws plus the Monte Carlo error of each draw
  const double between = draws > 1 ? std::max(0.0, (s2 - s * out.p) / (D - 1)) / D : 0.0;
  out.stderr_ = std::sqrt(between + se2 / (D * D));
  return out;
}

inline RunResult run_anticoncentration_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  res.metadata = config_json(cfg);
  const std::string ex = "ac-scan";
  for (const auto& fam : cfg.families) {
    std::vector<double> log_n, log_p0;
    for (std::size_t n : cfg.n_list) {
      std::vector<double> absL, logp;
      for (const auto& L : cfg.L_grid) {
        detail::Stopwatch sw;
        const auto wp = window_probability(cfg, fam, n, L);
        const std::int64_t ms = sw.ms();
        const std::string tag = fam + ".L=" + detail::label(L);
        // exact rows count the permutations visited
        const std::uint64_t tr = wp.trials ? wp.trials : detail::factorial(n).get_ui();
        res.rows.push_back({ex, n, "p." + tag, wp.p, wp.stderr_, tr, cfg.seed, ms});
        res.rows.push_back({ex, n, "n_p." + tag, static_cast<double>(n) * wp.p, static_cast<double>(n) * wp.stderr_, tr,
                            cfg.seed, ms});
        res.event_rows.insert(res.event_rows.end(), wp.event_rows.begin(), wp.event_rows.end());
        if (wp.p > 0) {
          absL.push_back(std::fabs(L.get_d()));
          logp.push_back(std::log(wp.p));
        }
        if (L == 0 && wp.p > 0) {
          log_n.push_back(std::log(static_cast<double>(n)));
          log_p0.push_back(std::log(wp.p));
        }
      }
      res.rows.push_back({ex, n, "slope_logp_absL." + fam, fit_slope(absL, logp), detail::nan(), cfg.trials, cfg.seed, 0});
    }
    res.rows.push_back({ex, 0, "slope_logp_logn." + fam, fit_slope(log_n, log_p0), detail::nan(), cfg.trials, cfg.seed, 0});
  }
  return res;
}

// Property suite

namespace detail {

struct PropertyOutcome {
  std::string name;
  std::size_t n = 0;
  double value = 0;
  bool pass = false;
  std::uint64_t count = 0;
};

inline std::vector<double> unit_gaussian_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double s = 0;
  for (auto& x : w) {
    x = rng.gaussian();
    s += x * x;
  }
  for (auto& x : w) x /= std::sqrt(s);
  return w;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(std::span<std::size_t>(p));
  return p;
}

}  // namespace detail

/// Every module invariant at modest sizes; cfg.trials scales the sampled
/// checks. One value row and one pass row per invariant.
inline RunResult run_property_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  res.metadata = config_json(cfg);
  const std::string ex = "props";
  const std::uint64_t T = cfg.trials;
  std::vector<detail::PropertyOutcome> outs;
  std::vector<std::int64_t> times;
  auto record = [&](detail::PropertyOutcome o, const detail::Stopwatch& sw) {
    outs.push_back(std::move(o));
    times.push_back(sw.ms());
  };

  {  // sign-change bounds on sampled polynomials
    detail::Stopwatch sw;
    ChunkPlan plan{.total = T, .chunk_size = 256, .seed = derive_seed(cfg.seed, 1), .workers = cfg.workers};
    const auto bad = chunked_reduce(
        plan, std::uint64_t{0},
        [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
          std::uint64_t v = 0;
          for (auto i = b; i < e; ++i) {
            std::vector<double> c(2 + i % 64);
            for (auto& x : c) x = (i % 2) ? rng.gaussian() : rng.rademacher();
            v += bound_check_sampled(c, tally_sampled(c)).holds() ? 0 : 1;
          }
          return v;
        },
        [](std::uint64_t& a, std::uint64_t x) { a += x; });
    record({"sign_change_bound_violations", 64, static_cast<double>(bad), bad == 0, T}, sw);
  }
  for (int parity = 0; parity < 2; ++parity) {  // alternating decomposition identity
    detail::Stopwatch sw;
    const std::uint64_t M = 10 * T;
    ChunkPlan plan{.total = M, .chunk_size = 4096, .seed = derive_seed(cfg.seed, 2 + parity), .workers = cfg.workers};
    const double worst = chunked_reduce(
        plan, 0.0,
        [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
          double w = 0;
          for (auto i = b; i < e; ++i) {
            const std::size_t m = 1 + rng.below(32);
            std::vector<double> xi(parity ? 2 * m : 2 * m + 1);
            for (auto& x : xi) x = rng.gaussian();
            const auto d = alt_decompose<double>(xi);
            w = std::max(w, d.residual / alt_residual_scale(xi));
          }
          return w;
        },
        [](double& a, double x) { a = std::max(a, x); });
    record({parity ? "alt_decompose_residual_even" : "alt_decompose_residual_odd", 64, worst, worst <= 1e-10, M}, sw);
  }
  {  // variance bound on the ordered simplex
    detail::Stopwatch sw;
    Rng rng(derive_seed(cfg.seed, 4));
    std::uint64_t bad = 0, cnt = 0;
    double worst_ratio = 0;
    for (std::size_t n = 2; n <= 8; ++n)
      for (int k = 0; k < 100; ++k) {
        const auto w = detail::unit_gaussian_weights(rng, n);
        const auto s = detail::random_permutation(rng, n);
        const auto r = simplex_variance(w, s);
        bad += r.holds ? 0 : 1;
        ++cnt;
        if (r.exact_bound > 0) worst_ratio = std::max(worst_ratio, Rational(r.exact_variance / r.exact_bound).get_d());
      }
    record({"simplex_variance_violations", 8, static_cast<double>(bad), bad == 0, cnt}, sw);
    record({"simplex_variance_max_ratio", 8, worst_ratio, worst_ratio <= 1.0, cnt}, sw);
  }
  {  // beta^2 between B^2/5 and B^2 on every good sign pattern
    detail::Stopwatch sw;
    Rng rng(derive_seed(cfg.seed, 5));
    std::uint64_t bad = 0, cnt = 0;
    for (std::size_t m = 1; m <= 12; ++m)
      for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> eta(m);
        for (auto& x : eta) x = rng.gaussian();
        const auto er = dyadic(std::span<const double>(eta));
        std::vector<int> sg(m);
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
          for (std::size_t i = 0; i < m; ++i) sg[i] = (mask >> i & 1) ? 1 : -1;
          const auto r = beta_B_check<Rational>(er, sg);
          if (!r.good) continue;
          ++cnt;
          bad += r.bound_holds ? 0 : 1;
        }
      }
    record({"beta_B_violations", 12, static_cast<double>(bad), bad == 0, cnt}, sw);
  }
  {  // local goodness tail against 2 exp(-m/8)
    detail::Stopwatch sw;
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t m = 1; m <= 64; ++m)
      margin = std::min(margin, 2 * std::exp(-static_cast<double>(m) / 8) - local_goodness_tail(m).get_d());
    record({"goodness_tail_margin", 64, margin, margin >= 0, 64}, sw);
  }
  {  // Rademacher tails under the Hoeffding bound
    detail::Stopwatch sw;
    Rng rng(derive_seed(cfg.seed, 6));
    std::uint64_t bad = 0, cnt = 0;
    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 100; ++k) {
      std::vector<double> a(1 + rng.below(14));
      for (auto& x : a) x = rng.uniform_open();
      for (double t : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0}) {
        const double d = hoeffding_bound(a, t) - rademacher_tail_exact(a, t);
        margin = std::min(margin, d);
        bad += d < 0;
        ++cnt;
      }
    }
    record({"hoeffding_violations", 14, static_cast<double>(bad), bad == 0, cnt}, sw);
    record({"hoeffding_min_margin", 14, margin, margin >= 0, cnt}, sw);
  }
  {  // density shape
    detail::Stopwatch sw;
    Rng rng(derive_seed(cfg.seed, 7));
    double mass_err = 0;
    std::uint64_t lc = 0, uni = 0;
    for (int k = 0; k < 8; ++k) {
      const auto m = build_density_model(detail::unit_gaussian_weights(rng, 2 + rng.below(9)));
      mass_err = std::max(mass_err, std::fabs(m.total_mass - 1));
      lc += logconcavity_check(m, interior_grid(m, 400));
      uni += envelope_fit(m).violations;
    }
    record({"density_mass_error", 10, mass_err, mass_err <= 1e-9, 8}, sw);
    record({"logconcavity_violations", 10, static_cast<double>(lc), lc == 0, 8}, sw);
    record({"unimodality_violations", 10, static_cast<double>(uni), uni == 0, 8}, sw);
  }
  {  // two forms of the simplex functional
    detail::Stopwatch sw;
    Rng rng(derive_seed(cfg.seed, 8));
    double worst = 0;
    for (std::uint64_t k = 0; k < T; ++k) {
      const std::size_t n = 1 + rng.below(12);
      std::vector<double> x(n), w(n);
      for (auto& v : x) v = rng.uniform_open();
      for (auto& v : w) v = rng.gaussian();
      if (std::set<double>(x.begin(), x.end()).size() != n) continue;
      const auto f = simplex_F(x, w);
      worst = std::max(worst, std::fabs(f.F - f.F_integral));
    }
    record({"simplex_F_two_form_diff", 12, worst, worst <= 1e-10, T}, sw);
  }
  // p_k is O(1/k); below ~2e4 draws k = 300 may see no hits at all
  const std::uint64_t trend_trials = std::max<std::uint64_t>(T, 20000);
  for (int alt = 0; alt < 2; ++alt) {  // k p_k stays bounded for the relative events
    detail::Stopwatch sw;
    std::vector<double> kp;
    for (std::size_t k : {10, 30, 100, 300}) {
      const auto e = PermEvent::relative_iid(XiLaw::Gaussian, k, alt == 1);
      const auto p =
          event_probability_mc(e, k, trend_trials, derive_seed(cfg.seed, 100 + 10 * alt + k), {.workers = cfg.workers});
      kp.push_back(static_cast<double>(k) * p.p_hat);
    }
    const double lo = *std::min_element(kp.begin(), kp.end()), hi = *std::max_element(kp.begin(), kp.end());
    const double ratio = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    record({alt ? "relative_alt_trend_ratio" : "relative_trend_ratio", 300, ratio, ratio <= 3, trend_trials}, sw);
  }

  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto& o = outs[i];
    res.rows.push_back({ex, o.n, o.name, o.value, detail::nan(), o.count, cfg.seed, times[i]});
    res.rows.push_back({ex, o.n, o.name + ".pass", o.pass ? 1.0 : 0.0, detail::nan(), o.count, cfg.seed, times[i]});
    if (!o.pass) res.failures.push_back(o.name + " = " + fmt_double(o.value));
  }
  return res;
}

// Density scan

inline RunResult run_density_scan(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  std::vector<double> w = cfg.weights;
  if (w.empty()) {
    if (cfg.n_list.size() != 1) throw ConfigError("density-scan needs weights or a single n");
    Rng rng(derive_seed(cfg.seed, cfg.n_list[0]));
    w = detail::unit_gaussian_weights(rng, cfg.n_list[0]);
  }
  res.metadata = config_json(cfg);
  res.metadata["weights"] = w;
  const auto model = build_density_model(w);
  res.metadata["model"] = model.to_json();
  const auto env = envelope_fit(model);
  const double h = model.support_half_width();
  const auto grid = linear_grid(-1.1 * h, 1.1 * h, cfg.grid_points);
  const auto vals = parallel_map<DensityScanRow>(grid.size(), cfg.workers, [&](std::size_t i) {
    const double t = grid[i];
    return DensityScanRow{t, exact_density(w, t), fourier_density(w, t, cfg.lambda_max, cfg.tol),
                          env.C * std::exp(-env.c * std::fabs(t))};
  });
  double worst = 0;
  std::uint64_t above = 0;
  for (const auto& r : vals) {
    worst = std::max(worst, std::fabs(r.p_exact - r.p_fourier));
    above += r.p_exact > r.envelope_value * (1 + 1e-12);
  }
  res.density_rows = vals;
  const std::size_t n = w.size();
  auto row = [&](const std::string& m, double v) {
    res.rows.push_back({"density-scan", n, m, v, detail::nan(), grid.size(), cfg.seed, 0});
  };
  row("max_exact_fourier_diff", worst);
  row("envelope_C", env.C);
  row("envelope_c_gauss", env.c_gauss);
  row("envelope_violations", static_cast<double>(above));
  row("unimodality_violations", static_cast<double>(env.violations));
  row("total_mass", model.total_mass);
  if (worst > cfg.tol) res.failures.push_back("exact and Fourier densities differ by " + fmt_double(worst));
  if (above || env.violations) res.failures.push_back("envelope or unimodality violated");
  return res;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "zero-scan") return run_zero_scan(cfg);
  if (cfg.experiment == "ac-scan") return run_anticoncentration_scan(cfg);
  if (cfg.experiment == "props") return run_property_suite(cfg);
  if (cfg.experiment == "density-scan") return run_density_scan(cfg);
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

// Output

inline std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::string s = ResultRow::csv_header() + "\n";
  for (const auto& r : rows) s += r.csv_row() + "\n";
  return s;
}

/// Main output document: ResultRow CSV, or the t/p table for density scans.
inline std::string render(const ExperimentConfig& cfg, const RunResult& r) {
  if (cfg.format == "json") {
    nlohmann::json j;
    j["metadata"] = r.metadata;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows) j["rows"].push_back(row.to_json());
    if (!r.density_rows.empty()) {
      j["density"] = nlohmann::json::array();
      for (const auto& d : r.density_rows)
        j["density"].push_back({{"t", d.t}, {"p_exact", d.p_exact}, {"p_fourier", d.p_fourier}, {"envelope_value", d.envelope_value}});
    }
    j["failures"] = r.failures;
    return j.dump(2) + "\n";
  }
  if (cfg.experiment == "density-scan") {
    std::string s = DensityScanRow::csv_header() + "\n";
    for (const auto& d : r.density_rows) s += d.csv_row() + "\n";
    return s;
  }
  return rows_csv(r.rows);
}

/// gnuplot script reading the CSV written to data_path.
inline std::string plot_script(const ExperimentConfig& cfg, const std::string& data_path) {
  std::ostringstream gp;
  gp << "set datafile separator ','\nset key outside\nset grid\n";
  gp << "set terminal pngcairo size 900,600\nset output '" << data_path << ".png'\n";
  if (cfg.experiment == "density-scan") {
    gp << "set xlabel 't'\nset ylabel 'density'\n";
    gp << "plot '" << data_path << "' every ::1 using 1:2 with lines title 'closed form', \\\n"
       << "     '' every ::1 using 1:3 with points pt 7 ps 0.4 title 'Fourier', \\\n"
       << "     '' every ::1 using 1:4 with lines dt 2 title 'C exp(-|t|/2)'\n";
  } else if (cfg.experiment == "zero-scan") {
    gp << "set logscale x 2\nset xlabel 'n'\nset ylabel 'mean N*'\n";
    gp << "plot '" << data_path << "' every ::1 using 2:(strcol(3) eq 'mean_n_star' ? $4 : 1/0):5 "
       << "with yerrorbars title 'mean N*', \\\n"
       << "     '' every ::1 using 2:(strcol(3) eq 'mean_n_star' ? log($2) : 1/0) with lines title 'ln n'\n";
  } else if (cfg.experiment == "ac-scan") {
    gp << "set logscale xy\nset xlabel 'n'\nset ylabel 'P(window), L = 0'\nplot ";
    for (std::size_t i = 0; i < cfg.families.size(); ++i) {
      const std::string m = "p." + cfg.families[i] + ".L=0";
      gp << (i ? ", \\\n     " : "") << "'" << data_path << "' every ::1 using 2:(strcol(3) eq '" << m
         << "' ? $4 : 1/0) with linespoints title '" << cfg.families[i] << "'";
    }
    gp << "\n";
  } else {
    gp << "set style data histograms\nset xtics rotate by -45\nset ylabel 'pass'\n";
    gp << "plot '" << data_path << "' every ::1 using (strstrt(strcol(3), '.pass') ? $4 : 1/0):xtic(3) title 'pass'\n";
  }
  return gp.str();
}

/// Writes the main output plus side files next to it: .meta.json, .gp, and
/// .events.csv for ac-scan. Empty cfg.out writes the main output to stdout.
inline void write_outputs(const ExperimentConfig& cfg, const RunResult& r, std::ostream& stdout_stream) {
  const std::string doc = render(cfg, r);
  if (cfg.out.empty()) {
    stdout_stream << doc;
    return;
  }
  auto put = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << text;
  };
  put(cfg.out, doc);
  nlohmann::json meta = r.metadata;
  meta["failures"] = r.failures;
  put(cfg.out + ".meta.json", meta.dump(2) + "\n");
  if (cfg.format == "csv") put(cfg.out + ".gp", plot_script(cfg, cfg.out));
  if (!r.event_rows.empty()) {
    std::string ev = ProbEstimate::csv_header() + "\n";
    for (const auto& e : r.event_rows) ev += e + "\n";
    put(cfg.out + ".events.csv", ev);
  }
}

}  // namespace dlab

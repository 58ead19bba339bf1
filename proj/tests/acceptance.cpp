// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--strict] [criterion numbers...]
//
// Exit status is 0 unless a criterion outside kKnownDeviations fails
// (--strict: unless any criterion fails).

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dlab/density_lab.hpp"
#include "dlab/xp_harness.hpp"

using namespace dlab;

namespace {

// Criteria allowed to fail without failing the run; see README, "Known deviations".
const std::set<int> kKnownDeviations{1};

struct Outcome {
  bool pass = false;
  std::string detail;
};

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

const ResultRow* find_row(const RunResult& r, std::size_t n, const std::string& metric) {
  for (const auto& row : r.rows)
    if (row.n == n && row.metric == metric) return &row;
  return nullptr;
}

double row_value(const RunResult& r, std::size_t n, const std::string& metric) {
  const auto* row = find_row(r, n, metric);
  if (!row) throw std::runtime_error("missing row " + metric + " n=" + std::to_string(n));
  return row->value;
}

// Kac density of real zeros for iid standard Gaussian coefficients, written
// as sd/t of the index k under weights t^{2k}; rho(0) = 1/pi.
double kac_rho(std::size_t n, double t) {
  if (t == 0) return 1 / std::numbers::pi;
  long double A = 0, M = 0, tk = 1;
  const long double t2 = static_cast<long double>(t) * t;
  std::vector<long double> wk(n + 1);
  for (std::size_t k = 0; k <= n; ++k, tk *= t2) {
    wk[k] = tk;
    A += tk;
    M += tk * k;
  }
  const long double mean = M / A;
  long double V = 0;
  for (std::size_t k = 0; k <= n; ++k) V += wk[k] * (k - mean) * (k - mean);
  return static_cast<double>(std::sqrt(V / A) / t) / std::numbers::pi;
}

double kac_expected_roots(std::size_t n) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double N = static_cast<double>(n);
  // the mass near t = 1 has width ~1/n
  std::vector<double> cuts{0.0};
  for (double k : {64.0, 16.0, 4.0, 1.0, 0.25})
    if (1 - k / N > cuts.back()) cuts.push_back(1 - k / N);
  cuts.push_back(1.0);
  double s = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    s += GK::integrate([n](double t) { return kac_rho(n, t); }, cuts[i], cuts[i + 1], 15, 1e-12);
  return 4 * s;
}

// 1 -------------------------------------------------------------------------

Outcome criterion1() {
  ExperimentConfig cfg;
  cfg.experiment = "ac-scan";
  cfg.n_list = {4, 5, 6, 7, 8, 9, 10};
  cfg.L_grid = {Rational(0)};
  cfg.draws = 16;  // fixed before looking at results; gaussian slopes are averaged over these draws
  cfg.seed = 2024;
  cfg.workers = workers();
  const auto r = run_anticoncentration_scan(cfg);
  Outcome o{true, ""};
  for (const auto& fam : cfg.families) {
    const double s = row_value(r, 0, "slope_logp_logn." + fam);
    const bool ok = s <= -0.7;
    o.pass = o.pass && ok;
    o.detail += fam + " slope " + fmt(s) + (ok ? "" : " (> -0.7)") + "; ";
  }
  o.detail += "n*p at n=10: ";
  for (const auto& fam : cfg.families) o.detail += fam + " " + fmt(row_value(r, 10, "n_p." + fam + ".L=0")) + " ";
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome criterion2() {
  ExperimentConfig cfg;
  cfg.seed = 77;
  cfg.workers = workers();
  Outcome o{true, ""};
  for (const auto& fam : cfg.families) {
    // exact at n = 9
    const std::size_t n = 9;
    const auto u = weight_family(fam, n, derive_seed(cfg.seed, 0));
    auto w = normalize_weights(u).w;
    std::sort(w.begin(), w.end());
    double smax = 0;  // rearrangement: largest attainable sum w_i pi(i)
    for (std::size_t i = 0; i < n; ++i) smax += w[i] * static_cast<double>(i + 1);
    double prev = 2;
    bool monotone = true, support_ok = true, reached_zero = false;
    std::string ps;
    for (const auto& L : cfg.L_grid) {
      const double p = window_probability(cfg, fam, n, L).p;
      monotone = monotone && p <= prev;
      prev = p;
      if (L.get_d() * n - 1 > smax + 1e-9) support_ok = support_ok && p == 0;
      reached_zero = reached_zero || p == 0;
      ps += fmt(p, 3) + " ";
    }
    // Monte Carlo at n = 200
    ExperimentConfig mc = cfg;
    mc.trials = 1000000;
    mc.exact_cap = 10;
    std::vector<double> absL, logp;
    bool decreasing = true;
    double last = std::numeric_limits<double>::infinity();
    for (const auto& L : cfg.L_grid) {
      const double p = window_probability(mc, fam, 200, L).p;
      if (p <= 0) continue;
      decreasing = decreasing && std::log(p) < last;
      last = std::log(p);
      absL.push_back(std::fabs(L.get_d()));
      logp.push_back(std::log(p));
    }
    const double slope = fit_slope(absL, logp);
    const bool ok = monotone && support_ok && reached_zero && decreasing && absL.size() >= 2 && slope < 0;
    o.pass = o.pass && ok;
    o.detail += fam + ": exact p(L) " + ps + "| n=200 slope " + fmt(slope) + " over " + std::to_string(absL.size()) +
                " L with p>0" + (ok ? "" : " FAILED") + "; ";
  }
  return o;
}

// 3 -------------------------------------------------------------------------

Outcome criterion3() {
  const std::vector<std::size_t> ns{16, 32, 64, 128, 256, 512, 1024};
  std::vector<double> oracle;
  for (auto n : ns) oracle.push_back(kac_expected_roots(n));

  auto scan = [&](DistKind k, std::uint64_t trials) {
    ExperimentConfig cfg;
    cfg.n_list = ns;
    cfg.trials = trials;
    cfg.dist.kind = k;
    cfg.seed = 31;
    cfg.workers = workers();
    return run_zero_scan(cfg);
  };
  auto ratio_over_ln = [&](const RunResult& r) {
    double lo = 1e300, hi = 0;
    for (auto n : ns) {
      const double v = row_value(r, n, "mean_n_star_over_ln_n");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return hi / lo;
  };

  Outcome o{true, ""};
  // 2% at n = 16 is only ~2.5 stderr with 4000 draws
  const auto g = scan(DistKind::Gaussian, 20000);
  double worst = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double rel = std::fabs(row_value(g, ns[i], "mean_real_roots") / oracle[i] - 1);
    worst = std::max(worst, rel);
  }
  o.pass = worst <= 0.02;
  o.detail = "gaussian: worst |mean N / Kac - 1| " + fmt(worst, 3) + " (Kac E N at 1024 = " + fmt(oracle.back(), 6) + ")";
  for (auto [name, r] : {std::pair<std::string, const RunResult*>{"gaussian", &g}}) {
    const double q = ratio_over_ln(*r);
    o.pass = o.pass && q <= 1.5;
    o.detail += "; " + name + " N*/ln n max/min " + fmt(q);
  }
  for (auto [name, k] : {std::pair<std::string, DistKind>{"rademacher", DistKind::Rademacher},
                         std::pair<std::string, DistKind>{"cauchy", DistKind::Cauchy}}) {
    const double q = ratio_over_ln(scan(k, 2000));
    o.pass = o.pass && q <= 1.5;
    o.detail += "; " + name + " " + fmt(q);
  }
  return o;
}

// 4 -------------------------------------------------------------------------

Outcome criterion4() {
  const std::vector<Dist> laws{{DistKind::Rademacher, 0, {}}, {DistKind::Gaussian, 0, {}}, {DistKind::Uniform, 0, {}},
                               {DistKind::Cauchy, 0, {}},     {DistKind::Atom0, 0.3, {}},  {DistKind::Multiset, 0, {1, 1, -1}}};
  const std::uint64_t total = 10000;
  struct Acc {
    std::uint64_t violations = 0, checked_exact = 0, mismatches = 0;
  };
  ChunkPlan plan{.total = total, .chunk_size = 250, .seed = 404, .workers = workers()};
  const auto acc = chunked_reduce(
      plan, Acc{},
      [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
        Acc a;
        for (auto i = b; i < e; ++i) {
          std::vector<double> c(2 + i % 64);  // degree 1..64
          detail::draw_coefficients(laws[i % laws.size()], rng, c);
          if (std::all_of(c.begin(), c.end(), [](double x) { return x == 0; })) continue;
          const auto t = tally_sampled(c);
          a.violations += bound_check_sampled(c, t).holds() ? 0 : 1;
          if (i % 10 == 0 && c.size() <= 33) {  // independent exact route
            const auto p = Polynomial::from_doubles(c);
            ++a.checked_exact;
            a.violations += bound_check(p).holds() ? 0 : 1;
            a.mismatches += root_tally(p) == t ? 0 : 1;
          }
        }
        return a;
      },
      [](Acc& x, const Acc& y) {
        x.violations += y.violations;
        x.checked_exact += y.checked_exact;
        x.mismatches += y.mismatches;
      });
  return {acc.violations == 0 && acc.mismatches == 0,
          std::to_string(total) + " polynomials, violations " + std::to_string(acc.violations) +
              "; sampled tally vs exact Sturm on " + std::to_string(acc.checked_exact) + ": " +
              std::to_string(acc.mismatches) + " mismatches"};
}

// 5 -------------------------------------------------------------------------

Outcome criterion5() {
  ExperimentConfig cfg;
  cfg.n_list = {50};
  cfg.trials = 10000;
  cfg.dist = {DistKind::Atom0, 0.3, {}};
  cfg.seed = 55;
  cfg.workers = workers();
  const auto r = run_zero_scan(cfg);
  const auto* m = find_row(r, 50, "mean_zero_multiplicity");
  if (!m) return {false, "missing mean_zero_multiplicity row"};
  const double exact = truncated_geometric_mean(0.3, 50);
  const double se = m->stderr_;
  const bool cap = m->value <= 3.0 / 7 + 3 * se;
  const bool match = std::fabs(m->value - exact) <= 3 * se;
  return {cap && match, "mean " + fmt(m->value, 5) + " +- " + fmt(se, 3) + ", 3/7 = " + fmt(3.0 / 7, 5) +
                            ", truncated geometric " + fmt(exact, 5)};
}

// 6 -------------------------------------------------------------------------

Outcome criterion6() {
  Rng rng(66);
  std::uint64_t bad = 0, cnt = 0;
  for (std::size_t n = 2; n <= 8; ++n)
    for (int k = 0; k < 100; ++k) {
      const auto w = detail::unit_gaussian_weights(rng, n);
      const auto s = detail::random_permutation(rng, n);
      bad += simplex_variance(w, s).holds ? 0 : 1;
      ++cnt;
    }
  Outcome o{bad == 0, std::to_string(bad) + " violations in " + std::to_string(cnt) + "; MC z-scores:"};
  for (std::size_t n : {3, 5, 8}) {
    const auto w = detail::unit_gaussian_weights(rng, n);
    const auto s = detail::random_permutation(rng, n);
    const auto est = simplex_variance_mc(w, s, 1000000, derive_seed(66, n), workers());
    const double z = (est.variance - simplex_variance(w, s).variance) / est.variance_stderr;
    o.pass = o.pass && std::fabs(z) <= 3;
    o.detail += " n=" + std::to_string(n) + " " + fmt(z, 3);
  }
  return o;
}

// 7 -------------------------------------------------------------------------

Outcome criterion7() {
  Rng rng(77);
  double worst = 0;
  std::uint64_t used = 0;
  while (used < 10000) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> x(n), w(n);
    for (auto& v : x) v = rng.uniform_open();
    for (auto& v : w) v = rng.gaussian();
    if (std::set<double>(x.begin(), x.end()).size() != n) continue;
    const auto f = simplex_F(x, w);
    worst = std::max(worst, std::fabs(f.F - f.F_integral));
    ++used;
  }
  Outcome o{worst <= 1e-10, "two-form max diff " + fmt(worst, 3) + " on 10^4 points; MC z-scores:"};
  for (std::size_t n : {2, 4, 8, 12}) {
    const auto w = detail::unit_gaussian_weights(rng, n);
    const auto p = detail::random_permutation(rng, n);
    const auto est = simplex_F_mc(w, p, 1000000, derive_seed(77, n), workers());
    const double z = (est.mean - w_sigma_sq(w, p) / static_cast<double>(n + 1)) / est.mean_stderr;
    o.pass = o.pass && std::fabs(z) <= 3;
    o.detail += " n=" + std::to_string(n) + " " + fmt(z, 3);
  }
  return o;
}

// 8 -------------------------------------------------------------------------

Outcome criterion8() {
  Outcome o{true, ""};
  for (int parity = 0; parity < 2; ++parity) {
    ChunkPlan plan{.total = 100000, .chunk_size = 4096, .seed = derive_seed(88, parity), .workers = workers()};
    const double worst = chunked_reduce(
        plan, 0.0,
        [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
          double w = 0;
          for (auto i = b; i < e; ++i) {
            const std::size_t m = 1 + rng.below(32);
            std::vector<double> xi(parity ? 2 * m : 2 * m + 1);
            for (auto& x : xi) x = rng.gaussian();
            w = std::max(w, alt_decompose<double>(xi).residual / alt_residual_scale(xi));
          }
          return w;
        },
        [](double& a, double x) { a = std::max(a, x); });
    o.pass = o.pass && worst <= 1e-10;
    o.detail += std::string(parity ? "even" : "odd") + " residual " + fmt(worst, 3) + "; ";
  }
  Rng rng(89);
  std::uint64_t bad = 0, good = 0;
  for (std::size_t m = 1; m <= 16; ++m)
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<double> eta(m);
      for (auto& x : eta) x = rng.gaussian();
      const auto er = dyadic(std::span<const double>(eta));
      std::vector<int> sg(m);
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        for (std::size_t i = 0; i < m; ++i) sg[i] = (mask >> i & 1) ? 1 : -1;
        const auto r = beta_B_check<Rational>(er, sg);
        if (!r.good) continue;
        ++good;
        bad += r.bound_holds ? 0 : 1;
      }
    }
  o.pass = o.pass && bad == 0;
  o.detail += "beta/B violations " + std::to_string(bad) + " of " + std::to_string(good) + " good patterns; ";
  double margin = std::numeric_limits<double>::infinity();
  bool tails_ok = true;
  for (std::size_t m = 1; m <= 64; ++m) {
    const Rational tail = local_goodness_tail(m);
    // compare exactly against a lower bound of 2 exp(-m/8)
    const double bound = 2 * std::exp(-static_cast<double>(m) / 8) * (1 - 1e-15);
    tails_ok = tails_ok && tail <= Rational(bound);
    margin = std::min(margin, bound - tail.get_d());
  }
  o.pass = o.pass && tails_ok;
  o.detail += "goodness tail min margin " + fmt(margin, 3);
  return o;
}

// 9 -------------------------------------------------------------------------

Outcome criterion9() {
  Rng rng(99);
  double worst = 0;
  std::uint64_t lc = 0, uni = 0, models = 0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 3 + rng.below(13);  // 3..15
    const auto w = detail::unit_gaussian_weights(rng, n);
    const auto m = build_density_model(w);
    ++models;
    lc += logconcavity_check(m, interior_grid(m, 400));
    uni += envelope_fit(m).violations;
    const double h = m.support_half_width();
    const auto grid = linear_grid(-1.1 * h, 1.1 * h, 200);
    const auto diffs = parallel_map<double>(grid.size(), workers(), [&](std::size_t i) {
      return std::fabs(exact_density(w, grid[i]) - fourier_density(w, grid[i], 1e9, 1e-7));
    });
    worst = std::max(worst, *std::max_element(diffs.begin(), diffs.end()));
  }
  // n = 1, 2: jump or kink in the density, so the Fourier tail decays like 1/lambda
  double worst_small = 0;
  const std::vector<std::vector<double>> small{{1.0}, {0.6, 0.8}, {std::sqrt(0.5), std::sqrt(0.5)}};
  for (const auto& w : small)
    for (double t : {0.0, 0.1, 0.2, 0.3, 0.37})
      worst_small = std::max(worst_small, std::fabs(exact_density(w, t) - fourier_density(w, t, 1e9, 1e-5)));
  std::uint64_t hv = 0, hcnt = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> a(1 + rng.below(14));
    for (auto& x : a) x = rng.uniform_open();
    for (double t : {0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
      hv += rademacher_tail_exact(a, t) > hoeffding_bound(a, t);
      ++hcnt;
    }
  }
  const bool ok = worst <= 1e-6 && worst_small <= 1e-5 && lc == 0 && uni == 0 && hv == 0;
  return {ok, "50 models (n 3..15) x 200 points: max |exact - Fourier| " + fmt(worst, 3) + "; n<=2 examples " +
                  fmt(worst_small, 3) + "; log-concavity violations " + std::to_string(lc) + ", unimodality " +
                  std::to_string(uni) + "; Hoeffding violations " + std::to_string(hv) + "/" + std::to_string(hcnt)};
}

// 10 ------------------------------------------------------------------------

std::string csv_body(const std::string& csv) {
  // drop the trailing wall_ms column; timings legitimately differ
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto c = line.rfind(',');
    out += (line.rfind("experiment,", 0) == 0 || c == std::string::npos) ? line : line.substr(0, c);
    out += '\n';
  }
  return out;
}

Outcome criterion10() {
  std::vector<ExperimentConfig> cfgs(4);
  cfgs[0].experiment = "zero-scan";
  cfgs[0].n_list = {16, 64, 256};
  cfgs[0].trials = 2000;
  cfgs[0].dist.kind = DistKind::Gaussian;
  cfgs[1].experiment = "ac-scan";
  cfgs[1].n_list = {5, 8, 12};
  cfgs[1].trials = 20000;
  cfgs[1].draws = 2;
  cfgs[2].experiment = "props";
  cfgs[2].trials = 2000;
  cfgs[3].experiment = "density-scan";
  cfgs[3].n_list = {7};
  cfgs[3].grid_points = 41;
  Outcome o{true, ""};
  for (auto& c : cfgs) {
    c.seed = 1010;
    std::string ref;
    bool same = true;
    for (unsigned w : {1u, 4u, 16u}) {
      c.workers = w;
      const std::string body = csv_body(render(c, run_experiment(c)));
      if (w == 1) ref = body;
      same = same && body == ref;
    }
    o.pass = o.pass && same;
    o.detail += c.experiment + (same ? " identical; " : " DIFFERS; ");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict")
      strict = true;
    else
      only.insert(std::stoi(a));
  }
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int unexpected = 0, failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool known = kKnownDeviations.count(id) > 0;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << (!o.pass && known ? " (known deviation)" : "")
              << " [" << fmt(secs, 3) << " s] " << o.detail << std::endl;
    if (!o.pass) {
      ++failed;
      if (strict || !known) ++unexpected;
    }
  }
  std::cout << failed << " failed, " << unexpected << " unexpected" << std::endl;
  return unexpected == 0 ? 0 : 1;
}

#pragma once

// Density of X = sum w_i U_i with U_i uniform on [-1/2, 1/2], plus the
// spacing and simplex functionals that go with sorted uniforms.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dlab/errors.hpp"
#include "dlab/parallel.hpp"
#include "dlab/perm_lab.hpp"
#include "dlab/rational.hpp"
#include "json.hpp"

namespace dlab {

inline constexpr std::size_t kClosedFormCap = 20;
inline constexpr std::size_t kRationalOracleCap = 12;
inline constexpr std::size_t kModelCap = 16;

namespace detail {

inline std::vector<double> folded_weights(std::span<const double> w, std::size_t cap) {
  if (w.empty()) throw InvalidArgument("weights must be nonempty");
  if (w.size() > cap) throw TooManyTerms("closed form is limited to " + std::to_string(cap) + " weights");
  std::vector<double> a;
  a.reserve(w.size());
  for (double x : w) {
    if (!std::isfinite(x)) throw InvalidArgument("non-finite weight");
    if (x == 0.0) throw ZeroWeight("weights must be nonzero");
    a.push_back(std::fabs(x));
  }
  return a;
}

inline Rational rat_pow(const Rational& x, std::size_t k) {
  Rational r = 1;
  for (std::size_t i = 0; i < k; ++i) r *= x;
  return r;
}

// (x)_+^d with the midpoint convention at the jump when d == 0.
inline Rational truncated_power(const Rational& x, std::size_t d) {
  const int s = sgn(x);
  if (d == 0) return s > 0 ? Rational(1) : (s == 0 ? Rational(1, 2) : Rational(0));
  return s > 0 ? rat_pow(x, d) : Rational(0);
}

inline Rational density_closed_form(std::span<const Rational> a, const Rational& t) {
  const std::size_t n = a.size();
  const std::size_t d = n - 1;
  Rational pref = 1;
  for (std::size_t k = 2; k <= d; ++k) pref *= static_cast<unsigned long>(k);
  for (const auto& x : a) pref *= x;
  Rational sum = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    Rational s = t;
    int sg = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        s += a[i] / 2;
      } else {
        s -= a[i] / 2;
        sg = -sg;
      }
    }
    const Rational term = truncated_power(s, d);
    if (sg > 0) sum += term; else sum -= term;
  }
  Rational out = sum / pref;
  out.canonicalize();
  return out;
}

// Neumaier-compensated long double evaluation with an error estimate.
struct FloatDensity {
  double value = 0;
  double error = 0;
};

inline FloatDensity density_long_double(std::span<const double> a, double t) {
  using ld = long double;
  const std::size_t n = a.size();
  const std::size_t d = n - 1;
  ld logpref = std::lgamma(static_cast<ld>(n));
  for (double x : a) logpref += std::log(static_cast<ld>(x));
  const ld pref = std::exp(-logpref);
  ld sum = 0, comp = 0, mag = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    ld s = t;
    int sg = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        s += static_cast<ld>(a[i]) / 2;
      } else {
        s -= static_cast<ld>(a[i]) / 2;
        sg = -sg;
      }
    }
    ld term;
    if (d == 0) term = s > 0 ? 1.0L : (s == 0 ? 0.5L : 0.0L);
    else term = s > 0 ? std::pow(s, static_cast<int>(d)) : 0.0L;
    if (sg < 0) term = -term;
    mag += std::fabs(term);
    const ld tmp = sum + term;
    if (std::fabs(sum) >= std::fabs(term)) comp += (sum - tmp) + term;
    else comp += (term - tmp) + sum;
    sum = tmp;
  }
  FloatDensity r;
  r.value = static_cast<double>(pref * (sum + comp));
  // each term carries about (d + 2n) roundings from forming s and powering it
  r.error = static_cast<double>(pref * mag * static_cast<ld>(4 * (d + 2 * n + 2)) * LDBL_EPSILON) + 4 * DBL_EPSILON * std::fabs(r.value);
  return r;
}

inline void taylor_shift(std::vector<Integer>& c, const Integer& b) {
  // c[k] is the coefficient of x^k; afterwards c describes p(b + y) in y
  const std::size_t m = c.size();
  for (std::size_t i = 0; i + 1 < m; ++i)
    for (std::size_t j = m - 1; j-- > i;) c[j] += b * c[j + 1];
}

inline double scaled_ratio(const Integer& num, const Integer& den, long shift) {
  if (num == 0) return 0.0;
  long en = 0, ed = 0;
  const double mn = mpz_get_d_2exp(&en, num.get_mpz_t());
  const double md = mpz_get_d_2exp(&ed, den.get_mpz_t());
  return std::ldexp(mn / md, static_cast<int>(en - ed + shift));
}

}  // namespace detail

/// Exact density value, n <= 12, rational weights and argument.
inline Rational exact_density_rational(std::span<const Rational> w, const Rational& t) {
  if (w.empty()) throw InvalidArgument("weights must be nonempty");
  if (w.size() > kRationalOracleCap)
    throw TooManyTerms("rational oracle is limited to " + std::to_string(kRationalOracleCap) + " weights");
  std::vector<Rational> a;
  for (const auto& x : w) {
    if (x == 0) throw ZeroWeight("weights must be nonzero");
    a.push_back(abs(x));
  }
  return detail::density_closed_form(a, t);
}

/// Density of sum w_i U_i at t by the signed truncated-power formula. Falls
/// back to exact arithmetic on the dyadic inputs when cancellation would
/// cost more than about 1e-10 absolute.
inline double exact_density(std::span<const double> w, double t) {
  const auto a = detail::folded_weights(w, kClosedFormCap);
  if (!std::isfinite(t)) throw InvalidArgument("non-finite argument");
  const auto f = detail::density_long_double(a, t);
  if (f.error <= 1e-10) return std::max(0.0, f.value);
  const auto ra = dyadic(std::span<const double>(a));
  return detail::density_closed_form(ra, dyadic(t)).get_d();
}

// Piecewise-polynomial model

/// Density as a spline. Piece i lives on [breakpoints[i], breakpoints[i+1]]
/// and pieces[i][k] multiplies (t - breakpoints[i])^k. The rows are rounded
/// from exact integer arithmetic.
struct DensityModel {
  std::size_t n = 0;
  std::vector<double> weights;
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> pieces;
  double total_mass = 0;
  Rational exact_total_mass;

  double support_half_width() const { return breakpoints.empty() ? 0.0 : breakpoints.back(); }

  /// Evaluates the stored pieces at t directly.
  double evaluate_unfolded(double t) const {
    if (breakpoints.size() < 2 || t <= breakpoints.front() || t >= breakpoints.back()) return 0.0;
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - breakpoints.begin()) - 1;
    const double y = t - breakpoints[i];
    const auto& c = pieces[i];
    double v = 0;
    for (std::size_t k = c.size(); k-- > 0;) v = v * y + c[k];
    return std::max(0.0, v);
  }

  /// Uses p(t) = p(-t): the left half is expanded at its left endpoints,
  /// where the outer tail pieces are pure powers and evaluate without
  /// cancellation.
  double evaluate(double t) const { return evaluate_unfolded(-std::fabs(t)); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["weights"] = weights;
    j["breakpoints"] = breakpoints;
    j["pieces"] = pieces;
    return j;
  }
};

inline DensityModel build_density_model(std::span<const double> w) {
  const auto a = detail::folded_weights(w, kModelCap);
  const std::size_t n = a.size();
  const std::size_t d = n - 1;
  const auto sc = scale_to_integers(a);  // a_i = A_i 2^e, so a_i / 2 = A_i u with u = 2^(e-1)
  const auto& A = sc.ints;

  // T = t / u. Each sign vector contributes sign * (T + S)^d for T > -S.
  std::map<Integer, long> weight_at;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    Integer S = 0;
    int sg = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        S += A[i];
      } else {
        S -= A[i];
        sg = -sg;
      }
    }
    weight_at[-S] += sg;
  }

  std::vector<Integer> binom(d + 1);
  binom[0] = 1;
  for (std::size_t k = 1; k <= d; ++k) binom[k] = binom[k - 1] * static_cast<unsigned long>(d - k + 1) / static_cast<unsigned long>(k);

  Integer denom = 1;  // d! prod A_i
  for (std::size_t k = 2; k <= d; ++k) denom *= static_cast<unsigned long>(k);
  for (const auto& x : A) denom *= x;

  DensityModel m;
  m.n = n;
  m.weights.assign(w.begin(), w.end());
  const long ue = sc.exponent - 1;

  std::vector<Integer> cum(d + 1, 0);
  std::vector<Integer> keys;
  std::vector<std::vector<Integer>> local;
  for (const auto& [key, count] : weight_at) {
    if (count != 0) {
      const Integer S = -key;
      Integer spow = 1;  // S^(d-k), built from k = d downwards
      for (std::size_t k = d + 1; k-- > 0;) {
        cum[k] += count * binom[k] * spow;
        spow *= S;
      }
    }
    keys.push_back(key);
    auto q = cum;
    detail::taylor_shift(q, key);
    local.push_back(std::move(q));
  }
  for (const auto& c : cum)
    if (c != 0) throw std::logic_error("density pieces do not vanish right of the support");

  Rational mass = 0;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    const Integer W = keys[i + 1] - keys[i];
    Integer Wp = W;
    for (std::size_t k = 0; k <= d; ++k) {
      mass += Rational(local[i][k] * Wp, static_cast<unsigned long>(k + 1));
      Wp *= W;
    }
    std::vector<double> row(d + 1);
    for (std::size_t k = 0; k <= d; ++k)
      row[k] = detail::scaled_ratio(local[i][k], denom, ue * static_cast<long>(d - k) - sc.exponent * static_cast<long>(n));
    m.pieces.push_back(std::move(row));
  }
  for (const auto& k : keys) {
    long e = 0;
    const double mant = mpz_get_d_2exp(&e, k.get_mpz_t());
    m.breakpoints.push_back(k == 0 ? 0.0 : std::ldexp(mant, static_cast<int>(e + ue)));
  }
  // mass in T units times u^n / (d! prod a) = 2^-n / (d! prod A)
  mass /= Rational(denom);
  mass /= Rational(Integer(1) << static_cast<mp_bitcnt_t>(n));
  mass.canonicalize();
  m.exact_total_mass = mass;
  m.total_mass = mass.get_d();
  return m;
}

// Fourier inversion

/// E exp(i lambda X) for U on [-1/2, 1/2]: prod sin(lambda w_i / 2) / (lambda w_i / 2).
inline double characteristic_function(std::span<const double> w, double lambda) {
  double v = 1;
  for (double x : w) {
    const double z = 0.5 * lambda * x;
    if (z != 0.0) v *= std::sin(z) / z;
  }
  return v;
}

struct FourierResult {
  double value = 0;
  double cutoff = 0;            // integration stops here
  double truncation_bound = 0;  // rigorous bound on the discarded tail
  double quadrature_error = 0;  // Gauss-Kronrod estimate
  std::size_t blocks = 0;
};

namespace detail {

// Bound on |(1/pi) int_L^inf phi(lambda) cos(lambda t) d lambda|.
class TailBound {
 public:
  TailBound(std::span<const double> a, double t) : n_(a.size()) {
    c_.reserve(n_);
    for (double x : a) c_.push_back(0.5 * x);
    std::sort(c_.begin(), c_.end(), std::greater<>());
    if (n_ <= kClosedFormCap) {
      // Expand prod sin(c_i l) cos(t l) into 2^n trig terms of weight 2^-n.
      freqs_.assign(std::size_t{1} << n_, 0.0);
      for (std::uint64_t mask = 0; mask < freqs_.size(); ++mask) {
        double om = c_[0];
        for (std::size_t i = 1; i < n_; ++i) om += (mask >> (i - 1) & 1) ? c_[i] : -c_[i];
        om += (mask >> (n_ - 1) & 1) ? t : -t;
        freqs_[mask] = std::fabs(om);
      }
    }
    log_inv_prod_.resize(n_ + 1, 0.0);
    for (std::size_t k = 1; k <= n_; ++k) log_inv_prod_[k] = log_inv_prod_[k - 1] - std::log(c_[k - 1]);
  }

  double operator()(double L) const {
    double best = std::numeric_limits<double>::infinity();
    const double lL = std::log(L);
    for (std::size_t k = 2; k <= n_; ++k)
      best = std::min(best, std::exp(log_inv_prod_[k] - (k - 1.0) * lL) / (k - 1.0) / std::numbers::pi);
    if (!freqs_.empty()) {
      double s = 0;
      const double nn = static_cast<double>(n_);
      for (double om : freqs_) {
        double b = std::numeric_limits<double>::infinity();
        if (om > 0) b = 2.0 / (om * std::pow(L, nn));
        if (n_ >= 2) b = std::min(b, std::pow(L, 1.0 - nn) / (nn - 1.0));
        s += b;
      }
      const double osc = std::exp(log_inv_prod_[n_]) * std::ldexp(s, -static_cast<int>(n_)) / std::numbers::pi;
      best = std::min(best, osc);
    }
    return best;
  }

 private:
  std::size_t n_;
  std::vector<double> c_;
  std::vector<double> freqs_;
  std::vector<double> log_inv_prod_;
};

}  // namespace detail

/// Cosine-transform inversion p(t) = (1/pi) int_0^inf phi(lambda) cos(lambda t).
/// The range is walked in dyadic blocks [2^j, 2^(j+1)] until the tail bound
/// drops under tol/2; each block is cut into one-period panels.
inline FourierResult fourier_density_detail(std::span<const double> w, double t, double lambda_max, double tol) {
  if (w.empty()) throw InvalidArgument("weights must be nonempty");
  if (!(lambda_max > 0) || !(tol > 0)) throw InvalidArgument("lambda_max and tol must be positive");
  std::vector<double> a;
  for (double x : w) {
    if (x == 0.0 || !std::isfinite(x)) throw ZeroWeight("weights must be nonzero and finite");
    a.push_back(std::fabs(x));
  }
  const detail::TailBound tail(a, t);
  double omega_max = std::fabs(t);
  for (double x : a) omega_max += 0.5 * x;
  const double panel = 2.0 * std::numbers::pi / omega_max;

  auto f = [&](double l) { return characteristic_function(a, l) * std::cos(l * t); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

  FourierResult r;
  double sum = 0, err = 0;
  auto integrate = [&](double lo, double hi) {
    const auto np = static_cast<std::size_t>(std::ceil((hi - lo) / panel));
    const double h = (hi - lo) / static_cast<double>(std::max<std::size_t>(np, 1));
    for (std::size_t p = 0; p < std::max<std::size_t>(np, 1); ++p) {
      double e = 0;
      sum += GK::integrate(f, lo + p * h, p + 1 == np ? hi : lo + (p + 1) * h, 0, 0.0, &e);
      err += e;
    }
  };

  double hi = 1.0;
  integrate(0.0, hi);
  r.blocks = 1;
  while (tail(hi) > tol / 2) {
    if (2 * hi > lambda_max)
      throw QuadratureFailure("tail bound still above tolerance at lambda_max");
    integrate(hi, 2 * hi);
    hi *= 2;
    ++r.blocks;
  }
  r.cutoff = hi;
  r.truncation_bound = tail(hi);
  r.quadrature_error = err / std::numbers::pi;
  if (r.quadrature_error > tol / 2) throw QuadratureFailure("quadrature error estimate above tolerance");
  r.value = sum / std::numbers::pi;
  return r;
}

inline double fourier_density(std::span<const double> w, double t, double lambda_max = 1e8, double tol = 1e-8) {
  return fourier_density_detail(w, t, lambda_max, tol).value;
}

// Envelope and shape checks

struct EnvelopeFit {
  double C = 0;
  double c = 0.5;
  double c_gauss = std::numeric_limits<double>::quiet_NaN();
  double C_joint = std::numeric_limits<double>::quiet_NaN();
  double c_joint = std::numeric_limits<double>::quiet_NaN();
  std::size_t violations = 0;
};

/// Equally spaced points over [lo, hi].
inline std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g;
  if (points == 1) return {0.5 * (lo + hi)};
  for (std::size_t i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

namespace detail {
// least-squares slope and intercept of y on x
inline std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) return {std::numeric_limits<double>::quiet_NaN(), my};
  const double b = sxy / sxx;
  return {b, my - b * mx};
}
}  // namespace detail

inline EnvelopeFit envelope_fit(const DensityModel& m, std::span<const double> grid) {
  EnvelopeFit r;
  std::vector<double> ts(grid.begin(), grid.end());
  std::sort(ts.begin(), ts.end());
  std::vector<double> p(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) p[i] = m.evaluate(ts[i]);

  std::vector<double> gx, gy, jx, jy;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double at = std::fabs(ts[i]);
    r.C = std::max(r.C, p[i] * std::exp(r.c * at));
    if (p[i] > 0) {
      jx.push_back(at);
      jy.push_back(std::log(p[i]));
      if (at >= 1.0) {
        gx.push_back(at * at);
        gy.push_back(std::log(p[i]));
      }
    }
  }
  if (gx.size() >= 2) r.c_gauss = -detail::fit_line(gx, gy).first;
  if (jx.size() >= 2) {
    const auto [b, a0] = detail::fit_line(jx, jy);
    r.c_joint = -b;
    r.C_joint = std::exp(a0);
  }

  // non-increasing moving away from 0 on each side
  const double slack = 1e-12;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i] >= 0 && p[i + 1] > p[i] + slack * std::max(1.0, p[i])) ++r.violations;
    if (ts[i + 1] <= 0 && p[i] > p[i + 1] + slack * std::max(1.0, p[i + 1])) ++r.violations;
  }
  return r;
}

inline EnvelopeFit envelope_fit(const DensityModel& m) {
  const double h = m.support_half_width();
  const auto g = linear_grid(-h, h, 801);
  return envelope_fit(m, g);
}

/// Grid over the middle part of the support, where log p is finite.
inline std::vector<double> interior_grid(const DensityModel& m, std::size_t points = 400, double fraction = 0.9) {
  const double h = m.support_half_width() * fraction;
  return linear_grid(-h, h, points);
}

/// Triples (t0 < t1 < t2) of consecutive grid points where log p lies more
/// than 1e-9 below the chord. Points with p <= 0 are skipped.
inline std::size_t logconcavity_check(const DensityModel& m, std::span<const double> grid) {
  std::vector<double> ts(grid.begin(), grid.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<double> xs, lp;
  for (double t : ts) {
    const double p = m.evaluate(t);
    if (p > 0) {
      xs.push_back(t);
      lp.push_back(std::log(p));
    }
  }
  std::size_t bad = 0;
  for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
    const double lam = (xs[i + 1] - xs[i]) / (xs[i + 1] - xs[i - 1]);
    const double chord = lam * lp[i - 1] + (1 - lam) * lp[i + 1];
    if (chord - lp[i] > 1e-9) ++bad;
  }
  return bad;
}

// Tails of Rademacher sums

inline double hoeffding_bound(std::span<const double> a, double t) {
  if (!(t > 0)) throw InvalidArgument("t must be positive");
  double s2 = 0;
  for (double x : a) {
    if (x < 0 || !std::isfinite(x)) throw InvalidArgument("coefficients must be nonnegative and finite");
    s2 += x * x;
  }
  if (s2 == 0) throw AllZero("all coefficients are zero");
  return std::exp(-t * t / (2 * s2));
}

/// P{sum a_i eps_i >= t} by listing all 2^m sign vectors (m <= 24).
inline double rademacher_tail_exact(std::span<const double> a, double t) {
  if (a.size() > 24) throw TooManyTerms("enumeration is limited to 24 coefficients");
  std::uint64_t hits = 0;
  const std::uint64_t total = std::uint64_t{1} << a.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (mask >> i & 1) ? a[i] : -a[i];
    if (s >= t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// Empirical P{sum a_i eps_i >= t} for every t in ts from the same draws.
inline std::vector<double> rademacher_tail_mc(std::span<const double> a, std::span<const double> ts,
                                              std::uint64_t trials, std::uint64_t seed, unsigned workers = 1) {
  ChunkPlan plan{.total = trials, .chunk_size = 4096, .seed = seed, .workers = workers};
  const std::vector<double> tv(ts.begin(), ts.end());
  const std::vector<double> av(a.begin(), a.end());
  auto counts = chunked_reduce(
      plan, std::vector<std::uint64_t>(tv.size(), 0),
      [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
        std::vector<std::uint64_t> c(tv.size(), 0);
        for (auto i = b; i < e; ++i) {
          double s = 0;
          for (double x : av) s += rng.rademacher() * x;
          for (std::size_t k = 0; k < tv.size(); ++k) c[k] += s >= tv[k];
        }
        return c;
      },
      [](std::vector<std::uint64_t>& acc, const std::vector<std::uint64_t>& c) {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += c[k];
      });
  std::vector<double> out;
  for (auto c : counts) out.push_back(static_cast<double>(c) / static_cast<double>(trials));
  return out;
}

// Uniform spacings and simplex functionals

struct SpacingMoments {
  std::size_t n = 0;
  Rational e_x1, e_x1sq, e_x1x2;

  bool consistent() const {
    const Rational np1(static_cast<unsigned long>(n + 1));
    return np1 * e_x1sq + Rational(static_cast<unsigned long>(n)) * np1 * e_x1x2 == 1;
  }
};

inline SpacingMoments spacing_moments(std::size_t n) {
  if (n == 0) throw InvalidArgument("n must be at least 1");
  const auto a = static_cast<unsigned long>(n + 1), b = static_cast<unsigned long>(n + 2);
  SpacingMoments m;
  m.n = n;
  m.e_x1 = Rational(1, a);
  m.e_x1sq = Rational(2, a * b);
  m.e_x1x2 = Rational(1, a * b);
  m.e_x1sq.canonicalize();
  return m;
}

struct SimplexVariance {
  double variance = 0;
  double bound = 0;
  Rational exact_variance;
  Rational exact_bound;
  bool holds = false;  // exact_variance <= exact_bound
};

/// Var <w, V_sigma> for V_sigma the sorted uniform sample placed by sigma
/// (V_sigma(1) < ... < V_sigma(n)), computed from the tail sums of w along
/// sigma. sigma is 0-based.
inline SimplexVariance simplex_variance(std::span<const double> w, std::span<const std::size_t> sigma) {
  const auto wr = dyadic(w);
  const auto alpha = sigma_tail_sums<Rational>(wr, sigma);
  const auto n = static_cast<unsigned long>(w.size());
  Rational s1 = 0, s2 = 0;
  for (const auto& x : alpha) {
    s1 += x;
    s2 += x * x;
  }
  SimplexVariance r;
  r.exact_bound = s2 / Rational((n + 1) * (n + 2));
  r.exact_variance = r.exact_bound - s1 * s1 / Rational((n + 1) * (n + 1) * (n + 2));
  r.exact_bound.canonicalize();
  r.exact_variance.canonicalize();
  r.variance = r.exact_variance.get_d();
  r.bound = r.exact_bound.get_d();
  r.holds = r.exact_variance <= r.exact_bound;
  return r;
}

struct MomentEstimate {
  double mean = 0, mean_stderr = 0;
  double variance = 0, variance_stderr = 0;
  std::uint64_t samples = 0;
};

namespace detail {
struct PowerSums {
  long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  void add(long double x) {
    const long double x2 = x * x;
    s1 += x;
    s2 += x2;
    s3 += x2 * x;
    s4 += x2 * x2;
  }
  void merge(const PowerSums& o) {
    s1 += o.s1;
    s2 += o.s2;
    s3 += o.s3;
    s4 += o.s4;
  }
  MomentEstimate finish(std::uint64_t N) const {
    MomentEstimate e;
    e.samples = N;
    const long double n = static_cast<long double>(N);
    const long double m1 = s1 / n, m2 = s2 / n, m3 = s3 / n, m4 = s4 / n;
    const long double var = m2 - m1 * m1;
    const long double mu4 = m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1 * m1 * m1 * m1;
    e.mean = static_cast<double>(m1);
    e.mean_stderr = static_cast<double>(std::sqrt(std::max<long double>(var, 0) / n));
    e.variance = static_cast<double>(var * n / (n - 1));
    e.variance_stderr = static_cast<double>(std::sqrt(std::max<long double>(mu4 - var * var, 0) / n));
    return e;
  }
};

inline void sorted_uniforms(Rng& rng, std::vector<double>& v) {
  do {  // ties have probability ~n^2 2^-53; redraw rather than break them
    for (auto& x : v) x = rng.uniform_open();
    std::sort(v.begin(), v.end());
  } while (std::adjacent_find(v.begin(), v.end()) != v.end());
}
}  // namespace detail

/// Sample moments of <w, V_sigma> from sorted uniform draws.
inline MomentEstimate simplex_variance_mc(std::span<const double> w, std::span<const std::size_t> sigma,
                                          std::uint64_t samples, std::uint64_t seed, unsigned workers = 1) {
  require_permutation(sigma, w.size());
  const std::vector<double> wv(w.begin(), w.end());
  const std::vector<std::size_t> sv(sigma.begin(), sigma.end());
  ChunkPlan plan{.total = samples, .chunk_size = 4096, .seed = seed, .workers = workers};
  const auto sums = chunked_reduce(
      plan, detail::PowerSums{},
      [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
        detail::PowerSums ps;
        std::vector<double> v(wv.size());
        for (auto i = b; i < e; ++i) {
          detail::sorted_uniforms(rng, v);
          long double x = 0;
          for (std::size_t j = 0; j < v.size(); ++j) x += static_cast<long double>(wv[sv[j]]) * v[j];
          ps.add(x);
        }
        return ps;
      },
      [](detail::PowerSums& acc, const detail::PowerSums& p) { acc.merge(p); });
  return sums.finish(samples);
}

struct SimplexF {
  double F = 0;           // sum over the ordering of x
  double F_integral = 0;  // int_0^1 G_t(x)^2 dt by direct piecewise summation
};

inline SimplexF simplex_F(std::span<const double> x, std::span<const double> w) {
  const std::size_t n = x.size();
  if (n == 0 || w.size() != n) throw InvalidArgument("x and w must be nonempty and of equal length");
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("x must lie in the unit cube");
  std::vector<std::size_t> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = i;
  std::sort(pi.begin(), pi.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  for (std::size_t j = 1; j < n; ++j)
    if (x[pi[j]] == x[pi[j - 1]]) throw TiedCoordinates("coordinates of x must be distinct");

  SimplexF r;
  double tail = 0;
  std::vector<double> alpha(n);
  for (std::size_t j = n; j-- > 0;) {
    tail += w[pi[j]];
    alpha[j] = tail;
  }
  double prev = 0;
  for (std::size_t j = 0; j < n; ++j) {
    r.F += alpha[j] * alpha[j] * (x[pi[j]] - prev);
    prev = x[pi[j]];
  }

  // G_t is constant between consecutive cut points; evaluate it at each midpoint
  std::vector<double> cuts(x.begin(), x.end());
  cuts.push_back(0.0);
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    if (len <= 0) continue;
    const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
    double G = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (x[i] > mid) G += w[i];
    r.F_integral += G * G * len;
  }
  return r;
}

/// Sample mean of F(V_pi): the sorted uniform sample placed so that
/// x_pi(1) < ... < x_pi(n). pi is 0-based.
inline MomentEstimate simplex_F_mc(std::span<const double> w, std::span<const std::size_t> pi,
                                   std::uint64_t samples, std::uint64_t seed, unsigned workers = 1) {
  require_permutation(pi, w.size());
  const std::vector<double> wv(w.begin(), w.end());
  const std::vector<std::size_t> pv(pi.begin(), pi.end());
  ChunkPlan plan{.total = samples, .chunk_size = 4096, .seed = seed, .workers = workers};
  const auto sums = chunked_reduce(
      plan, detail::PowerSums{},
      [&](Rng& rng, std::uint64_t b, std::uint64_t e) {
        detail::PowerSums ps;
        std::vector<double> v(wv.size()), x(wv.size());
        for (auto i = b; i < e; ++i) {
          detail::sorted_uniforms(rng, v);
          for (std::size_t j = 0; j < v.size(); ++j) x[pv[j]] = v[j];
          ps.add(simplex_F(x, wv).F);
        }
        return ps;
      },
      [](detail::PowerSums& acc, const detail::PowerSums& p) { acc.merge(p); });
  return sums.finish(samples);
}

}  // namespace dlab

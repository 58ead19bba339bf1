#pragma once

// Anti-concentration events for linear statistics of a uniform random
// permutation, measured by full enumeration of S_n or by Monte Carlo, plus
// the alternating-sum decompositions and tail-sum diagnostics.
//
// Every event on fixed data is decided in exact integer arithmetic. Data
// u_1..u_n are brought to a common denominator, u_i = a_i / q, and the
// statistic T = sum a_i pi(i) is an integer. For the window event the
// irrational normalisation is folded into two integer bounds computed once
// per event (see detail::IntegerEvent), so no tolerance is involved anywhere.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/parallel.hpp"
#include "dlab/rational.hpp"
#include "dlab/rng.hpp"

namespace dlab {

// ---------------------------------------------------------------------------
// Weights

/// Centered, unit-norm weights.
struct WeightVector {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  double operator[](std::size_t i) const { return w[i]; }

  /// Throws InvalidArgument unless |sum w| <= 1e-12 n and |sum w^2 - 1| <= 1e-12 n.
  static WeightVector checked(std::vector<double> w) {
    if (w.size() < 2) throw InvalidArgument("weight vector needs at least two entries");
    long double s = 0, s2 = 0;
    for (double x : w) {
      s += x;
      s2 += static_cast<long double>(x) * x;
    }
    const double tol = 1e-12 * static_cast<double>(w.size());
    if (std::fabs(static_cast<double>(s)) > tol || std::fabs(static_cast<double>(s2 - 1)) > tol)
      throw InvalidArgument("weights are not centered with unit norm");
    return WeightVector{std::move(w)};
  }
};

struct NormalizedWeights {
  WeightVector w;
  double mean = 0;   // u-bar
  double sigma = 0;  // sqrt(sum (u_i - u-bar)^2)
};

/// w_i = (u_i - mean) / sigma with sigma^2 = sum (u_i - mean)^2.
inline NormalizedWeights normalize_weights_affine(std::span<const double> u) {
  if (u.size() < 2) throw InvalidArgument("need at least two values to normalize");
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  if (*lo == *hi) throw AllEqual("all values are equal");
  long double s = 0;
  for (double x : u) s += x;
  const long double mean = s / static_cast<long double>(u.size());
  long double ss = 0;
  for (double x : u) ss += (x - mean) * (x - mean);
  const long double sigma = std::sqrt(ss);
  NormalizedWeights out;
  out.w.w.reserve(u.size());
  for (double x : u) out.w.w.push_back(static_cast<double>((x - mean) / sigma));
  out.mean = static_cast<double>(mean);
  out.sigma = static_cast<double>(sigma);
  return out;
}

inline WeightVector normalize_weights(std::span<const double> u) { return normalize_weights_affine(u).w; }

/// Raw (unnormalized) weight families used by the scans.
///   ap        1, 2, ..., n
///   gaussian  iid N(0,1) from the given seed
///   two_atom  floor(n/2) zeros then ones
inline std::vector<double> weight_family(const std::string& name, std::size_t n, std::uint64_t seed = 0) {
  std::vector<double> u(n);
  if (name == "ap") {
    for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<double>(i + 1);
  } else if (name == "gaussian") {
    Rng rng(derive_seed(seed, n));
    for (auto& x : u) x = rng.gaussian();
  } else if (name == "two_atom") {
    for (std::size_t i = n / 2; i < n; ++i) u[i] = 1.0;
  } else {
    throw InvalidArgument("unknown weight family '" + name + "'");
  }
  return u;
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind { Window, Atom, Shepp, Relative, RelativeAlt };
enum class XiLaw { Gaussian, Uniform, Cauchy };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Window: return "window";
    case EventKind::Atom: return "atom";
    case EventKind::Shepp: return "shepp";
    case EventKind::Relative: return "relative";
    case EventKind::RelativeAlt: return "relative_alt";
  }
  return "?";
}

inline double draw(Rng& rng, XiLaw law) {
  switch (law) {
    case XiLaw::Gaussian: return rng.gaussian();
    case XiLaw::Uniform: return rng.uniform_sym();
    case XiLaw::Cauchy: return rng.cauchy();
  }
  return 0.0;
}

/// One permutation event.
///   Window       |sum w_i pi(i) - L n| <= h, with w = normalize(data)
///   Atom         sum u_i pi(i) == x
///   Shepp        |sum u_i pi(i)| <= |sum u_i|
///   Relative     |sum_j j xi_j| <= |sum_j xi_j|, xi = permuted data
///   RelativeAlt  the same with both sums weighted by (-1)^j
/// Relative events may instead carry a law; each trial then draws a fresh
/// iid vector of length n and no permutation is involved.
struct PermEvent {
  EventKind kind = EventKind::Window;
  std::vector<Rational> data;
  bool exact_data = true;  // false when built from doubles via the floating constructors
  Rational L = 0, h = 1, x = 0;
  std::optional<XiLaw> law;
  std::size_t length = 0;

  std::size_t n() const { return law ? length : data.size(); }

  // GMP arithmetic assumes canonical fractions; callers may pass Rational(a, b) raw.
  void canonicalize() {
    for (auto& v : data) v.canonicalize();
    L.canonicalize();
    h.canonicalize();
    x.canonicalize();
  }

  static PermEvent window(std::span<const double> u, Rational L = 0, Rational h = 1) {
    PermEvent e = window_exact(dyadic(u), std::move(L), std::move(h));
    e.exact_data = false;
    return e;
  }
  static PermEvent window_exact(std::vector<Rational> u, Rational L = 0, Rational h = 1) {
    PermEvent e;
    e.kind = EventKind::Window;
    e.data = std::move(u);
    e.L = std::move(L);
    e.h = std::move(h);
    e.canonicalize();
    if (e.h <= 0) throw InvalidArgument("window half-width must be positive");
    return e;
  }
  static PermEvent atom(std::vector<Rational> u, Rational x) {
    PermEvent e;
    e.kind = EventKind::Atom;
    e.data = std::move(u);
    e.x = std::move(x);
    e.canonicalize();
    return e;
  }
  /// Atom on floating data: Monte Carlo compares exactly on the dyadic
  /// values, exact enumeration refuses it.
  static PermEvent atom_floating(std::span<const double> u, Rational x) {
    PermEvent e = atom(dyadic(u), std::move(x));
    e.exact_data = false;
    return e;
  }
  static PermEvent shepp(std::vector<Rational> u) {
    PermEvent e;
    e.kind = EventKind::Shepp;
    e.data = std::move(u);
    e.canonicalize();
    return e;
  }
  static PermEvent relative(std::vector<Rational> xi, bool alternating) {
    PermEvent e;
    e.kind = alternating ? EventKind::RelativeAlt : EventKind::Relative;
    e.data = std::move(xi);
    e.canonicalize();
    return e;
  }
  static PermEvent relative_iid(XiLaw law, std::size_t k, bool alternating) {
    if (k == 0) throw InvalidArgument("relative event needs k >= 1");
    PermEvent e;
    e.kind = alternating ? EventKind::RelativeAlt : EventKind::Relative;
    e.law = law;
    e.length = k;
    return e;
  }
};

struct ProbEstimate {
  double p_hat = 0;
  double stderr_ = 0;
  std::uint64_t trials = 0;
  std::optional<Rational> exact;
  std::uint64_t seed = 0;
  std::uint64_t hits = 0;

  static std::string csv_header() { return "event_kind,n,L,h,trials,p_hat,stderr,exact_num,exact_den,seed,rng_id"; }
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string event_csv_row(const PermEvent& e, const ProbEstimate& p) {
  std::string s = to_string(e.kind);
  s += "," + std::to_string(e.n()) + ",";
  if (e.kind == EventKind::Window) s += fmt_double(e.L.get_d()) + "," + fmt_double(e.h.get_d());
  else s += ",";
  s += "," + std::to_string(p.trials) + "," + fmt_double(p.p_hat) + "," + fmt_double(p.stderr_) + ",";
  if (p.exact) s += p.exact->get_num().get_str() + "," + p.exact->get_den().get_str();
  else s += ",";
  s += "," + std::to_string(p.seed) + "," + kRngId;
  return s;
}

// ---------------------------------------------------------------------------
// Relative-event indicator on a concrete vector

namespace detail {

template <typename T>
struct RelSums {
  T a = 0, b = 0;  // sum j xi_j (signed), sum xi_j (signed)
};

inline bool relative_exact(std::span<const double> xi, bool alt) {
  const ScaledIntegers si = scale_to_integers(xi);
  Integer a = 0, b = 0;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    const bool neg = alt && ((j + 1) % 2 == 1);
    Integer t = si.ints[j];
    if (neg) t = -t;
    a += t * static_cast<unsigned long>(j + 1);
    b += t;
  }
  return abs(a) <= abs(b);
}

}  // namespace detail

/// 1{|sum_j j xi_j| <= |sum_j xi_j|}; with `alt` both sums carry (-1)^j
/// (j counted from 1). Decided in floating point when the rounding error
/// bound allows, otherwise exactly on the dyadic values.
inline bool relative_event_indicator(std::span<const double> xi, bool alt) {
  if (xi.empty()) throw InvalidArgument("relative indicator needs a nonempty vector");
  double a = 0, b = 0, abs_a = 0, abs_b = 0;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    const double s = (alt && ((j + 1) % 2 == 1)) ? -xi[j] : xi[j];
    const double jj = static_cast<double>(j + 1);
    a += jj * s;
    b += s;
    abs_a += jj * std::fabs(s);
    abs_b += std::fabs(s);
  }
  if (!std::isfinite(abs_a)) return detail::relative_exact(xi, alt);
  const double gamma = 2.0 * static_cast<double>(xi.size() + 2) * DBL_EPSILON;
  const double err = gamma * (abs_a + abs_b) + 4 * DBL_MIN;
  const double margin = std::fabs(b) - std::fabs(a);
  if (margin > err) return true;
  if (margin < -err) return false;
  return detail::relative_exact(xi, alt);
}

inline bool relative_event_indicator(std::span<const Rational> xi, bool alt) {
  if (xi.empty()) throw InvalidArgument("relative indicator needs a nonempty vector");
  Rational a = 0, b = 0;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    const Rational s = (alt && ((j + 1) % 2 == 1)) ? Rational(-xi[j]) : xi[j];
    a += s * static_cast<long>(j + 1);
    b += s;
  }
  return abs(a) <= abs(b);
}

// ---------------------------------------------------------------------------
// Exact evaluation machinery

namespace detail {

using i128 = __int128;

inline bool fits_i128(const Integer& z, unsigned bits = 120) { return mpz_sizeinbase(z.get_mpz_t(), 2) <= bits; }

inline i128 to_i128(const Integer& z) {
  // |z| < 2^120 assumed
  Integer hi = z >> 64;  // floor division by 2^64
  Integer lo = z - (hi << 64);
  const auto lo64 = static_cast<unsigned long>(mpz_get_ui(lo.get_mpz_t()));
  const auto hi64 = static_cast<long>(mpz_get_si(hi.get_mpz_t()));
  return (static_cast<i128>(hi64) << 64) + static_cast<i128>(lo64);
}

inline Integer from_i128(i128 v) {
  const bool neg = v < 0;
  unsigned __int128 m = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
  Integer hi(static_cast<unsigned long>(m >> 64)), lo(static_cast<unsigned long>(m & ~0ULL));
  Integer r = (hi << 64) + lo;
  return neg ? Integer(-r) : r;
}

inline Integer floor_sqrt(const Rational& r) {  // r >= 0
  Integer f = r.get_num() / r.get_den();
  Integer s;
  mpz_sqrt(s.get_mpz_t(), f.get_mpz_t());
  return s;
}

/// floor(k sqrt(s)) and ceil(k sqrt(s)) for rational k and s >= 0.
inline Integer floor_k_sqrt(const Rational& k, const Rational& s) {
  const Rational r = k * k * s;
  Integer f = floor_sqrt(r);
  if (k >= 0) return f;
  const bool perfect = Rational(f * f) == r;
  return perfect ? Integer(-f) : Integer(-f - 1);
}
inline Integer ceil_k_sqrt(const Rational& k, const Rational& s) { return -floor_k_sqrt(-k, s); }

/// Integer image of an event on fixed data.
struct IntegerEvent {
  EventKind kind;
  std::size_t n = 0;
  std::vector<Integer> a;  // u_i * q
  Integer A;               // sum a_i
  // window: Z = 2T - A(n+1) must lie in [z_lo, z_hi]
  Integer z_lo, z_hi;
  bool window_empty = false;
  // atom: T == target (only when x q is an integer)
  std::optional<Integer> target;

  explicit IntegerEvent(const PermEvent& e) : kind(e.kind), n(e.data.size()) {
    Integer q = 1;
    for (const auto& v : e.data) mpz_lcm(q.get_mpz_t(), q.get_mpz_t(), v.get_den_mpz_t());
    a.reserve(n);
    for (const auto& v : e.data) a.push_back(v.get_num() * (q / v.get_den()));
    A = std::accumulate(a.begin(), a.end(), Integer(0));
    if (kind == EventKind::Window) {
      if (n < 2) throw InvalidArgument("window event needs n >= 2");
      Integer sq = 0;
      for (const auto& v : a) sq += v * v;
      const Integer V = Integer(static_cast<unsigned long>(n)) * sq - A * A;
      if (V == 0) throw AllEqual("window event data are all equal");
      // stat = Z / (2R), R = sqrt(V/n); |stat - L n| <= h  <=>  Z in 2(Ln -+ h) R
      const Rational s(V, Integer(static_cast<unsigned long>(n)));
      const Rational nL = e.L * static_cast<long>(n);
      z_lo = ceil_k_sqrt(2 * (nL - e.h), s);
      z_hi = floor_k_sqrt(2 * (nL + e.h), s);
      window_empty = z_lo > z_hi;
    } else if (kind == EventKind::Atom) {
      const Rational t = e.x * Rational(q);
      if (t.get_den() == 1) target = t.get_num();
    }
  }

  /// Largest absolute value any statistic can reach (drives the i128 choice).
  Integer magnitude_bound() const {
    Integer m = 0;
    for (const auto& v : a) m = std::max(m, Integer(abs(v)));
    const auto nn = static_cast<unsigned long>(n);
    Integer bound = 4 * m * nn * (nn + 1) + abs(A) * (nn + 1);
    if (target) bound = std::max(bound, Integer(abs(*target)));
    bound = std::max({bound, Integer(abs(z_lo)), Integer(abs(z_hi))});
    return bound;
  }
};

/// Evaluates an IntegerEvent on permutations with integer type I.
/// perm[i] in {0..n-1}; pi(i) = perm[i] + 1.
template <typename I>
class PermEvaluator {
 public:
  explicit PermEvaluator(const IntegerEvent& ev) : kind_(ev.kind), n_(ev.n), empty_(ev.window_empty) {
    a_.reserve(n_);
    for (const auto& v : ev.a) a_.push_back(cast(v));
    A_ = cast(ev.A);
    z_lo_ = cast(ev.z_lo);
    z_hi_ = cast(ev.z_hi);
    has_target_ = ev.target.has_value();
    if (has_target_) target_ = cast(*ev.target);
  }

  bool operator()(const std::vector<std::uint32_t>& perm) const {
    switch (kind_) {
      case EventKind::Window: {
        if (empty_) return false;
        I T = 0;
        for (std::size_t i = 0; i < n_; ++i) T += a_[i] * static_cast<long>(perm[i] + 1);
        const I Z = 2 * T - A_ * static_cast<long>(n_ + 1);
        return z_lo_ <= Z && Z <= z_hi_;
      }
      case EventKind::Atom: {
        if (!has_target_) return false;
        I T = 0;
        for (std::size_t i = 0; i < n_; ++i) T += a_[i] * static_cast<long>(perm[i] + 1);
        return T == target_;
      }
      case EventKind::Shepp:
      case EventKind::Relative: {
        // relative: sum_j j xi_{perm[j]}; same law as sum_i xi_i pi(i), but
        // evaluated literally.
        I T = 0;
        if (kind_ == EventKind::Shepp)
          for (std::size_t i = 0; i < n_; ++i) T += a_[i] * static_cast<long>(perm[i] + 1);
        else
          for (std::size_t j = 0; j < n_; ++j) T += a_[perm[j]] * static_cast<long>(j + 1);
        return absval(T) <= absval(A_);
      }
      case EventKind::RelativeAlt: {
        I U = 0, W = 0;
        for (std::size_t j = 0; j < n_; ++j) {
          const bool neg = (j + 1) % 2 == 1;
          const I& v = a_[perm[j]];
          if (neg) {
            U -= v * static_cast<long>(j + 1);
            W -= v;
          } else {
            U += v * static_cast<long>(j + 1);
            W += v;
          }
        }
        return absval(U) <= absval(W);
      }
    }
    return false;
  }

 private:
  static I cast(const Integer& z) {
    if constexpr (std::is_same_v<I, Integer>) return z;
    else return to_i128(z);
  }
  static I absval(const I& v) { return v < 0 ? I(-v) : v; }

  EventKind kind_;
  std::size_t n_;
  bool empty_;
  std::vector<I> a_;
  I A_ = 0, z_lo_ = 0, z_hi_ = 0, target_ = 0;
  bool has_target_ = false;
};

/// Calls fn(evaluator) with the narrowest integer type that cannot overflow.
template <typename Fn>
auto with_evaluator(const IntegerEvent& ev, Fn fn) {
  if (fits_i128(ev.magnitude_bound(), 120)) return fn(PermEvaluator<i128>(ev));
  return fn(PermEvaluator<Integer>(ev));
}

inline Integer factorial(std::size_t n) {
  Integer f;
  mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(n));
  return f;
}

}  // namespace detail

struct EnumerationOptions {
  std::size_t cap = 10;
  unsigned workers = 1;
};

/// Exact probability by visiting all n! permutations. Work is split into n
/// blocks by the value of pi(1); each block walks its (n-1)! permutations
/// in lexicographic order with std::next_permutation.
inline ProbEstimate event_probability_exact(const PermEvent& e, std::size_t n, EnumerationOptions opt = {}) {
  if (e.law) throw InvalidArgument("exact enumeration needs fixed event data, not a sampling law");
  if (e.data.size() != n) throw InvalidArgument("event data length differs from n");
  if (n > opt.cap) throw TooLarge("n = " + std::to_string(n) + " exceeds the enumeration cap " + std::to_string(opt.cap));
  if (n == 0) throw InvalidArgument("n must be positive");
  if (e.kind == EventKind::Atom && !e.exact_data) throw ExactnessRequired("atom events need exact data");
  if (e.kind == EventKind::Shepp &&
      std::all_of(e.data.begin(), e.data.end(), [](const Rational& v) { return v == 0; }))
    throw InvalidArgument("shepp event needs data not all zero");

  const detail::IntegerEvent ev(e);
  const auto counts = detail::with_evaluator(ev, [&](auto eval) {
    return parallel_map<std::uint64_t>(n, opt.workers, [&](std::size_t first) {
      std::vector<std::uint32_t> perm(n);
      perm[0] = static_cast<std::uint32_t>(first);
      for (std::size_t i = 1, v = 0; i < n; ++i, ++v) {
        if (v == first) ++v;
        perm[i] = static_cast<std::uint32_t>(v);
      }
      std::uint64_t hits = 0;
      do {
        hits += eval(perm) ? 1 : 0;
      } while (std::next_permutation(perm.begin() + 1, perm.end()));
      return hits;
    });
  });
  const std::uint64_t hits = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  ProbEstimate out;
  Rational p(Integer(static_cast<unsigned long>(hits)), detail::factorial(n));
  p.canonicalize();
  out.p_hat = p.get_d();
  out.exact = p;
  out.hits = hits;
  return out;
}

struct McOptions {
  unsigned workers = 1;
  std::uint64_t chunk_size = 4096;
};

/// Monte Carlo estimate over uniform permutations (or fresh iid vectors for
/// law-driven relative events). Deterministic in (seed, trials).
inline ProbEstimate event_probability_mc(const PermEvent& e, std::size_t n, std::uint64_t trials, std::uint64_t seed,
                                         McOptions opt = {}) {
  if (trials == 0) throw InvalidArgument("trials must be at least 1");
  if (n == 0) throw InvalidArgument("n must be positive");
  const ChunkPlan plan{trials, opt.chunk_size, seed, opt.workers};
  auto fold = [](std::uint64_t& acc, std::uint64_t x) { acc += x; };
  std::uint64_t hits = 0;

  if (e.law) {
    const bool alt = e.kind == EventKind::RelativeAlt;
    const XiLaw law = *e.law;
    hits = chunked_reduce(plan, std::uint64_t{0},
                          [&](Rng& rng, std::uint64_t b, std::uint64_t end) {
                            std::vector<double> xi(n);
                            std::uint64_t h = 0;
                            for (auto t = b; t < end; ++t) {
                              for (auto& v : xi) v = draw(rng, law);
                              h += relative_event_indicator(xi, alt) ? 1 : 0;
                            }
                            return h;
                          },
                          fold);
  } else {
    if (e.data.size() != n) throw InvalidArgument("event data length differs from n");
    if (e.kind == EventKind::Shepp &&
        std::all_of(e.data.begin(), e.data.end(), [](const Rational& v) { return v == 0; }))
      throw InvalidArgument("shepp event needs data not all zero");
    const detail::IntegerEvent ev(e);
    hits = detail::with_evaluator(ev, [&](auto eval) {
      return chunked_reduce(plan, std::uint64_t{0},
                            [&](Rng& rng, std::uint64_t b, std::uint64_t end) {
                              std::vector<std::uint32_t> perm(n);
                              std::iota(perm.begin(), perm.end(), 0u);
                              std::uint64_t h = 0;
                              for (auto t = b; t < end; ++t) {
                                rng.shuffle(std::span<std::uint32_t>(perm));
                                h += eval(perm) ? 1 : 0;
                              }
                              return h;
                            },
                            fold);
    });
  }
  ProbEstimate out;
  out.trials = trials;
  out.hits = hits;
  out.seed = seed;
  out.p_hat = static_cast<double>(hits) / static_cast<double>(trials);
  out.stderr_ = std::sqrt(out.p_hat * (1.0 - out.p_hat) / static_cast<double>(trials));
  return out;
}

// ---------------------------------------------------------------------------
// Alternating decompositions

template <typename T>
struct AltDecomposition {
  bool odd = false;
  std::size_t k = 0, m = 0;
  // odd case, k = 2m - 1
  T S_e = 0, S_o = 0, T_e = 0, T_o = 0, T_ = 0;
  // even case, k = 2m
  std::vector<T> eta, eta_prime;
  T Lambda = 0;
  // both
  T S = 0;
  T lhs = 0;       // sum_j (-1)^j j xi_j
  T rhs = 0;       // 2(T + (m/2) S)  or  2 sum j eta'_j + m Lambda
  T residual = 0;  // |lhs - rhs|
};

/// Splits sum_j (-1)^j j xi_j (j from 1) into the centered parts used for the
/// alternating relative bound and reports the identity defect.
template <typename T>
AltDecomposition<T> alt_decompose(std::span<const T> xi) {
  const std::size_t k = xi.size();
  if (k < 2) throw LengthTooSmall("alternating decomposition needs k >= 2");
  auto at = [&](std::size_t j) -> const T& { return xi[j - 1]; };  // 1-based
  AltDecomposition<T> d;
  d.k = k;
  for (std::size_t j = 1; j <= k; ++j) {
    const T t = at(j) * static_cast<long>(j);
    d.lhs += (j % 2 == 0) ? t : T(-t);
  }
  if (k % 2 == 1) {
    const std::size_t m = (k + 1) / 2;  // m >= 2 since k >= 3
    d.odd = true;
    d.m = m;
    for (std::size_t j = 1; j <= m - 1; ++j) d.S_e += at(2 * j);
    for (std::size_t j = 1; j <= m; ++j) d.S_o += at(2 * j - 1);
    d.S = d.S_e - d.S_o;
    const T mean_e = d.S_e / static_cast<long>(m - 1);
    const T mean_o = d.S_o / static_cast<long>(m);
    for (std::size_t j = 1; j <= m - 1; ++j) d.T_e += (at(2 * j) - mean_e) * static_cast<long>(j);
    for (std::size_t j = 1; j <= m; ++j) d.T_o += (at(2 * j - 1) - mean_o) * static_cast<long>(j);
    d.T_ = d.T_e - d.T_o;
    d.rhs = 2 * (d.T_ + d.S * static_cast<long>(m) / 2);
  } else {
    const std::size_t m = k / 2;
    d.m = m;
    d.eta.resize(m);
    T odd_sum = 0;
    for (std::size_t j = 1; j <= m; ++j) {
      d.eta[j - 1] = at(2 * j) - at(2 * j - 1);
      d.S += d.eta[j - 1];
      odd_sum += at(2 * j - 1);
    }
    const T mean = d.S / static_cast<long>(m);
    d.eta_prime.resize(m);
    T weighted = 0;
    for (std::size_t j = 1; j <= m; ++j) {
      d.eta_prime[j - 1] = d.eta[j - 1] - mean;
      weighted += d.eta_prime[j - 1] * static_cast<long>(j);
    }
    d.Lambda = d.S + d.S / static_cast<long>(m) + odd_sum / static_cast<long>(m);
    d.rhs = 2 * weighted + d.Lambda * static_cast<long>(m);
  }
  const T diff = d.lhs - d.rhs;
  d.residual = diff < 0 ? T(-diff) : diff;
  return d;
}

/// Scale used for residual tolerances: 1 + max|xi_j| k^2.
inline double alt_residual_scale(std::span<const double> xi) {
  double mx = 0;
  for (double v : xi) mx = std::max(mx, std::fabs(v));
  const double k = static_cast<double>(xi.size());
  return 1.0 + mx * k * k;
}

// ---------------------------------------------------------------------------
// Local sign patterns

/// P{#positive signs outside [m/4, 3m/4]} for m fair independent signs.
inline Rational local_goodness_tail(std::size_t m) {
  if (m == 0) throw InvalidArgument("m must be at least 1");
  Integer bad = 0, b;
  for (std::size_t k = 0; k <= m; ++k) {
    if (4 * k < m || 4 * k > 3 * m) {
      mpz_bin_uiui(b.get_mpz_t(), static_cast<unsigned long>(m), static_cast<unsigned long>(k));
      bad += b;
    }
  }
  Integer total = 1;
  total <<= static_cast<mp_bitcnt_t>(m);
  Rational p(bad, total);
  p.canonicalize();
  return p;
}

inline bool good_count(std::size_t positives, std::size_t m) { return 4 * positives >= m && 4 * positives <= 3 * m; }

template <typename T>
struct BetaB {
  T beta_sq = 0, B_sq = 0, S_signed = 0;
  std::size_t positives = 0;
  bool good = false;
  bool bound_holds = true;  // B^2/5 <= beta^2 <= B^2; only asserted when good
};

/// beta^2 = B^2 - S^2/m for the sign-flipped vector (signs_j eta_j).
template <typename T>
BetaB<T> beta_B_check(std::span<const T> eta, std::span<const int> signs) {
  if (eta.size() != signs.size()) throw InvalidArgument("eta and signs differ in length");
  if (eta.empty()) throw InvalidArgument("eta must be nonempty");
  BetaB<T> r;
  const std::size_t m = eta.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (signs[j] != 1 && signs[j] != -1) throw InvalidArgument("signs must be +1 or -1");
    const T v = signs[j] > 0 ? eta[j] : T(-eta[j]);
    r.S_signed += v;
    r.B_sq += v * v;
    if (v > 0) ++r.positives;
  }
  r.beta_sq = r.B_sq - r.S_signed * r.S_signed / static_cast<long>(m);
  r.good = good_count(r.positives, m);
  if (r.good) r.bound_holds = r.B_sq <= 5 * r.beta_sq && r.beta_sq <= r.B_sq;
  return r;
}

// ---------------------------------------------------------------------------
// Tail sums over a permutation

inline void require_permutation(std::span<const std::size_t> sigma, std::size_t n) {
  if (sigma.size() != n) throw InvalidArgument("permutation length differs from weight length");
  std::vector<bool> seen(n, false);
  for (auto s : sigma) {
    if (s >= n || seen[s]) throw InvalidArgument("not a permutation of 0..n-1");
    seen[s] = true;
  }
}

/// alpha_j = w_sigma(j) + ... + w_sigma(n), j = 1..n (sigma is 0-based).
template <typename T>
std::vector<T> sigma_tail_sums(std::span<const T> w, std::span<const std::size_t> sigma) {
  require_permutation(sigma, w.size());
  std::vector<T> alpha(w.size());
  T acc = 0;
  for (std::size_t j = w.size(); j-- > 0;) {
    acc += w[sigma[j]];
    alpha[j] = acc;
  }
  return alpha;
}

/// w(sigma)^2 = sum_j alpha_j^2.
inline double w_sigma_sq(std::span<const double> w, std::span<const std::size_t> sigma) {
  const auto alpha = sigma_tail_sums<double>(w, sigma);
  double s = 0;
  for (double a : alpha) s += a * a;
  return s;
}
inline double w_sigma_sq(const WeightVector& w, std::span<const std::size_t> sigma) { return w_sigma_sq(w.w, sigma); }

/// Class index given w(sigma) itself: 0 when w <= 4(|L| + Q) sqrt(n),
/// otherwise the l with 2^(l-1) < w <= 2^l.
inline int sym_ell_level(double w_sigma, std::size_t n, double L, double Q = 10.0) {
  if (Q < 10.0) throw InvalidArgument("Q must be at least 10");
  const double threshold = 4.0 * (std::fabs(L) + Q) * std::sqrt(static_cast<double>(n));
  if (w_sigma <= threshold) return 0;
  int e = 0;
  const double mant = std::frexp(w_sigma, &e);  // w = mant 2^e, mant in [0.5, 1)
  return mant == 0.5 ? e - 1 : e;
}

inline int sym_ell_classify(const WeightVector& w, std::span<const std::size_t> sigma, double L, double Q = 10.0) {
  return sym_ell_level(std::sqrt(w_sigma_sq(w, sigma)), w.size(), L, Q);
}

}  // namespace dlab

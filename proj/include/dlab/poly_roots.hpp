#pragma once

// Exact counting of real zeros with multiplicity.
//
// Everything here works on exact integer images of rational polynomials:
// Sturm chains are primitive remainder sequences (each remainder divided by
// its content), multiplicities come from Yun's square-free decomposition.
// tally_sampled() adds a certified floating-point fast path for long
// sampled polynomials and falls back to the exact route whenever a count
// cannot be certified.

#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/polynomial.hpp"
#include "dlab/rational.hpp"
#include "dlab/signs.hpp"

namespace dlab {

/// Rational extended by -inf and +inf.
struct ExtRational {
  enum class Kind { NegInf, Finite, PosInf };
  Kind kind = Kind::Finite;
  Rational value = 0;

  static ExtRational neg_inf() { return {Kind::NegInf, 0}; }
  static ExtRational pos_inf() { return {Kind::PosInf, 0}; }
  ExtRational() = default;
  ExtRational(Kind k, Rational v) : kind(k), value(std::move(v)) {}
  ExtRational(Rational v) : kind(Kind::Finite), value(std::move(v)) {}  // NOLINT
  ExtRational(long v) : kind(Kind::Finite), value(v) {}                 // NOLINT

  friend bool operator<(const ExtRational& a, const ExtRational& b) {
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    return a.kind == Kind::Finite && a.value < b.value;
  }
};

/// Half-open interval (lo, hi]. Region counts built from these partition R.
struct Interval {
  ExtRational lo, hi;
  Interval(ExtRational l, ExtRational h) : lo(std::move(l)), hi(std::move(h)) {
    if (!(lo < hi)) throw InvalidArgument("interval requires lo < hi");
  }
  static Interval real_line() { return {ExtRational::neg_inf(), ExtRational::pos_inf()}; }
};

/// Zeros of a polynomial split by region; every count includes multiplicity.
struct RootTally {
  std::size_t at_zero = 0;
  std::size_t at_one = 0;
  std::size_t at_minus_one = 0;
  std::size_t in_pos_unit = 0;   // (0, 1)
  std::size_t in_neg_unit = 0;   // (-1, 0)
  std::size_t pos_outside = 0;   // (1, inf)
  std::size_t neg_outside = 0;   // (-inf, -1)
  std::size_t n_star = 0;

  std::size_t total() const { return n_star + at_zero; }

  friend bool operator==(const RootTally&, const RootTally&) = default;
};

struct SquarefreeFactor {
  Polynomial factor;
  std::size_t multiplicity;
};

namespace detail {

inline int sign_at(const IntPoly& p, const ExtRational& x) {
  if (p.empty()) return 0;
  switch (x.kind) {
    case ExtRational::Kind::PosInf:
      return sign(p.back());
    case ExtRational::Kind::NegInf:
      return (degree(p) % 2 == 0) ? sign(p.back()) : -sign(p.back());
    case ExtRational::Kind::Finite:
      break;
  }
  const Rational& q = x.value;
  if (q == 0) return sign(p.front());
  if (q == 1 || q == -1) {
    Integer s = 0;
    const bool alt = q == -1;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (alt && (k % 2 == 1)) s -= p[k];
      else s += p[k];
    }
    return sign(s);
  }
  // den^d p(num/den), homogeneous Horner in integers.
  const Integer& num = q.get_num();
  const Integer& den = q.get_den();
  Integer acc = p.back(), dpow = 1;
  for (std::size_t k = p.size() - 1; k-- > 0;) {
    dpow *= den;
    acc = acc * num + p[k] * dpow;
  }
  return sign(acc);
}

/// Sturm chain p, p', -rem, ... with every element primitive.
class SturmChain {
 public:
  explicit SturmChain(IntPoly p) {
    trim(p);
    make_primitive(p);
    chain_.push_back(std::move(p));
    IntPoly d = derivative(chain_.back());
    make_primitive(d);
    if (d.empty()) return;
    chain_.push_back(std::move(d));
    while (true) {
      const IntPoly& a = chain_[chain_.size() - 2];
      const IntPoly& b = chain_.back();
      if (degree(b) == 0) break;
      IntPoly r = positive_pseudo_remainder(a, b);
      if (r.empty()) break;
      for (auto& c : r) c = -c;
      make_primitive(r);
      chain_.push_back(std::move(r));
    }
  }

  /// True when the last chain element (gcd(p, p')) is a constant.
  bool squarefree() const { return chain_.size() < 2 || degree(chain_.back()) == 0; }

  std::size_t variations(const ExtRational& x) const {
    std::size_t v = 0;
    int last = 0;
    for (const auto& q : chain_) {
      const int s = sign_at(q, x);
      if (s == 0) continue;
      if (last != 0 && s != last) ++v;
      last = s;
    }
    return v;
  }

  /// Distinct roots in (lo, hi].
  std::size_t count(const Interval& I) const {
    const std::size_t a = variations(I.lo), b = variations(I.hi);
    return a >= b ? a - b : 0;
  }

  const std::vector<IntPoly>& elements() const { return chain_; }

 private:
  std::vector<IntPoly> chain_;
};

inline IntPoly require_nonzero(const Polynomial& p) {
  if (p.is_zero()) throw ZeroPolynomial("polynomial is identically zero");
  return to_int_poly(p.coeffs());
}

/// Yun's algorithm over Z[x]; factors are primitive with positive leading
/// coefficient, multiplicities strictly increasing. Constant input yields
/// no factors.
inline std::vector<std::pair<IntPoly, std::size_t>> yun(const IntPoly& f) {
  std::vector<std::pair<IntPoly, std::size_t>> out;
  if (degree(f) <= 0) return out;
  const IntPoly df = derivative(f);
  const IntPoly a0 = gcd(f, df);
  IntPoly b = exact_divide(f, a0);
  IntPoly c = exact_divide(df, a0);
  IntPoly d = subtract(c, derivative(b));
  for (std::size_t i = 1; degree(b) > 0; ++i) {
    const IntPoly a = gcd(b, d);
    b = exact_divide(b, a);
    c = d.empty() ? IntPoly{} : exact_divide(d, a);
    d = subtract(c, derivative(b));
    if (degree(a) > 0) out.emplace_back(a, i);
  }
  return out;
}

/// Largest k with (x - a)^k | p, with p already an integer polynomial.
/// Divides the factor out of p in place.
inline std::size_t strip_linear_factor(IntPoly& p, const Rational& a) {
  // Divide by (den x - num); the quotient stays integral when it divides.
  const IntPoly lin{-Integer(a.get_num()), Integer(a.get_den())};
  std::size_t k = 0;
  while (degree(p) >= 1 && sign_at(p, ExtRational(a)) == 0) {
    p = exact_divide(p, lin);
    ++k;
  }
  return k;
}

}  // namespace detail

/// Square-free factors with multiplicities; the product of
/// factor^multiplicity equals p up to a nonzero rational constant.
inline std::vector<SquarefreeFactor> squarefree_decompose(const Polynomial& p) {
  const detail::IntPoly f = detail::require_nonzero(p);
  std::vector<SquarefreeFactor> out;
  for (auto& [fac, mult] : detail::yun(f)) out.push_back({detail::to_polynomial(fac), mult});
  return out;
}

/// Distinct real roots of a square-free p in (lo, hi].
inline std::size_t sturm_count_distinct(const Polynomial& p, const Interval& I) {
  const detail::SturmChain chain(detail::require_nonzero(p));
  return chain.count(I);
}

/// Real roots in (lo, hi] counted with multiplicity.
inline std::size_t count_with_multiplicity(const Polynomial& p, const Interval& I) {
  const detail::IntPoly f = detail::require_nonzero(p);
  const detail::SturmChain chain(f);
  if (chain.squarefree()) return chain.count(I);
  std::size_t total = 0;
  for (const auto& [fac, mult] : detail::yun(f)) total += mult * detail::SturmChain(fac).count(I);
  return total;
}

/// Multiplicity of the root a (0 when p(a) != 0).
inline std::size_t count_with_multiplicity(const Polynomial& p, const Rational& a) {
  detail::IntPoly f = detail::require_nonzero(p);
  return detail::strip_linear_factor(f, a);
}

/// Number of sign changes of the coefficient sequence (Descartes' bound on
/// the positive zeros).
inline std::size_t descartes_bound(const Polynomial& p) {
  if (p.is_zero()) throw ZeroPolynomial("polynomial is identically zero");
  return sign_changes(p.coeffs());
}

namespace detail {

inline RootTally tally_int(IntPoly f) {
  RootTally t;
  std::size_t lead = 0;
  while (lead < f.size() && f[lead] == 0) ++lead;
  t.at_zero = lead;
  f.erase(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(lead));
  t.at_one = strip_linear_factor(f, Rational(1));
  t.at_minus_one = strip_linear_factor(f, Rational(-1));

  if (degree(f) > 0) {
    const ExtRational pts[5] = {ExtRational::neg_inf(), ExtRational(-1), ExtRational(0), ExtRational(1),
                                ExtRational::pos_inf()};
    auto add = [&](const SturmChain& ch, std::size_t mult) {
      std::array<std::size_t, 5> v{};
      for (int i = 0; i < 5; ++i) v[i] = ch.variations(pts[i]);
      t.neg_outside += mult * (v[0] - v[1]);
      t.in_neg_unit += mult * (v[1] - v[2]);
      t.in_pos_unit += mult * (v[2] - v[3]);
      t.pos_outside += mult * (v[3] - v[4]);
    };
    const SturmChain chain(f);
    if (chain.squarefree()) {
      add(chain, 1);
    } else {
      for (const auto& [fac, mult] : yun(f)) add(SturmChain(fac), mult);
    }
  }
  t.n_star = t.at_one + t.at_minus_one + t.in_pos_unit + t.in_neg_unit + t.pos_outside + t.neg_outside;
  return t;
}

}  // namespace detail

/// Region decomposition of the real zeros of p.
inline RootTally root_tally(const Polynomial& p) {
  if (p.is_zero()) throw ZeroPolynomial("polynomial is identically zero");
  // Leading zero coefficients must survive the conversion, so scale by hand
  // instead of trimming through to_int_poly's primitive step.
  Integer l = 1;
  for (const auto& q : p.coeffs()) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), q.get_den_mpz_t());
  detail::IntPoly f(p.length());
  for (std::size_t k = 0; k < p.length(); ++k) f[k] = p[k].get_num() * (l / p[k].get_den());
  detail::trim(f);
  return detail::tally_int(std::move(f));
}

// ---------------------------------------------------------------------------
// Certified floating-point counting.

namespace detail {

/// Counts zeros in the open interval (0, 1) of a polynomial whose true
/// coefficients lie in [coef[k] - rad[k], coef[k] + rad[k]]. Requires the
/// signs at 0 and 1 to be certifiably nonzero. Bisection with rigorous
/// Taylor enclosures: an interval is discarded when the enclosure of p
/// excludes 0 and counted (0 or 1) when the enclosure of p' excludes 0.
/// Returns nullopt when certification does not succeed within the budget.
class UnitIntervalCounter {
 public:
  UnitIntervalCounter(std::span<const double> coef, std::span<const double> rad)
      : a_(coef.begin(), coef.end()), r_(rad.begin(), rad.end()) {
    n_ = a_.size();
    abs_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) abs_[k] = std::fabs(a_[k]) + r_[k];
    any_radius_ = false;
    for (double v : r_)
      if (v != 0.0) any_radius_ = true;
    // Generous bound for Horner-with-derivatives rounding.
    gamma_ = (4.0 * static_cast<double>(n_) + 16.0) * DBL_EPSILON;
  }

  std::optional<std::size_t> count(std::size_t max_intervals = 200000) const {
    if (n_ <= 1) return 0;
    const int s0 = certified_sign(0.0), s1 = certified_sign(1.0);
    if (s0 == 0 || s1 == 0) return std::nullopt;
    struct Job {
      double a, b;
      int sa, sb;
    };
    std::vector<Job> stack{{0.0, 1.0, s0, s1}};
    std::size_t roots = 0, processed = 0;
    while (!stack.empty()) {
      const Job J = stack.back();
      stack.pop_back();
      if (++processed > max_intervals) return std::nullopt;
      const double c = 0.5 * (J.a + J.b), r = 0.5 * (J.b - J.a);
      const Eval ec = eval(c);
      const Bounds hb = abs_bounds(J.b);
      const double m2 = 2.0 * hb.s2 * (1.0 + gamma_);  // |p''| on [0, b]
      const double m3 = 6.0 * hb.s3 * (1.0 + gamma_);  // |p'''| on [0, b]
      const double slack = 1.0 + 1e-12;
      const double p_lo = std::fabs(ec.p) - ec.e0;
      const double p_spread = (r * (std::fabs(ec.d1) + ec.e1) + 0.5 * r * r * m2) * slack;
      if (p_lo > p_spread) continue;  // no zero in [a, b]
      const double d_lo = std::fabs(ec.d1) - ec.e1;
      const double d_spread = (r * (std::fabs(ec.d2) + ec.e2) + 0.5 * r * r * m3) * slack;
      if (d_lo > d_spread) {  // strictly monotone on [a, b]
        if (J.sa != J.sb) ++roots;
        continue;
      }
      if (r < 1e-13) return std::nullopt;
      // Split where the sign of p is certified.
      static constexpr double kOffsets[] = {0.5, 0.4375, 0.5625, 0.375, 0.625, 0.3125, 0.6875, 0.25, 0.75};
      bool split = false;
      for (double f : kOffsets) {
        const double m = J.a + f * (J.b - J.a);
        if (!(m > J.a && m < J.b)) continue;
        const int sm = certified_sign(m);
        if (sm == 0) continue;
        stack.push_back({m, J.b, sm, J.sb});
        stack.push_back({J.a, m, J.sa, sm});
        split = true;
        break;
      }
      if (!split) return std::nullopt;
    }
    return roots;
  }

 private:
  struct Eval {
    double p, d1, d2;  // p(x), p'(x), p''(x)
    double e0, e1, e2;  // rigorous error radii
  };
  struct Bounds {
    double s0, s1, s2, s3;  // sum A_k x^k, sum k A_k x^(k-1), ... (Taylor coefficient form)
  };

  Bounds abs_bounds(double x) const {
    Bounds b{abs_[n_ - 1], 0.0, 0.0, 0.0};
    for (std::size_t k = n_ - 1; k-- > 0;) {
      b.s3 = b.s3 * x + b.s2;
      b.s2 = b.s2 * x + b.s1;
      b.s1 = b.s1 * x + b.s0;
      b.s0 = b.s0 * x + abs_[k];
    }
    return b;  // s2 = (sum k(k-1) A x^(k-2)) / 2, s3 = (...) / 6
  }

  Eval eval(double x) const {
    double p0 = a_[n_ - 1], p1 = 0.0, p2 = 0.0;
    for (std::size_t k = n_ - 1; k-- > 0;) {
      p2 = p2 * x + p1;
      p1 = p1 * x + p0;
      p0 = p0 * x + a_[k];
    }
    const Bounds b = abs_bounds(x);
    Eval e{p0, p1, 2.0 * p2, 0, 0, 0};
    const double g = gamma_ * (1.0 + gamma_);
    e.e0 = g * b.s0 + DBL_MIN * static_cast<double>(n_);
    e.e1 = g * b.s1 + DBL_MIN * static_cast<double>(n_);
    e.e2 = 2.0 * g * b.s2 + DBL_MIN * static_cast<double>(n_);
    if (any_radius_) {
      // abs_ already folds the radii in; their contribution is not scaled by gamma.
      Bounds rb{r_[n_ - 1], 0.0, 0.0, 0.0};
      for (std::size_t k = n_ - 1; k-- > 0;) {
        rb.s2 = rb.s2 * x + rb.s1;
        rb.s1 = rb.s1 * x + rb.s0;
        rb.s0 = rb.s0 * x + r_[k];
      }
      e.e0 += rb.s0 * (1.0 + gamma_);
      e.e1 += rb.s1 * (1.0 + gamma_);
      e.e2 += 2.0 * rb.s2 * (1.0 + gamma_);
    }
    return e;
  }

  int certified_sign(double x) const {
    const Eval e = eval(x);
    if (std::fabs(e.p) > e.e0) return e.p > 0 ? 1 : -1;
    return 0;
  }

  std::vector<double> a_, r_, abs_;
  std::size_t n_ = 0;
  double gamma_ = 0.0;
  bool any_radius_ = false;
};

/// Integer polynomial rounded to doubles with per-coefficient radii, after
/// an exact power-of-two rescaling that puts the largest coefficient in
/// [0.5, 1). Rescaling does not move any root.
struct RoundedPoly {
  std::vector<double> coef, rad;
};

inline std::optional<RoundedPoly> round_scaled(const IntPoly& p) {
  RoundedPoly out;
  out.coef.resize(p.size());
  out.rad.resize(p.size());
  long emax = 0;
  bool any = false;
  for (const auto& z : p) {
    if (z == 0) continue;
    const long e = static_cast<long>(mpz_sizeinbase(z.get_mpz_t(), 2));
    if (!any || e > emax) emax = e;
    any = true;
  }
  if (!any) return std::nullopt;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0) continue;
    long e = 0;
    const double m = mpz_get_d_2exp(&e, p[k].get_mpz_t());  // truncated, |m| in [0.5, 1)
    const long total = e - emax;
    if (total < -1000) {  // below any useful resolution; keep as pure uncertainty
      out.rad[k] = std::ldexp(1.0, -1000);
      continue;
    }
    out.coef[k] = std::ldexp(m, static_cast<int>(total));
    const bool exact = mpz_sizeinbase(p[k].get_mpz_t(), 2) <= 53;
    out.rad[k] = exact ? 0.0 : std::ldexp(1.0, static_cast<int>(total - 52));
  }
  return out;
}

}  // namespace detail

namespace detail {

/// Integer image of the sampled coefficients with the zero, +1 and -1 roots
/// already removed exactly.
struct ReducedSample {
  RootTally fixed;  // at_zero, at_one, at_minus_one filled in
  IntPoly rest;
};

inline ReducedSample reduce_sample(std::span<const double> coeffs) {
  ScaledIntegers si = scale_to_integers(coeffs);
  ReducedSample out;
  IntPoly& f = out.rest;
  f = std::move(si.ints);
  trim(f);
  if (f.empty()) throw ZeroPolynomial("polynomial is identically zero");
  std::size_t lead = 0;
  while (f[lead] == 0) ++lead;
  out.fixed.at_zero = lead;
  f.erase(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(lead));
  out.fixed.at_one = strip_linear_factor(f, Rational(1));
  out.fixed.at_minus_one = strip_linear_factor(f, Rational(-1));
  return out;
}

/// Four open-region counts by the certified floating counter, or nullopt.
inline std::optional<std::array<std::size_t, 4>> certified_regions(const IntPoly& f) {
  if (degree(f) <= 0) return std::array<std::size_t, 4>{};
  const auto rounded = round_scaled(f);
  if (!rounded) return std::nullopt;
  const auto& c = rounded->coef;
  const auto& r = rounded->rad;
  std::vector<double> neg(c), rev(c.rbegin(), c.rend()), revneg, rrev(r.rbegin(), r.rend());
  for (std::size_t k = 1; k < neg.size(); k += 2) neg[k] = -neg[k];
  revneg = rev;
  // x^d q(-1/x) has coefficient (-1)^(d-j) q_(d-j) at x^j.
  const std::size_t d = c.size() - 1;
  for (std::size_t j = 0; j < revneg.size(); ++j)
    if ((d - j) % 2 == 1) revneg[j] = -revneg[j];
  const auto a = UnitIntervalCounter(c, r).count();
  if (!a) return std::nullopt;
  const auto b = UnitIntervalCounter(neg, r).count();
  if (!b) return std::nullopt;
  const auto e = UnitIntervalCounter(rev, rrev).count();
  if (!e) return std::nullopt;
  const auto g = UnitIntervalCounter(revneg, rrev).count();
  if (!g) return std::nullopt;
  return std::array<std::size_t, 4>{*a, *b, *e, *g};
}

inline RootTally finish_tally(RootTally t, const std::array<std::size_t, 4>& open) {
  t.in_pos_unit = open[0];
  t.in_neg_unit = open[1];
  t.pos_outside = open[2];
  t.neg_outside = open[3];
  t.n_star = t.at_one + t.at_minus_one + t.in_pos_unit + t.in_neg_unit + t.pos_outside + t.neg_outside;
  return t;
}

}  // namespace detail

/// Tally using only the certified floating counter; nullopt when it cannot
/// certify every region.
inline std::optional<RootTally> tally_sampled_certified(std::span<const double> coeffs) {
  const auto red = detail::reduce_sample(coeffs);
  const auto open = detail::certified_regions(red.rest);
  if (!open) return std::nullopt;
  return detail::finish_tally(red.fixed, *open);
}

/// Tally for a polynomial with double coefficients (taken exactly as dyadic
/// rationals). Uses the certified floating counter for the four open
/// regions and exact arithmetic for 0, +1, -1; if any region cannot be
/// certified the open regions are recomputed exactly. `exact_fallback`
/// reports whether the exact route was needed.
inline RootTally tally_sampled(std::span<const double> coeffs, bool* exact_fallback = nullptr) {
  if (exact_fallback) *exact_fallback = false;
  const auto red = detail::reduce_sample(coeffs);
  if (const auto open = detail::certified_regions(red.rest)) return detail::finish_tally(red.fixed, *open);
  if (exact_fallback) *exact_fallback = true;
  const RootTally e = detail::tally_int(red.rest);
  return detail::finish_tally(red.fixed, {e.in_pos_unit, e.in_neg_unit, e.pos_outside, e.neg_outside});
}

}  // namespace dlab

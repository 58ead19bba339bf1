#pragma once

#include <algorithm>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/rational.hpp"

namespace dlab {

/// Polynomial with exact rational coefficients c[0] + c[1] x + ... + c[n] x^n.
///
/// The stored length n+1 is kept even when trailing coefficients vanish:
/// sampled polynomials always carry all n+1 slots, and reversal x^n p(1/x)
/// is defined relative to that length. degree() reports the true degree.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<Rational> coeffs) : c_(std::move(coeffs)) {
    for (auto& q : c_) q.canonicalize();
  }
  Polynomial(std::initializer_list<long> ints) {
    c_.reserve(ints.size());
    for (long v : ints) c_.emplace_back(v);
  }

  static Polynomial from_doubles(std::span<const double> xs) { return Polynomial(dyadic(xs)); }

  /// Monic-free helper: product of (x - r) over the given rational roots.
  static Polynomial from_roots(std::span<const Rational> roots) {
    std::vector<Rational> c{Rational(1)};
    for (const auto& r : roots) {
      std::vector<Rational> next(c.size() + 1);
      for (std::size_t k = 0; k < c.size(); ++k) {
        next[k + 1] += c[k];
        next[k] -= r * c[k];
      }
      c = std::move(next);
    }
    return Polynomial(std::move(c));
  }

  std::size_t length() const { return c_.size(); }
  std::span<const Rational> coeffs() const { return c_; }
  const Rational& operator[](std::size_t k) const { return c_[k]; }

  /// Largest index with a nonzero coefficient, -1 for the zero polynomial.
  int degree() const {
    for (std::size_t k = c_.size(); k-- > 0;)
      if (c_[k] != 0) return static_cast<int>(k);
    return -1;
  }
  bool is_zero() const { return degree() < 0; }

  Rational evaluate(const Rational& x) const {
    Rational acc = 0;
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * x + c_[k];
    return acc;
  }

  /// x^n p(1/x) with n = length() - 1.
  Polynomial reversed() const {
    std::vector<Rational> r(c_.rbegin(), c_.rend());
    return Polynomial(std::move(r));
  }

  /// p(-x).
  Polynomial negated_argument() const {
    std::vector<Rational> r(c_);
    for (std::size_t k = 1; k < r.size(); k += 2) r[k] = -r[k];
    return Polynomial(std::move(r));
  }

  Polynomial derivative() const {
    if (c_.size() <= 1) return Polynomial(std::vector<Rational>{Rational(0)});
    std::vector<Rational> d(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = c_[k] * static_cast<long>(k);
    return Polynomial(std::move(d));
  }

  /// Coefficients with trailing zeros removed (length degree()+1).
  Polynomial trimmed() const {
    const int d = degree();
    return Polynomial(std::vector<Rational>(c_.begin(), c_.begin() + (d < 0 ? 1 : d + 1)));
  }

  /// One line, coefficients c[0] .. c[n] as "p/q" separated by single spaces.
  std::string to_text() const {
    std::string s;
    for (std::size_t k = 0; k < c_.size(); ++k) {
      if (k) s += ' ';
      s += dlab::to_text(c_[k]);
    }
    return s;
  }

  static Polynomial parse(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    if (line.empty()) throw ParseError("empty polynomial line");
    std::vector<Rational> c;
    std::size_t pos = 0;
    while (true) {
      const auto next = line.find(' ', pos);
      const auto tok = line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
      if (tok.empty()) throw ParseError("coefficients must be separated by single spaces");
      c.push_back(parse_rational(tok));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    return Polynomial(std::move(c));
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.c_ == b.c_; }

 private:
  std::vector<Rational> c_;
};

namespace detail {

// Dense integer polynomials, low degree first, always trimmed (empty == 0).
using IntPoly = std::vector<Integer>;

inline void trim(IntPoly& p) {
  while (!p.empty() && p.back() == 0) p.pop_back();
}

inline int degree(const IntPoly& p) { return static_cast<int>(p.size()) - 1; }

inline Integer content(const IntPoly& p) {
  Integer g = 0;
  for (const auto& c : p) {
    mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), c.get_mpz_t());
    if (g == 1) break;
  }
  return g;
}

/// Divides by the (positive) content; the sign of the polynomial is kept.
inline void make_primitive(IntPoly& p) {
  if (p.empty()) return;
  const Integer g = content(p);
  if (g > 1)
    for (auto& c : p) mpz_divexact(c.get_mpz_t(), c.get_mpz_t(), g.get_mpz_t());
}

/// Positive rational multiple of p with integer coefficients, primitive.
inline IntPoly to_int_poly(std::span<const Rational> c) {
  Integer l = 1;
  for (const auto& q : c) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), q.get_den_mpz_t());
  IntPoly p(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) p[k] = c[k].get_num() * (l / c[k].get_den());
  trim(p);
  make_primitive(p);
  return p;
}

inline IntPoly derivative(const IntPoly& p) {
  if (p.size() <= 1) return {};
  IntPoly d(p.size() - 1);
  for (std::size_t k = 1; k < p.size(); ++k) d[k - 1] = p[k] * static_cast<unsigned long>(k);
  trim(d);
  return d;
}

/// A positive multiple of rem(a, b): lc(b)^e a - q b where e counts the
/// elimination steps actually performed; negated when lc(b)^e < 0.
inline IntPoly positive_pseudo_remainder(IntPoly a, const IntPoly& b) {
  const int db = degree(b);
  const Integer& lb = b.back();
  int steps = 0;
  Integer t;
  while (degree(a) >= db) {
    const int shift = degree(a) - db;
    const Integer la = a.back();
    for (auto& c : a) c *= lb;
    for (int k = 0; k <= db; ++k) {
      mpz_mul(t.get_mpz_t(), la.get_mpz_t(), b[k].get_mpz_t());
      a[k + shift] -= t;
    }
    trim(a);
    ++steps;
  }
  if (lb < 0 && (steps % 2 == 1))
    for (auto& c : a) c = -c;
  return a;
}

/// gcd by the primitive remainder sequence; primitive with positive leading
/// coefficient. gcd(0, 0) = 0.
inline IntPoly gcd(IntPoly a, IntPoly b) {
  trim(a);
  trim(b);
  if (a.size() < b.size()) std::swap(a, b);
  make_primitive(a);
  make_primitive(b);
  while (!b.empty()) {
    IntPoly r = positive_pseudo_remainder(a, b);
    make_primitive(r);
    a = std::move(b);
    b = std::move(r);
  }
  if (!a.empty() && a.back() < 0)
    for (auto& c : a) c = -c;
  return a;
}

/// Exact quotient a / b over Z[x]. b must be primitive and divide a.
inline IntPoly exact_divide(const IntPoly& a, const IntPoly& b) {
  if (a.empty()) return {};
  const int da = degree(a), db = degree(b);
  IntPoly r(a);
  IntPoly q(static_cast<std::size_t>(da - db + 1));
  Integer t;
  for (int k = da - db; k >= 0; --k) {
    const Integer& top = r[static_cast<std::size_t>(k + db)];
    if (top != 0) {
      if (!mpz_divisible_p(top.get_mpz_t(), b.back().get_mpz_t()))
        throw lab_error("exact_divide: divisor does not divide dividend");
      mpz_divexact(q[k].get_mpz_t(), top.get_mpz_t(), b.back().get_mpz_t());
      for (int j = 0; j <= db; ++j) {
        mpz_mul(t.get_mpz_t(), q[k].get_mpz_t(), b[j].get_mpz_t());
        r[static_cast<std::size_t>(k + j)] -= t;
      }
    }
  }
  trim(r);
  if (!r.empty()) throw lab_error("exact_divide: nonzero remainder");
  trim(q);
  return q;
}

inline IntPoly subtract(const IntPoly& a, const IntPoly& b) {
  IntPoly r(std::max(a.size(), b.size()));
  for (std::size_t k = 0; k < a.size(); ++k) r[k] += a[k];
  for (std::size_t k = 0; k < b.size(); ++k) r[k] -= b[k];
  trim(r);
  return r;
}

inline Polynomial to_polynomial(const IntPoly& p) {
  std::vector<Rational> c;
  c.reserve(p.size());
  for (const auto& z : p) c.emplace_back(z);
  if (c.empty()) c.emplace_back(0);
  return Polynomial(std::move(c));
}

}  // namespace detail
}  // namespace dlab

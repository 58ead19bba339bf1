#pragma once

// Exact arithmetic helpers on top of GMP's C++ bindings.

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlab/errors.hpp"

namespace dlab {

using Integer = mpz_class;
using Rational = mpq_class;

inline int sign(const Rational& q) { return sgn(q); }
inline int sign(const Integer& z) { return sgn(z); }
inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

/// Exact value of a finite double. Every double is a dyadic rational, so
/// this loses nothing.
inline Rational dyadic(double x) {
  if (!std::isfinite(x)) throw InvalidArgument("non-finite value cannot be captured exactly");
  Rational q;
  mpq_set_d(q.get_mpq_t(), x);
  return q;
}

inline std::vector<Rational> dyadic(std::span<const double> xs) {
  std::vector<Rational> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(dyadic(x));
  return out;
}

/// Canonical text form, always "p/q" (q = 1 for integers).
inline std::string to_text(const Rational& q) {
  return q.get_num().get_str() + "/" + q.get_den().get_str();
}

/// Parses "p/q" or a bare integer "p". Anything else (spaces, decimals,
/// zero denominators) is a ParseError.
inline Rational parse_rational(std::string_view tok) {
  auto valid_int = [](std::string_view s, bool allow_sign) {
    if (s.empty()) return false;
    std::size_t i = 0;
    if (allow_sign && (s[0] == '-' || s[0] == '+')) i = 1;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
      if (s[i] < '0' || s[i] > '9') return false;
    return true;
  };
  const auto slash = tok.find('/');
  std::string_view num = tok.substr(0, slash);
  std::string_view den = slash == std::string_view::npos ? std::string_view{"1"} : tok.substr(slash + 1);
  if (!valid_int(num, true) || !valid_int(den, false))
    throw ParseError("malformed rational: '" + std::string(tok) + "'");
  std::string n(num);
  if (n[0] == '+') n.erase(0, 1);
  Integer zn(n), zd{std::string(den)};
  if (zd == 0) throw ParseError("zero denominator: '" + std::string(tok) + "'");
  Rational q(zn, zd);
  q.canonicalize();
  return q;
}

/// Exact integer images of dyadic values: values[i] == ints[i] * 2^exponent.
struct ScaledIntegers {
  std::vector<Integer> ints;
  long exponent = 0;
};

inline ScaledIntegers scale_to_integers(std::span<const double> values) {
  ScaledIntegers out;
  long min_exp = 0;
  bool any = false;
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite coefficient");
    if (v == 0.0) continue;
    int e = 0;
    std::frexp(v, &e);
    const long lsb = static_cast<long>(e) - 53;  // v is a multiple of 2^lsb
    if (!any || lsb < min_exp) min_exp = lsb;
    any = true;
  }
  out.exponent = any ? min_exp : 0;
  out.ints.reserve(values.size());
  for (double v : values) {
    Integer z;
    if (v != 0.0) {
      int e = 0;
      const double mant = std::ldexp(std::frexp(v, &e), 53);  // exact, |mant| < 2^53
      mpz_set_d(z.get_mpz_t(), mant);
      mpz_mul_2exp(z.get_mpz_t(), z.get_mpz_t(),
                   static_cast<mp_bitcnt_t>(static_cast<long>(e) - 53 - out.exponent));
    }
    out.ints.push_back(std::move(z));
  }
  return out;
}

}  // namespace dlab

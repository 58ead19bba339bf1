#pragma once

// Partial-sum sequences of a coefficient vector and the sign-change bounds
// they give on the zeros in (0, 1) and (-1, 0):
//
//   S_k  = l_0 + ... + l_k             T_k  = S_0 + ... + S_k
//   S'_k = sum_{j<=k} (-1)^j l_j       T'_k = S'_0 + ... + S'_k
//
//   N((0,1), P) <= 1 + S(T_0..T_n),    N((-1,0), P) <= 1 + S(T'_0..T'_n).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/poly_roots.hpp"
#include "dlab/polynomial.hpp"
#include "dlab/rational.hpp"
#include "dlab/signs.hpp"

namespace dlab {

template <typename T>
struct PartialSums {
  std::vector<T> S;
  std::vector<T> T_;  // cumulative sums of S

  const std::vector<T>& sums() const { return S; }
  const std::vector<T>& second_sums() const { return T_; }
};

/// T_k by its closed form sum_j (k+1-j) l_j (alternating: times (-1)^j).
template <typename T>
T closed_form_second_sum(std::span<const T> lambda, std::size_t k, bool alternating) {
  T acc = 0;
  for (std::size_t j = 0; j <= k; ++j) {
    T term = lambda[j] * static_cast<long>(k + 1 - j);
    if (alternating && (j % 2 == 1)) term = -term;
    acc += term;
  }
  return acc;
}

namespace detail {

template <typename T>
PartialSums<T> partial_sums_impl(std::span<const T> lambda, bool alternating) {
  if (lambda.empty()) throw InvalidArgument("coefficient sequence must be nonempty");
  PartialSums<T> out;
  out.S.reserve(lambda.size());
  out.T_.reserve(lambda.size());
  T s = 0, t = 0;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (alternating && (k % 2 == 1)) s -= lambda[k];
    else s += lambda[k];
    t += s;
    out.S.push_back(s);
    out.T_.push_back(t);
  }
  return out;
}

}  // namespace detail

/// S_k and T_k for 0 <= k <= n.
template <typename T>
PartialSums<T> partial_sum_sequences(std::span<const T> lambda) {
  return detail::partial_sums_impl(lambda, false);
}

/// S'_k and T'_k for 0 <= k <= n.
template <typename T>
PartialSums<T> alternating_sum_sequences(std::span<const T> lambda) {
  return detail::partial_sums_impl(lambda, true);
}

/// Outcome of checking both sign-change bounds against exact root counts.
struct SignSeqReport {
  std::size_t n = 0;
  std::size_t s_changes = 0;      // S(T_0..T_n)
  std::size_t s_changes_alt = 0;  // S(T'_0..T'_n)
  std::size_t bound_pos = 0;      // 1 + s_changes
  std::size_t bound_neg = 0;      // 1 + s_changes_alt
  std::size_t actual_pos = 0;     // N((0,1), P)
  std::size_t actual_neg = 0;     // N((-1,0), P)
  bool holds_pos = false;
  bool holds_neg = false;
  bool exact = true;  // false only for the floating throughput mode

  /// 1{|T_k| <= |S_k|} for k = 1..n, and the same for the primed sequences.
  std::vector<bool> witness, witness_alt;
  std::size_t witness_count = 0, witness_alt_count = 0;

  bool holds() const { return holds_pos && holds_neg; }

  std::string csv_row() const {
    return std::to_string(n) + "," + std::to_string(s_changes) + "," + std::to_string(s_changes_alt) + "," +
           std::to_string(actual_pos) + "," + std::to_string(actual_neg) + "," + (holds_pos ? "1" : "0") + "," +
           (holds_neg ? "1" : "0");
  }
  static std::string csv_header() { return "n,s_changes,s_changes_alt,actual_pos,actual_neg,holds_pos,holds_neg"; }
};

namespace detail {

template <typename T>
T abs_value(const T& v) {
  return v < 0 ? T(-v) : v;
}

template <typename T>
void fill_sequences(SignSeqReport& rep, std::span<const T> lambda) {
  const auto plain = partial_sum_sequences(lambda);
  const auto alt = alternating_sum_sequences(lambda);
  rep.n = lambda.size() - 1;
  rep.s_changes = sign_changes(plain.T_);
  rep.s_changes_alt = sign_changes(alt.T_);
  rep.bound_pos = 1 + rep.s_changes;
  rep.bound_neg = 1 + rep.s_changes_alt;
  rep.witness.assign(rep.n, false);
  rep.witness_alt.assign(rep.n, false);
  rep.witness_count = rep.witness_alt_count = 0;
  for (std::size_t k = 1; k <= rep.n; ++k) {
    if (abs_value(plain.T_[k]) <= abs_value(plain.S[k])) {
      rep.witness[k - 1] = true;
      ++rep.witness_count;
    }
    if (abs_value(alt.T_[k]) <= abs_value(alt.S[k])) {
      rep.witness_alt[k - 1] = true;
      ++rep.witness_alt_count;
    }
  }
}

inline void finish(SignSeqReport& rep, const RootTally& t) {
  rep.actual_pos = t.in_pos_unit;
  rep.actual_neg = t.in_neg_unit;
  rep.holds_pos = rep.actual_pos <= rep.bound_pos;
  rep.holds_neg = rep.actual_neg <= rep.bound_neg;
}

}  // namespace detail

/// Exact check of both bounds for a rational polynomial.
inline SignSeqReport bound_check(const Polynomial& p) {
  if (p.is_zero()) throw ZeroPolynomial("polynomial is identically zero");
  SignSeqReport rep;
  detail::fill_sequences<Rational>(rep, p.coeffs());
  detail::finish(rep, root_tally(p));
  return rep;
}

/// Exact check for double coefficients with a tally already computed. The
/// sequences are formed on the exact integer images, so no rounding enters.
inline SignSeqReport bound_check_sampled(std::span<const double> coeffs, const RootTally& tally) {
  if (coeffs.empty()) throw InvalidArgument("coefficient sequence must be nonempty");
  const ScaledIntegers si = scale_to_integers(coeffs);
  SignSeqReport rep;
  detail::fill_sequences<Integer>(rep, si.ints);
  detail::finish(rep, tally);
  return rep;
}

/// Floating-point sequences (throughput mode, flagged as inexact). Signs of
/// rounded partial sums can differ from the exact ones.
inline SignSeqReport bound_check_floating(std::span<const double> coeffs, const RootTally& tally) {
  if (coeffs.empty()) throw InvalidArgument("coefficient sequence must be nonempty");
  SignSeqReport rep;
  detail::fill_sequences<double>(rep, coeffs);
  detail::finish(rep, tally);
  rep.exact = false;
  return rep;
}

}  // namespace dlab

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "dlab/poly_roots.hpp"
#include "dlab/rng.hpp"

using namespace dlab;

namespace {

Polynomial from_int_roots(std::initializer_list<long> roots) {
  std::vector<Rational> r;
  for (long v : roots) r.emplace_back(v);
  return Polynomial::from_roots(r);
}

// Multiply two coefficient vectors (low degree first).
std::vector<Rational> mul(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  std::vector<Rational> c(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  return c;
}

std::vector<Rational> coeff_vec(const Polynomial& p) { return {p.coeffs().begin(), p.coeffs().end()}; }

// Real roots of a monic-normalised polynomial via the companion matrix.
std::vector<double> companion_real_roots(const std::vector<double>& c, double imag_tol) {
  const int n = static_cast<int>(c.size()) - 1;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) m(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) m(i, n - 1) = -c[i] / c[n];
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    if (std::abs(es.eigenvalues()[i].imag()) < imag_tol) out.push_back(es.eigenvalues()[i].real());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Polynomial, ParseAndPrintRoundTrip) {
  const auto p = Polynomial::parse("1/2 -3 0/1 7/4");
  EXPECT_EQ(p.length(), 4u);
  EXPECT_EQ(p.to_text(), "1/2 -3/1 0/1 7/4");
  EXPECT_EQ(Polynomial::parse(p.to_text()), p);
}

TEST(Polynomial, ParseRejectsMalformed) {
  EXPECT_THROW(Polynomial::parse(""), ParseError);
  EXPECT_THROW(Polynomial::parse("1  2"), ParseError);
  EXPECT_THROW(Polynomial::parse("1 2/0"), ParseError);
  EXPECT_THROW(Polynomial::parse("1.5"), ParseError);
  EXPECT_THROW(Polynomial::parse(" 1"), ParseError);
}

TEST(Polynomial, LengthKeptThroughTrailingZeros) {
  const Polynomial p{1, 2, 0, 0};
  EXPECT_EQ(p.length(), 4u);
  EXPECT_EQ(p.degree(), 1);
  EXPECT_EQ(p.reversed(), (Polynomial{0, 0, 2, 1}));
}

TEST(Squarefree, Examples) {
  {
    const auto f = squarefree_decompose(Polynomial{1, -2, 1});
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].multiplicity, 2u);
    EXPECT_EQ(f[0].factor.trimmed(), (Polynomial{-1, 1}));
  }
  {
    const auto f = squarefree_decompose(Polynomial{0, -1, 0, 1});
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].multiplicity, 1u);
    EXPECT_EQ(f[0].factor.trimmed(), (Polynomial{0, -1, 0, 1}));
  }
  {
    const auto f = squarefree_decompose(Polynomial{1, 0, -2, 0, 1});
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].multiplicity, 2u);
    EXPECT_EQ(f[0].factor.trimmed(), (Polynomial{-1, 0, 1}));
  }
  EXPECT_THROW(squarefree_decompose(Polynomial{0, 0}), ZeroPolynomial);
}

TEST(Squarefree, ProductRebuildsInput) {
  // (x-2)^3 (x+1)^2 (x^2+1) x
  auto c = coeff_vec(from_int_roots({2, 2, 2, -1, -1, 0}));
  c = mul(c, {Rational(1), Rational(0), Rational(1)});
  const Polynomial p(c);
  const auto fac = squarefree_decompose(p);
  std::vector<Rational> prod{Rational(1)};
  for (const auto& [f, m] : fac) {
    const auto fc = coeff_vec(f.trimmed());
    for (std::size_t i = 0; i < m; ++i) prod = mul(prod, fc);
  }
  ASSERT_EQ(prod.size(), c.size());
  const Rational ratio = c.back() / prod.back();
  for (std::size_t k = 0; k < c.size(); ++k) EXPECT_EQ(prod[k] * ratio, c[k]);
  std::vector<std::size_t> mults;
  for (const auto& f : fac) mults.push_back(f.multiplicity);
  EXPECT_TRUE(std::is_sorted(mults.begin(), mults.end()));
}

TEST(Sturm, Examples) {
  EXPECT_EQ(sturm_count_distinct(Polynomial{-2, 0, 1}, Interval(0, 2)), 1u);
  EXPECT_EQ(sturm_count_distinct(Polynomial{1, 0, 1}, Interval(-10, 10)), 0u);
  EXPECT_EQ(sturm_count_distinct(from_int_roots({1, 2, 3}), Interval(Rational(3, 2), 3)), 2u);
  EXPECT_THROW(sturm_count_distinct(Polynomial{0}, Interval(0, 1)), ZeroPolynomial);
  EXPECT_THROW(Interval(1, 1), InvalidArgument);
}

TEST(Sturm, HalfOpenConvention) {
  const auto p = from_int_roots({0, 1});
  EXPECT_EQ(sturm_count_distinct(p, Interval(0, 1)), 1u);   // 1 counted, 0 not
  EXPECT_EQ(sturm_count_distinct(p, Interval(-1, 0)), 1u);  // 0 counted
  EXPECT_EQ(sturm_count_distinct(p, Interval::real_line()), 2u);
}

TEST(Multiplicity, Examples) {
  EXPECT_EQ(count_with_multiplicity(Polynomial{1, -2, 1}, Rational(1)), 2u);
  EXPECT_EQ(count_with_multiplicity(Polynomial{0, 0, 0, 1}, Rational(0)), 3u);
  EXPECT_EQ(count_with_multiplicity(Polynomial{0, -1, 0, 1}, Interval(-2, 2)), 3u);
  EXPECT_EQ(count_with_multiplicity(Polynomial{1, -2, 1}, Rational(2)), 0u);
  EXPECT_THROW(count_with_multiplicity(Polynomial{0, 0}, Rational(0)), ZeroPolynomial);
}

TEST(RootTallyTest, Examples) {
  {
    const auto t = root_tally(Polynomial{-1, 0, 1});
    EXPECT_EQ(t.n_star, 2u);
    EXPECT_EQ(t.at_one, 1u);
    EXPECT_EQ(t.at_minus_one, 1u);
    EXPECT_EQ(t.in_pos_unit + t.in_neg_unit + t.pos_outside + t.neg_outside + t.at_zero, 0u);
  }
  {
    const auto t = root_tally(Polynomial{0, 0, 0, 1});
    EXPECT_EQ(t.n_star, 0u);
    EXPECT_EQ(t.at_zero, 3u);
  }
  {
    const auto t = root_tally(Polynomial{1, 1, 1, 1});
    EXPECT_EQ(t.n_star, 1u);
    EXPECT_EQ(t.at_minus_one, 1u);
  }
  EXPECT_THROW(root_tally(Polynomial{0, 0, 0}), ZeroPolynomial);
}

TEST(RootTallyTest, AllRegionsWithMultiplicity) {
  // roots: -3 (x2), -1/2, 0 (x2), 1/3 (x3), 1, 5
  std::vector<Rational> r{-3, -3, Rational(-1, 2), 0, 0, Rational(1, 3), Rational(1, 3), Rational(1, 3), 1, 5};
  const auto t = root_tally(Polynomial::from_roots(r));
  EXPECT_EQ(t.neg_outside, 2u);
  EXPECT_EQ(t.in_neg_unit, 1u);
  EXPECT_EQ(t.at_zero, 2u);
  EXPECT_EQ(t.in_pos_unit, 3u);
  EXPECT_EQ(t.at_one, 1u);
  EXPECT_EQ(t.pos_outside, 1u);
  EXPECT_EQ(t.at_minus_one, 0u);
  EXPECT_EQ(t.n_star, 8u);
}

TEST(Descartes, Examples) {
  EXPECT_EQ(descartes_bound(Polynomial{2, -3, 1}), 2u);
  EXPECT_EQ(count_with_multiplicity(Polynomial{2, -3, 1}, Interval(0, ExtRational::pos_inf())), 2u);
  EXPECT_EQ(descartes_bound(Polynomial{1, 1, 1}), 0u);
  EXPECT_EQ(descartes_bound(Polynomial{-1, 0, 0, 1}), 1u);
  EXPECT_EQ(count_with_multiplicity(Polynomial{-1, 0, 0, 1}, Interval(0, ExtRational::pos_inf())), 1u);
  EXPECT_THROW(descartes_bound(Polynomial{0}), ZeroPolynomial);
}

// Random integer polynomials, some built with repeated and boundary roots.
class RandomPolys : public ::testing::Test {
 protected:
  static Polynomial random_poly(Rng& rng, int max_deg) {
    const int mode = static_cast<int>(rng.below(3));
    if (mode == 0) {
      const int d = 1 + static_cast<int>(rng.below(max_deg));
      std::vector<Rational> c(d + 1);
      for (auto& x : c) x = static_cast<long>(rng.below(11)) - 5;
      if (c.back() == 0) c.back() = 1;
      return Polynomial(c);
    }
    // product of small rational roots with repeats, times x^2 + 1 sometimes
    const int k = 1 + static_cast<int>(rng.below(6));
    std::vector<Rational> roots;
    for (int i = 0; i < k; ++i) {
      Rational r(static_cast<long>(rng.below(9)) - 4, 1 + static_cast<long>(rng.below(3)));
      r.canonicalize();
      const int rep = 1 + static_cast<int>(rng.below(3));
      for (int j = 0; j < rep; ++j) roots.push_back(r);
    }
    auto c = coeff_vec(Polynomial::from_roots(roots));
    if (mode == 2) c = mul(c, {Rational(2), Rational(-1), Rational(3)});
    return Polynomial(c);
  }
};

TEST_F(RandomPolys, DescartesRuleHolds) {
  Rng rng(11);
  for (int it = 0; it < 2000; ++it) {
    const auto p = random_poly(rng, 12);
    if (p.is_zero()) continue;
    EXPECT_LE(count_with_multiplicity(p, Interval(0, ExtRational::pos_inf())), descartes_bound(p)) << p.to_text();
  }
}

TEST_F(RandomPolys, TallyPartitionsAndSymmetries) {
  Rng rng(12);
  for (int it = 0; it < 1000; ++it) {
    const auto p = random_poly(rng, 12);
    if (p.is_zero()) continue;
    const auto t = root_tally(p);
    EXPECT_EQ(t.n_star, t.at_one + t.at_minus_one + t.in_pos_unit + t.in_neg_unit + t.pos_outside + t.neg_outside);
    EXPECT_EQ(t.total(), count_with_multiplicity(p, Interval::real_line())) << p.to_text();
    EXPECT_EQ(t.n_star, count_with_multiplicity(p, Interval::real_line()) - t.at_zero);
    EXPECT_LE(t.total(), static_cast<std::size_t>(p.degree()));

    const auto m = root_tally(p.negated_argument());
    EXPECT_EQ(m.in_pos_unit, t.in_neg_unit);
    EXPECT_EQ(m.in_neg_unit, t.in_pos_unit);
    EXPECT_EQ(m.pos_outside, t.neg_outside);
    EXPECT_EQ(m.neg_outside, t.pos_outside);
    EXPECT_EQ(m.at_one, t.at_minus_one);
    EXPECT_EQ(m.at_zero, t.at_zero);

    if (p[0] != 0) {
      const auto r = root_tally(p.reversed());
      EXPECT_EQ(r.in_pos_unit, t.pos_outside) << p.to_text();
      EXPECT_EQ(r.pos_outside, t.in_pos_unit);
      EXPECT_EQ(r.in_neg_unit, t.neg_outside);
      EXPECT_EQ(r.neg_outside, t.in_neg_unit);
      EXPECT_EQ(r.at_one, t.at_one);
      EXPECT_EQ(r.at_minus_one, t.at_minus_one);
    }
  }
}

TEST_F(RandomPolys, PointCountMatchesDivisibility) {
  Rng rng(13);
  for (int it = 0; it < 500; ++it) {
    const auto p = random_poly(rng, 10);
    if (p.is_zero()) continue;
    for (long a = -2; a <= 2; ++a) {
      const std::size_t k = count_with_multiplicity(p, Rational(a));
      // (x-a)^k divides p and (x-a)^(k+1) does not: check p^(j)(a) = 0 for j < k.
      Polynomial d = p;
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_EQ(d.evaluate(Rational(a)), 0);
        d = d.derivative();
      }
      EXPECT_NE(d.evaluate(Rational(a)), 0);
    }
  }
}

// Independent oracle: eigenvalues of the companion matrix.
TEST(SturmVsCompanion, TenThousandWellSeparated) {
  Rng rng(2024);
  for (int it = 0; it < 10000; ++it) {
    const int n_real = static_cast<int>(rng.below(7));
    const int n_quad = static_cast<int>(rng.below(4));
    if (n_real + 2 * n_quad == 0) continue;
    // distinct real roots on a grid with spacing 1/2 in [-4, 4]
    std::vector<long> grid;
    for (long g = -8; g <= 8; ++g) grid.push_back(g);
    std::vector<Rational> roots;
    for (int i = 0; i < n_real; ++i) {
      const std::size_t j = rng.below(grid.size());
      roots.emplace_back(grid[j], 2);
      grid.erase(grid.begin() + static_cast<std::ptrdiff_t>(j));
    }
    for (auto& r : roots) r.canonicalize();
    auto c = coeff_vec(Polynomial::from_roots(roots));
    for (int q = 0; q < n_quad; ++q) {
      // (x - a)^2 + b^2 with b >= 1
      const Rational a(static_cast<long>(rng.below(9)) - 4, 2);
      const Rational b2(1 + static_cast<long>(rng.below(4)));
      c = mul(c, {a * a + b2, -2 * a, Rational(1)});
    }
    const Polynomial p(c);
    std::vector<double> cd;
    for (const auto& x : c) cd.push_back(x.get_d());
    const auto real = companion_real_roots(cd, 1e-6);
    const std::size_t distinct = sturm_count_distinct(p, Interval::real_line());
    ASSERT_EQ(distinct, real.size()) << p.to_text();
    ASSERT_EQ(distinct, static_cast<std::size_t>(n_real));
    // interval counts against the float roots too
    const std::size_t in01 = sturm_count_distinct(p, Interval(Rational(-1, 4), Rational(7, 4)));
    const auto inside = std::count_if(real.begin(), real.end(), [](double x) { return x > -0.25 && x <= 1.75; });
    ASSERT_EQ(in01, static_cast<std::size_t>(inside)) << p.to_text();
  }
}

// The certified floating counter must agree with the exact route whenever it
// does not defer to it.
TEST(TallySampled, AgreesWithExactTally) {
  Rng rng(99);
  int fallbacks = 0;
  for (int it = 0; it < 600; ++it) {
    const int n = 1 + static_cast<int>(rng.below(64));
    std::vector<double> c(n + 1);
    const int law = it % 4;
    for (auto& x : c) {
      switch (law) {
        case 0: x = rng.gaussian(); break;
        case 1: x = rng.rademacher(); break;
        case 2: x = rng.cauchy(); break;
        default: x = rng.below(4) == 0 ? 0.0 : rng.uniform_sym(); break;
      }
    }
    if (std::all_of(c.begin(), c.end(), [](double v) { return v == 0.0; })) continue;
    bool fb = false;
    const auto fast = tally_sampled(c, &fb);
    fallbacks += fb;
    const auto exact = root_tally(Polynomial::from_doubles(c));
    ASSERT_EQ(fast, exact) << "iteration " << it;
  }
  // Rademacher polynomials often have roots at -1 and repeated factors; those
  // are handled exactly, so the fallback rate stays modest.
  EXPECT_LT(fallbacks, 300);
}

TEST(TallySampled, RepeatedRootsAndBoundaryRootsGoExact) {
  // (x - 1/2)^2 (x + 1)(x - 1) x^2 has dyadic coefficients
  std::vector<Rational> r{Rational(1, 2), Rational(1, 2), -1, 1, 0, 0};
  const auto p = Polynomial::from_roots(r);
  std::vector<double> c;
  for (const auto& q : p.coeffs()) c.push_back(q.get_d());
  const auto t = tally_sampled(c);
  EXPECT_EQ(t, root_tally(p));
  EXPECT_EQ(t.in_pos_unit, 2u);
  EXPECT_EQ(t.at_zero, 2u);
}

TEST(TallySampled, HighDegreeGaussianIsQuick) {
  Rng rng(5);
  std::vector<double> c(1025);
  for (auto& x : c) x = rng.gaussian();
  const auto t0 = std::chrono::steady_clock::now();
  const auto t = tally_sampled(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GT(t.n_star, 0u);
  EXPECT_LT(secs, 5.0);
}

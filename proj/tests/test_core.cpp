// Exact arithmetic, LP, polyhedral set algebra, double description, projection.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nlqual/expr.hpp"
#include "nlqual/project.hpp"

using namespace nlqual;

namespace {

QVec qv(std::initializer_list<int> xs) {
  QVec v;
  for (int x : xs) v.emplace_back(x);
  return v;
}

}  // namespace

TEST(Rational, ParsesFractionsAndDecimals) {
  EXPECT_EQ(parse_rational("3/4"), Rational(3, 4));
  EXPECT_EQ(parse_rational("-2"), Rational(-2));
  EXPECT_EQ(parse_rational("0.125"), Rational(1, 8));
  EXPECT_EQ(parse_rational("1e-3"), Rational(1, 1000));
  EXPECT_THROW(parse_rational("abc"), Error);
}

TEST(Rational, ExactPowers) {
  EXPECT_EQ(*exact_pow(Rational(1, 4), Rational(1, 2)), Rational(1, 2));
  EXPECT_EQ(*exact_pow(Rational(4), Rational(-1, 2)), Rational(1, 2));
  EXPECT_FALSE(exact_pow(Rational(2), Rational(1, 2)).has_value());
}

TEST(Expr, EvaluatesAndDifferentiates) {
  Expr e = Expr::parse("x1^2 + 3*x2 - abs(x1)", 2);
  QVec x = {Rational(2), Rational(1)};
  EXPECT_EQ(*e.eval_exact(x), Rational(5));
  auto g = e.grad_exact(x);
  ASSERT_TRUE(g);
  EXPECT_EQ(g->grad[0], Rational(3));
  EXPECT_EQ(g->grad[1], Rational(3));
  EXPECT_TRUE(g->smooth);
  QVec z = {Rational(0), Rational(0)};
  EXPECT_FALSE(e.grad_exact(z)->smooth);
  Expr t = Expr::parse("-t^3", 1, "t");
  EXPECT_EQ(*t.eval_exact(QVec{Rational(-2)}), Rational(8));
  EXPECT_FALSE(Expr::parse("sqrt(x1)", 1).eval_exact(QVec{Rational(2)}).has_value());
  EXPECT_NEAR(Expr::parse("sqrt(x1)", 1).eval(DVec{2.0}), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(Expr::parse("x3", 2), Error);
}

TEST(Lp, BoundedMaximum) {
  LinearProgram lp;
  lp.add_var(true);
  lp.objective = qv({1});
  lp.add_le(qv({1}), Rational(3));
  auto c = lp_solve(lp);
  ASSERT_EQ(c.status, LpStatus::Optimal);
  EXPECT_EQ(c.value, Rational(3));
  EXPECT_TRUE(verify_certificate(lp, c));
}

TEST(Lp, InfeasibleGivesFarkas) {
  LinearProgram lp;
  lp.add_var(true);
  lp.add_ge(qv({1}), Rational(1));
  lp.add_le(qv({1}), Rational(0));
  auto c = lp_solve(lp);
  ASSERT_EQ(c.status, LpStatus::Infeasible);
  EXPECT_TRUE(verify_certificate(lp, c));
}

TEST(Lp, UnboundedGivesRay) {
  LinearProgram lp;
  lp.add_var(true);
  lp.add_var(false);
  lp.objective = qv({1, 1});
  lp.add_le(qv({1, -1}), Rational(2));
  auto c = lp_solve(lp);
  ASSERT_EQ(c.status, LpStatus::Unbounded);
  EXPECT_TRUE(verify_certificate(lp, c));
}

TEST(Lp, RandomCertificatesReplay) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coef(-4, 4);
  for (int trial = 0; trial < 60; ++trial) {
    LinearProgram lp;
    const int n = 3, m = 4;
    for (int j = 0; j < n; ++j) lp.add_var(trial % 2 == 0);
    lp.objective.resize(n);
    for (auto& c : lp.objective) c = coef(rng);
    for (int i = 0; i < m; ++i) {
      QVec a(n);
      for (auto& c : a) c = coef(rng);
      lp.add_le(a, Rational(coef(rng)));
    }
    if (trial % 3 == 0) {
      QVec a(n);
      for (auto& c : a) c = coef(rng);
      lp.add_eq(a, Rational(coef(rng)));
    }
    auto cert = lp_solve(lp);
    EXPECT_TRUE(verify_certificate(lp, cert)) << "trial " << trial;
  }
}

TEST(PolySet, OppositeRaysBecomeLine) {
  auto A = PolySet::cone(2, {qv({0, 1}), qv({0, -1})});
  ASSERT_EQ(A.pieces().size(), 1u);
  EXPECT_TRUE(A.pieces()[0].rays.empty());
  ASSERT_EQ(A.pieces()[0].lines.size(), 1u);
  EXPECT_EQ(A.pieces()[0].lines[0], qv({0, 1}));
}

TEST(PolySet, FullRankConeIsWhole) {
  auto A = PolySet::cone(1, {qv({1}), qv({-1})});
  EXPECT_TRUE(A.is_whole());
}

TEST(PolySet, SegmentContainsZeroWithHalfWeights) {
  auto A = PolySet::points(1, {qv({-1}), qv({1})});
  // as a single convex piece
  Polyhedron seg{{qv({-1}), qv({1})}, {}, {}};
  PolySet S(1, {seg});
  auto m = contains_zero(S);
  ASSERT_TRUE(m.member);
  auto pm = piece_contains(S.pieces()[0], qv({0}));
  ASSERT_TRUE(pm.member);
  EXPECT_EQ(pm.cert.x[0], Rational(1, 2));
  EXPECT_EQ(pm.cert.x[1], Rational(1, 2));
  EXPECT_FALSE(contains_zero(A).member);
}

TEST(PolySet, MinkowskiSumOfPointAndRay) {
  auto A = PolySet::point(qv({1, 0}));
  auto B = PolySet::cone(2, {qv({0, 1})});
  auto S = minkowski_sum(A, B);
  EXPECT_TRUE(contains(S, qv({1, 5})).member);
  EXPECT_FALSE(contains(S, qv({1, -1})).member);
}

TEST(PolySet, SubsetAndEquality) {
  auto quad = PolySet::cone(2, {qv({1, 0}), qv({0, 1})});
  auto half = PolySet::cone(2, {qv({1, 0})}, {qv({0, 1})});
  EXPECT_TRUE(subset_of(quad, half));
  EXPECT_FALSE(subset_of(half, quad));
  EXPECT_TRUE(set_equal(quad, PolySet::cone(2, {qv({1, 0}), qv({0, 1}), qv({1, 1})})));
}

TEST(Dd, BoxRoundTrip) {
  HPolyhedron H;
  H.dim = 2;
  H.A = {qv({1, 0}), qv({-1, 0}), qv({0, 1}), qv({0, -1})};
  H.b = {Rational(1), Rational(0), Rational(2), Rational(0)};
  auto P = to_v(H);
  ASSERT_TRUE(P);
  EXPECT_EQ(P->points.size(), 4u);
  auto H2 = to_h(*P, 2);
  EXPECT_EQ(H2.A.size(), 4u);
  for (int x = -1; x <= 3; ++x)
    for (int y = -1; y <= 3; ++y) {
      QVec pt = qv({x, y});
      EXPECT_EQ(H.contains(pt), H2.contains(pt));
    }
}

TEST(Dd, EmptyPolyhedron) {
  HPolyhedron H;
  H.dim = 1;
  H.A = {qv({1}), qv({-1})};
  H.b = {Rational(0), Rational(-1)};
  EXPECT_FALSE(to_v(H).has_value());
}

TEST(Dd, ConeWithLineality) {
  HPolyhedron H;
  H.dim = 3;
  H.A = {qv({-1, 0, 0})};
  H.b = {Rational(0)};
  auto P = to_v(H);
  ASSERT_TRUE(P);
  EXPECT_EQ(P->rays.size(), 1u);
  EXPECT_EQ(P->lines.size(), 2u);
  auto Hc = cone_to_h(*P, 3);
  EXPECT_EQ(Hc.A.size(), 1u);
  Polyhedron shifted{{qv({1, 0, 0})}, {qv({1, 0, 0})}, {}};
  EXPECT_THROW(cone_to_h(shifted, 3), Error);
}

TEST(Dd, RandomPolytopesRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coef(-3, 3);
  for (int trial = 0; trial < 25; ++trial) {
    Polyhedron P;
    for (int k = 0; k < 6; ++k) P.points.push_back(qv({coef(rng), coef(rng), coef(rng)}));
    if (trial % 2) P.rays.push_back(qv({coef(rng), coef(rng), 1}));
    auto H = to_h(P, 3);
    PolySet S(3, {P});
    for (int probe = 0; probe < 20; ++probe) {
      QVec y = qv({coef(rng), coef(rng), coef(rng)});
      EXPECT_EQ(H.contains(y), contains(S, y).member) << "trial " << trial;
    }
  }
}

namespace {

// Oracle: enumerate every subset of constraints as an active set and keep the
// best feasible face projection.
double face_enumeration_distance(const HPolyhedron& H, const DVec& x) {
  const std::size_t m = H.A.size(), d = H.dim;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::size_t> act;
    for (std::size_t i = 0; i < m; ++i)
      if (mask >> i & 1) act.push_back(i);
    Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(d));
    Eigen::VectorXd y = xv;
    if (!act.empty()) {
      Eigen::MatrixXd A(static_cast<Eigen::Index>(act.size()), static_cast<Eigen::Index>(d));
      Eigen::VectorXd b(static_cast<Eigen::Index>(act.size()));
      for (std::size_t k = 0; k < act.size(); ++k) {
        for (std::size_t j = 0; j < d; ++j) A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = H.A[act[k]][j].get_d();
        b(static_cast<Eigen::Index>(k)) = H.b[act[k]].get_d();
      }
      Eigen::VectorXd r = A * xv - b;
      y = xv - A.transpose() * (A * A.transpose()).completeOrthogonalDecomposition().solve(r);
      if ((A * y - b).norm() > 1e-9) continue;
    }
    DVec yd(y.data(), y.data() + y.size());
    if (H.violation(yd) > 1e-9) continue;
    best = std::min(best, (y - xv).norm());
  }
  return best;
}

}  // namespace

TEST(Project, MatchesFaceEnumeration) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coef(-3, 3);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    HPolyhedron H;
    H.dim = 3;
    for (int i = 0; i < 6; ++i) {
      H.A.push_back(qv({coef(rng), coef(rng), coef(rng)}));
      H.b.emplace_back(coef(rng) + 3);
    }
    DVec x = {u(rng), u(rng), u(rng)};
    double oracle = face_enumeration_distance(H, x);
    auto p = project_h(H, x);
    if (!std::isfinite(oracle)) continue;
    ASSERT_TRUE(p) << "trial " << trial;
    EXPECT_NEAR(p->distance, oracle, 1e-8 * (1 + oracle)) << "trial " << trial;
    EXPECT_LE(H.violation(p->point), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Project, UnionTakesNearestPiece) {
  Polyhedron left{{qv({-2}), qv({-1})}, {}, {}};
  Polyhedron right{{qv({3}), qv({4})}, {}, {}};
  PolySet S(1, {left, right});
  auto p = project(S, DVec{0.0});
  EXPECT_NEAR(p.distance, 1.0, 1e-12);
  EXPECT_NEAR(p.point[0], -1.0, 1e-12);
}

TEST(Project, VFormWeights) {
  Polyhedron seg{{qv({-1, 0}), qv({1, 0})}, {qv({0, 1})}, {}};
  auto r = nearest_in_piece(seg, DVec{0.5, -2.0});
  EXPECT_NEAR(r.distance, 2.0, 1e-9);
  EXPECT_NEAR(r.point_weights[0], 0.25, 1e-6);
  EXPECT_NEAR(r.point_weights[1], 0.75, 1e-6);
}

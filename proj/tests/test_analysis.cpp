// Subdifferentials, qualification checks, KKT, penalties, prox and the solver.

#include <gtest/gtest.h>

#include <cmath>

#include "random_instances.hpp"

using namespace nlqual;
using nlqual::testing::load_named;
using nlqual::testing::random_affine_instance;

namespace {

QVec qv(std::initializer_list<int> xs) {
  QVec v;
  for (int x : xs) v.emplace_back(x);
  return v;
}

ProblemSpec problem(const std::string& text) { return parse_problem_text(text); }

// Minimizer of 1/2 (t - v)^2 + lam |t|^p by dense grid plus local refinement.
double brute_prox(double p, double lam, double v) {
  auto h = [&](double t) { return 0.5 * (t - v) * (t - v) + lam * std::pow(std::abs(t), p); };
  const double R = std::abs(v) + 1.0;
  const int N = 100000;
  double bt = 0.0, bv = h(0.0);
  for (int i = 0; i <= N; ++i) {
    double t = -R + 2.0 * R * i / N;
    if (h(t) < bv) bv = h(t), bt = t;
  }
  if (bt == 0.0) return 0.0;
  double lo = bt - 2.0 * R / N, hi = bt + 2.0 * R / N;
  if (lo * hi <= 0.0) (bt > 0 ? lo : hi) = 0.0;
  for (int it = 0; it < 300; ++it) {
    double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
    if (h(a) < h(b)) hi = b;
    else lo = a;
  }
  double t = 0.5 * (lo + hi);
  return h(t) < h(0.0) ? t : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// subdiff

TEST(Subdiff, BridgeAtZeroIsEverything) {
  auto b = outer_table(OuterFn::pow_abs(Rational(1, 2)), Rational(0));
  EXPECT_TRUE(b.regular.is_whole());
  EXPECT_TRUE(b.limiting.is_whole());
  EXPECT_TRUE(b.horizon.is_whole());
  EXPECT_TRUE(superlinear_growth(OuterFn::pow_abs(Rational(1, 2)), Rational(0)));
}

TEST(Subdiff, BridgeAwayFromZeroIsSmooth) {
  auto b = outer_table(OuterFn::pow_abs(Rational(1, 2)), Rational(4));
  // d/dt sqrt(t) at 4 is 1/4.
  EXPECT_TRUE(contains(b.limiting, {Rational(1, 4)}).member);
  EXPECT_TRUE(b.horizon.is_zero_set());
}

TEST(Subdiff, PositivePartHalfLine) {
  auto b = outer_table(OuterFn::pow_plus(Rational(1, 2)), Rational(0));
  auto half = PolySet::cone(1, {qv({1})});
  EXPECT_TRUE(set_equal(b.regular, half));
  EXPECT_TRUE(set_equal(b.horizon, half));
  EXPECT_FALSE(contains(b.limiting, qv({-1})).member);
}

TEST(Subdiff, AbsoluteValueIsLipschitz) {
  auto b = outer_table(OuterFn::pow_abs(Rational(1)), Rational(0));
  EXPECT_TRUE(b.horizon.is_zero_set());
  EXPECT_TRUE(contains(b.limiting, qv({1})).member);
  EXPECT_TRUE(contains(b.limiting, qv({-1})).member);
  EXPECT_FALSE(contains(b.limiting, qv({2})).member);
}

TEST(Subdiff, Example1HorizonBundle) {
  auto P = load_named("example1");
  auto b = phi_bundle(P, *P.point);
  EXPECT_TRUE(set_equal(b.horizon, PolySet::cone(4, {}, {qv({0, 1, 0, 0}), qv({0, 0, 0, 1})})));
  EXPECT_EQ(b.horizon_ex, Exactness::Exact);
  EXPECT_FALSE(b.lipschitz());
}

TEST(Subdiff, CustomTableIsUsedAtBreakpoint) {
  auto P = load_named("example3");
  auto b = phi_bundle(P, *P.point);
  EXPECT_TRUE(set_equal(b.horizon, PolySet::cone(1, {qv({1})})));
}

// ---------------------------------------------------------------------------
// qualify

TEST(Qualify, Example1Verdicts) {
  auto P = load_named("example1");
  QVec x = *P.point;
  auto nn = check_nnamcq(P, x);
  ASSERT_EQ(nn.verdict, Verdict::CertifiedFails);
  ASSERT_TRUE(nn.lambda && nn.mu);
  EXPECT_TRUE(verify_multiplier(make_context(P, x), phi_bundle(P, x).horizon, *nn.lambda, *nn.mu));
  for (auto c : {Condition::QnHorizon, Condition::RcpldHorizon, Condition::QnCoderiv, Condition::Bq})
    EXPECT_EQ(check_condition(P, x, c).verdict, Verdict::CertifiedHolds) << to_string(c);
}

TEST(Qualify, Example2SmoothRegime) {
  auto P = load_named("example2");
  QVec x = *P.point;
  auto rc = check_rcpld_horizon(P, x);
  EXPECT_EQ(rc.verdict, Verdict::LikelyFails);
  EXPECT_EQ(rc.regime, Regime::SmoothHeuristic);
  EXPECT_EQ(check_quasinormality_horizon(P, x).verdict, Verdict::LikelyHolds);
}

TEST(Qualify, Example3AndExample4) {
  auto P3 = load_named("example3");
  EXPECT_EQ(check_bq(P3, *P3.point).verdict, Verdict::CertifiedHolds);
  EXPECT_EQ(check_bq_coderiv(P3, *P3.point).verdict, Verdict::CertifiedHolds);
  auto P4 = load_named("example4");
  EXPECT_EQ(check_abnormal_null(P4, *P4.point).verdict, Verdict::CertifiedHolds);
}

TEST(Qualify, OneDimensionalFailureHasLadder) {
  auto P = problem(R"({"dim": 1, "phi": [{"outer": {"kind": "sqrt_abs"}, "inner": {"kind": "affine", "a": ["1"]}}],
                       "eq": [{"kind": "affine", "a": ["1"]}], "point": ["0"]})");
  QVec x = *P.point;
  auto r = check_quasinormality_horizon(P, x);
  ASSERT_EQ(r.verdict, Verdict::CertifiedFails);
  ASSERT_TRUE(r.mu);
  ASSERT_FALSE(r.ladder.empty());
  // Every ladder point violates the equality with the multiplier's sign.
  for (const auto& y : r.ladder) EXPECT_GT(sgn((*r.mu)[0]) * sgn(y[0]), 0);
}

TEST(Qualify, UnconstrainedHoldsEverywhere) {
  auto P = problem(R"({"dim": 2, "phi": [{"outer": {"kind": "sqrt_abs"}, "inner": {"kind": "affine", "a": ["1", "0"]}}],
                       "point": ["0", "1"]})");
  for (auto c : {Condition::Nnamcq, Condition::QnHorizon, Condition::RcpldHorizon, Condition::Bq})
    EXPECT_EQ(check_condition(P, *P.point, c).verdict, Verdict::CertifiedHolds) << to_string(c);
}

TEST(Qualify, ConstraintScalingDoesNotChangeVerdicts) {
  auto P = load_named("example1");
  auto S = P;
  for (auto& g : S.ineq) g = ScalarFn::make_affine(scaled(g.a, Rational(3)), g.b * 3);
  for (auto& h : S.eq) h = ScalarFn::make_affine(scaled(h.a, Rational(-2)), h.b * -2);
  QVec x = *P.point;
  for (auto c : {Condition::Nnamcq, Condition::QnHorizon, Condition::RcpldHorizon, Condition::Bq})
    EXPECT_EQ(check_condition(P, x, c).verdict, check_condition(S, x, c).verdict) << to_string(c);
}

TEST(Qualify, ImplicationGeneratorsAgreeWithLp) {
  for (std::size_t s = 0; s < 20; ++s) {
    auto P = random_affine_instance(5, s);
    auto r = check_abnormal_null(P, *P.point);
    ASSERT_NE(r.verdict, Verdict::Unknown) << "instance " << s;
    EXPECT_EQ(holds(r.verdict), abnormal_null_by_lp(P, *P.point)) << "instance " << s;
  }
}

TEST(Qualify, HorizonConditionsMatchStandardPlusBq) {
  for (std::size_t s = 0; s < 40; ++s) {
    auto P = random_affine_instance(99, s);
    QVec x = *P.point;
    bool bq = holds(check_bq(P, x).verdict);
    EXPECT_EQ(holds(check_quasinormality_horizon(P, x).verdict), holds(check_standard_quasinormality(P, x).verdict) && bq) << s;
    EXPECT_EQ(holds(check_rcpld_horizon(P, x).verdict), holds(check_standard_rcpld(P, x).verdict) && bq) << s;
  }
}

TEST(Qualify, PersistenceNearExample1) {
  auto P = load_named("example1");
  auto rep = persistence_probe(P, *P.point, Condition::QnHorizon, 1e-3, 16, 1);
  EXPECT_EQ(rep.tested, 16u);
  EXPECT_TRUE(rep.consistent());
  for (const auto& y : sample_feasible(P, *P.point, 1e-3, 8, 2)) EXPECT_TRUE(check_feasible(P, y).feasible);
}

TEST(Qualify, InfeasiblePointIsRejected) {
  auto P = load_named("example1");
  try {
    check_nnamcq(P, qv({0, 0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Precondition);
  }
}

TEST(Qualify, ConditionNamesRoundTrip) {
  EXPECT_EQ(parse_condition("rcpld"), Condition::RcpldHorizon);
  EXPECT_EQ(parse_condition("anull"), Condition::AbnormalNull);
  EXPECT_THROW(parse_condition("licq"), Error);
}

// ---------------------------------------------------------------------------
// kkt

TEST(Kkt, Example1FindAndVerify) {
  auto P = load_named("example1");
  QVec x = *P.point;
  auto k = find_kkt_multipliers(P, x);
  ASSERT_EQ(k.status, KktStatus::Found);
  EXPECT_EQ(verify_kkt(P, x, *k.multipliers).status, KktStatus::Verified);
  MultiplierVector zero{qv({0}), qv({0, 0})};
  EXPECT_EQ(verify_kkt(P, x, zero).status, KktStatus::NotVerified);
}

TEST(Kkt, NonStationaryPointHasFarkasCertificate) {
  auto P = problem(R"({"dim": 1, "smooth": "-x1", "ineq": [{"kind": "affine", "a": ["1"], "b": "-1"}], "point": ["0"]})");
  auto k = find_kkt_multipliers(P, *P.point);
  EXPECT_EQ(k.status, KktStatus::NotFound);
  ASSERT_FALSE(k.certificates.empty());
  for (const auto& c : k.certificates) EXPECT_EQ(c.status, LpStatus::Infeasible);
}

TEST(Kkt, NegativeInequalityMultiplierRejected) {
  auto P = load_named("example4");
  MultiplierVector bad{{Rational(-1, 2), Rational(0)}, {}};
  EXPECT_EQ(verify_kkt(P, *P.point, bad).status, KktStatus::NotVerified);
}

TEST(Kkt, FritzJohnExample1) {
  auto P = load_named("example1");
  auto fj = fritz_john(P, *P.point);
  EXPECT_TRUE(fj.case_i);
  EXPECT_TRUE(fj.case_ii);
}

// ---------------------------------------------------------------------------
// penalty

TEST(Penalty, Example1Values) {
  auto P = load_named("example1");
  EXPECT_DOUBLE_EQ(build_penalty(P, 1.0).value(to_double(*P.point)), 2.0);
  DVec ones = {1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(build_penalty(P, 1.0).value(ones), 8.0);
  // max(g_+) + max|h| = 2 + 1.
  EXPECT_DOUBLE_EQ(build_penalty(P, 1.0, Norm::LInf).penalty(ones), 3.0);
  EXPECT_THROW(build_penalty(P, -1.0), Error);
}

TEST(Penalty, RestrictedSystemSplitsTerms) {
  auto P = load_named("example1");
  auto R = build_restricted_system(P, *P.point);
  EXPECT_EQ(R.I, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(R.I_c, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(R.dim(), 8u);
}

TEST(Penalty, NonLipschitzOuterRejected) {
  auto P = load_named("example3");
  try {
    build_restricted_system(P, *P.point);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HypothesisViolated);
  }
}

TEST(Penalty, ErrorBoundVerdicts) {
  auto P = load_named("example1");
  auto e = estimate_error_bound(feasible_set_target(P, *P.point));
  EXPECT_EQ(e.verdict, BoundVerdict::Bounded);
  EXPECT_NEAR(e.kappa_hat, std::sqrt(0.5), 0.2);
  auto canary = problem(R"({"dim": 1, "eq": [{"kind": "smooth", "expr": "x1^2"}], "point": ["0"]})");
  EXPECT_EQ(estimate_error_bound(feasible_set_target(canary, *canary.point)).verdict, BoundVerdict::Growing);
}

TEST(Penalty, LinearObjectiveNeedsUnitRho) {
  auto P = problem(R"({"dim": 1, "smooth": "-x1", "eq": [{"kind": "affine", "a": ["1"]}], "point": ["0"]})");
  auto r = find_rho0(P, *P.point, 0.1, 2000, 3);
  ASSERT_TRUE(r.found);
  EXPECT_GE(r.rho0, 1.0);
  EXPECT_FALSE(validate_exactness(build_penalty(P, 0.5), *P.point, 0.1, 2000, 3).holds);
}

TEST(Penalty, ExactnessIsMonotoneInRho) {
  auto P = load_named("example1");
  bool seen = false;
  for (double rho : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
    bool h = validate_exactness(build_penalty(P, rho), *P.point, 0.1, 3000, 9).holds;
    if (seen) EXPECT_TRUE(h) << rho;
    seen = seen || h;
  }
  EXPECT_TRUE(seen);
}

// ---------------------------------------------------------------------------
// proxsolve

TEST(Prox, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> L(0.05, 2.0), V(-4.0, 4.0);
  for (double p : {1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0})
    for (int k = 0; k < 25; ++k) {
      double lam = L(rng), v = V(rng);
      double got = prox_pow_abs(p, lam, v), want = brute_prox(p, lam, v);
      if (want == 0.0) EXPECT_EQ(got, 0.0) << p << " " << lam << " " << v;
      else EXPECT_NEAR(got, want, 1e-6) << p << " " << lam << " " << v;
    }
}

TEST(Prox, HalfThresholdingKnownValues) {
  EXPECT_NEAR(prox_pow_abs(0.5, 1.0, 10.0), 9.8406107683, 1e-9);
  EXPECT_EQ(prox_pow_abs(0.5, 1.0, 0.1), 0.0);
  EXPECT_EQ(prox_pow_abs(1.0, 1.0, -3.0), -2.0);
  EXPECT_THROW(prox_pow_abs(0.5, 0.0, 1.0), Error);
}

TEST(Solve, OneDimensionalMatchesProx) {
  auto P = problem(R"({"dim": 1, "smooth": "(x1 - 10)^2/2", "phi": [{"outer": {"kind": "sqrt_abs"}, "inner": {"kind": "affine", "a": ["1"]}}]})");
  DVec x0 = {0.0};
  auto r = solve(build_penalty(P, 1.0), x0);
  EXPECT_EQ(r.status, SolveStatus::Converged);
  EXPECT_NEAR(r.x[0], prox_pow_abs(0.5, 1.0, 10.0), 1e-6);
}

TEST(Solve, Example1ReachesKktPoint) {
  auto P = load_named("example1");
  DVec start = to_double(*P.point);
  for (auto& v : start) v += 0.05;
  SolverConfig cfg;
  cfg.starts = 1;
  auto r = solve(build_penalty(P, 1.0), start, cfg);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-12);
  ASSERT_TRUE(r.x_exact);
  EXPECT_EQ(*r.x_exact, *P.point);
  EXPECT_EQ(find_kkt_multipliers(P, *r.x_exact).status, KktStatus::Found);
}

TEST(Solve, CoupledBridgeTermUnsupported) {
  auto P = problem(R"({"dim": 2, "phi": [{"outer": {"kind": "sqrt_abs"}, "inner": {"kind": "affine", "a": ["1", "1"]}}]})");
  DVec x0 = {1.0, 1.0};
  try {
    solve(build_penalty(P, 1.0), x0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedStructure);
  }
}

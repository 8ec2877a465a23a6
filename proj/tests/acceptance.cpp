// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "random_instances.hpp"

using namespace nlqual;
using nlqual::testing::load_named;
using nlqual::testing::random_affine_instance;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

bool certified(Verdict v) { return v == Verdict::CertifiedHolds || v == Verdict::CertifiedFails; }

QVec q(std::initializer_list<long> xs) {
  QVec v;
  for (long x : xs) v.emplace_back(x);
  return v;
}

// ---------------------------------------------------------------------------

void example1(Outcome& o) {
  auto P = load_named("example1");
  QVec x = *P.point;
  auto phi = phi_bundle(P, x);
  auto expected = PolySet::cone(4, {}, {q({0, 1, 0, 0}), q({0, 0, 0, 1})});
  o.require(set_equal(phi.horizon, expected) && phi.horizon_ex == Exactness::Exact, "horizon bundle is {0}xRx{0}xR");

  auto nn = check_nnamcq(P, x);
  o.require(nn.verdict == Verdict::CertifiedFails, "NNAMCQ fails");
  o.require(nn.lambda && nn.mu && verify_multiplier(make_context(P, x), phi.horizon, *nn.lambda, *nn.mu), "NNAMCQ witness re-verifies");
  for (auto c : {Condition::QnHorizon, Condition::RcpldHorizon, Condition::QnCoderiv})
    o.require(check_condition(P, x, c).verdict == Verdict::CertifiedHolds, std::string(to_string(c)) + " holds");

  auto k = find_kkt_multipliers(P, x);
  o.require(k.status == KktStatus::Found && k.multipliers, "KKT multipliers found");
  if (k.multipliers) o.require(verify_kkt(P, x, *k.multipliers).status == KktStatus::Verified, "KKT witness re-verifies");
}

void example2(Outcome& o) {
  auto P = load_named("example2");
  QVec x = *P.point;
  auto rc = check_rcpld_horizon(P, x);
  o.require(rc.verdict == Verdict::LikelyFails, "RCPLD likely fails");
  bool prop = rc.lambda && rc.mu && rc.lambda->size() == 1 && rc.mu->size() == 1 && sgn((*rc.lambda)[0]) != 0 &&
              (*rc.lambda)[0] == -(*rc.mu)[0];
  o.require(prop, "multiplier proportional to (1,-1)");
  o.require(rc.probe && sgn((*rc.probe)[2]) != 0, "probe point has x3 != 0");
  auto qn = check_quasinormality_horizon(P, x);
  o.require(qn.verdict == Verdict::LikelyHolds && qn.ladder.empty(), "QN likely holds without a witness ladder");
}

void example3(Outcome& o) {
  auto P = load_named("example3");
  QVec x = *P.point;
  for (auto c : {Condition::Bq, Condition::BqCoderiv, Condition::QnHorizon, Condition::QnCoderiv})
    o.require(check_condition(P, x, c).verdict == Verdict::CertifiedHolds, std::string(to_string(c)) + " holds");
  // -R_+ against R_+ meet only at the origin.
  auto K = PolySet::cone(1, {q({-1})});
  o.require(cone_intersection_trivial(K, PolySet::cone(1, {q({1})})).trivial, "-R_+ and R_+ meet at 0");
}

void example4(Outcome& o) {
  auto P = load_named("example4");
  QVec x = *P.point;
  o.require(check_abnormal_null(P, x).verdict == Verdict::CertifiedHolds, "implication holds");
  auto k = find_kkt_multipliers(P, x);
  o.require(k.status == KktStatus::Found && k.multipliers && verify_kkt(P, x, *k.multipliers).status == KktStatus::Verified,
            "KKT multiplier found and verified");
  MultiplierVector half{{Rational(1, 2), Rational(0)}, {}};
  o.require(verify_kkt(P, x, half).status == KktStatus::Verified, "lambda = (1/2, 0) verifies");
}

void equivalence_suite(Outcome& o) {
  std::size_t holds_qn = 0;
  for (std::size_t s = 0; s < 20; ++s) {
    auto P = random_affine_instance(20240, s);
    QVec x = *P.point;
    auto qn = check_quasinormality_horizon(P, x), sqn = check_standard_quasinormality(P, x), bq = check_bq(P, x);
    auto rc = check_rcpld_horizon(P, x), src = check_standard_rcpld(P, x);
    bool all_certified = certified(qn.verdict) && certified(sqn.verdict) && certified(bq.verdict) && certified(rc.verdict) &&
                         certified(src.verdict);
    o.require(all_certified, "instance " + std::to_string(s) + " fully decided");
    o.require(holds(qn.verdict) == (holds(sqn.verdict) && holds(bq.verdict)), "QN agreement on instance " + std::to_string(s));
    o.require(holds(rc.verdict) == (holds(src.verdict) && holds(bq.verdict)), "RCPLD agreement on instance " + std::to_string(s));
    holds_qn += holds(qn.verdict);
  }
  o.detail << " (" << holds_qn << "/20 hold)";
}

void persistence_suite(Outcome& o) {
  std::vector<ProblemSpec> suite = {load_named("example1"), load_named("example3"), load_named("example4"), load_named("union_boxes")};
  for (std::size_t s = 0; s < 20; ++s) suite.push_back(random_affine_instance(20240, s));
  std::size_t probed = 0;
  for (const auto& P : suite) {
    QVec x = *P.point;
    for (auto c : {Condition::Nnamcq, Condition::QnHorizon, Condition::RcpldHorizon, Condition::QnCoderiv, Condition::Bq}) {
      if (check_condition(P, x, c).verdict != Verdict::CertifiedHolds) continue;
      auto rep = persistence_probe(P, x, c, 1e-3, 64, 42);
      ++probed;
      o.require(rep.tested == 64, std::string(to_string(c)) + " drew 64 samples");
      o.require(rep.consistent(), std::string(to_string(c)) + " persists on " + P.name);
    }
  }
  o.detail << " (" << probed << " probes)";
}

// Brute force: grid over a bracket, then golden-section refinement around the best cell.
double prox_oracle(double lam, double v) {
  auto h = [&](double t) { return 0.5 * (t - v) * (t - v) + lam * std::sqrt(std::abs(t)); };
  const double R = std::abs(v) + 1.0;
  const int N = 200000;
  double best_t = 0.0, best = h(0.0);
  for (int i = 0; i <= N; ++i) {
    double t = -R + 2.0 * R * i / N;
    if (h(t) < best) best = h(t), best_t = t;
  }
  if (best_t == 0.0) return 0.0;
  double lo = best_t - 2.0 * R / N, hi = best_t + 2.0 * R / N;
  if (lo * hi <= 0.0) (best_t > 0 ? lo : hi) = 0.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    (h(a) < h(b) ? hi : lo) = (h(a) < h(b) ? b : a);
  }
  double t = 0.5 * (lo + hi);
  return h(t) < h(0.0) ? t : 0.0;
}

void prox_suite(Outcome& o) {
  auto rng = stream_rng(7, 0x9a0);
  std::uniform_real_distribution<double> L(0.05, 3.0), V(-6.0, 6.0);
  int zeros = 0;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    double lam = L(rng), v = V(rng);
    double got = prox_pow_abs(0.5, lam, v), want = prox_oracle(lam, v);
    if (want == 0.0) {
      ++zeros;
      o.require(got == 0.0, "exact zero at lam=" + std::to_string(lam) + " v=" + std::to_string(v));
    } else {
      worst = std::max(worst, std::abs(got - want));
      o.require(std::abs(got - want) <= 1e-6, "match at lam=" + std::to_string(lam) + " v=" + std::to_string(v));
    }
  }
  o.require(zeros > 0 && zeros < 100, "both regions sampled");
  o.detail << " (" << zeros << " thresholded, max err " << worst << ")";
}

void penalty_suite(Outcome& o) {
  for (const char* name : {"example1", "union_boxes"}) {
    auto P = load_named(name);
    QVec x = *P.point;
    auto r = find_rho0(P, x, 0.1, 10000, 42);
    o.require(r.found && r.rho0 <= 1024.0, std::string(name) + " rho0 found");
    if (!r.found) continue;
    for (std::size_t i = 0; i + 1 < r.ladder.size(); ++i) o.require(!r.ladder[i].holds, "ladder fails below rho0");
    double prev_gap = -std::numeric_limits<double>::infinity();
    for (double f : {1.0, 2.0, 4.0, 8.0}) {
      auto rec = validate_exactness(build_penalty(P, f * r.rho0), x, 0.1, 10000, 42);
      o.require(rec.holds && rec.tested >= 10000, std::string(name) + " exact at " + std::to_string(f) + " rho0");
      o.require(rec.worst_gap >= prev_gap - 1e-12, "worst gap nondecreasing in rho");
      prev_gap = rec.worst_gap;
    }
    // Pointwise: the penalized value never decreases as rho grows.
    auto lo = build_penalty(P, r.rho0), hi = build_penalty(P, 2.0 * r.rho0);
    auto rng = stream_rng(3, 0x3011);
    DVec xd = to_double(x);
    for (int s = 0; s < 1000; ++s) {
      DVec u = sample_ball(rng, P.dim, 0.1), y = xd;
      for (std::size_t k = 0; k < P.dim; ++k) y[k] += u[k];
      if (P.omega.violation(y) > 0.0) continue;
      o.require(hi.value(y) >= lo.value(y), "value monotone in rho");
    }
    o.detail << " " << name << ": rho0=" << r.rho0;
  }
}

bool rung_stable(const ErrorBoundEstimate& e) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double r : e.max_ratio)
    if (r > 0.0) lo = std::min(lo, r), hi = std::max(hi, r);
  return hi <= 10.0 * lo;
}

void error_bound_suite(Outcome& o) {
  std::size_t systems = 0;
  auto check = [&](const ErrorBoundTarget& T, const std::string& label) {
    auto e = estimate_error_bound(T);
    ++systems;
    o.require(e.verdict == BoundVerdict::Bounded, label + " bounded");
    o.require(rung_stable(e), label + " rung-stable");
  };
  for (const char* name : {"example1", "example3", "example4", "union_boxes"}) {
    auto P = load_named(name);
    QVec x = *P.point;
    check(feasible_set_target(P, x), std::string(name) + " feasible set");
    try {
      check(restricted_target(build_restricted_system(P, x)), std::string(name) + " restricted system");
    } catch (const Error& e) {
      o.require(e.code() == ErrorCode::HypothesisViolated && std::string(name) == "example3", std::string(name) + " restricted system builds");
    }
  }
  for (std::size_t s = 0; s < 5; ++s) {
    auto P = random_affine_instance(20240, s);
    check(feasible_set_target(P, *P.point), "random instance " + std::to_string(s));
  }
  auto canary = parse_problem_text(R"({"dim": 1, "eq": [{"kind": "smooth", "expr": "x1^2"}], "point": ["0"]})");
  auto e = estimate_error_bound(feasible_set_target(canary, *canary.point));
  o.require(e.verdict == BoundVerdict::Growing, "x^2 = 0 canary grows");
  o.detail << " (" << systems << " systems)";
}

// Exact substitution of the certificate, written independently of the library's checker.
bool certificate_holds(const LinearProgram& lp, const LpCertificate& c) {
  const std::size_t n = lp.num_vars, r = lp.A_le.size(), e = lp.A_eq.size();
  auto feasible_point = [&](const QVec& x) {
    if (x.size() != n) return false;
    for (std::size_t j = 0; j < n; ++j)
      if (!lp.free[j] && x[j] < 0) return false;
    for (std::size_t i = 0; i < r; ++i) {
      Rational s = 0;
      for (std::size_t j = 0; j < n; ++j) s += lp.A_le[i][j] * x[j];
      if (s > lp.b_le[i]) return false;
    }
    for (std::size_t i = 0; i < e; ++i) {
      Rational s = 0;
      for (std::size_t j = 0; j < n; ++j) s += lp.A_eq[i][j] * x[j];
      if (s != lp.b_eq[i]) return false;
    }
    return true;
  };
  auto column = [&](std::size_t j) {
    Rational s = 0;
    for (std::size_t i = 0; i < r; ++i) s += c.dual_le[i] * lp.A_le[i][j];
    for (std::size_t i = 0; i < e; ++i) s += c.dual_eq[i] * lp.A_eq[i][j];
    return s;
  };
  auto dual_sized = [&] {
    if (c.dual_le.size() != r || c.dual_eq.size() != e) return false;
    for (const auto& y : c.dual_le)
      if (y < 0) return false;
    return true;
  };
  auto dual_rhs = [&] {
    Rational s = 0;
    for (std::size_t i = 0; i < r; ++i) s += c.dual_le[i] * lp.b_le[i];
    for (std::size_t i = 0; i < e; ++i) s += c.dual_eq[i] * lp.b_eq[i];
    return s;
  };
  if (c.status == LpStatus::Infeasible) {
    if (!dual_sized()) return false;
    for (std::size_t j = 0; j < n; ++j) {
      Rational s = column(j);
      if (lp.free[j] ? s != 0 : s < 0) return false;
    }
    return dual_rhs() < 0;
  }
  if (!feasible_point(c.x)) return false;
  if (c.status == LpStatus::Unbounded) {
    QVec probe = c.x;
    for (std::size_t j = 0; j < n; ++j) probe[j] += c.ray[j];
    Rational gain = 0;
    for (std::size_t j = 0; j < n; ++j) gain += lp.objective[j] * c.ray[j];
    // Any multiple of the ray stays feasible and improves the objective.
    QVec far = c.x;
    for (std::size_t j = 0; j < n; ++j) far[j] += 1000 * c.ray[j];
    return feasible_point(probe) && feasible_point(far) && gain > 0;
  }
  if (lp.objective.empty()) return true;
  if (!dual_sized()) return false;
  for (std::size_t j = 0; j < n; ++j) {
    Rational s = column(j);
    if (lp.free[j] ? s != lp.objective[j] : s < lp.objective[j]) return false;
  }
  Rational primal = 0;
  for (std::size_t j = 0; j < n; ++j) primal += lp.objective[j] * c.x[j];
  return primal == dual_rhs();
}

void lp_suite(Outcome& o) {
  int counts[3] = {0, 0, 0};
  for (std::size_t s = 0; s < 500; ++s) {
    auto rng = stream_rng(11, 0x1b, s);
    auto U = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto rat = [&] {
      Rational v(U(-6, 6), U(1, 4));
      v.canonicalize();
      return v;
    };
    LinearProgram lp(U(1, 10));
    for (std::size_t j = 0; j < lp.num_vars; ++j) lp.free[j] = U(0, 3) == 0;
    const int rows = U(1, 10);
    for (int i = 0; i < rows; ++i) {
      QVec a(lp.num_vars);
      for (auto& v : a) v = U(0, 2) ? rat() : Rational(0);
      if (U(0, 4) == 0) lp.add_eq(a, rat());
      else lp.add_le(a, rat());
    }
    if (U(0, 3)) {
      lp.objective.resize(lp.num_vars);
      for (auto& v : lp.objective) v = rat();
    }
    auto c = lp_solve(lp);
    ++counts[static_cast<int>(c.status)];
    o.require(certificate_holds(lp, c), "LP " + std::to_string(s) + " certificate");
  }
  o.detail << " (" << counts[0] << " optimal, " << counts[1] << " infeasible, " << counts[2] << " unbounded)";
}

void solver_suite(Outcome& o) {
  auto P1 = parse_problem_text(
      R"({"dim": 1, "smooth": "(x1 - 10)^2/2", "phi": [{"outer": {"kind": "sqrt_abs"}, "inner": {"kind": "affine", "a": ["1"]}}]})");
  DVec x0 = {0.0};
  auto r1 = solve(build_penalty(P1, 1.0), x0);
  double want = prox_oracle(1.0, 10.0);
  o.require(std::abs(r1.x[0] - want) <= 1e-6, "1-D solve matches the prox oracle");

  auto P = load_named("example1");
  QVec xs = *P.point;
  auto rho = find_rho0(P, xs);
  o.require(rho.found, "rho0 found");
  DVec start = to_double(xs);
  for (auto& v : start) v += 0.05;
  SolverConfig cfg;
  cfg.starts = 1;
  auto r = solve(build_penalty(P, rho.rho0), start, cfg);
  QVec xr = to_rational(r.x);
  auto k = find_kkt_multipliers(P, xr);
  bool ok = false;
  if (k.multipliers) {
    auto v = verify_kkt(P, xr, *k.multipliers);
    ok = v.status == KktStatus::Verified && (v.exact || v.residual <= 1e-6);
  }
  o.require(ok, "penalized solution passes verify_kkt");
  o.detail << " (1-D x=" << r1.x[0] << ", example1 x=" << r.x[0] << "," << r.x[1] << "," << r.x[2] << "," << r.x[3] << ")";
}

}  // namespace

int main() {
  struct Criterion {
    const char* title;
    double limit_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"Example 1 reproduction", 1.0, example1},
      {"Example 2 reproduction", 5.0, example2},
      {"Example 3 reproduction (custom tables)", 0.0, example3},
      {"Example 4 reproduction", 0.0, example4},
      {"horizon QN/RCPLD vs standard condition plus BQ on 20 random affine instances", 0.0, equivalence_suite},
      {"persistence of certified conditions at radius 1e-3, 64 samples", 0.0, persistence_suite},
      {"half-power prox vs brute-force oracle on 100 pairs", 0.0, prox_suite},
      {"penalty exactness and rho0 search on Example 1 and the union-of-boxes instance", 30.0, penalty_suite},
      {"error-bound estimator on polyhedral systems and the x^2 = 0 canary", 0.0, error_bound_suite},
      {"500 random LPs with exact certificate re-verification", 0.0, lp_suite},
      {"prox-gradient solver on the 1-D problem and Example 1", 0.0, solver_suite},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criteria[i].limit_s > 0.0 && secs >= criteria[i].limit_s) {
      o.pass = false;
      o.detail << " [over time limit " << criteria[i].limit_s << " s]";
    }
    failed += !o.pass;
    std::printf("%s %2zu  %s  (%.2f s)%s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].title, secs, o.detail.str().c_str());
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

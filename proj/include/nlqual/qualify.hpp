#pragma once

// Qualification checkers at a feasible point: NNAMCQ, horizon and coderivative
// quasi-normality, horizon RCPLD, BQ and its coderivative variant, and the
// implication used for linear constraints. Affine data with exact subdifferential
// sets gives certified verdicts; everything else is graded.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlqual/rng.hpp"
#include "nlqual/subdiff.hpp"

namespace nlqual {

enum class Condition { Nnamcq, QnHorizon, RcpldHorizon, QnCoderiv, Bq, BqCoderiv, AbnormalNull, StandardQn, StandardRcpld };
enum class Verdict { CertifiedHolds, LikelyHolds, Unknown, LikelyFails, CertifiedFails };
enum class Regime { AffineExact, SmoothHeuristic };

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Nnamcq: return "NNAMCQ";
    case Condition::QnHorizon: return "QN_HORIZON";
    case Condition::RcpldHorizon: return "RCPLD_HORIZON";
    case Condition::QnCoderiv: return "QN_CODERIV";
    case Condition::Bq: return "BQ";
    case Condition::BqCoderiv: return "BQ_CODERIV";
    case Condition::AbnormalNull: return "ABNORMAL_NULL";
    case Condition::StandardQn: return "STANDARD_QN";
    case Condition::StandardRcpld: return "STANDARD_RCPLD";
  }
  return "?";
}

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::CertifiedHolds: return "CERTIFIED_HOLDS";
    case Verdict::LikelyHolds: return "LIKELY_HOLDS";
    case Verdict::Unknown: return "UNKNOWN";
    case Verdict::LikelyFails: return "LIKELY_FAILS";
    case Verdict::CertifiedFails: return "CERTIFIED_FAILS";
  }
  return "?";
}

inline std::string_view to_string(Regime r) { return r == Regime::AffineExact ? "AFFINE_EXACT" : "SMOOTH_HEURISTIC"; }

inline bool holds(Verdict v) { return v == Verdict::CertifiedHolds || v == Verdict::LikelyHolds; }
inline bool fails(Verdict v) { return v == Verdict::CertifiedFails || v == Verdict::LikelyFails; }

struct QualOptions {
  std::vector<double> radii = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  std::size_t samples = 512;
  double delta = 1e-2;
  std::size_t probes = 64;
  std::uint64_t seed = 42;
  std::size_t pattern_cap = 4096;
};

struct QualReport {
  Condition condition = Condition::Nnamcq;
  Verdict verdict = Verdict::Unknown;
  Regime regime = Regime::AffineExact;
  std::optional<QVec> lambda;  // length n
  std::optional<QVec> mu;      // length m
  std::optional<QVec> direction;
  std::vector<QVec> ladder;
  std::vector<double> radii;
  std::optional<QVec> probe;
  std::optional<QVec> cone_witness;
  std::size_t patterns = 0;
  std::size_t lps = 0;
  bool verified = false;
  std::string note;
};

// ---------------------------------------------------------------------------
// Shared context

struct QualContext {
  const ProblemSpec* P = nullptr;
  QVec x;
  DVec xd;
  ActiveSet active;
  std::vector<QVec> grad_g;  // all inequalities, at x
  std::vector<QVec> grad_h;
  bool grads_exact = true;
  bool affine = true;
};

inline QualContext make_context(const ProblemSpec& P, std::span<const Rational> x) {
  P.check_point(x.size());
  QualContext c;
  c.P = &P;
  c.x.assign(x.begin(), x.end());
  c.xd = to_double(x);
  auto feas = check_feasible(P, x, kActTol);
  if (!feas.feasible) throw Error(ErrorCode::Precondition, "point is not feasible (max residual " + std::to_string(feas.max_residual) + ")");
  c.active = active_inequalities(P, x);
  c.affine = P.constraints_affine();
  auto grad = [&](const ScalarFn& f) {
    if (auto g = f.gradient(x)) return *g;
    c.grads_exact = false;
    return to_rational(f.gradient(c.xd));
  };
  for (const auto& g : P.ineq) c.grad_g.push_back(grad(g));
  for (const auto& h : P.eq) c.grad_h.push_back(grad(h));
  return c;
}

// The cone K appearing in "0 in K + sum lambda grad g + sum mu grad h". When the
// normal cone of a union is ambiguous, `inner` and `outer` differ.
struct ConeSpec {
  PolySet inner;
  PolySet outer;
  Exactness ex = Exactness::Exact;
  bool ambiguous = false;
};

enum class ConeKind { Horizon, Coderiv, Standard };

inline ConeSpec cone_spec(const QualContext& c, ConeKind kind) {
  const ProblemSpec& P = *c.P;
  NormalConeEstimate N = omega_normal_cone(P, c.x);
  ConeSpec s;
  s.ambiguous = !N.exact;
  if (kind == ConeKind::Standard) {
    s.inner = N.inner;
    s.outer = N.outer;
    return s;
  }
  SubdiffBundle psi = psi_bundle(P, c.x);
  const PolySet& base = kind == ConeKind::Horizon ? psi.horizon : psi.coderiv0;
  s.ex = kind == ConeKind::Horizon ? psi.horizon_ex : psi.coderiv0_ex;
  if (kind == ConeKind::Horizon && !N.outer.is_zero_set() && !psi.coderiv0.is_zero_set()) s.ex = worst(s.ex, Exactness::OuterEstimate);
  s.inner = minkowski_sum(base, N.inner);
  s.outer = minkowski_sum(base, N.outer);
  return s;
}

inline Regime regime_of(const QualContext& c, Exactness ex) {
  return c.affine && c.grads_exact && ex == Exactness::Exact ? Regime::AffineExact : Regime::SmoothHeuristic;
}

inline Verdict graded(bool holds_result, Regime r) {
  if (r == Regime::AffineExact) return holds_result ? Verdict::CertifiedHolds : Verdict::CertifiedFails;
  return holds_result ? Verdict::LikelyHolds : Verdict::LikelyFails;
}

// ---------------------------------------------------------------------------
// Multiplier LPs

namespace detail {

struct InclusionLp {
  LinearProgram lp;
  std::size_t lam0 = 0, mu0 = 0, nlam = 0, nmu = 0;
};

// 0 = offset + v + sum lambda_k g_k + sum mu_k h_k, v in piece, lambda >= 0, mu free.
inline InclusionLp inclusion_lp(const Polyhedron& piece, std::size_t d, const std::vector<QVec>& g, const std::vector<QVec>& h,
                                const QVec* offset = nullptr) {
  InclusionLp s;
  s.nlam = g.size();
  s.nmu = h.size();
  s.lam0 = 0;
  s.mu0 = g.size();
  for (std::size_t k = 0; k < g.size(); ++k) s.lp.add_var(false);
  for (std::size_t k = 0; k < h.size(); ++k) s.lp.add_var(true);
  const std::size_t np = piece.points.size(), nr = piece.rays.size(), nl = piece.lines.size();
  const std::size_t sig0 = s.lp.num_vars;
  for (std::size_t k = 0; k < np + nr; ++k) s.lp.add_var(false);
  for (std::size_t k = 0; k < nl; ++k) s.lp.add_var(true);
  for (std::size_t i = 0; i < d; ++i) {
    QVec row(s.lp.num_vars, Rational(0));
    for (std::size_t k = 0; k < g.size(); ++k) row[k] = g[k][i];
    for (std::size_t k = 0; k < h.size(); ++k) row[s.mu0 + k] = h[k][i];
    for (std::size_t k = 0; k < np; ++k) row[sig0 + k] = piece.points[k][i];
    for (std::size_t k = 0; k < nr; ++k) row[sig0 + np + k] = piece.rays[k][i];
    for (std::size_t k = 0; k < nl; ++k) row[sig0 + np + nr + k] = piece.lines[k][i];
    s.lp.add_eq(std::move(row), offset ? Rational(-(*offset)[i]) : Rational(0));
  }
  if (np > 0) {
    QVec row(s.lp.num_vars, Rational(0));
    for (std::size_t k = 0; k < np; ++k) row[sig0 + k] = 1;
    s.lp.add_eq(std::move(row), Rational(1));
  }
  return s;
}

inline QVec unit_row(std::size_t n, std::size_t k, int s = 1) {
  QVec r(n, Rational(0));
  r[k] = s;
  return r;
}

struct Multipliers {
  QVec lambda;
  QVec mu;
};

// Some nonzero (lambda, mu) with 0 in K + G lambda + H mu, via one LP per coordinate.
inline std::optional<Multipliers> nonzero_multiplier(const PolySet& K, std::size_t d, const std::vector<QVec>& g,
                                                     const std::vector<QVec>& h, std::size_t& lps) {
  for (const auto& piece : K.pieces()) {
    for (std::size_t k = 0; k < g.size() + 2 * h.size(); ++k) {
      InclusionLp s = inclusion_lp(piece, d, g, h);
      if (k < g.size()) s.lp.add_ge(unit_row(s.lp.num_vars, s.lam0 + k), Rational(1));
      else {
        std::size_t j = (k - g.size()) / 2;
        int sg = (k - g.size()) % 2 == 0 ? 1 : -1;
        s.lp.add_ge(unit_row(s.lp.num_vars, s.mu0 + j, sg), Rational(1));
      }
      auto cert = lp_solve(s.lp);
      ++lps;
      if (cert.feasible()) {
        Multipliers m;
        m.lambda.assign(cert.x.begin(), cert.x.begin() + static_cast<std::ptrdiff_t>(g.size()));
        m.mu.assign(cert.x.begin() + static_cast<std::ptrdiff_t>(g.size()), cert.x.begin() + static_cast<std::ptrdiff_t>(g.size() + h.size()));
        return m;
      }
    }
  }
  return std::nullopt;
}

// Multiplier with lambda >= 1 on all given rows and sign(mu_k) = signs[k] (|mu_k| >= 1).
inline std::optional<Multipliers> pattern_multiplier(const PolySet& K, std::size_t d, const std::vector<QVec>& g,
                                                     const std::vector<QVec>& h, const std::vector<int>& signs, std::size_t& lps) {
  for (const auto& piece : K.pieces()) {
    InclusionLp s = inclusion_lp(piece, d, g, h);
    for (std::size_t k = 0; k < g.size(); ++k) s.lp.add_ge(unit_row(s.lp.num_vars, s.lam0 + k), Rational(1));
    for (std::size_t k = 0; k < h.size(); ++k) s.lp.add_ge(unit_row(s.lp.num_vars, s.mu0 + k, signs[k]), Rational(1));
    auto cert = lp_solve(s.lp);
    ++lps;
    if (cert.feasible()) {
      Multipliers m;
      m.lambda.assign(cert.x.begin(), cert.x.begin() + static_cast<std::ptrdiff_t>(g.size()));
      m.mu.assign(cert.x.begin() + static_cast<std::ptrdiff_t>(g.size()), cert.x.begin() + static_cast<std::ptrdiff_t>(g.size() + h.size()));
      return m;
    }
  }
  return std::nullopt;
}

// Direction with g_k^T d >= 1 and signs[k] h_k^T d >= 1.
inline std::optional<QVec> pattern_direction(std::size_t d, const std::vector<QVec>& g, const std::vector<QVec>& h,
                                             const std::vector<int>& signs, std::size_t& lps) {
  LinearProgram lp(d, true);
  for (const auto& r : g) lp.add_ge(r, Rational(1));
  for (std::size_t k = 0; k < h.size(); ++k) lp.add_ge(scaled(h[k], Rational(signs[k])), Rational(1));
  auto cert = lp_solve(lp);
  ++lps;
  if (!cert.feasible()) return std::nullopt;
  return cert.x;
}

inline std::size_t numeric_rank(const std::vector<DVec>& rows, std::size_t d) {
  if (rows.empty()) return 0;
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  double tol = 1e-9 * std::max(1.0, s.size() ? s(0) : 0.0);
  std::size_t r = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > tol) ++r;
  return r;
}

inline std::size_t exact_rank(const std::vector<QVec>& rows, std::size_t d) {
  SpanBasis b(d);
  for (const auto& r : rows) b.add(r);
  return b.rank();
}

// Support patterns (I subset of the active list, signs in {0,+1,-1}^m), lexicographic.
struct Pattern {
  std::vector<std::size_t> I;  // indices into P.ineq
  std::vector<int> sigma;      // per equality
};

inline std::vector<Pattern> enumerate_patterns(const std::vector<std::size_t>& active, std::size_t m, std::size_t cap,
                                               std::uint64_t seed, bool& complete) {
  std::vector<Pattern> out;
  const double total = std::pow(2.0, static_cast<double>(active.size())) * std::pow(3.0, static_cast<double>(m)) - 1.0;
  complete = total <= static_cast<double>(cap);
  auto decode = [&](std::uint64_t mask, std::uint64_t code) {
    Pattern p;
    for (std::size_t k = 0; k < active.size(); ++k)
      if (mask >> k & 1) p.I.push_back(active[k]);
    p.sigma.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      int digit = static_cast<int>(code % 3);
      code /= 3;
      p.sigma[j] = digit == 0 ? 0 : (digit == 1 ? 1 : -1);
    }
    return p;
  };
  std::uint64_t pow3 = 1;
  for (std::size_t j = 0; j < m && complete; ++j) pow3 *= 3;
  if (complete) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << active.size()); ++mask)
      for (std::uint64_t code = 0; code < pow3; ++code) {
        if (mask == 0 && code == 0) continue;
        out.push_back(decode(mask, code));
      }
    return out;
  }
  for (std::size_t s = 0; s < cap; ++s) {
    auto rng = stream_rng(seed, 0x5a77e5, s);
    Pattern p;
    for (std::size_t k = 0; k < active.size(); ++k)
      if (rng() & 1) p.I.push_back(active[k]);
    p.sigma.resize(m);
    for (std::size_t j = 0; j < m; ++j) p.sigma[j] = static_cast<int>(rng() % 3) - 1;
    if (p.I.empty() && std::all_of(p.sigma.begin(), p.sigma.end(), [](int v) { return v == 0; })) continue;
    out.push_back(std::move(p));
  }
  return out;
}

struct PatternRows {
  std::vector<QVec> g, h;
  std::vector<std::size_t> eq_ids;
  std::vector<int> signs;
};

inline PatternRows rows_for(const QualContext& c, const Pattern& p) {
  PatternRows r;
  for (std::size_t i : p.I) r.g.push_back(c.grad_g[i]);
  for (std::size_t j = 0; j < p.sigma.size(); ++j)
    if (p.sigma[j] != 0) {
      r.h.push_back(c.grad_h[j]);
      r.eq_ids.push_back(j);
      r.signs.push_back(p.sigma[j]);
    }
  return r;
}

// Expand pattern-local multipliers to full (lambda in R^n, mu in R^m).
inline Multipliers expand(const QualContext& c, const std::vector<std::size_t>& ineq_ids, const std::vector<std::size_t>& eq_ids,
                          const Multipliers& local) {
  Multipliers m{QVec(c.P->n(), Rational(0)), QVec(c.P->m(), Rational(0))};
  for (std::size_t k = 0; k < ineq_ids.size(); ++k) m.lambda[ineq_ids[k]] = local.lambda[k];
  for (std::size_t k = 0; k < eq_ids.size(); ++k) m.mu[eq_ids[k]] = local.mu[k];
  return m;
}

// Strict sign conditions g_i(y) > 0 (i in I), sigma_j h_j(y) > 0 (sigma_j != 0).
inline bool strict_signs(const ProblemSpec& P, const Pattern& p, std::span<const Rational> y) {
  DVec yd;
  auto val = [&](const ScalarFn& f) -> std::optional<int> {
    if (auto v = f.value(y)) return sgn(*v);
    if (yd.empty()) yd = to_double(y);
    double d = f.value(yd);
    if (std::abs(d) <= 1e-14) return std::nullopt;
    return d > 0 ? 1 : -1;
  };
  for (std::size_t i : p.I) {
    auto s = val(P.ineq[i]);
    if (!s || *s <= 0) return false;
  }
  for (std::size_t j = 0; j < p.sigma.size(); ++j) {
    if (p.sigma[j] == 0) continue;
    auto s = val(P.eq[j]);
    if (!s || *s * p.sigma[j] <= 0) return false;
  }
  return true;
}

inline Pattern pattern_of(const QVec& lambda, const QVec& mu) {
  Pattern p;
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (sgn(lambda[i]) > 0) p.I.push_back(i);
  p.sigma.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) p.sigma[j] = sgn(mu[j]);
  return p;
}

}  // namespace detail

// lambda >= 0, complementarity, and 0 in K + sum lambda_i grad g_i + sum mu_j grad h_j, exactly.
inline bool verify_multiplier(const QualContext& c, const PolySet& K, const QVec& lambda, const QVec& mu) {
  const std::size_t d = c.P->dim;
  QVec s(d, Rational(0));
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (sgn(lambda[i]) < 0) return false;
    if (sgn(lambda[i]) > 0 && !c.active.contains(i)) return false;
    for (std::size_t k = 0; k < d; ++k) s[k] += lambda[i] * c.grad_g[i][k];
  }
  for (std::size_t j = 0; j < mu.size(); ++j)
    for (std::size_t k = 0; k < d; ++k) s[k] += mu[j] * c.grad_h[j][k];
  return contains(K, negated(s)).member;
}

// ---------------------------------------------------------------------------
// Abnormal multipliers and NNAMCQ

struct AbnormalCone {
  std::vector<std::size_t> lambda_ids;  // active inequality indices (columns of the lambda block)
  std::vector<QVec> generators;         // rays (lambda_active, mu) of the abnormal cone
  std::vector<QVec> lines;
  bool trivial = true;
};

namespace detail {

// Generators of {(lambda, mu) : lambda >= 0, 0 in piece + G lambda + H mu}, piece a cone.
inline ConeGenerators multiplier_cone(const Polyhedron& piece, std::size_t d, const std::vector<QVec>& g, const std::vector<QVec>& h) {
  const std::size_t nl = g.size(), nm = h.size(), nr = piece.rays.size(), nn = piece.lines.size();
  const std::size_t n = nl + nm + nr + nn;
  QMat B;
  for (std::size_t k = 0; k < nl; ++k) B.push_back(unit_row(n, k, -1));
  for (std::size_t k = 0; k < nr; ++k) B.push_back(unit_row(n, nl + nm + k, -1));
  for (std::size_t i = 0; i < d; ++i) {
    QVec row(n, Rational(0));
    for (std::size_t k = 0; k < nl; ++k) row[k] = g[k][i];
    for (std::size_t k = 0; k < nm; ++k) row[nl + k] = h[k][i];
    for (std::size_t k = 0; k < nr; ++k) row[nl + nm + k] = piece.rays[k][i];
    for (std::size_t k = 0; k < nn; ++k) row[nl + nm + nr + k] = piece.lines[k][i];
    B.push_back(row);
    B.push_back(negated(row));
  }
  ConeGenerators full = dd_cone(B, n);
  // Project onto the (lambda, mu) block.
  ConeGenerators out;
  auto head = [&](const QVec& v) { return QVec(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(nl + nm)); };
  for (const auto& r : full.rays)
    if (auto v = head(r); !is_zero(v)) out.rays.push_back(primitive(v));
  for (const auto& l : full.lines)
    if (auto v = head(l); !is_zero(v)) out.lines.push_back(primitive(v));
  sort_unique(out.rays);
  sort_unique(out.lines);
  return out;
}

}  // namespace detail

inline AbnormalCone abnormal_cone(const QualContext& c, const PolySet& K) {
  AbnormalCone a;
  a.lambda_ids = c.active.indices;
  std::vector<QVec> g;
  for (std::size_t i : a.lambda_ids) g.push_back(c.grad_g[i]);
  for (const auto& piece : K.pieces()) {
    auto gen = detail::multiplier_cone(piece, c.P->dim, g, c.grad_h);
    a.generators.insert(a.generators.end(), gen.rays.begin(), gen.rays.end());
    a.lines.insert(a.lines.end(), gen.lines.begin(), gen.lines.end());
  }
  detail::sort_unique(a.generators);
  detail::sort_unique(a.lines);
  a.trivial = a.generators.empty() && a.lines.empty();
  return a;
}

namespace detail {

inline QualReport nnamcq_with(const QualContext& c, const PolySet& K, Regime regime, Condition cond) {
  QualReport r;
  r.condition = cond;
  r.regime = regime;
  std::vector<QVec> g;
  for (std::size_t i : c.active.indices) g.push_back(c.grad_g[i]);
  auto m = nonzero_multiplier(K, c.P->dim, g, c.grad_h, r.lps);
  if (!m) {
    r.verdict = graded(true, regime);
    r.verified = true;
    return r;
  }
  Multipliers full = expand(c, c.active.indices, [&] {
    std::vector<std::size_t> ids(c.P->m());
    for (std::size_t j = 0; j < ids.size(); ++j) ids[j] = j;
    return ids;
  }(), *m);
  r.lambda = full.lambda;
  r.mu = full.mu;
  r.verified = verify_multiplier(c, K, full.lambda, full.mu);
  r.verdict = graded(false, regime);
  return r;
}

// Run a checker against both normal-cone estimates when they differ.
template <class F>
QualReport with_cone_spec(const ConeSpec& s, Regime regime, F&& run) {
  QualReport outer = run(s.outer, regime);
  if (!s.ambiguous) return outer;
  QualReport inner = run(s.inner, regime);
  if (holds(outer.verdict) == holds(inner.verdict) && fails(outer.verdict) == fails(inner.verdict)) {
    outer.note += (outer.note.empty() ? "" : "; ") + std::string("normal-cone inner and outer estimates agree");
    return outer;
  }
  outer.verdict = Verdict::Unknown;
  outer.note = "NORMAL_CONE_AMBIGUOUS: inner and outer normal-cone estimates disagree";
  return outer;
}

}  // namespace detail

inline QualReport check_nnamcq(const ProblemSpec& P, std::span<const Rational> x) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Horizon);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::nnamcq_with(c, K, rg, Condition::Nnamcq);
  });
}

// ---------------------------------------------------------------------------
// Quasi-normality

namespace detail {

inline QVec ladder_point(const QVec& x, const QVec& dir, int k) {
  QVec y = x;
  Rational s(1);
  s /= Rational(mpz_class(1) << k);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * dir[i];
  return y;
}

inline QualReport quasinormal_with(const QualContext& c, const PolySet& K, Regime regime, Condition cond, const QualOptions& opt) {
  QualReport r;
  r.condition = cond;
  r.regime = regime;
  const std::size_t d = c.P->dim;
  bool complete = true;
  auto patterns = enumerate_patterns(c.active.indices, c.P->m(), opt.pattern_cap, opt.seed, complete);
  r.patterns = patterns.size();
  bool any_multiplier = false, partial = false;

  for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
    const Pattern& p = patterns[pi];
    PatternRows rows = rows_for(c, p);
    auto mult = pattern_multiplier(K, d, rows.g, rows.h, rows.signs, r.lps);
    if (!mult) continue;
    any_multiplier = true;
    Multipliers full = expand(c, p.I, rows.eq_ids, *mult);
    auto dir = pattern_direction(d, rows.g, rows.h, rows.signs, r.lps);

    if (regime == Regime::AffineExact && c.affine) {
      if (!dir) continue;
      r.lambda = full.lambda;
      r.mu = full.mu;
      r.direction = *dir;
      for (int k = 1; k <= 8; ++k) {
        r.ladder.push_back(ladder_point(c.x, *dir, k));
        r.radii.push_back(std::ldexp(1.0, -k));
      }
      bool ok = verify_multiplier(c, K, full.lambda, full.mu);
      for (const auto& y : r.ladder) ok = ok && strict_signs(*c.P, p, y);
      r.verified = ok;
      r.verdict = Verdict::CertifiedFails;
      return r;
    }

    // Heuristic: look for points satisfying the strict sign conditions at every radius.
    DVec dhat;
    if (dir) {
      DVec dd = to_double(*dir);
      double nrm = 0.0;
      for (double v : dd) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (double v : dd) dhat.push_back(v / nrm);
    }
    std::vector<QVec> ladder;
    std::vector<double> radii;
    for (std::size_t rung = 0; rung < opt.radii.size(); ++rung) {
      const double rad = opt.radii[rung];
      std::optional<QVec> hit;
      for (std::size_t s = 0; s < opt.samples && !hit; ++s) {
        auto rng = stream_rng(opt.seed, pi, rung, s);
        DVec u = sample_ball(rng, d, rad);
        DVec y(d);
        for (std::size_t k = 0; k < d; ++k) {
          double guided = !dhat.empty() && s % 2 == 0 ? rad * dhat[k] + 0.5 * u[k] : u[k];
          y[k] = c.xd[k] + guided;
        }
        QVec yq = to_rational(y);
        if (strict_signs(*c.P, p, yq)) hit = yq;
      }
      if (hit) {
        ladder.push_back(*hit);
        radii.push_back(rad);
        partial = true;
      } else {
        break;
      }
    }
    if (ladder.size() == opt.radii.size()) {
      r.lambda = full.lambda;
      r.mu = full.mu;
      if (dir) r.direction = *dir;
      r.ladder = std::move(ladder);
      r.radii = std::move(radii);
      bool ok = verify_multiplier(c, K, full.lambda, full.mu);
      for (const auto& y : r.ladder) ok = ok && strict_signs(*c.P, p, y);
      r.verified = ok;
      r.verdict = Verdict::LikelyFails;
      return r;
    }
  }
  r.verified = true;
  if (regime == Regime::AffineExact && c.affine) {
    r.verdict = complete ? Verdict::CertifiedHolds : Verdict::Unknown;
    if (!complete) r.note = "pattern budget exceeded; sampled patterns only";
    return r;
  }
  if (!any_multiplier) r.verdict = complete ? Verdict::LikelyHolds : Verdict::Unknown;
  else r.verdict = partial ? Verdict::Unknown : Verdict::LikelyHolds;
  if (partial) r.note = "partial witness ladders found";
  return r;
}

}  // namespace detail

inline QualReport check_quasinormality_horizon(const ProblemSpec& P, std::span<const Rational> x, const QualOptions& opt = {}) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Horizon);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::quasinormal_with(c, K, rg, Condition::QnHorizon, opt);
  });
}

inline QualReport check_quasinormality_coderiv(const ProblemSpec& P, std::span<const Rational> x, const QualOptions& opt = {}) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Coderiv);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::quasinormal_with(c, K, rg, Condition::QnCoderiv, opt);
  });
}

// Quasi-normality with the non-Lipschitz part dropped (only the normal cone of Omega).
inline QualReport check_standard_quasinormality(const ProblemSpec& P, std::span<const Rational> x, const QualOptions& opt = {}) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Standard);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::quasinormal_with(c, K, rg, Condition::StandardQn, opt);
  });
}

// ---------------------------------------------------------------------------
// RCPLD

namespace detail {

inline QualReport rcpld_with(const QualContext& c, const PolySet& K, Regime regime, Condition cond, const QualOptions& opt) {
  QualReport r;
  r.condition = cond;
  r.regime = regime;
  const ProblemSpec& P = *c.P;
  const std::size_t d = P.dim;
  const bool exact = regime == Regime::AffineExact && c.affine;

  // Basis J of the equality gradients at x.
  std::vector<std::size_t> J;
  {
    SpanBasis b(d);
    for (std::size_t j = 0; j < P.m(); ++j)
      if (b.add(c.grad_h[j])) J.push_back(j);
  }
  std::vector<DVec> probes;
  if (!exact) {
    probes.push_back(c.xd);
    for (std::size_t s = 0; s < opt.probes; ++s) {
      auto rng = stream_rng(opt.seed, 0x7c91d, s);
      DVec u = sample_ball(rng, d, opt.delta);
      DVec y(d);
      for (std::size_t k = 0; k < d; ++k) y[k] = c.xd[k] + u[k];
      probes.push_back(std::move(y));
    }
    // (i) rank constancy of all equality gradients.
    for (const auto& y : probes) {
      std::vector<DVec> rows;
      for (const auto& h : P.eq) rows.push_back(h.gradient(y));
      if (numeric_rank(rows, d) != J.size()) {
        r.probe = to_rational(y);
        r.verdict = Verdict::LikelyFails;
        r.note = "RANK_DRIFT: equality-gradient rank is not constant near the point";
        return r;
      }
    }
  }

  // (ii) every subset of the active set.
  const auto& A = c.active.indices;
  if (A.size() > 12) {
    r.verdict = Verdict::Unknown;
    r.note = "active set too large for subset enumeration";
    return r;
  }
  std::vector<QVec> hJ;
  for (std::size_t j : J) hJ.push_back(c.grad_h[j]);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << A.size()); ++mask) {
    std::vector<std::size_t> I;
    std::vector<QVec> gI;
    for (std::size_t k = 0; k < A.size(); ++k)
      if (mask >> k & 1) {
        I.push_back(A[k]);
        gI.push_back(c.grad_g[A[k]]);
      }
    if (I.empty() && J.empty()) continue;
    ++r.patterns;
    auto m = nonzero_multiplier(K, d, gI, hJ, r.lps);
    if (!m) continue;
    Multipliers full = expand(c, I, J, *m);
    std::optional<QVec> independent_at;
    if (exact) {
      std::vector<QVec> rows = gI;
      rows.insert(rows.end(), hJ.begin(), hJ.end());
      if (exact_rank(rows, d) == rows.size()) independent_at = c.x;
    } else {
      for (const auto& y : probes) {
        std::vector<DVec> rows;
        for (std::size_t i : I) rows.push_back(P.ineq[i].gradient(y));
        for (std::size_t j : J) rows.push_back(P.eq[j].gradient(y));
        if (numeric_rank(rows, d) == rows.size()) {
          independent_at = to_rational(y);
          break;
        }
      }
    }
    if (independent_at) {
      r.lambda = full.lambda;
      r.mu = full.mu;
      r.probe = *independent_at;
      r.verified = verify_multiplier(c, K, full.lambda, full.mu);
      r.verdict = exact ? Verdict::CertifiedFails : Verdict::LikelyFails;
      return r;
    }
  }
  r.verified = true;
  r.verdict = exact ? Verdict::CertifiedHolds : Verdict::LikelyHolds;
  return r;
}

}  // namespace detail

inline QualReport check_rcpld_horizon(const ProblemSpec& P, std::span<const Rational> x, const QualOptions& opt = {}) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Horizon);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::rcpld_with(c, K, rg, Condition::RcpldHorizon, opt);
  });
}

inline QualReport check_standard_rcpld(const ProblemSpec& P, std::span<const Rational> x, const QualOptions& opt = {}) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Standard);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) {
    return detail::rcpld_with(c, K, rg, Condition::StandardRcpld, opt);
  });
}

// ---------------------------------------------------------------------------
// BQ and the coderivative variant

// Normal cone of the feasible region for affine constraints and a single polyhedron Omega.
inline std::optional<PolySet> feasible_normal_cone(const QualContext& c) {
  const ProblemSpec& P = *c.P;
  if (!c.affine || !P.omega.single_polyhedron()) return std::nullopt;
  std::vector<QVec> rays;
  for (std::size_t i : c.active.indices) rays.push_back(c.grad_g[i]);
  PolySet N = PolySet::cone(P.dim, rays, c.grad_h);
  return minkowski_sum(N, omega_normal_cone(P, c.x).outer);
}

namespace detail {

inline QualReport bq_like(const ProblemSpec& P, std::span<const Rational> x, ConeKind kind, Condition cond) {
  QualContext c = make_context(P, x);
  QualReport r;
  r.condition = cond;
  auto NF = feasible_normal_cone(c);
  if (!NF) {
    r.regime = Regime::SmoothHeuristic;
    r.verdict = Verdict::Unknown;
    r.note = "UNSUPPORTED_REGION: nonlinear constraints or a union Omega; quasi-normality implies this condition";
    return r;
  }
  ConeSpec s = cone_spec(c, kind);
  r.regime = regime_of(c, s.ex);
  auto res = cone_intersection_trivial(s.outer.negate(), *NF);
  r.lps = res.lps;
  if (!res.trivial) r.cone_witness = res.witness;
  r.verified = res.trivial || (contains(s.outer.negate(), res.witness).member && contains(*NF, res.witness).member);
  r.verdict = graded(res.trivial, r.regime);
  return r;
}

}  // namespace detail

inline QualReport check_bq(const ProblemSpec& P, std::span<const Rational> x) {
  return detail::bq_like(P, x, ConeKind::Horizon, Condition::Bq);
}

inline QualReport check_bq_coderiv(const ProblemSpec& P, std::span<const Rational> x) {
  return detail::bq_like(P, x, ConeKind::Coderiv, Condition::BqCoderiv);
}

// ---------------------------------------------------------------------------
// Implication for linear constraints: every abnormal multiplier has zero constraint part.

namespace detail {

inline QVec constraint_combination(const QualContext& c, const std::vector<std::size_t>& lambda_ids, const QVec& lm) {
  const std::size_t d = c.P->dim, nl = lambda_ids.size();
  QVec w(d, Rational(0));
  for (std::size_t k = 0; k < nl; ++k)
    for (std::size_t i = 0; i < d; ++i) w[i] += lm[k] * c.grad_g[lambda_ids[k]][i];
  for (std::size_t j = 0; j < c.P->m(); ++j)
    for (std::size_t i = 0; i < d; ++i) w[i] += lm[nl + j] * c.grad_h[j][i];
  return w;
}

inline QualReport abnormal_null_with(const QualContext& c, const PolySet& K, Regime regime) {
  QualReport r;
  r.condition = Condition::AbnormalNull;
  r.regime = regime;
  AbnormalCone a = abnormal_cone(c, K);
  std::vector<QVec> gens = a.generators;
  gens.insert(gens.end(), a.lines.begin(), a.lines.end());
  for (const auto& v : gens) {
    QVec w = constraint_combination(c, a.lambda_ids, v);
    if (!is_zero(w)) {
      Multipliers full{QVec(c.P->n(), Rational(0)), QVec(c.P->m(), Rational(0))};
      for (std::size_t k = 0; k < a.lambda_ids.size(); ++k) full.lambda[a.lambda_ids[k]] = v[k];
      for (std::size_t j = 0; j < c.P->m(); ++j) full.mu[j] = v[a.lambda_ids.size() + j];
      r.lambda = full.lambda;
      r.mu = full.mu;
      r.cone_witness = w;
      r.verified = verify_multiplier(c, K, full.lambda, full.mu);
      r.verdict = graded(false, regime);
      return r;
    }
  }
  r.verified = true;
  r.verdict = graded(true, regime);
  return r;
}

}  // namespace detail

inline QualReport check_abnormal_null(const ProblemSpec& P, std::span<const Rational> x) {
  QualContext c = make_context(P, x);
  if (!c.affine) {
    QualReport r;
    r.condition = Condition::AbnormalNull;
    r.regime = Regime::SmoothHeuristic;
    r.verdict = Verdict::Unknown;
    r.note = "UNSUPPORTED: the implication is defined for linear constraints";
    return r;
  }
  ConeSpec s = cone_spec(c, ConeKind::Horizon);
  return detail::with_cone_spec(s, regime_of(c, s.ex), [&](const PolySet& K, Regime rg) { return detail::abnormal_null_with(c, K, rg); });
}

// LP form of the same implication: maximize each +-coordinate of the constraint
// combination over the abnormal multipliers. Used as an independent cross-check.
inline bool abnormal_null_by_lp(const ProblemSpec& P, std::span<const Rational> x) {
  QualContext c = make_context(P, x);
  ConeSpec s = cone_spec(c, ConeKind::Horizon);
  std::vector<QVec> g;
  for (std::size_t i : c.active.indices) g.push_back(c.grad_g[i]);
  const std::size_t d = P.dim;
  for (const auto& piece : s.outer.pieces())
    for (std::size_t k = 0; k < 2 * d; ++k) {
      auto sys = detail::inclusion_lp(piece, d, g, c.grad_h);
      QVec row(sys.lp.num_vars, Rational(0));
      int sg = k % 2 == 0 ? 1 : -1;
      for (std::size_t q = 0; q < g.size(); ++q) row[q] = sg * g[q][k / 2];
      for (std::size_t q = 0; q < c.grad_h.size(); ++q) row[sys.mu0 + q] = sg * c.grad_h[q][k / 2];
      sys.lp.add_le(row, Rational(1));
      sys.lp.objective = row;
      auto cert = lp_solve(sys.lp);
      if (cert.status == LpStatus::Optimal && sgn(cert.value) > 0) return false;
    }
  return true;
}

// ---------------------------------------------------------------------------
// Dispatcher

inline QualReport check_condition(const ProblemSpec& P, std::span<const Rational> x, Condition cond, const QualOptions& opt = {}) {
  switch (cond) {
    case Condition::Nnamcq: return check_nnamcq(P, x);
    case Condition::QnHorizon: return check_quasinormality_horizon(P, x, opt);
    case Condition::RcpldHorizon: return check_rcpld_horizon(P, x, opt);
    case Condition::QnCoderiv: return check_quasinormality_coderiv(P, x, opt);
    case Condition::Bq: return check_bq(P, x);
    case Condition::BqCoderiv: return check_bq_coderiv(P, x);
    case Condition::AbnormalNull: return check_abnormal_null(P, x);
    case Condition::StandardQn: return check_standard_quasinormality(P, x, opt);
    case Condition::StandardRcpld: return check_standard_rcpld(P, x, opt);
  }
  throw Error(ErrorCode::Unsupported, "unknown condition");
}

inline Condition parse_condition(std::string_view s) {
  if (s == "nnamcq") return Condition::Nnamcq;
  if (s == "qn") return Condition::QnHorizon;
  if (s == "rcpld") return Condition::RcpldHorizon;
  if (s == "dqn") return Condition::QnCoderiv;
  if (s == "bq") return Condition::Bq;
  if (s == "dbq") return Condition::BqCoderiv;
  if (s == "anull") return Condition::AbnormalNull;
  if (s == "sqn") return Condition::StandardQn;
  if (s == "srcpld") return Condition::StandardRcpld;
  throw Error(ErrorCode::SchemaError, "unknown condition '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Persistence probe: rerun a checker at feasible points near x.

struct PersistenceReport {
  Condition condition = Condition::QnHorizon;
  double radius = 0.0;
  std::size_t tested = 0;
  std::size_t attempts = 0;
  std::vector<QVec> failures;
  std::vector<Verdict> failure_verdicts;
  bool consistent() const { return failures.empty(); }
};

namespace detail {

// Rational basis of the null space of the given rows.
inline std::vector<QVec> null_space(const std::vector<QVec>& rows, std::size_t d) {
  // Reduced row echelon form.
  std::vector<QVec> R = rows;
  std::vector<std::size_t> pivots;
  std::size_t r = 0;
  for (std::size_t col = 0; col < d && r < R.size(); ++col) {
    std::size_t piv = r;
    while (piv < R.size() && sgn(R[piv][col]) == 0) ++piv;
    if (piv == R.size()) continue;
    std::swap(R[r], R[piv]);
    Rational inv = 1 / R[r][col];
    for (auto& v : R[r]) v *= inv;
    for (std::size_t i = 0; i < R.size(); ++i) {
      if (i == r || sgn(R[i][col]) == 0) continue;
      Rational f = R[i][col];
      for (std::size_t k = 0; k < d; ++k) R[i][k] -= f * R[r][k];
    }
    pivots.push_back(col);
    ++r;
  }
  std::vector<QVec> basis;
  for (std::size_t free_col = 0; free_col < d; ++free_col) {
    if (std::find(pivots.begin(), pivots.end(), free_col) != pivots.end()) continue;
    QVec v(d, Rational(0));
    v[free_col] = 1;
    for (std::size_t k = 0; k < pivots.size(); ++k) v[pivots[k]] = -R[k][free_col];
    basis.push_back(std::move(v));
  }
  return basis;
}

// Newton-type projection of y onto {h = 0} in floating point.
inline bool project_equalities(const ProblemSpec& P, DVec& y) {
  const std::size_t d = P.dim, m = P.m();
  if (m == 0) return true;
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd hv(static_cast<Eigen::Index>(m));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < m; ++j) {
      hv(static_cast<Eigen::Index>(j)) = P.eq[j].value(y);
      DVec g = P.eq[j].gradient(y);
      for (std::size_t k = 0; k < d; ++k) J(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = g[k];
    }
    if (hv.cwiseAbs().maxCoeff() <= 1e-13) return true;
    Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(hv);
    for (std::size_t k = 0; k < d; ++k) y[k] -= step(static_cast<Eigen::Index>(k));
  }
  return false;
}

}  // namespace detail

inline std::vector<QVec> sample_feasible(const ProblemSpec& P, std::span<const Rational> x, double radius, std::size_t count,
                                         std::uint64_t seed, std::size_t* attempts = nullptr) {
  std::vector<QVec> out;
  if (radius <= 0.0 || count == 0) return out;
  const std::size_t d = P.dim;
  ActiveSet act = active_inequalities(P, x);
  DVec xd = to_double(x);
  std::size_t tries = 0;
  const std::size_t max_tries = 200 * count;
  for (; tries < max_tries && out.size() < count; ++tries) {
    auto rng = stream_rng(seed, 0xfea5, tries);
    QVec y;
    if (P.constraints_affine()) {
      // Keep a random subset of the active inequalities tight.
      std::vector<QVec> rows;
      for (const auto& h : P.eq) rows.push_back(h.a);
      for (std::size_t i : act.indices)
        if (rng() % 2 == 0) rows.push_back(P.ineq[i].a);
      auto basis = detail::null_space(rows, d);
      if (basis.empty()) continue;
      DVec coef = sample_ball(rng, basis.size(), radius);
      y.assign(x.begin(), x.end());
      QVec step(d, Rational(0));
      for (std::size_t k = 0; k < basis.size(); ++k) {
        Rational ck(coef[k]);
        for (std::size_t i = 0; i < d; ++i) step[i] += ck * basis[k][i];
      }
      // Rescale into the ball when the basis is not orthonormal.
      double nrm = 0.0;
      for (const auto& s : step) nrm += s.get_d() * s.get_d();
      nrm = std::sqrt(nrm);
      Rational shrink(1);
      if (nrm > radius && nrm > 0) shrink = Rational(radius / nrm) * Rational(999, 1000);
      for (std::size_t i = 0; i < d; ++i) y[i] += shrink * step[i];
      auto feas = check_feasible(P, y, 0.0);
      if (!feas.feasible) continue;
    } else {
      DVec u = sample_ball(rng, d, radius);
      DVec yd(d);
      for (std::size_t k = 0; k < d; ++k) yd[k] = xd[k] + u[k];
      if (!detail::project_equalities(P, yd)) continue;
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) dist += (yd[k] - xd[k]) * (yd[k] - xd[k]);
      if (std::sqrt(dist) > radius) continue;
      y = to_rational(yd);
      if (!check_feasible(P, y, kActTol).feasible) continue;
    }
    out.push_back(std::move(y));
  }
  if (attempts) *attempts = tries;
  return out;
}

inline PersistenceReport persistence_probe(const ProblemSpec& P, std::span<const Rational> x, Condition cond, double radius,
                                           std::size_t samples, std::uint64_t seed, QualOptions opt = {}) {
  PersistenceReport rep;
  rep.condition = cond;
  rep.radius = radius;
  auto pts = sample_feasible(P, x, radius, samples, seed, &rep.attempts);
  opt.seed = seed;
  for (const auto& y : pts) {
    QualReport r = check_condition(P, y, cond, opt);
    ++rep.tested;
    if (fails(r.verdict)) {
      rep.failures.push_back(y);
      rep.failure_verdicts.push_back(r.verdict);
    }
  }
  return rep;
}

}  // namespace nlqual

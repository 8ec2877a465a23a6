#pragma once

// KKT verification and multiplier search, plus the Fritz John alternatives.

#include <optional>
#include <string>
#include <vector>

#include "nlqual/project.hpp"
#include "nlqual/qualify.hpp"

namespace nlqual {

struct MultiplierVector {
  QVec lambda;
  QVec mu;
};

enum class KktStatus { Verified, NotVerified, Found, NotFound, Unknown };

inline std::string_view to_string(KktStatus s) {
  switch (s) {
    case KktStatus::Verified: return "VERIFIED";
    case KktStatus::NotVerified: return "NOT_VERIFIED";
    case KktStatus::Found: return "FOUND";
    case KktStatus::NotFound: return "NOT_FOUND";
    case KktStatus::Unknown: return "UNKNOWN";
  }
  return "?";
}

struct KktReport {
  KktStatus status = KktStatus::Unknown;
  std::optional<MultiplierVector> multipliers;
  bool exact = true;        // rational arithmetic throughout
  double residual = 0.0;    // distance from 0 to the assembled set (float regime)
  Exactness set_exactness = Exactness::Exact;
  std::vector<LpCertificate> certificates;  // witness, or one Farkas certificate per piece
  std::string note;
};

namespace detail {

struct KktData {
  std::optional<QVec> grad_f;  // exact gradient of the smooth part
  DVec grad_f_d;
  SubdiffBundle phi;
};

inline KktData kkt_data(const ProblemSpec& P, std::span<const Rational> x) {
  KktData k;
  if (auto g = P.smooth.grad_exact(x); g && g->smooth) k.grad_f = g->grad;
  k.grad_f_d = k.grad_f ? to_double(*k.grad_f) : P.smooth_gradient(to_double(x));
  k.phi = phi_bundle(P, x);
  return k;
}

}  // namespace detail

inline KktReport verify_kkt(const ProblemSpec& P, std::span<const Rational> x, const MultiplierVector& m) {
  QualContext c = make_context(P, x);
  if (m.lambda.size() != P.n() || m.mu.size() != P.m()) throw Error(ErrorCode::DimMismatch, "multiplier lengths do not match the constraints");
  detail::KktData k = detail::kkt_data(P, x);
  KktReport r;
  r.multipliers = m;
  r.set_exactness = k.phi.limiting_ex;
  if (k.phi.limiting_ex != Exactness::Exact) r.note = "limiting subdifferential of Phi is an outer estimate";
  for (std::size_t i = 0; i < m.lambda.size(); ++i) {
    if (sgn(m.lambda[i]) < 0) {
      r.status = KktStatus::NotVerified;
      r.note = "negative inequality multiplier";
      return r;
    }
    if (sgn(m.lambda[i]) > 0 && !c.active.contains(i)) {
      r.status = KktStatus::NotVerified;
      r.note = "complementarity violated";
      return r;
    }
  }
  const std::size_t d = P.dim;
  r.exact = k.grad_f.has_value() && c.grads_exact;
  if (r.exact) {
    QVec off = *k.grad_f;
    for (std::size_t i = 0; i < P.n(); ++i)
      for (std::size_t j = 0; j < d; ++j) off[j] += m.lambda[i] * c.grad_g[i][j];
    for (std::size_t q = 0; q < P.m(); ++q)
      for (std::size_t j = 0; j < d; ++j) off[j] += m.mu[q] * c.grad_h[q][j];
    Membership mem = contains(k.phi.limiting, negated(off));
    for (auto& t : mem.tried) r.certificates.push_back(std::move(t.cert));
    r.status = mem.member ? KktStatus::Verified : KktStatus::NotVerified;
    return r;
  }
  DVec off = k.grad_f_d;
  for (std::size_t i = 0; i < P.n(); ++i) {
    DVec g = P.ineq[i].gradient(c.xd);
    for (std::size_t j = 0; j < d; ++j) off[j] += m.lambda[i].get_d() * g[j];
  }
  for (std::size_t q = 0; q < P.m(); ++q) {
    DVec h = P.eq[q].gradient(c.xd);
    for (std::size_t j = 0; j < d; ++j) off[j] += m.mu[q].get_d() * h[j];
  }
  for (double& v : off) v = -v;
  r.residual = nearest_in_set(k.phi.limiting, off).best.distance;
  r.status = r.residual <= 1e-6 ? KktStatus::Verified : KktStatus::NotVerified;
  return r;
}

inline KktReport find_kkt_multipliers(const ProblemSpec& P, std::span<const Rational> x) {
  QualContext c = make_context(P, x);
  detail::KktData k = detail::kkt_data(P, x);
  KktReport r;
  r.set_exactness = k.phi.limiting_ex;
  r.exact = k.grad_f.has_value() && c.grads_exact;
  QVec off = k.grad_f ? *k.grad_f : to_rational(k.grad_f_d);
  std::vector<QVec> g;
  for (std::size_t i : c.active.indices) g.push_back(c.grad_g[i]);
  for (const auto& piece : k.phi.limiting.pieces()) {
    auto sys = detail::inclusion_lp(piece, P.dim, g, c.grad_h, &off);
    auto cert = lp_solve(sys.lp);
    if (cert.feasible()) {
      MultiplierVector m{QVec(P.n(), Rational(0)), QVec(P.m(), Rational(0))};
      for (std::size_t q = 0; q < g.size(); ++q) m.lambda[c.active.indices[q]] = cert.x[q];
      for (std::size_t q = 0; q < P.m(); ++q) m.mu[q] = cert.x[sys.mu0 + q];
      r.multipliers = m;
      r.certificates = {std::move(cert)};
      r.status = KktStatus::Found;
      if (k.phi.limiting_ex != Exactness::Exact) r.note = "found against an outer estimate of the limiting subdifferential";
      return r;
    }
    r.certificates.push_back(std::move(cert));
  }
  if (r.exact) {
    r.status = KktStatus::NotFound;
  } else {
    r.status = KktStatus::Unknown;
    r.note = "gradients are floating-point; infeasibility is not certified";
  }
  return r;
}

struct FritzJohnReport {
  bool case_i = false;   // nonzero abnormal multiplier
  bool case_ii = false;  // normal multiplier
  std::optional<MultiplierVector> abnormal;
  std::optional<MultiplierVector> normal;
  std::string note;
};

inline FritzJohnReport fritz_john(const ProblemSpec& P, std::span<const Rational> x) {
  QualContext c = make_context(P, x);
  FritzJohnReport fj;
  SubdiffBundle phi = phi_bundle(P, x);
  std::vector<QVec> g;
  for (std::size_t i : c.active.indices) g.push_back(c.grad_g[i]);
  std::size_t lps = 0;
  if (auto m = detail::nonzero_multiplier(phi.horizon, P.dim, g, c.grad_h, lps)) {
    fj.case_i = true;
    MultiplierVector v{QVec(P.n(), Rational(0)), m->mu};
    for (std::size_t q = 0; q < g.size(); ++q) v.lambda[c.active.indices[q]] = m->lambda[q];
    fj.abnormal = v;
  }
  KktReport k = find_kkt_multipliers(P, x);
  if (k.status == KktStatus::Found) {
    fj.case_ii = true;
    fj.normal = k.multipliers;
  }
  fj.note = "the subdifferential of f + Phi is replaced by the sum of the parts (outer estimate)";
  return fj;
}

}  // namespace nlqual

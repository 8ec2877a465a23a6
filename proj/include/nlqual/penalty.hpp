#pragma once

// Exact penalty problems, the lifted restricted system, sampled error-bound
// estimates, and sampled validation of local exactness.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nlqual/project.hpp"
#include "nlqual/rng.hpp"
#include "nlqual/subdiff.hpp"

namespace nlqual {

// ---------------------------------------------------------------------------
// Penalized objective

struct PenaltyProblem {
  ProblemSpec base;
  double rho = 1.0;
  Norm norm = Norm::L1;

  double penalty(std::span<const double> x) const { return constraint_residual(base, x, norm); }
  // f + Phi + rho * residual; +inf outside Omega.
  double value(std::span<const double> x, double omega_tol = 0.0) const {
    double v = base.objective(x, omega_tol);
    if (!std::isfinite(v)) return v;
    return v + rho * penalty(x);
  }
};

inline PenaltyProblem build_penalty(const ProblemSpec& P, double rho, Norm norm) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw Error(ErrorCode::Precondition, "rho must be a finite nonnegative number");
  return PenaltyProblem{P, rho, norm};
}

inline PenaltyProblem build_penalty(const ProblemSpec& P, double rho) { return build_penalty(P, rho, P.norm); }

// ---------------------------------------------------------------------------
// Restricted system in (x, t)

struct RestrictedSystem {
  ProblemSpec base;
  QVec x_star;
  QVec t_star;
  std::vector<std::size_t> I;       // terms with trivial horizon subdifferential at t*
  std::vector<std::size_t> I_c;     // the rest; t_i is pinned to t_i*
  std::vector<bool> plus_lifted;    // inner replaced by its positive part, outer by |t|^p
  std::vector<OuterFn> outer;       // outer function after lifting

  std::size_t s() const { return t_star.size(); }
  std::size_t dim() const { return base.dim + s(); }

  double omega_value(std::size_t i, std::span<const double> x) const {
    double w = base.phi[i].inner.value(x);
    return plus_lifted[i] ? std::max(0.0, w) : w;
  }
  // L1 residual of all rows at z = (x, t).
  double residual(std::span<const double> z) const {
    const std::size_t d = base.dim;
    std::span<const double> x = z.subspan(0, d);
    double r = 0.0;
    for (std::size_t i = 0; i < s(); ++i) r += std::abs(omega_value(i, x) - z[d + i]);
    for (std::size_t i : I_c) r += std::abs(z[d + i] - t_star[i].get_d());
    for (const auto& g : base.ineq) r += std::max(0.0, g.value(x));
    for (const auto& h : base.eq) r += std::abs(h.value(x));
    return r;
  }
  bool polyhedral() const {
    if (!base.constraints_affine()) return false;
    for (const auto& t : base.phi)
      if (!t.inner.affine) return false;
    return true;
  }
  // H-form pieces of the restricted feasible set (affine data only).
  std::vector<HPolyhedron> pieces(std::size_t cap = 4096) const;
};

inline RestrictedSystem build_restricted_system(const ProblemSpec& P, std::span<const Rational> x_star, bool plus_lift = false) {
  P.check_point(x_star.size());
  if (!check_feasible(P, x_star, kActTol).feasible) throw Error(ErrorCode::Precondition, "x_star is not feasible");
  RestrictedSystem R;
  R.base = P;
  R.x_star.assign(x_star.begin(), x_star.end());
  for (std::size_t i = 0; i < P.phi.size(); ++i) {
    TermData td = term_data(P, i, x_star);
    R.t_star.push_back(td.t);
    OuterFn outer = P.phi[i].outer;
    bool lifted = false;
    SubdiffBundle tab = td.table;
    if (!tab.horizon.is_zero_set() && !superlinear_growth(outer, td.t)) {
      if (plus_lift && outer.kind == OuterKind::PowPlus) {
        outer = OuterFn::pow_abs(outer.p);
        lifted = true;
        tab = outer_table(outer, td.t);
      } else {
        throw Error(ErrorCode::HypothesisViolated, "term " + std::to_string(i + 1) +
                                                       " has a nontrivial horizon subdifferential without superlinear growth at t*");
      }
    }
    R.plus_lifted.push_back(lifted);
    R.outer.push_back(outer);
    (tab.horizon.is_zero_set() ? R.I : R.I_c).push_back(i);
  }
  return R;
}

inline std::vector<HPolyhedron> RestrictedSystem::pieces(std::size_t cap) const {
  if (!polyhedral()) throw Error(ErrorCode::Unsupported, "restricted system is not polyhedral");
  const std::size_t d = base.dim, n = dim();
  std::vector<std::size_t> lifted;
  for (std::size_t i = 0; i < s(); ++i)
    if (plus_lifted[i]) lifted.push_back(i);
  std::vector<HPolyhedron> omegas = base.omega.whole ? std::vector<HPolyhedron>{HPolyhedron{d, {}, {}, {}, {}}} : base.omega.pieces;
  if (omegas.size() * (std::size_t{1} << lifted.size()) > cap) throw Error(ErrorCode::DimensionTooLarge, "too many restricted-system pieces");
  auto lift = [&](const QVec& a) {
    QVec r(n, Rational(0));
    std::copy(a.begin(), a.end(), r.begin());
    return r;
  };
  std::vector<HPolyhedron> out;
  for (const auto& om : omegas)
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << lifted.size()); ++mask) {
      HPolyhedron H;
      H.dim = n;
      for (std::size_t k = 0; k < om.A.size(); ++k) {
        H.A.push_back(lift(om.A[k]));
        H.b.push_back(om.b[k]);
      }
      for (std::size_t k = 0; k < om.E.size(); ++k) {
        H.E.push_back(lift(om.E[k]));
        H.e.push_back(om.e[k]);
      }
      for (const auto& g : base.ineq) {
        H.A.push_back(lift(g.a));
        H.b.push_back(-g.b);
      }
      for (const auto& h : base.eq) {
        H.E.push_back(lift(h.a));
        H.e.push_back(-h.b);
      }
      for (std::size_t i = 0; i < s(); ++i) {
        const ScalarFn& w = base.phi[i].inner;
        QVec row = lift(w.a);
        row[d + i] = -1;
        auto it = std::find(lifted.begin(), lifted.end(), i);
        if (it == lifted.end()) {
          H.E.push_back(row);  // w(x) - t_i = 0
          H.e.push_back(-w.b);
          continue;
        }
        bool positive = (mask >> (it - lifted.begin())) & 1;
        if (positive) {  // w(x) >= 0, t_i = w(x)
          H.A.push_back(negated(lift(w.a)));
          H.b.push_back(w.b);
          H.E.push_back(row);
          H.e.push_back(-w.b);
        } else {  // w(x) <= 0, t_i = 0
          H.A.push_back(lift(w.a));
          H.b.push_back(-w.b);
          H.E.push_back(unit_vector(n, d + i));
          H.e.push_back(Rational(0));
        }
      }
      for (std::size_t i : I_c) {
        H.E.push_back(unit_vector(n, d + i));
        H.e.push_back(t_star[i]);
      }
      out.push_back(std::move(H));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Error-bound estimation

// A set described by a residual, a distance oracle and a sampling domain.
struct ErrorBoundTarget {
  std::size_t dim = 0;
  DVec anchor;
  std::function<double(std::span<const double>)> residual;
  std::function<std::optional<double>(std::span<const double>)> distance;
  std::function<bool(std::span<const double>)> in_domain;
  std::string note;
};

enum class BoundVerdict { Bounded, Growing, Degenerate };

inline std::string_view to_string(BoundVerdict v) {
  switch (v) {
    case BoundVerdict::Bounded: return "BOUNDED";
    case BoundVerdict::Growing: return "GROWING";
    case BoundVerdict::Degenerate: return "DEGENERATE";
  }
  return "?";
}

struct ErrorBoundEstimate {
  double kappa_hat = 0.0;
  double delta = 0.0;
  std::vector<double> radii;
  std::vector<double> max_ratio;  // per radius
  std::vector<std::size_t> counted;
  std::size_t positive = 0;
  std::size_t projection_failures = 0;
  BoundVerdict verdict = BoundVerdict::Degenerate;
  std::string note;
};

namespace detail {

// Gauss-Newton walk from y onto {g <= 0, h = 0}; the displacement bounds the distance from above.
inline std::optional<DVec> newton_to_set(const ProblemSpec& P, DVec y) {
  const std::size_t d = P.dim;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> r;
    std::vector<DVec> rows;
    for (const auto& g : P.ineq)
      if (double v = g.value(y); v > 0.0) {
        r.push_back(v);
        rows.push_back(g.gradient(y));
      }
    for (const auto& h : P.eq) {
      r.push_back(h.value(y));
      rows.push_back(h.gradient(y));
    }
    if (rows.empty()) return y;
    Eigen::VectorXd rv(static_cast<Eigen::Index>(r.size()));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < r.size(); ++i) {
      rv(static_cast<Eigen::Index>(i)) = r[i];
      for (std::size_t k = 0; k < d; ++k) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(rv);
    double snorm = step.norm(), ynorm = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      y[k] -= step(static_cast<Eigen::Index>(k));
      ynorm = std::max(ynorm, std::abs(y[k]));
    }
    if (!std::isfinite(snorm)) return std::nullopt;
    if (snorm <= 1e-8 * (1.0 + ynorm)) return y;
  }
  return std::nullopt;
}

inline double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

inline std::vector<HPolyhedron> feasible_pieces(const ProblemSpec& P) {
  std::vector<HPolyhedron> base = P.omega.whole ? std::vector<HPolyhedron>{HPolyhedron{P.dim, {}, {}, {}, {}}} : P.omega.pieces;
  for (auto& H : base) {
    for (const auto& g : P.ineq) {
      H.A.push_back(g.a);
      H.b.push_back(-g.b);
    }
    for (const auto& h : P.eq) {
      H.E.push_back(h.a);
      H.e.push_back(-h.b);
    }
  }
  return base;
}

}  // namespace detail

// The feasible set F = {g <= 0, h = 0} inside Omega, residual ||g_+||_1 + ||h||_1.
inline ErrorBoundTarget feasible_set_target(const ProblemSpec& P, std::span<const Rational> anchor) {
  ErrorBoundTarget T;
  T.dim = P.dim;
  T.anchor = to_double(anchor);
  T.residual = [&P](std::span<const double> x) { return constraint_residual(P, x, Norm::L1); };
  T.in_domain = [&P](std::span<const double> x) { return P.omega.violation(x) <= 0.0; };
  if (P.constraints_affine()) {
    auto pieces = std::make_shared<std::vector<HPolyhedron>>(detail::feasible_pieces(P));
    T.distance = [pieces](std::span<const double> x) -> std::optional<double> { return project_union(*pieces, x).distance; };
  } else {
    if (!P.omega.whole) T.note = "nonlinear constraints: Newton displacement used as the distance";
    T.distance = [&P](std::span<const double> x) -> std::optional<double> {
      auto y = detail::newton_to_set(P, DVec(x.begin(), x.end()));
      if (!y || P.omega.violation(*y) > 1e-9) return std::nullopt;
      return detail::dist2(x, *y);
    };
  }
  return T;
}

inline ErrorBoundTarget restricted_target(const RestrictedSystem& R) {
  ErrorBoundTarget T;
  T.dim = R.dim();
  T.anchor = to_double(R.x_star);
  for (const auto& t : R.t_star) T.anchor.push_back(t.get_d());
  const std::size_t d = R.base.dim;
  T.residual = [&R](std::span<const double> z) { return R.residual(z); };
  T.in_domain = [&R, d](std::span<const double> z) { return R.base.omega.violation(z.subspan(0, d)) <= 0.0; };
  if (!R.polyhedral()) throw Error(ErrorCode::Unsupported, "error-bound estimation for the restricted system needs affine data");
  auto pieces = std::make_shared<std::vector<HPolyhedron>>(R.pieces());
  T.distance = [pieces](std::span<const double> z) -> std::optional<double> { return project_union(*pieces, z).distance; };
  return T;
}

// Lifted set {(x, y) : Psi(x) - y = 0, x in F}. The distance is bounded above by moving
// x to its nearest feasible point and y to Psi there.
inline ErrorBoundTarget lifted_target(const ProblemSpec& P, std::span<const Rational> x_star) {
  ErrorBoundTarget F = feasible_set_target(P, x_star);
  ErrorBoundTarget T;
  T.dim = P.dim + 1;
  T.anchor = F.anchor;
  T.anchor.push_back(P.psi_value(F.anchor));
  const std::size_t d = P.dim;
  T.residual = [&P, d](std::span<const double> z) {
    return std::abs(P.psi_value(z.subspan(0, d)) - z[d]) + constraint_residual(P, z.subspan(0, d), Norm::L1);
  };
  T.in_domain = [&P, d](std::span<const double> z) { return P.omega.violation(z.subspan(0, d)) <= 0.0; };
  std::vector<HPolyhedron> pieces;
  if (P.constraints_affine()) pieces = detail::feasible_pieces(P);
  T.distance = [&P, d, pieces](std::span<const double> z) -> std::optional<double> {
    DVec x(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
    DVec y;
    if (!pieces.empty()) y = project_union(pieces, x).point;
    else if (auto n = detail::newton_to_set(P, x)) y = *n;
    else return std::nullopt;
    double dy = P.psi_value(y) - z[d];
    double dx = detail::dist2(x, y);
    return std::sqrt(dx * dx + dy * dy);
  };
  T.note = "distance to the lifted set is an upper bound";
  return T;
}

inline ErrorBoundEstimate estimate_error_bound(const ErrorBoundTarget& T, std::vector<double> radii = {1e-1, 1e-2, 1e-3, 1e-4},
                                               std::size_t samples = 256, std::uint64_t seed = 42) {
  ErrorBoundEstimate e;
  e.radii = radii;
  e.delta = radii.empty() ? 0.0 : radii.front();
  e.note = T.note;
  for (std::size_t rung = 0; rung < radii.size(); ++rung) {
    const double r = radii[rung];
    double best = 0.0;
    std::size_t counted = 0;
    std::size_t drawn = 0;
    for (std::size_t s = 0; drawn < samples && s < 50 * samples; ++s) {
      auto rng = stream_rng(seed, 0xeb0, rung, s);
      DVec u = sample_ball(rng, T.dim, 1.0);
      double nrm = 0.0;
      for (double v : u) nrm += v * v;
      nrm = std::sqrt(nrm);
      std::uniform_real_distribution<double> shell(0.5 * r, r);
      double rad = shell(rng);
      DVec z(T.dim);
      for (std::size_t k = 0; k < T.dim; ++k) z[k] = T.anchor[k] + rad * u[k] / nrm;
      if (!T.in_domain(z)) continue;
      ++drawn;
      double res = T.residual(z);
      if (!(res > 1e-14)) continue;
      auto dist = T.distance(z);
      if (!dist) {
        ++e.projection_failures;
        continue;
      }
      ++counted;
      best = std::max(best, *dist / res);
    }
    e.max_ratio.push_back(best);
    e.counted.push_back(counted);
    e.positive += counted;
    e.kappa_hat = std::max(e.kappa_hat, best);
  }
  if (e.positive < 10) {
    e.verdict = BoundVerdict::Degenerate;
    return e;
  }
  e.verdict = BoundVerdict::Bounded;
  if (e.max_ratio.size() >= 3) {
    const std::size_t L = e.max_ratio.size();
    double first = e.max_ratio[L - 3], last = e.max_ratio[L - 1];
    if (first > 0.0 && last > 10.0 * first && e.max_ratio[L - 2] >= first) e.verdict = BoundVerdict::Growing;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Exactness validation and the rho0 search

struct ExactnessRecord {
  bool holds = true;
  double rho = 0.0;
  double radius = 0.0;
  double base_value = 0.0;
  std::size_t tested = 0;
  std::size_t probes = 0;
  std::optional<DVec> worst_point;
  double worst_gap = std::numeric_limits<double>::infinity();  // min over tests of value(y) - value(x*)
};

namespace detail {

// Deterministic probe set: axis points at the radius and Omega vertices within it.
inline std::vector<DVec> exactness_probes(const ProblemSpec& P, const DVec& x, double radius) {
  std::vector<DVec> out;
  const std::size_t d = P.dim;
  for (std::size_t k = 0; k < d; ++k)
    for (double sgn_ : {1.0, -1.0}) {
      DVec y = x;
      y[k] += sgn_ * radius;
      out.push_back(std::move(y));
    }
  if (!P.omega.whole && d <= kMaxDdDimension) {
    for (const auto& H : P.omega.pieces) {
      try {
        auto V = to_v(H);
        if (!V) continue;
        for (const auto& v : V->points) {
          DVec vd = to_double(v);
          if (dist2(vd, x) <= radius) out.push_back(std::move(vd));
        }
      } catch (const Error&) {
      }
    }
  }
  return out;
}

inline std::vector<DVec> ball_samples_in_omega(const ProblemSpec& P, const DVec& x, double radius, std::size_t samples, std::uint64_t seed) {
  std::vector<DVec> out;
  if (radius <= 0.0) return out;
  for (std::size_t s = 0; out.size() < samples && s < 50 * samples; ++s) {
    auto rng = stream_rng(seed, 0xe4ac7, s);
    DVec u = sample_ball(rng, P.dim, radius);
    DVec y(P.dim);
    for (std::size_t k = 0; k < P.dim; ++k) y[k] = x[k] + u[k];
    if (P.omega.violation(y) <= 0.0) out.push_back(std::move(y));
  }
  return out;
}

inline ExactnessRecord validate_on(const PenaltyProblem& PP, const DVec& x, double radius, const std::vector<DVec>& pts,
                                   std::size_t nprobes) {
  ExactnessRecord rec;
  rec.rho = PP.rho;
  rec.radius = radius;
  rec.base_value = PP.value(x, 1e-12);
  rec.probes = nprobes;
  for (const auto& y : pts) {
    if (PP.base.omega.violation(y) > 0.0) continue;
    double gap = PP.value(y) - rec.base_value;
    ++rec.tested;
    if (gap < rec.worst_gap) {
      rec.worst_gap = gap;
      rec.worst_point = y;
    }
  }
  rec.holds = !(rec.worst_gap < -1e-9);
  return rec;
}

}  // namespace detail

inline ExactnessRecord validate_exactness(const PenaltyProblem& PP, std::span<const Rational> x_star, double radius, std::size_t samples,
                                          std::uint64_t seed) {
  PP.base.check_point(x_star.size());
  DVec x = to_double(x_star);
  if (radius <= 0.0) {
    ExactnessRecord rec;
    rec.rho = PP.rho;
    rec.base_value = PP.value(x, 1e-12);
    return rec;
  }
  auto pts = detail::ball_samples_in_omega(PP.base, x, radius, samples, seed);
  auto probes = detail::exactness_probes(PP.base, x, radius);
  std::size_t np = probes.size();
  pts.insert(pts.end(), probes.begin(), probes.end());
  return detail::validate_on(PP, x, radius, pts, np);
}

struct Rho0Result {
  bool found = false;
  double rho0 = 0.0;
  std::vector<ExactnessRecord> ladder;  // one record per tried rho
};

inline Rho0Result find_rho0(const ProblemSpec& P, std::span<const Rational> x_star, double radius = 0.1, std::size_t samples = 10000,
                            std::uint64_t seed = 42, double rho_cap = 1024.0, std::optional<Norm> norm = std::nullopt) {
  P.check_point(x_star.size());
  if (!check_feasible(P, x_star, kActTol).feasible) throw Error(ErrorCode::Precondition, "x_star is not feasible");
  DVec x = to_double(x_star);
  auto pts = detail::ball_samples_in_omega(P, x, radius, samples, seed);
  auto probes = detail::exactness_probes(P, x, radius);
  std::size_t np = probes.size();
  pts.insert(pts.end(), probes.begin(), probes.end());
  Rho0Result out;
  for (double rho = 1.0; rho <= rho_cap; rho *= 2.0) {
    auto rec = detail::validate_on(build_penalty(P, rho, norm.value_or(P.norm)), x, radius, pts, np);
    out.ladder.push_back(rec);
    if (rec.holds) {
      out.found = true;
      out.rho0 = rho;
      return out;
    }
  }
  return out;
}

}  // namespace nlqual

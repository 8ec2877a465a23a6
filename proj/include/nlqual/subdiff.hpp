#pragma once

// Regular, limiting and horizon subdifferentials and the coderivative slice
// D*Psi(x)(0) for the structured function class: sums of outer functions of
// scalar inner maps, plus the indicator of a polyhedral union.

#include <cmath>
#include <limits>
#include <vector>

#include "nlqual/model.hpp"
#include "nlqual/setalg.hpp"

namespace nlqual {

enum class Exactness { Exact, OuterEstimate, Approximate };

inline std::string_view to_string(Exactness e) {
  switch (e) {
    case Exactness::Exact: return "EXACT";
    case Exactness::OuterEstimate: return "OUTER_ESTIMATE";
    case Exactness::Approximate: return "APPROXIMATE";
  }
  return "?";
}

inline Exactness worst(Exactness a, Exactness b) { return static_cast<int>(a) > static_cast<int>(b) ? a : b; }

struct SubdiffBundle {
  PolySet regular;
  PolySet limiting;
  PolySet horizon;
  PolySet coderiv0;
  Exactness regular_ex = Exactness::Exact;
  Exactness limiting_ex = Exactness::Exact;
  Exactness horizon_ex = Exactness::Exact;
  Exactness coderiv0_ex = Exactness::Exact;

  static SubdiffBundle zero(std::size_t d) {
    return SubdiffBundle{PolySet::zero(d), PolySet::zero(d), PolySet::zero(d), PolySet::zero(d)};
  }
  bool all_exact() const {
    return regular_ex == Exactness::Exact && limiting_ex == Exactness::Exact && horizon_ex == Exactness::Exact &&
           coderiv0_ex == Exactness::Exact;
  }
  bool lipschitz() const { return horizon.is_zero_set(); }
};

namespace detail {

inline SubdiffBundle smooth_1d(const Rational& slope, Exactness ex) {
  SubdiffBundle b = SubdiffBundle::zero(1);
  b.regular = b.limiting = PolySet::point({slope});
  b.regular_ex = b.limiting_ex = ex;
  return b;
}

inline SubdiffBundle all_1d(const PolySet& s, Exactness limiting_ex = Exactness::Exact) {
  SubdiffBundle b{s, s, s, s};
  b.limiting_ex = limiting_ex;
  return b;
}

inline PolySet interval(const Rational& lo, const Rational& hi) {
  return PolySet(1, {Polyhedron{{QVec{lo}, QVec{hi}}, {}, {}}});
}

// Derivative of |t|^p (sign included) or t^p for t > 0, exact when rational.
inline std::pair<Rational, Exactness> power_slope(const Rational& p, const Rational& t) {
  Rational mag = abs(t);
  if (auto v = exact_pow(mag, p - 1)) return {p * *v * sgn(t), Exactness::Exact};
  double d = p.get_d() * std::pow(mag.get_d(), p.get_d() - 1.0) * sgn(t);
  return {Rational(d), Exactness::Approximate};
}

}  // namespace detail

// One-dimensional bundle of an outer function at t.
inline SubdiffBundle outer_table(const OuterFn& f, const Rational& t) {
  using detail::all_1d;
  using detail::smooth_1d;
  const Rational one(1), zero(0);
  switch (f.kind) {
    case OuterKind::PowAbs:
      if (sgn(t) != 0) {
        auto [s, ex] = detail::power_slope(f.p, t);
        return smooth_1d(s, ex);
      }
      if (f.p < 1) return all_1d(PolySet::whole(1));
      {
        SubdiffBundle b = SubdiffBundle::zero(1);
        b.regular = b.limiting = detail::interval(-one, one);
        return b;
      }
    case OuterKind::PowPlus:
      if (sgn(t) < 0) return smooth_1d(zero, Exactness::Exact);
      if (sgn(t) > 0) {
        auto [s, ex] = detail::power_slope(f.p, t);
        return smooth_1d(s, ex);
      }
      if (f.p < 1) return all_1d(PolySet::cone(1, {QVec{one}}), Exactness::OuterEstimate);
      {
        SubdiffBundle b = SubdiffBundle::zero(1);
        b.regular = b.limiting = detail::interval(zero, one);
        return b;
      }
    case OuterKind::Linear:
      return smooth_1d(f.c, Exactness::Exact);
    case OuterKind::Custom: {
      if (!f.in_domain(t)) throw Error(ErrorCode::DomainError, "t = " + to_string(t) + " lies outside the declared domain");
      if (const Breakpoint* bp = f.breakpoint_at(t)) {
        SubdiffBundle b{bp->regular, bp->limiting, bp->horizon, bp->coderiv0};
        return b;
      }
      if ((f.lo && t == *f.lo) || (f.hi && t == *f.hi))
        throw Error(ErrorCode::Unsupported, "custom outer function needs a breakpoint table at its domain boundary t = " + to_string(t));
      if (f.derivative_expr.empty()) {
        if (auto g = f.value_expr.grad_exact(std::span<const Rational>(&t, 1)); g && g->smooth)
          return smooth_1d(g->grad[0], Exactness::Exact);
      } else if (auto v = f.derivative_expr.eval_exact(std::span<const Rational>(&t, 1))) {
        return smooth_1d(*v, Exactness::Exact);
      }
      return smooth_1d(Rational(f.derivative(t.get_d())), Exactness::Approximate);
    }
  }
  throw Error(ErrorCode::Unsupported, "unknown outer function");
}

// Growth test: regular subdifferential of the outer function at t is all of R.
inline bool superlinear_growth(const OuterFn& f, const Rational& t) {
  switch (f.kind) {
    case OuterKind::PowAbs: return sgn(t) == 0 && f.p < 1;
    case OuterKind::PowPlus: return false;
    case OuterKind::Linear: return false;
    case OuterKind::Custom: {
      if (!f.in_domain(t)) throw Error(ErrorCode::DomainError, "t = " + to_string(t) + " lies outside the declared domain");
      if (const Breakpoint* bp = f.breakpoint_at(t)) return bp->regular.is_whole();
      // Geometric grid h = 2^-k, k = 1..40; the finest rungs decide.
      const double t0 = t.get_d(), f0 = f(t0), M = 1e6;
      double finest = 0.0;
      for (int k = 1; k <= 40; ++k) {
        double h = std::ldexp(1.0, -k);
        finest = std::min((f(t0 + h) - f0) / h, (f(t0 - h) - f0) / h);
      }
      return finest >= M;
    }
  }
  return false;
}

// Pullback of a 1-D set through v -> v * a.
inline PolySet pullback(const PolySet& s, std::span<const Rational> a) {
  QMat M;
  for (const auto& c : a) M.push_back(QVec{c});
  return s.linear_image(M);
}

struct TermData {
  Rational t;
  bool t_exact = true;
  SubdiffBundle table;  // 1-D
  QVec row;             // inner gradient at x
  bool row_exact = true;
};

inline TermData term_data(const ProblemSpec& P, std::size_t i, std::span<const Rational> x) {
  const CompositeTerm& term = P.phi[i];
  TermData td;
  if (auto v = term.inner.value(x)) {
    td.t = *v;
  } else {
    td.t = Rational(term.inner.value(to_double(x)));
    td.t_exact = false;
  }
  if (!term.outer.in_domain(td.t))
    throw Error(ErrorCode::PhiInfinite, "term " + std::to_string(i + 1) + " is infinite at the point");
  td.table = outer_table(term.outer, td.t);
  if (auto g = term.inner.gradient(x)) {
    td.row = *g;
  } else {
    td.row = to_rational(term.inner.gradient(to_double(x)));
    td.row_exact = false;
  }
  if (!td.t_exact || !td.row_exact) {
    td.table.regular_ex = worst(td.table.regular_ex, Exactness::Approximate);
    td.table.limiting_ex = worst(td.table.limiting_ex, Exactness::Approximate);
  }
  if (!term.inner.affine && !td.table.lipschitz())
    throw Error(ErrorCode::Unsupported,
                "term " + std::to_string(i + 1) + ": non-Lipschitz outer composed with a smooth nonlinear inner at its kink");
  return td;
}

namespace detail {

inline bool rows_independent(const std::vector<QVec>& rows, std::size_t d) {
  SpanBasis basis(d);
  for (const auto& r : rows)
    if (!basis.add(r)) return false;
  return true;
}

}  // namespace detail

// Bundle of Psi = sum of composite terms (no indicator).
inline SubdiffBundle psi_bundle(const ProblemSpec& P, std::span<const Rational> x) {
  P.check_point(x.size());
  const std::size_t d = P.dim;
  SubdiffBundle out = SubdiffBundle::zero(d);
  std::vector<QVec> nonlipschitz_rows, nonsmooth_rows;
  for (std::size_t i = 0; i < P.phi.size(); ++i) {
    TermData td = term_data(P, i, x);
    const SubdiffBundle& b = td.table;
    out.regular = minkowski_sum(out.regular, pullback(b.regular, td.row));
    out.limiting = minkowski_sum(out.limiting, pullback(b.limiting, td.row));
    out.horizon = minkowski_sum(out.horizon, pullback(b.horizon, td.row));
    out.coderiv0 = minkowski_sum(out.coderiv0, pullback(b.coderiv0, td.row));
    out.regular_ex = worst(out.regular_ex, b.regular_ex);
    out.limiting_ex = worst(out.limiting_ex, b.limiting_ex);
    out.horizon_ex = worst(out.horizon_ex, b.horizon_ex);
    out.coderiv0_ex = worst(out.coderiv0_ex, b.coderiv0_ex);
    if (!b.lipschitz()) nonlipschitz_rows.push_back(td.row);
    bool singleton = b.limiting.pieces().size() == 1 && b.limiting.pieces()[0].points.size() == 1 &&
                     b.limiting.pieces()[0].rays.empty() && b.limiting.pieces()[0].lines.empty();
    if (!singleton) {
      nonsmooth_rows.push_back(td.row);
      // Chain rule through a smooth inner gives only an inclusion at a kink.
      if (!P.phi[i].inner.affine) out.limiting_ex = worst(out.limiting_ex, Exactness::OuterEstimate);
    }
  }
  if (!detail::rows_independent(nonlipschitz_rows, d)) {
    out.horizon_ex = worst(out.horizon_ex, Exactness::OuterEstimate);
    out.coderiv0_ex = worst(out.coderiv0_ex, Exactness::OuterEstimate);
  }
  if (!detail::rows_independent(nonsmooth_rows, d)) {
    out.limiting_ex = worst(out.limiting_ex, Exactness::OuterEstimate);
    out.regular_ex = worst(out.regular_ex, Exactness::OuterEstimate);
  }
  return out;
}

// Normal cone of Omega at x (exact flag false when the union estimate is loose).
inline NormalConeEstimate omega_normal_cone(const ProblemSpec& P, std::span<const Rational> x) {
  if (P.omega.whole) {
    NormalConeEstimate e;
    e.inner = e.outer = PolySet::zero(P.dim);
    return e;
  }
  return union_normal_cone(P.omega.pieces, x, P.dim);
}

// Bundle of Phi = Psi + indicator of Omega.
inline SubdiffBundle phi_bundle(const ProblemSpec& P, std::span<const Rational> x) {
  P.check_point(x.size());
  if (!P.omega.contains(x)) throw Error(ErrorCode::PhiInfinite, "point lies outside Omega");
  SubdiffBundle b = psi_bundle(P, x);
  if (P.omega.whole) return b;
  NormalConeEstimate N = omega_normal_cone(P, x);
  const bool n_trivial = N.outer.is_zero_set();
  b.regular = minkowski_sum(b.regular, N.inner);
  b.limiting = minkowski_sum(b.limiting, N.outer);
  b.horizon = minkowski_sum(b.horizon, N.outer);
  if (!N.exact) {
    b.limiting_ex = worst(b.limiting_ex, Exactness::OuterEstimate);
    b.horizon_ex = worst(b.horizon_ex, Exactness::OuterEstimate);
  }
  // The sum rule with the indicator is an inclusion once Psi itself is non-Lipschitz.
  if (!n_trivial && !b.coderiv0.is_zero_set()) {
    b.regular_ex = worst(b.regular_ex, Exactness::OuterEstimate);
    b.limiting_ex = worst(b.limiting_ex, Exactness::OuterEstimate);
    b.horizon_ex = worst(b.horizon_ex, Exactness::OuterEstimate);
  }
  return b;
}

// D*Psi(x)(0) for the continuous part.
inline PolySet coderiv0(const ProblemSpec& P, std::span<const Rational> x) { return psi_bundle(P, x).coderiv0; }

// Bundle of a single term pulled back to R^d.
inline SubdiffBundle term_bundle(const ProblemSpec& P, std::size_t i, std::span<const Rational> x) {
  if (i >= P.phi.size()) throw Error(ErrorCode::Precondition, "term index out of range");
  TermData td = term_data(P, i, x);
  SubdiffBundle b{pullback(td.table.regular, td.row), pullback(td.table.limiting, td.row), pullback(td.table.horizon, td.row),
                  pullback(td.table.coderiv0, td.row)};
  b.regular_ex = td.table.regular_ex;
  b.limiting_ex = td.table.limiting_ex;
  b.horizon_ex = td.table.horizon_ex;
  b.coderiv0_ex = td.table.coderiv0_ex;
  return b;
}

}  // namespace nlqual

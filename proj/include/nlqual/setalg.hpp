#pragma once

// Cone operations built on the polyhedral kernel: intersection triviality,
// intersections of convex cones, and normal cones of polyhedra and unions.

#include <optional>
#include <vector>

#include "nlqual/dd.hpp"

namespace nlqual {

struct ConeIntersection {
  bool trivial = true;
  QVec witness;  // nonzero common element when not trivial
  std::size_t lps = 0;
};

// K1 ∩ K2 == {0} for cones given in V-form.
inline ConeIntersection cone_intersection_trivial(const PolySet& K1, const PolySet& K2) {
  if (K1.dim() != K2.dim()) throw Error(ErrorCode::DimMismatch, "cone_intersection_trivial: dimensions differ");
  if (!K1.is_cone() || !K2.is_cone()) throw Error(ErrorCode::NotACone, "cone_intersection_trivial needs cones");
  const std::size_t d = K1.dim();
  ConeIntersection out;
  std::vector<HPolyhedron> h2;
  for (const auto& q : K2.pieces()) h2.push_back(cone_to_h(q, d));

  for (const auto& p : K1.pieces()) {
    std::vector<QVec> dirs = p.rays;
    for (const auto& l : p.lines) {
      dirs.push_back(l);
      dirs.push_back(negated(l));
    }
    for (const auto& H : h2) {
      for (const auto& c : dirs) {
        LinearProgram lp;
        const std::size_t nr = p.rays.size(), nl = p.lines.size();
        for (std::size_t k = 0; k < nr; ++k) lp.add_var(false);
        for (std::size_t k = 0; k < nl; ++k) lp.add_var(true);
        // v = R rho + L tau, expressed through a coefficient row for any linear form w^T v.
        auto row_of = [&](const QVec& w) {
          QVec r(nr + nl);
          for (std::size_t k = 0; k < nr; ++k) r[k] = dot(w, p.rays[k]);
          for (std::size_t k = 0; k < nl; ++k) r[nr + k] = dot(w, p.lines[k]);
          return r;
        };
        for (const auto& a : H.A) lp.add_le(row_of(a), Rational(0));
        for (const auto& e : H.E) lp.add_eq(row_of(e), Rational(0));
        QVec cr = row_of(c);
        lp.add_le(cr, Rational(1));
        lp.objective = cr;
        auto cert = lp_solve(lp);
        ++out.lps;
        if (cert.status == LpStatus::Optimal && sgn(cert.value) > 0) {
          QVec v(d, Rational(0));
          for (std::size_t k = 0; k < nr; ++k)
            for (std::size_t j = 0; j < d; ++j) v[j] += cert.x[k] * p.rays[k][j];
          for (std::size_t k = 0; k < nl; ++k)
            for (std::size_t j = 0; j < d; ++j) v[j] += cert.x[nr + k] * p.lines[k][j];
          out.trivial = false;
          out.witness = primitive(v);
          return out;
        }
      }
    }
  }
  return out;
}

// Intersection of convex cones (single-piece PolySets).
inline PolySet convex_cone_intersection(const std::vector<PolySet>& cones, std::size_t dim) {
  HPolyhedron H;
  H.dim = dim;
  for (const auto& K : cones) {
    if (K.is_whole()) continue;
    if (K.pieces().size() != 1) throw Error(ErrorCode::Unsupported, "convex_cone_intersection needs convex cones");
    HPolyhedron h = cone_to_h(K.pieces()[0], dim);
    H.A.insert(H.A.end(), h.A.begin(), h.A.end());
    H.b.insert(H.b.end(), h.b.begin(), h.b.end());
    H.E.insert(H.E.end(), h.E.begin(), h.E.end());
    H.e.insert(H.e.end(), h.e.begin(), h.e.end());
  }
  auto v = to_v(H);
  if (!v) return PolySet::zero(dim);
  return PolySet(dim, {*v});
}

// Normal cone of { y : A y <= b, E y = e } at a member x.
inline PolySet normal_cone(const HPolyhedron& H, std::span<const Rational> x) {
  std::vector<QVec> rays;
  for (std::size_t i = 0; i < H.A.size(); ++i)
    if (dot(H.A[i], x) == H.b[i]) rays.push_back(H.A[i]);
  return PolySet::cone(H.dim, std::move(rays), H.E);
}

// Normal cone of a finite union of polyhedra. When x lies in a single piece the
// cone is exact; otherwise `inner` is the regular normal cone (intersection of the
// piece cones) and `outer` the union bounding the limiting normal cone.
struct NormalConeEstimate {
  PolySet inner;
  PolySet outer;
  bool exact = true;
  std::vector<std::size_t> pieces;  // pieces containing x
};

inline NormalConeEstimate union_normal_cone(std::span<const HPolyhedron> pieces, std::span<const Rational> x, std::size_t dim) {
  NormalConeEstimate out;
  std::vector<PolySet> cones;
  for (std::size_t k = 0; k < pieces.size(); ++k)
    if (pieces[k].contains(x)) {
      out.pieces.push_back(k);
      cones.push_back(normal_cone(pieces[k], x));
    }
  if (cones.empty()) throw Error(ErrorCode::PhiInfinite, "point lies outside every piece of the set");
  if (cones.size() == 1) {
    out.inner = out.outer = cones[0];
    return out;
  }
  out.exact = false;
  out.outer = PolySet::empty(dim);
  for (const auto& c : cones) out.outer = out.outer.unite(c);
  out.inner = convex_cone_intersection(cones, dim);
  if (set_equal(out.inner, out.outer)) out.exact = true;
  return out;
}

}  // namespace nlqual

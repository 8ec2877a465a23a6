#pragma once

// Double description method over exact rationals.
//
// dd_cone(B) returns generators (extreme rays + lineality basis) of the cone
// {y : B y <= 0}. V->H and H->V conversions of polyhedra go through the
// homogenized cone in one extra coordinate.

#include <vector>

#include "nlqual/polyset.hpp"

namespace nlqual {

inline constexpr std::size_t kMaxDdDimension = 12;
inline constexpr std::size_t kMaxDdGenerators = 64;

struct ConeGenerators {
  std::vector<QVec> rays;
  std::vector<QVec> lines;
};

// { x : A x <= b, E x = e }
struct HPolyhedron {
  std::size_t dim = 0;
  QMat A;
  QVec b;
  QMat E;
  QVec e;

  bool contains(std::span<const Rational> x) const {
    for (std::size_t i = 0; i < A.size(); ++i)
      if (dot(A[i], x) > b[i]) return false;
    for (std::size_t i = 0; i < E.size(); ++i)
      if (dot(E[i], x) != e[i]) return false;
    return true;
  }
  // Largest constraint violation (0 when inside).
  double violation(std::span<const double> x) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
      double s = -b[i].get_d();
      for (std::size_t j = 0; j < dim; ++j) s += A[i][j].get_d() * x[j];
      worst = std::max(worst, s);
    }
    for (std::size_t i = 0; i < E.size(); ++i) {
      double s = -e[i].get_d();
      for (std::size_t j = 0; j < dim; ++j) s += E[i][j].get_d() * x[j];
      worst = std::max(worst, std::abs(s));
    }
    return worst;
  }
};

namespace detail {

struct DdRay {
  QVec v;
  std::vector<bool> zero;  // processed constraints tight at v
};

}  // namespace detail

inline ConeGenerators dd_cone(const QMat& B, std::size_t n) {
  std::vector<QVec> lines;
  for (std::size_t k = 0; k < n; ++k) lines.push_back(unit_vector(n, k));
  std::vector<detail::DdRay> rays;
  const std::size_t m = B.size();

  for (std::size_t k = 0; k < m; ++k) {
    const QVec& b = B[k];
    if (b.size() != n) throw Error(ErrorCode::DimMismatch, "double description row length mismatch");
    for (auto& r : rays) r.zero.resize(k + 1, false);

    std::size_t pivot = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (sgn(dot(b, lines[i])) != 0) {
        pivot = i;
        break;
      }

    if (pivot < lines.size()) {
      QVec l0 = lines[pivot];
      Rational s0 = dot(b, l0);
      if (sgn(s0) > 0) {
        l0 = negated(l0);
        s0 = -s0;
      }
      std::vector<QVec> rest;
      for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == pivot) continue;
        Rational s = dot(b, lines[i]);
        QVec l = lines[i];
        if (sgn(s) != 0)
          for (std::size_t j = 0; j < n; ++j) l[j] -= (s / s0) * l0[j];
        rest.push_back(primitive(l));
      }
      for (auto& r : rays) {
        Rational s = dot(b, r.v);
        if (sgn(s) != 0)
          for (std::size_t j = 0; j < n; ++j) r.v[j] -= (s / s0) * l0[j];
        r.v = primitive(r.v);
        r.zero[k] = true;
      }
      detail::DdRay nr{primitive(l0), std::vector<bool>(k + 1, true)};
      nr.zero[k] = false;
      rays.push_back(std::move(nr));
      lines = std::move(rest);
      continue;
    }

    std::vector<Rational> s(rays.size());
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < rays.size(); ++i) {
      s[i] = dot(b, rays[i].v);
      if (sgn(s[i]) > 0) pos.push_back(i);
      else if (sgn(s[i]) < 0) neg.push_back(i);
      else rays[i].zero[k] = true;
    }
    if (pos.empty()) continue;

    const std::size_t pointed_dim = n - lines.size();
    std::vector<detail::DdRay> next;
    for (std::size_t i = 0; i < rays.size(); ++i)
      if (sgn(s[i]) <= 0) next.push_back(rays[i]);
    for (std::size_t p : pos) {
      for (std::size_t q : neg) {
        std::vector<bool> common(k + 1, false);
        std::size_t count = 0;
        for (std::size_t c = 0; c < k; ++c)
          if (rays[p].zero[c] && rays[q].zero[c]) {
            common[c] = true;
            ++count;
          }
        if (pointed_dim >= 2 && count + 2 < pointed_dim) continue;
        bool adjacent = true;
        for (std::size_t r = 0; r < rays.size() && adjacent; ++r) {
          if (r == p || r == q) continue;
          bool superset = true;
          for (std::size_t c = 0; c < k; ++c)
            if (common[c] && !rays[r].zero[c]) {
              superset = false;
              break;
            }
          if (superset) adjacent = false;
        }
        if (!adjacent) continue;
        QVec w(n);
        for (std::size_t j = 0; j < n; ++j) w[j] = s[p] * rays[q].v[j] - s[q] * rays[p].v[j];
        common[k] = true;
        next.push_back(detail::DdRay{primitive(w), std::move(common)});
      }
    }
    rays = std::move(next);
  }

  ConeGenerators out;
  for (auto& r : rays) out.rays.push_back(std::move(r.v));
  out.lines = std::move(lines);
  detail::sort_unique(out.rays);
  return out;
}

inline void check_dd_limits(std::size_t dim, std::size_t generators) {
  if (dim > kMaxDdDimension)
    throw Error(ErrorCode::DimensionTooLarge, "double description limited to dimension " + std::to_string(kMaxDdDimension));
  if (generators > kMaxDdGenerators)
    throw Error(ErrorCode::DimensionTooLarge, "double description limited to " + std::to_string(kMaxDdGenerators) + " generators per piece");
}

// V-form piece -> H-form.
inline HPolyhedron to_h(const Polyhedron& P, std::size_t dim) {
  check_dd_limits(dim, P.points.size() + P.rays.size() + 2 * P.lines.size());
  QMat G;
  auto lift = [&](const QVec& v, int t) {
    QVec g(v);
    g.emplace_back(t);
    return g;
  };
  for (const auto& p : P.points) G.push_back(lift(p, 1));
  if (P.points.empty()) G.push_back(lift(QVec(dim, Rational(0)), 1));
  for (const auto& r : P.rays) G.push_back(lift(r, 0));
  for (const auto& l : P.lines) {
    G.push_back(lift(l, 0));
    G.push_back(lift(negated(l), 0));
  }
  ConeGenerators polar = dd_cone(G, dim + 1);
  HPolyhedron H;
  H.dim = dim;
  for (const auto& y : polar.rays) {
    QVec a(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(dim));
    if (is_zero(a)) continue;
    H.A.push_back(std::move(a));
    H.b.push_back(-y[dim]);
  }
  for (const auto& y : polar.lines) {
    QVec a(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(dim));
    if (is_zero(a)) continue;
    H.E.push_back(std::move(a));
    H.e.push_back(-y[dim]);
  }
  return H;
}

// H-form -> V-form; returns nullopt for an empty polyhedron.
inline std::optional<Polyhedron> to_v(const HPolyhedron& H) {
  const std::size_t dim = H.dim;
  check_dd_limits(dim, 0);
  QMat B;
  auto row = [&](const QVec& a, const Rational& rhs, int s) {
    QVec r(dim + 1);
    for (std::size_t j = 0; j < dim; ++j) r[j] = s * a[j];
    r[dim] = -s * rhs;
    return r;
  };
  for (std::size_t i = 0; i < H.A.size(); ++i) B.push_back(row(H.A[i], H.b[i], 1));
  for (std::size_t i = 0; i < H.E.size(); ++i) {
    B.push_back(row(H.E[i], H.e[i], 1));
    B.push_back(row(H.E[i], H.e[i], -1));
  }
  QVec t_nonneg(dim + 1, Rational(0));
  t_nonneg[dim] = -1;
  B.push_back(t_nonneg);
  ConeGenerators g = dd_cone(B, dim + 1);
  Polyhedron P;
  for (const auto& v : g.rays) {
    QVec x(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(dim));
    if (sgn(v[dim]) > 0) {
      for (auto& c : x) c /= v[dim];
      P.points.push_back(std::move(x));
    } else {
      P.rays.push_back(std::move(x));
    }
  }
  for (const auto& v : g.lines) P.lines.emplace_back(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(dim));
  if (P.points.empty()) return std::nullopt;
  return PolySet(dim, {P}).pieces().front();
}

// H-form of a cone piece: { v : A v <= 0, E v = 0 }.
inline HPolyhedron cone_to_h(const Polyhedron& P, std::size_t dim) {
  HPolyhedron H = to_h(P, dim);
  for (const auto& rhs : H.b)
    if (sgn(rhs) != 0) throw Error(ErrorCode::NotACone, "piece is not a cone");
  return H;
}

}  // namespace nlqual

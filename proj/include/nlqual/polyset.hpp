#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "nlqual/lp.hpp"
#include "nlqual/rational.hpp"

namespace nlqual {

// conv(points) + cone(rays) + span(lines)
struct Polyhedron {
  std::vector<QVec> points;
  std::vector<QVec> rays;
  std::vector<QVec> lines;

  bool is_cone() const {
    return std::all_of(points.begin(), points.end(), [](const QVec& p) { return is_zero(p); });
  }
  bool operator==(const Polyhedron&) const = default;
};

namespace detail {

inline bool vec_less(const QVec& a, const QVec& b) { return lex_less(a, b); }

inline void sort_unique(std::vector<QVec>& v) {
  std::sort(v.begin(), v.end(), vec_less);
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

inline QVec line_normal_form(const QVec& l) {
  QVec p = primitive(l);
  for (const auto& c : p) {
    if (sgn(c) == 0) continue;
    if (sgn(c) < 0)
      for (auto& x : p) x = -x;
    break;
  }
  return p;
}

// Keeps a linearly independent subset (first-come order); returns it in
// row-echelon-reduced companion form for span tests.
class SpanBasis {
 public:
  explicit SpanBasis(std::size_t dim) : dim_(dim) {}

  // Returns true if v was independent (and was added).
  bool add(const QVec& v) {
    QVec r = reduce(v);
    auto piv = std::find_if(r.begin(), r.end(), [](const Rational& x) { return sgn(x) != 0; });
    if (piv == r.end()) return false;
    std::size_t col = static_cast<std::size_t>(piv - r.begin());
    Rational p = r[col];
    for (auto& x : r) x /= p;
    for (auto& [c, row] : rows_) {
      if (sgn(row[col]) == 0) continue;
      Rational f = row[col];
      for (std::size_t j = 0; j < dim_; ++j) row[j] -= f * r[j];
    }
    rows_.emplace_back(col, std::move(r));
    return true;
  }
  bool contains(const QVec& v) const { return is_zero(reduce(v)); }
  std::size_t rank() const { return rows_.size(); }

 private:
  QVec reduce(const QVec& v) const {
    QVec r = v;
    for (const auto& [c, row] : rows_) {
      if (sgn(r[c]) == 0) continue;
      Rational f = r[c];
      for (std::size_t j = 0; j < dim_; ++j) r[j] -= f * row[j];
    }
    return r;
  }
  std::size_t dim_;
  std::vector<std::pair<std::size_t, QVec>> rows_;
};

}  // namespace detail

// Finite union of V-form polyhedra. No pieces and not whole means EMPTY.
class PolySet {
 public:
  PolySet() = default;
  explicit PolySet(std::size_t dim) : dim_(dim) {}
  PolySet(std::size_t dim, std::vector<Polyhedron> pieces) : dim_(dim), pieces_(std::move(pieces)) {
    canonicalize();
  }

  static PolySet empty(std::size_t dim) { return PolySet(dim); }
  static PolySet whole(std::size_t dim) {
    Polyhedron p;
    for (std::size_t k = 0; k < dim; ++k) p.lines.push_back(unit_vector(dim, k));
    return PolySet(dim, {p});
  }
  static PolySet point(QVec x) {
    std::size_t d = x.size();
    return PolySet(d, {Polyhedron{{std::move(x)}, {}, {}}});
  }
  static PolySet zero(std::size_t dim) { return point(QVec(dim, Rational(0))); }
  static PolySet cone(std::size_t dim, std::vector<QVec> rays, std::vector<QVec> lines = {}) {
    return PolySet(dim, {Polyhedron{{QVec(dim, Rational(0))}, std::move(rays), std::move(lines)}});
  }
  static PolySet points(std::size_t dim, const std::vector<QVec>& pts) {
    std::vector<Polyhedron> pieces;
    for (const auto& p : pts) pieces.push_back(Polyhedron{{p}, {}, {}});
    return PolySet(dim, std::move(pieces));
  }

  std::size_t dim() const { return dim_; }
  bool is_whole() const { return whole_; }
  bool is_empty() const { return pieces_.empty(); }
  const std::vector<Polyhedron>& pieces() const { return pieces_; }

  bool is_cone() const {
    return std::all_of(pieces_.begin(), pieces_.end(), [](const Polyhedron& p) { return p.is_cone(); });
  }
  // {0} exactly.
  bool is_zero_set() const {
    return pieces_.size() == 1 && pieces_[0].rays.empty() && pieces_[0].lines.empty() &&
           pieces_[0].points.size() == 1 && is_zero(pieces_[0].points[0]);
  }
  std::size_t max_generators() const {
    std::size_t g = 0;
    for (const auto& p : pieces_) g = std::max(g, p.points.size() + p.rays.size() + 2 * p.lines.size());
    return g;
  }

  PolySet unite(const PolySet& other) const {
    check_dim(other);
    std::vector<Polyhedron> all = pieces_;
    all.insert(all.end(), other.pieces_.begin(), other.pieces_.end());
    return PolySet(dim_, std::move(all));
  }

  PolySet negate() const {
    std::vector<Polyhedron> out = pieces_;
    for (auto& p : out) {
      for (auto& v : p.points) v = negated(v);
      for (auto& v : p.rays) v = negated(v);
    }
    return PolySet(dim_, std::move(out));
  }

  PolySet scale(const Rational& s) const {
    if (sgn(s) == 0) return is_empty() ? *this : zero(dim_);
    std::vector<Polyhedron> out = pieces_;
    for (auto& p : out) {
      for (auto& v : p.points) v = scaled(v, s);
      for (auto& v : p.rays) v = scaled(v, s);
    }
    return PolySet(dim_, std::move(out));
  }

  // Image under x -> M x, M given as rows (out_dim x dim).
  PolySet linear_image(const QMat& M) const {
    const std::size_t out_dim = M.size();
    auto apply = [&](const QVec& v) {
      QVec r(out_dim, Rational(0));
      for (std::size_t i = 0; i < out_dim; ++i) r[i] = dot(M[i], v);
      return r;
    };
    std::vector<Polyhedron> out;
    for (const auto& p : pieces_) {
      Polyhedron q;
      for (const auto& v : p.points) q.points.push_back(apply(v));
      for (const auto& v : p.rays) q.rays.push_back(apply(v));
      for (const auto& v : p.lines) q.lines.push_back(apply(v));
      out.push_back(std::move(q));
    }
    return PolySet(out_dim, std::move(out));
  }

  bool operator==(const PolySet& o) const {
    return dim_ == o.dim_ && whole_ == o.whole_ && pieces_ == o.pieces_;
  }

 private:
  void check_dim(const PolySet& o) const {
    if (o.dim_ != dim_) throw Error(ErrorCode::DimMismatch, "PolySet dimensions differ");
  }

  void canonicalize() {
    std::vector<Polyhedron> kept;
    for (auto& p : pieces_) {
      for (const auto* group : {&p.points, &p.rays, &p.lines})
        for (const auto& v : *group)
          if (v.size() != dim_) throw Error(ErrorCode::DimMismatch, "generator length does not match PolySet dimension");
      std::vector<QVec> rays, lines;
      for (const auto& r : p.rays)
        if (!is_zero(r)) rays.push_back(primitive(r));
      for (const auto& l : p.lines)
        if (!is_zero(l)) lines.push_back(detail::line_normal_form(l));
      detail::sort_unique(rays);
      // r and -r together form a line.
      std::vector<QVec> keep_rays;
      for (const auto& r : rays) {
        QVec neg = negated(r);
        if (std::binary_search(rays.begin(), rays.end(), neg, detail::vec_less)) lines.push_back(detail::line_normal_form(r));
        else keep_rays.push_back(r);
      }
      detail::sort_unique(lines);
      detail::SpanBasis basis(dim_);
      std::vector<QVec> indep;
      for (const auto& l : lines)
        if (basis.add(l)) indep.push_back(l);
      std::vector<QVec> final_rays;
      for (const auto& r : keep_rays)
        if (!basis.contains(r)) final_rays.push_back(r);
      if (p.points.empty()) {
        if (final_rays.empty() && indep.empty()) continue;
        p.points.push_back(QVec(dim_, Rational(0)));
      }
      detail::sort_unique(p.points);
      if (basis.rank() == dim_) {
        whole_ = true;
        break;
      }
      p.rays = std::move(final_rays);
      p.lines = std::move(indep);
      kept.push_back(std::move(p));
    }
    if (whole_) {
      Polyhedron w;
      w.points.push_back(QVec(dim_, Rational(0)));
      for (std::size_t k = 0; k < dim_; ++k) w.lines.push_back(unit_vector(dim_, k));
      pieces_ = {w};
      return;
    }
    std::sort(kept.begin(), kept.end(), [](const Polyhedron& a, const Polyhedron& b) {
      return std::tie(a.points, a.rays, a.lines) < std::tie(b.points, b.rays, b.lines);
    });
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    pieces_ = std::move(kept);
  }

  std::size_t dim_ = 0;
  bool whole_ = false;
  std::vector<Polyhedron> pieces_;
};

// {a + b : a in A, b in B}, distributed over piece pairs.
inline PolySet minkowski_sum(const PolySet& A, const PolySet& B) {
  if (A.dim() != B.dim()) throw Error(ErrorCode::DimMismatch, "minkowski_sum of different dimensions");
  if (A.is_empty() || B.is_empty()) return PolySet::empty(A.dim());
  if (A.is_whole() || B.is_whole()) return PolySet::whole(A.dim());
  std::vector<Polyhedron> out;
  for (const auto& p : A.pieces()) {
    for (const auto& q : B.pieces()) {
      Polyhedron s;
      for (const auto& a : p.points)
        for (const auto& b : q.points) s.points.push_back(added(a, b));
      s.rays = p.rays;
      s.rays.insert(s.rays.end(), q.rays.begin(), q.rays.end());
      s.lines = p.lines;
      s.lines.insert(s.lines.end(), q.lines.begin(), q.lines.end());
      out.push_back(std::move(s));
    }
  }
  return PolySet(A.dim(), std::move(out));
}

// Witness of y in a piece: y = sum sigma_k p_k + sum rho_k r_k + sum tau_k l_k.
struct PieceMembership {
  bool member = false;
  LpCertificate cert;  // feasible witness (sigma, rho, tau) or Farkas data
};

struct Membership {
  bool member = false;
  std::size_t piece = 0;               // index of the containing piece
  std::vector<PieceMembership> tried;  // one per piece attempted
};

inline LinearProgram membership_lp(const Polyhedron& p, const QVec& y) {
  const std::size_t d = y.size();
  const std::size_t np = p.points.size(), nr = p.rays.size(), nl = p.lines.size();
  LinearProgram lp(np + nr + nl);
  for (std::size_t k = 0; k < nl; ++k) lp.free[np + nr + k] = true;
  for (std::size_t i = 0; i < d; ++i) {
    QVec row(lp.num_vars, Rational(0));
    for (std::size_t k = 0; k < np; ++k) row[k] = p.points[k][i];
    for (std::size_t k = 0; k < nr; ++k) row[np + k] = p.rays[k][i];
    for (std::size_t k = 0; k < nl; ++k) row[np + nr + k] = p.lines[k][i];
    lp.add_eq(std::move(row), y[i]);
  }
  if (np > 0) {
    QVec row(lp.num_vars, Rational(0));
    for (std::size_t k = 0; k < np; ++k) row[k] = 1;
    lp.add_eq(std::move(row), Rational(1));
  }
  return lp;
}

inline PieceMembership piece_contains(const Polyhedron& p, const QVec& y) {
  PieceMembership out;
  out.cert = lp_solve(membership_lp(p, y));
  out.member = out.cert.feasible();
  return out;
}

inline Membership contains(const PolySet& A, const QVec& y) {
  if (y.size() != A.dim()) throw Error(ErrorCode::DimMismatch, "point dimension differs from PolySet");
  Membership m;
  for (std::size_t k = 0; k < A.pieces().size(); ++k) {
    m.tried.push_back(piece_contains(A.pieces()[k], y));
    if (m.tried.back().member) {
      m.member = true;
      m.piece = k;
      return m;
    }
  }
  return m;
}

inline Membership contains_zero(const PolySet& A) { return contains(A, QVec(A.dim(), Rational(0))); }

// Recession directions: cone(rays) + span(lines).
inline bool in_recession_cone(const Polyhedron& p, const QVec& dir) {
  Polyhedron rec{{}, p.rays, p.lines};
  if (rec.rays.empty() && rec.lines.empty()) return is_zero(dir);
  return piece_contains(rec, dir).member;
}

inline bool piece_subset(const Polyhedron& P, const Polyhedron& Q) {
  for (const auto& v : P.points)
    if (!piece_contains(Q, v).member) return false;
  for (const auto& r : P.rays)
    if (!in_recession_cone(Q, r)) return false;
  for (const auto& l : P.lines)
    if (!in_recession_cone(Q, l) || !in_recession_cone(Q, negated(l))) return false;
  return true;
}

// Sufficient test: every piece of A lies inside a single piece of B (exact when B is convex).
inline bool subset_of(const PolySet& A, const PolySet& B) {
  if (A.dim() != B.dim()) throw Error(ErrorCode::DimMismatch, "subset_of dimensions differ");
  for (const auto& p : A.pieces()) {
    bool found = false;
    for (const auto& q : B.pieces())
      if (piece_subset(p, q)) {
        found = true;
        break;
      }
    if (!found) return false;
  }
  return true;
}

inline bool set_equal(const PolySet& A, const PolySet& B) { return subset_of(A, B) && subset_of(B, A); }

}  // namespace nlqual

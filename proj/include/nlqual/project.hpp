#pragma once

// Euclidean projection onto polyhedra in floating point.
//
// H-form pieces are handled as least-distance programs solved through
// Lawson-Hanson NNLS, followed by an exact-face polish step. V-form pieces are
// converted with the double description method first. A separate V-form
// nearest-point routine also returns the generator weights.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "nlqual/dd.hpp"

namespace nlqual {

struct Projection {
  DVec point;
  double distance = std::numeric_limits<double>::infinity();
  std::size_t piece = 0;
};

namespace detail {

// min ||E u - f||  s.t. u >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& E, const Eigen::VectorXd& f) {
  const Eigen::Index n = E.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, E.cwiseAbs().maxCoeff()) * std::max(1.0, f.cwiseAbs().maxCoeff());
  const int max_outer = static_cast<int>(3 * n + 30);

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    z = Eigen::VectorXd::Zero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd Ep(E.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ep.col(static_cast<Eigen::Index>(k)) = E.col(idx[k]);
    Eigen::VectorXd zp = Ep.completeOrthogonalDecomposition().solve(f);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  for (int outer = 0; outer < max_outer; ++outer) {
    Eigen::VectorXd w = E.transpose() * (f - E * u);
    Eigen::Index best = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < 3 * n + 30; ++inner) {
      Eigen::VectorXd z;
      solve_passive(z);
      bool all_pos = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) all_pos = false;
      if (all_pos) {
        u = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) alpha = std::min(alpha, u(j) / (u(j) - z(j)));
      u += alpha * (z - u);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && u(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          u(j) = 0.0;
        }
    }
  }
  return u;
}

// min ||z||  s.t.  G z >= h. nullopt when infeasible.
inline std::optional<Eigen::VectorXd> least_distance(const Eigen::MatrixXd& G, const Eigen::VectorXd& h) {
  const Eigen::Index n = G.cols(), m = G.rows();
  if (m == 0) return Eigen::VectorXd::Zero(n);
  bool trivially = true;
  for (Eigen::Index i = 0; i < m; ++i)
    if (h(i) > 0.0) trivially = false;
  if (trivially) return Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd E(n + 1, m);
  E.topRows(n) = G.transpose();
  E.row(n) = h.transpose();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
  f(n) = 1.0;
  Eigen::VectorXd u = nnls(E, f);
  Eigen::VectorXd r = E * u - f;
  if (r.norm() < 1e-13 || std::abs(r(n)) < 1e-13) return std::nullopt;
  return Eigen::VectorXd(-r.head(n) / r(n));
}

}  // namespace detail

// Nearest point of { y : A y <= b, E y = e } to x.
inline std::optional<Projection> project_h(const HPolyhedron& H, std::span<const double> x) {
  const std::size_t d = H.dim;
  const std::size_t m = H.A.size() + 2 * H.E.size();
  Eigen::MatrixXd G(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  Eigen::VectorXd h(static_cast<Eigen::Index>(m));
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(d));
  std::size_t row = 0;
  auto put = [&](const QVec& a, const Rational& rhs, double s) {
    Eigen::VectorXd av(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) av(static_cast<Eigen::Index>(j)) = a[j].get_d();
    // a^T (x + z) <= rhs  <=>  -a^T z >= a^T x - rhs
    G.row(static_cast<Eigen::Index>(row)) = -s * av.transpose();
    h(static_cast<Eigen::Index>(row)) = s * (av.dot(xv) - rhs.get_d());
    ++row;
  };
  for (std::size_t i = 0; i < H.A.size(); ++i) put(H.A[i], H.b[i], 1.0);
  for (std::size_t i = 0; i < H.E.size(); ++i) {
    put(H.E[i], H.e[i], 1.0);
    put(H.E[i], H.e[i], -1.0);
  }
  auto z = detail::least_distance(G, h);
  if (!z) return std::nullopt;

  // Polish on the face identified by the active constraints.
  const double scale = 1.0 + xv.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    if (G.row(i).dot(*z) - h(i) <= 1e-9 * scale) active.push_back(i);
  if (!active.empty()) {
    Eigen::MatrixXd Ga(static_cast<Eigen::Index>(active.size()), G.cols());
    Eigen::VectorXd ha(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      Ga.row(static_cast<Eigen::Index>(k)) = G.row(active[k]);
      ha(static_cast<Eigen::Index>(k)) = h(active[k]);
    }
    Eigen::VectorXd zp = Ga.completeOrthogonalDecomposition().solve(ha);
    double worst = (G * zp - h).minCoeff();
    if (worst >= -1e-12 * scale && (Ga * zp - ha).norm() <= 1e-10 * scale && zp.norm() <= z->norm() + 1e-9 * scale) *z = zp;
  }
  Projection p;
  p.point.resize(d);
  for (std::size_t j = 0; j < d; ++j) p.point[j] = x[j] + (*z)(static_cast<Eigen::Index>(j));
  p.distance = z->norm();
  return p;
}

// Nearest point over a union of H-form pieces.
inline Projection project_union(std::span<const HPolyhedron> pieces, std::span<const double> x) {
  Projection best;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    auto p = project_h(pieces[k], x);
    if (p && p->distance < best.distance) {
      best = *p;
      best.piece = k;
    }
  }
  if (!std::isfinite(best.distance)) throw Error(ErrorCode::ProjectionFailure, "no nonempty piece to project onto");
  return best;
}

// Projection onto a V-form PolySet (pieces converted to H-form).
inline Projection project(const PolySet& A, std::span<const double> x) {
  if (x.size() != A.dim()) throw Error(ErrorCode::DimMismatch, "project: point dimension differs");
  if (A.dim() > kMaxDdDimension) throw Error(ErrorCode::DimensionTooLarge, "project limited to dimension 12");
  if (A.is_empty()) throw Error(ErrorCode::ProjectionFailure, "project onto empty set");
  std::vector<HPolyhedron> hs;
  for (const auto& p : A.pieces()) hs.push_back(to_h(p, A.dim()));
  return project_union(hs, x);
}

// Nearest point of a V-form piece to `target`, with generator weights.
struct VFormNearest {
  double distance = std::numeric_limits<double>::infinity();
  DVec point;
  DVec point_weights;  // convex weights over points (sum 1)
  DVec ray_weights;    // nonnegative
  DVec line_weights;   // free
};

inline VFormNearest nearest_in_piece(const Polyhedron& P, std::span<const double> target) {
  const std::size_t d = target.size();
  const std::size_t np = P.points.size(), nr = P.rays.size(), nl = P.lines.size();
  const std::size_t nv = np + nr + 2 * nl;
  double mag = 1.0;
  for (const auto* g : {&P.points, &P.rays, &P.lines})
    for (const auto& v : *g)
      for (const auto& c : v) mag = std::max(mag, std::abs(c.get_d()));
  for (double t : target) mag = std::max(mag, std::abs(t));
  const double W = np > 1 ? 1e4 * mag : 0.0;

  Eigen::MatrixXd E(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(nv));
  Eigen::VectorXd f(static_cast<Eigen::Index>(d + 1));
  E.setZero();
  for (std::size_t i = 0; i < d; ++i) {
    auto r = static_cast<Eigen::Index>(i);
    double shift = np == 1 ? P.points[0][i].get_d() : 0.0;
    f(r) = target[i] - shift;
    if (np > 1)
      for (std::size_t k = 0; k < np; ++k) E(r, static_cast<Eigen::Index>(k)) = P.points[k][i].get_d();
    for (std::size_t k = 0; k < nr; ++k) E(r, static_cast<Eigen::Index>(np + k)) = P.rays[k][i].get_d();
    for (std::size_t k = 0; k < nl; ++k) {
      E(r, static_cast<Eigen::Index>(np + nr + 2 * k)) = P.lines[k][i].get_d();
      E(r, static_cast<Eigen::Index>(np + nr + 2 * k + 1)) = -P.lines[k][i].get_d();
    }
  }
  f(static_cast<Eigen::Index>(d)) = W;
  if (np > 1)
    for (std::size_t k = 0; k < np; ++k) E(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = W;
  Eigen::VectorXd u = detail::nnls(E, f);

  VFormNearest out;
  out.point_weights.assign(np, 0.0);
  if (np == 1) {
    out.point_weights[0] = 1.0;
  } else if (np > 1) {
    double s = 0.0;
    for (std::size_t k = 0; k < np; ++k) s += u(static_cast<Eigen::Index>(k));
    for (std::size_t k = 0; k < np; ++k)
      out.point_weights[k] = s > 0 ? u(static_cast<Eigen::Index>(k)) / s : 1.0 / static_cast<double>(np);
  }
  out.ray_weights.resize(nr);
  for (std::size_t k = 0; k < nr; ++k) out.ray_weights[k] = u(static_cast<Eigen::Index>(np + k));
  out.line_weights.resize(nl);
  for (std::size_t k = 0; k < nl; ++k)
    out.line_weights[k] = u(static_cast<Eigen::Index>(np + nr + 2 * k)) - u(static_cast<Eigen::Index>(np + nr + 2 * k + 1));

  // Residual at the (feasible) weights, so the distance is an honest upper bound.
  out.point.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < np; ++k) v += out.point_weights[k] * P.points[k][i].get_d();
    for (std::size_t k = 0; k < nr; ++k) v += out.ray_weights[k] * P.rays[k][i].get_d();
    for (std::size_t k = 0; k < nl; ++k) v += out.line_weights[k] * P.lines[k][i].get_d();
    out.point[i] = v;
  }
  double s2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) s2 += (out.point[i] - target[i]) * (out.point[i] - target[i]);
  out.distance = std::sqrt(s2);
  return out;
}

struct VFormNearestSet {
  VFormNearest best;
  std::size_t piece = 0;
};

inline VFormNearestSet nearest_in_set(const PolySet& A, std::span<const double> target) {
  VFormNearestSet out;
  for (std::size_t k = 0; k < A.pieces().size(); ++k) {
    auto r = nearest_in_piece(A.pieces()[k], target);
    if (r.distance < out.best.distance) {
      out.best = std::move(r);
      out.piece = k;
    }
  }
  return out;
}

}  // namespace nlqual

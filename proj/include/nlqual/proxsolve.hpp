#pragma once

// Proximal gradient for penalized problems with coordinate-separable bridge terms.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "nlqual/penalty.hpp"

namespace nlqual {

// argmin_t 1/2 (t - v)^2 + lam |t|^p for 0 < p <= 1. Ties go to 0.
inline double prox_pow_abs(double p, double lam, double v) {
  if (!(lam > 0.0)) throw Error(ErrorCode::Precondition, "prox_pow_abs needs lam > 0");
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::Precondition, "prox_pow_abs needs 0 < p <= 1");
  const double a = std::abs(v);
  const double sg = v < 0 ? -1.0 : 1.0;
  if (p == 1.0) return sg * std::max(0.0, a - lam);
  if (a == 0.0) return 0.0;
  auto obj = [&](double t) { return 0.5 * (t - a) * (t - a) + lam * std::pow(t, p); };
  double t = 0.0;
  if (p == 0.5) {
    // sqrt(t) = s solves s^3 - a s + lam/2 = 0; take the largest root when three are real.
    if (4.0 * a * a * a <= 6.75 * lam * lam) return 0.0;
    double arg = -(3.0 * lam / (4.0 * a)) * std::sqrt(3.0 / a);
    arg = std::clamp(arg, -1.0, 1.0);
    double s = 2.0 * std::sqrt(a / 3.0) * std::cos(std::acos(arg) / 3.0);
    t = s * s;
  } else {
    // F(t) = t - a + lam p t^(p-1) is convex on t > 0 with its minimum at t_hat.
    auto F = [&](double u) { return u - a + lam * p * std::pow(u, p - 1.0); };
    auto dF = [&](double u) { return 1.0 + lam * p * (p - 1.0) * std::pow(u, p - 2.0); };
    const double t_hat = std::pow(lam * p * (1.0 - p), 1.0 / (2.0 - p));
    if (t_hat >= a || F(t_hat) > 0.0) return 0.0;
    double lo = t_hat, hi = a;  // F(lo) <= 0 < F(hi)
    t = hi;
    bool ok = false;
    for (int it = 0; it < 200; ++it) {
      double fn = F(t);
      if (std::abs(fn) <= 1e-15 * (1.0 + a)) {
        ok = true;
        break;
      }
      (fn > 0 ? hi : lo) = t;
      double next = t - fn / dF(t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-16 * (1.0 + t)) {
        t = next;
        ok = true;
        break;
      }
      t = next;
    }
    if (!ok) {
      for (int it = 0; it < 200 && hi - lo > 1e-16 * (1.0 + hi); ++it) {
        double mid = 0.5 * (lo + hi);
        (F(mid) > 0 ? hi : lo) = mid;
      }
      t = 0.5 * (lo + hi);
    }
  }
  return obj(t) < obj(0.0) ? sg * t : 0.0;
}

struct SolverConfig {
  bool backtracking = true;
  double fixed_step = 0.0;  // used when backtracking is off
  double beta = 0.5;
  double c = 1e-4;
  std::size_t max_iters = 5000;
  double tol = 1e-8;
  std::size_t starts = 8;
  std::uint64_t seed = 8;
  double perturb = 0.1;
};

enum class SolveStatus { Converged, MaxIters };

inline std::string_view to_string(SolveStatus s) { return s == SolveStatus::Converged ? "CONVERGED" : "MAX_ITERS"; }

struct SolveResult {
  DVec x;
  std::optional<QVec> x_exact;  // rational snap that is feasible and no worse
  double objective = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  SolveStatus status = SolveStatus::MaxIters;
  std::size_t start_index = 0;
  std::vector<double> trace;  // smoothed objective per accepted step, final stage of the winning start
};

namespace detail {

struct SeparableTerm {
  std::size_t coord = 0;
  double alpha = 1.0, b = 0.0;
  double p = 1.0;
  bool plus = false;
};

struct SolverModel {
  const PenaltyProblem* PP = nullptr;
  std::vector<SeparableTerm> terms;
  std::vector<double> linear_terms;  // gradient of linear outer terms (constant)
  double linear_offset = 0.0;
};

inline SolverModel solver_model(const PenaltyProblem& PP) {
  const ProblemSpec& P = PP.base;
  SolverModel M;
  M.PP = &PP;
  M.linear_terms.assign(P.dim, 0.0);
  std::vector<bool> used(P.dim, false);
  for (const auto& t : P.phi) {
    if (!t.inner.affine) throw Error(ErrorCode::UnsupportedStructure, "solver needs affine inner maps");
    if (t.outer.kind == OuterKind::Linear) {
      for (std::size_t k = 0; k < P.dim; ++k) M.linear_terms[k] += t.outer.c.get_d() * t.inner.a[k].get_d();
      M.linear_offset += t.outer.c.get_d() * t.inner.b.get_d();
      continue;
    }
    if (t.outer.kind == OuterKind::Custom) throw Error(ErrorCode::UnsupportedStructure, "solver has no prox for custom outer functions");
    std::optional<std::size_t> coord;
    for (std::size_t k = 0; k < P.dim; ++k)
      if (sgn(t.inner.a[k]) != 0) {
        if (coord) throw Error(ErrorCode::UnsupportedStructure, "non-Lipschitz term couples several coordinates");
        coord = k;
      }
    if (!coord) continue;  // constant term
    if (used[*coord]) throw Error(ErrorCode::UnsupportedStructure, "two non-Lipschitz terms act on the same coordinate");
    used[*coord] = true;
    M.terms.push_back({*coord, t.inner.a[*coord].get_d(), t.inner.b.get_d(), t.outer.p.get_d(), t.outer.kind == OuterKind::PowPlus});
  }
  return M;
}

inline double huber(double r, double mu) { return std::abs(r) <= mu ? r * r / (2 * mu) : std::abs(r) - mu / 2; }
inline double huber_d(double r, double mu) { return std::abs(r) <= mu ? r / mu : (r > 0 ? 1.0 : -1.0); }

// Smoothed penalty and its gradient.
inline double smooth_penalty(const ProblemSpec& P, Norm norm, std::span<const double> x, double mu, DVec* grad) {
  const std::size_t d = P.dim;
  std::vector<double> vals;
  std::vector<DVec> dirs;  // d(value)/dx
  for (const auto& g : P.ineq) {
    double v = g.value(x);
    if (v <= 0.0) {
      vals.push_back(0.0);
      dirs.push_back(DVec(d, 0.0));
      continue;
    }
    vals.push_back(v);
    dirs.push_back(g.gradient(x));
  }
  for (const auto& h : P.eq) {
    vals.push_back(h.value(x));
    dirs.push_back(h.gradient(x));
  }
  if (grad) grad->assign(d, 0.0);
  const std::size_t n = P.ineq.size();
  auto block = [&](std::size_t from, std::size_t to) {
    double out = 0.0;
    if (from == to) return out;
    if (norm == Norm::L1) {
      for (std::size_t i = from; i < to; ++i) {
        out += huber(vals[i], mu);
        if (grad)
          for (std::size_t k = 0; k < d; ++k) (*grad)[k] += huber_d(vals[i], mu) * dirs[i][k];
      }
    } else if (norm == Norm::L2) {
      double s = 0.0;
      for (std::size_t i = from; i < to; ++i) s += vals[i] * vals[i];
      double root = std::sqrt(s + mu * mu);
      out = root - mu;
      if (grad)
        for (std::size_t i = from; i < to; ++i)
          for (std::size_t k = 0; k < d; ++k) (*grad)[k] += vals[i] / root * dirs[i][k];
    } else {
      double m = 0.0;
      std::vector<double> hv;
      for (std::size_t i = from; i < to; ++i) {
        hv.push_back(huber(vals[i], mu));
        m = std::max(m, hv.back());
      }
      double z = 0.0;
      for (double v : hv) z += std::exp((v - m) / mu);
      out = m + mu * std::log(z) - mu * std::log(static_cast<double>(hv.size()));
      if (grad)
        for (std::size_t i = from; i < to; ++i) {
          double w = std::exp((hv[i - from] - m) / mu) / z;
          for (std::size_t k = 0; k < d; ++k) (*grad)[k] += w * huber_d(vals[i], mu) * dirs[i][k];
        }
    }
    return out;
  };
  double total = block(0, n) + block(n, vals.size());
  return total;
}

inline double separable_value(const SolverModel& M, std::span<const double> x) {
  double s = 0.0;
  for (const auto& t : M.terms) {
    double u = t.alpha * x[t.coord] + t.b;
    if (t.plus && u <= 0.0) continue;
    s += u == 0.0 ? 0.0 : std::pow(std::abs(u), t.p);
  }
  return s;
}

inline double smooth_part(const SolverModel& M, std::span<const double> x, double mu, DVec* grad) {
  const ProblemSpec& P = M.PP->base;
  DVec gp;
  double v = P.smooth_value(x) + M.linear_offset;
  for (std::size_t k = 0; k < P.dim; ++k) v += M.linear_terms[k] * x[k];
  v += M.PP->rho * smooth_penalty(P, M.PP->norm, x, mu, grad ? &gp : nullptr);
  if (grad) {
    *grad = P.smooth_gradient(x);
    for (std::size_t k = 0; k < P.dim; ++k) (*grad)[k] += M.linear_terms[k] + M.PP->rho * gp[k];
  }
  return v;
}

inline DVec prox_step(const SolverModel& M, const DVec& y, double step, const HPolyhedron* piece) {
  DVec z = y;
  for (const auto& t : M.terms) {
    double w = t.alpha * y[t.coord] + t.b;
    double lam = t.alpha * t.alpha * step;
    double u = (t.plus && w <= 0.0) ? w : prox_pow_abs(t.p, lam, w);
    z[t.coord] = (u - t.b) / t.alpha;
  }
  if (piece) {
    auto pr = project_h(*piece, z);
    if (pr) z = pr->point;
  }
  return z;
}

// Nearby rational point with small denominators, kept only when exactly feasible and no worse.
inline std::optional<QVec> snap_rational(const PenaltyProblem& PP, const DVec& x, double value) {
  QVec q;
  for (double v : x) {
    mpq_class best(v);
    // Continued-fraction convergents of v.
    double rem = v;
    mpz_class h0 = 1, h1 = 0, k0 = 0, k1 = 1;
    for (int it = 0; it < 40; ++it) {
      double a = std::floor(rem);
      if (std::abs(a) > 1e12) break;
      mpz_class ai(static_cast<long>(a));
      mpz_class h2 = ai * h0 + h1, k2 = ai * k0 + k1;
      h1 = h0;
      h0 = h2;
      k1 = k0;
      k0 = k2;
      mpq_class c(h0, k0);
      c.canonicalize();
      if (std::abs(c.get_d() - v) <= 1e-8 * (1.0 + std::abs(v))) {
        best = c;
        break;
      }
      double frac = rem - a;
      if (frac < 1e-15) break;
      rem = 1.0 / frac;
    }
    if (k0 > 1000000) return std::nullopt;
    q.push_back(best);
  }
  if (!check_feasible(PP.base, q, 0.0).feasible) return std::nullopt;
  DVec qd = to_double(q);
  if (!(PP.value(qd) <= value + 1e-9)) return std::nullopt;
  return q;
}

}  // namespace detail

inline SolveResult solve(const PenaltyProblem& PP, std::span<const double> x0, const SolverConfig& cfg = {}) {
  const ProblemSpec& P = PP.base;
  if (x0.size() != P.dim) throw Error(ErrorCode::DimMismatch, "start point has the wrong dimension");
  detail::SolverModel M = detail::solver_model(PP);
  const std::size_t d = P.dim;
  DVec base(x0.begin(), x0.end());

  // Pieces for the multistart: every Omega piece whose projection of x0 is close.
  std::vector<const HPolyhedron*> pieces;
  if (P.omega.whole) {
    pieces.push_back(nullptr);
  } else {
    double nearest = std::numeric_limits<double>::infinity();
    std::vector<double> dist;
    for (const auto& H : P.omega.pieces) {
      auto pr = project_h(H, base);
      dist.push_back(pr ? pr->distance : std::numeric_limits<double>::infinity());
      nearest = std::min(nearest, dist.back());
    }
    for (std::size_t k = 0; k < P.omega.pieces.size(); ++k)
      if (std::isfinite(dist[k]) && dist[k] <= std::max(nearest, 10.0 * cfg.perturb)) pieces.push_back(&P.omega.pieces[k]);
    if (pieces.empty()) throw Error(ErrorCode::Precondition, "Omega has no nonempty piece");
  }

  // Step guess from sampled gradient differences.
  double L = 1e-12;
  {
    DVec g0;
    detail::smooth_part(M, base, 1e-2, &g0);
    for (std::size_t s = 0; s < 8; ++s) {
      auto rng = stream_rng(cfg.seed, 0x1ac, s);
      DVec u = sample_ball(rng, d, 1e-3);
      DVec y = base, g1;
      for (std::size_t k = 0; k < d; ++k) y[k] += u[k];
      detail::smooth_part(M, y, 1e-2, &g1);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        num += (g1[k] - g0[k]) * (g1[k] - g0[k]);
        den += u[k] * u[k];
      }
      if (den > 0.0) L = std::max(L, std::sqrt(num / den));
    }
  }
  const double step0 = cfg.backtracking ? 1.0 / std::max(L, 1e-6) : cfg.fixed_step;
  if (!(step0 > 0.0)) throw Error(ErrorCode::Precondition, "step must be positive");

  SolveResult best;
  const std::vector<double> mus = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10};
  std::size_t start_index = 0;
  for (const HPolyhedron* piece : pieces)
    for (std::size_t s = 0; s < std::max<std::size_t>(1, cfg.starts); ++s, ++start_index) {
      DVec x = base;
      if (s > 0) {
        auto rng = stream_rng(cfg.seed, 0x57a7, start_index);
        DVec u = sample_ball(rng, d, cfg.perturb);
        for (std::size_t k = 0; k < d; ++k) x[k] += u[k];
      }
      if (piece)
        if (auto pr = project_h(*piece, x)) x = pr->point;
      std::size_t iters = 0;
      bool converged = false;
      std::vector<double> trace;
      double step = step0;
      for (double mu : mus) {
        trace.clear();
        converged = false;
        auto total = [&](const DVec& y) { return detail::smooth_part(M, y, mu, nullptr) + detail::separable_value(M, y); };
        double fx = total(x);
        trace.push_back(fx);
        for (std::size_t it = 0; it < cfg.max_iters; ++it, ++iters) {
          DVec g;
          const double sx = detail::smooth_part(M, x, mu, &g);
          if (cfg.backtracking) step = std::min(step / cfg.beta, 1e6);
          DVec xn;
          double fn = 0.0, dn = 0.0;
          while (true) {
            DVec y(d);
            for (std::size_t k = 0; k < d; ++k) y[k] = x[k] - step * g[k];
            xn = detail::prox_step(M, y, step, piece);
            fn = total(xn);
            dn = 0.0;
            double lin = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              dn += (xn[k] - x[k]) * (xn[k] - x[k]);
              lin += g[k] * (xn[k] - x[k]);
            }
            if (!cfg.backtracking || step < 1e-18) break;
            const bool model_ok = detail::smooth_part(M, xn, mu, nullptr) <= sx + lin + dn / (2 * step) + 1e-15 * (1 + std::abs(sx));
            if (model_ok && fn <= fx - cfg.c / step * dn) break;
            step *= cfg.beta;
          }
          if (cfg.backtracking && fn > fx) {  // no descent possible at this smoothing level
            converged = true;
            break;
          }
          double xnorm = 0.0;
          for (double v : xn) xnorm = std::max(xnorm, std::abs(v));
          x = std::move(xn);
          fx = fn;
          trace.push_back(fx);
          // Steps shrink with the smoothing level, so the stop threshold does too.
          if (std::sqrt(dn) <= std::min(cfg.tol, 1e-2 * mu) * (1.0 + xnorm)) {
            converged = true;
            break;
          }
        }
        if (!converged && iters >= cfg.max_iters * mus.size()) break;
      }
      double val = PP.value(x, 1e-9);
      if (val < best.objective) {
        best.x = x;
        best.objective = val;
        best.iterations = iters;
        best.status = converged ? SolveStatus::Converged : SolveStatus::MaxIters;
        best.start_index = start_index;
        best.trace = trace;
      }
    }
  if (!best.x.empty()) best.x_exact = detail::snap_rational(PP, best.x, best.objective);
  return best;
}

}  // namespace nlqual

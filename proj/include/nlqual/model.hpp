#pragma once

// Problem representation, evaluation, active sets, and the JSON problem format.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlqual/dd.hpp"
#include "nlqual/expr.hpp"

namespace nlqual {

inline constexpr double kActTol = 1e-9;

enum class Norm { L1, L2, LInf };

inline std::string_view to_string(Norm n) {
  switch (n) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::LInf: return "linf";
  }
  return "?";
}

inline double norm_of(std::span<const double> v, Norm n) {
  double s = 0.0;
  for (double x : v) {
    if (n == Norm::L1) s += std::abs(x);
    else if (n == Norm::L2) s += x * x;
    else s = std::max(s, std::abs(x));
  }
  return n == Norm::L2 ? std::sqrt(s) : s;
}

// A scalar function of x: affine a^T x + b with exact data, or a smooth expression.
struct ScalarFn {
  bool affine = true;
  QVec a;
  Rational b;
  Expr expr;

  static ScalarFn make_affine(QVec a, Rational b) { return ScalarFn{true, std::move(a), std::move(b), {}}; }
  static ScalarFn make_smooth(Expr e) { return ScalarFn{false, {}, Rational(0), std::move(e)}; }

  std::optional<Rational> value(std::span<const Rational> x) const {
    if (affine) return dot(a, x) + b;
    return expr.eval_exact(x);
  }
  double value(std::span<const double> x) const {
    if (!affine) return expr.eval(x);
    double s = b.get_d();
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j].get_d() * x[j];
    return s;
  }
  // Exact gradient; nullopt if not exactly computable or not differentiable at x.
  std::optional<QVec> gradient(std::span<const Rational> x) const {
    if (affine) return a;
    auto d = expr.grad_exact(x);
    if (!d || !d->smooth) return std::nullopt;
    return d->grad;
  }
  DVec gradient(std::span<const double> x) const {
    if (affine) return to_double(a);
    return expr.grad(x).grad;
  }
  ScalarFn negated_fn() const {
    if (affine) return make_affine(nlqual::negated(a), -b);
    return make_smooth(Expr::parse("-(" + expr.text() + ")", expr.dim()));
  }
  std::string describe() const {
    if (!affine) return expr.text();
    std::string s;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (sgn(a[j]) == 0) continue;
      if (!s.empty()) s += " + ";
      s += to_string(a[j]) + "*x" + std::to_string(j + 1);
    }
    if (sgn(b) != 0 || s.empty()) s += (s.empty() ? "" : " + ") + to_string(b);
    return s;
  }
};

enum class OuterKind { PowAbs, PowPlus, Linear, Custom };

inline std::string_view to_string(OuterKind k) {
  switch (k) {
    case OuterKind::PowAbs: return "pow_abs";
    case OuterKind::PowPlus: return "pow_plus";
    case OuterKind::Linear: return "linear";
    case OuterKind::Custom: return "custom";
  }
  return "?";
}

// User-declared 1-D subdifferential data at a breakpoint of a custom outer function.
struct Breakpoint {
  Rational t;
  PolySet regular{1};
  PolySet limiting{1};
  PolySet horizon{1};
  PolySet coderiv0{1};
};

struct OuterFn {
  OuterKind kind = OuterKind::Linear;
  Rational p{1};  // exponent for PowAbs / PowPlus
  Rational c{0};  // slope for Linear
  // Custom: value(t), optional derivative(t), closed domain [lo, hi], breakpoint tables.
  Expr value_expr;
  Expr derivative_expr;
  std::optional<Rational> lo, hi;
  std::vector<Breakpoint> breakpoints;

  static OuterFn pow_abs(Rational p) { return OuterFn{OuterKind::PowAbs, std::move(p), Rational(0), {}, {}, {}, {}, {}}; }
  static OuterFn pow_plus(Rational p) { return OuterFn{OuterKind::PowPlus, std::move(p), Rational(0), {}, {}, {}, {}, {}}; }
  static OuterFn linear(Rational c) { return OuterFn{OuterKind::Linear, Rational(1), std::move(c), {}, {}, {}, {}, {}}; }

  bool in_domain(const Rational& t) const {
    if (kind != OuterKind::Custom) return true;
    return !(lo && t < *lo) && !(hi && t > *hi);
  }
  bool in_domain(double t) const {
    if (kind != OuterKind::Custom) return true;
    return !(lo && t < lo->get_d()) && !(hi && t > hi->get_d());
  }
  const Breakpoint* breakpoint_at(const Rational& t) const {
    for (const auto& b : breakpoints)
      if (b.t == t) return &b;
    return nullptr;
  }

  double operator()(double t) const {
    switch (kind) {
      case OuterKind::PowAbs: return t == 0.0 ? 0.0 : std::pow(std::abs(t), p.get_d());
      case OuterKind::PowPlus: return t <= 0.0 ? 0.0 : std::pow(t, p.get_d());
      case OuterKind::Linear: return c.get_d() * t;
      case OuterKind::Custom:
        if (!in_domain(t)) return std::numeric_limits<double>::infinity();
        return value_expr.eval(std::span<const double>(&t, 1));
    }
    return 0.0;
  }
  // Exact value where representable (nullopt when irrational or outside the domain).
  std::optional<Rational> exact(const Rational& t) const {
    switch (kind) {
      case OuterKind::PowAbs: return sgn(t) == 0 ? std::optional<Rational>(0) : exact_pow(abs(t), p);
      case OuterKind::PowPlus: return sgn(t) <= 0 ? std::optional<Rational>(0) : exact_pow(t, p);
      case OuterKind::Linear: return c * t;
      case OuterKind::Custom:
        if (!in_domain(t)) return std::nullopt;
        return value_expr.eval_exact(std::span<const Rational>(&t, 1));
    }
    return std::nullopt;
  }
  // Derivative at a differentiable point (float).
  double derivative(double t) const {
    switch (kind) {
      case OuterKind::PowAbs: return t == 0.0 ? 0.0 : p.get_d() * std::pow(std::abs(t), p.get_d() - 1.0) * (t > 0 ? 1.0 : -1.0);
      case OuterKind::PowPlus: return t <= 0.0 ? 0.0 : p.get_d() * std::pow(t, p.get_d() - 1.0);
      case OuterKind::Linear: return c.get_d();
      case OuterKind::Custom:
        if (!derivative_expr.empty()) return derivative_expr.eval(std::span<const double>(&t, 1));
        return value_expr.grad(std::span<const double>(&t, 1)).grad[0];
    }
    return 0.0;
  }
  bool separable_builtin() const { return kind == OuterKind::PowAbs || kind == OuterKind::PowPlus; }
};

struct CompositeTerm {
  OuterFn outer;
  ScalarFn inner;
};

struct Omega {
  bool whole = true;
  std::vector<HPolyhedron> pieces;

  bool contains(std::span<const Rational> x) const {
    if (whole) return true;
    for (const auto& p : pieces)
      if (p.contains(x)) return true;
    return false;
  }
  double violation(std::span<const double> x) const {
    if (whole) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pieces) best = std::min(best, p.violation(x));
    return best;
  }
  bool single_polyhedron() const { return whole || pieces.size() == 1; }
};

struct ProblemSpec {
  std::size_t dim = 0;
  std::string name;
  Expr smooth;
  std::vector<CompositeTerm> phi;
  Omega omega;
  std::vector<ScalarFn> ineq;
  std::vector<ScalarFn> eq;
  Norm norm = Norm::L1;
  std::optional<QVec> point;  // optional reference point carried by the file

  std::size_t n() const { return ineq.size(); }
  std::size_t m() const { return eq.size(); }

  bool constraints_affine() const {
    for (const auto& g : ineq)
      if (!g.affine) return false;
    for (const auto& h : eq)
      if (!h.affine) return false;
    return true;
  }

  void check_point(std::size_t len) const {
    if (len != dim) throw Error(ErrorCode::DimMismatch, "point has length " + std::to_string(len) + ", expected " + std::to_string(dim));
  }

  double smooth_value(std::span<const double> x) const { return smooth.eval(x); }
  DVec smooth_gradient(std::span<const double> x) const { return smooth.grad(x).grad; }

  // Sum of composite terms (no indicator); +inf outside an outer domain.
  double psi_value(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : phi) s += t.outer(t.inner.value(x));
    return s;
  }
  double phi_value(std::span<const double> x, double omega_tol = 0.0) const {
    if (omega.violation(x) > omega_tol) return std::numeric_limits<double>::infinity();
    return psi_value(x);
  }
  double objective(std::span<const double> x, double omega_tol = 0.0) const {
    return smooth_value(x) + phi_value(x, omega_tol);
  }
};

// ---------------------------------------------------------------------------
// Active sets and feasibility

struct ActiveSet {
  std::vector<std::size_t> indices;  // 0-based
  bool exact = true;
  bool contains(std::size_t i) const { return std::find(indices.begin(), indices.end(), i) != indices.end(); }
};

inline ActiveSet active_inequalities(const ProblemSpec& P, std::span<const Rational> x) {
  P.check_point(x.size());
  ActiveSet out;
  DVec xd = to_double(x);
  for (std::size_t i = 0; i < P.ineq.size(); ++i) {
    if (auto v = P.ineq[i].value(x)) {
      if (P.ineq[i].affine ? sgn(*v) == 0 : std::abs(v->get_d()) <= kActTol) out.indices.push_back(i);
      if (!P.ineq[i].affine) out.exact = false;
    } else {
      out.exact = false;
      if (std::abs(P.ineq[i].value(xd)) <= kActTol) out.indices.push_back(i);
    }
  }
  return out;
}

inline ActiveSet active_inequalities(const ProblemSpec& P, std::span<const double> x) {
  P.check_point(x.size());
  ActiveSet out;
  out.exact = false;
  for (std::size_t i = 0; i < P.ineq.size(); ++i)
    if (std::abs(P.ineq[i].value(x)) <= kActTol) out.indices.push_back(i);
  return out;
}

struct FeasibilityReport {
  bool feasible = true;
  bool exact = true;
  DVec ineq_residual;  // g_i(x)_+
  DVec eq_residual;    // |h_j(x)|
  double omega_residual = 0.0;
  double max_residual = 0.0;
};

inline FeasibilityReport check_feasible(const ProblemSpec& P, std::span<const Rational> x, double tol = 0.0) {
  P.check_point(x.size());
  FeasibilityReport r;
  DVec xd = to_double(x);
  bool exact_ok = true;
  auto record = [&](std::optional<Rational> v, double fallback, bool plus, DVec& out) {
    if (v) {
      Rational res = plus ? (sgn(*v) > 0 ? *v : Rational(0)) : abs(*v);
      out.push_back(res.get_d());
      if (sgn(res) != 0) exact_ok = false;
    } else {
      r.exact = false;
      out.push_back(plus ? std::max(0.0, fallback) : std::abs(fallback));
    }
  };
  for (const auto& g : P.ineq) {
    auto v = g.value(x);
    record(v, v ? 0.0 : g.value(xd), true, r.ineq_residual);
  }
  for (const auto& h : P.eq) {
    auto v = h.value(x);
    record(v, v ? 0.0 : h.value(xd), false, r.eq_residual);
  }
  if (!P.omega.contains(x)) {
    exact_ok = false;
    r.omega_residual = P.omega.violation(xd);
  }
  for (double v : r.ineq_residual) r.max_residual = std::max(r.max_residual, v);
  for (double v : r.eq_residual) r.max_residual = std::max(r.max_residual, v);
  r.max_residual = std::max(r.max_residual, r.omega_residual);
  r.feasible = r.exact ? (exact_ok || r.max_residual <= tol) : r.max_residual <= std::max(tol, kActTol);
  return r;
}

inline FeasibilityReport check_feasible(const ProblemSpec& P, std::span<const double> x, double tol) {
  P.check_point(x.size());
  FeasibilityReport r;
  r.exact = false;
  for (const auto& g : P.ineq) r.ineq_residual.push_back(std::max(0.0, g.value(x)));
  for (const auto& h : P.eq) r.eq_residual.push_back(std::abs(h.value(x)));
  r.omega_residual = P.omega.violation(x);
  for (double v : r.ineq_residual) r.max_residual = std::max(r.max_residual, v);
  for (double v : r.eq_residual) r.max_residual = std::max(r.max_residual, v);
  r.max_residual = std::max(r.max_residual, r.omega_residual);
  r.feasible = r.max_residual <= tol;
  return r;
}

// Penalty residual ||g(x)_+|| + ||h(x)|| in the chosen norm.
inline double constraint_residual(const ProblemSpec& P, std::span<const double> x, Norm norm) {
  DVec gp, hv;
  for (const auto& g : P.ineq) gp.push_back(std::max(0.0, g.value(x)));
  for (const auto& h : P.eq) hv.push_back(h.value(x));
  return norm_of(gp, norm) + norm_of(hv, norm);
}

// ---------------------------------------------------------------------------
// JSON ingestion

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::SchemaError, where + ": missing field '" + key + "'");
  return j.at(key);
}

inline Rational json_rational(const json& v, const std::string& where) {
  if (v.is_string()) {
    try {
      return parse_rational(v.get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorCode::SchemaError, where + ": bad rational '" + v.get<std::string>() + "'");
    }
  }
  if (v.is_number_integer()) return Rational(v.get<long>());
  if (v.is_number_float()) return Rational(v.get<double>());
  throw Error(ErrorCode::SchemaError, where + ": expected a rational string");
}

inline QVec json_qvec(const json& v, const std::string& where) {
  if (!v.is_array()) throw Error(ErrorCode::SchemaError, where + ": expected an array");
  QVec out;
  for (const auto& e : v) out.push_back(json_rational(e, where));
  return out;
}

inline QVec json_qvec_dim(const json& v, std::size_t dim, const std::string& where) {
  QVec out = json_qvec(v, where);
  if (out.size() != dim)
    throw Error(ErrorCode::DimMismatch, where + ": length " + std::to_string(out.size()) + " but dim is " + std::to_string(dim));
  return out;
}

inline PolySet json_setspec(const json& j, std::size_t dim, const std::string& where) {
  std::string kind = require(j, "kind", where).get<std::string>();
  if (kind == "reals") return PolySet::whole(dim);
  if (kind == "cone") {
    std::vector<QVec> rays, lines;
    if (j.contains("rays"))
      for (const auto& r : j.at("rays")) rays.push_back(json_qvec_dim(r, dim, where + ".rays"));
    if (j.contains("lines"))
      for (const auto& l : j.at("lines")) lines.push_back(json_qvec_dim(l, dim, where + ".lines"));
    return PolySet::cone(dim, std::move(rays), std::move(lines));
  }
  if (kind == "points") {
    std::vector<QVec> pts;
    for (const auto& p : require(j, "pts", where)) pts.push_back(json_qvec_dim(p, dim, where + ".pts"));
    return PolySet::points(dim, pts);
  }
  throw Error(ErrorCode::SchemaError, where + ": unknown set kind '" + kind + "'");
}

inline OuterFn json_outer(const json& j, const std::string& where) {
  std::string kind = require(j, "kind", where).get<std::string>();
  auto exponent = [&]() {
    Rational p = j.contains("p") ? json_rational(j.at("p"), where + ".p") : Rational(1, 2);
    if (sgn(p) <= 0 || p > 1) throw Error(ErrorCode::SchemaError, where + ": exponent p must lie in (0,1]");
    return p;
  };
  if (kind == "pow_abs") return OuterFn::pow_abs(exponent());
  if (kind == "sqrt_abs") return OuterFn::pow_abs(Rational(1, 2));
  if (kind == "pow_plus") return OuterFn::pow_plus(exponent());
  if (kind == "linear") return OuterFn::linear(json_rational(require(j, "c", where), where + ".c"));
  if (kind == "custom") {
    OuterFn f;
    f.kind = OuterKind::Custom;
    try {
      f.value_expr = Expr::parse(require(j, "value", where).get<std::string>(), 1, "t");
      if (j.contains("derivative")) f.derivative_expr = Expr::parse(j.at("derivative").get<std::string>(), 1, "t");
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, where + ": " + e.what());
    }
    if (j.contains("domain")) {
      const auto& d = j.at("domain");
      if (d.contains("lo")) f.lo = json_rational(d.at("lo"), where + ".domain.lo");
      if (d.contains("hi")) f.hi = json_rational(d.at("hi"), where + ".domain.hi");
    }
    if (j.contains("breakpoints"))
      for (const auto& b : j.at("breakpoints")) {
        Breakpoint bp;
        std::string w = where + ".breakpoints";
        bp.t = json_rational(require(b, "t", w), w + ".t");
        bp.regular = json_setspec(require(b, "regular", w), 1, w + ".regular");
        bp.limiting = json_setspec(require(b, "limiting", w), 1, w + ".limiting");
        bp.horizon = json_setspec(require(b, "horizon", w), 1, w + ".horizon");
        bp.coderiv0 = json_setspec(require(b, "coderiv0", w), 1, w + ".coderiv0");
        if (!bp.horizon.is_cone() || !bp.coderiv0.is_cone())
          throw Error(ErrorCode::SchemaError, w + ": horizon and coderiv0 tables must be cones");
        f.breakpoints.push_back(std::move(bp));
      }
    return f;
  }
  throw Error(ErrorCode::SchemaError, where + ": unknown outer kind '" + kind + "'");
}

inline ScalarFn json_scalar(const json& j, std::size_t dim, const std::string& where) {
  std::string kind = require(j, "kind", where).get<std::string>();
  if (kind == "affine") {
    QVec a = json_qvec_dim(require(j, "a", where), dim, where + ".a");
    Rational b = j.contains("b") ? json_rational(j.at("b"), where + ".b") : Rational(0);
    return ScalarFn::make_affine(std::move(a), std::move(b));
  }
  if (kind == "smooth") {
    try {
      return ScalarFn::make_smooth(Expr::parse(require(j, "expr", where).get<std::string>(), dim));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DimMismatch) throw;
      throw Error(ErrorCode::SchemaError, where + ": " + e.what());
    }
  }
  throw Error(ErrorCode::SchemaError, where + ": unknown function kind '" + kind + "'");
}

inline HPolyhedron json_polyhedron(const json& j, std::size_t dim, const std::string& where) {
  HPolyhedron H;
  H.dim = dim;
  const auto& A = require(j, "A", where);
  const auto& b = require(j, "b", where);
  if (!A.is_array() || !b.is_array() || A.size() != b.size())
    throw Error(ErrorCode::SchemaError, where + ": A and b must be arrays of equal length");
  for (std::size_t i = 0; i < A.size(); ++i) {
    H.A.push_back(json_qvec_dim(A[i], dim, where + ".A"));
    H.b.push_back(json_rational(b[i], where + ".b"));
  }
  return H;
}

}  // namespace detail

inline ProblemSpec parse_problem(const nlohmann::json& j) {
  using detail::require;
  ProblemSpec P;
  const auto& dj = require(j, "dim", "problem");
  if (!dj.is_number_integer() || dj.get<long>() <= 0) throw Error(ErrorCode::SchemaError, "problem: dim must be a positive integer");
  P.dim = dj.get<std::size_t>();
  if (j.contains("name")) P.name = j.at("name").get<std::string>();
  try {
    P.smooth = Expr::parse(j.contains("smooth") ? j.at("smooth").get<std::string>() : "0", P.dim);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimMismatch) throw;
    throw Error(ErrorCode::SchemaError, std::string("smooth: ") + e.what());
  }
  if (j.contains("phi"))
    for (std::size_t k = 0; k < j.at("phi").size(); ++k) {
      const auto& t = j.at("phi")[k];
      std::string w = "phi[" + std::to_string(k) + "]";
      P.phi.push_back({detail::json_outer(require(t, "outer", w), w + ".outer"), detail::json_scalar(require(t, "inner", w), P.dim, w + ".inner")});
    }
  if (j.contains("ineq"))
    for (std::size_t k = 0; k < j.at("ineq").size(); ++k) {
      const auto& c = j.at("ineq")[k];
      std::string w = "ineq[" + std::to_string(k) + "]";
      ScalarFn g = detail::json_scalar(c, P.dim, w);
      std::string sense = c.contains("sense") ? c.at("sense").get<std::string>() : "<=";
      if (sense == ">=") g = g.negated_fn();
      else if (sense != "<=") throw Error(ErrorCode::SchemaError, w + ": inequality sense must be <= or >=");
      P.ineq.push_back(std::move(g));
    }
  if (j.contains("eq"))
    for (std::size_t k = 0; k < j.at("eq").size(); ++k) {
      const auto& c = j.at("eq")[k];
      std::string w = "eq[" + std::to_string(k) + "]";
      if (c.contains("sense") && c.at("sense").get<std::string>() != "=")
        throw Error(ErrorCode::SchemaError, w + ": equality sense must be =");
      P.eq.push_back(detail::json_scalar(c, P.dim, w));
    }
  if (j.contains("omega")) {
    const auto& o = j.at("omega");
    std::string kind = require(o, "kind", "omega").get<std::string>();
    if (kind == "polyhedron") {
      P.omega.whole = false;
      P.omega.pieces.push_back(detail::json_polyhedron(o, P.dim, "omega"));
    } else if (kind == "union") {
      P.omega.whole = false;
      const auto& ps = require(o, "pieces", "omega");
      for (std::size_t k = 0; k < ps.size(); ++k) P.omega.pieces.push_back(detail::json_polyhedron(ps[k], P.dim, "omega.pieces[" + std::to_string(k) + "]"));
      if (P.omega.pieces.empty()) throw Error(ErrorCode::SchemaError, "omega: union needs at least one piece");
    } else if (kind != "whole") {
      throw Error(ErrorCode::SchemaError, "omega: unknown kind '" + kind + "'");
    }
  }
  if (j.contains("norm")) {
    std::string n = j.at("norm").get<std::string>();
    if (n == "l1") P.norm = Norm::L1;
    else if (n == "l2") P.norm = Norm::L2;
    else if (n == "linf") P.norm = Norm::LInf;
    else throw Error(ErrorCode::SchemaError, "norm must be l1, l2 or linf");
  }
  if (j.contains("point")) P.point = detail::json_qvec_dim(j.at("point"), P.dim, "point");
  return P;
}

inline ProblemSpec parse_problem_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
  }
  try {
    return parse_problem(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("schema: ") + e.what());
  }
}

inline ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem_text(ss.str());
}

// Comma-separated rationals, e.g. "1,0,1/2".
inline QVec parse_point(const std::string& csv) {
  QVec out;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ',')) out.push_back(parse_rational(item));
  return out;
}

}  // namespace nlqual

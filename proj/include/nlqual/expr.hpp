#pragma once

// Small expression language for smooth oracles:
//   numbers (integer, decimal, p/q via '/'), variables x1..xd (or a single
//   named variable such as t), + - * / ^ (integer exponent), abs, max, min, sqrt.

#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlqual/rational.hpp"

namespace nlqual {

class Expr {
 public:
  enum class Kind { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Abs, Max, Min, Sqrt };

  // Value with forward-mode partials.
  template <class T>
  struct Dual {
    T value;
    std::vector<T> grad;
    bool smooth = true;  // false when a kink (abs/max/min/sqrt at 0) was hit
  };

  Expr() = default;

  static Expr parse(std::string_view text, std::size_t dim, std::string_view single_var = {}) {
    Parser p{text, 0, dim, single_var};
    Expr e;
    e.root_ = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size())
      throw Error(ErrorCode::ParseError, "trailing input in expression '" + std::string(text) + "'");
    e.dim_ = dim;
    e.text_ = std::string(text);
    return e;
  }

  static Expr constant(const Rational& c, std::size_t dim) {
    Expr e;
    e.root_ = std::make_shared<Node>(Node{Kind::Const, c, 0, {}});
    e.dim_ = dim;
    e.text_ = to_string(c);
    return e;
  }

  bool empty() const { return root_ == nullptr; }
  std::size_t dim() const { return dim_; }
  const std::string& text() const { return text_; }

  // Exact value; nullopt when an irrational intermediate (sqrt) appears.
  std::optional<Rational> eval_exact(std::span<const Rational> x) const {
    check_dim(x.size());
    return eval_q(*root_, x);
  }

  double eval(std::span<const double> x) const {
    check_dim(x.size());
    return eval_d(*root_, x);
  }

  std::optional<Dual<Rational>> grad_exact(std::span<const Rational> x) const {
    check_dim(x.size());
    return dual_q(*root_, x);
  }

  Dual<double> grad(std::span<const double> x) const {
    check_dim(x.size());
    return dual_d(*root_, x);
  }

  // True when the expression is free of sqrt, so exact evaluation never fails.
  bool is_rational_function() const { return root_ && rational_only(*root_); }

 private:
  struct Node {
    Kind kind;
    Rational value;
    std::size_t var = 0;
    std::vector<std::shared_ptr<Node>> kids;
  };
  using NodePtr = std::shared_ptr<Node>;

  NodePtr root_;
  std::size_t dim_ = 0;
  std::string text_;

  void check_dim(std::size_t n) const {
    if (!root_) throw Error(ErrorCode::EvalError, "empty expression");
    if (n != dim_) throw Error(ErrorCode::DimMismatch, "point length does not match expression dimension");
  }

  static NodePtr make(Kind k, std::vector<NodePtr> kids) {
    return std::make_shared<Node>(Node{k, Rational(0), 0, std::move(kids)});
  }

  struct Parser {
    std::string_view s;
    std::size_t pos;
    std::size_t dim;
    std::string_view single_var;

    [[noreturn]] void fail(const std::string& msg) const {
      throw Error(ErrorCode::ParseError,
                  msg + " at offset " + std::to_string(pos) + " in '" + std::string(s) + "'");
    }
    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    NodePtr parse_expr() {
      NodePtr lhs = parse_term();
      for (;;) {
        if (eat('+')) lhs = make(Kind::Add, {lhs, parse_term()});
        else if (eat('-')) lhs = make(Kind::Sub, {lhs, parse_term()});
        else return lhs;
      }
    }
    NodePtr parse_term() {
      NodePtr lhs = parse_unary();
      for (;;) {
        if (eat('*')) lhs = make(Kind::Mul, {lhs, parse_unary()});
        else if (eat('/')) lhs = make(Kind::Div, {lhs, parse_unary()});
        else return lhs;
      }
    }
    NodePtr parse_unary() {
      if (eat('-')) return make(Kind::Neg, {parse_unary()});
      if (eat('+')) return parse_unary();
      return parse_power();
    }
    NodePtr parse_power() {
      NodePtr base = parse_primary();
      if (eat('^')) {
        skip_ws();
        bool neg = false;
        if (eat('-')) neg = true;
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) fail("integer exponent expected");
        auto node = std::make_shared<Node>(Node{Kind::Pow, Rational(0), 0, {base}});
        node->value = parse_rational(s.substr(start, pos - start));
        if (neg) node->value = -node->value;
        return node;
      }
      return base;
    }
    NodePtr parse_primary() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of expression");
      char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr e = parse_expr();
        if (!eat(')')) fail("')' expected");
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) ++pos;
        if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
          std::size_t save = pos;
          ++pos;
          if (pos < s.size() && (s[pos] == '-' || s[pos] == '+')) ++pos;
          if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
          } else {
            pos = save;
          }
        }
        auto node = std::make_shared<Node>(Node{Kind::Const, parse_rational(s.substr(start, pos - start)), 0, {}});
        return node;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        std::string_view name = s.substr(start, pos - start);
        if (name == "abs" || name == "sqrt" || name == "max" || name == "min") {
          if (!eat('(')) fail("'(' expected after " + std::string(name));
          std::vector<NodePtr> args{parse_expr()};
          while (eat(',')) args.push_back(parse_expr());
          if (!eat(')')) fail("')' expected");
          if ((name == "abs" || name == "sqrt") && args.size() != 1) fail(std::string(name) + " takes one argument");
          if (args.size() < 1) fail("missing arguments");
          Kind k = name == "abs" ? Kind::Abs : name == "sqrt" ? Kind::Sqrt : name == "max" ? Kind::Max : Kind::Min;
          return make(k, std::move(args));
        }
        if (!single_var.empty() && name == single_var) {
          return std::make_shared<Node>(Node{Kind::Var, Rational(0), 0, {}});
        }
        if (single_var.empty() && name.size() >= 2 && name[0] == 'x') {
          std::size_t idx = 0;
          for (char d : name.substr(1)) {
            if (!std::isdigit(static_cast<unsigned char>(d))) fail("unknown identifier '" + std::string(name) + "'");
            idx = idx * 10 + static_cast<std::size_t>(d - '0');
          }
          if (idx < 1 || idx > dim) {
            throw Error(ErrorCode::DimMismatch, "variable " + std::string(name) + " outside dimension " + std::to_string(dim));
          }
          return std::make_shared<Node>(Node{Kind::Var, Rational(0), idx - 1, {}});
        }
        fail("unknown identifier '" + std::string(name) + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  static bool rational_only(const Node& n) {
    if (n.kind == Kind::Sqrt) return false;
    for (const auto& k : n.kids)
      if (!rational_only(*k)) return false;
    return true;
  }

  static std::optional<Rational> eval_q(const Node& n, std::span<const Rational> x) {
    auto kid = [&](std::size_t i) { return eval_q(*n.kids[i], x); };
    switch (n.kind) {
      case Kind::Const: return n.value;
      case Kind::Var: return x[n.var];
      case Kind::Add: { auto a = kid(0), b = kid(1); if (!a || !b) return std::nullopt; return Rational(*a + *b); }
      case Kind::Sub: { auto a = kid(0), b = kid(1); if (!a || !b) return std::nullopt; return Rational(*a - *b); }
      case Kind::Mul: { auto a = kid(0), b = kid(1); if (!a || !b) return std::nullopt; return Rational(*a * *b); }
      case Kind::Div: {
        auto a = kid(0), b = kid(1);
        if (!a || !b) return std::nullopt;
        if (sgn(*b) == 0) throw Error(ErrorCode::EvalError, "division by zero");
        return Rational(*a / *b);
      }
      case Kind::Neg: { auto a = kid(0); if (!a) return std::nullopt; return Rational(-*a); }
      case Kind::Pow: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        if (sgn(*a) == 0 && sgn(n.value) < 0) throw Error(ErrorCode::EvalError, "zero to a negative power");
        return exact_pow(*a, n.value);
      }
      case Kind::Abs: { auto a = kid(0); if (!a) return std::nullopt; return Rational(abs(*a)); }
      case Kind::Sqrt: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        if (sgn(*a) < 0) throw Error(ErrorCode::EvalError, "sqrt of negative value");
        return exact_pow(*a, Rational(1, 2));
      }
      case Kind::Max:
      case Kind::Min: {
        std::optional<Rational> best;
        for (std::size_t i = 0; i < n.kids.size(); ++i) {
          auto v = kid(i);
          if (!v) return std::nullopt;
          if (!best || (n.kind == Kind::Max ? *v > *best : *v < *best)) best = v;
        }
        return best;
      }
    }
    return std::nullopt;
  }

  static double eval_d(const Node& n, std::span<const double> x) {
    auto kid = [&](std::size_t i) { return eval_d(*n.kids[i], x); };
    switch (n.kind) {
      case Kind::Const: return n.value.get_d();
      case Kind::Var: return x[n.var];
      case Kind::Add: return kid(0) + kid(1);
      case Kind::Sub: return kid(0) - kid(1);
      case Kind::Mul: return kid(0) * kid(1);
      case Kind::Div: return kid(0) / kid(1);
      case Kind::Neg: return -kid(0);
      case Kind::Pow: return std::pow(kid(0), n.value.get_d());
      case Kind::Abs: return std::abs(kid(0));
      case Kind::Sqrt: return std::sqrt(kid(0));
      case Kind::Max:
      case Kind::Min: {
        double best = kid(0);
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          double v = kid(i);
          best = n.kind == Kind::Max ? std::max(best, v) : std::min(best, v);
        }
        return best;
      }
    }
    return 0.0;
  }

  template <class T>
  static Dual<T> lift(const T& v, std::size_t dim) {
    return Dual<T>{v, std::vector<T>(dim, T(0)), true};
  }

  static std::optional<Dual<Rational>> dual_q(const Node& n, std::span<const Rational> x) {
    const std::size_t d = x.size();
    auto kid = [&](std::size_t i) { return dual_q(*n.kids[i], x); };
    switch (n.kind) {
      case Kind::Const: return lift(n.value, d);
      case Kind::Var: {
        auto r = lift(x[n.var], d);
        r.grad[n.var] = 1;
        return r;
      }
      case Kind::Add:
      case Kind::Sub: {
        auto a = kid(0), b = kid(1);
        if (!a || !b) return std::nullopt;
        Rational s = n.kind == Kind::Add ? 1 : -1;
        for (std::size_t i = 0; i < d; ++i) a->grad[i] += s * b->grad[i];
        a->value += s * b->value;
        a->smooth = a->smooth && b->smooth;
        return a;
      }
      case Kind::Mul: {
        auto a = kid(0), b = kid(1);
        if (!a || !b) return std::nullopt;
        Dual<Rational> r = lift(Rational(a->value * b->value), d);
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = a->grad[i] * b->value + a->value * b->grad[i];
        r.smooth = a->smooth && b->smooth;
        return r;
      }
      case Kind::Div: {
        auto a = kid(0), b = kid(1);
        if (!a || !b) return std::nullopt;
        if (sgn(b->value) == 0) throw Error(ErrorCode::EvalError, "division by zero");
        Dual<Rational> r = lift(Rational(a->value / b->value), d);
        Rational b2 = b->value * b->value;
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = (a->grad[i] * b->value - a->value * b->grad[i]) / b2;
        r.smooth = a->smooth && b->smooth;
        return r;
      }
      case Kind::Neg: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        a->value = -a->value;
        for (auto& g : a->grad) g = -g;
        return a;
      }
      case Kind::Pow: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        if (sgn(a->value) == 0 && sgn(n.value) < 0) throw Error(ErrorCode::EvalError, "zero to a negative power");
        auto v = exact_pow(a->value, n.value);
        auto dv = sgn(n.value) == 0 ? std::optional<Rational>(0) : exact_pow(a->value, Rational(n.value - 1));
        if (!v || !dv) return std::nullopt;
        Dual<Rational> r = lift(*v, d);
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = n.value * *dv * a->grad[i];
        r.smooth = a->smooth;
        return r;
      }
      case Kind::Abs: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        int s = sgn(a->value);
        if (s == 0) a->smooth = false;
        if (s < 0) {
          a->value = -a->value;
          for (auto& g : a->grad) g = -g;
        }
        return a;
      }
      case Kind::Sqrt: {
        auto a = kid(0);
        if (!a) return std::nullopt;
        if (sgn(a->value) < 0) throw Error(ErrorCode::EvalError, "sqrt of negative value");
        auto v = exact_pow(a->value, Rational(1, 2));
        if (!v) return std::nullopt;
        Dual<Rational> r = lift(*v, d);
        if (sgn(*v) == 0) {
          r.smooth = false;
          return r;
        }
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = a->grad[i] / (2 * *v);
        r.smooth = a->smooth;
        return r;
      }
      case Kind::Max:
      case Kind::Min: {
        std::optional<Dual<Rational>> best;
        bool tie = false;
        bool smooth = true;
        for (std::size_t i = 0; i < n.kids.size(); ++i) {
          auto v = kid(i);
          if (!v) return std::nullopt;
          smooth = smooth && v->smooth;
          if (!best) {
            best = std::move(v);
            continue;
          }
          int c = cmp(v->value, best->value);
          if (c == 0) tie = true;
          if ((n.kind == Kind::Max && c > 0) || (n.kind == Kind::Min && c < 0)) {
            best = std::move(v);
            tie = false;
          }
        }
        best->smooth = smooth && !tie;
        return best;
      }
    }
    return std::nullopt;
  }

  static Dual<double> dual_d(const Node& n, std::span<const double> x) {
    const std::size_t d = x.size();
    auto kid = [&](std::size_t i) { return dual_d(*n.kids[i], x); };
    switch (n.kind) {
      case Kind::Const: return lift(n.value.get_d(), d);
      case Kind::Var: {
        auto r = lift(x[n.var], d);
        r.grad[n.var] = 1.0;
        return r;
      }
      case Kind::Add:
      case Kind::Sub: {
        auto a = kid(0), b = kid(1);
        double s = n.kind == Kind::Add ? 1.0 : -1.0;
        for (std::size_t i = 0; i < d; ++i) a.grad[i] += s * b.grad[i];
        a.value += s * b.value;
        a.smooth = a.smooth && b.smooth;
        return a;
      }
      case Kind::Mul: {
        auto a = kid(0), b = kid(1);
        auto r = lift(a.value * b.value, d);
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        r.smooth = a.smooth && b.smooth;
        return r;
      }
      case Kind::Div: {
        auto a = kid(0), b = kid(1);
        auto r = lift(a.value / b.value, d);
        for (std::size_t i = 0; i < d; ++i)
          r.grad[i] = (a.grad[i] * b.value - a.value * b.grad[i]) / (b.value * b.value);
        r.smooth = a.smooth && b.smooth;
        return r;
      }
      case Kind::Neg: {
        auto a = kid(0);
        a.value = -a.value;
        for (auto& g : a.grad) g = -g;
        return a;
      }
      case Kind::Pow: {
        auto a = kid(0);
        double p = n.value.get_d();
        auto r = lift(std::pow(a.value, p), d);
        double dv = p == 0.0 ? 0.0 : p * std::pow(a.value, p - 1.0);
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = dv * a.grad[i];
        r.smooth = a.smooth;
        return r;
      }
      case Kind::Abs: {
        auto a = kid(0);
        if (a.value == 0.0) a.smooth = false;
        if (a.value < 0.0) {
          a.value = -a.value;
          for (auto& g : a.grad) g = -g;
        }
        return a;
      }
      case Kind::Sqrt: {
        auto a = kid(0);
        double v = std::sqrt(a.value);
        auto r = lift(v, d);
        if (v == 0.0) {
          r.smooth = false;
          return r;
        }
        for (std::size_t i = 0; i < d; ++i) r.grad[i] = a.grad[i] / (2.0 * v);
        r.smooth = a.smooth;
        return r;
      }
      case Kind::Max:
      case Kind::Min: {
        Dual<double> best = kid(0);
        bool tie = false;
        bool smooth = best.smooth;
        for (std::size_t i = 1; i < n.kids.size(); ++i) {
          auto v = kid(i);
          smooth = smooth && v.smooth;
          if (v.value == best.value) tie = true;
          if ((n.kind == Kind::Max && v.value > best.value) || (n.kind == Kind::Min && v.value < best.value)) {
            best = std::move(v);
            tie = false;
          }
        }
        best.smooth = smooth && !tie;
        return best;
      }
    }
    return lift(0.0, d);
  }
};

}  // namespace nlqual

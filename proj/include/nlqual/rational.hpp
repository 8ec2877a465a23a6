#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlqual/error.hpp"

namespace nlqual {

using Rational = mpq_class;
using QVec = std::vector<Rational>;
using QMat = std::vector<QVec>;
using DVec = std::vector<double>;

namespace detail {

inline mpz_class parse_integer(std::string_view s) {
  if (s.empty()) throw Error(ErrorCode::ParseError, "empty integer");
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) throw Error(ErrorCode::ParseError, "bad integer '" + std::string(s) + "'");
  for (std::size_t k = i; k < s.size(); ++k)
    if (!std::isdigit(static_cast<unsigned char>(s[k])))
      throw Error(ErrorCode::ParseError, "bad integer '" + std::string(s) + "'");
  std::string body(s.substr(s[0] == '+' ? 1 : 0));
  return mpz_class(body, 10);
}

// Decimal literal such as "-1.25e-3", read exactly.
inline Rational parse_decimal(std::string_view s) {
  std::string mant(s);
  long exp10 = 0;
  if (auto e = mant.find_first_of("eE"); e != std::string::npos) {
    std::string ex = mant.substr(e + 1);
    mant.resize(e);
    exp10 = static_cast<long>(parse_integer(ex).get_si());
  }
  bool neg = false;
  if (!mant.empty() && (mant[0] == '-' || mant[0] == '+')) {
    neg = mant[0] == '-';
    mant.erase(0, 1);
  }
  std::string digits;
  long frac = 0;
  bool dot = false;
  for (char c : mant) {
    if (c == '.') {
      if (dot) throw Error(ErrorCode::ParseError, "bad decimal '" + std::string(s) + "'");
      dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
      if (dot) ++frac;
    } else {
      throw Error(ErrorCode::ParseError, "bad decimal '" + std::string(s) + "'");
    }
  }
  if (digits.empty()) throw Error(ErrorCode::ParseError, "bad decimal '" + std::string(s) + "'");
  mpz_class num(digits, 10);
  long shift = exp10 - frac;
  mpz_class pow10;
  mpz_ui_pow_ui(pow10.get_mpz_t(), 10, static_cast<unsigned long>(shift < 0 ? -shift : shift));
  Rational r = shift >= 0 ? Rational(num * pow10) : Rational(num, pow10);
  r.canonicalize();
  return neg ? Rational(-r) : r;
}

}  // namespace detail

// Accepts "p/q", integers and decimal literals.
inline Rational parse_rational(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) throw Error(ErrorCode::ParseError, "empty rational");
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    mpz_class num = detail::parse_integer(s.substr(0, slash));
    mpz_class den = detail::parse_integer(s.substr(slash + 1));
    if (den == 0) throw Error(ErrorCode::ParseError, "zero denominator in '" + std::string(s) + "'");
    Rational r(num, den);
    r.canonicalize();
    return r;
  }
  if (s.find_first_of(".eE") != std::string_view::npos) return detail::parse_decimal(s);
  return Rational(detail::parse_integer(s));
}

inline std::string to_string(const Rational& r) {
  Rational c = r;
  c.canonicalize();
  return c.get_str();
}

inline double to_double(const Rational& r) { return r.get_d(); }

inline DVec to_double(std::span<const Rational> v) {
  DVec out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](const Rational& r) { return r.get_d(); });
  return out;
}

// Doubles are dyadic rationals; the conversion is exact.
inline QVec to_rational(std::span<const double> v) {
  QVec out;
  out.reserve(v.size());
  for (double d : v) {
    if (!std::isfinite(d)) throw Error(ErrorCode::DomainError, "non-finite coordinate");
    out.emplace_back(d);
  }
  return out;
}

inline int sign(const Rational& r) { return sgn(r); }

inline Rational dot(std::span<const Rational> a, std::span<const Rational> b) {
  Rational s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool is_zero(std::span<const Rational> v) {
  return std::all_of(v.begin(), v.end(), [](const Rational& r) { return sgn(r) == 0; });
}

inline QVec scaled(std::span<const Rational> v, const Rational& s) {
  QVec out(v.begin(), v.end());
  for (auto& r : out) r *= s;
  return out;
}

inline QVec negated(std::span<const Rational> v) { return scaled(v, Rational(-1)); }

inline QVec added(std::span<const Rational> a, std::span<const Rational> b) {
  QVec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline QVec unit_vector(std::size_t dim, std::size_t k) {
  QVec e(dim, Rational(0));
  e[k] = 1;
  return e;
}

// Rescale to the primitive integer vector with the same direction.
inline QVec primitive(std::span<const Rational> v) {
  mpz_class l = 1;
  for (const auto& r : v)
    if (sgn(r) != 0) mpz_lcm(l.get_mpz_t(), l.get_mpz_t(), r.get_den_mpz_t());
  mpz_class g = 0;
  QVec out(v.size());
  std::vector<mpz_class> ints(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    ints[i] = v[i].get_num() * (l / v[i].get_den());
    mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), ints[i].get_mpz_t());
  }
  if (g == 0) return QVec(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = Rational(ints[i] / g);
  return out;
}

// Exact base^(num/den) when the result is rational; nullopt otherwise.
inline std::optional<Rational> exact_pow(const Rational& base, const Rational& exponent) {
  if (sgn(base) == 0) {
    if (sgn(exponent) > 0) return Rational(0);
    return std::nullopt;
  }
  const mpz_class& en = exponent.get_num();
  const mpz_class& ed = exponent.get_den();
  if (!en.fits_slong_p() || !ed.fits_ulong_p()) return std::nullopt;
  long e_num = en.get_si();
  unsigned long e_den = ed.get_ui();
  Rational b = base;
  if (sgn(b) < 0) {
    if (e_den % 2 == 0) return std::nullopt;
  }
  mpz_class rn, rd;
  mpz_class an = abs(b.get_num());
  mpz_class ad = b.get_den();
  if (mpz_root(rn.get_mpz_t(), an.get_mpz_t(), e_den) == 0) return std::nullopt;
  if (mpz_root(rd.get_mpz_t(), ad.get_mpz_t(), e_den) == 0) return std::nullopt;
  Rational root(rn, rd);
  if (sgn(b) < 0) root = -root;
  unsigned long k = static_cast<unsigned long>(e_num < 0 ? -e_num : e_num);
  mpz_class pn, pd;
  mpz_pow_ui(pn.get_mpz_t(), root.get_num_mpz_t(), k);
  mpz_pow_ui(pd.get_mpz_t(), root.get_den_mpz_t(), k);
  Rational out(pn, pd);
  if (e_num < 0) out = 1 / out;
  out.canonicalize();
  return out;
}

inline bool lex_less(std::span<const Rational> a, std::span<const Rational> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace nlqual

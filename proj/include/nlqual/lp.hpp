#pragma once

// Exact rational simplex (two phases, Bland's rule). Every answer carries a
// certificate that can be replayed by substitution:
//   OPTIMAL     primal x and dual w with w_le >= 0, w^T A >= c (= c on free
//               columns) and w^T b = c^T x;
//   INFEASIBLE  Farkas w with w_le >= 0, w^T A >= 0 (= 0 on free columns)
//               and w^T b < 0;
//   UNBOUNDED   primal x and a ray r with A_le r <= 0, A_eq r = 0, c^T r > 0.

#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "nlqual/rational.hpp"

namespace nlqual {

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline std::string_view to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "OPTIMAL";
    case LpStatus::Infeasible: return "INFEASIBLE";
    case LpStatus::Unbounded: return "UNBOUNDED";
  }
  return "?";
}

// maximize objective^T x  s.t.  A_le x <= b_le, A_eq x = b_eq,
// x_j >= 0 unless free[j]. An empty objective means pure feasibility.
struct LinearProgram {
  std::size_t num_vars = 0;
  std::vector<bool> free;
  QMat A_le;
  QVec b_le;
  QMat A_eq;
  QVec b_eq;
  QVec objective;

  explicit LinearProgram(std::size_t n = 0, bool all_free = false) : num_vars(n), free(n, all_free) {}

  std::size_t add_var(bool is_free) {
    free.push_back(is_free);
    for (auto& r : A_le) r.emplace_back(0);
    for (auto& r : A_eq) r.emplace_back(0);
    if (!objective.empty()) objective.emplace_back(0);
    return num_vars++;
  }
  void add_le(QVec row, Rational rhs) {
    row.resize(num_vars, Rational(0));
    A_le.push_back(std::move(row));
    b_le.push_back(std::move(rhs));
  }
  void add_ge(QVec row, Rational rhs) {
    for (auto& r : row) r = -r;
    add_le(std::move(row), Rational(-rhs));
  }
  void add_eq(QVec row, Rational rhs) {
    row.resize(num_vars, Rational(0));
    A_eq.push_back(std::move(row));
    b_eq.push_back(std::move(rhs));
  }
};

struct LpCertificate {
  LpStatus status = LpStatus::Infeasible;
  QVec x;          // primal point (OPTIMAL / UNBOUNDED)
  Rational value;  // objective at x
  QVec dual_le;    // optimal dual or Farkas multipliers
  QVec dual_eq;
  QVec ray;        // UNBOUNDED only
  std::size_t pivots = 0;

  bool feasible() const { return status != LpStatus::Infeasible; }
};

inline std::size_t lp_pivot_limit() {
  if (const char* env = std::getenv("NLQUAL_LP_PIVOT_LIMIT")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return 1000000;
}

namespace detail {

class Tableau {
 public:
  // Standard form: min cost^T z, M z = r (r >= 0), z >= 0, with one artificial
  // per row appended after the structural columns.
  Tableau(const QMat& M, const QVec& r, std::size_t pivot_limit)
      : rows_(M.size()), cols_(M.empty() ? 0 : M[0].size()), limit_(pivot_limit) {
    total_ = cols_ + rows_;
    t_.assign(rows_, QVec(total_ + 1, Rational(0)));
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) t_[i][j] = M[i][j];
      t_[i][cols_ + i] = 1;
      t_[i][total_] = r[i];
    }
    basis_.resize(rows_);
    for (std::size_t i = 0; i < rows_; ++i) basis_[i] = cols_ + i;
  }

  // Returns false if unbounded; `entering_unbounded` receives the column.
  bool optimize(const QVec& cost, bool allow_artificials, std::size_t& entering_unbounded) {
    reset_costs(cost);
    for (;;) {
      std::size_t enter = total_;
      std::size_t limit = allow_artificials ? total_ : cols_;
      for (std::size_t j = 0; j < limit; ++j) {
        if (sgn(d_[j]) < 0) {
          enter = j;
          break;
        }
      }
      if (enter == total_) return true;
      std::size_t leave = rows_;
      Rational best;
      for (std::size_t i = 0; i < rows_; ++i) {
        if (sgn(t_[i][enter]) <= 0) continue;
        Rational ratio = t_[i][total_] / t_[i][enter];
        if (leave == rows_ || ratio < best || (ratio == best && basis_[i] < basis_[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave == rows_) {
        entering_unbounded = enter;
        return false;
      }
      pivot(leave, enter);
    }
  }

  void pivot(std::size_t row, std::size_t col) {
    if (++pivots_ > limit_) throw Error(ErrorCode::PivotLimit, "simplex pivot limit exceeded");
    Rational p = t_[row][col];
    for (auto& v : t_[row]) v /= p;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (i == row || sgn(t_[i][col]) == 0) continue;
      Rational f = t_[i][col];
      for (std::size_t j = 0; j <= total_; ++j)
        if (sgn(t_[row][j]) != 0) t_[i][j] -= f * t_[row][j];
    }
    if (sgn(d_[col]) != 0) {
      Rational f = d_[col];
      for (std::size_t j = 0; j <= total_; ++j)
        if (sgn(t_[row][j]) != 0) d_[j] -= f * t_[row][j];
    }
    basis_[row] = col;
  }

  // Pivot zero-level artificials out of the basis where a structural column allows.
  void expel_artificials() {
    for (std::size_t i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) continue;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (sgn(t_[i][j]) != 0) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  // y = c_B^T B^{-1}; B^{-1} sits in the artificial block.
  QVec duals(const QVec& cost) const {
    QVec y(rows_, Rational(0));
    for (std::size_t i = 0; i < rows_; ++i) {
      const Rational& cb = cost[basis_[i]];
      if (sgn(cb) == 0) continue;
      for (std::size_t k = 0; k < rows_; ++k) y[k] += cb * t_[i][cols_ + k];
    }
    return y;
  }

  QVec solution() const {
    QVec z(total_, Rational(0));
    for (std::size_t i = 0; i < rows_; ++i) z[basis_[i]] = t_[i][total_];
    return z;
  }

  Rational objective_value() const { return -d_[total_]; }
  const QVec& column_in_row(std::size_t i) const { return t_[i]; }
  std::size_t basic(std::size_t i) const { return basis_[i]; }
  std::size_t rows() const { return rows_; }
  std::size_t structural_cols() const { return cols_; }
  std::size_t pivots() const { return pivots_; }

 private:
  void reset_costs(const QVec& cost) {
    d_.assign(total_ + 1, Rational(0));
    for (std::size_t j = 0; j < total_; ++j) d_[j] = cost[j];
    for (std::size_t i = 0; i < rows_; ++i) {
      const Rational& cb = cost[basis_[i]];
      if (sgn(cb) == 0) continue;
      for (std::size_t j = 0; j <= total_; ++j) d_[j] -= cb * t_[i][j];
    }
  }

  std::size_t rows_, cols_, total_ = 0, limit_;
  std::size_t pivots_ = 0;
  QMat t_;
  QVec d_;
  std::vector<std::size_t> basis_;
};

}  // namespace detail

inline LpCertificate lp_solve(const LinearProgram& lp) {
  const std::size_t n = lp.num_vars;
  const std::size_t mle = lp.A_le.size();
  const std::size_t meq = lp.A_eq.size();
  const std::size_t m = mle + meq;

  // Column layout: for each original var a '+' column, plus a '-' column for
  // free vars; then one slack per <= row.
  std::vector<std::size_t> pos_col(n), neg_col(n, SIZE_MAX);
  std::size_t ncols = 0;
  for (std::size_t j = 0; j < n; ++j) {
    pos_col[j] = ncols++;
    if (lp.free[j]) neg_col[j] = ncols++;
  }
  const std::size_t slack0 = ncols;
  ncols += mle;

  QMat M(m, QVec(ncols, Rational(0)));
  QVec r(m);
  std::vector<int> flip(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    const QVec& row = i < mle ? lp.A_le[i] : lp.A_eq[i - mle];
    const Rational& rhs = i < mle ? lp.b_le[i] : lp.b_eq[i - mle];
    if (row.size() != n) throw Error(ErrorCode::DimMismatch, "LP row length mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      M[i][pos_col[j]] = row[j];
      if (neg_col[j] != SIZE_MAX) M[i][neg_col[j]] = -row[j];
    }
    if (i < mle) M[i][slack0 + i] = 1;
    r[i] = rhs;
    if (sgn(rhs) < 0) {
      flip[i] = -1;
      for (auto& v : M[i]) v = -v;
      r[i] = -r[i];
    }
  }

  LpCertificate cert;
  detail::Tableau tab(M, r, lp_pivot_limit());
  const std::size_t total = ncols + m;

  auto to_original = [&](const QVec& z) {
    QVec x(n, Rational(0));
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = z[pos_col[j]];
      if (neg_col[j] != SIZE_MAX) x[j] -= z[neg_col[j]];
    }
    return x;
  };
  auto split_duals = [&](const QVec& y, int sgn_out) {
    cert.dual_le.assign(mle, Rational(0));
    cert.dual_eq.assign(meq, Rational(0));
    for (std::size_t i = 0; i < m; ++i) {
      Rational w = y[i] * flip[i] * sgn_out;
      if (i < mle) cert.dual_le[i] = w;
      else cert.dual_eq[i - mle] = w;
    }
  };

  QVec phase1(total, Rational(0));
  for (std::size_t k = ncols; k < total; ++k) phase1[k] = 1;
  std::size_t unb = 0;
  tab.optimize(phase1, false, unb);
  if (sgn(tab.objective_value()) > 0) {
    cert.status = LpStatus::Infeasible;
    split_duals(tab.duals(phase1), -1);
    cert.pivots = tab.pivots();
    return cert;
  }
  tab.expel_artificials();

  QVec phase2(total, Rational(0));
  if (!lp.objective.empty()) {
    if (lp.objective.size() != n) throw Error(ErrorCode::DimMismatch, "LP objective length mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      phase2[pos_col[j]] = -lp.objective[j];
      if (neg_col[j] != SIZE_MAX) phase2[neg_col[j]] = lp.objective[j];
    }
  }
  bool bounded = tab.optimize(phase2, false, unb);
  QVec z = tab.solution();
  cert.x = to_original(z);
  cert.value = 0;
  if (!lp.objective.empty()) cert.value = dot(lp.objective, cert.x);
  cert.pivots = tab.pivots();
  if (!bounded) {
    cert.status = LpStatus::Unbounded;
    QVec dir(total, Rational(0));
    dir[unb] = 1;
    for (std::size_t i = 0; i < tab.rows(); ++i) dir[tab.basic(i)] -= tab.column_in_row(i)[unb];
    cert.ray = to_original(dir);
    return cert;
  }
  cert.status = LpStatus::Optimal;
  split_duals(tab.duals(phase2), -1);
  return cert;
}

// Dense entry point: free variables, maximize c^T x.
inline LpCertificate lp_solve(const QVec& c, const QMat& A_le, const QVec& b_le, const QMat& A_eq,
                              const QVec& b_eq) {
  std::size_t n = c.size();
  if (n == 0 && !A_le.empty()) n = A_le[0].size();
  if (n == 0 && !A_eq.empty()) n = A_eq[0].size();
  LinearProgram lp(n, true);
  lp.A_le = A_le;
  lp.b_le = b_le;
  lp.A_eq = A_eq;
  lp.b_eq = b_eq;
  lp.objective = c;
  return lp_solve(lp);
}

// Exact replay of a certificate against the LP data.
inline bool verify_certificate(const LinearProgram& lp, const LpCertificate& cert) {
  const std::size_t n = lp.num_vars;
  auto primal_ok = [&](const QVec& x) {
    if (x.size() != n) return false;
    for (std::size_t j = 0; j < n; ++j)
      if (!lp.free[j] && sgn(x[j]) < 0) return false;
    for (std::size_t i = 0; i < lp.A_le.size(); ++i)
      if (dot(lp.A_le[i], x) > lp.b_le[i]) return false;
    for (std::size_t i = 0; i < lp.A_eq.size(); ++i)
      if (dot(lp.A_eq[i], x) != lp.b_eq[i]) return false;
    return true;
  };
  // w^T A compared against `target` column-wise; returns w^T b.
  auto dual_ok = [&](const QVec* target, Rational& wb) {
    if (cert.dual_le.size() != lp.A_le.size() || cert.dual_eq.size() != lp.A_eq.size()) return false;
    for (const auto& w : cert.dual_le)
      if (sgn(w) < 0) return false;
    for (std::size_t j = 0; j < n; ++j) {
      Rational s = 0;
      for (std::size_t i = 0; i < lp.A_le.size(); ++i) s += cert.dual_le[i] * lp.A_le[i][j];
      for (std::size_t i = 0; i < lp.A_eq.size(); ++i) s += cert.dual_eq[i] * lp.A_eq[i][j];
      Rational t = target ? (*target)[j] : Rational(0);
      if (lp.free[j] ? s != t : s < t) return false;
    }
    wb = dot(cert.dual_le, lp.b_le) + dot(cert.dual_eq, lp.b_eq);
    return true;
  };
  switch (cert.status) {
    case LpStatus::Infeasible: {
      Rational wb;
      return dual_ok(nullptr, wb) && sgn(wb) < 0;
    }
    case LpStatus::Optimal: {
      if (!primal_ok(cert.x)) return false;
      if (lp.objective.empty()) return true;
      Rational wb;
      return dual_ok(&lp.objective, wb) && wb == dot(lp.objective, cert.x);
    }
    case LpStatus::Unbounded: {
      if (!primal_ok(cert.x) || cert.ray.size() != n || lp.objective.empty()) return false;
      for (std::size_t j = 0; j < n; ++j)
        if (!lp.free[j] && sgn(cert.ray[j]) < 0) return false;
      for (const auto& row : lp.A_le)
        if (sgn(dot(row, cert.ray)) > 0) return false;
      for (const auto& row : lp.A_eq)
        if (sgn(dot(row, cert.ray)) != 0) return false;
      return sgn(dot(lp.objective, cert.ray)) > 0;
    }
  }
  return false;
}

}  // namespace nlqual

#pragma once

// Seeded generators shared by the unit and acceptance suites.

#include <json.hpp>

#include <string>
#include <vector>

#include "nlqual/nlqual.hpp"

namespace nlqual::testing {

// Affine constraints active (mostly) at an integer point with several zero coordinates,
// plus coordinate bridge terms |x_k|^p. Some inequalities repeat an earlier row negated.
inline ProblemSpec random_affine_instance(std::uint64_t seed, std::size_t index) {
  auto rng = stream_rng(seed, 0x9e3, index);
  auto U = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int d = U(2, 6);
  int n = U(0, 3), m = U(0, 2);
  if (n + m == 0) n = 1;
  std::vector<int> xs(d);
  for (auto& v : xs) v = U(0, 1) ? 0 : U(-1, 1);

  nlohmann::json j;
  j["dim"] = d;
  j["ineq"] = nlohmann::json::array();
  j["eq"] = nlohmann::json::array();
  const char* exps[] = {"1/2", "1/3", "2/3", "1"};
  for (int k = 0; k < d; ++k) {
    std::vector<std::string> a(d, "0");
    a[k] = "1";
    j["phi"].push_back({{"outer", {{"kind", "pow_abs"}, {"p", exps[U(0, 3)]}}}, {"inner", {{"kind", "affine"}, {"a", a}}}});
  }
  auto strs = [](const std::vector<int>& r) {
    std::vector<std::string> a;
    for (int v : r) a.push_back(std::to_string(v));
    return a;
  };
  auto at_x = [&](const std::vector<int>& r) {
    int t = 0;
    for (int k = 0; k < d; ++k) t += r[k] * xs[k];
    return t;
  };
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < n; ++i) {
    std::vector<int> r(d);
    for (auto& v : r) v = U(0, 2) ? U(-2, 2) : 0;
    if (i > 0 && U(0, 3) == 0) {
      r = rows[U(0, static_cast<int>(rows.size()) - 1)];
      for (auto& v : r) v = -v;
    }
    rows.push_back(r);
    int slack = U(0, 2) ? 0 : U(1, 2);
    j["ineq"].push_back({{"kind", "affine"}, {"a", strs(r)}, {"b", std::to_string(-at_x(r) - slack)}});
  }
  for (int i = 0; i < m; ++i) {
    std::vector<int> r(d);
    for (auto& v : r) v = U(0, 2) ? U(-2, 2) : 0;
    j["eq"].push_back({{"kind", "affine"}, {"a", strs(r)}, {"b", std::to_string(-at_x(r))}});
  }
  j["point"] = strs(xs);
  return parse_problem(j);
}

inline ProblemSpec load_named(const std::string& name) { return load_problem(std::string(NLQUAL_PROBLEMS_DIR) + "/" + name + ".json"); }

}  // namespace nlqual::testing

#pragma once

// JSON serialization of sets, bundles and reports. Rationals are written as "p/q" strings.

#include <json.hpp>

#include <cstdint>
#include <string>

#include "nlqual/kkt.hpp"
#include "nlqual/proxsolve.hpp"

namespace nlqual {

using nlohmann::json;

inline json to_json(std::span<const Rational> v) {
  json a = json::array();
  for (const auto& r : v) a.push_back(to_string(r));
  return a;
}

inline json to_json(std::span<const double> v) {
  json a = json::array();
  for (double r : v) a.push_back(r);
  return a;
}

inline json vecs_json(const std::vector<QVec>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

// Mirrors the SetSpec of the problem format; unions become {"kind": "union", "pieces": [...]}.
inline json to_json(const PolySet& S) {
  if (S.is_whole()) return {{"kind", "reals"}};
  if (S.is_empty()) return {{"kind", "empty"}};
  const auto& ps = S.pieces();
  if (ps.size() == 1 && ps[0].points.size() == 1 && is_zero(ps[0].points[0]))
    return {{"kind", "cone"}, {"rays", vecs_json(ps[0].rays)}, {"lines", vecs_json(ps[0].lines)}};
  bool all_points = true;
  for (const auto& p : ps) all_points = all_points && p.points.size() == 1 && p.rays.empty() && p.lines.empty();
  if (all_points) {
    std::vector<QVec> pts;
    for (const auto& p : ps) pts.push_back(p.points[0]);
    return {{"kind", "points"}, {"pts", vecs_json(pts)}};
  }
  json pieces = json::array();
  for (const auto& p : ps) pieces.push_back({{"points", vecs_json(p.points)}, {"rays", vecs_json(p.rays)}, {"lines", vecs_json(p.lines)}});
  return {{"kind", "union"}, {"pieces", pieces}};
}

inline json to_json(const SubdiffBundle& b) {
  return {{"regular", {{"set", to_json(b.regular)}, {"exactness", to_string(b.regular_ex)}}},
          {"limiting", {{"set", to_json(b.limiting)}, {"exactness", to_string(b.limiting_ex)}}},
          {"horizon", {{"set", to_json(b.horizon)}, {"exactness", to_string(b.horizon_ex)}}},
          {"coderiv0", {{"set", to_json(b.coderiv0)}, {"exactness", to_string(b.coderiv0_ex)}}}};
}

inline json to_json(const LpCertificate& c) {
  json j = {{"status", to_string(c.status)}, {"pivots", c.pivots}};
  if (c.status == LpStatus::Infeasible) {
    j["farkas_le"] = to_json(c.dual_le);
    j["farkas_eq"] = to_json(c.dual_eq);
  } else {
    j["x"] = to_json(c.x);
  }
  return j;
}

inline json to_json(const QualReport& r) {
  json j = {{"condition", to_string(r.condition)}, {"verdict", to_string(r.verdict)}, {"regime", to_string(r.regime)},
            {"verified", r.verified},           {"patterns", r.patterns},           {"lps", r.lps}};
  if (r.lambda) j["lambda"] = to_json(*r.lambda);
  if (r.mu) j["mu"] = to_json(*r.mu);
  if (r.direction) j["direction"] = to_json(*r.direction);
  if (!r.ladder.empty()) {
    json l = json::array();
    for (std::size_t k = 0; k < r.ladder.size(); ++k) l.push_back({{"radius", r.radii[k]}, {"point", to_json(r.ladder[k])}});
    j["ladder"] = l;
  }
  if (r.probe) j["probe"] = to_json(*r.probe);
  if (r.cone_witness) j["cone_witness"] = to_json(*r.cone_witness);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline json to_json(const KktReport& r) {
  json j = {{"status", to_string(r.status)}, {"exact", r.exact}, {"set_exactness", to_string(r.set_exactness)}};
  if (r.multipliers) j["multipliers"] = {{"lambda", to_json(r.multipliers->lambda)}, {"mu", to_json(r.multipliers->mu)}};
  if (!r.exact) j["residual"] = r.residual;
  json certs = json::array();
  for (const auto& c : r.certificates) certs.push_back(to_json(c));
  j["certificates"] = certs;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline json to_json(const FritzJohnReport& r) {
  json j = {{"case_i", r.case_i}, {"case_ii", r.case_ii}, {"note", r.note}};
  if (r.abnormal) j["abnormal"] = {{"lambda", to_json(r.abnormal->lambda)}, {"mu", to_json(r.abnormal->mu)}};
  if (r.normal) j["normal"] = {{"lambda", to_json(r.normal->lambda)}, {"mu", to_json(r.normal->mu)}};
  return j;
}

inline json to_json(const ErrorBoundEstimate& e) {
  json rows = json::array();
  for (std::size_t k = 0; k < e.radii.size(); ++k) rows.push_back({{"radius", e.radii[k]}, {"max_ratio", e.max_ratio[k]}, {"samples", e.counted[k]}});
  json j = {{"verdict", to_string(e.verdict)}, {"kappa_hat", e.kappa_hat}, {"delta", e.delta}, {"table", rows},
            {"projection_failures", e.projection_failures}};
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

inline json to_json(const ExactnessRecord& r) {
  json j = {{"rho", r.rho}, {"holds", r.holds}, {"radius", r.radius}, {"tested", r.tested}, {"probes", r.probes}, {"base_value", r.base_value}};
  if (r.worst_point) {
    j["worst_gap"] = r.worst_gap;
    j["worst_point"] = to_json(*r.worst_point);
  }
  return j;
}

inline json to_json(const Rho0Result& r) {
  json ladder = json::array();
  for (const auto& rec : r.ladder) ladder.push_back(to_json(rec));
  json j = {{"status", r.found ? "FOUND" : "NONE_FOUND"}, {"ladder", ladder}};
  if (r.found) j["rho0"] = r.rho0;
  return j;
}

inline json to_json(const SolveResult& r) {
  json j = {{"x", to_json(r.x)},          {"objective", r.objective}, {"iterations", r.iterations},
            {"status", to_string(r.status)}, {"start_index", r.start_index}};
  if (r.x_exact) j["x_exact"] = to_json(*r.x_exact);
  return j;
}

inline json to_json(const PersistenceReport& r) {
  json fails = json::array();
  for (std::size_t k = 0; k < r.failures.size(); ++k) fails.push_back({{"point", to_json(r.failures[k])}, {"verdict", to_string(r.failure_verdicts[k])}});
  return {{"condition", to_string(r.condition)}, {"radius", r.radius}, {"tested", r.tested}, {"failures", fails}};
}

inline json error_json(const Error& e) { return {{"error", to_string(e.code())}, {"message", e.what()}}; }

// FNV-1a over the raw problem bytes.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nlqual

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nlqual/nlqual.hpp"

using namespace nlqual;

namespace {

struct Args {
  std::string problem;
  std::string point;
  std::string conditions = "nnamcq,qn,rcpld,dqn,bq,dbq,anull";
  std::string ladder = "1e-1:1e-8";
  std::size_t samples = 512;
  double delta = 1e-2;
  std::size_t probes = 64;
  std::string multipliers;
  std::string rho = "auto";
  std::string norm;
  double radius = 0.1;
  std::size_t pen_samples = 10000;
  std::string start = "auto";
  std::size_t max_iters = 5000;
  int term = 0;
  bool penalty = false;
  bool persistence = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> parse_ladder(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  }
  double hi = std::stod(s.substr(0, colon)), lo = std::stod(s.substr(colon + 1));
  if (!(hi > 0 && lo > 0 && lo <= hi)) throw Error(ErrorCode::SchemaError, "radius ladder must be hi:lo with 0 < lo <= hi");
  std::vector<double> out;
  for (double r = hi; r >= lo * (1 - 1e-9); r /= 10) out.push_back(r);
  return out;
}

std::vector<Condition> parse_conditions(const std::string& s) {
  std::vector<Condition> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_condition(item));
  return out;
}

QVec point_of(const ProblemSpec& P, const Args& a) {
  QVec x;
  if (!a.point.empty()) x = parse_point(a.point);
  else if (P.point) x = *P.point;
  else throw Error(ErrorCode::SchemaError, "no --point given and the problem file has no \"point\"");
  P.check_point(x.size());
  return x;
}

QualOptions qual_options(const Args& a, std::uint64_t seed) {
  QualOptions o;
  o.radii = parse_ladder(a.ladder);
  o.samples = a.samples;
  o.delta = a.delta;
  o.probes = a.probes;
  o.seed = seed;
  return o;
}

json run_checks(const ProblemSpec& P, const QVec& x, const Args& a, std::uint64_t seed) {
  json checks = json::object();
  QualOptions opt = qual_options(a, seed);
  for (Condition c : parse_conditions(a.conditions)) {
    try {
      QualReport r = check_condition(P, x, c, opt);
      json j = to_json(r);
      if (a.persistence && r.verdict == Verdict::CertifiedHolds) j["persistence"] = to_json(persistence_probe(P, x, c, 1e-3, 64, seed, opt));
      checks[std::string(to_string(c))] = j;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Precondition) throw;
      checks[std::string(to_string(c))] = error_json(e);
    }
  }
  return checks;
}

json run_penalize(const ProblemSpec& P, const QVec& x, const Args& a, std::uint64_t seed) {
  json j;
  Norm norm = P.norm;
  if (!a.norm.empty()) {
    if (a.norm == "l1") norm = Norm::L1;
    else if (a.norm == "l2") norm = Norm::L2;
    else if (a.norm == "linf") norm = Norm::LInf;
    else throw Error(ErrorCode::SchemaError, "norm must be l1, l2 or linf");
  }
  j["norm"] = to_string(norm);
  if (a.rho == "auto") {
    Rho0Result r = find_rho0(P, x, a.radius, a.pen_samples, seed, 1024.0, norm);
    j["rho0"] = to_json(r);
    if (r.found) j["validation_2rho0"] = to_json(validate_exactness(build_penalty(P, 2 * r.rho0, norm), x, a.radius, a.pen_samples, seed));
  } else {
    j["validation"] = to_json(validate_exactness(build_penalty(P, std::stod(a.rho), norm), x, a.radius, a.pen_samples, seed));
  }
  try {
    j["error_bound_feasible_set"] = to_json(estimate_error_bound(feasible_set_target(P, x), {1e-1, 1e-2, 1e-3, 1e-4}, 256, seed));
  } catch (const Error& e) {
    j["error_bound_feasible_set"] = error_json(e);
  }
  try {
    RestrictedSystem R = build_restricted_system(P, x);
    json Ij = json::array(), Icj = json::array();
    for (auto i : R.I) Ij.push_back(i + 1);
    for (auto i : R.I_c) Icj.push_back(i + 1);
    j["restricted_system"] = {{"t_star", to_json(R.t_star)}, {"I", Ij}, {"I_c", Icj}};
    j["error_bound_restricted"] = to_json(estimate_error_bound(restricted_target(R), {1e-1, 1e-2, 1e-3, 1e-4}, 256, seed));
  } catch (const Error& e) {
    j["restricted_system"] = error_json(e);
  }
  return j;
}

json run_kkt(const ProblemSpec& P, const QVec& x, const Args& a) {
  if (!a.multipliers.empty()) {
    QVec all = parse_point(a.multipliers);
    if (all.size() != P.n() + P.m()) throw Error(ErrorCode::DimMismatch, "--multipliers needs n + m values (lambda then mu)");
    MultiplierVector m{QVec(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(P.n())),
                       QVec(all.begin() + static_cast<std::ptrdiff_t>(P.n()), all.end())};
    return to_json(verify_kkt(P, x, m));
  }
  return to_json(find_kkt_multipliers(P, x));
}

std::string summary(const json& ops) {
  std::ostringstream os;
  if (ops.contains("subdiff")) os << "subdiff: horizon " << ops["subdiff"]["horizon"]["set"].dump() << " [" << ops["subdiff"]["horizon"]["exactness"].get<std::string>() << "]\n";
  if (ops.contains("check"))
    for (const auto& [k, v] : ops["check"].items()) os << k << ": " << (v.contains("verdict") ? v["verdict"].get<std::string>() : v["error"].get<std::string>()) << "\n";
  if (ops.contains("kkt")) os << "KKT: " << ops["kkt"]["status"].get<std::string>() << "\n";
  if (ops.contains("penalize") && ops["penalize"].contains("rho0")) {
    const auto& r = ops["penalize"]["rho0"];
    os << "rho0: " << r["status"].get<std::string>();
    if (r.contains("rho0")) os << " " << r["rho0"].get<double>();
    os << "\n";
  }
  if (ops.contains("solve")) os << "solve: " << ops["solve"]["status"].get<std::string>() << " objective " << ops["solve"]["objective"].get<double>() << "\n";
  return os.str();
}

// argv with the problem path reduced to its file name and --out dropped.
std::string command_line(int argc, char** argv, const std::string& problem) {
  std::string s;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--out") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0) continue;
    if (a == problem) a = std::filesystem::path(a).filename().string();
    s += (s.empty() ? "" : " ") + a;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Qualification conditions, KKT checks and exact penalties for non-Lipschitz programs"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 42;
  std::string out;
  bool print_json = false;
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "write the JSON report to a file");
  app.add_flag("--json", print_json, "print the JSON report on stdout");
  Args a;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("problem", a.problem, "problem file")->required();
    sub->add_option("--point", a.point, "point as comma-separated rationals");
  };
  auto* sub_subdiff = app.add_subcommand("subdiff", "subdifferential bundle of Phi (or one term) at a point");
  add_common(sub_subdiff);
  sub_subdiff->add_option("--term", a.term, "1-based term index");

  auto add_check_opts = [&](CLI::App* sub) {
    sub->add_option("--conditions", a.conditions, "nnamcq,qn,rcpld,dqn,bq,dbq,anull,sqn,srcpld");
    sub->add_option("--radius-ladder", a.ladder, "hi:lo decades or a comma list");
    sub->add_option("--samples", a.samples);
    sub->add_option("--delta", a.delta);
    sub->add_option("--probes", a.probes);
  };
  auto* sub_check = app.add_subcommand("check", "qualification conditions");
  add_common(sub_check);
  add_check_opts(sub_check);
  sub_check->add_flag("--persistence", a.persistence, "probe nearby feasible points for certified conditions");

  auto* sub_kkt = app.add_subcommand("kkt", "verify or search KKT multipliers");
  add_common(sub_kkt);
  sub_kkt->add_option("--multipliers", a.multipliers, "lambda then mu, comma-separated");

  auto add_pen_opts = [&](CLI::App* sub) {
    sub->add_option("--rho", a.rho, "auto or a value");
    sub->add_option("--norm", a.norm, "l1, l2 or linf");
    sub->add_option("--radius", a.radius);
    sub->add_option("--samples", a.pen_samples);
  };
  auto* sub_pen = app.add_subcommand("penalize", "penalty threshold, exactness validation and error bounds");
  add_common(sub_pen);
  add_pen_opts(sub_pen);

  auto* sub_solve = app.add_subcommand("solve", "proximal gradient on the penalized problem");
  sub_solve->add_option("problem", a.problem, "problem file")->required();
  sub_solve->add_option("--rho", a.rho, "penalty parameter")->default_val("1");
  sub_solve->add_option("--norm", a.norm, "l1, l2 or linf");
  sub_solve->add_option("--start", a.start, "comma-separated start point or auto");
  sub_solve->add_option("--max-iters", a.max_iters);

  auto* sub_report = app.add_subcommand("report", "subdiff, checks, KKT and optional penalty validation");
  add_common(sub_report);
  add_check_opts(sub_report);
  sub_report->add_flag("--penalty", a.penalty, "include the penalty validation");
  sub_report->add_option("--radius", a.radius);
  sub_report->add_option("--pen-samples", a.pen_samples);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const std::string text = read_file(a.problem);
    ProblemSpec P = parse_problem_text(text);
    json ops = json::object();
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();

    if (name == "solve") {
      DVec x0;
      if (a.start == "auto") x0 = P.point ? to_double(*P.point) : DVec(P.dim, 0.0);
      else x0 = to_double(parse_point(a.start));
      Norm norm = a.norm == "l2" ? Norm::L2 : a.norm == "linf" ? Norm::LInf : a.norm == "l1" ? Norm::L1 : P.norm;
      SolverConfig cfg;
      cfg.max_iters = a.max_iters;
      cfg.seed = seed;
      PenaltyProblem PP = build_penalty(P, std::stod(a.rho), norm);
      SolveResult r = solve(PP, x0, cfg);
      json sj = to_json(r);
      if (r.x_exact) {
        try {
          sj["kkt"] = to_json(find_kkt_multipliers(P, *r.x_exact));
        } catch (const Error& e) {
          sj["kkt"] = error_json(e);
        }
      }
      ops["solve"] = sj;
    } else {
      QVec x = point_of(P, a);
      if (name == "subdiff") {
        if (a.term > 0) ops["subdiff"] = to_json(term_bundle(P, static_cast<std::size_t>(a.term - 1), x));
        else ops["subdiff"] = to_json(phi_bundle(P, x));
      } else if (name == "check") {
        ops["check"] = run_checks(P, x, a, seed);
      } else if (name == "kkt") {
        ops["kkt"] = run_kkt(P, x, a);
      } else if (name == "penalize") {
        ops["penalize"] = run_penalize(P, x, a, seed);
      } else if (name == "report") {
        ops["point"] = to_json(x);
        ops["subdiff"] = to_json(phi_bundle(P, x));
        ops["check"] = run_checks(P, x, a, seed);
        ops["kkt"] = to_json(find_kkt_multipliers(P, x));
        ops["fritz_john"] = to_json(fritz_john(P, x));
        if (a.penalty) ops["penalize"] = run_penalize(P, x, a, seed);
      }
    }

    json report = {{"tool", "nlqual"},
                   {"version", kVersion},
                   {"problem_hash", fnv1a_hex(text)},
                   {"command", command_line(argc, argv, a.problem)},
                   {"seed", seed},
                   {"operations", ops}};
    report["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string dumped = report.dump(2) + "\n";
    if (!out.empty()) {
      std::ofstream f(out, std::ios::binary);
      if (!f) throw Error(ErrorCode::Precondition, "cannot write '" + out + "'");
      f << dumped;
    }
    if (print_json) std::cout << dumped;
    else std::cout << summary(ops);
    return 0;
  } catch (const Error& e) {
    std::cerr << error_json(e).dump() << "\n";
    switch (e.code()) {
      case ErrorCode::ParseError:
      case ErrorCode::SchemaError:
      case ErrorCode::DimMismatch: return 2;
      default: return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "PARSE_ERROR"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
}

#ifndef PFAFF_CLI_HPP
#define PFAFF_CLI_HPP

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pfaff/document.hpp"

namespace pfaff {

// exit-code contract: 0 pass, 1 verification failure, 2 input error
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitInput = 2;

struct Report {
  Json json = Json::object();
  std::vector<std::string> lines;
  bool pass = true;

  Report(const std::string& command, const std::string& doc_path) {
    json["command"] = command;
    json["document"] = doc_path;
    json["checks"] = Json::array();
  }

  void settings(std::uint64_t seed, int samples, double tol) {
    json["settings"] = {{"seed", seed},
                        {"samples", samples},
                        {"tol", tol},
                        {"rank_threshold", kRankRelTol}};
  }

  void add(const std::string& name, bool ok, Json details,
           const std::string& text) {
    details["name"] = name;
    details["verdict"] = ok ? "pass" : "fail";
    json["checks"].push_back(details);
    lines.push_back(std::string(ok ? "[PASS] " : "[FAIL] ") + name +
                    (text.empty() ? "" : ": " + text));
    pass = pass && ok;
  }

  void note(const std::string& name, Json details, const std::string& text) {
    details["name"] = name;
    details["verdict"] = "info";
    json["checks"].push_back(details);
    lines.push_back("[INFO] " + name + (text.empty() ? "" : ": " + text));
  }

  void finish() { json["verdict"] = pass ? "pass" : "fail"; }
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::uint64_t effective_seed(const SystemDocument& doc) {
  if (const char* env = std::getenv("PFAFF_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return static_cast<std::uint64_t>(v);
    throw DocError("PFAFF_SEED is not an unsigned integer");
  }
  return doc.seed;
}

inline std::string render_form(const Chart& chart, const KForm& w) {
  std::string s;
  bool first = true;
  for (int a = 0; a < chart.dim(); ++a) {
    Expr c = w.coeff({a});
    if (c.is_zero()) continue;
    if (!first) s += " + ";
    first = false;
    s += "(" + render(c) + ") d" + chart.coords[a];
  }
  return first ? "0" : s;
}

}  // namespace detail

struct VerifyOptions {
  int samples = 100;
  std::string mode = "auto";  // auto | poisson | jacobi
};

inline int run_verify(const std::string& doc_path, const VerifyOptions& opt,
                      Report& rep) {
  SystemDocument doc;
  HamiltonianSystem sys;
  try {
    doc = load_document(doc_path);
    sys = to_system(doc);
    sys.validate_family();
    if (!sys.closure.empty()) sys.validate_closure_schema();
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.pass = false;
    rep.finish();
    return kExitInput;
  }

  std::string mode = opt.mode;
  if (mode == "auto") mode = sys.S.poisson() ? "poisson" : "jacobi";
  if (mode != "poisson" && mode != "jacobi") {
    rep.lines.push_back("[ERROR] unknown mode '" + mode + "'");
    rep.finish();
    return kExitInput;
  }
  std::uint64_t seed;
  try {
    seed = detail::effective_seed(doc);
  } catch (const DocError& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.finish();
    return kExitInput;
  }
  rep.settings(seed, opt.samples, 1e-9);
  rep.json["mode"] = mode;

  try {
    auto ax = check_jacobi_axioms(sys.S, opt.samples, seed);
    rep.add("structure-axioms", ax.pass,
            {{"lie_residual", ax.max_lie_residual},
             {"jacobiator_residual", ax.max_jacobiator_residual},
             {"samples", ax.samples}},
            "max residuals " + detail::fmt(ax.max_lie_residual) + " / " +
                detail::fmt(ax.max_jacobiator_residual));

    auto ind = check_independence(sys, opt.samples, seed + 1);
    bool ind_ok = mode == "poisson" ? ind.gradient_pass : ind.vector_field_pass;
    rep.add("independence", ind_ok,
            {{"gradient_fraction", ind.gradient_pass_fraction},
             {"vector_field_fraction", ind.vector_field_pass_fraction},
             {"gated_on", mode == "poisson" ? "gradients" : "vector_fields"}},
            "gradient rank ok at " + detail::fmt(ind.gradient_pass_fraction * 100) +
                "%, vector-field rank ok at " +
                detail::fmt(ind.vector_field_pass_fraction * 100) + "%");

    ClosureReport cl;
    if (!sys.closure.empty()) {
      cl = check_closure_symbolic(sys, opt.samples, seed + 2);
    } else {
      cl = check_closure_numeric(sys, opt.samples, seed + 2);
    }
    Json pairs = Json::array();
    std::string worst;
    for (const auto& p : cl.pairs) {
      pairs.push_back({{"j", p.j},
                       {"i", p.i},
                       {"mode", p.mode},
                       {"residual", p.max_residual},
                       {"jump_fraction", p.jump_fraction},
                       {"pass", p.pass}});
      if (!p.pass)
        worst += " (" + std::to_string(p.j) + "," + std::to_string(p.i) + ")";
    }
    rep.add("closure", cl.pass, {{"pairs", pairs}},
            cl.pass ? (sys.closure.empty() ? "numeric rank test" : "table residuals")
                    : "failing pairs:" + worst);

    if (mode == "jacobi") {
      auto reeb = check_reeb_compatibility(sys, opt.samples, seed + 3);
      Json rp = Json::array();
      for (const auto& p : reeb.pairs)
        rp.push_back({{"j", p.j}, {"i", p.i}, {"residual", p.max_residual}});
      rep.add("reeb-compatibility", reeb.pass,
              {{"auto_pass", reeb.auto_pass}, {"pairs", rp}},
              reeb.auto_pass ? "E = 0, automatic" : "least-squares span test");
    }
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  rep.finish();
  return rep.pass ? kExitPass : kExitFail;
}

struct FormsOptions {
  std::string path = "contraction";  // minor | contraction | both
  bool frobenius = false;
  int samples = 100;
};

inline int run_forms(const std::string& doc_path, const FormsOptions& opt,
                     Report& rep) {
  SystemDocument doc;
  HamiltonianSystem sys;
  std::uint64_t seed;
  try {
    doc = load_document(doc_path);
    sys = to_system(doc);
    sys.validate_family();
    seed = detail::effective_seed(doc);
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }
  rep.settings(seed, opt.samples, FrobeniusReport::tolerance);
  rep.json["path"] = opt.path;

  bool want_minor = opt.path == "minor" || opt.path == "both";
  bool want_contr = opt.path == "contraction" || opt.path == "both";
  if (!want_minor && !want_contr) {
    rep.lines.push_back("[ERROR] unknown path '" + opt.path + "'");
    rep.finish();
    return kExitInput;
  }

  std::optional<PfaffianSequence> minor, contr;
  try {
    if (want_minor) minor = forms_minor(sys);
  } catch (const StructureError& e) {
    rep.lines.push_back(std::string("[ERROR] minor path unavailable: ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }
  try {
    if (want_contr) contr = forms_contraction(sys);
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  auto emit = [&](const char* tag, const PfaffianSequence& seq) {
    Json forms = Json::array();
    for (std::size_t i = 0; i < seq.forms.size(); ++i) {
      Json coeffs = Json::object();
      for (const auto& [idx, c] : seq.forms[i].coeffs)
        coeffs[sys.S.chart.coords[idx[0]]] = render(c);
      forms.push_back(coeffs);
      rep.lines.push_back("  " + std::string(tag) + " omega_" +
                          std::to_string(i + 1) + " = " +
                          detail::render_form(sys.S.chart, seq.forms[i]));
    }
    rep.json[std::string(tag) + "_forms"] = forms;
  };
  if (minor) emit("minor", *minor);
  if (contr) emit("contraction", *contr);

  try {
    if (opt.frobenius) {
      const PfaffianSequence& seq = contr ? *contr : *minor;
      auto fr = check_frobenius(sys.S.chart, seq, opt.samples, seed + 4);
      Json entries = Json::array();
      for (const auto& e : fr.entries)
        entries.push_back({{"i", e.i},
                           {"vacuous", e.vacuous},
                           {"residual", e.residual},
                           {"pass", e.pass}});
      rep.add("frobenius", fr.pass, {{"entries", entries}},
              "scaled residuals within " + detail::fmt(FrobeniusReport::tolerance));
    }
    if (minor && contr) {
      auto cc = cross_check_paths(sys, opt.samples, seed + 5);
      rep.add("cross-check", cc.pass,
              {{"factor", cc.factor}, {"max_dev", cc.max_dev}},
              "contraction = " + detail::fmt(cc.factor) +
                  " * minor, max deviation " + detail::fmt(cc.max_dev));
    }
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  rep.finish();
  return rep.pass ? kExitPass : kExitFail;
}

struct IntegralsOptions {
  bool solve = false;
  int samples = 100;
};

inline int run_integrals(const std::string& doc_path, const IntegralsOptions& opt,
                         Report& rep) {
  SystemDocument doc;
  HamiltonianSystem sys;
  std::uint64_t seed;
  try {
    doc = load_document(doc_path);
    sys = to_system(doc);
    sys.validate_family();
    seed = detail::effective_seed(doc);
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }
  rep.settings(seed, opt.samples, kRankRelTol);

  PfaffianSequence seq;
  try {
    seq = forms_contraction(sys);
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  int m = sys.dim();
  LevelSet L;
  Json stages = Json::array();
  int exit_code = kExitPass;
  for (int stage = m - 1; stage >= 1; --stage) {
    int entry_index = m - 1 - stage;
    const KForm& omega = seq.forms[stage - 1];
    std::string cname = "c" + std::to_string(stage);
    Json sj;
    sj["stage"] = stage;

    std::optional<Expr> supplied;
    double value = 0.0;
    if (entry_index < static_cast<int>(doc.integral_chain.size())) {
      supplied = doc.integral_chain[entry_index].expr;
      value = doc.integral_chain[entry_index].value;
      sj["supplied"] = doc.integral_chain[entry_index].text;
    }

    std::optional<SolveResult> solved;
    if (opt.solve) {
      try {
        solved = solve_separable(sys.S.chart, omega, L, seed + 10 + stage);
      } catch (const Error& e) {
        solved = SolveResult{};
        solved->reason = e.what();
      }
      if (solved->found) {
        sj["solved"] = render(solved->integral);
        rep.lines.push_back("  stage " + std::to_string(stage) +
                            " separable solution: I = " + render(solved->integral));
      } else {
        sj["solve_verdict"] = "not-separable: " + solved->reason;
        rep.lines.push_back("  stage " + std::to_string(stage) +
                            " not separable: " + solved->reason);
      }
    }

    Expr I;
    if (supplied) {
      I = *supplied;
    } else if (solved && solved->found) {
      I = solved->integral;
      // pick the level value from a point of the current leaf
      try {
        auto pts = sample_level_set(sys.S.chart, L, 1, seed + 100 + stage);
        Point p = pts.front();
        L.bind(p);
        value = evaluate(I, p);
      } catch (const Error& e) {
        rep.add("stage-" + std::to_string(stage), false, sj, e.what());
        exit_code = kExitFail;
        break;
      }
      sj["value"] = value;
    } else {
      if (opt.solve) {
        rep.add("stage-" + std::to_string(stage), false, sj,
                "no supplied integral and the equation is not separable");
        exit_code = kExitFail;
      } else {
        rep.note("stage-" + std::to_string(stage), sj,
                 "no supplied integral; rerun with --solve-separable");
      }
      break;
    }

    try {
      auto check =
          check_pfaffian_solution(sys.S.chart, omega, I, L, opt.samples, seed + stage);
      sj["rank_ratio"] = check.max_rank_ratio;
      rep.add("stage-" + std::to_string(stage), check.pass, sj,
              "omega_" + std::to_string(stage) + " ^ dI rank test, ratio " +
                  detail::fmt(check.max_rank_ratio));
      if (!check.pass) {
        exit_code = kExitFail;
        break;
      }
    } catch (const Error& e) {
      rep.add("stage-" + std::to_string(stage), false, sj, e.what());
      exit_code = kExitFail;
      break;
    }
    L.constraints.push_back({I, value, cname});
    stages.push_back(sj);
  }
  rep.json["stages"] = stages;
  rep.finish();
  if (exit_code == kExitPass && !rep.pass) exit_code = kExitFail;
  return exit_code;
}

struct FlowOptions {
  Point x0;
  double T = 1.0;
  double dt = 1e-3;
  double tol = 1e-6;
  std::vector<std::string> conserve;
  std::vector<std::pair<std::string, std::string>> rates;  // f : h
  std::string csv_path;
};

inline int run_flow(const std::string& doc_path, const FlowOptions& opt,
                    Report& rep) {
  SystemDocument doc;
  HamiltonianSystem sys;
  try {
    doc = load_document(doc_path);
    sys = to_system(doc);
    sys.validate_family();
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }
  rep.settings(doc.seed, 0, opt.tol);

  std::vector<std::pair<std::string, Expr>> conserve;
  std::vector<std::tuple<std::string, Expr, Expr>> rates;
  try {
    for (const auto& s : opt.conserve) {
      Expr e = detail::parse_at(s, "--conserve");
      detail::check_expr_over(e, sys.S.chart, "--conserve");
      conserve.emplace_back(s, e);
    }
    for (const auto& [fs, hs] : opt.rates) {
      Expr f = detail::parse_at(fs, "--rate");
      Expr h = detail::parse_at(hs, "--rate");
      detail::check_expr_over(f, sys.S.chart, "--rate");
      detail::check_expr_over(h, sys.S.chart, "--rate");
      rates.emplace_back(fs + ":" + hs, f, h);
    }
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  Trajectory traj;
  try {
    traj = flow(sys, opt.x0, opt.T, opt.dt, doc.guard_box);
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.finish();
    return kExitInput;
  }

  if (!opt.csv_path.empty()) {
    std::ofstream out(opt.csv_path);
    if (!out) {
      rep.lines.push_back("[ERROR] cannot write CSV to '" + opt.csv_path + "'");
      rep.finish();
      return kExitInput;
    }
    out << "t";
    for (const auto& c : sys.S.chart.coords) out << "," << c;
    out << "\n";
    char buf[40];
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", traj.t0 + traj.dt * i);
      out << buf;
      for (double v : traj.states[i]) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << "," << buf;
      }
      out << "\n";
    }
    rep.json["csv"] = opt.csv_path;
  }
  rep.json["steps"] = traj.steps();
  rep.json["truncated"] = traj.truncated;

  if (traj.truncated) {
    rep.add("trajectory", false, {{"last_good_time", traj.last_time}},
            "truncated at t = " + detail::fmt(traj.last_time));
    rep.finish();
    return kExitFail;
  }
  rep.note("trajectory", {{"steps", traj.steps()}},
           std::to_string(traj.steps()) + " steps of dt = " + detail::fmt(opt.dt));

  for (const auto& [name, g] : conserve) {
    auto c = conservation(sys.S.chart, traj, g);
    bool ok = !c.domain_error_index && c.drift <= opt.tol;
    Json d{{"drift", c.drift}};
    if (c.domain_error_index)
      d["domain_error_index"] = *c.domain_error_index;
    rep.add("conserve " + name, ok, d, "drift " + detail::fmt(c.drift));
  }
  for (const auto& [name, f, h] : rates) {
    auto r = check_rate(sys.S.chart, traj, f, h, opt.tol);
    rep.add("rate " + name, r.pass,
            {{"max_deviation", r.max_deviation},
             {"skipped", r.skipped},
             {"compared", r.compared}},
            "max deviation " + detail::fmt(r.max_deviation) +
                (r.skipped ? " (" + std::to_string(r.skipped) + " skipped)" : ""));
  }

  rep.finish();
  return rep.pass ? kExitPass : kExitFail;
}

inline int run_extend(const std::string& doc_path, std::ostream& out, Report& rep) {
  try {
    SystemDocument doc = load_document(doc_path, /*strict=*/false);
    auto sys = extend_time_dependent(doc.hamiltonian, doc.chart);
    Json j = extended_system_to_json(sys, doc.seed);
    out << j.dump(2) << "\n";
    rep.json["extended"] = j;
    rep.finish();
    return kExitPass;
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.pass = false;
    rep.finish();
    return kExitInput;
  }
}

inline int run_pfaffian(const std::string& matrix_path, std::ostream& out,
                        Report& rep) {
  try {
    std::ifstream in(matrix_path);
    if (!in) throw DocError("cannot open '" + matrix_path + "'");
    Json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw DocError(std::string("invalid JSON: ") + e.what());
    }

    SkewExprMatrix A;
    if (j.is_object()) {
      if (!j.contains("size")) throw DocError("matrix object needs \"size\"");
      A = SkewExprMatrix::zeros(j["size"].get<int>());
      if (j.contains("upper"))
        for (const auto& [k, v] : j["upper"].items()) {
          auto [a, b] = detail::parse_index_pair(k, "upper", A.n);
          if (a >= b) throw DocError("upper: key '" + k + "' must have a < b");
          A.set(a, b, detail::parse_at(v.get<std::string>(), "upper." + k));
        }
    } else if (j.is_array()) {
      int n = static_cast<int>(j.size());
      A = SkewExprMatrix::zeros(n);
      for (int i = 0; i < n; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != n)
          throw DocError("matrix rows must all have length " + std::to_string(n));
        for (int k = i + 1; k < n; ++k) {
          const auto& cell = j[i][k];
          if (cell.is_null()) continue;
          if (cell.is_number()) {
            A.set(i, k, Expr::number(cell.get<double>()));
          } else if (cell.is_string()) {
            A.set(i, k, detail::parse_at(cell.get<std::string>(),
                                         "matrix[" + std::to_string(i) + "][" +
                                             std::to_string(k) + "]"));
          } else {
            throw DocError("matrix entries must be numbers, strings or null");
          }
        }
      }
    } else {
      throw DocError("matrix document must be an object or an array of rows");
    }

    std::string s = render(pfaffian(A));
    out << s << "\n";
    rep.json["pfaffian"] = s;
    rep.finish();
    return kExitPass;
  } catch (const Error& e) {
    rep.lines.push_back(std::string("[ERROR] ") + e.what());
    rep.json["error"] = e.what();
    rep.pass = false;
    rep.finish();
    return kExitInput;
  }
}

}  // namespace pfaff

#endif

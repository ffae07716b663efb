// pfaff: verify Poisson/Jacobi structures with triangular bracket closure,
// build their Pfaffian 1-form sequences, certify integrability, check
// integral chains, and integrate the Hamiltonian flow.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pfaff/cli.hpp"

namespace {

void emit(const pfaff::Report& rep, const std::string& json_path) {
  if (!json_path.empty()) {
    if (json_path == "-") {
      std::cout << rep.json.dump(2) << "\n";
      return;
    }
    std::ofstream out(json_path);
    out << rep.json.dump(2) << "\n";
  }
  for (const auto& line : rep.lines) std::cout << line << "\n";
  if (rep.json.contains("verdict"))
    std::cout << "verdict: " << rep.json["verdict"].get<std::string>() << "\n";
}

bool parse_x0(const std::string& text, pfaff::Point& out) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    std::string item =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    auto eq = item.find('=');
    if (eq == std::string::npos) return false;
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (...) {
      return false;
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return !out.empty();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pfaffian integration toolkit for Hamiltonian systems"};
  app.require_subcommand(1);

  std::string doc_path, json_path;

  auto* verify = app.add_subcommand("verify", "run the structure checks");
  pfaff::VerifyOptions vopt;
  verify->add_option("document", doc_path, "system document")->required();
  verify->add_option("--samples", vopt.samples, "sample points per check");
  std::int64_t seed_flag = -1;
  verify->add_option("--seed", seed_flag, "override document seed");
  verify->add_option("--mode", vopt.mode, "poisson | jacobi | auto");
  verify->add_option("--json", json_path, "write the JSON report here ('-' = stdout)");

  auto* forms = app.add_subcommand("forms", "construct the Pfaffian 1-forms");
  pfaff::FormsOptions fopt;
  forms->add_option("document", doc_path, "system document")->required();
  forms->add_option("--path", fopt.path, "minor | contraction | both");
  forms->add_flag("--frobenius", fopt.frobenius, "run the integrability check");
  forms->add_option("--samples", fopt.samples, "sample points per check");
  forms->add_option("--json", json_path, "write the JSON report here");

  auto* integrals = app.add_subcommand("integrals", "walk the integral chain");
  pfaff::IntegralsOptions iopt;
  integrals->add_option("document", doc_path, "system document")->required();
  integrals->add_flag("--solve-separable", iopt.solve,
                      "attempt separable solutions at each stage");
  integrals->add_option("--samples", iopt.samples, "sample points per check");
  integrals->add_option("--json", json_path, "write the JSON report here");

  auto* flowc = app.add_subcommand("flow", "integrate the Hamiltonian flow");
  pfaff::FlowOptions lopt;
  std::string x0_text;
  std::vector<std::string> conserve_args, rate_args;
  flowc->add_option("document", doc_path, "system document")->required();
  flowc->add_option("--x0", x0_text, "initial state k=v,...")->required();
  flowc->add_option("--T", lopt.T, "final time");
  flowc->add_option("--dt", lopt.dt, "step size");
  flowc->add_option("--tol", lopt.tol, "pass tolerance");
  flowc->add_option("--conserve", conserve_args,
                    "expressions expected constant (comma separated)");
  flowc->add_option("--rate", rate_args, "rate pairs f:h");
  flowc->add_option("--csv", lopt.csv_path, "trajectory CSV output path");
  flowc->add_option("--json", json_path, "write the JSON report here");

  auto* extend = app.add_subcommand("extend", "emit the extended-phase-space document");
  extend->add_option("document", doc_path, "time-dependent Hamiltonian document")
      ->required();

  auto* pfcmd = app.add_subcommand("pfaffian", "Pfaffian of a skew expression matrix");
  pfcmd->add_option("matrix", doc_path, "JSON matrix document")->required();

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) {
    if (seed_flag >= 0) setenv("PFAFF_SEED", std::to_string(seed_flag).c_str(), 1);
    pfaff::Report rep("verify", doc_path);
    int code = pfaff::run_verify(doc_path, vopt, rep);
    emit(rep, json_path);
    return code;
  }
  if (forms->parsed()) {
    pfaff::Report rep("forms", doc_path);
    int code = pfaff::run_forms(doc_path, fopt, rep);
    emit(rep, json_path);
    return code;
  }
  if (integrals->parsed()) {
    pfaff::Report rep("integrals", doc_path);
    int code = pfaff::run_integrals(doc_path, iopt, rep);
    emit(rep, json_path);
    return code;
  }
  if (flowc->parsed()) {
    if (!parse_x0(x0_text, lopt.x0)) {
      std::cerr << "[ERROR] --x0 expects k=v,...\n";
      return pfaff::kExitInput;
    }
    for (const auto& arg : conserve_args) {
      std::size_t pos = 0;
      while (pos < arg.size()) {
        auto comma = arg.find(',', pos);
        lopt.conserve.push_back(arg.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    for (const auto& arg : rate_args) {
      auto colon = arg.find(':');
      if (colon == std::string::npos) {
        std::cerr << "[ERROR] --rate expects f:h\n";
        return pfaff::kExitInput;
      }
      lopt.rates.emplace_back(arg.substr(0, colon), arg.substr(colon + 1));
    }
    pfaff::Report rep("flow", doc_path);
    int code = pfaff::run_flow(doc_path, lopt, rep);
    emit(rep, json_path);
    return code;
  }
  if (extend->parsed()) {
    pfaff::Report rep("extend", doc_path);
    return pfaff::run_extend(doc_path, std::cout, rep);
  }
  if (pfcmd->parsed()) {
    pfaff::Report rep("pfaffian", doc_path);
    return pfaff::run_pfaffian(doc_path, std::cout, rep);
  }
  return pfaff::kExitInput;
}

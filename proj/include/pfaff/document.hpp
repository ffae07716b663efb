#ifndef PFAFF_DOCUMENT_HPP
#define PFAFF_DOCUMENT_HPP

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfaff/integration.hpp"
#include "pfaff/parse.hpp"

namespace pfaff {

using Json = nlohmann::ordered_json;

/// A system document: the JSON description of a chart, structure, Hamiltonian,
/// family, auxiliary entry, optional closure table and integral chain.
struct SystemDocument {
  enum class Kind { Poisson, Jacobi, Symplectic, Lcs, Contact };

  Chart chart;
  Kind kind = Kind::Poisson;
  std::map<std::pair<int, int>, Expr> lambda;  // poisson/jacobi
  std::vector<Expr> E;                         // jacobi
  KForm omega;                                 // symplectic/lcs
  KForm theta;                                 // lcs
  KForm eta;                                   // contact
  Expr hamiltonian;
  std::vector<Expr> family;
  std::optional<std::variant<Expr, VectorField>> auxiliary;
  std::map<std::pair<int, int>, Expr> closure;
  std::uint64_t seed = 0;
  struct ChainEntry {
    Expr expr;
    double value;
    std::string text;
  };
  std::vector<ChainEntry> integral_chain;
  std::optional<std::vector<std::array<double, 2>>> guard_box;

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::Poisson: return "poisson";
      case Kind::Jacobi: return "jacobi";
      case Kind::Symplectic: return "symplectic";
      case Kind::Lcs: return "lcs";
      case Kind::Contact: return "contact";
    }
    return "?";
  }
};

namespace detail {

inline Expr parse_at(const std::string& text, const std::string& where) {
  try {
    return pfaff::parse(text);
  } catch (const ParseError& e) {
    throw DocError(where + ": " + e.what());
  }
}

inline std::pair<int, int> parse_index_pair(const std::string& key,
                                            const std::string& where, int m) {
  auto comma = key.find(',');
  if (comma == std::string::npos)
    throw DocError(where + ": key '" + key + "' is not of the form \"a,b\"");
  int a, b;
  try {
    a = std::stoi(key.substr(0, comma));
    b = std::stoi(key.substr(comma + 1));
  } catch (...) {
    throw DocError(where + ": key '" + key + "' is not a pair of indices");
  }
  if (a < 0 || b < 0 || a >= m || b >= m)
    throw DocError(where + ": index in '" + key + "' out of range for m = " +
                   std::to_string(m));
  return {a, b};
}

inline void check_expr_over(const Expr& e, const Chart& chart,
                            const std::string& where,
                            const std::set<std::string>& extra = {}) {
  for (const auto& v : free_variables(e)) {
    if (extra.count(v)) continue;
    if (std::find(chart.coords.begin(), chart.coords.end(), v) ==
        chart.coords.end())
      throw DocError(where + ": symbol '" + v + "' is not a chart coordinate");
  }
}

}  // namespace detail

/// Parse and validate a system document. `strict` demands a complete system
/// (structure, family of length m-2); pass false for extension inputs.
inline SystemDocument parse_document(const Json& j, bool strict = true) {
  SystemDocument doc;
  if (!j.is_object()) throw DocError("document root must be an object");

  if (!j.contains("coordinates") || !j["coordinates"].is_array())
    throw DocError("coordinates: required array of strings");
  for (const auto& c : j["coordinates"]) {
    if (!c.is_string()) throw DocError("coordinates: entries must be strings");
    doc.chart.coords.push_back(c.get<std::string>());
  }
  int m = doc.chart.dim();

  if (!j.contains("sample_box") || !j["sample_box"].is_object())
    throw DocError("sample_box: required map coordinate -> [lo, hi]");
  doc.chart.box.resize(m);
  for (int a = 0; a < m; ++a) {
    const std::string& name = doc.chart.coords[a];
    if (!j["sample_box"].contains(name))
      throw DocError("sample_box: missing interval for '" + name + "'");
    const auto& iv = j["sample_box"][name];
    if (!iv.is_array() || iv.size() != 2)
      throw DocError("sample_box." + name + ": expected [lo, hi]");
    doc.chart.box[a] = {iv[0].get<double>(), iv[1].get<double>()};
  }
  if (j.contains("eps_dom")) doc.chart.eps_dom = j["eps_dom"].get<double>();
  try {
    doc.chart.validate();
  } catch (const StructureError& e) {
    throw DocError(std::string("coordinates/sample_box: ") + e.what());
  }

  if (j.contains("seed")) doc.seed = j["seed"].get<std::uint64_t>();

  if (!j.contains("hamiltonian") || !j["hamiltonian"].is_string())
    throw DocError("hamiltonian: required expression string");
  doc.hamiltonian =
      detail::parse_at(j["hamiltonian"].get<std::string>(), "hamiltonian");

  if (j.contains("structure")) {
    const auto& s = j["structure"];
    if (!s.is_object() || !s.contains("kind"))
      throw DocError("structure: object with a \"kind\" is required");
    std::string kind = s["kind"].get<std::string>();
    auto load_form2 = [&](const char* key) {
      KForm f;
      f.degree = 2;
      if (!s.contains(key))
        throw DocError(std::string("structure.") + key + ": required for kind " + kind);
      for (const auto& [k, v] : s[key].items()) {
        auto [a, b] = detail::parse_index_pair(k, std::string("structure.") + key, m);
        if (a >= b)
          throw DocError(std::string("structure.") + key + ": key '" + k +
                         "' must have a < b");
        Expr e = detail::parse_at(v.get<std::string>(),
                                  std::string("structure.") + key + "." + k);
        detail::check_expr_over(e, doc.chart, std::string("structure.") + key);
        f.coeffs[{a, b}] = e;
      }
      return f;
    };
    auto load_form1 = [&](const char* key) {
      KForm f;
      f.degree = 1;
      if (!s.contains(key))
        throw DocError(std::string("structure.") + key + ": required for kind " + kind);
      for (const auto& [k, v] : s[key].items()) {
        int a;
        try {
          a = std::stoi(k);
        } catch (...) {
          throw DocError(std::string("structure.") + key + ": key '" + k +
                         "' is not an index");
        }
        if (a < 0 || a >= m)
          throw DocError(std::string("structure.") + key + ": index out of range");
        Expr e = detail::parse_at(v.get<std::string>(),
                                  std::string("structure.") + key + "." + k);
        detail::check_expr_over(e, doc.chart, std::string("structure.") + key);
        f.coeffs[{a}] = e;
      }
      return f;
    };

    if (kind == "poisson" || kind == "jacobi") {
      doc.kind = kind == "poisson" ? SystemDocument::Kind::Poisson
                                   : SystemDocument::Kind::Jacobi;
      if (!s.contains("lambda"))
        throw DocError("structure.lambda: required for kind " + kind);
      for (const auto& [k, v] : s["lambda"].items()) {
        auto [a, b] = detail::parse_index_pair(k, "structure.lambda", m);
        if (a >= b) throw DocError("structure.lambda: key '" + k + "' must have a < b");
        Expr e = detail::parse_at(v.get<std::string>(), "structure.lambda." + k);
        detail::check_expr_over(e, doc.chart, "structure.lambda");
        doc.lambda[{a, b}] = e;
      }
      if (kind == "jacobi") {
        if (!s.contains("E") || !s["E"].is_array() ||
            static_cast<int>(s["E"].size()) != m)
          throw DocError("structure.E: required list of m component expressions");
        for (int a = 0; a < m; ++a) {
          Expr e = detail::parse_at(s["E"][a].get<std::string>(),
                                    "structure.E[" + std::to_string(a) + "]");
          detail::check_expr_over(e, doc.chart, "structure.E");
          doc.E.push_back(e);
        }
      }
    } else if (kind == "symplectic") {
      doc.kind = SystemDocument::Kind::Symplectic;
      doc.omega = load_form2("omega");
    } else if (kind == "lcs") {
      doc.kind = SystemDocument::Kind::Lcs;
      doc.omega = load_form2("omega");
      doc.theta = load_form1("theta");
    } else if (kind == "contact") {
      doc.kind = SystemDocument::Kind::Contact;
      doc.eta = load_form1("eta");
    } else {
      throw DocError("structure.kind: unknown kind '" + kind + "'");
    }
  } else if (strict) {
    throw DocError("structure: required");
  }

  detail::check_expr_over(doc.hamiltonian, doc.chart, "hamiltonian",
                          strict ? std::set<std::string>{}
                                 : std::set<std::string>{"t"});

  if (j.contains("family")) {
    if (!j["family"].is_array()) throw DocError("family: expected array");
    for (std::size_t i = 0; i < j["family"].size(); ++i) {
      Expr e = detail::parse_at(j["family"][i].get<std::string>(),
                                "family[" + std::to_string(i) + "]");
      detail::check_expr_over(e, doc.chart, "family");
      doc.family.push_back(e);
    }
  }
  if (strict && static_cast<int>(doc.family.size()) != m - 2)
    throw DocError("family: expected exactly m-2 = " + std::to_string(m - 2) +
                   " entries, got " + std::to_string(doc.family.size()));

  if (j.contains("auxiliary")) {
    const auto& a = j["auxiliary"];
    if (a.is_string()) {
      Expr e = detail::parse_at(a.get<std::string>(), "auxiliary");
      detail::check_expr_over(e, doc.chart, "auxiliary");
      doc.auxiliary = e;
    } else if (a.is_array()) {
      if (static_cast<int>(a.size()) != m)
        throw DocError("auxiliary: component list must have m entries");
      VectorField v;
      for (int i = 0; i < m; ++i) {
        Expr e = detail::parse_at(a[i].get<std::string>(),
                                  "auxiliary[" + std::to_string(i) + "]");
        detail::check_expr_over(e, doc.chart, "auxiliary");
        v.comp.push_back(e);
      }
      doc.auxiliary = v;
    } else {
      throw DocError("auxiliary: expected expression string or component list");
    }
  }

  if (j.contains("closure")) {
    for (const auto& [k, v] : j["closure"].items()) {
      auto [jj, ii] = detail::parse_index_pair(k, "closure", m);
      doc.closure[{jj, ii}] =
          detail::parse_at(v.get<std::string>(), "closure." + k);
    }
  }

  if (j.contains("integral_chain")) {
    if (!j["integral_chain"].is_array())
      throw DocError("integral_chain: expected array");
    int stage = m - 1;
    for (const auto& entry : j["integral_chain"]) {
      if (!entry.is_object() || !entry.contains("expr") || !entry.contains("value"))
        throw DocError("integral_chain: entries need \"expr\" and \"value\"");
      std::string text = entry["expr"].get<std::string>();
      Expr e = detail::parse_at(text, "integral_chain.expr");
      std::set<std::string> consts;
      for (int k = stage + 1; k <= m - 1; ++k) consts.insert("c" + std::to_string(k));
      detail::check_expr_over(e, doc.chart, "integral_chain.expr", consts);
      doc.integral_chain.push_back({e, entry["value"].get<double>(), text});
      --stage;
    }
    if (static_cast<int>(doc.integral_chain.size()) > m - 1)
      throw DocError("integral_chain: more entries than stages");
  }

  if (j.contains("guard_box")) {
    std::vector<std::array<double, 2>> gb(m);
    for (int a = 0; a < m; ++a) {
      const std::string& name = doc.chart.coords[a];
      if (!j["guard_box"].contains(name))
        throw DocError("guard_box: missing interval for '" + name + "'");
      const auto& iv = j["guard_box"][name];
      gb[a] = {iv[0].get<double>(), iv[1].get<double>()};
    }
    doc.guard_box = gb;
  }

  return doc;
}

inline SystemDocument load_document(const std::string& path, bool strict = true) {
  std::ifstream in(path);
  if (!in) throw DocError("cannot open document '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DocError("invalid JSON in '" + path + "': " + e.what());
  }
  return parse_document(j, strict);
}

/// Build the Hamiltonian system, running the structure converters where the
/// document carries classical data.
inline HamiltonianSystem to_system(const SystemDocument& doc) {
  int m = doc.chart.dim();
  HamiltonianSystem sys;
  switch (doc.kind) {
    case SystemDocument::Kind::Poisson:
    case SystemDocument::Kind::Jacobi: {
      std::vector<Expr> upper(m * (m - 1) / 2, Expr::number(0LL));
      for (const auto& [k, e] : doc.lambda)
        upper[JacobiStructure::upper_index(k.first, k.second, m)] = e;
      std::optional<std::vector<Expr>> E;
      if (doc.kind == SystemDocument::Kind::Jacobi) {
        bool all_zero = true;
        for (const auto& e : doc.E)
          if (!simplify(e).is_zero()) all_zero = false;
        if (!all_zero) E = doc.E;
      }
      sys.S = JacobiStructure::make(doc.chart, std::move(upper), std::move(E));
      break;
    }
    case SystemDocument::Kind::Symplectic:
      sys.S = symplectic_to_jacobi(doc.chart, doc.omega, doc.seed + 1);
      break;
    case SystemDocument::Kind::Lcs:
      sys.S = lcs_to_jacobi(doc.chart, doc.omega, doc.theta, doc.seed + 1);
      break;
    case SystemDocument::Kind::Contact:
      sys.S = contact_to_jacobi(doc.chart, doc.eta, doc.seed + 1);
      break;
  }
  sys.H = doc.hamiltonian;
  sys.family = doc.family;
  sys.auxiliary = doc.auxiliary;
  sys.closure = doc.closure;
  return sys;
}

/// Serialize a freshly extended system back to document JSON (cmd_extend).
inline Json extended_system_to_json(const HamiltonianSystem& sys,
                                    std::uint64_t seed) {
  Json j;
  j["coordinates"] = Json::array();
  for (const auto& c : sys.S.chart.coords) j["coordinates"].push_back(c);
  Json lambda = Json::object();
  int m = sys.dim();
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      Expr e = sys.S.lambda(a, b);
      if (!e.is_zero())
        lambda[std::to_string(a) + "," + std::to_string(b)] = render(e);
    }
  j["structure"] = {{"kind", "poisson"}, {"lambda", lambda}};
  j["hamiltonian"] = render(sys.H);
  j["family"] = Json::array();
  for (const auto& f : sys.family) j["family"].push_back(render(f));
  Json box = Json::object();
  for (int a = 0; a < m; ++a)
    box[sys.S.chart.coords[a]] =
        Json::array({sys.S.chart.box[a][0], sys.S.chart.box[a][1]});
  j["sample_box"] = box;
  j["seed"] = seed;
  return j;
}

}  // namespace pfaff

#endif

#ifndef PFAFF_CINF_HPP
#define PFAFF_CINF_HPP

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pfaff/geometry.hpp"

namespace pfaff {

/// Relative singular-value cutoff for all numeric rank decisions.
inline constexpr double kRankRelTol = 1e-8;

/// Hamiltonian system over a Jacobi structure: f0 = H, the ordered family
/// (f1,...,f_{m-2}), an auxiliary entry for form construction (a function,
/// or a raw vector field where no suitable Hamiltonian auxiliary exists),
/// and an optional triangular closure table (j,i) -> F_ji(u0..uj).
struct HamiltonianSystem {
  JacobiStructure S;
  Expr H;
  std::vector<Expr> family;
  std::optional<std::variant<Expr, VectorField>> auxiliary;
  std::map<std::pair<int, int>, Expr> closure;

  int dim() const { return S.dim(); }

  /// f_k for k = 0..m-2 (and m-1 when the auxiliary is a function).
  Expr func(int k) const {
    if (k == 0) return H;
    if (k <= static_cast<int>(family.size())) return family[k - 1];
    if (k == dim() - 1) return auxiliary_function();
    throw StructureError("function index " + std::to_string(k) + " out of range");
  }

  bool has_function_auxiliary() const {
    return auxiliary && std::holds_alternative<Expr>(*auxiliary);
  }

  Expr auxiliary_function() const {
    if (!has_function_auxiliary())
      throw StructureError("auxiliary function f_{m-1} is not set");
    return std::get<Expr>(*auxiliary);
  }

  VectorField auxiliary_field() const {
    if (!auxiliary) throw StructureError("auxiliary entry is not set");
    if (std::holds_alternative<VectorField>(*auxiliary))
      return std::get<VectorField>(*auxiliary);
    return hamiltonian_vf(S, std::get<Expr>(*auxiliary));
  }

  void validate_family() const {
    if (static_cast<int>(family.size()) != dim() - 2)
      throw StructureError("family must have exactly m-2 entries (got " +
                           std::to_string(family.size()) + ", m = " +
                           std::to_string(dim()) + ")");
    S.check_function(H, "Hamiltonian");
    for (const auto& f : family) S.check_function(f, "family entry");
  }

  std::vector<Expr> guard_exprs() const {
    std::vector<Expr> g = S.guard_exprs();
    g.push_back(H);
    for (const auto& f : family) g.push_back(f);
    if (has_function_auxiliary()) g.push_back(auxiliary_function());
    for (const auto& [k, F] : closure) g.push_back(closure_composed(k.first, k.second));
    return g;
  }

  /// F_ji with u_k substituted by f_k.
  Expr closure_composed(int j, int i) const {
    const Expr& F = closure.at({j, i});
    std::map<std::string, Expr> bind;
    for (int k = 0; k <= j; ++k) bind["u" + std::to_string(k)] = func(k);
    return simplify(substitute(F, bind));
  }

  void validate_closure_schema() const {
    for (const auto& [key, F] : closure) {
      auto [j, i] = key;
      if (!(j > i && i >= 0 && j <= dim() - 2))
        throw StructureError("closure pair (" + std::to_string(j) + "," +
                             std::to_string(i) + ") outside j > i >= 0, j <= m-2");
      for (const auto& v : free_variables(F)) {
        if (v.size() < 2 || v[0] != 'u')
          throw StructureError("closure entry (" + std::to_string(j) + "," +
                               std::to_string(i) + ") uses non-u symbol '" + v + "'");
        int k = std::stoi(v.substr(1));
        if (k > j)
          throw StructureError("closure entry (" + std::to_string(j) + "," +
                               std::to_string(i) + ") references u" +
                               std::to_string(k) + " beyond u" + std::to_string(j));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Independence
// ---------------------------------------------------------------------------

struct IndependenceReport {
  int samples = 0;
  double gradient_pass_fraction = 0.0;     // rank of Jacobian of (f0..f_{m-2})
  double vector_field_pass_fraction = 0.0; // rank of (X_{f0}..X_{f_{m-2}})
  bool gradient_pass = false;
  bool vector_field_pass = false;
  static constexpr double required_fraction = 0.95;
};

inline IndependenceReport check_independence(const HamiltonianSystem& sys,
                                             int n_samples, std::uint64_t seed) {
  sys.validate_family();
  int m = sys.dim();
  int k = m - 1;  // functions f0..f_{m-2}

  std::vector<std::vector<Expr>> grads(k);
  std::vector<VectorField> fields(k);
  for (int i = 0; i < k; ++i) {
    Expr f = sys.func(i);
    grads[i].resize(m);
    for (int a = 0; a < m; ++a) grads[i][a] = diff(f, sys.S.chart.coords[a]);
    fields[i] = hamiltonian_vf(sys.S, f);
  }

  std::vector<Expr> guards = sys.S.guard_exprs();
  for (int i = 0; i < k; ++i) {
    guards.insert(guards.end(), grads[i].begin(), grads[i].end());
    guards.insert(guards.end(), fields[i].comp.begin(), fields[i].comp.end());
  }
  auto pts = sample_box(sys.S.chart, guards, n_samples, seed);

  auto rank_of = [](const Eigen::MatrixXd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    double cut = kRankRelTol * sv(0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > cut) ++r;
    return r;
  };

  int grad_ok = 0, vf_ok = 0;
  for (const auto& p : pts) {
    Eigen::MatrixXd J(k, m), V(m, k);
    for (int i = 0; i < k; ++i)
      for (int a = 0; a < m; ++a) {
        J(i, a) = evaluate(grads[i][a], p);
        V(a, i) = evaluate(fields[i].comp[a], p);
      }
    if (rank_of(J) == k) ++grad_ok;
    if (rank_of(V) == k) ++vf_ok;
  }

  IndependenceReport rep;
  rep.samples = static_cast<int>(pts.size());
  rep.gradient_pass_fraction = static_cast<double>(grad_ok) / rep.samples;
  rep.vector_field_pass_fraction = static_cast<double>(vf_ok) / rep.samples;
  rep.gradient_pass = rep.gradient_pass_fraction >= IndependenceReport::required_fraction;
  rep.vector_field_pass =
      rep.vector_field_pass_fraction >= IndependenceReport::required_fraction;
  return rep;
}

// ---------------------------------------------------------------------------
// Closure
// ---------------------------------------------------------------------------

struct ClosurePair {
  int j = 0, i = 0;
  std::string mode;            // "symbolic" | "numeric"
  double max_residual = 0.0;   // symbolic mode
  double jump_fraction = 0.0;  // numeric mode: fraction of points with rank jump
  bool pass = false;
};

struct ClosureReport {
  std::vector<ClosurePair> pairs;
  int samples = 0;
  bool pass = false;
};

/// Residual check against a supplied closure table:
/// r = {f_j, f_i} - F_ji(f0..fj), pass iff |r| <= 1e-9 (1 + |{f_j,f_i}|).
inline ClosureReport check_closure_symbolic(const HamiltonianSystem& sys,
                                            int n_samples, std::uint64_t seed) {
  sys.validate_family();
  sys.validate_closure_schema();
  if (sys.closure.empty())
    throw StructureError("check_closure_symbolic requires a closure table");
  int m = sys.dim();

  struct Entry {
    int j, i;
    Expr bracket, resid;
  };
  std::vector<Entry> entries;
  std::vector<Expr> guards = sys.guard_exprs();
  for (int j = 1; j <= m - 2; ++j)
    for (int i = 0; i < j; ++i) {
      auto it = sys.closure.find({j, i});
      if (it == sys.closure.end())
        throw StructureError("closure table missing pair (" + std::to_string(j) +
                             "," + std::to_string(i) + ")");
      Expr br = jacobi_bracket(sys.S, sys.func(j), sys.func(i));
      Expr composed = sys.closure_composed(j, i);
      Expr resid = simplify(br - composed);
      guards.push_back(br);
      guards.push_back(resid);
      entries.push_back({j, i, br, resid});
    }

  auto pts = sample_box(sys.S.chart, guards, n_samples, seed);
  ClosureReport rep;
  rep.samples = static_cast<int>(pts.size());
  rep.pass = true;
  for (const auto& e : entries) {
    ClosurePair cp;
    cp.j = e.j;
    cp.i = e.i;
    cp.mode = "symbolic";
    cp.pass = true;
    for (const auto& p : pts) {
      double r = std::abs(evaluate(e.resid, p));
      double scale = 1.0 + std::abs(evaluate(e.bracket, p));
      cp.max_residual = std::max(cp.max_residual, r / scale);
      if (r > 1e-9 * scale) cp.pass = false;
    }
    rep.pass = rep.pass && cp.pass;
    rep.pairs.push_back(cp);
  }
  return rep;
}

/// Functional-dependence test without a table: dg must stay in
/// span{df0..dfj} for g = {f_j, f_i}, detected by rank comparison.
inline ClosureReport check_closure_numeric(const HamiltonianSystem& sys,
                                           int n_samples, std::uint64_t seed) {
  sys.validate_family();
  int m = sys.dim();

  struct Entry {
    int j, i;
    std::vector<Expr> base_grads;  // gradients of f0..fj
    std::vector<Expr> g_grad;
  };
  std::vector<Entry> entries;
  std::vector<Expr> guards = sys.S.guard_exprs();
  for (int j = 1; j <= m - 2; ++j)
    for (int i = 0; i < j; ++i) {
      Entry e;
      e.j = j;
      e.i = i;
      Expr g = jacobi_bracket(sys.S, sys.func(j), sys.func(i));
      for (int k = 0; k <= j; ++k) {
        Expr f = sys.func(k);
        for (int a = 0; a < m; ++a)
          e.base_grads.push_back(diff(f, sys.S.chart.coords[a]));
      }
      for (int a = 0; a < m; ++a) e.g_grad.push_back(diff(g, sys.S.chart.coords[a]));
      guards.insert(guards.end(), e.base_grads.begin(), e.base_grads.end());
      guards.insert(guards.end(), e.g_grad.begin(), e.g_grad.end());
      entries.push_back(std::move(e));
    }

  auto pts = sample_box(sys.S.chart, guards, n_samples, seed);

  auto rank_of = [](const Eigen::MatrixXd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    double cut = kRankRelTol * sv(0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > cut) ++r;
    return r;
  };

  ClosureReport rep;
  rep.samples = static_cast<int>(pts.size());
  rep.pass = true;
  for (const auto& e : entries) {
    ClosurePair cp;
    cp.j = e.j;
    cp.i = e.i;
    cp.mode = "numeric";
    int rows = e.j + 1;
    int jumps = 0;
    for (const auto& p : pts) {
      Eigen::MatrixXd A(rows, m), B(rows + 1, m);
      for (int r = 0; r < rows; ++r)
        for (int a = 0; a < m; ++a) {
          A(r, a) = evaluate(e.base_grads[r * m + a], p);
          B(r, a) = A(r, a);
        }
      for (int a = 0; a < m; ++a) B(rows, a) = evaluate(e.g_grad[a], p);
      if (rank_of(B) > rank_of(A)) ++jumps;
    }
    cp.jump_fraction = static_cast<double>(jumps) / rep.samples;
    cp.pass = jumps == 0;
    rep.pass = rep.pass && cp.pass;
    rep.pairs.push_back(cp);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reeb compatibility
// ---------------------------------------------------------------------------

struct ReebPair {
  int j = 0, i = 0;
  double max_residual = 0.0;  // least-squares defect of E_ji in span{X_f0..X_fj}
  bool pass = false;
};

struct ReebReport {
  std::vector<ReebPair> pairs;
  int samples = 0;
  bool auto_pass = false;  // E = 0
  bool pass = false;
};

inline ReebReport check_reeb_compatibility(const HamiltonianSystem& sys,
                                           int n_samples, std::uint64_t seed) {
  sys.validate_family();
  ReebReport rep;
  if (sys.S.poisson()) {
    rep.auto_pass = true;
    rep.pass = true;
    return rep;
  }
  if (sys.closure.empty())
    throw StructureError("check_reeb_compatibility requires a closure table");
  sys.validate_closure_schema();

  int m = sys.dim();
  VectorField E = sys.S.E();

  struct Entry {
    int j, i;
    Expr coeff;  // F - sum_k f_k dF/du_k, composed
  };
  std::vector<Entry> entries;
  for (const auto& [key, F] : sys.closure) {
    auto [j, i] = key;
    std::vector<Expr> terms;
    terms.push_back(F);
    for (int k = 0; k <= j; ++k) {
      std::string uk = "u" + std::to_string(k);
      terms.push_back(neg(Expr::symbol(uk) * diff(F, uk)));
    }
    Expr euler = Expr::sum(std::move(terms));
    std::map<std::string, Expr> bind;
    for (int k = 0; k <= j; ++k) bind["u" + std::to_string(k)] = sys.func(k);
    entries.push_back({j, i, simplify(substitute(euler, bind))});
  }

  std::vector<VectorField> fields(m - 1);
  for (int k = 0; k < m - 1; ++k) fields[k] = hamiltonian_vf(sys.S, sys.func(k));

  std::vector<Expr> guards = sys.guard_exprs();
  for (const auto& e : entries) guards.push_back(e.coeff);
  auto pts = sample_box(sys.S.chart, guards, n_samples, seed);

  rep.samples = static_cast<int>(pts.size());
  rep.pass = true;
  for (const auto& e : entries) {
    ReebPair rp;
    rp.j = e.j;
    rp.i = e.i;
    rp.pass = true;
    for (const auto& p : pts) {
      double c = evaluate(e.coeff, p);
      Eigen::VectorXd b(m);
      for (int a = 0; a < m; ++a) b(a) = c * evaluate(E.comp[a], p);
      Eigen::MatrixXd A(m, e.j + 1);
      for (int k = 0; k <= e.j; ++k)
        for (int a = 0; a < m; ++a) A(a, k) = evaluate(fields[k].comp[a], p);
      Eigen::VectorXd x = A.completeOrthogonalDecomposition().solve(b);
      double resid = (A * x - b).norm() / (1.0 + b.norm());
      rp.max_residual = std::max(rp.max_residual, resid);
      if (resid > 1e-8) rp.pass = false;
    }
    rep.pass = rep.pass && rp.pass;
    rep.pairs.push_back(rp);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Time-dependent extension
// ---------------------------------------------------------------------------

struct ExtensionOptions {
  std::string time_name = "t";
  std::string energy_name = "Ecoord";
  std::array<double, 2> time_box = {-1.0, 1.0};
  std::array<double, 2> energy_box = {-1.0, 1.0};
};

/// Extend H(q,p,t) to the autonomous system on (t, q..., Ecoord, p...) with
/// the canonical extended structure and f0 = H + Ecoord. The family is
/// pre-seeded with t; remaining slots are the caller's.
inline HamiltonianSystem extend_time_dependent(const Expr& H, const Chart& base,
                                               const ExtensionOptions& opt = {}) {
  base.validate();
  int n2 = base.dim();
  if (n2 % 2)
    throw StructureError("base chart must pair coordinates (q..., p...)");
  for (const auto& c : base.coords)
    if (c == opt.time_name || c == opt.energy_name)
      throw StructureError("coordinate '" + c + "' collides with the reserved name");
  for (const auto& v : free_variables(H)) {
    if (v == opt.energy_name)
      throw StructureError("Hamiltonian already uses the reserved energy symbol '" +
                           v + "'");
    if (v != opt.time_name &&
        std::find(base.coords.begin(), base.coords.end(), v) == base.coords.end())
      throw StructureError("Hamiltonian depends on '" + v +
                           "' which is neither a base coordinate nor time");
  }

  int n = n2 / 2;
  Chart ext;
  ext.coords.push_back(opt.time_name);
  for (int i = 0; i < n; ++i) ext.coords.push_back(base.coords[i]);
  ext.coords.push_back(opt.energy_name);
  for (int i = 0; i < n; ++i) ext.coords.push_back(base.coords[n + i]);
  ext.box.push_back(opt.time_box);
  for (int i = 0; i < n; ++i) ext.box.push_back(base.box[i]);
  ext.box.push_back(opt.energy_box);
  for (int i = 0; i < n; ++i) ext.box.push_back(base.box[n + i]);
  ext.eps_dom = base.eps_dom;

  int m = ext.dim();
  // Entries are -1 so the flow of H + Ecoord advances t at unit rate and
  // reproduces dq/dt = dH/dp, dp/dt = -dH/dq under this library's
  // vector-field pairing. The brackets are then {t, Ecoord} = {q, p} = -1.
  std::vector<Expr> upper(m * (m - 1) / 2, Expr::number(0LL));
  upper[JacobiStructure::upper_index(0, n + 1, m)] = Expr::number(-1LL);
  for (int i = 0; i < n; ++i)
    upper[JacobiStructure::upper_index(1 + i, n + 2 + i, m)] = Expr::number(-1LL);

  HamiltonianSystem sys;
  sys.S = JacobiStructure::make(ext, std::move(upper), std::nullopt);
  sys.H = simplify(H + Expr::symbol(opt.energy_name));
  sys.family.push_back(Expr::symbol(opt.time_name));
  return sys;
}

}  // namespace pfaff

#endif

#ifndef PFAFF_PFAFFIAN_HPP
#define PFAFF_PFAFFIAN_HPP

#include <string>
#include <vector>

#include "pfaff/cinf.hpp"
#include "pfaff/geometry.hpp"

namespace pfaff {

/// Skew matrix of expressions; only the strict upper triangle is stored.
struct SkewExprMatrix {
  int n = 0;
  std::vector<Expr> upper;  // row-major pairs (i,j), i < j

  static SkewExprMatrix zeros(int n) {
    SkewExprMatrix m;
    m.n = n;
    m.upper.assign(n * (n - 1) / 2, Expr::number(0LL));
    return m;
  }

  int idx(int i, int j) const { return i * (2 * n - i - 1) / 2 + (j - i - 1); }

  Expr at(int i, int j) const {
    if (i == j) return Expr::number(0LL);
    if (i < j) return upper[idx(i, j)];
    return neg(upper[idx(j, i)]);
  }

  void set(int i, int j, Expr v) {
    if (i == j) {
      if (!simplify(v).is_zero())
        throw StructureError("skew matrix must have zero diagonal");
      return;
    }
    if (i < j)
      upper[idx(i, j)] = std::move(v);
    else
      upper[idx(j, i)] = neg(std::move(v));
  }
};

namespace detail {

inline Expr pfaffian_active(const SkewExprMatrix& A, const std::vector<int>& act) {
  if (act.empty()) return Expr::number(1LL);
  std::vector<Expr> terms;
  int a0 = act.front();
  for (std::size_t t = 1; t < act.size(); ++t) {
    Expr entry = A.at(a0, act[t]);
    if (entry.is_zero()) continue;
    std::vector<int> rest;
    rest.reserve(act.size() - 2);
    for (std::size_t s = 1; s < act.size(); ++s)
      if (s != t) rest.push_back(act[s]);
    Expr sub = pfaffian_active(A, rest);
    Expr term = entry * sub;
    terms.push_back(t % 2 == 1 ? term : neg(term));
  }
  return simplify(Expr::sum(std::move(terms)));
}

}  // namespace detail

/// Symbolic Pfaffian by recursive first-row expansion:
/// Pf(A) = sum_{j>0} (-1)^j a_{0j} Pf(A with rows/cols 0,j removed).
/// Odd sizes give 0; the empty matrix gives 1.
inline Expr pfaffian(const SkewExprMatrix& A) {
  if (A.n % 2) return Expr::number(0LL);
  std::vector<int> act(A.n);
  for (int i = 0; i < A.n; ++i) act[i] = i;
  return detail::pfaffian_active(A, act);
}

/// m x m matrix of brackets over (f0,...,f_{m-1}); needs a function auxiliary.
inline SkewExprMatrix bracket_matrix(const HamiltonianSystem& sys) {
  sys.validate_family();
  if (!sys.has_function_auxiliary())
    throw StructureError("bracket_matrix requires the auxiliary function f_{m-1}");
  int m = sys.dim();
  SkewExprMatrix F = SkewExprMatrix::zeros(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      F.set(i, j, jacobi_bracket(sys.S, sys.func(i), sys.func(j)));
  return F;
}

enum class FormsPath { MinorFormula, Contraction };

/// The ordered Pfaffian 1-forms (w_1,...,w_{m-1}) with provenance.
struct PfaffianSequence {
  std::vector<KForm> forms;  // forms[i] is w_{i+1}
  FormsPath path = FormsPath::Contraction;
};

/// Symplectic minor-formula path:
/// w_i = sum_{k != i} (-1)^k sgn(i-k) Pf(F with rows/cols i,k removed) df_k.
inline PfaffianSequence forms_minor(const HamiltonianSystem& sys) {
  sys.validate_family();
  int m = sys.dim();
  if (m % 2)
    throw StructureError("minor-formula path needs an even-dimensional chart; "
                         "use the contraction path");
  if (!sys.S.poisson())
    throw StructureError("minor-formula path needs E = 0; use the contraction path");
  SkewExprMatrix F = bracket_matrix(sys);

  // precompute coordinate differentials of f_0..f_{m-1}
  std::vector<std::vector<Expr>> df(m, std::vector<Expr>(m));
  for (int k = 0; k < m; ++k)
    for (int a = 0; a < m; ++a) df[k][a] = diff(sys.func(k), sys.S.chart.coords[a]);

  PfaffianSequence seq;
  seq.path = FormsPath::MinorFormula;
  for (int i = 1; i <= m - 1; ++i) {
    KForm w;
    w.degree = 1;
    for (int k = 0; k < m; ++k) {
      if (k == i) continue;
      std::vector<int> act;
      for (int r = 0; r < m; ++r)
        if (r != i && r != k) act.push_back(r);
      Expr pf = detail::pfaffian_active(F, act);
      if (pf.is_zero()) continue;
      int sign = ((k % 2 == 0) ? 1 : -1) * (i > k ? 1 : -1);
      Expr coeffc = sign == 1 ? pf : neg(pf);
      for (int a = 0; a < m; ++a) {
        if (df[k][a].is_zero()) continue;
        w.accumulate({a}, coeffc * df[k][a]);
      }
    }
    w.simplify_coeffs();
    seq.forms.push_back(std::move(w));
  }
  return seq;
}

/// General contraction path against the coordinate volume: the dx^a
/// coefficient of w_i is det of the component matrix of
/// (X_{f_0},...,X-hat_i,...,X_{f_{m-1}}, e_a).
inline PfaffianSequence forms_contraction(const HamiltonianSystem& sys) {
  sys.validate_family();
  int m = sys.dim();
  std::vector<VectorField> fields;
  for (int k = 0; k <= m - 2; ++k)
    fields.push_back(hamiltonian_vf(sys.S, sys.func(k)));
  fields.push_back(sys.auxiliary_field());
  if (fields.back().dim() != m)
    throw StructureError("auxiliary field has wrong dimension");

  PfaffianSequence seq;
  seq.path = FormsPath::Contraction;
  for (int i = 1; i <= m - 1; ++i) {
    KForm w;
    w.degree = 1;
    for (int a = 0; a < m; ++a) {
      ExprMatrix M(m, std::vector<Expr>(m));
      for (int r = 0; r < m; ++r) {
        int col = 0;
        for (int k = 0; k < m; ++k) {
          if (k == i) continue;
          M[r][col++] = fields[k].comp[r];
        }
        M[r][m - 1] = Expr::number(r == a ? 1LL : 0LL);
      }
      Expr c = sym_det(M);
      if (!c.is_zero()) w.coeffs[{a}] = c;
    }
    seq.forms.push_back(std::move(w));
  }
  return seq;
}

struct CrossCheckReport {
  double factor = 0.0;    // contraction = factor * minor
  double max_dev = 0.0;   // max |contraction - factor * minor|, scaled
  int samples = 0;
  bool pass = false;
  static constexpr double tolerance = 1e-8;
};

/// Both paths must agree up to one constant factor across every form and
/// sample point (the Liouville-vs-coordinate volume normalization).
inline CrossCheckReport cross_check_paths(const HamiltonianSystem& sys,
                                          int n_samples, std::uint64_t seed) {
  PfaffianSequence minor = forms_minor(sys);
  PfaffianSequence contr = forms_contraction(sys);

  std::vector<Expr> guards = sys.guard_exprs();
  for (const auto* seq : {&minor, &contr})
    for (const auto& f : seq->forms)
      for (const auto& [idx, c] : f.coeffs) guards.push_back(c);
  auto pts = sample_box(sys.S.chart, guards, n_samples, seed);

  int m = sys.dim();
  std::vector<std::pair<double, double>> pairs;  // (minor, contraction)
  for (const auto& p : pts)
    for (int i = 0; i < m - 1; ++i)
      for (int a = 0; a < m; ++a) {
        double u = evaluate(minor.forms[i].coeff({a}), p);
        double v = evaluate(contr.forms[i].coeff({a}), p);
        pairs.emplace_back(u, v);
      }

  double uu = 0.0, uv = 0.0, scale = 1.0;
  for (auto [u, v] : pairs) {
    uu += u * u;
    uv += u * v;
    scale = std::max({scale, std::abs(u), std::abs(v)});
  }
  CrossCheckReport rep;
  rep.samples = static_cast<int>(pts.size());
  if (uu == 0.0) {
    rep.pass = false;
    return rep;
  }
  rep.factor = uv / uu;
  for (auto [u, v] : pairs)
    rep.max_dev = std::max(rep.max_dev, std::abs(v - rep.factor * u) / scale);
  rep.pass = rep.max_dev <= CrossCheckReport::tolerance;
  return rep;
}

}  // namespace pfaff

#endif

#ifndef PFAFF_GEOMETRY_HPP
#define PFAFF_GEOMETRY_HPP

#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pfaff/errors.hpp"
#include "pfaff/expr.hpp"
#include "pfaff/rng.hpp"

namespace pfaff {

// ---------------------------------------------------------------------------
// Chart and sampling
// ---------------------------------------------------------------------------

/// Single coordinate chart with a sampling box and a singular-guard margin.
struct Chart {
  std::vector<std::string> coords;
  std::vector<std::array<double, 2>> box;
  double eps_dom = 1e-6;

  int dim() const { return static_cast<int>(coords.size()); }

  int index(const std::string& name) const {
    for (int i = 0; i < dim(); ++i)
      if (coords[i] == name) return i;
    throw StructureError("coordinate '" + name + "' not in chart");
  }

  void validate() const {
    if (coords.empty()) throw StructureError("chart has no coordinates");
    if (box.size() != coords.size())
      throw StructureError("sample box does not cover all coordinates");
    for (std::size_t i = 0; i < coords.size(); ++i) {
      for (std::size_t j = i + 1; j < coords.size(); ++j)
        if (coords[i] == coords[j])
          throw StructureError("duplicate coordinate '" + coords[i] + "'");
      if (!(box[i][0] < box[i][1]))
        throw StructureError("degenerate interval for '" + coords[i] + "'");
    }
  }

  Point point_from(const std::vector<double>& x) const {
    Point p;
    for (int i = 0; i < dim(); ++i) p[coords[i]] = x[i];
    return p;
  }
};

/// Rejection sampling over the chart box. Points where any guard expression
/// trips a singular-guard (denominator, log, root, inverse-trig margin) are
/// resampled, up to 100x oversampling.
inline std::vector<Point> sample_box(const Chart& chart,
                                     const std::vector<Expr>& guards, int n,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> out;
  long long tries = 0, max_tries = 100LL * n + 100;
  while (static_cast<int>(out.size()) < n && tries < max_tries) {
    ++tries;
    Point p;
    for (int i = 0; i < chart.dim(); ++i)
      p[chart.coords[i]] = rng.uniform(chart.box[i][0], chart.box[i][1]);
    bool ok = true;
    for (const auto& g : guards) {
      if (!evaluate_guarded(g, p, chart.eps_dom)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(std::move(p));
  }
  if (static_cast<int>(out.size()) < n)
    throw SamplingError("could not draw " + std::to_string(n) +
                        " guarded points from the box (got " +
                        std::to_string(out.size()) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// Vector fields and differential forms
// ---------------------------------------------------------------------------

struct VectorField {
  std::vector<Expr> comp;

  int dim() const { return static_cast<int>(comp.size()); }

  /// Directional derivative X(g).
  Expr apply(const Chart& chart, const Expr& g) const {
    std::vector<Expr> terms;
    for (int a = 0; a < dim(); ++a)
      terms.push_back(comp[a] * diff(g, chart.coords[a]));
    return simplify(Expr::sum(std::move(terms)));
  }
};

/// k-form as a sparse map from strictly increasing index tuples to
/// coefficients; an absent tuple is a zero coefficient.
struct KForm {
  int degree = 0;
  std::map<std::vector<int>, Expr> coeffs;

  /// Accumulate c on an arbitrary index tuple; sorts and applies the sign,
  /// dropping tuples with repeated indices.
  void accumulate(std::vector<int> idx, const Expr& c) {
    int sign = 1;
    for (std::size_t i = 0; i + 1 < idx.size(); ++i)
      for (std::size_t j = 0; j + 1 < idx.size() - i; ++j)
        if (idx[j] > idx[j + 1]) {
          std::swap(idx[j], idx[j + 1]);
          sign = -sign;
        }
    for (std::size_t i = 0; i + 1 < idx.size(); ++i)
      if (idx[i] == idx[i + 1]) return;
    Expr add = sign == 1 ? c : neg(c);
    auto it = coeffs.find(idx);
    if (it == coeffs.end())
      coeffs.emplace(std::move(idx), add);
    else
      it->second = it->second + add;
  }

  void simplify_coeffs() {
    for (auto it = coeffs.begin(); it != coeffs.end();) {
      it->second = simplify(it->second);
      if (it->second.is_zero())
        it = coeffs.erase(it);
      else
        ++it;
    }
  }

  Expr coeff(const std::vector<int>& idx) const {
    auto it = coeffs.find(idx);
    return it == coeffs.end() ? Expr::number(0LL) : it->second;
  }
};

/// Exterior differential df as a 1-form.
inline KForm differential(const Chart& chart, const Expr& f) {
  KForm w;
  w.degree = 1;
  for (int a = 0; a < chart.dim(); ++a) {
    Expr d = diff(f, chart.coords[a]);
    if (!d.is_zero()) w.coeffs[{a}] = d;
  }
  return w;
}

/// Exterior derivative; d(c dx^J) = sum_a d_a(c) dx^a ^ dx^J.
inline KForm exterior_derivative(const Chart& chart, const KForm& alpha) {
  KForm out;
  out.degree = alpha.degree + 1;
  for (const auto& [idx, c] : alpha.coeffs) {
    for (int a = 0; a < chart.dim(); ++a) {
      Expr dc = diff(c, chart.coords[a]);
      if (dc.is_zero()) continue;
      std::vector<int> t;
      t.push_back(a);
      t.insert(t.end(), idx.begin(), idx.end());
      out.accumulate(std::move(t), dc);
    }
  }
  out.simplify_coeffs();
  return out;
}

/// Symbolic wedge product.
inline KForm wedge(const KForm& a, const KForm& b) {
  KForm out;
  out.degree = a.degree + b.degree;
  for (const auto& [ia, ca] : a.coeffs)
    for (const auto& [ib, cb] : b.coeffs) {
      std::vector<int> t = ia;
      t.insert(t.end(), ib.begin(), ib.end());
      out.accumulate(std::move(t), ca * cb);
    }
  out.simplify_coeffs();
  return out;
}

// Numeric forms: coefficients evaluated at a point.
using NumKForm = std::map<std::vector<int>, double>;

inline NumKForm evaluate_form(const KForm& f, const Point& p) {
  NumKForm out;
  for (const auto& [idx, c] : f.coeffs) out[idx] = evaluate(c, p);
  return out;
}

namespace detail {

/// (alpha ^ beta)(e_I) accumulation where beta has degree 1; tracks the
/// largest summand magnitude for residual scaling.
inline NumKForm wedge_num(const NumKForm& alpha, int deg_alpha,
                          const NumKForm& beta1, double* max_term) {
  NumKForm out;
  for (const auto& [ia, ca] : alpha) {
    for (const auto& [ib, cb] : beta1) {
      int b = ib[0];
      bool dup = false;
      int pos = 0;
      for (int v : ia) {
        if (v == b) {
          dup = true;
          break;
        }
        if (v < b) ++pos;
      }
      if (dup) continue;
      std::vector<int> t = ia;
      t.insert(t.begin() + pos, b);
      int sign = ((deg_alpha - pos) % 2 == 0) ? 1 : -1;
      double term = sign * ca * cb;
      if (max_term && std::abs(term) > *max_term) *max_term = std::abs(term);
      out[t] += term;
    }
  }
  return out;
}

}  // namespace detail

/// Value of (f1 ^ ... ^ fr)(e_{i1},...,e_{ik}) at p, expanded over shuffles.
inline double wedge_evaluate(const std::vector<KForm>& forms, const Point& p,
                             const std::vector<int>& indices) {
  int total = 0;
  for (const auto& f : forms) total += f.degree;
  if (total != static_cast<int>(indices.size()))
    throw StructureError("wedge_evaluate: index tuple length mismatch");
  if (forms.empty()) return 1.0;

  std::vector<NumKForm> evs;
  evs.reserve(forms.size());
  for (const auto& f : forms) evs.push_back(evaluate_form(f, p));

  // recursive shuffle expansion over which indices feed the first factor
  struct Rec {
    const std::vector<NumKForm>& evs;
    const std::vector<KForm>& forms;
    double run(std::size_t fi, std::vector<int> idx) {
      if (fi == evs.size()) return idx.empty() ? 1.0 : 0.0;
      int k = forms[fi].degree;
      int n = static_cast<int>(idx.size());
      if (k > n) return 0.0;
      double total = 0.0;
      std::vector<int> sel(k);
      std::vector<bool> used(n, false);
      // iterate over k-subsets in lexicographic order
      std::vector<int> comb(k);
      for (int i = 0; i < k; ++i) comb[i] = i;
      for (;;) {
        std::vector<int> chosen, rest;
        for (int i = 0, c = 0; i < n; ++i) {
          if (c < k && comb[c] == i) {
            chosen.push_back(idx[i]);
            ++c;
          } else {
            rest.push_back(idx[i]);
          }
        }
        // shuffle sign: number of inversions moving chosen to the front
        int inv = 0;
        for (int i = 0; i < k; ++i) inv += comb[i] - i;
        auto it = evs[fi].find(chosen);
        if (it != evs[fi].end() && it->second != 0.0) {
          double sub = run(fi + 1, rest);
          total += ((inv % 2) ? -1.0 : 1.0) * it->second * sub;
        }
        int i = k - 1;
        while (i >= 0 && comb[i] == n - k + i) --i;
        if (i < 0) break;
        ++comb[i];
        for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
      }
      return total;
    }
  } rec{evs, forms};
  return rec.run(0, indices);
}

// ---------------------------------------------------------------------------
// Jacobi structures
// ---------------------------------------------------------------------------

/// Bivector Lambda (strict upper triangle) plus vector field E over a chart.
/// A structure declared Poisson/symplectic holds no E and the bracket drops
/// the affine terms exactly.
struct JacobiStructure {
  Chart chart;
  std::vector<Expr> lambda_upper;            // index (a,b), a<b, row-major
  std::optional<std::vector<Expr>> E_comp;   // absent <=> Poisson

  int dim() const { return chart.dim(); }

  static int upper_index(int a, int b, int m) {
    // a < b
    return a * (2 * m - a - 1) / 2 + (b - a - 1);
  }

  static JacobiStructure make(Chart chart, std::vector<Expr> upper,
                              std::optional<std::vector<Expr>> E) {
    JacobiStructure s;
    s.chart = std::move(chart);
    s.chart.validate();
    int m = s.chart.dim();
    if (static_cast<int>(upper.size()) != m * (m - 1) / 2)
      throw StructureError("lambda upper triangle has wrong size");
    if (E && static_cast<int>(E->size()) != m)
      throw StructureError("E component count does not match chart dimension");
    s.lambda_upper = std::move(upper);
    s.E_comp = std::move(E);
    return s;
  }

  bool poisson() const { return !E_comp.has_value(); }

  Expr lambda(int a, int b) const {
    if (a == b) return Expr::number(0LL);
    int m = dim();
    if (a < b) return lambda_upper[upper_index(a, b, m)];
    return neg(lambda_upper[upper_index(b, a, m)]);
  }

  VectorField E() const {
    VectorField v;
    if (E_comp) {
      v.comp = *E_comp;
    } else {
      v.comp.assign(dim(), Expr::number(0LL));
    }
    return v;
  }

  /// Expressions whose singularities bound the structure's domain; used as
  /// sampling guards.
  std::vector<Expr> guard_exprs() const {
    std::vector<Expr> g = lambda_upper;
    if (E_comp) g.insert(g.end(), E_comp->begin(), E_comp->end());
    return g;
  }

  void check_function(const Expr& f, const char* what) const {
    for (const auto& v : free_variables(f))
      if (std::find(chart.coords.begin(), chart.coords.end(), v) ==
          chart.coords.end())
        throw StructureError(std::string(what) + " depends on '" + v +
                             "' which is not a chart coordinate");
  }
};

/// {f,g} = sum_{a<b} L^{ab} (d_a f d_b g - d_b f d_a g) + f E(g) - g E(f)
inline Expr jacobi_bracket(const JacobiStructure& S, const Expr& f,
                           const Expr& g) {
  S.check_function(f, "bracket argument");
  S.check_function(g, "bracket argument");
  int m = S.dim();
  std::vector<Expr> df(m), dg(m);
  for (int a = 0; a < m; ++a) {
    df[a] = diff(f, S.chart.coords[a]);
    dg[a] = diff(g, S.chart.coords[a]);
  }
  std::vector<Expr> terms;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      Expr lab = S.lambda(a, b);
      if (lab.is_zero()) continue;
      terms.push_back(lab * (df[a] * dg[b] - df[b] * dg[a]));
    }
  if (!S.poisson()) {
    VectorField E = S.E();
    terms.push_back(f * E.apply(S.chart, g));
    terms.push_back(neg(g * E.apply(S.chart, f)));
  }
  return simplify(Expr::sum(std::move(terms)));
}

/// X_f with components X^a = sum_b L^{ba} d_b f - f E^a.
///
/// The slot/sign here is the one that pairs with jacobi_bracket: it makes
/// f -> X_f a Lie-algebra morphism on Poisson structures ([X_f,X_g] =
/// X_{{f,g}}), reproduces the reference Hamiltonian fields of the contact
/// and conformally-symplectic test structures, and keeps every bracket
/// fixture ({q,p}=1, {1,z}=1 contact, {1,e^x y}=1 LCS, {w,c}=2) intact.
inline VectorField hamiltonian_vf(const JacobiStructure& S, const Expr& f) {
  S.check_function(f, "Hamiltonian");
  int m = S.dim();
  std::vector<Expr> df(m);
  for (int b = 0; b < m; ++b) df[b] = diff(f, S.chart.coords[b]);
  VectorField X;
  X.comp.resize(m);
  VectorField E = S.E();
  for (int a = 0; a < m; ++a) {
    std::vector<Expr> terms;
    for (int b = 0; b < m; ++b) {
      if (a == b) continue;
      Expr lab = S.lambda(b, a);
      if (lab.is_zero() || df[b].is_zero()) continue;
      terms.push_back(lab * df[b]);
    }
    if (!S.poisson() && !E.comp[a].is_zero())
      terms.push_back(neg(f * E.comp[a]));
    X.comp[a] = simplify(Expr::sum(std::move(terms)));
  }
  return X;
}

// ---------------------------------------------------------------------------
// Symbolic linear algebra helpers (adjugate inversion; m <= 8)
// ---------------------------------------------------------------------------

using ExprMatrix = std::vector<std::vector<Expr>>;

inline Expr sym_det(const ExprMatrix& m) {
  std::size_t n = m.size();
  if (n == 0) return Expr::number(1LL);
  if (n == 1) return m[0][0];
  std::vector<Expr> terms;
  for (std::size_t r = 0; r < n; ++r) {
    if (m[r][0].is_zero()) continue;
    ExprMatrix minor;
    minor.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == r) continue;
      std::vector<Expr> row;
      row.reserve(n - 1);
      for (std::size_t j = 1; j < n; ++j) row.push_back(m[i][j]);
      minor.push_back(std::move(row));
    }
    Expr t = m[r][0] * sym_det(minor);
    terms.push_back(r % 2 == 0 ? t : neg(t));
  }
  return simplify(Expr::sum(std::move(terms)));
}

inline ExprMatrix sym_inverse(const ExprMatrix& m, const Expr& det) {
  std::size_t n = m.size();
  ExprMatrix inv(n, std::vector<Expr>(n));
  Expr inv_det = Expr::power(det, Rational(-1));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      ExprMatrix minor;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == b) continue;
        std::vector<Expr> row;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == a) continue;
          row.push_back(m[i][j]);
        }
        minor.push_back(std::move(row));
      }
      Expr c = sym_det(minor) * inv_det;
      inv[a][b] = simplify((a + b) % 2 == 0 ? c : neg(c));
    }
  return inv;
}

namespace detail {

inline ExprMatrix form2_matrix(const Chart& chart, const KForm& w) {
  int m = chart.dim();
  ExprMatrix W(m, std::vector<Expr>(m, Expr::number(0LL)));
  for (const auto& [idx, c] : w.coeffs) {
    W[idx[0]][idx[1]] = c;
    W[idx[1]][idx[0]] = neg(c);
  }
  return W;
}

inline void check_nondegenerate(const Chart& chart, const Expr& det,
                                std::uint64_t seed) {
  auto pts = sample_box(chart, {}, 16, seed);
  for (const auto& p : pts) {
    auto v = evaluate_guarded(det, p, chart.eps_dom);
    if (!v || std::abs(*v) < chart.eps_dom)
      throw StructureError("degenerate 2-form: |det| below eps_dom on the sample box");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Converters from classical data
// ---------------------------------------------------------------------------

/// Symplectic 2-form -> Poisson structure. The sign is fixed so that
/// omega = dq ^ dp yields {q, p} = +1.
inline JacobiStructure symplectic_to_jacobi(const Chart& chart, const KForm& omega,
                                            std::uint64_t seed = 1) {
  int m = chart.dim();
  if (m % 2) throw StructureError("symplectic chart must be even-dimensional");
  if (omega.degree != 2) throw StructureError("omega must be a 2-form");
  ExprMatrix W = detail::form2_matrix(chart, omega);
  Expr det = sym_det(W);
  detail::check_nondegenerate(chart, det, seed);
  ExprMatrix Winv = sym_inverse(W, det);
  std::vector<Expr> upper;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) upper.push_back(simplify(neg(Winv[a][b])));
  return JacobiStructure::make(chart, std::move(upper), std::nullopt);
}

struct LcsReport {
  double max_dtheta_residual = 0.0;
  double max_lee_residual = 0.0;  // dOmega - theta ^ Omega
  bool pass = true;
};

/// Locally conformally symplectic data -> Jacobi structure.
/// Lambda = W^{-1}; E = Lambda#(theta) with E^a = sum_b Lambda^{ab} theta_b.
/// The sign is fixed so that the bracket fixture {1, e^x y} = 1 holds on
/// Omega = e^x(dx^dy + dw^dz), theta = dx.
inline JacobiStructure lcs_to_jacobi(const Chart& chart, const KForm& Omega,
                                     const KForm& theta, std::uint64_t seed,
                                     LcsReport* report = nullptr) {
  int m = chart.dim();
  if (m % 2) throw StructureError("LCS chart must be even-dimensional");
  if (Omega.degree != 2 || theta.degree != 1)
    throw StructureError("LCS data must be a 2-form and a 1-form");

  KForm dtheta = exterior_derivative(chart, theta);
  KForm dOmega = exterior_derivative(chart, Omega);
  KForm thOmega = wedge(theta, Omega);
  KForm lee;
  lee.degree = 3;
  for (const auto& [idx, c] : dOmega.coeffs) lee.accumulate(idx, c);
  for (const auto& [idx, c] : thOmega.coeffs) lee.accumulate(idx, neg(c));
  lee.simplify_coeffs();

  LcsReport rep;
  auto pts = sample_box(chart, {}, 16, seed);
  for (const auto& p : pts) {
    for (const auto& [idx, c] : dtheta.coeffs) {
      auto v = evaluate_guarded(c, p, chart.eps_dom);
      if (v) rep.max_dtheta_residual = std::max(rep.max_dtheta_residual, std::abs(*v));
    }
    for (const auto& [idx, c] : lee.coeffs) {
      auto v = evaluate_guarded(c, p, chart.eps_dom);
      if (v) rep.max_lee_residual = std::max(rep.max_lee_residual, std::abs(*v));
    }
  }
  rep.pass = rep.max_dtheta_residual <= 1e-9 && rep.max_lee_residual <= 1e-9;
  if (report) *report = rep;
  if (!rep.pass)
    throw StructureError("not an LCS structure: d(theta)=0 or d(Omega)=theta^Omega "
                         "fails at a sample point");

  ExprMatrix W = detail::form2_matrix(chart, Omega);
  Expr det = sym_det(W);
  detail::check_nondegenerate(chart, det, seed);
  ExprMatrix Winv = sym_inverse(W, det);

  std::vector<Expr> upper;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) upper.push_back(Winv[a][b]);

  auto lam = [&](int a, int b) -> Expr {
    if (a == b) return Expr::number(0LL);
    return a < b ? Winv[a][b] : neg(Winv[b][a]);
  };
  std::vector<Expr> E(m, Expr::number(0LL));
  bool e_zero = true;
  for (int a = 0; a < m; ++a) {
    std::vector<Expr> terms;
    for (int b = 0; b < m; ++b) {
      Expr tb = theta.coeff({b});
      if (tb.is_zero()) continue;
      terms.push_back(lam(a, b) * tb);
    }
    E[a] = simplify(Expr::sum(std::move(terms)));
    if (!E[a].is_zero()) e_zero = false;
  }
  if (e_zero)  // theta = 0 specializes to a plain Poisson structure
    return JacobiStructure::make(chart, std::move(upper), std::nullopt);
  return JacobiStructure::make(chart, std::move(upper), std::move(E));
}

/// Contact form -> Jacobi structure on an odd-dimensional chart.
/// b(X) = X . d(eta) + eta(X) eta; the Reeb field solves b(R) = eta;
/// Lambda(a,b) = d(eta)(b^{-1}dx^a, b^{-1}dx^b); E = R. Signs fixed by the
/// bracket fixture {1, z} = 1 on eta = dz - y dx.
inline JacobiStructure contact_to_jacobi(const Chart& chart, const KForm& eta,
                                         std::uint64_t seed = 1) {
  int m = chart.dim();
  if (m % 2 == 0) throw StructureError("contact chart must be odd-dimensional");
  if (eta.degree != 1) throw StructureError("eta must be a 1-form");

  KForm deta = exterior_derivative(chart, eta);
  ExprMatrix D = detail::form2_matrix(chart, deta);
  ExprMatrix B(m, std::vector<Expr>(m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      B[a][b] = simplify(D[a][b] + eta.coeff({a}) * eta.coeff({b}));

  Expr det = sym_det(B);
  try {
    detail::check_nondegenerate(chart, det, seed);
  } catch (const StructureError&) {
    throw StructureError("eta is not a contact form on the sample box");
  }
  ExprMatrix Binv = sym_inverse(B, det);

  // v_a = b^{-1}(dx^a) solves B^T v = e_a, i.e. v_a^c = Binv[a][c]
  std::vector<Expr> R(m);
  for (int a = 0; a < m; ++a) {
    std::vector<Expr> terms;
    for (int b = 0; b < m; ++b) {
      Expr eb = eta.coeff({b});
      if (eb.is_zero()) continue;
      terms.push_back(Binv[b][a] * eb);
    }
    R[a] = simplify(Expr::sum(std::move(terms)));
  }

  std::vector<Expr> upper;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      std::vector<Expr> terms;
      for (int c = 0; c < m; ++c)
        for (int d = c + 1; d < m; ++d) {
          Expr w = D[c][d];
          if (w.is_zero()) continue;
          terms.push_back(w * (Binv[a][c] * Binv[b][d] - Binv[a][d] * Binv[b][c]));
        }
      upper.push_back(simplify(Expr::sum(std::move(terms))));
    }
  return JacobiStructure::make(chart, std::move(upper), std::move(R));
}

// ---------------------------------------------------------------------------
// Structure-axiom check
// ---------------------------------------------------------------------------

/// Normalization of the Jacobiator's E-term. Calibrated once so the contact
/// and LCS reference structures both satisfy the compatibility identities,
/// then frozen.
inline constexpr double kSchoutenKappa = 1.0;

struct AxiomsReport {
  double max_lie_residual = 0.0;        // L_E Lambda
  double max_jacobiator_residual = 0.0; // [Lambda,Lambda] - 2 E ^ Lambda
  int samples = 0;
  bool lie_pass = false;
  bool jacobiator_pass = false;
  bool pass = false;
  static constexpr double tolerance = 1e-9;
};

inline AxiomsReport check_jacobi_axioms(const JacobiStructure& S, int n_samples,
                                        std::uint64_t seed) {
  int m = S.dim();
  const auto& coords = S.chart.coords;
  VectorField E = S.E();

  std::vector<Expr> residuals;

  // (L_E Lambda)^{ab} = E^d d_d L^{ab} - L^{db} d_d E^a - L^{ad} d_d E^b
  std::vector<Expr> lie;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      std::vector<Expr> terms;
      for (int d = 0; d < m; ++d) {
        terms.push_back(E.comp[d] * diff(S.lambda(a, b), coords[d]));
        terms.push_back(neg(S.lambda(d, b) * diff(E.comp[a], coords[d])));
        terms.push_back(neg(S.lambda(a, d) * diff(E.comp[b], coords[d])));
      }
      lie.push_back(simplify(Expr::sum(std::move(terms))));
    }

  // J^{abc} = sum_d (L^{da} d_d L^{bc} + cyc) - kappa (E^a L^{bc} + cyc)
  std::vector<Expr> jac;
  Expr kappa = Expr::number(Number(kSchoutenKappa));
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      for (int c = b + 1; c < m; ++c) {
        std::vector<Expr> terms;
        for (int d = 0; d < m; ++d) {
          terms.push_back(S.lambda(d, a) * diff(S.lambda(b, c), coords[d]));
          terms.push_back(S.lambda(d, b) * diff(S.lambda(c, a), coords[d]));
          terms.push_back(S.lambda(d, c) * diff(S.lambda(a, b), coords[d]));
        }
        if (!S.poisson()) {
          terms.push_back(neg(kappa * (E.comp[a] * S.lambda(b, c))));
          terms.push_back(neg(kappa * (E.comp[b] * S.lambda(c, a))));
          terms.push_back(neg(kappa * (E.comp[c] * S.lambda(a, b))));
        }
        jac.push_back(simplify(Expr::sum(std::move(terms))));
      }

  AxiomsReport rep;
  auto guards = S.guard_exprs();
  auto pts = sample_box(S.chart, guards, n_samples, seed);
  for (const auto& p : pts) {
    for (const auto& r : lie) {
      auto v = evaluate_guarded(r, p, S.chart.eps_dom);
      if (v) rep.max_lie_residual = std::max(rep.max_lie_residual, std::abs(*v));
    }
    for (const auto& r : jac) {
      auto v = evaluate_guarded(r, p, S.chart.eps_dom);
      if (v)
        rep.max_jacobiator_residual =
            std::max(rep.max_jacobiator_residual, std::abs(*v));
    }
  }
  rep.samples = static_cast<int>(pts.size());
  rep.lie_pass = rep.max_lie_residual <= AxiomsReport::tolerance;
  rep.jacobiator_pass = rep.max_jacobiator_residual <= AxiomsReport::tolerance;
  rep.pass = rep.lie_pass && rep.jacobiator_pass;
  return rep;
}

}  // namespace pfaff

#endif

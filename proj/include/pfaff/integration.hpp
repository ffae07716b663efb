#ifndef PFAFF_INTEGRATION_HPP
#define PFAFF_INTEGRATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pfaff/pfaffian.hpp"

namespace pfaff {

// ---------------------------------------------------------------------------
// Level sets
// ---------------------------------------------------------------------------

/// Nested level set: constraints expr = value accumulated while walking the
/// integral chain. Each constraint owns a parameter symbol (c3, c2, ...)
/// that later stages may reference symbolically.
struct LevelSet {
  struct Constraint {
    Expr expr;
    double value = 0.0;
    std::string symbol;  // e.g. "c3"; empty if anonymous
  };
  std::vector<Constraint> constraints;

  /// Extend a point with the parameter bindings.
  void bind(Point& p) const {
    for (const auto& c : constraints)
      if (!c.symbol.empty()) p[c.symbol] = c.value;
  }

  std::map<std::string, Expr> symbol_values() const {
    std::map<std::string, Expr> m;
    for (const auto& c : constraints)
      if (!c.symbol.empty()) m[c.symbol] = Expr::number(c.value);
    return m;
  }
};

/// Newton (Gauss-Newton) projection of random box seeds onto the level set.
/// Half-step damping on residual increase, <= 50 iterations, returns only
/// converged in-box points; oversamples 100x before giving up.
inline std::vector<Point> sample_level_set(const Chart& chart, const LevelSet& L,
                                           int n_points, std::uint64_t seed,
                                           double newton_tol = 1e-10) {
  int m = chart.dim();
  int r = static_cast<int>(L.constraints.size());
  if (r > m - 1)
    throw StructureError("level set has more constraints than chart dimension - 1");

  std::vector<std::vector<Expr>> grads(r, std::vector<Expr>(m));
  for (int i = 0; i < r; ++i)
    for (int a = 0; a < m; ++a)
      grads[i][a] = diff(L.constraints[i].expr, chart.coords[a]);

  Rng rng(seed);
  std::vector<Point> out;
  long long tries = 0, max_tries = 100LL * n_points + 100;
  while (static_cast<int>(out.size()) < n_points && tries < max_tries) {
    ++tries;
    Eigen::VectorXd x(m);
    for (int a = 0; a < m; ++a) x(a) = rng.uniform(chart.box[a][0], chart.box[a][1]);

    auto residual = [&](const Eigen::VectorXd& v,
                        Eigen::VectorXd& g) -> bool {
      Point p = chart.point_from(std::vector<double>(v.data(), v.data() + m));
      L.bind(p);
      for (int i = 0; i < r; ++i) {
        auto val = evaluate_guarded(L.constraints[i].expr, p, chart.eps_dom);
        if (!val) return false;
        g(i) = *val - L.constraints[i].value;
      }
      return true;
    };

    if (r == 0) {
      out.push_back(chart.point_from(std::vector<double>(x.data(), x.data() + m)));
      continue;
    }

    Eigen::VectorXd g(r);
    if (!residual(x, g)) continue;
    bool converged = g.norm() <= newton_tol;
    for (int it = 0; it < 50 && !converged; ++it) {
      Point p = chart.point_from(std::vector<double>(x.data(), x.data() + m));
      L.bind(p);
      Eigen::MatrixXd J(r, m);
      bool ok = true;
      for (int i = 0; i < r && ok; ++i)
        for (int a = 0; a < m; ++a) {
          auto val = evaluate_guarded(grads[i][a], p, chart.eps_dom);
          if (!val) {
            ok = false;
            break;
          }
          J(i, a) = *val;
        }
      if (!ok) break;
      Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-g);
      double g0 = g.norm();
      Eigen::VectorXd xn;
      Eigen::VectorXd gn(r);
      bool accepted = false;
      double damp = 1.0;
      for (int h = 0; h < 30; ++h, damp *= 0.5) {
        xn = x + damp * step;
        if (!residual(xn, gn)) continue;
        if (gn.norm() < g0) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      x = xn;
      g = gn;
      converged = g.norm() <= newton_tol;
    }
    if (!converged) continue;
    bool in_box = true;
    for (int a = 0; a < m; ++a)
      if (x(a) < chart.box[a][0] || x(a) > chart.box[a][1]) in_box = false;
    if (!in_box) continue;
    out.push_back(chart.point_from(std::vector<double>(x.data(), x.data() + m)));
  }
  if (static_cast<int>(out.size()) < n_points)
    throw SamplingError("level set appears sparse or infeasible: found " +
                        std::to_string(out.size()) + " of " +
                        std::to_string(n_points) + " points");
  return out;
}

// ---------------------------------------------------------------------------
// Frobenius certification
// ---------------------------------------------------------------------------

struct FrobeniusEntry {
  int i = 0;
  bool vacuous = false;    // degree exceeds m
  double residual = 0.0;   // max |value| / scale
  bool pass = false;
};

struct FrobeniusReport {
  std::vector<FrobeniusEntry> entries;
  int samples = 0;
  bool pass = false;
  static constexpr double tolerance = 1e-8;
};

/// Checks d(w_i) ^ w_i ^ w_{i+1} ^ ... ^ w_{m-1} = 0 at sample points.
inline FrobeniusReport check_frobenius(const Chart& chart,
                                       const PfaffianSequence& seq, int n_samples,
                                       std::uint64_t seed) {
  int m = chart.dim();
  int count = static_cast<int>(seq.forms.size());

  std::vector<KForm> dforms;
  std::vector<Expr> guards;
  for (const auto& f : seq.forms) {
    dforms.push_back(exterior_derivative(chart, f));
    for (const auto& [idx, c] : f.coeffs) guards.push_back(c);
    for (const auto& [idx, c] : dforms.back().coeffs) guards.push_back(c);
  }
  auto pts = sample_box(chart, guards, n_samples, seed);

  FrobeniusReport rep;
  rep.samples = static_cast<int>(pts.size());
  rep.pass = true;
  for (int i = 1; i <= count; ++i) {
    FrobeniusEntry e;
    e.i = i;
    int degree = 2 + (count - i + 1);
    if (degree > m) {
      e.vacuous = true;
      e.pass = true;
      rep.entries.push_back(e);
      continue;
    }
    double worst = 0.0;
    for (const auto& p : pts) {
      NumKForm acc = evaluate_form(dforms[i - 1], p);
      double max_term = 0.0;
      for (const auto& [idx, v] : acc) max_term = std::max(max_term, std::abs(v));
      int deg = 2;
      for (int j = i; j <= count; ++j) {
        acc = detail::wedge_num(acc, deg, evaluate_form(seq.forms[j - 1], p),
                                &max_term);
        ++deg;
      }
      double value = 0.0;
      for (const auto& [idx, v] : acc) value = std::max(value, std::abs(v));
      if (max_term > 0.0) worst = std::max(worst, value / max_term);
    }
    e.residual = worst;
    e.pass = worst <= FrobeniusReport::tolerance;
    rep.pass = rep.pass && e.pass;
    rep.entries.push_back(e);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Pfaffian solution check: w_k ^ dI_k = 0 on the leaf
// ---------------------------------------------------------------------------

struct StageReport {
  int samples = 0;
  double max_rank_ratio = 0.0;  // sigma_2 / sigma_1 of the stacked restriction
  bool pass = false;
};

inline StageReport check_pfaffian_solution(const Chart& chart, const KForm& omega,
                                           const Expr& I, const LevelSet& L,
                                           int n_samples, std::uint64_t seed) {
  int m = chart.dim();
  int r = static_cast<int>(L.constraints.size());
  auto pts = sample_level_set(chart, L, n_samples, seed);

  std::vector<std::vector<Expr>> cgrads(r, std::vector<Expr>(m));
  for (int i = 0; i < r; ++i)
    for (int a = 0; a < m; ++a)
      cgrads[i][a] = diff(L.constraints[i].expr, chart.coords[a]);
  std::vector<Expr> igrad(m);
  for (int a = 0; a < m; ++a) igrad[a] = diff(I, chart.coords[a]);

  StageReport rep;
  rep.samples = static_cast<int>(pts.size());
  rep.pass = true;
  for (auto p : pts) {
    L.bind(p);
    // tangent space: null space of the constraint Jacobian
    Eigen::MatrixXd T;
    if (r == 0) {
      T = Eigen::MatrixXd::Identity(m, m);
    } else {
      Eigen::MatrixXd J(r, m);
      for (int i = 0; i < r; ++i)
        for (int a = 0; a < m; ++a) J(i, a) = evaluate(cgrads[i][a], p);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      int rank = 0;
      for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > kRankRelTol * sv(0)) ++rank;
      T = svd.matrixV().rightCols(m - rank);
    }
    int dim = static_cast<int>(T.cols());
    Eigen::MatrixXd R(2, dim);
    for (int b = 0; b < dim; ++b) {
      double row0 = 0.0, row1 = 0.0;
      for (int a = 0; a < m; ++a) {
        row0 += evaluate(omega.coeff({a}), p) * T(a, b);
        row1 += evaluate(igrad[a], p) * T(a, b);
      }
      R(0, b) = row0;
      R(1, b) = row1;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    if (sv.size() >= 2 && sv(0) > 0.0) {
      double ratio = sv(1) / sv(0);
      rep.max_rank_ratio = std::max(rep.max_rank_ratio, ratio);
      if (ratio > kRankRelTol) rep.pass = false;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Separable restricted Pfaffian equations
// ---------------------------------------------------------------------------

struct SolveResult {
  bool found = false;
  Expr integral;
  std::string reason;  // when not separable
};

namespace detail {

/// Try to solve constraint expr = value-symbol for one coordinate; returns
/// (coordinate index, substitution expression) on success. Patterns: linear
/// in x, A e^x + B, and A x^2 + B (positive branch).
inline std::optional<std::pair<int, Expr>> solve_constraint(
    const Chart& chart, const Expr& e, const Expr& rhs) {
  int m = chart.dim();
  // linear solves first, then e^x, then the quadratic (positive-branch) form
  for (int a = 0; a < m; ++a) {
    const std::string& x = chart.coords[a];
    if (!depends_on(e, x)) continue;
    Expr A = diff(e, x);
    if (!depends_on(A, x) && !A.is_zero()) {
      Expr B = simplify(e - A * Expr::symbol(x));
      if (!depends_on(B, x))
        return std::make_pair(a, simplify((rhs - B) / A));
    }
  }
  for (int a = 0; a < m; ++a) {
    const std::string& x = chart.coords[a];
    if (!depends_on(e, x)) continue;
    Expr expx = Expr::call("exp", Expr::symbol(x));
    Expr Ae = simplify(diff(e, x) * Expr::call("exp", neg(Expr::symbol(x))));
    if (!depends_on(Ae, x) && !Ae.is_zero()) {
      Expr B = simplify(e - Ae * expx);
      if (!depends_on(B, x))
        return std::make_pair(a, Expr::call("log", simplify((rhs - B) / Ae)));
    }
  }
  for (int a = 0; a < m; ++a) {
    const std::string& x = chart.coords[a];
    if (!depends_on(e, x)) continue;
    Expr A2 = simplify(diff(diff(e, x), x) * Expr::number(*Rational::make(1, 2)));
    if (!depends_on(A2, x) && !A2.is_zero()) {
      Expr B = simplify(e - A2 * Expr::power(Expr::symbol(x), Rational(2)));
      if (!depends_on(B, x))
        return std::make_pair(
            a, Expr::power(simplify((rhs - B) / A2), *Rational::make(1, 2)));
    }
  }
  return std::nullopt;
}

inline bool coord_deps_within(const Expr& e, const Chart& chart,
                              const std::vector<std::string>& allowed) {
  for (const auto& v : free_variables(e)) {
    bool is_coord = std::find(chart.coords.begin(), chart.coords.end(), v) !=
                    chart.coords.end();
    if (!is_coord) continue;  // parameters like c3 are fine
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
      return false;
  }
  return true;
}

inline bool leading_negative(const Expr& e) {
  Expr t = e;
  if (t.kind() == Expr::Kind::Sum) t = t.operands().front();
  auto [c, rest] = split_term(t);
  return c.negative();
}

/// Antiderivative table: powers, exp of a linear argument, 1/(A - B u^2),
/// 1/sqrt(A - B u^2). Returns nullopt rather than guessing.
std::optional<Expr> antiderivative(const Expr& g, const std::string& u);

inline std::optional<Expr> antiderivative_term(const Expr& term,
                                               const std::string& u) {
  // split into u-free coefficient and u-dependent factors
  std::vector<Expr> factors;
  std::vector<Expr> coeff;
  if (term.kind() == Expr::Kind::Product) {
    for (const auto& k : term.operands())
      (depends_on(k, u) ? factors : coeff).push_back(k);
  } else {
    (depends_on(term, u) ? factors : coeff).push_back(term);
  }
  Expr C = coeff.empty() ? Expr::number(1LL) : Expr::product(coeff);
  if (factors.empty()) return simplify(C * Expr::symbol(u));
  if (factors.size() != 1) return std::nullopt;
  const Expr& F = factors[0];

  auto with_C = [&](const Expr& anti) { return simplify(C * anti); };

  // u^r
  if (F.kind() == Expr::Kind::Symbol && F.name() == u)
    return with_C(Expr::number(*Rational::make(1, 2)) *
                  Expr::power(Expr::symbol(u), Rational(2)));
  if (F.kind() == Expr::Kind::Power && F.operands()[0].kind() == Expr::Kind::Symbol &&
      F.operands()[0].name() == u) {
    Rational r = F.exponent();
    if (r == Rational(-1)) return with_C(Expr::call("log", Expr::symbol(u)));
    auto rp1 = Rational::add(r, Rational(1));
    if (!rp1) return std::nullopt;
    return with_C(Expr::power(Expr::symbol(u), *rp1) / Expr::number(*rp1));
  }
  // exp(a u + b)
  if (F.kind() == Expr::Kind::Call && F.name() == "exp") {
    Expr a = diff(F.operands()[0], u);
    if (!depends_on(a, u) && !a.is_zero()) return with_C(simplify(F / a));
  }
  // (A - B u^2)^{-1} and (A - B u^2)^{-1/2}
  if (F.kind() == Expr::Kind::Power &&
      (F.exponent() == Rational(-1) || F.exponent() == *Rational::make(-1, 2))) {
    const Expr& Q = F.operands()[0];
    Expr dQ = diff(Q, u);
    Expr B = simplify(neg(dQ) / (Expr::number(2LL) * Expr::symbol(u)));
    if (!depends_on(B, u) && !B.is_zero()) {
      Expr A = simplify(Q + B * Expr::power(Expr::symbol(u), Rational(2)));
      if (!depends_on(A, u)) {
        bool flipped = leading_negative(B);
        Expr sign = Expr::number(flipped ? -1LL : 1LL);
        if (flipped) {  // rules below assume B > 0; 1/(A-Bu^2) = -1/(A'-B'u^2)
          A = simplify(neg(A));
          B = simplify(neg(B));
        }
        if (F.exponent() == Rational(-1)) {
          // C / sqrt(AB) * atanh(u sqrt(B/A))
          Expr root = Expr::power(simplify(A * B), *Rational::make(1, 2));
          Expr arg = simplify(Expr::symbol(u) *
                              Expr::power(simplify(B / A), *Rational::make(1, 2)));
          return with_C(simplify(sign * Expr::call("atanh", arg) / root));
        }
        // C / sqrt(B) * asin(u sqrt(B/A)); only meaningful unflipped
        if (!flipped) {
          Expr rootb = Expr::power(B, *Rational::make(1, 2));
          Expr arg = simplify(Expr::symbol(u) *
                              Expr::power(simplify(B / A), *Rational::make(1, 2)));
          return with_C(simplify(Expr::call("asin", arg) / rootb));
        }
      }
    }
  }
  return std::nullopt;
}

inline std::optional<Expr> antiderivative(const Expr& g0, const std::string& u) {
  Expr g = simplify(g0);
  if (!depends_on(g, u)) return simplify(g * Expr::symbol(u));
  if (g.kind() == Expr::Kind::Sum) {
    std::vector<Expr> parts;
    for (const auto& t : g.operands()) {
      auto a = antiderivative_term(t, u);
      if (!a) return std::nullopt;
      parts.push_back(*a);
    }
    return simplify(Expr::sum(std::move(parts)));
  }
  return antiderivative_term(g, u);
}

}  // namespace detail

/// Restrict omega to the level set by symbolic substitution. Returns the
/// pulled-back 1-form over the unsolved coordinates, or nullopt when a
/// constraint has no symbolic solve.
inline std::optional<KForm> restrict_symbolic(const Chart& chart, const KForm& omega,
                                              const LevelSet& L,
                                              std::string* why = nullptr) {
  int m = chart.dim();
  std::map<std::string, Expr> subs;       // solved coordinate -> expression
  std::vector<std::pair<int, Expr>> solved;  // (coord index, phi)

  for (std::size_t k = 0; k < L.constraints.size(); ++k) {
    const auto& c = L.constraints[k];
    Expr e = simplify(substitute(c.expr, subs));
    Expr rhs = c.symbol.empty() ? Expr::number(c.value) : Expr::symbol(c.symbol);
    auto sol = detail::solve_constraint(chart, e, rhs);
    if (!sol) {
      if (why)
        *why = "constraint " + std::to_string(k + 1) +
               " has no symbolic solve for a single coordinate";
      return std::nullopt;
    }
    auto [idx, phi] = *sol;
    // eliminate this coordinate from earlier substitutions
    for (auto& [name, ex] : subs)
      ex = simplify(substitute(ex, {{chart.coords[idx], phi}}));
    subs[chart.coords[idx]] = phi;
    solved.emplace_back(idx, phi);
  }

  // refresh phis so none references a later-solved coordinate
  for (auto& [idx, phi] : solved) phi = simplify(substitute(phi, subs));

  KForm out;
  out.degree = 1;
  for (int a = 0; a < m; ++a) {
    if (subs.count(chart.coords[a])) continue;
    Expr c = simplify(substitute(omega.coeff({a}), subs));
    std::vector<Expr> terms;
    if (!c.is_zero()) terms.push_back(c);
    for (const auto& [sidx, phi] : solved) {
      Expr cs = omega.coeff({sidx});
      if (cs.is_zero()) continue;
      Expr dphi = diff(phi, chart.coords[a]);
      if (dphi.is_zero()) continue;
      terms.push_back(simplify(substitute(cs, subs)) * dphi);
    }
    Expr total = simplify(Expr::sum(std::move(terms)));
    if (!total.is_zero()) out.coeffs[{a}] = total;
  }
  return out;
}

/// Solve the restricted Pfaffian equation omega == 0 when it separates into
/// at most two coordinates; returns the integral or a not-separable verdict.
/// The result is numerically verified before being returned.
inline SolveResult solve_separable(const Chart& chart, const KForm& omega,
                                   const LevelSet& L, std::uint64_t seed = 2024) {
  SolveResult res;
  std::string why;
  auto restricted = restrict_symbolic(chart, omega, L, &why);
  if (!restricted) {
    res.reason = why;
    return res;
  }

  // drop coefficients that vanish numerically on the leaf
  std::vector<std::pair<int, Expr>> nz;
  {
    std::vector<Point> pts;
    try {
      pts = sample_level_set(chart, L, 12, seed);
    } catch (const SamplingError&) {
      res.reason = "level set sampling failed";
      return res;
    }
    for (const auto& [idx, c] : restricted->coeffs) {
      double mx = 0.0;
      for (auto p : pts) {
        L.bind(p);
        auto v = evaluate_guarded(c, p, chart.eps_dom);
        if (v) mx = std::max(mx, std::abs(*v));
      }
      if (mx > 1e-11) nz.emplace_back(idx[0], c);
    }
  }

  if (nz.empty()) {
    res.reason = "form vanishes identically on the level set";
    return res;
  }

  Expr candidate;
  if (nz.size() == 1) {
    candidate = Expr::symbol(chart.coords[nz[0].first]);
  } else if (nz.size() == 2) {
    const std::string u = chart.coords[nz[0].first];
    const std::string v = chart.coords[nz[1].first];
    const Expr A = nz[0].second, B = nz[1].second;
    auto dep = [&](const Expr& e, const std::string& only) {
      return detail::coord_deps_within(e, chart, {only});
    };
    std::optional<Expr> I;
    if (dep(A, u) && dep(B, v)) {
      auto ia = detail::antiderivative(A, u);
      auto ib = detail::antiderivative(B, v);
      if (ia && ib) {
        I = simplify(*ia + *ib);
        if (detail::leading_negative(*ib)) I = simplify(neg(*I));
      }
    }
    if (!I) {
      Expr r = simplify(A / B);
      if (dep(r, u)) {
        if (auto ir = detail::antiderivative(r, u)) I = simplify(Expr::symbol(v) + *ir);
      } else if (dep(r, v)) {
        Expr rinv = simplify(B / A);
        if (auto ir = detail::antiderivative(rinv, v))
          I = simplify(Expr::symbol(u) + *ir);
      } else if (dep(A, v) && dep(B, u)) {
        auto ia = detail::antiderivative(simplify(Expr::power(B, Rational(-1))), u);
        auto ib = detail::antiderivative(simplify(Expr::power(A, Rational(-1))), v);
        if (ia && ib) {
          I = simplify(*ia + *ib);
          if (detail::leading_negative(*ib)) I = simplify(neg(*I));
        }
      }
    }
    if (!I) {
      res.reason = "restricted equation does not separate with the antiderivative table";
      return res;
    }
    candidate = *I;
  } else {
    res.reason = "restricted form has nonzero coefficients on more than two coordinates";
    return res;
  }

  // verify: d(candidate) proportional to the restricted form at samples
  {
    std::vector<Point> pts = sample_level_set(chart, L, 12, seed + 1);
    std::vector<Expr> grad;
    std::vector<int> idxs;
    for (const auto& [idx, c] : nz) idxs.push_back(idx);
    for (int idx : idxs) grad.push_back(diff(candidate, chart.coords[idx]));
    for (auto p : pts) {
      L.bind(p);
      Eigen::MatrixXd R(2, static_cast<int>(idxs.size()));
      bool usable = true;
      for (std::size_t b = 0; b < idxs.size(); ++b) {
        auto w = evaluate_guarded(nz[b].second, p, chart.eps_dom);
        auto d = evaluate_guarded(grad[b], p, chart.eps_dom);
        if (!w || !d) {
          usable = false;
          break;
        }
        R(0, static_cast<int>(b)) = *w;
        R(1, static_cast<int>(b)) = *d;
      }
      if (!usable) continue;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
      const auto& sv = svd.singularValues();
      if (sv.size() >= 2 && sv(0) > 0 && sv(1) > 1e-7 * sv(0)) {
        res.reason = "candidate antiderivative failed numeric verification";
        return res;
      }
    }
  }

  res.found = true;
  res.integral = candidate;
  return res;
}

// ---------------------------------------------------------------------------
// Numeric flow (fixed-step RK4 over compiled expressions)
// ---------------------------------------------------------------------------

namespace detail {

/// Expression compiled to a postfix program over a fixed coordinate layout.
class CompiledExpr {
 public:
  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const std::vector<std::string>& coords) {
    emit(e, coords);
  }

  /// Evaluates over `state`; sets *err on domain violations.
  double eval(const double* state, bool* err) const {
    stack_.clear();
    for (const auto& ins : prog_) {
      switch (ins.op) {
        case Op::Const:
          stack_.push_back(ins.val);
          break;
        case Op::Var:
          stack_.push_back(state[ins.slot]);
          break;
        case Op::AddN: {
          double s = 0;
          for (int i = 0; i < ins.slot; ++i) {
            s += stack_.back();
            stack_.pop_back();
          }
          stack_.push_back(s);
          break;
        }
        case Op::MulN: {
          double s = 1;
          for (int i = 0; i < ins.slot; ++i) {
            s *= stack_.back();
            stack_.pop_back();
          }
          stack_.push_back(s);
          break;
        }
        case Op::PowInt: {
          double b = stack_.back();
          stack_.pop_back();
          if (b == 0.0 && ins.slot < 0) {
            *err = true;
            stack_.push_back(0.0);
            break;
          }
          stack_.push_back(ipow(b, ins.slot));
          break;
        }
        case Op::PowReal: {
          double b = stack_.back();
          stack_.pop_back();
          if (b < 0.0 || (b == 0.0 && ins.val < 0.0)) {
            *err = true;
            stack_.push_back(0.0);
            break;
          }
          stack_.push_back(std::pow(b, ins.val));
          break;
        }
        case Op::Fn: {
          double a = stack_.back();
          stack_.pop_back();
          stack_.push_back(apply_fn(ins.slot, a, err));
          break;
        }
      }
    }
    return stack_.back();
  }

 private:
  enum class Op { Const, Var, AddN, MulN, PowInt, PowReal, Fn };
  struct Ins {
    Op op;
    int slot = 0;
    double val = 0.0;
  };

  static const std::vector<std::string>& fn_names() {
    static const std::vector<std::string> names = {
        "exp",  "log",  "sqrt", "sin",  "cos",  "tan", "sinh",
        "cosh", "tanh", "asin", "acos", "atan", "atanh"};
    return names;
  }

  static double apply_fn(int id, double a, bool* err) {
    switch (id) {
      case 0: return std::exp(a);
      case 1:
        if (a <= 0) { *err = true; return 0; }
        return std::log(a);
      case 2:
        if (a < 0) { *err = true; return 0; }
        return std::sqrt(a);
      case 3: return std::sin(a);
      case 4: return std::cos(a);
      case 5: return std::tan(a);
      case 6: return std::sinh(a);
      case 7: return std::cosh(a);
      case 8: return std::tanh(a);
      case 9:
        if (std::abs(a) > 1) { *err = true; return 0; }
        return std::asin(a);
      case 10:
        if (std::abs(a) > 1) { *err = true; return 0; }
        return std::acos(a);
      case 11: return std::atan(a);
      case 12:
        if (std::abs(a) >= 1) { *err = true; return 0; }
        return std::atanh(a);
    }
    *err = true;
    return 0;
  }

  void emit(const Expr& e, const std::vector<std::string>& coords) {
    switch (e.kind()) {
      case Expr::Kind::Number:
        prog_.push_back({Op::Const, 0, e.value().to_double()});
        return;
      case Expr::Kind::Symbol: {
        for (std::size_t i = 0; i < coords.size(); ++i)
          if (coords[i] == e.name()) {
            prog_.push_back({Op::Var, static_cast<int>(i), 0.0});
            return;
          }
        throw EvalError("flow: unbound symbol '" + e.name() + "'");
      }
      case Expr::Kind::Sum:
      case Expr::Kind::Product: {
        for (const auto& k : e.operands()) emit(k, coords);
        prog_.push_back({e.kind() == Expr::Kind::Sum ? Op::AddN : Op::MulN,
                         static_cast<int>(e.operands().size()), 0.0});
        return;
      }
      case Expr::Kind::Power: {
        emit(e.operands()[0], coords);
        const Rational& r = e.exponent();
        if (r.is_integer())
          prog_.push_back({Op::PowInt, static_cast<int>(r.num()), 0.0});
        else
          prog_.push_back({Op::PowReal, 0, r.to_double()});
        return;
      }
      case Expr::Kind::Call: {
        emit(e.operands()[0], coords);
        const auto& names = fn_names();
        for (std::size_t i = 0; i < names.size(); ++i)
          if (names[i] == e.name()) {
            prog_.push_back({Op::Fn, static_cast<int>(i), 0.0});
            return;
          }
        throw EvalError("flow: unknown function '" + e.name() + "'");
      }
    }
  }

  std::vector<Ins> prog_;
  mutable std::vector<double> stack_;
};

}  // namespace detail

struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<std::vector<double>> states;  // N+1 rows of dimension m
  bool truncated = false;
  double last_time = 0.0;

  int steps() const { return static_cast<int>(states.size()) - 1; }
};

/// Classical fixed-step RK4 on X_H. Aborts cleanly (truncated flag) when the
/// state leaves the optional guard box, a domain error occurs, or a state
/// stops being finite.
inline Trajectory flow(const HamiltonianSystem& sys, const Point& x0, double T,
                       double dt,
                       const std::optional<std::vector<std::array<double, 2>>>&
                           guard_box = std::nullopt) {
  if (!(dt > 0.0)) throw StructureError("flow requires dt > 0");
  int m = sys.dim();
  const auto& coords = sys.S.chart.coords;
  std::vector<double> x(m);
  for (int a = 0; a < m; ++a) {
    auto it = x0.find(coords[a]);
    if (it == x0.end())
      throw StructureError("initial state missing coordinate '" + coords[a] + "'");
    x[a] = it->second;
    if (x[a] < sys.S.chart.box[a][0] || x[a] > sys.S.chart.box[a][1])
      throw StructureError("initial state outside the sample box in '" +
                           coords[a] + "'");
  }

  VectorField X = hamiltonian_vf(sys.S, sys.H);
  std::vector<detail::CompiledExpr> comp;
  comp.reserve(m);
  for (int a = 0; a < m; ++a) comp.emplace_back(X.comp[a], coords);

  auto deriv = [&](const std::vector<double>& s, std::vector<double>& out) {
    bool err = false;
    for (int a = 0; a < m; ++a) {
      out[a] = comp[a].eval(s.data(), &err);
      if (err || !std::isfinite(out[a])) return false;
    }
    return true;
  };

  long long n = std::llround(T / dt);
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.states.push_back(x);

  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  for (long long step = 0; step < n; ++step) {
    bool ok = deriv(x, k1);
    if (ok) {
      for (int a = 0; a < m; ++a) tmp[a] = x[a] + 0.5 * dt * k1[a];
      ok = deriv(tmp, k2);
    }
    if (ok) {
      for (int a = 0; a < m; ++a) tmp[a] = x[a] + 0.5 * dt * k2[a];
      ok = deriv(tmp, k3);
    }
    if (ok) {
      for (int a = 0; a < m; ++a) tmp[a] = x[a] + dt * k3[a];
      ok = deriv(tmp, k4);
    }
    if (ok) {
      for (int a = 0; a < m; ++a) {
        x[a] += dt / 6.0 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
        if (!std::isfinite(x[a])) ok = false;
      }
    }
    if (ok && guard_box) {
      for (int a = 0; a < m; ++a)
        if (x[a] < (*guard_box)[a][0] || x[a] > (*guard_box)[a][1]) ok = false;
    }
    if (!ok) {
      traj.truncated = true;
      break;
    }
    traj.states.push_back(x);
  }
  traj.last_time = traj.t0 + traj.dt * traj.steps();
  return traj;
}

struct ConservationReport {
  double drift = 0.0;  // max |g(x_t) - g(x_0)| / (1 + |g(x_0)|)
  std::optional<std::size_t> domain_error_index;
};

inline ConservationReport conservation(const Chart& chart, const Trajectory& traj,
                                       const Expr& g) {
  ConservationReport rep;
  if (traj.states.empty()) return rep;
  detail::CompiledExpr cg(g, chart.coords);
  bool err = false;
  double g0 = cg.eval(traj.states[0].data(), &err);
  if (err) {
    rep.domain_error_index = 0;
    return rep;
  }
  double scale = 1.0 + std::abs(g0);
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    err = false;
    double gi = cg.eval(traj.states[i].data(), &err);
    if (err) {
      rep.domain_error_index = i;
      return rep;
    }
    rep.drift = std::max(rep.drift, std::abs(gi - g0) / scale);
  }
  return rep;
}

struct RateReport {
  double max_deviation = 0.0;
  int skipped = 0;    // interior points where h hit a domain error
  int compared = 0;
  bool pass = false;
};

/// Central finite differences of f along the trajectory against +-h(x_t);
/// the sign is matched per point (branch handling by local continuity).
inline RateReport check_rate(const Chart& chart, const Trajectory& traj,
                             const Expr& f, const Expr& h, double tol) {
  RateReport rep;
  if (traj.states.size() < 3) return rep;
  detail::CompiledExpr cf(f, chart.coords), ch(h, chart.coords);
  std::vector<double> fv(traj.states.size());
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    bool err = false;
    fv[i] = cf.eval(traj.states[i].data(), &err);
    if (err) {
      rep.pass = false;
      return rep;
    }
  }
  for (std::size_t i = 1; i + 1 < traj.states.size(); ++i) {
    bool err = false;
    double hv = ch.eval(traj.states[i].data(), &err);
    if (err) {
      ++rep.skipped;
      continue;
    }
    double df = (fv[i + 1] - fv[i - 1]) / (2.0 * traj.dt);
    double dev = std::min(std::abs(df - hv), std::abs(df + hv));
    rep.max_deviation = std::max(rep.max_deviation, dev);
    ++rep.compared;
  }
  rep.pass = rep.compared > 0 && rep.max_deviation <= tol &&
             rep.skipped <= (rep.compared + rep.skipped) / 20;
  return rep;
}

}  // namespace pfaff

#endif

#ifndef PFAFF_EXPR_HPP
#define PFAFF_EXPR_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pfaff/errors.hpp"
#include "pfaff/rational.hpp"

namespace pfaff {

/// Immutable symbolic expression over named real coordinates.
///
/// Nodes: Number (exact rational or double), Symbol, Sum, Product,
/// Power (rational exponent), Call (whitelisted unary function).
/// Division is represented as Product with Power(·, -1); subtraction as
/// Sum with a (-1)-scaled term. Trees are shared and never mutated, so
/// expressions are safe to copy and use across threads.
class Expr {
 public:
  enum class Kind { Number, Symbol, Sum, Product, Power, Call };

  Expr() : Expr(number(Number(0LL))) {}

  static Expr number(Number v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Number;
    n->value = v;
    return Expr(std::move(n));
  }
  static Expr number(long long v) { return number(Number(v)); }
  static Expr number(Rational v) { return number(Number(v)); }
  static Expr number(double v) { return number(Number(v)); }

  static Expr symbol(std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Symbol;
    n->name = std::move(name);
    return Expr(std::move(n));
  }

  static Expr sum(std::vector<Expr> kids) {
    if (kids.empty()) return number(0LL);
    if (kids.size() == 1) return kids.front();
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Sum;
    n->kids = std::move(kids);
    return Expr(std::move(n));
  }

  static Expr product(std::vector<Expr> kids) {
    if (kids.empty()) return number(1LL);
    if (kids.size() == 1) return kids.front();
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Product;
    n->kids = std::move(kids);
    return Expr(std::move(n));
  }

  static Expr power(Expr base, Rational exponent) {
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Power;
    n->exponent = exponent;
    n->kids.push_back(std::move(base));
    return Expr(std::move(n));
  }

  static Expr call(std::string fn, Expr arg) {
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Call;
    n->name = std::move(fn);
    n->kids.push_back(std::move(arg));
    return Expr(std::move(n));
  }

  Kind kind() const { return node_->kind; }
  const Number& value() const { return node_->value; }
  const std::string& name() const { return node_->name; }
  const Rational& exponent() const { return node_->exponent; }
  const std::vector<Expr>& operands() const { return node_->kids; }

  bool is_number() const { return kind() == Kind::Number; }
  bool is_zero() const { return is_number() && value().is_zero(); }
  bool is_one() const { return is_number() && value().is_one(); }

 private:
  struct ExprNode {
    Kind kind;
    Number value{};
    std::string name;
    Rational exponent{};
    std::vector<Expr> kids;
  };

  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const ExprNode> node_;
};

/// Point: binding of symbol names to finite values.
using Point = std::map<std::string, double>;

inline const std::set<std::string>& function_whitelist() {
  static const std::set<std::string> fns = {
      "exp",  "log",  "sqrt", "sin",  "cos",  "tan",  "sinh",
      "cosh", "tanh", "asin", "acos", "atan", "atanh"};
  return fns;
}

// ---------------------------------------------------------------------------
// Canonical comparison (total order used for sorting and term collection)
// ---------------------------------------------------------------------------

inline int compare(const Expr& a, const Expr& b) {
  auto rank = [](Expr::Kind k) {
    switch (k) {
      case Expr::Kind::Number: return 0;
      case Expr::Kind::Symbol: return 1;
      case Expr::Kind::Power: return 2;
      case Expr::Kind::Call: return 3;
      case Expr::Kind::Product: return 4;
      case Expr::Kind::Sum: return 5;
    }
    return 6;
  };
  int ra = rank(a.kind()), rb = rank(b.kind());
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a.kind()) {
    case Expr::Kind::Number:
      return Number::cmp(a.value(), b.value());
    case Expr::Kind::Symbol:
      return a.name().compare(b.name()) < 0 ? -1 : (a.name() == b.name() ? 0 : 1);
    case Expr::Kind::Power: {
      int c = compare(a.operands()[0], b.operands()[0]);
      if (c) return c;
      return Rational::cmp(a.exponent(), b.exponent());
    }
    case Expr::Kind::Call: {
      if (a.name() != b.name()) return a.name() < b.name() ? -1 : 1;
      return compare(a.operands()[0], b.operands()[0]);
    }
    case Expr::Kind::Product:
    case Expr::Kind::Sum: {
      const auto& ka = a.operands();
      const auto& kb = b.operands();
      std::size_t n = std::min(ka.size(), kb.size());
      for (std::size_t i = 0; i < n; ++i) {
        int c = compare(ka[i], kb[i]);
        if (c) return c;
      }
      if (ka.size() != kb.size()) return ka.size() < kb.size() ? -1 : 1;
      return 0;
    }
  }
  return 0;
}

inline bool equal(const Expr& a, const Expr& b) { return compare(a, b) == 0; }

// ---------------------------------------------------------------------------
// Free variables, substitution
// ---------------------------------------------------------------------------

inline void collect_free_variables(const Expr& e, std::set<std::string>& out) {
  if (e.kind() == Expr::Kind::Symbol) {
    out.insert(e.name());
    return;
  }
  for (const auto& k : e.operands()) collect_free_variables(k, out);
}

inline std::set<std::string> free_variables(const Expr& e) {
  std::set<std::string> out;
  collect_free_variables(e, out);
  return out;
}

inline bool depends_on(const Expr& e, const std::string& sym) {
  if (e.kind() == Expr::Kind::Symbol) return e.name() == sym;
  for (const auto& k : e.operands())
    if (depends_on(k, sym)) return true;
  return false;
}

/// Simultaneous substitution of symbols (flat namespace; no capture).
inline Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e;
    case Expr::Kind::Symbol: {
      auto it = bindings.find(e.name());
      return it == bindings.end() ? e : it->second;
    }
    case Expr::Kind::Sum:
    case Expr::Kind::Product: {
      std::vector<Expr> kids;
      kids.reserve(e.operands().size());
      for (const auto& k : e.operands()) kids.push_back(substitute(k, bindings));
      return e.kind() == Expr::Kind::Sum ? Expr::sum(std::move(kids))
                                         : Expr::product(std::move(kids));
    }
    case Expr::Kind::Power:
      return Expr::power(substitute(e.operands()[0], bindings), e.exponent());
    case Expr::Kind::Call:
      return Expr::call(e.name(), substitute(e.operands()[0], bindings));
  }
  return e;
}

/// Replace every structurally equal occurrence of `target` by `repl`.
inline Expr replace_subexpr(const Expr& e, const Expr& target, const Expr& repl) {
  if (equal(e, target)) return repl;
  switch (e.kind()) {
    case Expr::Kind::Number:
    case Expr::Kind::Symbol:
      return e;
    case Expr::Kind::Sum:
    case Expr::Kind::Product: {
      std::vector<Expr> kids;
      kids.reserve(e.operands().size());
      for (const auto& k : e.operands())
        kids.push_back(replace_subexpr(k, target, repl));
      return e.kind() == Expr::Kind::Sum ? Expr::sum(std::move(kids))
                                         : Expr::product(std::move(kids));
    }
    case Expr::Kind::Power:
      return Expr::power(replace_subexpr(e.operands()[0], target, repl),
                         e.exponent());
    case Expr::Kind::Call:
      return Expr::call(e.name(),
                        replace_subexpr(e.operands()[0], target, repl));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Convenience constructors
// ---------------------------------------------------------------------------

inline Expr operator+(const Expr& a, const Expr& b) {
  std::vector<Expr> kids;
  if (a.kind() == Expr::Kind::Sum) kids = a.operands();
  else kids.push_back(a);
  kids.push_back(b);
  return Expr::sum(std::move(kids));
}
inline Expr operator*(const Expr& a, const Expr& b) {
  std::vector<Expr> kids;
  if (a.kind() == Expr::Kind::Product) kids = a.operands();
  else kids.push_back(a);
  kids.push_back(b);
  return Expr::product(std::move(kids));
}
inline Expr neg(const Expr& a) {
  if (a.is_number()) return Expr::number(a.value().negated());
  return Expr::product({Expr::number(-1LL), a});
}
inline Expr operator-(const Expr& a, const Expr& b) { return Expr::sum({a, neg(b)}); }
inline Expr operator/(const Expr& a, const Expr& b) {
  return Expr::product({a, Expr::power(b, Rational(-1))});
}

// ---------------------------------------------------------------------------
// Simplification: terminating bottom-up rewrite
// ---------------------------------------------------------------------------
//
// Constant folding, 0/1 identities, flattening, collection of identical
// terms/powers with rational coefficients, exp/log inverse pairs. Canonical
// child ordering makes output deterministic. Equality of expressions is
// decided numerically elsewhere, never syntactically.

Expr simplify(const Expr& e);

namespace detail {

Expr simplify_power(const Expr& base, const Rational& expo);

inline Expr simplify_call(const std::string& fn, const Expr& a) {
  if (fn == "sqrt") return simplify_power(a, *Rational::make(1, 2));
  if (fn == "exp") {
    if (a.is_zero()) return Expr::number(1LL);
    if (a.kind() == Expr::Kind::Call && a.name() == "log") return a.operands()[0];
  } else if (fn == "log") {
    if (a.is_one()) return Expr::number(0LL);
    if (a.kind() == Expr::Kind::Call && a.name() == "exp") return a.operands()[0];
  } else if (fn == "cos" || fn == "cosh") {
    if (a.is_zero()) return Expr::number(1LL);
  } else if (fn == "acos") {
    if (a.is_one()) return Expr::number(0LL);
  } else {
    // sin, tan, sinh, tanh, asin, atan, atanh all vanish at 0
    if (a.is_zero()) return Expr::number(0LL);
  }
  return Expr::call(fn, a);
}

inline Expr simplify_product_of(std::vector<Expr> kids);
inline Expr simplify_sum_of(std::vector<Expr> kids);

inline Expr simplify_power(const Expr& base, const Rational& expo) {
  if (expo.is_zero()) return Expr::number(1LL);
  if (expo.is_one()) return base;
  if (base.is_number()) {
    if (auto v = Number::pow_exact(base.value(), expo)) return Expr::number(*v);
    if (!base.value().exact()) {
      double d = std::pow(base.value().to_double(), expo.to_double());
      if (std::isfinite(d)) return Expr::number(d);
    }
  }
  if (base.kind() == Expr::Kind::Power) {
    // (b^r)^s -> b^(rs) is sound when s is an integer, or when r is already
    // fractional (both sides then share the b >= 0 domain).
    const Rational& inner = base.exponent();
    if (expo.is_integer() || !inner.is_integer()) {
      if (auto merged = Rational::mul(inner, expo))
        return simplify_power(base.operands()[0], *merged);
    }
  }
  if (base.kind() == Expr::Kind::Product && expo.is_integer()) {
    std::vector<Expr> kids;
    kids.reserve(base.operands().size());
    for (const auto& k : base.operands()) kids.push_back(simplify_power(k, expo));
    return simplify_product_of(std::move(kids));
  }
  if (base.kind() == Expr::Kind::Call && base.name() == "exp") {
    return simplify_call(
        "exp", simplify_product_of({Expr::number(expo), base.operands()[0]}));
  }
  return Expr::power(base, expo);
}

inline Expr make_term(const Number& coeff, const Expr& rest) {
  if (coeff.is_one()) return rest;
  std::vector<Expr> kids;
  kids.push_back(Expr::number(coeff));
  if (rest.kind() == Expr::Kind::Product)
    for (const auto& k : rest.operands()) kids.push_back(k);
  else
    kids.push_back(rest);
  return Expr::product(std::move(kids));
}

/// Split a (simplified) term into rational coefficient and residual factor.
inline std::pair<Number, Expr> split_term(const Expr& e) {
  if (e.is_number()) return {e.value(), Expr::number(1LL)};
  if (e.kind() == Expr::Kind::Product) {
    Number c(1LL);
    std::vector<Expr> rest;
    for (const auto& k : e.operands()) {
      if (k.is_number())
        c = Number::mul(c, k.value());
      else
        rest.push_back(k);
    }
    if (rest.empty()) return {c, Expr::number(1LL)};
    return {c, Expr::product(std::move(rest))};
  }
  return {Number(1LL), e};
}

inline Expr simplify_product_of(std::vector<Expr> kids) {
  Number coeff(1LL);
  std::vector<std::pair<Expr, Rational>> factors;  // base -> exponent
  std::vector<Expr> exp_args;  // exp factors merge through their arguments

  auto add_factor = [&](const Expr& b, const Rational& r) {
    if (b.kind() == Expr::Kind::Call && b.name() == "exp") {
      Expr arg = b.operands()[0];
      exp_args.push_back(r.is_one() ? arg
                                    : Expr::product({Expr::number(r), arg}));
      return;
    }
    for (auto& f : factors) {
      if (equal(f.first, b)) {
        if (auto s = Rational::add(f.second, r)) {
          f.second = *s;
          return;
        }
      }
    }
    factors.emplace_back(b, r);
  };

  std::vector<Expr> queue(std::move(kids));
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    Expr k = queue[qi];
    switch (k.kind()) {
      case Expr::Kind::Number:
        coeff = Number::mul(coeff, k.value());
        break;
      case Expr::Kind::Product:
        for (const auto& s : k.operands()) queue.push_back(s);
        break;
      case Expr::Kind::Power: {
        const Expr& b = k.operands()[0];
        if (b.is_number()) {
          if (auto v = Number::pow_exact(b.value(), k.exponent())) {
            coeff = Number::mul(coeff, *v);
            break;
          }
        }
        add_factor(b, k.exponent());
        break;
      }
      default:
        add_factor(k, Rational(1));
    }
  }

  if (!exp_args.empty()) {
    Expr total = simplify_sum_of(std::move(exp_args));
    if (!total.is_zero()) {
      Expr merged = simplify_call("exp", total);
      if (merged.is_number())
        coeff = Number::mul(coeff, merged.value());
      else if (merged.kind() == Expr::Kind::Call)
        factors.emplace_back(merged, Rational(1));
      else
        factors.emplace_back(merged, Rational(1));
    }
    exp_args.clear();
  }

  if (coeff.is_zero()) return Expr::number(0LL);

  std::vector<Expr> out;
  for (const auto& [b, r] : factors) {
    if (r.is_zero()) continue;
    Expr f = simplify_power(b, r);
    if (f.is_number()) {
      coeff = Number::mul(coeff, f.value());
      continue;
    }
    if (f.kind() == Expr::Kind::Product) {
      // rare re-expansion (e.g. power merge produced a product); fold flat
      for (const auto& s : f.operands()) {
        if (s.is_number())
          coeff = Number::mul(coeff, s.value());
        else
          out.push_back(s);
      }
      continue;
    }
    out.push_back(f);
  }
  if (coeff.is_zero()) return Expr::number(0LL);

  std::sort(out.begin(), out.end(),
            [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });

  if (out.empty()) return Expr::number(coeff);
  if (coeff.is_one()) {
    if (out.size() == 1) return out.front();
    return Expr::product(std::move(out));
  }
  // distribute a bare numeric coefficient over a lone sum so that term
  // collection can cancel across nesting (no polynomial expansion involved)
  if (out.size() == 1 && out.front().kind() == Expr::Kind::Sum) {
    std::vector<Expr> terms;
    terms.reserve(out.front().operands().size());
    for (const auto& t : out.front().operands())
      terms.push_back(simplify_product_of({Expr::number(coeff), t}));
    return simplify_sum_of(std::move(terms));
  }
  std::vector<Expr> all;
  all.reserve(out.size() + 1);
  all.push_back(Expr::number(coeff));
  for (auto& f : out) all.push_back(std::move(f));
  return Expr::product(std::move(all));
}

inline Expr simplify_sum_of(std::vector<Expr> kids) {
  Number cst(0LL);
  std::vector<std::pair<Expr, Number>> terms;  // residual -> coefficient

  std::vector<Expr> queue(std::move(kids));
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    Expr k = queue[qi];
    if (k.is_number()) {
      cst = Number::add(cst, k.value());
      continue;
    }
    if (k.kind() == Expr::Kind::Sum) {
      for (const auto& s : k.operands()) queue.push_back(s);
      continue;
    }
    auto [c, rest] = split_term(k);
    if (rest.is_one()) {
      cst = Number::add(cst, c);
      continue;
    }
    bool merged = false;
    for (auto& t : terms) {
      if (equal(t.first, rest)) {
        t.second = Number::add(t.second, c);
        merged = true;
        break;
      }
    }
    if (!merged) terms.emplace_back(rest, c);
  }

  std::vector<Expr> out;
  for (const auto& [rest, c] : terms) {
    if (c.is_zero()) continue;
    out.push_back(make_term(c, rest));
  }
  std::sort(out.begin(), out.end(),
            [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
  if (!cst.is_zero() || out.empty()) out.insert(out.begin(), Expr::number(cst));
  if (out.size() == 1) return out.front();
  return Expr::sum(std::move(out));
}

}  // namespace detail

inline Expr simplify(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
    case Expr::Kind::Symbol:
      return e;
    case Expr::Kind::Call:
      return detail::simplify_call(e.name(), simplify(e.operands()[0]));
    case Expr::Kind::Power:
      return detail::simplify_power(simplify(e.operands()[0]), e.exponent());
    case Expr::Kind::Product: {
      std::vector<Expr> kids;
      kids.reserve(e.operands().size());
      for (const auto& k : e.operands()) kids.push_back(simplify(k));
      return detail::simplify_product_of(std::move(kids));
    }
    case Expr::Kind::Sum: {
      std::vector<Expr> kids;
      kids.reserve(e.operands().size());
      for (const auto& k : e.operands()) kids.push_back(simplify(k));
      return detail::simplify_sum_of(std::move(kids));
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

namespace detail {

inline Expr diff_raw(const Expr& e, const std::string& x) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return Expr::number(0LL);
    case Expr::Kind::Symbol:
      return Expr::number(e.name() == x ? 1LL : 0LL);
    case Expr::Kind::Sum: {
      std::vector<Expr> kids;
      kids.reserve(e.operands().size());
      for (const auto& k : e.operands()) kids.push_back(diff_raw(k, x));
      return Expr::sum(std::move(kids));
    }
    case Expr::Kind::Product: {
      std::vector<Expr> terms;
      const auto& ks = e.operands();
      for (std::size_t i = 0; i < ks.size(); ++i) {
        std::vector<Expr> f;
        f.reserve(ks.size());
        for (std::size_t j = 0; j < ks.size(); ++j)
          f.push_back(i == j ? diff_raw(ks[j], x) : ks[j]);
        terms.push_back(Expr::product(std::move(f)));
      }
      return Expr::sum(std::move(terms));
    }
    case Expr::Kind::Power: {
      // d(u^r) = r u^(r-1) u'
      const Expr& u = e.operands()[0];
      const Rational& r = e.exponent();
      auto rm1 = Rational::add(r, Rational(-1));
      Expr down = rm1 ? Expr::power(u, *rm1)
                      : Expr::product({Expr::power(u, r),
                                       Expr::power(u, Rational(-1))});
      return Expr::product({Expr::number(r), down, diff_raw(u, x)});
    }
    case Expr::Kind::Call: {
      const Expr& u = e.operands()[0];
      Expr du = diff_raw(u, x);
      const std::string& f = e.name();
      Expr one = Expr::number(1LL);
      Expr u2 = Expr::power(u, Rational(2));
      Expr d;
      if (f == "exp") d = e;
      else if (f == "log") d = Expr::power(u, Rational(-1));
      else if (f == "sqrt") d = Expr::product({Expr::number(*Rational::make(1, 2)),
                                               Expr::power(u, *Rational::make(-1, 2))});
      else if (f == "sin") d = Expr::call("cos", u);
      else if (f == "cos") d = neg(Expr::call("sin", u));
      else if (f == "tan") d = one + Expr::power(Expr::call("tan", u), Rational(2));
      else if (f == "sinh") d = Expr::call("cosh", u);
      else if (f == "cosh") d = Expr::call("sinh", u);
      else if (f == "tanh") d = one - Expr::power(Expr::call("tanh", u), Rational(2));
      else if (f == "asin") d = Expr::power(one - u2, *Rational::make(-1, 2));
      else if (f == "acos") d = neg(Expr::power(one - u2, *Rational::make(-1, 2)));
      else if (f == "atan") d = Expr::power(one + u2, Rational(-1));
      else if (f == "atanh") d = Expr::power(one - u2, Rational(-1));
      else throw EvalError("no derivative rule for function '" + f + "'");
      return Expr::product({d, du});
    }
  }
  return Expr::number(0LL);
}

}  // namespace detail

/// Exact partial derivative, simplified.
inline Expr diff(const Expr& e, const std::string& x) {
  return simplify(detail::diff_raw(e, x));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline std::string point_str(const Point& p) {
  std::string s = "{";
  bool first = true;
  for (const auto& [k, v] : p) {
    if (!first) s += ", ";
    first = false;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.6g", k.c_str(), v);
    s += buf;
  }
  return s + "}";
}

inline double ipow(double b, long long n) {
  bool inv = n < 0;
  unsigned long long k = inv ? static_cast<unsigned long long>(-n) : static_cast<unsigned long long>(n);
  double acc = 1.0, base = b;
  while (k) {
    if (k & 1) acc *= base;
    base *= base;
    k >>= 1;
  }
  return inv ? 1.0 / acc : acc;
}

}  // namespace detail

inline double evaluate(const Expr& e, const Point& p) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e.value().to_double();
    case Expr::Kind::Symbol: {
      auto it = p.find(e.name());
      if (it == p.end())
        throw EvalError("unbound symbol '" + e.name() + "' at point " +
                        detail::point_str(p));
      return it->second;
    }
    case Expr::Kind::Sum: {
      double s = 0;
      for (const auto& k : e.operands()) s += evaluate(k, p);
      return s;
    }
    case Expr::Kind::Product: {
      double s = 1;
      for (const auto& k : e.operands()) s *= evaluate(k, p);
      return s;
    }
    case Expr::Kind::Power: {
      double b = evaluate(e.operands()[0], p);
      const Rational& r = e.exponent();
      if (r.is_integer()) {
        if (b == 0.0 && r.negative())
          throw EvalError("power: zero base with negative exponent at point " +
                          detail::point_str(p));
        return detail::ipow(b, r.num());
      }
      if (b < 0.0)
        throw EvalError("power: negative base with fractional exponent at point " +
                        detail::point_str(p));
      if (b == 0.0 && r.negative())
        throw EvalError("power: zero base with negative exponent at point " +
                        detail::point_str(p));
      return std::pow(b, r.to_double());
    }
    case Expr::Kind::Call: {
      double a = evaluate(e.operands()[0], p);
      const std::string& f = e.name();
      auto fail = [&](const char* what) -> double {
        throw EvalError(std::string(f) + ": " + what + " at point " +
                        detail::point_str(p));
      };
      if (f == "exp") return std::exp(a);
      if (f == "log") return a > 0.0 ? std::log(a) : fail("argument must be positive");
      if (f == "sqrt") return a >= 0.0 ? std::sqrt(a) : fail("argument must be nonnegative");
      if (f == "sin") return std::sin(a);
      if (f == "cos") return std::cos(a);
      if (f == "tan") return std::tan(a);
      if (f == "sinh") return std::sinh(a);
      if (f == "cosh") return std::cosh(a);
      if (f == "tanh") return std::tanh(a);
      if (f == "asin") return std::abs(a) <= 1.0 ? std::asin(a) : fail("argument outside [-1,1]");
      if (f == "acos") return std::abs(a) <= 1.0 ? std::acos(a) : fail("argument outside [-1,1]");
      if (f == "atan") return std::atan(a);
      if (f == "atanh") return std::abs(a) < 1.0 ? std::atanh(a) : fail("argument outside (-1,1)");
      return fail("unknown function");
    }
  }
  throw EvalError("malformed expression");
}

/// Evaluation with singular-guard margins: returns nullopt when any log,
/// root, negative power or inverse-trig argument comes within eps of its
/// singular value. Used to reject sample points near singularities.
inline std::optional<double> evaluate_guarded(const Expr& e, const Point& p,
                                              double eps) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e.value().to_double();
    case Expr::Kind::Symbol: {
      auto it = p.find(e.name());
      if (it == p.end()) return std::nullopt;
      return it->second;
    }
    case Expr::Kind::Sum: {
      double s = 0;
      for (const auto& k : e.operands()) {
        auto v = evaluate_guarded(k, p, eps);
        if (!v) return std::nullopt;
        s += *v;
      }
      return s;
    }
    case Expr::Kind::Product: {
      double s = 1;
      for (const auto& k : e.operands()) {
        auto v = evaluate_guarded(k, p, eps);
        if (!v) return std::nullopt;
        s *= *v;
      }
      return s;
    }
    case Expr::Kind::Power: {
      auto b = evaluate_guarded(e.operands()[0], p, eps);
      if (!b) return std::nullopt;
      const Rational& r = e.exponent();
      if (r.is_integer()) {
        if (r.negative() && std::abs(*b) < eps) return std::nullopt;
        return detail::ipow(*b, r.num());
      }
      if (*b < eps) return std::nullopt;
      return std::pow(*b, r.to_double());
    }
    case Expr::Kind::Call: {
      auto a = evaluate_guarded(e.operands()[0], p, eps);
      if (!a) return std::nullopt;
      const std::string& f = e.name();
      if (f == "log") {
        if (*a < eps) return std::nullopt;
        return std::log(*a);
      }
      if (f == "sqrt") {
        if (*a < 0.0) return std::nullopt;
        return std::sqrt(*a);
      }
      if (f == "atanh") {
        if (std::abs(*a) > 1.0 - eps) return std::nullopt;
        return std::atanh(*a);
      }
      if (f == "asin" || f == "acos") {
        if (std::abs(*a) > 1.0 - eps) return std::nullopt;
        return f == "asin" ? std::asin(*a) : std::acos(*a);
      }
      Point q{{"u", *a}};
      try {
        return evaluate(Expr::call(f, Expr::symbol("u")), q);
      } catch (const EvalError&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Rendering (inverse of the parser's grammar)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string render_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

inline std::string render_number(const Number& n) {
  return n.exact() ? n.rat().str() : render_double(n.to_double());
}

std::string render_node(const Expr& e);

inline bool atom_like(const Expr& e) {
  if (e.kind() == Expr::Kind::Symbol || e.kind() == Expr::Kind::Call) return true;
  if (e.is_number()) {
    const Number& n = e.value();
    return !n.negative() && (!n.exact() || n.rat().is_integer());
  }
  return false;
}

inline std::string render_pow_base(const Expr& b) {
  if (b.kind() == Expr::Kind::Symbol || b.kind() == Expr::Kind::Call)
    return render_node(b);
  if (b.is_number() && b.value().exact() && b.value().rat().is_integer() &&
      !b.value().negative())
    return render_number(b.value());
  return "(" + render_node(b) + ")";
}

inline std::string render_power(const Expr& base, const Rational& r) {
  std::string es =
      (r.is_integer() && !r.negative()) ? r.str() : "(" + r.str() + ")";
  return render_pow_base(base) + "^" + es;
}

inline std::string render_factor(const Expr& f) {
  // a single multiplicand inside a product
  if (f.kind() == Expr::Kind::Sum) return "(" + render_node(f) + ")";
  if (f.is_number() && f.value().negative()) return "(" + render_node(f) + ")";
  return render_node(f);
}

inline std::string render_product(const Expr& e) {
  Number coeff(1LL);
  std::vector<const Expr*> numer;
  std::vector<std::pair<const Expr*, Rational>> denom;
  static thread_local std::vector<Expr> scratch;  // keep temporaries alive
  scratch.clear();

  for (const auto& k : e.operands()) {
    if (k.is_number()) {
      coeff = Number::mul(coeff, k.value());
      continue;
    }
    if (k.kind() == Expr::Kind::Power && k.exponent().negative()) {
      denom.emplace_back(&k.operands()[0], k.exponent().negated());
      continue;
    }
    numer.push_back(&k);
  }

  std::string s;
  bool neg_coeff = coeff.negative();
  Number abs_coeff = neg_coeff ? coeff.negated() : coeff;

  std::vector<std::string> parts;
  if (!abs_coeff.is_one() || numer.empty()) {
    if (abs_coeff.exact() && !abs_coeff.rat().is_integer() && !numer.empty()) {
      // write 1/2*x rather than (1/2)*x; leading fraction parses unambiguously
      parts.push_back(abs_coeff.rat().str());
    } else {
      parts.push_back(render_number(abs_coeff));
    }
  }
  for (const Expr* f : numer) parts.push_back(render_factor(*f));

  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += "*";
    s += parts[i];
  }
  for (const auto& [b, r] : denom) {
    s += "/";
    s += r.is_one() ? render_pow_base(*b) : render_power(*b, r);
  }
  if (neg_coeff) s = "-" + s;
  return s;
}

inline std::string render_sum(const Expr& e) {
  std::string s;
  bool first = true;
  for (const auto& t : e.operands()) {
    auto [c, rest] = split_term(t);
    bool negative = c.negative();
    Expr display = negative ? simplify_product_of({Expr::number(c.negated()), rest})
                            : t;
    std::string ts = display.kind() == Expr::Kind::Sum
                         ? "(" + render_node(display) + ")"
                         : render_node(display);
    if (first) {
      s = negative ? "-" + ts : ts;
      first = false;
    } else {
      s += negative ? " - " : " + ";
      s += ts;
    }
  }
  return s;
}

inline std::string render_node(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return render_number(e.value());
    case Expr::Kind::Symbol:
      return e.name();
    case Expr::Kind::Call:
      return e.name() + "(" + render_node(e.operands()[0]) + ")";
    case Expr::Kind::Power:
      return render_power(e.operands()[0], e.exponent());
    case Expr::Kind::Product:
      return render_product(e);
    case Expr::Kind::Sum:
      return render_sum(e);
  }
  return "";
}

}  // namespace detail

/// Render to text in the same grammar parse() accepts.
inline std::string render(const Expr& e) { return detail::render_node(e); }

}  // namespace pfaff

#endif

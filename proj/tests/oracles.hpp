#ifndef PFAFF_TESTS_ORACLES_HPP
#define PFAFF_TESTS_ORACLES_HPP

// Independent reference implementations used as test oracles. These must not
// share code paths with the library routines they check.

#include <vector>

#include "pfaff/expr.hpp"

namespace oracles {

/// Central finite difference with h = 1e-5 * (1 + |x|).
inline double finite_difference(const pfaff::Expr& e, const std::string& x,
                                const pfaff::Point& p) {
  double x0 = p.at(x);
  double h = 1e-5 * (1.0 + std::abs(x0));
  pfaff::Point lo = p, hi = p;
  lo[x] = x0 - h;
  hi[x] = x0 + h;
  return (pfaff::evaluate(e, hi) - pfaff::evaluate(e, lo)) / (2.0 * h);
}

inline int permutation_sign(std::vector<int> perm) {
  int sign = 1;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    while (perm[i] != static_cast<int>(i)) {
      std::swap(perm[i], perm[perm[i]]);
      sign = -sign;
    }
  }
  return sign;
}

/// Pfaffian by the full permutation-sum definition:
/// Pf(A) = 1/(2^m m!) sum_sigma sgn(sigma) prod a_{sigma(2k-1) sigma(2k)}.
inline double pfaffian_bruteforce(const std::vector<std::vector<double>>& a) {
  int n = static_cast<int>(a.size());
  if (n == 0) return 1.0;
  if (n % 2) return 0.0;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  double total = 0.0;
  do {
    double prod = 1.0;
    for (int k = 0; k < n / 2; ++k) prod *= a[perm[2 * k]][perm[2 * k + 1]];
    total += permutation_sign(perm) * prod;
  } while (std::next_permutation(perm.begin(), perm.end()));
  double denom = 1.0;
  for (int k = 1; k <= n / 2; ++k) denom *= 2.0 * k;  // 2^m * m!
  return total / denom;
}

/// Symbolic permutation-sum Pfaffian (small sizes only).
inline pfaff::Expr pfaffian_bruteforce_symbolic(
    const std::vector<std::vector<pfaff::Expr>>& a) {
  using pfaff::Expr;
  int n = static_cast<int>(a.size());
  if (n == 0) return Expr::number(1LL);
  if (n % 2) return Expr::number(0LL);
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::vector<Expr> terms;
  long long denom = 1;
  for (int k = 1; k <= n / 2; ++k) denom *= 2 * k;
  do {
    std::vector<Expr> factors;
    factors.push_back(Expr::number(*pfaff::Rational::make(permutation_sign(perm), denom)));
    for (int k = 0; k < n / 2; ++k) factors.push_back(a[perm[2 * k]][perm[2 * k + 1]]);
    terms.push_back(Expr::product(std::move(factors)));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return pfaff::simplify(Expr::sum(std::move(terms)));
}

}  // namespace oracles

#endif

#ifndef PFAFF_RATIONAL_HPP
#define PFAFF_RATIONAL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

namespace pfaff {

/// Exact rational over int64 with checked arithmetic. Operations that would
/// overflow return nullopt so callers can keep the expression unfolded
/// instead of silently losing exactness.
class Rational {
 public:
  constexpr Rational() : num_(0), den_(1) {}
  constexpr Rational(long long n) : num_(n), den_(1) {}

  static std::optional<Rational> make(long long n, long long d) {
    if (d == 0) return std::nullopt;
    return normalized(static_cast<__int128>(n), static_cast<__int128>(d));
  }

  long long num() const { return num_; }
  long long den() const { return den_; }

  bool is_zero() const { return num_ == 0; }
  bool is_one() const { return num_ == 1 && den_ == 1; }
  bool is_integer() const { return den_ == 1; }
  bool negative() const { return num_ < 0; }

  double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  static std::optional<Rational> add(const Rational& a, const Rational& b) {
    __int128 n = i128(a.num_) * b.den_ + i128(b.num_) * a.den_;
    return normalized(n, i128(a.den_) * b.den_);
  }
  static std::optional<Rational> mul(const Rational& a, const Rational& b) {
    return normalized(i128(a.num_) * b.num_, i128(a.den_) * b.den_);
  }
  static std::optional<Rational> div(const Rational& a, const Rational& b) {
    if (b.num_ == 0) return std::nullopt;
    return normalized(i128(a.num_) * b.den_, i128(a.den_) * b.num_);
  }
  Rational negated() const {
    Rational r;
    r.num_ = -num_;
    r.den_ = den_;
    return r;
  }

  /// a^k for integer k (k may be negative; a must be nonzero then).
  static std::optional<Rational> pow_int(const Rational& a, long long k) {
    if (k == 0) return Rational(1);
    Rational base = a;
    if (k < 0) {
      if (a.num_ == 0) return std::nullopt;
      auto inv = make(a.den_, a.num_);
      if (!inv) return std::nullopt;
      base = *inv;
      k = -k;
    }
    Rational acc(1);
    while (k > 0) {
      if (k & 1) {
        auto r = mul(acc, base);
        if (!r) return std::nullopt;
        acc = *r;
      }
      k >>= 1;
      if (k) {
        auto s = mul(base, base);
        if (!s) return std::nullopt;
        base = *s;
      }
    }
    return acc;
  }

  /// Exact q-th root when both numerator and denominator are perfect powers.
  static std::optional<Rational> root(const Rational& a, long long q) {
    if (q <= 0) return std::nullopt;
    if (q == 1) return a;
    if (a.num_ < 0) return std::nullopt;  // even/odd roots of negatives: keep symbolic
    auto rn = iroot(a.num_, q);
    auto rd = iroot(a.den_, q);
    if (!rn || !rd) return std::nullopt;
    return make(*rn, *rd);
  }

  static int cmp(const Rational& a, const Rational& b) {
    __int128 l = i128(a.num_) * b.den_;
    __int128 r = i128(b.num_) * a.den_;
    return l < r ? -1 : (l > r ? 1 : 0);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }

  std::string str() const {
    std::string s = std::to_string(num_);
    if (den_ != 1) s += "/" + std::to_string(den_);
    return s;
  }

 private:
  static __int128 i128(long long v) { return static_cast<__int128>(v); }

  static __int128 gcd128(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  static std::optional<Rational> normalized(__int128 n, __int128 d) {
    if (d == 0) return std::nullopt;
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 g = gcd128(n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    constexpr __int128 lo = std::numeric_limits<long long>::min();
    constexpr __int128 hi = std::numeric_limits<long long>::max();
    if (n < lo || n > hi || d > hi) return std::nullopt;
    Rational r;
    r.num_ = static_cast<long long>(n);
    r.den_ = static_cast<long long>(d);
    return r;
  }

  static std::optional<long long> iroot(long long v, long long q) {
    if (v == 0) return 0;
    if (v == 1) return 1;
    long long r = static_cast<long long>(std::llround(std::pow(static_cast<double>(v), 1.0 / static_cast<double>(q))));
    for (long long c = r > 1 ? r - 1 : 1; c <= r + 1; ++c) {
      __int128 p = 1;
      bool over = false;
      for (long long i = 0; i < q; ++i) {
        p *= c;
        if (p > std::numeric_limits<long long>::max()) {
          over = true;
          break;
        }
      }
      if (!over && p == v) return c;
    }
    return std::nullopt;
  }

  long long num_;
  long long den_;
};

/// A numeric constant: exact rational when possible, IEEE double otherwise.
class Number {
 public:
  Number() : exact_(true), rat_(0), dbl_(0) {}
  Number(Rational r) : exact_(true), rat_(r), dbl_(0) {}
  Number(long long n) : exact_(true), rat_(n), dbl_(0) {}
  explicit Number(double d) : exact_(false), rat_(0), dbl_(d) {}

  bool exact() const { return exact_; }
  const Rational& rat() const { return rat_; }
  double to_double() const { return exact_ ? rat_.to_double() : dbl_; }

  bool is_zero() const { return exact_ ? rat_.is_zero() : dbl_ == 0.0; }
  bool is_one() const { return exact_ ? rat_.is_one() : dbl_ == 1.0; }
  bool negative() const { return exact_ ? rat_.negative() : dbl_ < 0.0; }

  Number negated() const {
    return exact_ ? Number(rat_.negated()) : Number(-dbl_);
  }

  static Number add(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) {
      if (auto r = Rational::add(a.rat_, b.rat_)) return Number(*r);
    }
    return Number(a.to_double() + b.to_double());
  }
  static Number mul(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) {
      if (auto r = Rational::mul(a.rat_, b.rat_)) return Number(*r);
    }
    return Number(a.to_double() * b.to_double());
  }

  /// Exact power with rational exponent; nullopt when no exact result exists.
  static std::optional<Number> pow_exact(const Number& base, const Rational& e) {
    if (!base.exact_) return std::nullopt;
    if (e.is_integer()) {
      auto r = Rational::pow_int(base.rat_, e.num());
      if (!r) return std::nullopt;
      return Number(*r);
    }
    auto rt = Rational::root(base.rat_, e.den());
    if (!rt) return std::nullopt;
    auto r = Rational::pow_int(*rt, e.num());
    if (!r) return std::nullopt;
    return Number(*r);
  }

  /// Total order used for canonical sorting: exact constants sort before
  /// doubles of equal value so orderings stay deterministic.
  static int cmp(const Number& a, const Number& b) {
    if (a.exact_ && b.exact_) return Rational::cmp(a.rat_, b.rat_);
    double x = a.to_double(), y = b.to_double();
    if (x < y) return -1;
    if (x > y) return 1;
    if (a.exact_ != b.exact_) return a.exact_ ? -1 : 1;
    return 0;
  }

 private:
  bool exact_;
  Rational rat_;
  double dbl_;
};

}  // namespace pfaff

#endif

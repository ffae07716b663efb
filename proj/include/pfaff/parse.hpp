#ifndef PFAFF_PARSE_HPP
#define PFAFF_PARSE_HPP

#include <cctype>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "pfaff/errors.hpp"
#include "pfaff/expr.hpp"

namespace pfaff {

// Pratt parser for the expression grammar:
//   infix + - * / ^, unary minus, parentheses, calls name(expr),
//   decimal/rational literals, identifiers.
// ^ binds tightest and associates to the right; * and / associate to the
// left above + and -. Exponents must fold to rational constants.

namespace detail {

struct Token {
  enum Type { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Type type;
  std::string text;
  std::size_t pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src), i_(0) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
    std::size_t start = i_;
    if (i_ >= src_.size()) {
      tok_ = {Token::End, "", start};
      return;
    }
    char c = src_[i_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
      if (i_ < src_.size() && src_[i_] == '.') {
        ++i_;
        if (i_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[i_])))
          throw ParseError("expected digits after decimal point", i_);
        while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
      }
      if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
        std::size_t save = i_;
        ++i_;
        if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
        if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
          while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
        } else {
          i_ = save;  // 'e' starts an identifier, not an exponent
        }
      }
      tok_ = {Token::Number, std::string(src_.substr(start, i_ - start)), start};
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
        ++i_;
      tok_ = {Token::Ident, std::string(src_.substr(start, i_ - start)), start};
      return;
    }
    ++i_;
    switch (c) {
      case '+': tok_ = {Token::Plus, "+", start}; return;
      case '-': tok_ = {Token::Minus, "-", start}; return;
      case '*': tok_ = {Token::Star, "*", start}; return;
      case '/': tok_ = {Token::Slash, "/", start}; return;
      case '^': tok_ = {Token::Caret, "^", start}; return;
      case '(': tok_ = {Token::LParen, "(", start}; return;
      case ')': tok_ = {Token::RParen, ")", start}; return;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", start);
    }
  }

  std::string_view src_;
  std::size_t i_;
  Token tok_;
};

inline Expr number_from_literal(const std::string& text, std::size_t pos) {
  // exact rational when the decimal fits in int64, double otherwise
  std::size_t dot = text.find('.');
  std::size_t epos = text.find_first_of("eE");
  long long shift = 0;
  std::string digits;
  std::string mant = epos == std::string::npos ? text : text.substr(0, epos);
  if (epos != std::string::npos) shift = std::atoll(text.c_str() + epos + 1);
  if (dot == std::string::npos) {
    digits = mant;
  } else {
    digits = mant.substr(0, dot) + mant.substr(dot + 1);
    shift -= static_cast<long long>(mant.size() - dot - 1);
  }
  if (digits.size() <= 18 && std::llabs(shift) <= 18) {
    long long v = 0;
    for (char c : digits) v = v * 10 + (c - '0');
    long long n = v, d = 1;
    bool ok = true;
    for (long long k = 0; k < std::llabs(shift); ++k) {
      if (shift > 0) {
        if (n > std::numeric_limits<long long>::max() / 10) { ok = false; break; }
        n *= 10;
      } else {
        if (d > std::numeric_limits<long long>::max() / 10) { ok = false; break; }
        d *= 10;
      }
    }
    if (ok) {
      if (auto r = Rational::make(n, d)) return Expr::number(*r);
    }
  }
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str()) throw ParseError("bad numeric literal", pos);
  return Expr::number(v);
}

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  Expr parse() {
    Expr e = expression(0);
    const Token& t = lex_.peek();
    if (t.type != Token::End)
      throw ParseError("unexpected trailing input '" + t.text + "'", t.pos);
    return e;
  }

 private:
  static constexpr int kAddBp = 10;
  static constexpr int kMulBp = 20;
  static constexpr int kUnaryBp = 25;
  static constexpr int kPowBp = 30;

  Expr expression(int min_bp) {
    Expr lhs = prefix();
    for (;;) {
      const Token& t = lex_.peek();
      int bp;
      switch (t.type) {
        case Token::Plus:
        case Token::Minus: bp = kAddBp; break;
        case Token::Star:
        case Token::Slash: bp = kMulBp; break;
        case Token::Caret: bp = kPowBp; break;
        default: return lhs;
      }
      if (bp <= min_bp) return lhs;
      Token op = lex_.take();
      if (op.type == Token::Caret) {
        Expr rhs = expression(kPowBp - 1);  // right-associative
        lhs = Expr::power(lhs, exponent_value(rhs, op.pos));
      } else {
        Expr rhs = expression(bp);
        switch (op.type) {
          case Token::Plus: lhs = lhs + rhs; break;
          case Token::Minus: lhs = lhs - rhs; break;
          case Token::Star: lhs = lhs * rhs; break;
          default: lhs = lhs / rhs; break;
        }
      }
    }
  }

  Rational exponent_value(const Expr& rhs, std::size_t pos) {
    Expr v = simplify(rhs);
    if (v.is_number() && v.value().exact()) return v.value().rat();
    throw ParseError("exponent must be a rational constant", pos);
  }

  Expr prefix() {
    Token t = lex_.take();
    switch (t.type) {
      case Token::Number:
        return number_from_literal(t.text, t.pos);
      case Token::Ident: {
        if (lex_.peek().type == Token::LParen) {
          if (!function_whitelist().count(t.text))
            throw ParseError("unknown function '" + t.text + "'", t.pos);
          lex_.take();
          Expr arg = expression(0);
          expect(Token::RParen, ")");
          return Expr::call(t.text, arg);
        }
        return Expr::symbol(t.text);
      }
      case Token::LParen: {
        Expr e = expression(0);
        expect(Token::RParen, ")");
        return e;
      }
      case Token::Minus:
        return neg(expression(kUnaryBp));
      case Token::Plus:
        return expression(kUnaryBp);
      default:
        throw ParseError("unexpected token '" + t.text + "'", t.pos);
    }
  }

  void expect(Token::Type ty, const char* what) {
    const Token& t = lex_.peek();
    if (t.type != ty)
      throw ParseError(std::string("expected '") + what + "'", t.pos);
    lex_.take();
  }

  Lexer lex_;
};

}  // namespace detail

/// Parse expression text; throws ParseError with position on bad input.
inline Expr parse(std::string_view text) { return detail::Parser(text).parse(); }

}  // namespace pfaff

#endif

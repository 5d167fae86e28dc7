#include "rbsde/cli/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "rbsde/error.hpp"

namespace rbsde::cli {

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  Expression parse() {
    Expression e = expr();
    skip_space();
    if (pos_ != text_.size()) error("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::InvalidConfig,
         "expression \"" + text_ + "\": " + what + " at position " + std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) error(std::string("expected '") + c + "'");
  }

  Expression expr() {
    Expression lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = [a = lhs, b = term()](double t, double x) { return a(t, x) + b(t, x); };
      } else if (accept('-')) {
        lhs = [a = lhs, b = term()](double t, double x) { return a(t, x) - b(t, x); };
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = [a = lhs, b = unary()](double t, double x) { return a(t, x) * b(t, x); };
      } else if (accept('/')) {
        lhs = [a = lhs, b = unary()](double t, double x) { return a(t, x) / b(t, x); };
      } else {
        return lhs;
      }
    }
  }

  Expression unary() {
    if (accept('-')) return [a = unary()](double t, double x) { return -a(t, x); };
    if (accept('+')) return unary();
    Expression base = primary();
    if (accept('^')) return [a = base, b = unary()](double t, double x) { return std::pow(a(t, x), b(t, x)); };
    return base;
  }

  std::vector<Expression> arguments() {
    std::vector<Expression> args;
    expect('(');
    args.push_back(expr());
    while (accept(',')) args.push_back(expr());
    expect(')');
    return args;
  }

  Expression call(const std::string& name) {
    const std::size_t at = pos_;
    auto args = arguments();
    auto arity = [&](std::size_t n) {
      if (args.size() != n) {
        pos_ = at;
        error(name + " takes " + std::to_string(n) + " argument(s)");
      }
    };
    if (name == "max") {
      arity(2);
      return [a = args[0], b = args[1]](double t, double x) { return std::max(a(t, x), b(t, x)); };
    }
    if (name == "min") {
      arity(2);
      return [a = args[0], b = args[1]](double t, double x) { return std::min(a(t, x), b(t, x)); };
    }
    arity(1);
    const Expression a = args[0];
    if (name == "pos") return [a](double t, double x) { return std::max(a(t, x), 0.0); };
    if (name == "abs") return [a](double t, double x) { return std::abs(a(t, x)); };
    if (name == "exp") return [a](double t, double x) { return std::exp(a(t, x)); };
    if (name == "sqrt") return [a](double t, double x) { return std::sqrt(a(t, x)); };
    if (name == "log") return [a](double t, double x) { return std::log(a(t, x)); };
    if (name == "sin") return [a](double t, double x) { return std::sin(a(t, x)); };
    if (name == "cos") return [a](double t, double x) { return std::cos(a(t, x)); };
    if (name == "tanh") return [a](double t, double x) { return std::tanh(a(t, x)); };
    pos_ = at;
    error("unknown function '" + name + "'");
  }

  Expression primary() {
    skip_space();
    if (pos_ >= text_.size()) error("unexpected end of input");
    if (accept('(')) {
      Expression e = expr();
      expect(')');
      return e;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      const double value = std::strtod(begin, &end);
      if (end == begin) error("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      return [value](double, double) { return value; };
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name = text_.substr(start, pos_ - start);
      if (name == "t") return [](double t, double) { return t; };
      if (name == "B") return [](double, double x) { return x; };
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '(') return call(name);
      pos_ = start;
      error("unknown identifier '" + name + "'");
    }
    error("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression parse_expression(const std::string& text) { return Parser(text).parse(); }

}  // namespace rbsde::cli

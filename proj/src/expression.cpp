#include "escobar/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "escobar/errors.hpp"

namespace escobar {

enum class Op { constant, coordinate, neg, add, sub, mul, div, pow, func };
enum class Func { sin, cos, tan, exp, log, sqrt, tanh, abs };

struct Expression::Node {
  Op op = Op::constant;
  double value = 0.0;        // constant
  std::size_t index = 0;     // coordinate
  Func func = Func::sin;
  std::size_t lhs = 0, rhs = 0;
};

namespace {

struct FuncName {
  const char* name;
  Func func;
};
constexpr FuncName func_names[] = {{"sin", Func::sin},   {"cos", Func::cos},   {"tan", Func::tan},
                                   {"exp", Func::exp},   {"log", Func::log},   {"sqrt", Func::sqrt},
                                   {"tanh", Func::tanh}, {"abs", Func::abs}};

class Parser {
 public:
  Parser(const std::string& text, std::size_t n, std::vector<Expression::Node>& nodes)
      : s_(text), n_(n), nodes_(nodes) {}

  std::size_t parse() {
    skip();
    if (pos_ == s_.size()) fail("empty expression");
    const std::size_t root = expr();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression \"" + s_ + "\": " + what + " at column " + std::to_string(pos_ + 1));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      skip();
      return true;
    }
    return false;
  }

  std::size_t push(Expression::Node node) {
    nodes_.push_back(node);
    return nodes_.size() - 1;
  }

  std::size_t binary(Op op, std::size_t a, std::size_t b) {
    Expression::Node node;
    node.op = op;
    node.lhs = a;
    node.rhs = b;
    return push(node);
  }

  std::size_t expr() {
    std::size_t left = term();
    for (;;) {
      if (accept('+')) {
        left = binary(Op::add, left, term());
      } else if (accept('-')) {
        left = binary(Op::sub, left, term());
      } else {
        return left;
      }
    }
  }

  std::size_t term() {
    std::size_t left = unary();
    for (;;) {
      if (accept('*')) {
        left = binary(Op::mul, left, unary());
      } else if (accept('/')) {
        left = binary(Op::div, left, unary());
      } else {
        return left;
      }
    }
  }

  std::size_t unary() {
    if (accept('-')) {
      Expression::Node node;
      node.op = Op::neg;
      node.lhs = unary();
      return push(node);
    }
    if (accept('+')) return unary();
    return power();
  }

  std::size_t power() {
    const std::size_t base = primary();
    if (accept('^')) return binary(Op::pow, base, unary());
    return base;
  }

  std::size_t primary() {
    if (pos_ == s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (accept('(')) {
      const std::size_t inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return name();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::size_t number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    skip();
    Expression::Node node;
    node.value = v;
    return push(node);
  }

  std::size_t name() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string id = s_.substr(start, pos_ - start);
    skip();
    for (const auto& f : func_names) {
      if (id != f.name) continue;
      if (!accept('(')) fail("expected '(' after " + id);
      Expression::Node node;
      node.op = Op::func;
      node.func = f.func;
      node.lhs = expr();
      if (!accept(')')) fail("expected ')'");
      return push(node);
    }
    Expression::Node node;
    if (id == "pi") {
      node.value = std::numbers::pi;
      return push(node);
    }
    node.op = Op::coordinate;
    if (id == "t") {
      node.index = n_ - 1;
      return push(node);
    }
    if (id.size() >= 2 && id[0] == 'x' && id.find_first_not_of("0123456789", 1) == std::string::npos) {
      const unsigned long k = std::stoul(id.substr(1));
      if (k >= 1 && k <= n_ - 1) {
        node.index = k - 1;
        return push(node);
      }
      pos_ = start;
      fail("coordinate " + id + " outside x1..x" + std::to_string(n_ - 1));
    }
    pos_ = start;
    fail("unknown name '" + id + "'");
  }

  const std::string& s_;
  std::size_t n_;
  std::vector<Expression::Node>& nodes_;
  std::size_t pos_ = 0;
};

double apply(Func f, double x) {
  switch (f) {
    case Func::sin: return std::sin(x);
    case Func::cos: return std::cos(x);
    case Func::tan: return std::tan(x);
    case Func::exp: return std::exp(x);
    case Func::log: return std::log(x);
    case Func::sqrt: return std::sqrt(x);
    case Func::tanh: return std::tanh(x);
    case Func::abs: return std::abs(x);
  }
  return 0.0;
}

double eval(const std::vector<Expression::Node>& nodes, std::size_t i, std::span<const double> z) {
  const auto& node = nodes[i];
  switch (node.op) {
    case Op::constant: return node.value;
    case Op::coordinate: return z[node.index];
    case Op::neg: return -eval(nodes, node.lhs, z);
    case Op::add: return eval(nodes, node.lhs, z) + eval(nodes, node.rhs, z);
    case Op::sub: return eval(nodes, node.lhs, z) - eval(nodes, node.rhs, z);
    case Op::mul: return eval(nodes, node.lhs, z) * eval(nodes, node.rhs, z);
    case Op::div: return eval(nodes, node.lhs, z) / eval(nodes, node.rhs, z);
    case Op::pow: return std::pow(eval(nodes, node.lhs, z), eval(nodes, node.rhs, z));
    case Op::func: return apply(node.func, eval(nodes, node.lhs, z));
  }
  return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text, std::size_t n) {
  if (n < 2) throw ConfigError("expression dimension must be at least 2");
  auto nodes = std::make_shared<std::vector<Node>>();
  Parser parser(text, n, *nodes);
  Expression e;
  e.root_ = parser.parse();
  e.text_ = text;
  e.nodes_ = std::move(nodes);
  return e;
}

double Expression::operator()(std::span<const double> z) const { return eval(*nodes_, root_, z); }

bool Expression::is_constant() const {
  for (const auto& node : *nodes_) {
    if (node.op == Op::coordinate) return false;
  }
  return true;
}

}  // namespace escobar

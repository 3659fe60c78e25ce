#pragma once

// Arithmetic expressions over node coordinates, used for phi and sigma specs.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right-associative, binds tighter than unary minus
//   primary := number | name | name '(' expr ')' | '(' expr ')'
//
// Names: x1 .. x{n-1}, t, pi. Functions: sin cos tan exp log sqrt tanh abs.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace escobar {

class Expression {
 public:
  /// Parses `text` for points of dimension n (n-1 lateral coordinates plus t).
  /// Throws ConfigError naming the offending column.
  static Expression parse(const std::string& text, std::size_t n);

  /// z holds (x_1, ..., x_{n-1}, t).
  double operator()(std::span<const double> z) const;

  const std::string& text() const { return text_; }
  /// True when no coordinate appears in the expression.
  bool is_constant() const;

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const std::vector<Node>> nodes_;
  std::size_t root_ = 0;
};

}  // namespace escobar

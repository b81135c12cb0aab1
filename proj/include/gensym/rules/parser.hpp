#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gensym/rules/ast.hpp"

namespace gensym::rules {

/// Raised for any syntactic or static-semantic problem in rule text.
/// Line and column are 1-based; `context` holds the offending source line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, int line, int column, std::string token,
             std::vector<std::string> expected, std::string context);

  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& token() const { return token_; }
  const std::vector<std::string>& expected() const { return expected_; }
  const std::string& context() const { return context_; }

  /// Multi-line rendering used in logs and Critic prompts.
  std::string describe() const;

 private:
  std::string message_;
  int line_;
  int column_;
  std::string token_;
  std::vector<std::string> expected_;
  std::string context_;
};

/// Parse every `sp {...}` block in `source`.
RuleSet parse_ruleset(std::string_view source);

/// Parse and merge several sources (names must stay distinct across them).
RuleSet merge(const RuleSet& a, const RuleSet& b);

}  // namespace gensym::rules

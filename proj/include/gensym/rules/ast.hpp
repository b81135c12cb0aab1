#pragma once

// Abstract syntax for the production subset accepted by the rule parser.
// All node types are plain values with structural equality; the parser
// desugars dot notation and negated attribute tests, so an AST never carries
// an attribute path longer than one element.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gensym::rules {

/// A variable such as `<s>`; the name is stored without angle brackets.
struct Variable {
  std::string name;
  friend bool operator==(const Variable&, const Variable&) = default;
};

/// Symbolic constant, quoted `|string|` constant, or integer.
struct Constant {
  enum class Kind : std::uint8_t { Symbol, String, Integer };
  Kind kind = Kind::Symbol;
  std::string text;          // Symbol / String payload
  std::int64_t integer = 0;  // Integer payload

  static Constant symbol(std::string s) { return {Kind::Symbol, std::move(s), 0}; }
  static Constant string(std::string s) { return {Kind::String, std::move(s), 0}; }
  static Constant number(std::int64_t v) { return {Kind::Integer, {}, v}; }

  friend bool operator==(const Constant&, const Constant&) = default;
};

using Term = std::variant<Variable, Constant>;

enum class Relation : std::uint8_t { Less, Greater, LessEqual, GreaterEqual, NotEqual, Equal };

struct ValueTest {
  enum class Kind : std::uint8_t { Constant, Variable, Relational, Disjunction, Negation };
  Kind kind = Kind::Constant;
  std::optional<Relation> relation;  // Relational only (Negation implies NotEqual)
  Term operand;                      // unused for Disjunction
  std::vector<Constant> alternatives;
  // `^operator <o> +` on the LHS: matches acceptable preferences rather than
  // the selected operator.
  bool acceptable = false;

  friend bool operator==(const ValueTest&, const ValueTest&) = default;
};

struct AttributeTest {
  std::string attribute;
  std::vector<ValueTest> values;  // empty: any value
  friend bool operator==(const AttributeTest&, const AttributeTest&) = default;
};

struct Condition {
  enum class Polarity : std::uint8_t { Positive, Negated, NegatedConjunction };
  Polarity polarity = Polarity::Positive;
  bool state = false;  // `(state <s> ...)`
  Term idTest;
  std::vector<AttributeTest> attributeTests;
  std::vector<Condition> inner;  // NegatedConjunction only

  friend bool operator==(const Condition&, const Condition&) = default;
};

enum class PreferenceSymbol : std::uint8_t {
  Acceptable,   // +
  Reject,       // -
  Require,      // !
  Prohibit,     // ~
  Best,         // >  (unary)
  Worst,        // <  (unary)
  Better,       // >  value
  Worse,        // <  value
  Indifferent,  // =  (binary when a referent follows)
};

/// Right-hand-side value: constant, variable, arithmetic node, or `(crlf)`
/// inside a `write` argument list.
struct RhsValue {
  enum class Kind : std::uint8_t { Constant, Variable, Arithmetic, Crlf };
  Kind kind = Kind::Constant;
  Constant constant;
  Variable variable;
  char op = 0;  // '+', '-', '*', '/'
  std::vector<RhsValue> operands;

  static RhsValue of(Constant c) {
    RhsValue v;
    v.kind = Kind::Constant;
    v.constant = std::move(c);
    return v;
  }
  static RhsValue of(Variable var) {
    RhsValue v;
    v.kind = Kind::Variable;
    v.variable = std::move(var);
    return v;
  }

  friend bool operator==(const RhsValue&, const RhsValue&) = default;
};

struct Preference {
  PreferenceSymbol symbol = PreferenceSymbol::Acceptable;
  std::optional<RhsValue> referent;  // Better / Worse / binary Indifferent
  friend bool operator==(const Preference&, const Preference&) = default;
};

struct Action {
  enum class Kind : std::uint8_t { Make, Remove, FunctionCall };
  Kind kind = Kind::Make;
  Variable idVariable;   // Make / Remove
  std::string attribute; // Make / Remove
  RhsValue value;        // Make / Remove
  std::vector<Preference> preferences;  // Make on ^operator only
  std::string function;                 // FunctionCall: write | halt | crlf
  std::vector<RhsValue> arguments;      // FunctionCall

  friend bool operator==(const Action&, const Action&) = default;
};

struct Production {
  std::string name;
  std::optional<std::string> documentation;
  std::vector<Condition> conditions;
  std::vector<Action> actions;

  friend bool operator==(const Production&, const Production&) = default;
};

struct RuleSet {
  std::vector<Production> productions;
  std::string sourceText;

  const Production* find(std::string_view name) const {
    for (const auto& p : productions)
      if (p.name == name) return &p;
    return nullptr;
  }

  /// Structural equality; source text is not compared.
  friend bool operator==(const RuleSet& a, const RuleSet& b) { return a.productions == b.productions; }
};

std::string_view to_string(PreferenceSymbol p);
std::string_view to_string(Relation r);

}  // namespace gensym::rules

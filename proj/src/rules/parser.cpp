#include "gensym/rules/parser.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "lexer.hpp"

namespace gensym::rules {

using detail::Tok;
using detail::Token;

ParseError::ParseError(std::string message, int line, int column, std::string token,
                       std::vector<std::string> expected, std::string context)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "line " << line << ", column " << column << ": " << message;
        return os.str();
      }()),
      message_(std::move(message)),
      line_(line),
      column_(column),
      token_(std::move(token)),
      expected_(std::move(expected)),
      context_(std::move(context)) {}

std::string ParseError::describe() const {
  std::ostringstream os;
  os << what();
  if (!token_.empty()) os << " (at '" << token_ << "')";
  if (!expected_.empty()) {
    os << "; expected one of:";
    for (const auto& e : expected_) os << ' ' << e;
  }
  if (!context_.empty()) {
    os << "\n  " << line_ << " | " << context_ << "\n  " << std::string(std::to_string(line_).size(), ' ')
       << " | " << std::string(static_cast<std::size_t>(std::max(column_ - 1, 0)), ' ') << '^';
  }
  return os.str();
}

std::string_view to_string(PreferenceSymbol p) {
  switch (p) {
    case PreferenceSymbol::Acceptable: return "acceptable";
    case PreferenceSymbol::Reject: return "reject";
    case PreferenceSymbol::Require: return "require";
    case PreferenceSymbol::Prohibit: return "prohibit";
    case PreferenceSymbol::Best: return "best";
    case PreferenceSymbol::Worst: return "worst";
    case PreferenceSymbol::Better: return "better";
    case PreferenceSymbol::Worse: return "worse";
    case PreferenceSymbol::Indifferent: return "indifferent";
  }
  return "?";
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Less: return "<";
    case Relation::Greater: return ">";
    case Relation::LessEqual: return "<=";
    case Relation::GreaterEqual: return ">=";
    case Relation::NotEqual: return "<>";
    case Relation::Equal: return "=";
  }
  return "?";
}

namespace {

constexpr int kMaxNesting = 64;
constexpr std::string_view kFreshPrefix = "\x01";  // replaced after the production is parsed

struct VarUse {
  std::string name;
  int line;
  int column;
};

class Parser {
 public:
  Parser(std::string_view src) : src_(src), toks_(detail::tokenize(src)) {}

  RuleSet parse() {
    RuleSet rs;
    rs.sourceText = std::string(src_);
    std::map<std::string, bool> names;
    while (peek().kind != Tok::End) {
      const Token& t = peek();
      if (t.kind == Tok::RBrace) fail("unbalanced braces: unexpected '}'", t, {"'sp'"});
      if (t.kind != Tok::Ident) fail("expected a production ('sp {...}')", t, {"'sp'"});
      if (t.text == "gp") fail("gp (generated) productions are not supported", t, {"'sp'"});
      if (t.text != "sp") fail("expected a production ('sp {...}')", t, {"'sp'"});
      next();
      expect(Tok::LBrace, "'{' after 'sp'");
      const Token name_tok = peek();
      Production p = production();
      if (names.count(p.name)) fail("duplicate production name '" + p.name + "'", name_tok, {});
      names[p.name] = true;
      rs.productions.push_back(std::move(p));
    }
    return rs;
  }

 private:
  // ---------------------------------------------------------------- helpers

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }

  std::string line_text(int line) const {
    int cur = 1;
    std::size_t start = 0;
    for (std::size_t i = 0; i < src_.size() && cur < line; ++i) {
      if (src_[i] == '\n') {
        ++cur;
        start = i + 1;
      }
    }
    if (cur != line) return {};
    std::size_t end = src_.find('\n', start);
    std::string s(src_.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  [[noreturn]] void fail(const std::string& msg, const Token& at, std::vector<std::string> expected) const {
    std::string tok = at.kind == Tok::End ? std::string("<end of input>") : at.text;
    if (at.kind == Tok::Variable) tok = "<" + at.text + ">";
    if (at.kind == Tok::String) tok = "|" + at.text + "|";
    throw ParseError(msg, at.line, at.column, tok, std::move(expected), line_text(at.line));
  }

  [[noreturn]] void unexpected(const Token& at, std::vector<std::string> expected) const {
    if (at.kind == Tok::Unterminated) fail("unterminated quoted literal", at, std::move(expected));
    if (at.kind == Tok::Float) fail("floating-point constants are not supported", at, std::move(expected));
    if (at.kind == Tok::End) fail("unbalanced braces or parentheses: unexpected end of input", at, std::move(expected));
    std::string msg = "unexpected ";
    msg += detail::describe(at.kind);
    fail(msg, at, std::move(expected));
  }

  const Token& expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) unexpected(peek(), {what});
    return next();
  }

  static bool starts_value(Tok k) {
    return k == Tok::Variable || k == Tok::Ident || k == Tok::Number || k == Tok::String;
  }

  Constant constant_from(const Token& t) const {
    switch (t.kind) {
      case Tok::Ident: return Constant::symbol(t.text);
      case Tok::Number: return Constant::number(t.number);
      case Tok::String: return Constant::string(t.text);
      default: unexpected(t, {"constant"});
    }
  }

  Term term_from(const Token& t) const {
    if (t.kind == Tok::Variable) return Variable{t.text};
    return constant_from(t);
  }

  std::string fresh_var() { return std::string(kFreshPrefix) + std::to_string(++fresh_count_); }

  // ------------------------------------------------------------- production

  Production production() {
    Production p;
    fresh_count_ = 0;
    lhs_relational_uses_.clear();
    rhs_uses_.clear();
    const Token& name = peek();
    if (name.kind == Tok::RBrace || name.kind == Tok::End) fail("unbalanced braces or missing production name", name, {"production name"});
    if (name.kind != Tok::Ident) unexpected(name, {"production name"});
    p.name = next().text;
    name_tok_ = name;
    if (peek().kind == Tok::DocString) p.documentation = next().text;
    if (peek().kind == Tok::Ident && peek().text.starts_with(":")) fail("production flags are not supported", peek(), {});
    if (peek().kind == Tok::Unknown && peek().text == ":") fail("production flags (e.g. :o-support) are not supported", peek(), {});

    while (peek().kind != Tok::Arrow) {
      if (peek().kind == Tok::RBrace || peek().kind == Tok::End)
        fail("production '" + p.name + "' is missing '-->'", peek(), {"'('", "'-'", "'-->'"});
      condition_into(p.conditions, 0);
    }
    next();  // -->
    while (peek().kind != Tok::RBrace) {
      if (peek().kind == Tok::End) fail("unbalanced braces: production '" + p.name + "' is missing '}'", peek(), {"'('", "'}'"});
      action_into(p.actions);
    }
    next();  // }
    rename_fresh(p);
    validate(p);
    return p;
  }

  // ------------------------------------------------------------- conditions

  void condition_into(std::vector<Condition>& out, int depth) {
    if (depth > kMaxNesting) fail("conditions nested too deeply", peek(), {});
    const Token& t = peek();
    if (t.kind == Tok::Minus) {
      next();
      if (peek().kind == Tok::LBrace) {
        next();
        Condition c;
        c.polarity = Condition::Polarity::NegatedConjunction;
        while (peek().kind != Tok::RBrace) {
          if (peek().kind == Tok::End || peek().kind == Tok::Arrow)
            fail("unbalanced braces in negated conjunction", peek(), {"'('", "'}'"});
          condition_into(c.inner, depth + 1);
        }
        next();
        if (c.inner.empty()) fail("negated conjunction needs at least one condition", t, {"'('"});
        out.push_back(std::move(c));
        return;
      }
      if (peek().kind != Tok::LParen) unexpected(peek(), {"'('", "'{'"});
      std::vector<Condition> parts = simple_condition();
      Condition& head = parts.front();
      if (parts.size() == 1 && head.polarity == Condition::Polarity::Positive) {
        head.polarity = Condition::Polarity::Negated;
        out.push_back(std::move(head));
      } else {
        Condition c;
        c.polarity = Condition::Polarity::NegatedConjunction;
        c.inner = std::move(parts);
        out.push_back(std::move(c));
      }
      return;
    }
    if (t.kind == Tok::LBrace) fail("conjunctive condition groups are only supported in negated form '-{...}'", t, {"'('", "'-'"});
    if (t.kind != Tok::LParen) unexpected(t, {"'('", "'-'", "'-->'"});
    auto parts = simple_condition();
    for (auto& c : parts) out.push_back(std::move(c));
  }

  // Parses `( [state] id attr-tests* )`. Returns the condition followed by
  // any chained conditions produced by dot notation and split-off negated
  // attribute tests.
  std::vector<Condition> simple_condition() {
    expect(Tok::LParen, "'('");
    std::vector<Condition> extra;
    Condition c;
    const Token& first = peek();
    if (first.kind == Tok::Ident && first.text == "state" && peek(1).kind == Tok::Variable) {
      next();
      c.state = true;
    } else if (first.kind == Tok::Ident && first.text == "impasse") {
      fail("impasse conditions are not supported", first, {"'state'", "variable"});
    } else if (first.kind == Tok::Ident && first.text == "state") {
      unexpected(peek(1), {"variable"});
    }
    const Token& id = peek();
    if (id.kind == Tok::LParen) fail("LHS function calls are not supported", id, {"variable"});
    if (!starts_value(id.kind)) unexpected(id, {"variable", "'state'"});
    next();
    c.idTest = term_from(id);

    while (peek().kind != Tok::RParen) {
      bool negated = false;
      if (peek().kind == Tok::Minus) {
        next();
        negated = true;
        if (peek().kind != Tok::Caret) unexpected(peek(), {"'^'"});
      }
      if (peek().kind != Tok::Caret) unexpected(peek(), {"'^'", "')'"});
      next();
      std::vector<std::string> path = attribute_path();
      std::vector<ValueTest> tests = value_tests(path.back());

      // Build the chain: id ^p0 t1, t1 ^p1 t2, ..., tk ^pk tests
      std::vector<Condition> chain;
      Term cur = c.idTest;
      for (std::size_t i = 0; i < path.size(); ++i) {
        Condition link;
        link.idTest = cur;
        AttributeTest at;
        at.attribute = path[i];
        if (i + 1 < path.size()) {
          Variable v{fresh_var()};
          ValueTest vt;
          vt.kind = ValueTest::Kind::Variable;
          vt.operand = v;
          at.values.push_back(vt);
          cur = v;
        } else {
          at.values = tests;
        }
        link.attributeTests.push_back(std::move(at));
        chain.push_back(std::move(link));
      }

      if (negated) {
        if (chain.size() == 1) {
          chain.front().polarity = Condition::Polarity::Negated;
          extra.push_back(std::move(chain.front()));
        } else {
          Condition nc;
          nc.polarity = Condition::Polarity::NegatedConjunction;
          nc.inner = std::move(chain);
          extra.push_back(std::move(nc));
        }
      } else {
        c.attributeTests.push_back(std::move(chain.front().attributeTests.front()));
        for (std::size_t i = 1; i < chain.size(); ++i) extra.push_back(std::move(chain[i]));
      }
    }
    next();  // )
    std::vector<Condition> out;
    out.push_back(std::move(c));
    for (auto& e : extra) out.push_back(std::move(e));
    return out;
  }

  std::vector<std::string> attribute_path() {
    std::vector<std::string> path;
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::Variable) fail("attribute variables are not supported", t, {"attribute name"});
      if (t.kind != Tok::Ident) unexpected(t, {"attribute name"});
      path.push_back(next().text);
      if (peek().kind != Tok::Dot) break;
      next();
    }
    return path;
  }

  std::vector<ValueTest> value_tests(const std::string& attribute) {
    std::vector<ValueTest> tests;
    for (;;) {
      const Token& t = peek();
      ValueTest vt;
      switch (t.kind) {
        case Tok::Variable:
          vt.kind = ValueTest::Kind::Variable;
          vt.operand = Variable{next().text};
          break;
        case Tok::Ident:
        case Tok::Number:
        case Tok::String:
          vt.kind = ValueTest::Kind::Constant;
          vt.operand = constant_from(next());
          break;
        case Tok::Less:
        case Tok::Greater:
        case Tok::LessEq:
        case Tok::GreaterEq:
        case Tok::Equal:
        case Tok::NotEq: {
          const Token& rel = next();
          Relation r = rel.kind == Tok::Less        ? Relation::Less
                       : rel.kind == Tok::Greater   ? Relation::Greater
                       : rel.kind == Tok::LessEq    ? Relation::LessEqual
                       : rel.kind == Tok::GreaterEq ? Relation::GreaterEqual
                       : rel.kind == Tok::Equal     ? Relation::Equal
                                                    : Relation::NotEqual;
          const Token& operand = peek();
          if (!starts_value(operand.kind)) unexpected(operand, {"variable", "constant"});
          next();
          vt.kind = r == Relation::NotEqual ? ValueTest::Kind::Negation : ValueTest::Kind::Relational;
          vt.relation = r;
          vt.operand = term_from(operand);
          if (operand.kind == Tok::Variable) lhs_relational_uses_.push_back({operand.text, operand.line, operand.column});
          break;
        }
        case Tok::DisjOpen: {
          next();
          vt.kind = ValueTest::Kind::Disjunction;
          while (peek().kind != Tok::DisjClose) {
            const Token& a = peek();
            if (a.kind == Tok::Variable) fail("disjunctions may only list constants", a, {"constant", "'>>'"});
            if (a.kind != Tok::Ident && a.kind != Tok::Number && a.kind != Tok::String) unexpected(a, {"constant", "'>>'"});
            vt.alternatives.push_back(constant_from(next()));
          }
          next();
          if (vt.alternatives.empty()) fail("empty disjunction", t, {"constant"});
          break;
        }
        case Tok::LBrace:
          fail("conjunctive value tests ({ ... }) are not supported", t, {});
        case Tok::LParen:
          fail("LHS function calls are not supported", t, {});
        default:
          return tests;
      }
      if (peek().kind == Tok::Plus) {
        const Token& plus = next();
        if (attribute != "operator") fail("acceptable-preference tests are only legal on ^operator", plus, {});
        vt.acceptable = true;
      }
      tests.push_back(std::move(vt));
    }
  }

  // ---------------------------------------------------------------- actions

  void action_into(std::vector<Action>& out) {
    const Token& open = peek();
    if (open.kind != Tok::LParen) unexpected(open, {"'('", "'}'"});
    next();
    const Token& head = peek();
    if (head.kind == Tok::Variable) {
      next();
      Variable id{head.text};
      rhs_uses_.push_back({head.text, head.line, head.column});
      if (peek().kind == Tok::RParen) fail("action on <" + head.text + "> has no attributes", peek(), {"'^'"});
      while (peek().kind != Tok::RParen) {
        expect(Tok::Caret, "'^'");
        const Token& attr = peek();
        if (attr.kind == Tok::Variable) fail("attribute variables are not supported", attr, {"attribute name"});
        if (attr.kind != Tok::Ident) unexpected(attr, {"attribute name"});
        next();
        if (peek().kind == Tok::Dot) fail("dot notation is not supported on the right-hand side", peek(), {});
        bool any = false;
        while (peek().kind != Tok::Caret && peek().kind != Tok::RParen) {
          out.push_back(make_or_remove(id, attr.text));
          any = true;
        }
        if (!any) fail("attribute ^" + attr.text + " has no value", peek(), {"value"});
      }
      next();
      return;
    }
    if (head.kind == Tok::Ident) {
      next();
      Action a;
      a.kind = Action::Kind::FunctionCall;
      a.function = head.text;
      if (head.text == "halt" || head.text == "crlf") {
        if (peek().kind != Tok::RParen) unexpected(peek(), {"')'"});
      } else if (head.text == "write") {
        while (peek().kind != Tok::RParen) a.arguments.push_back(rhs_value(0, true));
      } else {
        fail("unsupported RHS function '" + head.text + "' (supported: write, halt, crlf, + - * /)", head, {});
      }
      next();
      out.push_back(std::move(a));
      return;
    }
    if (head.kind == Tok::Plus || head.kind == Tok::Minus || head.kind == Tok::Star || head.kind == Tok::Slash)
      fail("arithmetic must appear as an attribute value", head, {"variable", "function name"});
    unexpected(head, {"variable", "function name"});
  }

  Action make_or_remove(const Variable& id, const std::string& attribute) {
    Action a;
    a.idVariable = id;
    a.attribute = attribute;
    a.value = rhs_value(0, false);
    const bool is_operator = attribute == "operator";
    std::vector<Preference> prefs;
    std::vector<Token> pref_toks;
    for (;;) {
      const Token& t = peek();
      Preference p;
      switch (t.kind) {
        case Tok::Plus: p.symbol = PreferenceSymbol::Acceptable; break;
        case Tok::Minus: p.symbol = PreferenceSymbol::Reject; break;
        case Tok::Bang: p.symbol = PreferenceSymbol::Require; break;
        case Tok::Tilde: p.symbol = PreferenceSymbol::Prohibit; break;
        case Tok::Equal: p.symbol = PreferenceSymbol::Indifferent; break;
        case Tok::Greater: p.symbol = PreferenceSymbol::Best; break;
        case Tok::Less: p.symbol = PreferenceSymbol::Worst; break;
        case Tok::Unknown:
        case Tok::Star:
        case Tok::Slash:
        case Tok::Dot:
        case Tok::LessEq:
        case Tok::GreaterEq:
        case Tok::NotEq:
        case Tok::DisjOpen:
        case Tok::DisjClose:
          fail("unknown preference symbol '" + t.text + "'", t, {"'+'", "'-'", "'!'", "'~'", "'>'", "'<'", "'='"});
        default:
          goto done;
      }
      pref_toks.push_back(next());
      if (p.symbol == PreferenceSymbol::Best || p.symbol == PreferenceSymbol::Worst ||
          p.symbol == PreferenceSymbol::Indifferent) {
        Tok k = peek().kind;
        if (starts_value(k) || k == Tok::LParen) {
          if (p.symbol == PreferenceSymbol::Best) p.symbol = PreferenceSymbol::Better;
          if (p.symbol == PreferenceSymbol::Worst) p.symbol = PreferenceSymbol::Worse;
          p.referent = rhs_value(0, false);
        }
      }
      prefs.push_back(std::move(p));
    }
  done:
    if (!is_operator) {
      if (prefs.empty()) {
        a.kind = Action::Kind::Make;
        return a;
      }
      if (prefs.size() == 1 && prefs[0].symbol == PreferenceSymbol::Reject) {
        a.kind = Action::Kind::Remove;
        return a;
      }
      const Token& bad = prefs[0].symbol == PreferenceSymbol::Reject ? pref_toks[1] : pref_toks[0];
      fail("preferences are only legal on ^operator (use a trailing '-' alone to remove a value)", bad, {});
    }
    a.kind = Action::Kind::Make;
    a.preferences = std::move(prefs);
    return a;
  }

  RhsValue rhs_value(int depth, bool in_write) {
    if (depth > kMaxNesting) fail("expression nested too deeply", peek(), {});
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Variable:
        next();
        rhs_uses_.push_back({t.text, t.line, t.column});
        return RhsValue::of(Variable{t.text});
      case Tok::Ident:
      case Tok::Number:
      case Tok::String:
        return RhsValue::of(constant_from(next()));
      case Tok::LParen: {
        next();
        const Token& op = peek();
        RhsValue v;
        if (op.kind == Tok::Plus || op.kind == Tok::Minus || op.kind == Tok::Star || op.kind == Tok::Slash) {
          next();
          v.kind = RhsValue::Kind::Arithmetic;
          v.op = op.text[0];
          while (peek().kind != Tok::RParen) {
            if (peek().kind == Tok::End || peek().kind == Tok::RBrace) unexpected(peek(), {"operand", "')'"});
            v.operands.push_back(rhs_value(depth + 1, false));
          }
          if (v.operands.size() < 2) fail("arithmetic '" + op.text + "' needs at least two operands", op, {"operand"});
          next();
          return v;
        }
        if (op.kind == Tok::Ident && op.text == "crlf") {
          if (!in_write) fail("(crlf) is only valid inside (write ...)", op, {});
          next();
          expect(Tok::RParen, "')'");
          v.kind = RhsValue::Kind::Crlf;
          return v;
        }
        if (op.kind == Tok::Ident) fail("unsupported RHS function '" + op.text + "' (supported: write, halt, crlf, + - * /)", op, {});
        unexpected(op, {"'+'", "'-'", "'*'", "'/'", "function name"});
      }
      case Tok::Float:
        fail("floating-point constants are not supported", t, {});
      default:
        unexpected(t, {"value"});
    }
  }

  // --------------------------------------------------------------- semantics

  static void collect_positive(const std::vector<Condition>& conds, std::set<std::string>& bound) {
    for (const auto& c : conds) {
      if (c.polarity != Condition::Polarity::Positive) continue;
      if (auto* v = std::get_if<Variable>(&c.idTest)) bound.insert(v->name);
      for (const auto& at : c.attributeTests)
        for (const auto& vt : at.values)
          if (vt.kind == ValueTest::Kind::Variable) bound.insert(std::get<Variable>(vt.operand).name);
    }
  }

  static void collect_all(const std::vector<Condition>& conds, std::set<std::string>& vars) {
    for (const auto& c : conds) {
      if (auto* v = std::get_if<Variable>(&c.idTest)) vars.insert(v->name);
      for (const auto& at : c.attributeTests)
        for (const auto& vt : at.values)
          if (auto* v = std::get_if<Variable>(&vt.operand)) vars.insert(v->name);
      collect_all(c.inner, vars);
    }
  }

  void rename_fresh(Production& p) const {
    if (fresh_count_ == 0) return;
    std::set<std::string> used;
    collect_all(p.conditions, used);
    std::map<std::string, std::string> rename;
    int n = 0;
    for (int i = 1; i <= fresh_count_; ++i) {
      std::string name;
      do name = "_d" + std::to_string(++n);
      while (used.count(name));
      rename[std::string(kFreshPrefix) + std::to_string(i)] = name;
    }
    auto fix_term = [&](Term& t) {
      if (auto* v = std::get_if<Variable>(&t)) {
        auto it = rename.find(v->name);
        if (it != rename.end()) v->name = it->second;
      }
    };
    std::function<void(std::vector<Condition>&)> walk = [&](std::vector<Condition>& cs) {
      for (auto& c : cs) {
        fix_term(c.idTest);
        for (auto& at : c.attributeTests)
          for (auto& vt : at.values) fix_term(vt.operand);
        walk(c.inner);
      }
    };
    walk(p.conditions);
  }

  void validate(const Production& p) const {
    if (p.conditions.empty()) fail("production '" + p.name + "' has no conditions", name_tok_, {});
    if (p.actions.empty()) fail("production '" + p.name + "' has no actions", name_tok_, {});
    const Condition& first = p.conditions.front();
    if (first.polarity != Condition::Polarity::Positive || !first.state)
      fail("production '" + p.name + "': the first condition must test a state ('(state <s> ...)')", name_tok_, {});
    if (!std::holds_alternative<Variable>(first.idTest))
      fail("production '" + p.name + "': the state test must bind a variable", name_tok_, {});

    std::set<std::string> bound;
    collect_positive(p.conditions, bound);
    for (const auto& use : lhs_relational_uses_) {
      // Relational tests inside negations may refer to variables bound there.
      if (!bound.count(use.name)) {
        bool local_ok = false;
        for (const auto& c : p.conditions)
          if (c.polarity != Condition::Polarity::Positive) {
            std::set<std::string> inner_bound;
            if (c.polarity == Condition::Polarity::Negated) {
              collect_positive({Condition{Condition::Polarity::Positive, c.state, c.idTest, c.attributeTests, {}}}, inner_bound);
            } else {
              collect_positive(c.inner, inner_bound);
            }
            if (inner_bound.count(use.name)) local_ok = true;
          }
        if (!local_ok) {
          Token at;
          at.kind = Tok::Variable;
          at.text = use.name;
          at.line = use.line;
          at.column = use.column;
          fail("variable <" + use.name + "> is used in a relational test but never bound", at, {});
        }
      }
    }

    std::set<std::string> created;
    for (const auto& a : p.actions)
      if (a.kind == Action::Kind::Make && a.value.kind == RhsValue::Kind::Variable &&
          !bound.count(a.value.variable.name))
        created.insert(a.value.variable.name);
    for (const auto& use : rhs_uses_) {
      if (bound.count(use.name) || created.count(use.name)) continue;
      Token at;
      at.kind = Tok::Variable;
      at.text = use.name;
      at.line = use.line;
      at.column = use.column;
      fail("unbound variable <" + use.name + "> in action of '" + p.name + "'", at, {});
    }
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int fresh_count_ = 0;
  Token name_tok_;
  std::vector<VarUse> lhs_relational_uses_;
  std::vector<VarUse> rhs_uses_;
};

}  // namespace

RuleSet parse_ruleset(std::string_view source) { return Parser(source).parse(); }

RuleSet merge(const RuleSet& a, const RuleSet& b) {
  RuleSet out = a;
  for (const auto& p : b.productions) {
    if (out.find(p.name)) throw ParseError("duplicate production name '" + p.name + "'", 1, 1, p.name, {}, {});
    out.productions.push_back(p);
  }
  if (!out.sourceText.empty() && !b.sourceText.empty()) out.sourceText += "\n";
  out.sourceText += b.sourceText;
  return out;
}

}  // namespace gensym::rules

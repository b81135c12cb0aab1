#include "gensym/rules/render.hpp"

#include <sstream>

namespace gensym::rules {

namespace {

std::string quote(std::string_view s, char delim) {
  std::string out(1, delim);
  for (char c : s) {
    if (c == delim || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back(delim);
  return out;
}

std::string value_test(const ValueTest& vt) {
  std::string out;
  switch (vt.kind) {
    case ValueTest::Kind::Constant:
    case ValueTest::Kind::Variable:
      out = render(vt.operand);
      break;
    case ValueTest::Kind::Relational:
    case ValueTest::Kind::Negation:
      out = std::string(to_string(vt.relation.value_or(Relation::NotEqual))) + " " + render(vt.operand);
      break;
    case ValueTest::Kind::Disjunction:
      out = "<<";
      for (const auto& c : vt.alternatives) out += " " + render(c);
      out += " >>";
      break;
  }
  if (vt.acceptable) out += " +";
  return out;
}

std::string simple(const Condition& c) {
  std::string out = "(";
  if (c.state) out += "state ";
  out += render(c.idTest);
  for (const auto& at : c.attributeTests) {
    out += " ^" + at.attribute;
    for (const auto& vt : at.values) out += " " + value_test(vt);
  }
  out += ")";
  return out;
}

void condition(std::ostringstream& os, const Condition& c, const std::string& indent) {
  switch (c.polarity) {
    case Condition::Polarity::Positive:
      os << indent << simple(c) << "\n";
      break;
    case Condition::Polarity::Negated:
      os << indent << "-" << simple(c) << "\n";
      break;
    case Condition::Polarity::NegatedConjunction:
      os << indent << "-{\n";
      for (const auto& in : c.inner) condition(os, in, indent + "    ");
      os << indent << "}\n";
      break;
  }
}

char pref_char(PreferenceSymbol p) {
  switch (p) {
    case PreferenceSymbol::Acceptable: return '+';
    case PreferenceSymbol::Reject: return '-';
    case PreferenceSymbol::Require: return '!';
    case PreferenceSymbol::Prohibit: return '~';
    case PreferenceSymbol::Best:
    case PreferenceSymbol::Better: return '>';
    case PreferenceSymbol::Worst:
    case PreferenceSymbol::Worse: return '<';
    case PreferenceSymbol::Indifferent: return '=';
  }
  return '?';
}

std::string segment(const Action& a) {
  std::string out = "^" + a.attribute + " " + render(a.value);
  if (a.kind == Action::Kind::Remove) return out + " -";
  for (const auto& p : a.preferences) {
    out += " ";
    out.push_back(pref_char(p.symbol));
    if (p.referent) out += " " + render(*p.referent);
  }
  return out;
}

}  // namespace

std::string render(const Constant& c) {
  switch (c.kind) {
    case Constant::Kind::Symbol: return c.text;
    case Constant::Kind::String: return quote(c.text, '|');
    case Constant::Kind::Integer: return std::to_string(c.integer);
  }
  return {};
}

std::string render(const Term& t) {
  if (const auto* v = std::get_if<Variable>(&t)) return "<" + v->name + ">";
  return render(std::get<Constant>(t));
}

std::string render(const RhsValue& v) {
  switch (v.kind) {
    case RhsValue::Kind::Constant: return render(v.constant);
    case RhsValue::Kind::Variable: return "<" + v.variable.name + ">";
    case RhsValue::Kind::Crlf: return "(crlf)";
    case RhsValue::Kind::Arithmetic: {
      std::string out = "(";
      out.push_back(v.op);
      for (const auto& o : v.operands) out += " " + render(o);
      return out + ")";
    }
  }
  return {};
}

std::string render(const Production& p) {
  std::ostringstream os;
  os << "sp {" << p.name << "\n";
  if (p.documentation) os << "    " << quote(*p.documentation, '"') << "\n";
  for (const auto& c : p.conditions) condition(os, c, "    ");
  os << "-->\n";
  std::size_t i = 0;
  while (i < p.actions.size()) {
    const Action& a = p.actions[i];
    if (a.kind == Action::Kind::FunctionCall) {
      os << "    (" << a.function;
      for (const auto& arg : a.arguments) os << " " << render(arg);
      os << ")\n";
      ++i;
      continue;
    }
    os << "    (<" << a.idVariable.name << ">";
    std::size_t j = i;
    while (j < p.actions.size() && p.actions[j].kind != Action::Kind::FunctionCall &&
           p.actions[j].idVariable == a.idVariable) {
      os << " " << segment(p.actions[j]);
      ++j;
    }
    os << ")\n";
    i = j;
  }
  os << "}\n";
  return os.str();
}

std::string render(const RuleSet& rs) {
  std::string out;
  for (std::size_t i = 0; i < rs.productions.size(); ++i) {
    if (i) out += "\n";
    out += render(rs.productions[i]);
  }
  return out;
}

}  // namespace gensym::rules

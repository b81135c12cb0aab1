#pragma once

#include <string>

#include "gensym/rules/ast.hpp"

namespace gensym::rules {

/// Canonical text for a production. `parse_ruleset(render(p))` yields `p`.
std::string render(const Production& p);
std::string render(const RuleSet& rs);

std::string render(const Constant& c);
std::string render(const Term& t);
std::string render(const RhsValue& v);

}  // namespace gensym::rules

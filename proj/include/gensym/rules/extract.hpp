#pragma once

#include <string_view>

#include "gensym/rules/ast.hpp"

namespace gensym::rules {

/// Pull productions out of free-form model output.
///
/// Fenced code blocks are parsed one at a time so error positions refer to
/// the block. Blocks that contain no `sp` keyword are ignored. Without any
/// fences, top-level `sp {...}` spans are located by brace matching.
/// Throws ParseError ("no productions found") when nothing usable exists.
RuleSet extract_productions(std::string_view text);

}  // namespace gensym::rules

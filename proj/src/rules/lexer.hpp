#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gensym::rules::detail {

enum class Tok : std::uint8_t {
  Ident,
  Number,
  Float,       // rejected by the parser with a dedicated message
  Variable,    // text holds the name without brackets
  String,      // |...|
  DocString,   // "..."
  LParen,
  RParen,
  LBrace,
  RBrace,
  Caret,
  Dot,
  Arrow,       // -->
  Minus,
  Plus,
  Bang,
  Tilde,
  Less,
  Greater,
  LessEq,
  GreaterEq,
  NotEq,       // <>
  Equal,
  DisjOpen,    // <<
  DisjClose,   // >>
  Star,
  Slash,
  Unknown,     // any other character; text holds it
  Unterminated,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t number = 0;
  int line = 1;
  int column = 1;
};

std::string_view describe(Tok t);

/// Tokenizes the whole input up front. Never throws; malformed pieces come
/// back as Unknown / Unterminated tokens for the parser to report.
std::vector<Token> tokenize(std::string_view src);

bool is_ident_start(char c);
bool is_ident_char(char c);

}  // namespace gensym::rules::detail

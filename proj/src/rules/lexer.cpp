#include "lexer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace gensym::rules::detail {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '*';
}

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::Ident: return "symbol";
    case Tok::Number: return "integer";
    case Tok::Float: return "float";
    case Tok::Variable: return "variable";
    case Tok::String: return "|string|";
    case Tok::DocString: return "\"documentation\"";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::Caret: return "'^'";
    case Tok::Dot: return "'.'";
    case Tok::Arrow: return "'-->'";
    case Tok::Minus: return "'-'";
    case Tok::Plus: return "'+'";
    case Tok::Bang: return "'!'";
    case Tok::Tilde: return "'~'";
    case Tok::Less: return "'<'";
    case Tok::Greater: return "'>'";
    case Tok::LessEq: return "'<='";
    case Tok::GreaterEq: return "'>='";
    case Tok::NotEq: return "'<>'";
    case Tok::Equal: return "'='";
    case Tok::DisjOpen: return "'<<'";
    case Tok::DisjClose: return "'>>'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::Unknown: return "unknown character";
    case Tok::Unterminated: return "unterminated literal";
    case Tok::End: return "end of input";
  }
  return "?";
}

namespace {

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(std::move(t));
        return out;
      }
      lex_one(t);
      out.push_back(std::move(t));
    }
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance(std::size_t n = 1) {
    while (n-- > 0 && pos_ < src_.size()) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  // `<name>` where name is an identifier; returns length including brackets or 0.
  std::size_t variable_length() const {
    if (peek() != '<' || !is_ident_start(peek(1))) return 0;
    std::size_t i = 2;
    while (is_ident_char(peek(i))) ++i;
    return peek(i) == '>' ? i + 1 : 0;
  }

  void quoted(Token& t, char close, Tok kind) {
    advance();  // opening delimiter
    std::string text;
    while (pos_ < src_.size() && src_[pos_] != close) {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) {
        advance();
      }
      text.push_back(src_[pos_]);
      advance();
    }
    if (pos_ >= src_.size()) {
      t.kind = Tok::Unterminated;
      t.text = std::string(1, close) + text.substr(0, 20);
      return;
    }
    advance();
    t.kind = kind;
    t.text = std::move(text);
  }

  void number(Token& t) {
    std::size_t start = pos_;
    if (peek() == '-') advance();
    while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    bool is_float = false;
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      is_float = true;
      advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    if (is_float) {
      t.kind = Tok::Float;
      return;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size()) {
      t.kind = Tok::Unknown;  // out-of-range literal
      return;
    }
    t.kind = Tok::Number;
    t.number = v;
  }

  void single(Token& t, Tok kind, std::size_t len) {
    t.kind = kind;
    t.text = std::string(src_.substr(pos_, len));
    advance(len);
  }

  void lex_one(Token& t) {
    char c = peek();
    if (is_ident_start(c)) {
      std::size_t start = pos_;
      while (is_ident_char(peek())) advance();
      t.kind = Tok::Ident;
      t.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      number(t);
      return;
    }
    switch (c) {
      case '(': return single(t, Tok::LParen, 1);
      case ')': return single(t, Tok::RParen, 1);
      case '{': return single(t, Tok::LBrace, 1);
      case '}': return single(t, Tok::RBrace, 1);
      case '^': return single(t, Tok::Caret, 1);
      case '.': return single(t, Tok::Dot, 1);
      case '!': return single(t, Tok::Bang, 1);
      case '~': return single(t, Tok::Tilde, 1);
      case '=': return single(t, Tok::Equal, 1);
      case '*': return single(t, Tok::Star, 1);
      case '/': return single(t, Tok::Slash, 1);
      case '|': return quoted(t, '|', Tok::String);
      case '"': return quoted(t, '"', Tok::DocString);
      case '+': return single(t, Tok::Plus, 1);
      case '-':
        if (peek(1) == '-' && peek(2) == '>') return single(t, Tok::Arrow, 3);
        if (std::isdigit(static_cast<unsigned char>(peek(1)))) return number(t);
        return single(t, Tok::Minus, 1);
      case '<': {
        if (std::size_t n = variable_length()) {
          t.kind = Tok::Variable;
          t.text = std::string(src_.substr(pos_ + 1, n - 2));
          advance(n);
          return;
        }
        if (peek(1) == '<') return single(t, Tok::DisjOpen, 2);
        if (peek(1) == '>') return single(t, Tok::NotEq, 2);
        if (peek(1) == '=') return single(t, Tok::LessEq, 2);
        return single(t, Tok::Less, 1);
      }
      case '>':
        if (peek(1) == '>') return single(t, Tok::DisjClose, 2);
        if (peek(1) == '=') return single(t, Tok::GreaterEq, 2);
        return single(t, Tok::Greater, 1);
      default: {
        // Consume one whole UTF-8 sequence so columns stay sane.
        std::size_t len = 1;
        auto uc = static_cast<unsigned char>(c);
        if (uc >= 0xF0) len = 4;
        else if (uc >= 0xE0) len = 3;
        else if (uc >= 0xC0) len = 2;
        len = std::min(len, src_.size() - pos_);
        return single(t, Tok::Unknown, len);
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view src) { return Lexer(src).run(); }

}  // namespace gensym::rules::detail

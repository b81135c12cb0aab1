#include "gensym/kernel/symbol.hpp"

#include <cctype>
#include <stdexcept>

namespace gensym::kernel {

Symbol SymbolTable::intern(std::string_view text) {
  auto it = index_.find(text);
  if (it != index_.end()) return {Symbol::Kind::String, it->second};
  strings_.emplace_back(text);
  auto id = static_cast<std::int64_t>(strings_.size() - 1);
  index_.emplace(strings_.back(), id);
  return {Symbol::Kind::String, id};
}

Symbol SymbolTable::lookup(std::string_view text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return {};
  return {Symbol::Kind::String, it->second};
}

const std::string& SymbolTable::text(Symbol s) const {
  if (s.kind != Symbol::Kind::String) throw std::logic_error("SymbolTable::text on a non-string symbol");
  return strings_.at(static_cast<std::size_t>(s.value));
}

Symbol SymbolTable::new_identifier(char letter) {
  unsigned char up = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(letter)));
  if (up < 'A' || up > 'Z') up = 'I';
  return Symbol::identifier(static_cast<char>(up), ++counters_[up - 'A']);
}

namespace {

bool plain_symbol(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '*')) return false;
  return true;
}

}  // namespace

std::string SymbolTable::to_string(Symbol s) const {
  switch (s.kind) {
    case Symbol::Kind::None: return "<none>";
    case Symbol::Kind::Identifier: return std::string(1, s.id_letter()) + std::to_string(s.id_number());
    case Symbol::Kind::Integer: return std::to_string(s.value);
    case Symbol::Kind::String: {
      const std::string& t = text(s);
      return plain_symbol(t) ? t : "|" + t + "|";
    }
  }
  return "?";
}

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>

namespace gensym::kernel {

/// Working-memory symbol. Identifiers encode their letter and number directly
/// (so they print without a table); strings are interned per engine.
struct Symbol {
  enum class Kind : std::uint8_t { None, Identifier, String, Integer };
  Kind kind = Kind::None;
  std::int64_t value = 0;

  static Symbol identifier(char letter, std::int64_t number) {
    return {Kind::Identifier, (static_cast<std::int64_t>(static_cast<unsigned char>(letter)) << 48) | number};
  }
  static Symbol integer(std::int64_t v) { return {Kind::Integer, v}; }

  bool is_none() const { return kind == Kind::None; }
  bool is_identifier() const { return kind == Kind::Identifier; }
  bool is_integer() const { return kind == Kind::Integer; }
  char id_letter() const { return static_cast<char>(value >> 48); }
  std::int64_t id_number() const { return value & ((std::int64_t{1} << 48) - 1); }

  friend bool operator==(const Symbol&, const Symbol&) = default;
  friend auto operator<=>(const Symbol&, const Symbol&) = default;
};

struct SymbolHash {
  std::size_t operator()(const Symbol& s) const noexcept {
    return std::hash<std::int64_t>{}(s.value * 31 + static_cast<int>(s.kind));
  }
};

class SymbolTable {
 public:
  Symbol intern(std::string_view text);
  /// Returns a None symbol when `text` was never interned.
  Symbol lookup(std::string_view text) const;
  const std::string& text(Symbol s) const;

  Symbol new_identifier(char letter);

  /// Printable form: `S1`, `fill`, `|two words|`, `42`.
  std::string to_string(Symbol s) const;

 private:
  std::deque<std::string> strings_;
  std::unordered_map<std::string_view, std::int64_t> index_;
  std::int64_t counters_[26] = {};
};

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "gensym/kernel/symbol.hpp"
#include "gensym/rules/ast.hpp"

namespace gensym::kernel {

enum class ImpasseKind : std::uint8_t { Tie, Conflict, NoChange, ConstraintFailure };
std::string_view to_string(ImpasseKind k);

struct CandidatePreference {
  rules::PreferenceSymbol symbol = rules::PreferenceSymbol::Acceptable;
  std::optional<Symbol> referent;  // better / worse / binary indifferent
  friend bool operator==(const CandidatePreference&, const CandidatePreference&) = default;
};

struct OperatorCandidate {
  Symbol operatorId;
  std::vector<CandidatePreference> preferences;
};

/// 64-bit Mersenne twister with a portable bounded draw (the standard
/// distributions are implementation-defined, which would break replay).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

using SelectionResult = std::variant<Symbol, ImpasseKind>;

/// Decide among operator candidates. Candidates are put into identifier
/// order first, so the result does not depend on input order.
SelectionResult select_operator(std::vector<OperatorCandidate> candidates, Rng& rng);

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gensym/kernel/selection.hpp"
#include "gensym/kernel/symbol.hpp"
#include "gensym/kernel/trace.hpp"
#include "gensym/kernel/wm.hpp"
#include "gensym/rules/ast.hpp"

namespace gensym::kernel {

using SeedValue = std::variant<std::int64_t, std::string>;

/// One seed element. `path` is dotted; a segment may carry a group key in
/// brackets (`jug[1].volume`) so that several objects can share a name.
/// Every distinct path prefix becomes one identifier under the top state.
struct SeedWme {
  std::string path;
  SeedValue value;
};

/// Error raised while firing a rule (bad arithmetic, runaway elaboration).
class RuntimeError : public std::runtime_error {
 public:
  RuntimeError(const std::string& message, std::string rule)
      : std::runtime_error(message), rule_(std::move(rule)) {}
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

/// Result of one elaboration or application phase.
struct PhaseResult {
  std::vector<FiredRule> fired;
  std::vector<WmDelta> deltas;
  bool halted = false;
  std::string output;
};

class Engine {
 public:
  using GoalPredicate = std::function<bool(const Engine&)>;
  /// Returning an operator forces its selection; nullopt keeps the normal
  /// decision. Used to replay a fixed path.
  using SelectionOverride =
      std::function<std::optional<Symbol>(const Engine&, const std::vector<OperatorCandidate>&)>;

  explicit Engine(const rules::RuleSet& rules, RunConfig config = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Adds the seed elements under the top state (set semantics).
  void init_state(const std::vector<SeedWme>& seeds);

  /// Runs decision cycles until halt, impasse, error or cutoff.
  DecisionTrace run(const GoalPredicate& goal = {});

  void set_selection_override(SelectionOverride fn);

  // Phase-level access, mainly for tests. These throw RuntimeError.
  PhaseResult elaborate();
  std::vector<OperatorCandidate> candidates() const;
  PhaseResult apply(Symbol op);

  Symbol top_state() const;
  const WorkingMemory& wm() const;
  const SymbolTable& symbols() const;
  /// Interned string symbol, or None when it never appeared.
  Symbol sym(std::string_view text) const;
  std::vector<Symbol> values(Symbol id, std::string_view attr) const;
  std::string to_string(Symbol s) const;
  std::string wme_string(const Wme& w) const;
  /// Every element as "(id ^attr value)", sorted; handy for comparisons.
  std::vector<std::string> dump() const;

  /// Support-soundness check. Empty when every i-supported element is
  /// justified by a live instantiation and counts agree.
  std::vector<std::string> audit() const;

  std::size_t live_instantiations() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: fresh engine, seed, run.
DecisionTrace run(const rules::RuleSet& rules, const std::vector<SeedWme>& seeds,
                  const Engine::GoalPredicate& goal, RunConfig config);

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gensym/kernel/selection.hpp"

namespace gensym::kernel {

enum class Outcome : std::uint8_t { GoalReached, CutoffExceeded, ImpasseHalt, RuntimeError };
std::string_view to_string(Outcome o);

enum class TraceDetail : std::uint8_t { Full, Summary };
std::string_view to_string(TraceDetail d);

struct FiredRule {
  std::string name;
  std::string bindings;  // "<s>=S1 <j>=J2"
};

struct ProposalView {
  std::string operatorId;
  std::string operatorName;  // value of ^name at proposal time, may be empty
  std::vector<std::string> preferences;
};

struct WmDelta {
  bool add = true;
  std::string wme;  // "(J1 ^contents 5)"
};

struct CycleRecord {
  std::int64_t cycleNumber = 0;
  std::vector<FiredRule> firedRules;
  std::vector<ProposalView> proposals;
  std::optional<std::string> selectedId;
  std::optional<std::string> selectedName;
  std::vector<WmDelta> wmDeltas;
  std::optional<ImpasseKind> impasse;
  std::string output;  // text produced by (write ...)
};

/// One cycle as a single trace line (newline-terminated).
std::string to_text(const CycleRecord& c);

struct RunConfig {
  std::int64_t cutoff = 500000;
  std::uint64_t rngSeed = 0;
  TraceDetail traceDetail = TraceDetail::Full;
};

struct DecisionTrace {
  RunConfig config;
  std::vector<CycleRecord> cycles;
  // Summary traces keep the head and tail; this many cycles in between were dropped.
  std::int64_t elidedCycles = 0;
  std::size_t elidedAfter = 0;  // index in `cycles` where the gap sits
  Outcome outcome = Outcome::RuntimeError;
  std::int64_t finalDecisionCycles = 0;
  std::optional<ImpasseKind> impasse;
  std::string error;      // runtime-error message
  std::string errorRule;  // production that raised it, if any
  std::string output;     // concatenated write output

  /// One line per cycle, framed by header and footer lines.
  std::string to_text() const;
  /// Like to_text but keeps only the first `head` and last `tail` recorded
  /// cycles; gaps in cycle numbers are marked.
  std::string to_text(std::size_t head, std::size_t tail) const;
  nlohmann::json to_json() const;
};

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gensym/kernel/engine.hpp"
#include "gensym/rules/ast.hpp"

namespace gensym::wjp {

enum class Bucket : std::uint8_t { Easy, Medium, Hard, Variant };
std::string_view to_string(Bucket b);
std::optional<Bucket> parse_bucket(std::string_view s);
inline constexpr Bucket kAllBuckets[] = {Bucket::Easy, Bucket::Medium, Bucket::Hard, Bucket::Variant};

struct WjpInstance {
  int caseId = 0;
  std::vector<std::int64_t> capacities;
  std::int64_t goal = 0;
  int annotatedMinDC = 0;
  Bucket difficulty = Bucket::Easy;

  /// "(4,9->2)"
  std::string notation() const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  /// Require exactly 100 rows split 25/25/30/20.
  bool strictCounts = true;
};

/// Rows are `caps|goal|mindc|bucket`; blank lines and `#` comments are
/// skipped. Case ids follow row order starting at 1.
std::vector<WjpInstance> parse_dataset(std::string_view text, LoadOptions options = {});
std::vector<WjpInstance> load_dataset(const std::filesystem::path& path, LoadOptions options = {});
std::filesystem::path default_dataset_path();

struct DatasetReport {
  std::vector<int> oracleMismatches;  // case ids whose annotation differs from the oracle
  std::vector<std::string> problems;  // bucket/annotation inconsistencies
  std::map<Bucket, double> oracleMeans;
  std::map<Bucket, double> annotatedMeans;
  double oracleOverall = 0;
  double annotatedOverall = 0;
  bool ok() const { return oracleMismatches.empty() && problems.empty(); }
};
DatasetReport verify_dataset(const std::vector<WjpInstance>& instances);

using JugState = std::vector<std::int64_t>;

struct Move {
  enum class Kind : std::uint8_t { Fill, Empty, Pour };
  Kind kind = Kind::Fill;
  int from = 0;  // jug index (Fill/Empty use `from`)
  int to = 0;    // Pour only
  std::string to_string() const;
  friend bool operator==(const Move&, const Move&) = default;
};

/// Legal moves that change the state, in a fixed order.
std::vector<std::pair<Move, JugState>> successors(const JugState& state, const std::vector<std::int64_t>& capacities);

class UnreachableGoal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Breadth-first search from all-empty jugs; shortest move count to a state
/// holding `goal` in some jug, plus one for the initial state.
int min_dc_oracle(const std::vector<std::int64_t>& capacities, std::int64_t goal);
inline int min_dc_oracle(const WjpInstance& w) { return min_dc_oracle(w.capacities, w.goal); }
std::vector<Move> shortest_path(const std::vector<std::int64_t>& capacities, std::int64_t goal);

/// Plain-language statement of the instance, used as the prompt's problem text.
std::string describe_problem(const WjpInstance& w);

/// CSV with header `case_id,min_dc`.
std::string oracle_csv(const std::vector<WjpInstance>& instances);

// ------------------------------------------------------------ engine coupling

inline constexpr std::string_view kGoalRuleName = "wjp*harness*goal";

struct Encoding {
  std::vector<kernel::SeedWme> seeds;
  rules::RuleSet goalRules;
};

Encoding encode_instance(const WjpInstance& w);
Encoding encode_instance(const std::vector<std::int64_t>& capacities, std::int64_t goal);

/// Current jug contents in capacity order (read back through ^volume).
JugState jug_contents(const kernel::Engine& e, const std::vector<std::int64_t>& capacities);
kernel::Engine::GoalPredicate goal_predicate(std::vector<std::int64_t> capacities, std::int64_t goal);

/// Interpret an operator structure (^name fill/empty/pour ...) as a move.
std::optional<Move> decode_operator(const kernel::Engine& e, kernel::Symbol op,
                                    const std::vector<std::int64_t>& capacities);

enum class Strategy : std::uint8_t { VisitedPruning, PreferenceHierarchy };

std::string_view manual_rules_text();
rules::RuleSet manual_rules();
std::string_view heuristic_rules_text(Strategy s);
rules::RuleSet heuristic_reference_rules(Strategy s);
std::string_view looping_noop_text();
rules::RuleSet looping_noop_rules();

/// Rules plus the instance goal rule; an existing rule with the goal rule's
/// name is replaced.
rules::RuleSet with_goal(const rules::RuleSet& rules, const Encoding& enc);

/// Run `rules` on an instance with the harness goal attached.
kernel::DecisionTrace run_instance(const rules::RuleSet& rules, const WjpInstance& w, kernel::RunConfig config);

}  // namespace gensym::wjp

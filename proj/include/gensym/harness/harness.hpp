#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gensym/loop/loop.hpp"
#include "gensym/wjp/wjp.hpp"

namespace gensym::harness {

enum class Mode : std::uint8_t { Manual, ZeroShot, OneShot, Nl2GenSym };
std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

struct CaseFilter {
  std::optional<wjp::Bucket> bucket;
  std::vector<int> caseIds;  // empty: every case (of the bucket, if set)

  std::vector<wjp::WjpInstance> apply(const std::vector<wjp::WjpInstance>& all) const;
};

struct ExperimentSpec {
  Mode mode = Mode::Manual;
  std::set<loop::Ablation> ablations;
  std::string modelProfile;
  std::uint64_t masterSeed = 0;
  CaseFilter filter;
  std::int64_t cutoff = 500000;
  int runsPerCase = 100;
  /// Proceed when in-scope annotations disagree with the oracle; the oracle
  /// value is used.
  bool trustOracle = false;
  int workers = 1;
  loop::LoopConfig loop;  // nl2gensym only; cutoff, finalRuns and seed come from the fields above

  /// Throws std::invalid_argument on illegal combinations.
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentSpec from_json(const nlohmann::json& j);
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CaseRow {
  int caseId = 0;
  wjp::Bucket bucket = wjp::Bucket::Easy;
  std::string notation;
  int minDecisionCycles = 0;  // oracle
  bool success = false;
  std::string failure;  // empty on success: cutoff, impasse, runtime-error, parse, max-iterations, transport
  int runs = 0;
  int successfulRuns = 0;
  double meanDecisionCycles = 0;  // over successful runs
  std::int64_t minRunDecisionCycles = 0;
  std::int64_t maxRunDecisionCycles = 0;
  int iterations = 0;
};

struct MetricsTuple {
  int cases = 0;
  int successes = 0;
  double successRate = 0;
  double avgDecisionCycles = 0;     // mean over successful cases of their mean
  double avgMinDecisionCycles = 0;  // mean oracle value over all cases
  double ratio = 0;                 // 0 when nothing succeeded
};

struct EvalMetrics : MetricsTuple {
  std::map<wjp::Bucket, MetricsTuple> perBucket;
};

/// Throws std::invalid_argument on an empty row set.
EvalMetrics compute_metrics(const std::vector<CaseRow>& rows);
MetricsTuple compute_tuple(const std::vector<CaseRow>& rows);

struct Fingerprint {
  std::uint64_t masterSeed = 0;
  std::string backend;
  std::string configHash;
};

struct Report {
  ExperimentSpec spec;
  std::vector<CaseRow> rows;
  EvalMetrics metrics;
  Fingerprint environment;
  /// Per-case iteration records (nl2gensym). Kept in the JSON only.
  std::map<int, nlohmann::json> iterationLog;

  /// Recomputes the aggregates and the per-row invariants; throws
  /// ConsistencyError on any disagreement.
  void check_consistency() const;

  nlohmann::json to_json() const;
  static Report from_json(const nlohmann::json& j);
  std::string to_csv() const;
  std::string to_markdown() const;
};

std::vector<CaseRow> rows_from_csv(std::string_view csv);

/// Label used for a method row, e.g. "NL2GenSym w/o critic".
std::string method_label(const ExperimentSpec& spec);
/// Method x bucket table; each cell is "SR / Avg.DC (ratio x)".
std::string markdown_table(const std::vector<Report>& reports);

enum class Format : std::uint8_t { Csv, Json, Markdown };
std::optional<Format> parse_format(std::string_view s);

/// Writes report.csv / report.json / report.md into `dir` after a
/// consistency check. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir,
                                               const std::set<Format>& formats);

// ------------------------------------------------------------------ running

/// Gives each case its own backend handle. Scripted backends are built fresh
/// per case so parallel cases never share a transcript cursor.
using BackendFactory = std::function<std::shared_ptr<loop::LlmBackend>(const wjp::WjpInstance&)>;

struct RunContext {
  std::vector<wjp::WjpInstance> dataset;
  BackendFactory backend;  // required unless mode is manual
  std::string backendName = "none";
  const kb::KnowledgeStore* store = nullptr;
  const kb::EmbeddingBackend* embedder = nullptr;
  kb::CasePool* pool = nullptr;  // nl2gensym; a private pool is used when null
  loop::PromptTemplates templates = loop::PromptTemplates::defaults();
  std::function<void(const CaseRow&)> onCase;  // called from worker threads
};

Report run_experiment(const ExperimentSpec& spec, const RunContext& ctx);

// ------------------------------------------------------------------ config

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `[section]` headers and `key = value` lines. Values are quoted strings,
/// numbers or true/false; `#` starts a comment outside quotes. Keys before
/// any header live in section "".
using ConfigTable = std::map<std::string, std::map<std::string, std::string>>;
ConfigTable parse_config(std::string_view text);
ConfigTable load_config(const std::filesystem::path& path);

struct BackendProfile {
  std::string name;
  loop::HttpChatConfig chat;
  double generatorTemperature = 0.3;
  double criticTemperature = 0.7;
};

/// Reads section `[profile.<name>]`. Unknown keys are errors.
BackendProfile backend_profile(const ConfigTable& config, const std::string& name);

}  // namespace gensym::harness

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gensym/kb/kb.hpp"
#include "gensym/kernel/trace.hpp"
#include "gensym/rules/ast.hpp"
#include "gensym/wjp/wjp.hpp"

namespace gensym::loop {

// ------------------------------------------------------------------ templates

/// Replaces every `{{name}}` with `values[name]`. Unknown names are errors.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& values);

struct PromptTemplates {
  std::string generatorSystem;
  std::string generatorTask;
  std::string criticSystem;
  std::string criticTask;

  /// The templates compiled into the library.
  static PromptTemplates defaults();
  /// Reads generator_system.txt, generator_task.txt, critic_system.txt and
  /// critic_task.txt from `dir`; missing files keep the default.
  static PromptTemplates load(const std::filesystem::path& dir);
};

struct Prompt {
  std::string system;
  std::string user;
};

// Section markers used in every prompt.
inline constexpr std::string_view kTaskMarker = "=== TASK ===";
inline constexpr std::string_view kBasicMarker = "=== BASIC KNOWLEDGE ===";
inline constexpr std::string_view kFunctionalMarker = "=== FUNCTIONAL MODULES ===";
inline constexpr std::string_view kCasesMarker = "=== REFERENCE CASES ===";
inline constexpr std::string_view kSuggestionsMarker = "=== CRITIC SUGGESTIONS ===";
inline constexpr std::string_view kProblemMarker = "=== PROBLEM ===";
inline constexpr std::string_view kRulesMarker = "=== RULES ===";
inline constexpr std::string_view kTraceMarker = "=== EXECUTION TRACE ===";
inline constexpr std::string_view kMetricsMarker = "=== METRICS ===";

struct GeneratorInput {
  std::string problemDescription;
  std::string taskTemplate;
  std::vector<kb::KnowledgeChunk> retrievedContext;
  std::vector<kb::CaseRecord> optimalCases;
  std::optional<std::string> criticSuggestions;
};

/// Evaluation figures shown to the critic.
struct MetricsBlock {
  kb::Evaluation evaluation;
  int minDecisionCycles = 0;
  std::int64_t cutoff = 0;
};

struct CriticInput {
  std::string problemDescription;
  std::string criticTemplate;
  std::string rulesText;  // rendered rules, or the raw response when it did not parse
  std::vector<kb::KnowledgeChunk> retrievedContext;
  std::string executionTrace;  // trace excerpt or the parse error rendering
  std::optional<MetricsBlock> metrics;
};

Prompt build_generator_prompt(const GeneratorInput& in, const PromptTemplates& templates);
Prompt build_critic_prompt(const CriticInput& in, const PromptTemplates& templates);

/// avgDC / minDC.
double dc_ratio(double avgDecisionCycles, double minDecisionCycles);

/// Hex FNV-1a of a prompt, as used in transcript files.
std::string prompt_hash(std::string_view userPrompt);

// ------------------------------------------------------------------ backends

enum class Role : std::uint8_t { Generator, Critic };
std::string_view to_string(Role r);

struct LlmRequest {
  Role role = Role::Generator;
  std::string systemPrompt;
  std::string userPrompt;
  double temperature = 0.7;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string name() const = 0;
  virtual int concurrency_limit() const { return 1; }
  /// Throws TransportError when no response could be obtained.
  virtual std::string complete(const LlmRequest& request) = 0;
};

/// Replays responses from a transcript. Each role has its own queue. An entry
/// marked `requiresSuggestions` is only served when the generator prompt
/// carries a critic suggestions block; otherwise the previous generator
/// response is repeated and the entry stays queued. When a queue runs out the
/// last response of that role is repeated.
class ScriptedBackend : public LlmBackend {
 public:
  struct Entry {
    Role role = Role::Generator;
    std::string response;
    std::optional<std::string> expectPromptHash;
    bool requiresSuggestions = false;
  };

  ScriptedBackend(std::string name, std::vector<Entry> entries);
  /// JSON transcript: {"name": .., "entries": [{"role", "response" or
  /// "responseFile", "expectPromptHash"?, "requiresSuggestions"?}]}.
  /// responseFile paths are relative to the transcript.
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  std::string name() const override { return name_; }
  int concurrency_limit() const override { return 4; }
  std::string complete(const LlmRequest& request) override;

  std::vector<LlmRequest> received() const;

 private:
  std::string name_;
  std::map<Role, std::vector<Entry>> queues_;
  std::map<Role, std::size_t> cursor_;
  std::map<Role, std::string> last_;
  std::vector<LlmRequest> received_;
  mutable std::mutex mu_;
};

struct HttpChatConfig {
  std::string baseUrl = "http://localhost:8000/v1";  // POST <baseUrl>/chat/completions
  std::string model;
  std::string apiKeyEnv = "GENSYM_API_KEY";
  int concurrencyLimit = 4;
  int maxAttempts = 5;
  std::chrono::milliseconds initialBackoff{500};
  int timeoutSeconds = 120;
};

/// OpenAI-style chat completion client. Connection failures, 429 and 5xx are
/// retried with exponential backoff; other statuses fail at once.
class HttpChatBackend : public LlmBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);
  ~HttpChatBackend() override;
  std::string name() const override { return "http:" + config_.model; }
  int concurrency_limit() const override { return config_.concurrencyLimit; }
  std::string complete(const LlmRequest& request) override;
  int attempts() const { return attempts_; }

 private:
  struct Gate;
  HttpChatConfig config_;
  std::string apiKey_;
  std::unique_ptr<Gate> gate_;
  std::atomic<int> attempts_{0};
};

// ------------------------------------------------------------------ loop

enum class Ablation : std::uint8_t { NoBasicKb, NoCaseKb, NoCritic };
std::string_view to_string(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view s);

struct LoopConfig {
  int maxIterations = 20;
  int inLoopRuns = 10;
  int finalRuns = 100;
  double generatorTemperature = 0.3;
  double criticTemperature = 0.7;
  std::set<Ablation> ablations;
  std::int64_t cutoff = 500000;
  std::uint64_t masterSeed = 0;
  int basicK = 5;
  int functionalK = 10;
  int exemplars = 1;
  /// Stop once the pool best succeeds on every run and averages at most this
  /// multiple of the minimum.
  double stopRatio = 1.2;
  std::size_t traceHead = 10;
  std::size_t traceTail = 20;
};

/// Counter-based seed split: the same (master, caseId, stream, run) always
/// gives the same seed, independent of any other case.
std::uint64_t derive_seed(std::uint64_t master, int caseId, std::uint64_t stream, int run);

struct RunBatch {
  kb::Evaluation evaluation;
  std::vector<std::int64_t> decisionCycles;  // per run
  std::vector<kernel::Outcome> outcomes;
  std::optional<kernel::DecisionTrace> sampleTrace;  // first failing run, else the first run
};

/// Runs `rules` (plus the instance goal rule) `runs` times. Engine errors
/// count as failed runs. Average cycles are over successful runs (0 if none).
RunBatch evaluate_rules(const rules::RuleSet& rules, const wjp::WjpInstance& w, int runs, std::uint64_t masterSeed,
                        std::uint64_t stream, std::int64_t cutoff);

struct IterationRecord {
  int iteration = 0;  // starts at 1
  std::string response;
  std::optional<rules::RuleSet> generatedRules;
  std::optional<std::string> parseError;
  std::optional<kb::Evaluation> evaluation;
  std::string traceExcerpt;
  std::optional<std::string> suggestions;
  bool poolImproved = false;
  kb::Evaluation poolBestAfter;
  std::chrono::milliseconds wallClock{0};
};

struct LoopContext {
  const kb::KnowledgeStore* store = nullptr;  // null: no retrieval
  const kb::EmbeddingBackend* embedder = nullptr;
  kb::CasePool* pool = nullptr;
  LlmBackend* backend = nullptr;
  PromptTemplates templates = PromptTemplates::defaults();
};

struct LoopResult {
  std::vector<IterationRecord> iterations;
  bool success = false;  // some iteration reached in-loop success rate 1.0
  bool converged = false;  // the stop rule fired
  std::optional<std::string> abortReason;
  std::optional<kb::CaseRecord> finalCase;  // pool best after the loop
  std::optional<RunBatch> finalRuns;        // finalCase re-run finalRuns times
  int completions = 0;
  std::vector<std::string> generatorPrompts;
  std::vector<std::string> criticPrompts;
};

/// Evaluates `initial` and stores it as record 0 when the pool has nothing
/// for this case yet. Returns the initial record either way.
kb::CaseRecord ensure_initial_case(kb::CasePool& pool, const wjp::WjpInstance& w, const rules::RuleSet& initial,
                                   const LoopConfig& config);

LoopResult run_loop(const wjp::WjpInstance& w, const LoopContext& ctx, const LoopConfig& config);

nlohmann::json to_json(const IterationRecord& r);

}  // namespace gensym::loop

#include "gensym/loop/loop.hpp"

#include "gensym/rules/extract.hpp"
#include "gensym/rules/parser.hpp"
#include "gensym/rules/render.hpp"

namespace gensym::loop {

using nlohmann::json;

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::NoBasicKb: return "no-basic-kb";
    case Ablation::NoCaseKb: return "no-case-kb";
    case Ablation::NoCritic: return "no-critic";
  }
  return "?";
}

std::optional<Ablation> parse_ablation(std::string_view s) {
  for (auto a : {Ablation::NoBasicKb, Ablation::NoCaseKb, Ablation::NoCritic})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, int caseId, std::uint64_t stream, int run) {
  std::uint64_t h = mix(master);
  h = mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(caseId)));
  h = mix(h ^ stream);
  return mix(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(run)));
}

RunBatch evaluate_rules(const rules::RuleSet& rules, const wjp::WjpInstance& w, int runs, std::uint64_t masterSeed,
                        std::uint64_t stream, std::int64_t cutoff) {
  if (runs <= 0) throw std::invalid_argument("evaluation needs at least one run");
  RunBatch b;
  std::int64_t sum = 0;
  int ok = 0;
  std::optional<kernel::DecisionTrace> firstFailure;
  for (int r = 0; r < runs; ++r) {
    kernel::RunConfig rc{cutoff, derive_seed(masterSeed, w.caseId, stream, r), kernel::TraceDetail::Summary};
    kernel::DecisionTrace t;
    try {
      t = wjp::run_instance(rules, w, rc);
    } catch (const std::exception& e) {
      t = kernel::DecisionTrace{};
      t.config = rc;
      t.outcome = kernel::Outcome::RuntimeError;
      t.error = e.what();
    }
    bool success = t.outcome == kernel::Outcome::GoalReached;
    const std::int64_t dc = t.finalDecisionCycles;
    b.decisionCycles.push_back(dc);
    b.outcomes.push_back(t.outcome);
    if (success) {
      sum += dc;
      ++ok;
    } else if (!firstFailure) {
      firstFailure = t;
    }
    if (r == 0) b.sampleTrace = std::move(t);
  }
  if (firstFailure) b.sampleTrace = std::move(firstFailure);
  b.evaluation.runs = runs;
  b.evaluation.successRate = static_cast<double>(ok) / runs;
  b.evaluation.avgDecisionCycles = ok ? static_cast<double>(sum) / ok : 0.0;
  return b;
}

kb::CaseRecord ensure_initial_case(kb::CasePool& pool, const wjp::WjpInstance& w, const rules::RuleSet& initial,
                                   const LoopConfig& config) {
  if (pool.contains(w.caseId)) {
    for (auto& r : pool.records(w.caseId))
      if (r.provenance.initial) return r;
  }
  kb::CaseRecord rec;
  rec.index = 0;
  rec.rules = initial;
  rec.evaluation = evaluate_rules(initial, w, config.inLoopRuns, config.masterSeed, 0, config.cutoff).evaluation;
  rec.provenance = {true, 0, ""};
  // A pool that already holds generated records for this case but lost R0 to
  // eviction keeps its contents; the record is only returned.
  if (!pool.contains(w.caseId)) pool.update(w.caseId, rec);
  return rec;
}

namespace {

std::vector<kb::KnowledgeChunk> retrieve_context(const std::string& query, const LoopContext& ctx,
                                                 const LoopConfig& config) {
  std::vector<kb::KnowledgeChunk> out;
  if (config.ablations.count(Ablation::NoBasicKb) || !ctx.store || !ctx.embedder) return out;
  for (auto [section, k] : {std::pair{kb::Section::Basic, config.basicK},
                            std::pair{kb::Section::Functional, config.functionalK}}) {
    if (k <= 0) continue;
    for (const auto& hit : ctx.store->retrieve(query, *ctx.embedder, section, static_cast<std::size_t>(k)))
      out.push_back(*hit.chunk);
  }
  return out;
}

std::string rules_text(const rules::RuleSet& rs) { return rs.sourceText.empty() ? rules::render(rs) : rs.sourceText; }

}  // namespace

LoopResult run_loop(const wjp::WjpInstance& w, const LoopContext& ctx, const LoopConfig& config) {
  if (!ctx.pool || !ctx.backend) throw std::invalid_argument("loop needs a case pool and a backend");
  if (!ctx.pool->contains(w.caseId))
    throw std::invalid_argument("case pool has no initial record for case " + std::to_string(w.caseId));

  kb::CasePool& pool = *ctx.pool;
  const int minDc = wjp::min_dc_oracle(w);
  const std::string problem = wjp::describe_problem(w);
  const bool noCritic = config.ablations.count(Ablation::NoCritic) > 0;
  const bool noCaseKb = config.ablations.count(Ablation::NoCaseKb) > 0;

  kb::CaseRecord initial = pool.best(w.caseId);
  for (auto& r : pool.records(w.caseId))
    if (r.provenance.initial) initial = r;

  const std::string generatorTask = render_template(
      ctx.templates.generatorTask,
      {{"cutoff", std::to_string(config.cutoff)}, {"in_loop_runs", std::to_string(config.inLoopRuns)}});
  const std::string criticTask = render_template(
      ctx.templates.criticTask, {{"trace_window", std::to_string(config.traceHead + config.traceTail)}});

  LoopResult result;
  std::optional<std::string> suggestions;

  for (int i = 1; i <= config.maxIterations; ++i) {
    const auto started = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = i;

    std::string query = problem;
    if (suggestions) query += "\n" + *suggestions;
    GeneratorInput gin;
    gin.problemDescription = problem;
    gin.taskTemplate = generatorTask;
    gin.retrievedContext = retrieve_context(query, ctx, config);
    if (noCaseKb) {
      gin.optimalCases = {initial};
    } else {
      auto records = pool.records(w.caseId);
      if (records.size() > static_cast<std::size_t>(std::max(0, config.exemplars)))
        records.resize(static_cast<std::size_t>(std::max(0, config.exemplars)));
      gin.optimalCases = std::move(records);
    }
    gin.criticSuggestions = suggestions;
    Prompt gp = build_generator_prompt(gin, ctx.templates);
    result.generatorPrompts.push_back(gp.user);

    try {
      rec.response = ctx.backend->complete({Role::Generator, gp.system, gp.user, config.generatorTemperature});
      ++result.completions;
    } catch (const TransportError& e) {
      result.abortReason = std::string("generator: ") + e.what();
      break;
    }

    std::optional<MetricsBlock> metrics;
    try {
      rec.generatedRules = rules::extract_productions(rec.response);
    } catch (const rules::ParseError& e) {
      rec.parseError = e.describe();
    } catch (const std::exception& e) {
      rec.parseError = e.what();
    }

    if (rec.generatedRules) {
      RunBatch batch = evaluate_rules(*rec.generatedRules, w, config.inLoopRuns, config.masterSeed,
                                      static_cast<std::uint64_t>(i), config.cutoff);
      rec.evaluation = batch.evaluation;
      if (batch.sampleTrace) rec.traceExcerpt = batch.sampleTrace->to_text(config.traceHead, config.traceTail);
      if (batch.evaluation.successRate >= 1.0) result.success = true;
      kb::CaseRecord cand;
      cand.index = pool.next_index(w.caseId);
      cand.rules = *rec.generatedRules;
      cand.evaluation = batch.evaluation;
      cand.provenance = {false, i, ctx.backend->name()};
      rec.poolImproved = pool.update(w.caseId, std::move(cand));
      metrics = MetricsBlock{batch.evaluation, minDc, config.cutoff};
    } else {
      rec.traceExcerpt = "not executed\nparse error: " + *rec.parseError;
    }

    const kb::CaseRecord best = pool.best(w.caseId);
    rec.poolBestAfter = best.evaluation;
    const bool stop =
        best.evaluation.successRate >= 1.0 && best.evaluation.avgDecisionCycles <= config.stopRatio * minDc;

    if (!stop && !noCritic && i < config.maxIterations) {
      CriticInput cin;
      cin.problemDescription = problem;
      cin.criticTemplate = criticTask;
      cin.rulesText = rec.generatedRules ? rules_text(*rec.generatedRules) : rec.response;
      cin.retrievedContext = gin.retrievedContext;
      cin.executionTrace = rec.traceExcerpt;
      cin.metrics = metrics;
      Prompt cp = build_critic_prompt(cin, ctx.templates);
      result.criticPrompts.push_back(cp.user);
      try {
        rec.suggestions = ctx.backend->complete({Role::Critic, cp.system, cp.user, config.criticTemperature});
        ++result.completions;
      } catch (const TransportError& e) {
        result.abortReason = std::string("critic: ") + e.what();
      }
      suggestions = rec.suggestions;
    }

    rec.wallClock =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    result.iterations.push_back(std::move(rec));
    if (stop) {
      result.converged = true;
      break;
    }
    if (result.abortReason) break;
  }

  result.finalCase = pool.best(w.caseId);
  if (config.finalRuns > 0)
    result.finalRuns = evaluate_rules(result.finalCase->rules, w, config.finalRuns, config.masterSeed, 1000000,
                                      config.cutoff);
  return result;
}

json to_json(const IterationRecord& r) {
  json j = json::object();
  j["iteration"] = r.iteration;
  j["response"] = r.response;
  j["parsed"] = r.generatedRules.has_value();
  if (r.generatedRules) j["rules"] = rules_text(*r.generatedRules);
  if (r.parseError) j["parseError"] = *r.parseError;
  if (r.evaluation)
    j["evaluation"] = json{{"successRate", r.evaluation->successRate},
                           {"avgDecisionCycles", r.evaluation->avgDecisionCycles},
                           {"runs", r.evaluation->runs}};
  j["traceExcerpt"] = r.traceExcerpt;
  if (r.suggestions) j["suggestions"] = *r.suggestions;
  j["poolImproved"] = r.poolImproved;
  j["poolBestAfter"] = json{{"successRate", r.poolBestAfter.successRate},
                            {"avgDecisionCycles", r.poolBestAfter.avgDecisionCycles},
                            {"runs", r.poolBestAfter.runs}};
  j["wallClockMs"] = r.wallClock.count();
  return j;
}

}  // namespace gensym::loop

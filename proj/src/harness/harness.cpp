#include "gensym/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "gensym/rules/extract.hpp"

namespace gensym::harness {

using nlohmann::json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Manual: return "manual";
    case Mode::ZeroShot: return "zero-shot";
    case Mode::OneShot: return "one-shot";
    case Mode::Nl2GenSym: return "nl2gensym";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::Manual, Mode::ZeroShot, Mode::OneShot, Mode::Nl2GenSym})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::vector<wjp::WjpInstance> CaseFilter::apply(const std::vector<wjp::WjpInstance>& all) const {
  for (int id : caseIds) {
    if (std::none_of(all.begin(), all.end(), [&](const auto& w) { return w.caseId == id; }))
      throw std::invalid_argument("no case with id " + std::to_string(id));
  }
  std::vector<wjp::WjpInstance> out;
  for (const auto& w : all) {
    if (bucket && w.difficulty != *bucket) continue;
    if (!caseIds.empty() && std::find(caseIds.begin(), caseIds.end(), w.caseId) == caseIds.end()) continue;
    out.push_back(w);
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (!ablations.empty() && mode != Mode::Nl2GenSym)
    throw std::invalid_argument("ablations only apply to mode nl2gensym");
  if (runsPerCase <= 0) throw std::invalid_argument("runs per case must be positive");
  if (cutoff <= 0) throw std::invalid_argument("cutoff must be positive");
  if (workers <= 0) throw std::invalid_argument("worker count must be positive");
  if (mode == Mode::Nl2GenSym && loop.maxIterations <= 0)
    throw std::invalid_argument("max iterations must be positive");
}

json ExperimentSpec::to_json() const {
  json abl = json::array();
  for (auto a : ablations) abl.push_back(std::string(loop::to_string(a)));
  json filt = json::object();
  if (filter.bucket) filt["bucket"] = std::string(wjp::to_string(*filter.bucket));
  filt["caseIds"] = filter.caseIds;
  return json{{"mode", std::string(to_string(mode))},
              {"ablations", abl},
              {"modelProfile", modelProfile},
              {"masterSeed", masterSeed},
              {"filter", filt},
              {"cutoff", cutoff},
              {"runsPerCase", runsPerCase},
              {"trustOracle", trustOracle},
              {"workers", workers},
              {"loop",
               {{"maxIterations", loop.maxIterations},
                {"inLoopRuns", loop.inLoopRuns},
                {"generatorTemperature", loop.generatorTemperature},
                {"criticTemperature", loop.criticTemperature},
                {"basicK", loop.basicK},
                {"functionalK", loop.functionalK},
                {"exemplars", loop.exemplars},
                {"stopRatio", loop.stopRatio}}}};
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  ExperimentSpec s;
  auto mode = parse_mode(j.at("mode").get<std::string>());
  if (!mode) throw std::invalid_argument("unknown mode " + j.at("mode").dump());
  s.mode = *mode;
  for (const auto& a : j.at("ablations")) {
    auto ab = loop::parse_ablation(a.get<std::string>());
    if (!ab) throw std::invalid_argument("unknown ablation " + a.dump());
    s.ablations.insert(*ab);
  }
  s.modelProfile = j.value("modelProfile", "");
  s.masterSeed = j.at("masterSeed").get<std::uint64_t>();
  const auto& f = j.at("filter");
  if (f.contains("bucket")) s.filter.bucket = wjp::parse_bucket(f.at("bucket").get<std::string>());
  s.filter.caseIds = f.at("caseIds").get<std::vector<int>>();
  s.cutoff = j.at("cutoff").get<std::int64_t>();
  s.runsPerCase = j.at("runsPerCase").get<int>();
  s.trustOracle = j.value("trustOracle", false);
  s.workers = j.value("workers", 1);
  if (j.contains("loop")) {
    const auto& l = j.at("loop");
    s.loop.maxIterations = l.value("maxIterations", s.loop.maxIterations);
    s.loop.inLoopRuns = l.value("inLoopRuns", s.loop.inLoopRuns);
    s.loop.generatorTemperature = l.value("generatorTemperature", s.loop.generatorTemperature);
    s.loop.criticTemperature = l.value("criticTemperature", s.loop.criticTemperature);
    s.loop.basicK = l.value("basicK", s.loop.basicK);
    s.loop.functionalK = l.value("functionalK", s.loop.functionalK);
    s.loop.exemplars = l.value("exemplars", s.loop.exemplars);
    s.loop.stopRatio = l.value("stopRatio", s.loop.stopRatio);
  }
  return s;
}

// ------------------------------------------------------------------ metrics

MetricsTuple compute_tuple(const std::vector<CaseRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("metrics need at least one case row");
  MetricsTuple t;
  t.cases = static_cast<int>(rows.size());
  double dcSum = 0;
  double minSum = 0;
  for (const auto& r : rows) {
    minSum += r.minDecisionCycles;
    if (r.success) {
      ++t.successes;
      dcSum += r.meanDecisionCycles;
    }
  }
  t.successRate = static_cast<double>(t.successes) / t.cases;
  t.avgMinDecisionCycles = minSum / t.cases;
  t.avgDecisionCycles = t.successes ? dcSum / t.successes : 0.0;
  t.ratio = t.successes && t.avgMinDecisionCycles > 0 ? t.avgDecisionCycles / t.avgMinDecisionCycles : 0.0;
  return t;
}

EvalMetrics compute_metrics(const std::vector<CaseRow>& rows) {
  EvalMetrics m;
  static_cast<MetricsTuple&>(m) = compute_tuple(rows);
  for (auto b : wjp::kAllBuckets) {
    std::vector<CaseRow> sub;
    for (const auto& r : rows)
      if (r.bucket == b) sub.push_back(r);
    if (!sub.empty()) m.perBucket[b] = compute_tuple(sub);
  }
  return m;
}

// ------------------------------------------------------------------ running

namespace {

std::string failure_name(kernel::Outcome o) {
  switch (o) {
    case kernel::Outcome::CutoffExceeded: return "cutoff";
    case kernel::Outcome::ImpasseHalt: return "impasse";
    case kernel::Outcome::RuntimeError: return "runtime-error";
    case kernel::Outcome::GoalReached: break;
  }
  return "";
}

constexpr std::uint64_t kFinalStream = 1000000;

void fill_from_batch(CaseRow& row, const loop::RunBatch& b) {
  row.runs = static_cast<int>(b.outcomes.size());
  row.successfulRuns = 0;
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < b.outcomes.size(); ++i) {
    if (b.outcomes[i] == kernel::Outcome::GoalReached) {
      ++row.successfulRuns;
      sum += b.decisionCycles[i];
    } else if (row.failure.empty()) {
      row.failure = failure_name(b.outcomes[i]);
    }
  }
  row.meanDecisionCycles = row.successfulRuns ? static_cast<double>(sum) / row.successfulRuns : 0.0;
  if (!b.decisionCycles.empty()) {
    auto [lo, hi] = std::minmax_element(b.decisionCycles.begin(), b.decisionCycles.end());
    row.minRunDecisionCycles = *lo;
    row.maxRunDecisionCycles = *hi;
  }
  row.success = row.runs > 0 && row.successfulRuns == row.runs;
  if (row.success) row.failure.clear();
}

loop::LoopConfig loop_config(const ExperimentSpec& spec) {
  loop::LoopConfig c = spec.loop;
  c.cutoff = spec.cutoff;
  c.finalRuns = spec.runsPerCase;
  c.masterSeed = spec.masterSeed;
  c.ablations = spec.ablations;
  return c;
}

CaseRow run_single_shot(const ExperimentSpec& spec, const RunContext& ctx, const wjp::WjpInstance& w,
                        kb::CasePool& pool, CaseRow row) {
  auto backend = ctx.backend(w);
  const auto cfg = loop_config(spec);
  loop::GeneratorInput in;
  in.problemDescription = wjp::describe_problem(w);
  in.taskTemplate = loop::render_template(
      ctx.templates.generatorTask,
      {{"cutoff", std::to_string(spec.cutoff)}, {"in_loop_runs", std::to_string(spec.runsPerCase)}});
  if (spec.mode == Mode::OneShot) in.optimalCases = {loop::ensure_initial_case(pool, w, wjp::manual_rules(), cfg)};
  auto prompt = loop::build_generator_prompt(in, ctx.templates);
  std::string response;
  try {
    response = backend->complete({loop::Role::Generator, prompt.system, prompt.user, cfg.generatorTemperature});
  } catch (const loop::TransportError&) {
    row.failure = "transport";
    return row;
  }
  row.iterations = 1;
  rules::RuleSet rs;
  try {
    rs = rules::extract_productions(response);
  } catch (const std::exception&) {
    row.failure = "parse";
    return row;
  }
  fill_from_batch(row, loop::evaluate_rules(rs, w, spec.runsPerCase, spec.masterSeed, kFinalStream, spec.cutoff));
  return row;
}

}  // namespace

Report run_experiment(const ExperimentSpec& spec, const RunContext& ctx) {
  spec.validate();
  const auto cases = spec.filter.apply(ctx.dataset);
  if (cases.empty()) throw std::invalid_argument("the case filter selects no cases");
  if (spec.mode != Mode::Manual && !ctx.backend)
    throw std::invalid_argument("mode " + std::string(to_string(spec.mode)) + " needs a model backend");

  // Integrity first: nothing runs, and no model is called, on a bad dataset.
  std::vector<int> oracle(cases.size());
  std::vector<int> mismatched;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    oracle[i] = wjp::min_dc_oracle(cases[i]);
    if (oracle[i] != cases[i].annotatedMinDC) mismatched.push_back(cases[i].caseId);
  }
  if (!mismatched.empty() && !spec.trustOracle) {
    std::ostringstream os;
    os << "annotated minimum decision cycles disagree with the oracle for case";
    for (int id : mismatched) os << " " << id;
    os << "; rerun with trust-oracle to use the oracle values";
    throw IntegrityError(os.str());
  }

  kb::CasePool privatePool;
  kb::CasePool& pool = ctx.pool ? *ctx.pool : privatePool;

  Report report;
  report.spec = spec;
  report.rows.resize(cases.size());
  std::mutex logMu;

  auto run_case = [&](std::size_t i) {
    const auto& w = cases[i];
    CaseRow row;
    row.caseId = w.caseId;
    row.bucket = w.difficulty;
    row.notation = w.notation();
    row.minDecisionCycles = oracle[i];
    switch (spec.mode) {
      case Mode::Manual:
        fill_from_batch(row, loop::evaluate_rules(wjp::manual_rules(), w, spec.runsPerCase, spec.masterSeed,
                                                  kFinalStream, spec.cutoff));
        break;
      case Mode::ZeroShot:
      case Mode::OneShot:
        row = run_single_shot(spec, ctx, w, pool, row);
        break;
      case Mode::Nl2GenSym: {
        auto backend = ctx.backend(w);
        const auto cfg = loop_config(spec);
        loop::ensure_initial_case(pool, w, wjp::manual_rules(), cfg);
        loop::LoopContext lc{ctx.store, ctx.embedder, &pool, backend.get(), ctx.templates};
        auto res = loop::run_loop(w, lc, cfg);
        row.iterations = static_cast<int>(res.iterations.size());
        if (res.finalRuns) fill_from_batch(row, *res.finalRuns);
        if (res.abortReason) {
          row.success = false;
          row.failure = "transport";
        } else if (!res.success) {
          row.success = false;
          row.failure = "max-iterations";
        }
        json log = json::array();
        for (const auto& it : res.iterations) log.push_back(loop::to_json(it));
        std::scoped_lock lock(logMu);
        report.iterationLog[w.caseId] = std::move(log);
        break;
      }
    }
    if (ctx.onCase) ctx.onCase(row);
    report.rows[i] = std::move(row);
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(spec.workers), cases.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failMu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cases.size(); i = next++) {
      try {
        run_case(i);
      } catch (...) {
        std::scoped_lock lock(failMu);
        if (!failure) failure = std::current_exception();
        next = cases.size();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t t = 0; t < workers; ++t) pool_threads.emplace_back(worker);
    for (auto& t : pool_threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  report.metrics = compute_metrics(report.rows);
  report.environment = {spec.masterSeed, ctx.backendName, loop::prompt_hash(spec.to_json().dump())};
  report.check_consistency();
  return report;
}

}  // namespace gensym::harness

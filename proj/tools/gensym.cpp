#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gensym/harness/harness.hpp"
#include "gensym/rules/parser.hpp"
#include "gensym/rules/render.hpp"

using namespace gensym;

namespace {

const std::filesystem::path kDataDir = GENSYM_DATA_DIR;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ------------------------------------------------------------------ verify-dataset

struct VerifyArgs {
  std::string dataset;
  std::string oracleCsv;
};

int cmd_verify(const VerifyArgs& a) {
  auto instances = wjp::load_dataset(a.dataset.empty() ? wjp::default_dataset_path() : std::filesystem::path(a.dataset));
  auto r = wjp::verify_dataset(instances);
  std::size_t matched = instances.size() - r.oracleMismatches.size();
  std::cout << "cases: " << instances.size() << "  oracle matches: " << matched << "/" << instances.size() << "\n";
  for (int id : r.oracleMismatches) {
    const auto& w = instances[static_cast<std::size_t>(id - 1)];
    std::cout << "MISMATCH case " << id << " " << w.notation() << ": annotated " << w.annotatedMinDC << ", oracle "
              << wjp::min_dc_oracle(w) << "\n";
  }
  for (const auto& p : r.problems) std::cout << "PROBLEM " << p << "\n";
  std::cout << "bucket     oracle  annotated\n";
  for (auto b : wjp::kAllBuckets) {
    std::printf("%-9s %7s %10s\n", std::string(wjp::to_string(b)).c_str(), fixed(r.oracleMeans[b]).c_str(),
                fixed(r.annotatedMeans[b]).c_str());
  }
  std::printf("%-9s %7s %10s\n", "overall", fixed(r.oracleOverall).c_str(), fixed(r.annotatedOverall).c_str());
  if (!a.oracleCsv.empty()) {
    std::ofstream out(a.oracleCsv, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.oracleCsv);
    out << wjp::oracle_csv(instances);
  }
  std::cout << (r.ok() ? "PASS" : "FAIL") << "\n";
  return r.ok() ? 0 : 1;
}

// ------------------------------------------------------------------ run

struct RunArgs {
  std::string mode = "manual";
  std::vector<std::string> ablate;
  std::string bucket;
  std::vector<int> cases;
  std::uint64_t seed = 0;
  std::int64_t cutoff = 500000;
  int runs = 100;
  std::string backend = "none";
  std::string transcript;
  std::string config;
  std::string out = "report";
  std::vector<std::string> formats{"csv", "json", "markdown"};
  int workers = 1;
  bool trustOracle = false;
  int maxIterations = 20;
  int inLoopRuns = 10;
  std::string pool;
  std::string kbIndex;
  std::string dataset;
  std::string prompts;
};

int cmd_run(const RunArgs& a) {
  harness::ExperimentSpec spec;
  auto mode = harness::parse_mode(a.mode);
  if (!mode) throw CLI::ValidationError("--mode", "unknown mode " + a.mode);
  spec.mode = *mode;
  for (const auto& s : a.ablate) {
    auto ab = loop::parse_ablation(s);
    if (!ab) throw CLI::ValidationError("--ablate", "unknown ablation " + s);
    spec.ablations.insert(*ab);
  }
  if (!a.bucket.empty()) {
    spec.filter.bucket = wjp::parse_bucket(a.bucket);
    if (!spec.filter.bucket) throw CLI::ValidationError("--bucket", "unknown bucket " + a.bucket);
  }
  spec.filter.caseIds = a.cases;
  spec.masterSeed = a.seed;
  spec.cutoff = a.cutoff;
  spec.runsPerCase = a.runs;
  spec.workers = a.workers;
  spec.trustOracle = a.trustOracle;
  spec.loop.maxIterations = a.maxIterations;
  spec.loop.inLoopRuns = a.inLoopRuns;

  std::set<harness::Format> formats;
  for (const auto& f : a.formats) {
    auto fmt = harness::parse_format(f);
    if (!fmt) throw CLI::ValidationError("--format", "unknown format " + f);
    formats.insert(*fmt);
  }

  harness::RunContext ctx;
  ctx.dataset = wjp::load_dataset(a.dataset.empty() ? wjp::default_dataset_path() : std::filesystem::path(a.dataset));
  if (!a.prompts.empty()) ctx.templates = loop::PromptTemplates::load(a.prompts);

  if (a.backend == "scripted") {
    if (a.transcript.empty()) throw CLI::ValidationError("--transcript", "the scripted backend needs a transcript");
    std::filesystem::path transcript = a.transcript;
    loop::ScriptedBackend::from_file(transcript);  // fail early on a bad file
    ctx.backend = [transcript](const wjp::WjpInstance&) -> std::shared_ptr<loop::LlmBackend> {
      return std::shared_ptr<loop::LlmBackend>(loop::ScriptedBackend::from_file(transcript));
    };
    ctx.backendName = "scripted:" + transcript.filename().string();
  } else if (a.backend != "none") {
    auto cfgPath = a.config.empty() ? kDataDir / "backends.toml" : std::filesystem::path(a.config);
    auto profile = harness::backend_profile(harness::load_config(cfgPath), a.backend);
    spec.modelProfile = profile.name;
    spec.loop.generatorTemperature = profile.generatorTemperature;
    spec.loop.criticTemperature = profile.criticTemperature;
    auto shared = std::make_shared<loop::HttpChatBackend>(profile.chat);
    ctx.backend = [shared](const wjp::WjpInstance&) -> std::shared_ptr<loop::LlmBackend> { return shared; };
    ctx.backendName = shared->name();
  }

  kb::LexicalEmbedding embedder;
  std::optional<kb::KnowledgeStore> store;
  if (spec.mode == harness::Mode::Nl2GenSym && !spec.ablations.count(loop::Ablation::NoBasicKb)) {
    store = a.kbIndex.empty() ? kb::KnowledgeStore::ingest(kDataDir / "kb", embedder)
                              : kb::KnowledgeStore::load(a.kbIndex);
    ctx.store = &*store;
    ctx.embedder = &embedder;
  }

  std::optional<kb::CasePool> pool;
  if (!a.pool.empty()) {
    pool = std::filesystem::exists(std::filesystem::path(a.pool) / "pool.json") ? kb::CasePool::load(a.pool)
                                                                                 : kb::CasePool();
    ctx.pool = &*pool;
  }

  ctx.onCase = [](const harness::CaseRow& r) {
    static std::mutex mu;
    std::scoped_lock lock(mu);
    std::cerr << "case " << r.caseId << " " << r.notation << ": " << (r.success ? "success" : "failure ") << r.failure
              << "  mean DC " << fixed(r.meanDecisionCycles) << " (min " << r.minDecisionCycles << ")\n";
  };

  auto report = harness::run_experiment(spec, ctx);
  auto files = harness::emit_report(report, a.out, formats);
  if (pool) pool->save(a.pool);

  const auto& m = report.metrics;
  std::cout << harness::method_label(spec) << ": SR " << fixed(100 * m.successRate) << "%  Avg.DC "
            << fixed(m.avgDecisionCycles) << "  Avg.Min.DC " << fixed(m.avgMinDecisionCycles) << "  ratio "
            << fixed(m.ratio) << "x\n";
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------ ingest-kb

struct IngestArgs {
  std::string kbDir;
  std::string out = "kb_index.json";
  int chunkWords = 512;
  int dimension = 1024;
  std::string embedUrl;
  std::string embedModel;
  std::string apiKeyEnv = "GENSYM_API_KEY";
};

int cmd_ingest(const IngestArgs& a) {
  std::unique_ptr<kb::EmbeddingBackend> backend;
  if (a.embedUrl.empty()) {
    backend = std::make_unique<kb::LexicalEmbedding>(static_cast<std::size_t>(a.dimension));
  } else {
    const char* key = std::getenv(a.apiKeyEnv.c_str());
    backend = std::make_unique<kb::HttpEmbedding>(a.embedUrl, a.embedModel, static_cast<std::size_t>(a.dimension),
                                                  key ? key : "");
  }
  auto dir = a.kbDir.empty() ? kDataDir / "kb" : std::filesystem::path(a.kbDir);
  auto store = kb::KnowledgeStore::ingest(dir, *backend, {static_cast<std::size_t>(a.chunkWords)});
  store.save(a.out);
  std::size_t basic = 0;
  for (const auto& c : store.chunks()) basic += c.section == kb::Section::Basic;
  std::cout << "ingested " << store.chunks().size() << " chunks (" << basic << " basic, "
            << store.chunks().size() - basic << " functional) with " << store.backend_name() << " into " << a.out
            << "\n";
  return 0;
}

// ------------------------------------------------------------------ pool

int cmd_pool_inspect(const std::string& dir, std::optional<int> caseId, bool showRules) {
  auto pool = kb::CasePool::load(dir);
  for (int id : pool.case_ids()) {
    if (caseId && *caseId != id) continue;
    std::cout << "case " << id << "\n";
    int rank = 0;
    for (const auto& r : pool.records(id)) {
      std::cout << "  #" << rank++ << " R" << r.index << "  SR " << fixed(r.evaluation.successRate) << "  avg DC "
                << fixed(r.evaluation.avgDecisionCycles) << "  runs " << r.evaluation.runs << "  "
                << (r.provenance.initial ? std::string("initial")
                                         : "iteration " + std::to_string(r.provenance.iteration) + " " +
                                               r.provenance.modelTag)
                << "\n";
      if (showRules) std::cout << rules::render(r.rules) << "\n";
    }
  }
  return 0;
}

int cmd_pool_reset(const std::string& dir, std::optional<int> caseId) {
  auto pool = std::filesystem::exists(std::filesystem::path(dir) / "pool.json") ? kb::CasePool::load(dir)
                                                                               : kb::CasePool();
  pool.reset(caseId);
  std::filesystem::remove_all(dir);
  pool.save(dir);
  std::cout << (caseId ? "reset case " + std::to_string(*caseId) : std::string("reset pool")) << "\n";
  return 0;
}

// ------------------------------------------------------------------ parse / exec

int cmd_parse(const std::string& file) {
  try {
    auto rs = rules::parse_ruleset(read_file(file));
    std::cout << rules::render(rs);
    std::cerr << rs.productions.size() << " productions\n";
    return 0;
  } catch (const rules::ParseError& e) {
    std::cerr << file << ": " << e.describe() << "\n";
    return 1;
  }
}

struct ExecArgs {
  std::string file;
  int caseId = 0;
  std::string problem;
  std::uint64_t seed = 0;
  std::int64_t cutoff = 500000;
  bool full = false;
  std::string traceJson;
};

wjp::WjpInstance parse_problem(const std::string& text) {
  // caps:goal, e.g. 4,9:2
  auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--problem", "expected capacities:goal, e.g. 4,9:2");
  wjp::WjpInstance w;
  std::stringstream caps(text.substr(0, colon));
  std::string part;
  while (std::getline(caps, part, ',')) w.capacities.push_back(std::stoll(part));
  w.goal = std::stoll(text.substr(colon + 1));
  w.annotatedMinDC = wjp::min_dc_oracle(w);
  return w;
}

int cmd_exec(const ExecArgs& a) {
  wjp::WjpInstance w;
  if (!a.problem.empty()) {
    w = parse_problem(a.problem);
  } else {
    auto all = wjp::load_dataset(wjp::default_dataset_path());
    if (a.caseId < 1 || a.caseId > static_cast<int>(all.size()))
      throw CLI::ValidationError("--case", "no case " + std::to_string(a.caseId));
    w = all[static_cast<std::size_t>(a.caseId - 1)];
  }
  rules::RuleSet rs;
  try {
    rs = rules::parse_ruleset(read_file(a.file));
  } catch (const rules::ParseError& e) {
    std::cerr << a.file << ": " << e.describe() << "\n";
    return 1;
  }
  auto trace = wjp::run_instance(
      rs, w, {a.cutoff, a.seed, a.full ? kernel::TraceDetail::Full : kernel::TraceDetail::Summary});
  std::cout << (a.full ? trace.to_text() : trace.to_text(10, 20));
  if (!trace.output.empty()) std::cout << "output: " << trace.output << "\n";
  std::cout << w.notation() << " " << kernel::to_string(trace.outcome) << " after " << trace.finalDecisionCycles
            << " decision cycles (minimum " << wjp::min_dc_oracle(w) << ")\n";
  if (!a.traceJson.empty()) std::ofstream(a.traceJson) << trace.to_json().dump(2) << "\n";
  return trace.outcome == kernel::Outcome::GoalReached ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Water-jug rule generation and execution harness"};
  app.require_subcommand(1);

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify-dataset", "Check dataset annotations against the BFS oracle");
  v->add_option("--dataset", verify.dataset, "Dataset file (default: shipped dataset)");
  v->add_option("--oracle-csv", verify.oracleCsv, "Also write case_id,min_dc to this file");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run an experiment and write a report");
  r->add_option("--mode", run.mode, "manual, zero-shot, one-shot or nl2gensym")->capture_default_str();
  r->add_option("--ablate", run.ablate, "no-basic-kb, no-case-kb or no-critic (repeatable)");
  r->add_option("--bucket", run.bucket, "easy, medium, hard or variant");
  r->add_option("--case", run.cases, "Case id (repeatable)");
  r->add_option("--seed", run.seed, "Master seed")->capture_default_str();
  r->add_option("--cutoff", run.cutoff, "Decision cycle cutoff")->capture_default_str();
  r->add_option("--runs", run.runs, "Runs per case")->capture_default_str();
  r->add_option("--backend", run.backend, "none, scripted, or a profile name from the config")
      ->capture_default_str();
  r->add_option("--transcript", run.transcript, "Transcript for the scripted backend");
  r->add_option("--config", run.config, "Backend profile file (default: data/backends.toml)");
  r->add_option("--out", run.out, "Report directory")->capture_default_str();
  r->add_option("--format", run.formats, "csv, json, markdown (repeatable)");
  r->add_option("--workers", run.workers, "Cases run in parallel")->capture_default_str();
  r->add_flag("--trust-oracle", run.trustOracle, "Use oracle values where annotations disagree");
  r->add_option("--max-iterations", run.maxIterations, "Loop iterations per case")->capture_default_str();
  r->add_option("--in-loop-runs", run.inLoopRuns, "Runs per in-loop evaluation")->capture_default_str();
  r->add_option("--pool", run.pool, "Case pool directory (loaded if present, saved after the run)");
  r->add_option("--kb-index", run.kbIndex, "Prebuilt index from ingest-kb (default: ingest data/kb)");
  r->add_option("--dataset", run.dataset, "Dataset file");
  r->add_option("--prompts", run.prompts, "Directory with prompt template overrides");

  IngestArgs ingest;
  auto* ik = app.add_subcommand("ingest-kb", "Chunk and embed the knowledge base");
  ik->add_option("--kb", ingest.kbDir, "Knowledge base directory (default: data/kb)");
  ik->add_option("--out", ingest.out, "Index file")->capture_default_str();
  ik->add_option("--chunk-words", ingest.chunkWords, "Maximum words per chunk")->capture_default_str();
  ik->add_option("--dimension", ingest.dimension, "Embedding dimension")->capture_default_str();
  ik->add_option("--embed-url", ingest.embedUrl, "Embedding endpoint base URL (default: lexical embedding)");
  ik->add_option("--embed-model", ingest.embedModel, "Embedding model name");
  ik->add_option("--api-key-env", ingest.apiKeyEnv, "Environment variable holding the API key")
      ->capture_default_str();

  std::string poolDir;
  std::optional<int> poolCase;
  bool showRules = false;
  auto* pool = app.add_subcommand("pool", "Inspect or reset a case pool");
  pool->require_subcommand(1);
  auto* pi = pool->add_subcommand("inspect", "List pool records");
  pi->add_option("--pool", poolDir, "Pool directory")->required();
  pi->add_option("--case", poolCase, "Only this case");
  pi->add_flag("--rules", showRules, "Print the rules of each record");
  auto* pr = pool->add_subcommand("reset", "Drop pool records");
  pr->add_option("--pool", poolDir, "Pool directory")->required();
  pr->add_option("--case", poolCase, "Only this case");

  std::string parseFile;
  auto* ps = app.add_subcommand("parse", "Parse a rule file and print it in canonical form");
  ps->add_option("file", parseFile, "Rule file")->required();

  ExecArgs exec;
  auto* ex = app.add_subcommand("exec", "Run a rule file on one instance and print the trace");
  ex->add_option("file", exec.file, "Rule file")->required();
  auto* caseOpt = ex->add_option("--case", exec.caseId, "Dataset case id");
  auto* probOpt = ex->add_option("--problem", exec.problem, "Ad-hoc instance as capacities:goal, e.g. 4,9:2");
  caseOpt->excludes(probOpt);
  ex->add_option("--seed", exec.seed, "Selection seed")->capture_default_str();
  ex->add_option("--cutoff", exec.cutoff, "Decision cycle cutoff")->capture_default_str();
  ex->add_flag("--full", exec.full, "Print every cycle");
  ex->add_option("--trace-json", exec.traceJson, "Write the trace as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (v->parsed()) return cmd_verify(verify);
    if (r->parsed()) return cmd_run(run);
    if (ik->parsed()) return cmd_ingest(ingest);
    if (pi->parsed()) return cmd_pool_inspect(poolDir, poolCase, showRules);
    if (pr->parsed()) return cmd_pool_reset(poolDir, poolCase);
    if (ps->parsed()) return cmd_parse(parseFile);
    if (ex->parsed()) {
      if (exec.problem.empty() && exec.caseId == 0) throw CLI::ValidationError("exec", "give --case or --problem");
      return cmd_exec(exec);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const harness::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

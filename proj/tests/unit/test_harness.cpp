#include <doctest.h>

#include <atomic>
#include <fstream>
#include <random>

#include "gensym/harness/harness.hpp"

using namespace gensym;
using namespace gensym::harness;

namespace {

const std::filesystem::path kSource = GENSYM_SOURCE_DIR;

const std::vector<wjp::WjpInstance>& dataset() {
  static const auto all = wjp::load_dataset(kSource / "data" / "wjp_dataset.txt");
  return all;
}

CaseRow row(int id, wjp::Bucket b, int minDc, bool success, double mean) {
  CaseRow r;
  r.caseId = id;
  r.bucket = b;
  r.minDecisionCycles = minDc;
  r.success = success;
  r.failure = success ? "" : "cutoff";
  r.runs = 1;
  r.successfulRuns = success ? 1 : 0;
  r.meanDecisionCycles = success ? mean : 0;
  r.minRunDecisionCycles = r.maxRunDecisionCycles = static_cast<std::int64_t>(mean);
  return r;
}

// 100 rows whose oracle values average exactly 7.97 (97 x 8 + 3 x 7 = 797).
std::vector<CaseRow> rows_with_mean_dc(double meanDc, int successes) {
  std::vector<CaseRow> rows;
  for (int i = 0; i < 100; ++i) rows.push_back(row(i + 1, wjp::Bucket::Easy, i < 3 ? 7 : 8, i < successes, meanDc));
  return rows;
}

BackendFactory scripted(const std::filesystem::path& transcript, std::atomic<int>* calls = nullptr) {
  return [transcript, calls](const wjp::WjpInstance&) -> std::shared_ptr<loop::LlmBackend> {
    if (calls) ++*calls;
    return std::shared_ptr<loop::LlmBackend>(loop::ScriptedBackend::from_file(transcript));
  };
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("gensym-harness-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

ExperimentSpec smoke_spec() {
  ExperimentSpec s;
  s.mode = Mode::Nl2GenSym;
  s.filter.caseIds = {1, 33, 53};
  s.runsPerCase = 10;
  s.cutoff = 5000;
  s.masterSeed = 11;
  s.loop.inLoopRuns = 5;
  s.loop.maxIterations = 6;
  return s;
}

}  // namespace

TEST_CASE("compute_metrics arithmetic") {
  auto m = compute_metrics(rows_with_mean_dc(14.06, 86));
  CHECK(m.successRate == doctest::Approx(0.86));
  CHECK(m.avgMinDecisionCycles == doctest::Approx(7.97));
  CHECK(m.avgDecisionCycles == doctest::Approx(14.06));
  CHECK(std::round(m.ratio * 100) / 100 == doctest::Approx(1.76));

  auto m2 = compute_metrics(rows_with_mean_dc(15.81, 100));
  CHECK(std::round(m2.ratio * 100) / 100 == doctest::Approx(1.98));
  CHECK(m2.successRate == 1.0);

  CHECK_THROWS_AS(compute_metrics({}), std::invalid_argument);

  auto none = compute_metrics({row(1, wjp::Bucket::Hard, 11, false, 0)});
  CHECK(none.successRate == 0);
  CHECK(none.avgDecisionCycles == 0);
  CHECK(none.ratio == 0);
  CHECK(none.avgMinDecisionCycles == 11);
}

TEST_CASE("compute_metrics buckets and failure accounting") {
  std::vector<CaseRow> rows = {row(1, wjp::Bucket::Easy, 5, true, 10), row(2, wjp::Bucket::Easy, 5, true, 20),
                               row(3, wjp::Bucket::Hard, 13, false, 0), row(4, wjp::Bucket::Hard, 11, true, 22)};
  auto m = compute_metrics(rows);
  CHECK(m.cases == 4);
  CHECK(m.successRate == 0.75);
  CHECK(m.avgDecisionCycles == doctest::Approx((10 + 20 + 22) / 3.0));
  CHECK(m.avgMinDecisionCycles == doctest::Approx((5 + 5 + 13 + 11) / 4.0));
  REQUIRE(m.perBucket.size() == 2);
  CHECK(m.perBucket[wjp::Bucket::Easy].avgDecisionCycles == 15);
  CHECK(m.perBucket[wjp::Bucket::Hard].successRate == 0.5);
  CHECK(m.perBucket[wjp::Bucket::Hard].avgMinDecisionCycles == 12);
  CHECK(m.perBucket[wjp::Bucket::Hard].avgDecisionCycles == 22);
}

TEST_CASE("ratio is at least one when every case succeeds above its minimum") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CaseRow> rows;
    int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      int minDc = 2 + static_cast<int>(rng() % 15);
      double mean = minDc + static_cast<double>(rng() % 1000) / 10.0;
      rows.push_back(row(i + 1, wjp::kAllBuckets[rng() % 4], minDc, true, mean));
    }
    auto m = compute_metrics(rows);
    CHECK(m.ratio >= 1.0);
    CHECK(m.successRate == 1.0);
    for (const auto& [b, t] : m.perBucket) CHECK(t.ratio >= 1.0);
  }
}

TEST_CASE("case filter and spec validation") {
  CaseFilter f;
  CHECK(f.apply(dataset()).size() == 100);
  f.bucket = wjp::Bucket::Easy;
  CHECK(f.apply(dataset()).size() == 25);
  f.caseIds = {1, 2, 53};
  CHECK(f.apply(dataset()).size() == 2);
  f.caseIds = {999};
  CHECK_THROWS_AS(f.apply(dataset()), std::invalid_argument);

  ExperimentSpec s;
  s.ablations = {loop::Ablation::NoCritic};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.mode = Mode::Nl2GenSym;
  CHECK_NOTHROW(s.validate());
  s.runsPerCase = 0;
  CHECK_THROWS(s.validate());

  for (auto m : {Mode::Manual, Mode::ZeroShot, Mode::OneShot, Mode::Nl2GenSym}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_FALSE(parse_mode("few-shot"));

  auto spec = smoke_spec();
  spec.ablations = {loop::Ablation::NoCaseKb};
  auto back = ExperimentSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
}

TEST_CASE("manual mode on easy cases") {
  ExperimentSpec s;
  s.filter.caseIds = {1, 2, 3};
  s.runsPerCase = 10;
  s.cutoff = 50000;
  RunContext ctx;
  ctx.dataset = dataset();
  auto r = run_experiment(s, ctx);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.metrics.successRate == 1.0);
  for (const auto& row : r.rows) {
    CHECK(row.success);
    CHECK(row.meanDecisionCycles > 2.0 * row.minDecisionCycles);
    CHECK(row.minRunDecisionCycles >= row.minDecisionCycles);
    CHECK(row.iterations == 0);
  }
}

TEST_CASE("manual mode: a case that hits the cutoff on every run") {
  ExperimentSpec s;
  s.filter.caseIds = {1, 53};
  s.runsPerCase = 3;
  s.cutoff = 4;
  RunContext ctx;
  ctx.dataset = dataset();
  auto r = run_experiment(s, ctx);
  const auto& hard = r.rows[1];
  CHECK(hard.caseId == 53);
  CHECK_FALSE(hard.success);
  CHECK(hard.failure == "cutoff");
  CHECK(hard.maxRunDecisionCycles <= s.cutoff);
  CHECK(r.metrics.cases == 2);  // still in the denominator
  CHECK(r.metrics.avgMinDecisionCycles == doctest::Approx((5 + 11) / 2.0));
}

TEST_CASE("dataset integrity failure aborts before any model call") {
  auto data = dataset();
  for (auto& w : data)
    if (w.capacities == std::vector<std::int64_t>{3, 5} && w.goal == 1) w.annotatedMinDC = 6;
  std::atomic<int> calls{0};
  auto s = smoke_spec();
  s.filter.caseIds = {3};
  RunContext ctx;
  ctx.dataset = data;
  ctx.backend = scripted(kSource / "data" / "transcripts" / "closed_loop.json", &calls);
  try {
    run_experiment(s, ctx);
    FAIL("expected an integrity error");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("case 3") != std::string::npos);
  }
  CHECK(calls == 0);

  // Out-of-scope mismatches do not matter.
  s.filter.caseIds = {1};
  CHECK_NOTHROW(run_experiment(s, ctx));

  s.filter.caseIds = {3};
  s.trustOracle = true;
  auto r = run_experiment(s, ctx);
  CHECK(r.rows[0].minDecisionCycles == 5);
}

TEST_CASE("model modes need a backend") {
  ExperimentSpec s;
  s.mode = Mode::ZeroShot;
  RunContext ctx;
  ctx.dataset = dataset();
  CHECK_THROWS_AS(run_experiment(s, ctx), std::invalid_argument);
}

TEST_CASE("nl2gensym smoke subset with the scripted transcript") {
  auto s = smoke_spec();
  RunContext ctx;
  ctx.dataset = dataset();
  ctx.backend = scripted(kSource / "data" / "transcripts" / "closed_loop.json");
  ctx.backendName = "scripted";
  auto r = run_experiment(s, ctx);
  CHECK(r.metrics.successRate == 1.0);
  CHECK_NOTHROW(r.check_consistency());
  for (const auto& row : r.rows) {
    CHECK(row.success);
    CHECK(row.iterations >= 3);
    CHECK(row.iterations <= s.loop.maxIterations);
  }
  CHECK(r.iterationLog.size() == 3);
  CHECK(r.environment.backend == "scripted");

  // Reproducible, and independent of the worker count.
  auto again = run_experiment(s, ctx);
  CHECK(again.to_csv() == r.to_csv());
  s.workers = 3;
  auto parallel = run_experiment(s, ctx);
  CHECK(parallel.to_csv() == r.to_csv());
}

TEST_CASE("nl2gensym without the critic stalls") {
  auto s = smoke_spec();
  s.filter.caseIds = {53};
  s.ablations = {loop::Ablation::NoCritic};
  RunContext ctx;
  ctx.dataset = dataset();
  ctx.backend = scripted(kSource / "data" / "transcripts" / "closed_loop.json");
  auto r = run_experiment(s, ctx);
  CHECK(r.metrics.successRate == 0.0);
  CHECK(r.rows[0].failure == "max-iterations");
  CHECK(r.rows[0].iterations == s.loop.maxIterations);
}

TEST_CASE("zero-shot and one-shot issue one generator call") {
  TempDir dir;
  auto write = [&](const char* name, const std::string& response) {
    nlohmann::json t{{"name", name}, {"entries", nlohmann::json::array({{{"role", "generator"}, {"response", response}}})}};
    std::ofstream(dir.path / name) << t.dump();
    return dir.path / name;
  };
  auto good = write("good.json", std::string(wjp::heuristic_rules_text(wjp::Strategy::VisitedPruning)));
  auto bad = write("bad.json", "I cannot write rules for this.");

  ExperimentSpec s;
  s.mode = Mode::ZeroShot;
  s.filter.caseIds = {70};
  s.runsPerCase = 10;
  s.cutoff = 5000;
  RunContext ctx;
  ctx.dataset = dataset();
  std::shared_ptr<loop::ScriptedBackend> last;
  ctx.backend = [&](const wjp::WjpInstance&) {
    last = std::shared_ptr<loop::ScriptedBackend>(loop::ScriptedBackend::from_file(good));
    return last;
  };
  auto r = run_experiment(s, ctx);
  CHECK(r.rows[0].success);
  CHECK(r.rows[0].iterations == 1);
  REQUIRE(last->received().size() == 1);
  auto zeroPrompt = last->received()[0].userPrompt;
  CHECK(zeroPrompt.find("--- case R") == std::string::npos);

  s.mode = Mode::OneShot;
  r = run_experiment(s, ctx);
  REQUIRE(last->received().size() == 1);
  auto onePrompt = last->received()[0].userPrompt;
  CHECK(onePrompt.find("--- case R0 ") != std::string::npos);
  CHECK(onePrompt.find("[module-") == std::string::npos);
  CHECK(onePrompt.find(loop::kSuggestionsMarker) == std::string::npos);

  ctx.backend = scripted(bad);
  s.mode = Mode::ZeroShot;
  r = run_experiment(s, ctx);
  CHECK_FALSE(r.rows[0].success);
  CHECK(r.rows[0].failure == "parse");
  CHECK(r.metrics.successRate == 0);
}

TEST_CASE("report consistency, round trips and emission") {
  ExperimentSpec s;
  s.filter.caseIds = {1, 2, 26};
  s.runsPerCase = 5;
  s.cutoff = 50000;
  RunContext ctx;
  ctx.dataset = dataset();
  auto r = run_experiment(s, ctx);

  auto back = Report::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.to_csv() == r.to_csv());
  CHECK_NOTHROW(back.check_consistency());

  auto reloaded = compute_metrics(rows_from_csv(r.to_csv()));
  CHECK(reloaded.successRate == r.metrics.successRate);
  CHECK(reloaded.avgDecisionCycles == r.metrics.avgDecisionCycles);
  CHECK(reloaded.avgMinDecisionCycles == r.metrics.avgMinDecisionCycles);
  CHECK(reloaded.ratio == r.metrics.ratio);
  CHECK(rows_from_csv(r.to_csv())[0].notation == r.rows[0].notation);

  auto tampered = r;
  tampered.metrics.avgDecisionCycles += 1;
  CHECK_THROWS_AS(tampered.check_consistency(), ConsistencyError);
  TempDir dir;
  CHECK_THROWS_AS(emit_report(tampered, dir.path, {Format::Csv}), ConsistencyError);
  CHECK_FALSE(std::filesystem::exists(dir.path / "report.csv"));

  auto overCutoff = r;
  overCutoff.rows[0].maxRunDecisionCycles = s.cutoff + 1;
  CHECK_THROWS_AS(overCutoff.check_consistency(), ConsistencyError);
  auto belowOracle = r;
  belowOracle.rows[0].minRunDecisionCycles = 1;
  CHECK_THROWS_AS(belowOracle.check_consistency(), ConsistencyError);

  auto files = emit_report(r, dir.path / "out", {Format::Csv, Format::Json, Format::Markdown});
  CHECK(files.size() == 3);
  for (const auto& f : files) CHECK(std::filesystem::file_size(f) > 0);

  std::ofstream(dir.path / "plain") << "x";
  CHECK_THROWS(emit_report(r, dir.path / "plain" / "sub", {Format::Csv}));

  CHECK_THROWS(rows_from_csv("wrong,header\n"));
  CHECK_THROWS(rows_from_csv(r.to_csv() + "1,easy,x,5,maybe,,1,1,5,5,5,0\n"));
}

TEST_CASE("markdown table layout") {
  ExperimentSpec manual;
  manual.filter.caseIds = {1, 26};
  manual.runsPerCase = 3;
  manual.cutoff = 50000;
  RunContext ctx;
  ctx.dataset = dataset();
  auto a = run_experiment(manual, ctx);
  auto b = a;
  b.spec.mode = Mode::Nl2GenSym;
  b.spec.ablations = {loop::Ablation::NoCritic, loop::Ablation::NoBasicKb};
  auto md = markdown_table({a, b});
  CHECK(md.find("| Method | Overall | easy | medium | hard | variant |") != std::string::npos);
  CHECK(md.find("| Manual |") != std::string::npos);
  CHECK(md.find("| NL2GenSym w/o basic KB, critic |") != std::string::npos);
  CHECK(md.find("| Avg.Min.DC |") != std::string::npos);
  CHECK(md.find("100.00% / ") != std::string::npos);
  CHECK(md.find("x) |") != std::string::npos);
  // hard and variant have no cases in scope.
  CHECK(md.find("| - | - |") != std::string::npos);
  CHECK(a.to_markdown().find("| Manual |") != std::string::npos);
}

TEST_CASE("config parsing") {
  auto t = parse_config(R"(# profiles
top = 1
[profile.local]
base_url = "http://localhost:8000/v1"  # comment
model = "qwen # not a comment"
concurrency = 2
max_attempts = 3
generator_temperature = 0.2

[profile.empty]
)");
  CHECK(t[""]["top"] == "1");
  CHECK(t["profile.local"]["model"] == "qwen # not a comment");
  auto p = backend_profile(t, "local");
  CHECK(p.chat.baseUrl == "http://localhost:8000/v1");
  CHECK(p.chat.concurrencyLimit == 2);
  CHECK(p.chat.maxAttempts == 3);
  CHECK(p.generatorTemperature == doctest::Approx(0.2));
  CHECK(p.criticTemperature == doctest::Approx(0.7));
  CHECK(backend_profile(t, "empty").chat.model == "empty");
  CHECK_THROWS_AS(backend_profile(t, "missing"), ConfigError);

  CHECK_THROWS_AS(parse_config("[open\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("a = \"x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(backend_profile(parse_config("[profile.x]\nbogus = 1\n"), "x"), ConfigError);
  CHECK_THROWS_AS(backend_profile(parse_config("[profile.x]\nconcurrency = two\n"), "x"), ConfigError);
}

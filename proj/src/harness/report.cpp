#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gensym/harness/harness.hpp"

namespace gensym::harness {

using nlohmann::json;

namespace {

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool close(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(b)); }

void check_tuple(const MetricsTuple& got, const MetricsTuple& want, const std::string& where) {
  if (got.cases != want.cases || got.successes != want.successes || !close(got.successRate, want.successRate) ||
      !close(got.avgDecisionCycles, want.avgDecisionCycles) ||
      !close(got.avgMinDecisionCycles, want.avgMinDecisionCycles) || !close(got.ratio, want.ratio))
    throw ConsistencyError("aggregate " + where + " does not match the case rows");
}

json tuple_json(const MetricsTuple& t) {
  return json{{"cases", t.cases},
              {"successes", t.successes},
              {"successRate", t.successRate},
              {"avgDecisionCycles", t.avgDecisionCycles},
              {"avgMinDecisionCycles", t.avgMinDecisionCycles},
              {"ratio", t.ratio}};
}

MetricsTuple tuple_from(const json& j) {
  MetricsTuple t;
  t.cases = j.at("cases").get<int>();
  t.successes = j.at("successes").get<int>();
  t.successRate = j.at("successRate").get<double>();
  t.avgDecisionCycles = j.at("avgDecisionCycles").get<double>();
  t.avgMinDecisionCycles = j.at("avgMinDecisionCycles").get<double>();
  t.ratio = j.at("ratio").get<double>();
  return t;
}

json row_json(const CaseRow& r) {
  return json{{"caseId", r.caseId},
              {"bucket", std::string(wjp::to_string(r.bucket))},
              {"problem", r.notation},
              {"minDecisionCycles", r.minDecisionCycles},
              {"success", r.success},
              {"failure", r.failure},
              {"runs", r.runs},
              {"successfulRuns", r.successfulRuns},
              {"meanDecisionCycles", r.meanDecisionCycles},
              {"minRunDecisionCycles", r.minRunDecisionCycles},
              {"maxRunDecisionCycles", r.maxRunDecisionCycles},
              {"iterations", r.iterations}};
}

wjp::Bucket bucket_from(const std::string& s) {
  auto b = wjp::parse_bucket(s);
  if (!b) throw std::invalid_argument("unknown bucket '" + s + "'");
  return *b;
}

CaseRow row_from(const json& j) {
  CaseRow r;
  r.caseId = j.at("caseId").get<int>();
  r.bucket = bucket_from(j.at("bucket").get<std::string>());
  r.notation = j.at("problem").get<std::string>();
  r.minDecisionCycles = j.at("minDecisionCycles").get<int>();
  r.success = j.at("success").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  r.runs = j.at("runs").get<int>();
  r.successfulRuns = j.at("successfulRuns").get<int>();
  r.meanDecisionCycles = j.at("meanDecisionCycles").get<double>();
  r.minRunDecisionCycles = j.at("minRunDecisionCycles").get<std::int64_t>();
  r.maxRunDecisionCycles = j.at("maxRunDecisionCycles").get<std::int64_t>();
  r.iterations = j.at("iterations").get<int>();
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote in CSV line");
  out.push_back(std::move(cur));
  return out;
}

constexpr std::string_view kCsvHeader =
    "case_id,bucket,problem,min_dc,outcome,failure,runs,successful_runs,mean_dc,min_run_dc,max_run_dc,iterations";

template <typename T>
T number(const std::string& s, const char* what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("bad ") + what + " '" + s + "' in CSV");
  return v;
}

}  // namespace

void Report::check_consistency() const {
  if (rows.empty()) throw ConsistencyError("report has no case rows");
  std::set<int> ids;
  for (const auto& r : rows) {
    const std::string where = "case " + std::to_string(r.caseId);
    if (!ids.insert(r.caseId).second) throw ConsistencyError(where + " appears twice");
    if (r.successfulRuns < 0 || r.successfulRuns > r.runs) throw ConsistencyError(where + ": bad run counts");
    if (r.success != r.failure.empty()) throw ConsistencyError(where + ": outcome and failure disagree");
    if (r.success && (r.runs == 0 || r.successfulRuns != r.runs))
      throw ConsistencyError(where + ": success with failed runs");
    if (r.maxRunDecisionCycles > spec.cutoff) throw ConsistencyError(where + ": a run exceeds the cutoff");
    if (r.success && r.minRunDecisionCycles < r.minDecisionCycles)
      throw ConsistencyError(where + ": a run beats the oracle minimum");
  }
  auto want = compute_metrics(rows);
  check_tuple(metrics, want, "overall");
  if (metrics.perBucket.size() != want.perBucket.size()) throw ConsistencyError("bucket aggregates do not match");
  for (const auto& [b, t] : want.perBucket) {
    auto it = metrics.perBucket.find(b);
    if (it == metrics.perBucket.end()) throw ConsistencyError("bucket aggregates do not match");
    check_tuple(it->second, t, std::string(wjp::to_string(b)));
  }
}

json Report::to_json() const {
  json j = json::object();
  j["spec"] = spec.to_json();
  json rs = json::array();
  for (const auto& r : rows) rs.push_back(row_json(r));
  j["rows"] = rs;
  json m = tuple_json(metrics);
  json pb = json::object();
  for (const auto& [b, t] : metrics.perBucket) pb[std::string(wjp::to_string(b))] = tuple_json(t);
  m["perBucket"] = pb;
  j["metrics"] = m;
  j["environment"] = json{
      {"masterSeed", environment.masterSeed}, {"backend", environment.backend}, {"configHash", environment.configHash}};
  if (!iterationLog.empty()) {
    json log = json::object();
    for (const auto& [id, its] : iterationLog) log[std::to_string(id)] = its;
    j["iterations"] = log;
  }
  return j;
}

Report Report::from_json(const json& j) {
  Report r;
  r.spec = ExperimentSpec::from_json(j.at("spec"));
  for (const auto& row : j.at("rows")) r.rows.push_back(row_from(row));
  const auto& m = j.at("metrics");
  static_cast<MetricsTuple&>(r.metrics) = tuple_from(m);
  for (const auto& [name, t] : m.at("perBucket").items()) r.metrics.perBucket[bucket_from(name)] = tuple_from(t);
  const auto& env = j.at("environment");
  r.environment = {env.at("masterSeed").get<std::uint64_t>(), env.at("backend").get<std::string>(),
                   env.at("configHash").get<std::string>()};
  if (j.contains("iterations"))
    for (const auto& [id, its] : j.at("iterations").items()) r.iterationLog[std::stoi(id)] = its;
  return r;
}

std::string Report::to_csv() const {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.caseId << "," << wjp::to_string(r.bucket) << "," << csv_field(r.notation) << "," << r.minDecisionCycles
       << "," << (r.success ? "success" : "failure") << "," << csv_field(r.failure) << "," << r.runs << ","
       << r.successfulRuns << "," << exact(r.meanDecisionCycles) << "," << r.minRunDecisionCycles << ","
       << r.maxRunDecisionCycles << "," << r.iterations << "\n";
  }
  return os.str();
}

std::vector<CaseRow> rows_from_csv(std::string_view csv) {
  std::vector<CaseRow> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::invalid_argument("CSV header does not match");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 12) throw std::invalid_argument("CSV row has " + std::to_string(f.size()) + " fields");
    CaseRow r;
    r.caseId = number<int>(f[0], "case id");
    r.bucket = bucket_from(f[1]);
    r.notation = f[2];
    r.minDecisionCycles = number<int>(f[3], "min_dc");
    if (f[4] != "success" && f[4] != "failure") throw std::invalid_argument("bad outcome '" + f[4] + "' in CSV");
    r.success = f[4] == "success";
    r.failure = f[5];
    r.runs = number<int>(f[6], "runs");
    r.successfulRuns = number<int>(f[7], "successful_runs");
    r.meanDecisionCycles = number<double>(f[8], "mean_dc");
    r.minRunDecisionCycles = number<std::int64_t>(f[9], "min_run_dc");
    r.maxRunDecisionCycles = number<std::int64_t>(f[10], "max_run_dc");
    r.iterations = number<int>(f[11], "iterations");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string method_label(const ExperimentSpec& spec) {
  std::string label;
  switch (spec.mode) {
    case Mode::Manual: label = "Manual"; break;
    case Mode::ZeroShot: label = "Zero-shot"; break;
    case Mode::OneShot: label = "One-shot"; break;
    case Mode::Nl2GenSym: label = "NL2GenSym"; break;
  }
  if (!spec.modelProfile.empty() && spec.mode != Mode::Manual) label += " (" + spec.modelProfile + ")";
  if (!spec.ablations.empty()) {
    label += " w/o";
    bool first = true;
    for (auto a : spec.ablations) {
      label += first ? " " : ", ";
      first = false;
      switch (a) {
        case loop::Ablation::NoBasicKb: label += "basic KB"; break;
        case loop::Ablation::NoCaseKb: label += "case KB"; break;
        case loop::Ablation::NoCritic: label += "critic"; break;
      }
    }
  }
  return label;
}

std::string markdown_table(const std::vector<Report>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to tabulate");
  auto cell = [](const MetricsTuple* t) -> std::string {
    if (!t) return "-";
    std::string s = fixed(100.0 * t->successRate, 2) + "%";
    if (t->successes == 0) return s + " / -";
    return s + " / " + fixed(t->avgDecisionCycles, 2) + " (" + fixed(t->ratio, 2) + "x)";
  };
  std::ostringstream os;
  os << "| Method | Overall |";
  for (auto b : wjp::kAllBuckets) os << " " << wjp::to_string(b) << " |";
  os << "\n|---|---|---|---|---|---|\n";
  const auto& head = reports.front().metrics;
  os << "| Avg.Min.DC | " << fixed(head.avgMinDecisionCycles, 2) << " |";
  for (auto b : wjp::kAllBuckets) {
    auto it = head.perBucket.find(b);
    os << " " << (it == head.perBucket.end() ? std::string("-") : fixed(it->second.avgMinDecisionCycles, 2)) << " |";
  }
  os << "\n";
  for (const auto& r : reports) {
    os << "| " << method_label(r.spec) << " | " << cell(&r.metrics) << " |";
    for (auto b : wjp::kAllBuckets) {
      auto it = r.metrics.perBucket.find(b);
      os << " " << cell(it == r.metrics.perBucket.end() ? nullptr : &it->second) << " |";
    }
    os << "\n";
  }
  return os.str();
}

std::string Report::to_markdown() const {
  std::ostringstream os;
  os << "# Experiment report\n\n";
  os << "Cells show success rate / Avg.DC (Avg.DC over Avg.Min.DC).\n\n";
  os << markdown_table({*this}) << "\n";
  os << "- seed: " << environment.masterSeed << "\n";
  os << "- backend: " << environment.backend << "\n";
  os << "- config hash: " << environment.configHash << "\n";
  os << "- cutoff: " << spec.cutoff << ", runs per case: " << spec.runsPerCase << "\n";
  return os.str();
}

std::optional<Format> parse_format(std::string_view s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  if (s == "markdown" || s == "md") return Format::Markdown;
  return std::nullopt;
}

std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir,
                                               const std::set<Format>& formats) {
  report.check_consistency();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const char* name, const std::string& text) {
    auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    out.close();
    if (!out) throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
  };
  if (formats.count(Format::Csv)) write("report.csv", report.to_csv());
  if (formats.count(Format::Json)) write("report.json", report.to_json().dump(2) + "\n");
  if (formats.count(Format::Markdown)) write("report.md", report.to_markdown());
  return written;
}

}  // namespace gensym::harness

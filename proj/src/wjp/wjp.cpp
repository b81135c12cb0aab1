#include "gensym/wjp/wjp.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "gensym/rules/parser.hpp"

#ifndef GENSYM_DATA_DIR
#define GENSYM_DATA_DIR "data"
#endif

namespace gensym::wjp {

namespace embedded {
extern const std::string_view manual_soar;
extern const std::string_view visited_pruning_soar;
extern const std::string_view preference_hierarchy_soar;
extern const std::string_view looping_noop_soar;
}  // namespace embedded

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::Easy: return "easy";
    case Bucket::Medium: return "medium";
    case Bucket::Hard: return "hard";
    case Bucket::Variant: return "variant";
  }
  return "?";
}

std::optional<Bucket> parse_bucket(std::string_view s) {
  for (Bucket b : kAllBuckets)
    if (to_string(b) == s) return b;
  return std::nullopt;
}

std::string WjpInstance::notation() const {
  std::string out = "(";
  for (std::size_t i = 0; i < capacities.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(capacities[i]);
  }
  return out + "->" + std::to_string(goal) + ")";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

std::vector<WjpInstance> parse_dataset(std::string_view text, LoadOptions options) {
  std::vector<WjpInstance> out;
  std::size_t lineNo = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++lineNo;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    auto fail = [&](const std::string& why) {
      throw DatasetError("line " + std::to_string(lineNo) + ": " + why + ": '" + std::string(line) + "'");
    };
    auto cols = split(line, '|');
    if (cols.size() != 4) fail("expected 4 '|'-separated fields");
    WjpInstance w;
    w.caseId = static_cast<int>(out.size()) + 1;
    for (auto c : split(cols[0], ',')) {
      auto v = to_int(c);
      if (!v || *v <= 0) fail("capacity must be a positive integer");
      w.capacities.push_back(*v);
    }
    if (w.capacities.size() < 2 || w.capacities.size() > 3) fail("expected 2 or 3 jugs");
    auto g = to_int(cols[1]);
    if (!g || *g <= 0) fail("goal must be a positive integer");
    w.goal = *g;
    auto m = to_int(cols[2]);
    if (!m || *m <= 0) fail("min-dc must be a positive integer");
    w.annotatedMinDC = static_cast<int>(*m);
    auto b = parse_bucket(cols[3]);
    if (!b) fail("unknown bucket");
    w.difficulty = *b;
    if (w.goal >= *std::max_element(w.capacities.begin(), w.capacities.end()))
      fail("goal must be below the largest capacity");
    if (std::find(w.capacities.begin(), w.capacities.end(), w.goal) != w.capacities.end())
      fail("goal equals a capacity");
    out.push_back(std::move(w));
    if (end == text.size()) break;
  }
  if (options.strictCounts) {
    std::map<Bucket, int> counts;
    for (const auto& w : out) ++counts[w.difficulty];
    const std::map<Bucket, int> want{{Bucket::Easy, 25}, {Bucket::Medium, 25}, {Bucket::Hard, 30}, {Bucket::Variant, 20}};
    if (out.size() != 100 || counts != want) {
      std::ostringstream os;
      os << "expected 100 cases split 25/25/30/20, got " << out.size() << " (";
      for (Bucket bk : kAllBuckets) os << (bk == Bucket::Easy ? "" : "/") << counts[bk];
      os << ")";
      throw DatasetError(os.str());
    }
  }
  return out;
}

std::vector<WjpInstance> load_dataset(const std::filesystem::path& path, LoadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), options);
}

std::filesystem::path default_dataset_path() {
  return std::filesystem::path(GENSYM_DATA_DIR) / "wjp_dataset.txt";
}

DatasetReport verify_dataset(const std::vector<WjpInstance>& instances) {
  DatasetReport r;
  std::map<Bucket, std::pair<double, int>> oracleSum, annSum;
  double oracleTotal = 0, annTotal = 0;
  for (const auto& w : instances) {
    int oracle = 0;
    try {
      oracle = min_dc_oracle(w);
    } catch (const UnreachableGoal&) {
      r.problems.push_back("case " + std::to_string(w.caseId) + " " + w.notation() + ": goal unreachable");
      continue;
    }
    if (oracle != w.annotatedMinDC) r.oracleMismatches.push_back(w.caseId);
    bool consistent = true;
    switch (w.difficulty) {
      case Bucket::Easy: consistent = w.annotatedMinDC <= 5 && w.capacities.size() == 2; break;
      case Bucket::Medium: consistent = w.annotatedMinDC > 5 && w.annotatedMinDC <= 10 && w.capacities.size() == 2; break;
      case Bucket::Hard: consistent = w.annotatedMinDC > 10 && w.annotatedMinDC <= 20 && w.capacities.size() == 2; break;
      case Bucket::Variant: consistent = w.capacities.size() == 3; break;
    }
    if (!consistent)
      r.problems.push_back("case " + std::to_string(w.caseId) + " " + w.notation() + ": annotation " +
                           std::to_string(w.annotatedMinDC) + " does not fit bucket " + std::string(to_string(w.difficulty)));
    oracleSum[w.difficulty].first += oracle;
    oracleSum[w.difficulty].second += 1;
    annSum[w.difficulty].first += w.annotatedMinDC;
    annSum[w.difficulty].second += 1;
    oracleTotal += oracle;
    annTotal += w.annotatedMinDC;
  }
  for (auto& [b, s] : oracleSum) r.oracleMeans[b] = s.first / s.second;
  for (auto& [b, s] : annSum) r.annotatedMeans[b] = s.first / s.second;
  if (!instances.empty()) {
    r.oracleOverall = oracleTotal / static_cast<double>(instances.size());
    r.annotatedOverall = annTotal / static_cast<double>(instances.size());
  }
  return r;
}

// ------------------------------------------------------------------ search

std::string Move::to_string() const {
  switch (kind) {
    case Kind::Fill: return "fill(" + std::to_string(from + 1) + ")";
    case Kind::Empty: return "empty(" + std::to_string(from + 1) + ")";
    case Kind::Pour: return "pour(" + std::to_string(from + 1) + "->" + std::to_string(to + 1) + ")";
  }
  return "?";
}

std::vector<std::pair<Move, JugState>> successors(const JugState& state, const std::vector<std::int64_t>& capacities) {
  std::vector<std::pair<Move, JugState>> out;
  const int n = static_cast<int>(capacities.size());
  auto push = [&](Move m, JugState next) {
    if (next != state) out.emplace_back(m, std::move(next));
  };
  for (int j = 0; j < n; ++j) {
    JugState s = state;
    s[j] = capacities[j];
    push({Move::Kind::Fill, j, 0}, std::move(s));
  }
  for (int j = 0; j < n; ++j) {
    JugState s = state;
    s[j] = 0;
    push({Move::Kind::Empty, j, 0}, std::move(s));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      JugState s = state;
      std::int64_t amount = std::min(s[i], capacities[j] - s[j]);
      s[i] -= amount;
      s[j] += amount;
      push({Move::Kind::Pour, i, j}, std::move(s));
    }
  return out;
}

std::vector<Move> shortest_path(const std::vector<std::int64_t>& capacities, std::int64_t goal) {
  JugState start(capacities.size(), 0);
  auto isGoal = [&](const JugState& s) { return std::find(s.begin(), s.end(), goal) != s.end(); };
  if (isGoal(start)) return {};
  std::map<JugState, std::pair<JugState, Move>> parent;
  std::queue<JugState> frontier;
  frontier.push(start);
  parent.emplace(start, std::make_pair(start, Move{}));
  while (!frontier.empty()) {
    JugState cur = frontier.front();
    frontier.pop();
    for (auto& [move, next] : successors(cur, capacities)) {
      if (parent.count(next)) continue;
      parent.emplace(next, std::make_pair(cur, move));
      if (isGoal(next)) {
        std::vector<Move> path;
        for (JugState s = next; s != start; s = parent.at(s).first) path.push_back(parent.at(s).second);
        std::reverse(path.begin(), path.end());
        return path;
      }
      frontier.push(next);
    }
  }
  std::string caps;
  for (auto c : capacities) caps += (caps.empty() ? "" : ",") + std::to_string(c);
  throw UnreachableGoal("goal " + std::to_string(goal) + " unreachable with capacities " + caps);
}

int min_dc_oracle(const std::vector<std::int64_t>& capacities, std::int64_t goal) {
  return static_cast<int>(shortest_path(capacities, goal).size()) + 1;
}

std::string describe_problem(const WjpInstance& w) {
  std::string caps;
  for (std::size_t i = 0; i < w.capacities.size(); ++i) {
    if (i) caps += i + 1 == w.capacities.size() ? " and " : ", ";
    caps += std::to_string(w.capacities[i]);
  }
  return "Water jug problem " + w.notation() + ". There are " + std::to_string(w.capacities.size()) +
         " jugs with capacities " + caps + " liters, all initially empty. The moves are: fill a jug completely, " +
         "empty a jug completely, or pour from one jug into another until the source is empty or the " +
         "destination is full. Reach a state where some jug holds exactly " + std::to_string(w.goal) +
         " liters, in as few decision cycles as possible.";
}

std::string oracle_csv(const std::vector<WjpInstance>& instances) {
  std::string out = "case_id,min_dc\n";
  for (const auto& w : instances) out += std::to_string(w.caseId) + "," + std::to_string(min_dc_oracle(w)) + "\n";
  return out;
}

// ------------------------------------------------------------ engine coupling

Encoding encode_instance(const std::vector<std::int64_t>& capacities, std::int64_t goal) {
  Encoding e;
  e.seeds.push_back({"name", std::string("water-jug")});
  for (std::size_t k = 0; k < capacities.size(); ++k) {
    const std::string jug = "jug[" + std::to_string(k + 1) + "]";
    e.seeds.push_back({jug + ".volume", capacities[k]});
    e.seeds.push_back({jug + ".contents", std::int64_t{0}});
  }
  e.seeds.push_back({"desired.contents", goal});
  const std::string text = "sp {" + std::string(kGoalRuleName) +
                           "\n    (state <s> ^name water-jug ^jug <j>)\n    (<j> ^contents " + std::to_string(goal) +
                           ")\n-->\n    (write |goal reached: | <j> | holds " + std::to_string(goal) +
                           "|)\n    (halt)\n}\n";
  e.goalRules = rules::parse_ruleset(text);
  return e;
}

Encoding encode_instance(const WjpInstance& w) { return encode_instance(w.capacities, w.goal); }

namespace {

std::optional<std::int64_t> int_value(const kernel::Engine& e, kernel::Symbol id, std::string_view attr) {
  for (auto v : e.values(id, attr))
    if (v.is_integer()) return v.value;
  return std::nullopt;
}

/// Jug index from the ^volume of a jug identifier. Capacities within an
/// instance are distinct, so the volume identifies the jug.
std::optional<int> jug_index(const kernel::Engine& e, kernel::Symbol jug, const std::vector<std::int64_t>& capacities) {
  auto vol = int_value(e, jug, "volume");
  if (!vol) return std::nullopt;
  auto it = std::find(capacities.begin(), capacities.end(), *vol);
  if (it == capacities.end()) return std::nullopt;
  return static_cast<int>(it - capacities.begin());
}

std::optional<kernel::Symbol> id_value(const kernel::Engine& e, kernel::Symbol id, std::string_view attr) {
  for (auto v : e.values(id, attr))
    if (v.is_identifier()) return v;
  return std::nullopt;
}

}  // namespace

JugState jug_contents(const kernel::Engine& e, const std::vector<std::int64_t>& capacities) {
  JugState out(capacities.size(), 0);
  for (auto jug : e.values(e.top_state(), "jug")) {
    auto idx = jug_index(e, jug, capacities);
    auto c = int_value(e, jug, "contents");
    if (idx && c) out[*idx] = *c;
  }
  return out;
}

kernel::Engine::GoalPredicate goal_predicate(std::vector<std::int64_t> capacities, std::int64_t goal) {
  return [capacities = std::move(capacities), goal](const kernel::Engine& e) {
    for (auto jug : e.values(e.top_state(), "jug"))
      for (auto v : e.values(jug, "contents"))
        if (v.is_integer() && v.value == goal) return true;
    return false;
  };
}

std::optional<Move> decode_operator(const kernel::Engine& e, kernel::Symbol op, const std::vector<std::int64_t>& capacities) {
  std::string name;
  for (auto v : e.values(op, "name"))
    if (!v.is_identifier()) name = e.to_string(v);
  auto jugOf = [&](std::string_view attr) -> std::optional<int> {
    auto j = id_value(e, op, attr);
    if (!j) return std::nullopt;
    return jug_index(e, *j, capacities);
  };
  if (name == "fill") {
    if (auto j = jugOf("fill-jug")) return Move{Move::Kind::Fill, *j, 0};
  } else if (name == "empty") {
    if (auto j = jugOf("empty-jug")) return Move{Move::Kind::Empty, *j, 0};
  } else if (name == "pour") {
    auto i = jugOf("from");
    auto j = jugOf("to");
    if (i && j && *i != *j) return Move{Move::Kind::Pour, *i, *j};
  }
  return std::nullopt;
}

std::string_view manual_rules_text() { return embedded::manual_soar; }
rules::RuleSet manual_rules() { return rules::parse_ruleset(manual_rules_text()); }

std::string_view heuristic_rules_text(Strategy s) {
  return s == Strategy::VisitedPruning ? embedded::visited_pruning_soar : embedded::preference_hierarchy_soar;
}
rules::RuleSet heuristic_reference_rules(Strategy s) { return rules::parse_ruleset(heuristic_rules_text(s)); }

std::string_view looping_noop_text() { return embedded::looping_noop_soar; }
rules::RuleSet looping_noop_rules() { return rules::parse_ruleset(looping_noop_text()); }

rules::RuleSet with_goal(const rules::RuleSet& rs, const Encoding& enc) {
  rules::RuleSet out;
  out.sourceText = rs.sourceText;
  for (const auto& p : rs.productions)
    if (p.name != kGoalRuleName) out.productions.push_back(p);
  for (const auto& p : enc.goalRules.productions) out.productions.push_back(p);
  return out;
}

kernel::DecisionTrace run_instance(const rules::RuleSet& rs, const WjpInstance& w, kernel::RunConfig config) {
  auto enc = encode_instance(w);
  return kernel::run(with_goal(rs, enc), enc.seeds, goal_predicate(w.capacities, w.goal), config);
}

}  // namespace gensym::wjp

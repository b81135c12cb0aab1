#include <doctest.h>

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <set>

#include "gensym/rules/parser.hpp"
#include "gensym/rules/render.hpp"
#include "gensym/wjp/wjp.hpp"

using namespace gensym;
using namespace gensym::wjp;

namespace {

// Independent oracle: relax distances over the full state grid until nothing
// changes. Different algorithm and move code from the library's search.
int relaxation_min_dc(const std::vector<std::int64_t>& caps, std::int64_t goal) {
  const std::size_t n = caps.size();
  std::vector<std::int64_t> dims(caps);
  for (auto& d : dims) d += 1;
  std::size_t total = 1;
  for (auto d : dims) total *= static_cast<std::size_t>(d);
  auto encode = [&](const std::array<std::int64_t, 3>& s) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) k = k * dims[i] + s[i];
    return k;
  };
  auto decode = [&](std::size_t k) {
    std::array<std::int64_t, 3> s{};
    for (std::size_t i = n; i-- > 0;) {
      s[i] = static_cast<std::int64_t>(k % dims[i]);
      k /= dims[i];
    }
    return s;
  };
  const int inf = 1 << 28;
  std::vector<int> dist(total, inf);
  dist[0] = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = 0; k < total; ++k) {
      if (dist[k] == inf) continue;
      auto s = decode(k);
      std::vector<std::array<std::int64_t, 3>> next;
      for (std::size_t i = 0; i < n; ++i) {
        auto f = s;
        f[i] = caps[i];
        next.push_back(f);
        auto e = s;
        e[i] = 0;
        next.push_back(e);
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          auto p = s;
          std::int64_t room = caps[j] - p[j];
          std::int64_t amount = p[i] < room ? p[i] : room;
          p[i] -= amount;
          p[j] += amount;
          next.push_back(p);
        }
      }
      for (auto& t : next) {
        auto kt = encode(t);
        if (dist[kt] > dist[k] + 1) {
          dist[kt] = dist[k] + 1;
          changed = true;
        }
      }
    }
  }
  int best = inf;
  for (std::size_t k = 0; k < total; ++k) {
    auto s = decode(k);
    for (std::size_t i = 0; i < n; ++i)
      if (s[i] == goal) best = std::min(best, dist[k]);
  }
  return best == inf ? -1 : best + 1;
}

const std::vector<WjpInstance>& dataset() {
  static const auto data = load_dataset(std::string(GENSYM_SOURCE_DIR) + "/data/wjp_dataset.txt");
  return data;
}

const WjpInstance& find_case(const std::vector<std::int64_t>& caps, std::int64_t goal) {
  for (const auto& w : dataset())
    if (w.capacities == caps && w.goal == goal) return w;
  throw std::runtime_error("case not in dataset");
}

kernel::RunConfig cfg(std::uint64_t seed, std::int64_t cutoff = 500000) {
  kernel::RunConfig c;
  c.rngSeed = seed;
  c.cutoff = cutoff;
  c.traceDetail = kernel::TraceDetail::Summary;
  return c;
}

std::size_t count_preferences(const rules::RuleSet& rs, std::initializer_list<rules::PreferenceSymbol> syms) {
  std::size_t n = 0;
  for (const auto& p : rs.productions)
    for (const auto& a : p.actions)
      for (const auto& pr : a.preferences)
        if (std::find(syms.begin(), syms.end(), pr.symbol) != syms.end()) ++n;
  return n;
}

}  // namespace

TEST_CASE("shipped dataset loads with the expected shape") {
  const auto& d = dataset();
  REQUIRE(d.size() == 100);
  std::map<Bucket, int> counts;
  for (const auto& w : d) ++counts[w.difficulty];
  CHECK(counts[Bucket::Easy] == 25);
  CHECK(counts[Bucket::Medium] == 25);
  CHECK(counts[Bucket::Hard] == 30);
  CHECK(counts[Bucket::Variant] == 20);
  for (int i = 0; i < 100; ++i) CHECK(d[i].caseId == i + 1);

  const auto& w = find_case({7, 9}, 1);
  CHECK(w.annotatedMinDC == 13);
  CHECK(w.difficulty == Bucket::Hard);
  CHECK(w.notation() == "(7,9->1)");
  CHECK(d[69].notation() == "(7,9->1)");
}

TEST_CASE("dataset parser rejects bad rows") {
  LoadOptions lenient{false};
  CHECK(parse_dataset("# c\n3,5|1|5|easy\n", lenient).size() == 1);
  CHECK_THROWS_AS(parse_dataset("3,5|5|5|easy\n", lenient), DatasetError);   // goal equals a capacity
  CHECK_THROWS_AS(parse_dataset("3,5|6|5|easy\n", lenient), DatasetError);   // goal above max
  CHECK_THROWS_AS(parse_dataset("3,5|1|5\n", lenient), DatasetError);        // missing field
  CHECK_THROWS_AS(parse_dataset("3,x|1|5|easy\n", lenient), DatasetError);   // non-integer
  CHECK_THROWS_AS(parse_dataset("5|1|5|easy\n", lenient), DatasetError);     // one jug
  CHECK_THROWS_AS(parse_dataset("3,5|1|5|trivial\n", lenient), DatasetError);
  CHECK_THROWS_AS(parse_dataset("3,5|0|5|easy\n", lenient), DatasetError);
  CHECK_THROWS_AS(parse_dataset("3,5|1|5|easy\n"), DatasetError);             // strict counts
  try {
    parse_dataset("3,5|1|5|easy\n\n3,5|5|5|easy\n", lenient);
    FAIL("expected error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("successors") {
  SUBCASE("from empty only fills change the state") {
    auto s = successors({0, 0}, {5, 3});
    REQUIRE(s.size() == 2);
    CHECK(s[0].second == JugState{5, 0});
    CHECK(s[1].second == JugState{0, 3});
  }
  SUBCASE("pour stops when the destination is full") {
    auto s = successors({5, 0}, {5, 3});
    auto it = std::find_if(s.begin(), s.end(), [](auto& p) { return p.first == Move{Move::Kind::Pour, 0, 1}; });
    REQUIRE(it != s.end());
    CHECK(it->second == JugState{2, 3});
  }
  SUBCASE("empty the second jug") {
    auto s = successors({1, 3}, {5, 3});
    auto it = std::find_if(s.begin(), s.end(), [](auto& p) { return p.first == Move{Move::Kind::Empty, 1, 0}; });
    REQUIRE(it != s.end());
    CHECK(it->second == JugState{1, 0});
  }
  SUBCASE("closure over the whole grid") {
    std::vector<std::int64_t> caps{4, 7, 9};
    for (std::int64_t a = 0; a <= 4; ++a)
      for (std::int64_t b = 0; b <= 7; ++b)
        for (std::int64_t c = 0; c <= 9; ++c) {
          JugState st{a, b, c};
          for (auto& [m, next] : successors(st, caps)) {
            CHECK(next != st);
            if (m.kind == Move::Kind::Pour) CHECK(m.from != m.to);
            for (std::size_t i = 0; i < 3; ++i) {
              CHECK(next[i] >= 0);
              CHECK(next[i] <= caps[i]);
            }
            CHECK(std::accumulate(next.begin(), next.end(), std::int64_t{0}) <=
                  std::accumulate(st.begin(), st.end(), std::int64_t{0}) + 9);
          }
        }
  }
}

TEST_CASE("min_dc_oracle examples") {
  CHECK(min_dc_oracle({3, 5}, 1) == 5);
  CHECK(min_dc_oracle({4, 9}, 2) == 11);
  CHECK(min_dc_oracle({3, 5, 9}, 2) == 3);
  CHECK(min_dc_oracle({7, 9}, 1) == 13);
  CHECK(min_dc_oracle({3, 5}, 0) == 1);
  CHECK(min_dc_oracle({4, 9, 13}, 0) == 1);
  CHECK_THROWS_AS(min_dc_oracle({2, 4}, 3), UnreachableGoal);
  CHECK(shortest_path({3, 5}, 1).size() == 4);
}

TEST_CASE("library oracle agrees with an independent relaxation oracle on every case") {
  for (const auto& w : dataset()) {
    INFO(w.notation());
    CHECK(min_dc_oracle(w) == relaxation_min_dc(w.capacities, w.goal));
  }
}

TEST_CASE("oracle versus annotations") {
  auto report = verify_dataset(dataset());
  // Case 52 (3,14->2) is annotated 11, but a 9-cycle path exists:
  // fill 14, then pour/empty the 3 four times leaves 2 in the 14.
  CHECK(report.oracleMismatches == std::vector<int>{52});
  CHECK(relaxation_min_dc({3, 14}, 2) == 9);
  CHECK(report.problems.empty());

  // Means recomputed here from the independent oracle.
  std::map<Bucket, std::pair<double, int>> acc;
  double total = 0;
  for (const auto& w : dataset()) {
    int m = relaxation_min_dc(w.capacities, w.goal);
    acc[w.difficulty].first += m;
    acc[w.difficulty].second += 1;
    total += m;
  }
  for (Bucket b : kAllBuckets) CHECK(report.oracleMeans[b] == doctest::Approx(acc[b].first / acc[b].second));
  CHECK(report.oracleOverall == doctest::Approx(total / 100.0));
  CHECK(report.oracleMeans[Bucket::Easy] == doctest::Approx(5.0));
  CHECK(report.oracleMeans[Bucket::Medium] == doctest::Approx(7.88));
  CHECK(report.oracleMeans[Bucket::Variant] == doctest::Approx(4.55));
  CHECK(report.oracleOverall == doctest::Approx(7.97).epsilon(0.001));
}

TEST_CASE("oracle CSV") {
  auto csv = oracle_csv(dataset());
  CHECK(csv.rfind("case_id,min_dc\n1,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);
  CHECK(csv.find("\n70,13\n") != std::string::npos);
}

TEST_CASE("encode_instance") {
  SUBCASE("two jugs") {
    auto enc = encode_instance({3, 5}, 1);
    CHECK(enc.seeds.size() == 6);
    REQUIRE(enc.goalRules.productions.size() == 1);
    CHECK(enc.goalRules.productions[0].name == kGoalRuleName);
    auto text = rules::render(enc.goalRules);
    CHECK(text.find("^contents 1") != std::string::npos);
    CHECK(text.find("(halt)") != std::string::npos);
    kernel::Engine e(enc.goalRules);
    e.init_state(enc.seeds);
    CHECK(e.values(e.top_state(), "jug").size() == 2);
  }
  SUBCASE("variant") {
    auto enc = encode_instance({3, 5, 9}, 2);
    kernel::Engine e(enc.goalRules);
    e.init_state(enc.seeds);
    CHECK(e.values(e.top_state(), "jug").size() == 3);
    CHECK(jug_contents(e, {3, 5, 9}) == JugState{0, 0, 0});
  }
  SUBCASE("goal already present halts at the first cycle") {
    auto enc = encode_instance({3, 5}, 0);
    auto t = kernel::run(with_goal(manual_rules(), enc), enc.seeds, goal_predicate({3, 5}, 0), cfg(1));
    CHECK(t.outcome == kernel::Outcome::GoalReached);
    CHECK(t.finalDecisionCycles == 1);
  }
}

TEST_CASE("shipped rule files parse, round-trip and have the right shape") {
  auto manual = manual_rules();
  CHECK(manual.productions.size() == 8);
  CHECK(count_preferences(manual, {rules::PreferenceSymbol::Best, rules::PreferenceSymbol::Better,
                                   rules::PreferenceSymbol::Worse, rules::PreferenceSymbol::Worst}) == 0);
  CHECK(count_preferences(manual, {rules::PreferenceSymbol::Indifferent}) == 3);
  for (auto s : {Strategy::VisitedPruning, Strategy::PreferenceHierarchy}) {
    auto rs = heuristic_reference_rules(s);
    CHECK(count_preferences(rs, {rules::PreferenceSymbol::Reject, rules::PreferenceSymbol::Worst}) >= 1);
    CHECK(rules::parse_ruleset(rules::render(rs)) == rs);
  }
  CHECK(rules::parse_ruleset(rules::render(manual)) == manual);
  CHECK(looping_noop_rules().productions.size() == 4);

  auto enc = encode_instance({3, 5}, 1);
  auto merged = with_goal(with_goal(manual, enc), enc);
  CHECK(merged.productions.size() == 9);
}

TEST_CASE("forced shortest-path replay reaches the goal at exactly the oracle DC") {
  for (const auto& w : dataset()) {
    INFO(w.notation());
    auto path = shortest_path(w.capacities, w.goal);
    std::vector<JugState> states{JugState(w.capacities.size(), 0)};
    for (const auto& m : path) {
      for (auto& [mv, next] : successors(states.back(), w.capacities))
        if (mv == m) {
          states.push_back(next);
          break;
        }
    }
    REQUIRE(states.size() == path.size() + 1);

    auto enc = encode_instance(w);
    kernel::Engine e(with_goal(manual_rules(), enc), cfg(7));
    e.init_state(enc.seeds);
    bool offPath = false;
    e.set_selection_override([&](const kernel::Engine& eng, const std::vector<kernel::OperatorCandidate>& cands)
                                 -> std::optional<kernel::Symbol> {
      auto here = jug_contents(eng, w.capacities);
      auto it = std::find(states.begin(), states.end(), here);
      if (it == states.end() || it + 1 == states.end()) {
        offPath = true;
        return std::nullopt;
      }
      const Move& want = path[static_cast<std::size_t>(it - states.begin())];
      for (const auto& c : cands)
        if (decode_operator(eng, c.operatorId, w.capacities) == want) return c.operatorId;
      offPath = true;
      return std::nullopt;
    });
    auto t = e.run(goal_predicate(w.capacities, w.goal));
    CHECK_FALSE(offPath);
    CHECK(t.outcome == kernel::Outcome::GoalReached);
    CHECK(t.finalDecisionCycles == min_dc_oracle(w));
    CHECK(e.audit().empty());
  }
}

TEST_CASE("manual rules reach the goal by random walk") {
  const auto& w = find_case({3, 5}, 1);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto t = run_instance(manual_rules(), w, cfg(seed));
    CHECK(t.outcome == kernel::Outcome::GoalReached);
    CHECK(t.finalDecisionCycles >= 5);
    CHECK(t.output.find("goal reached") != std::string::npos);
  }
}

TEST_CASE("preference hierarchy on (4,9->2) follows the fill-small cycle") {
  const auto& w = find_case({4, 9}, 2);
  auto rs = heuristic_reference_rules(Strategy::PreferenceHierarchy);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto t = run_instance(rs, w, cfg(seed));
    CHECK(t.outcome == kernel::Outcome::GoalReached);
    CHECK(t.finalDecisionCycles == 13);
  }
}

TEST_CASE("visited pruning on (7,9->1) stays within twice the minimum") {
  const auto& w = find_case({7, 9}, 1);
  auto rs = heuristic_reference_rules(Strategy::VisitedPruning);
  double sum = 0;
  const int runs = 30;
  for (int seed = 1; seed <= runs; ++seed) {
    auto t = run_instance(rs, w, cfg(static_cast<std::uint64_t>(seed)));
    REQUIRE(t.outcome == kernel::Outcome::GoalReached);
    CHECK(t.finalDecisionCycles >= 13);
    sum += static_cast<double>(t.finalDecisionCycles);
  }
  CHECK(sum / runs <= 26.0);
}

TEST_CASE("looping rules hit the cutoff exactly") {
  const auto& w = find_case({3, 5}, 1);
  auto t = run_instance(looping_noop_rules(), w, cfg(3, 2000));
  CHECK(t.outcome == kernel::Outcome::CutoffExceeded);
  CHECK(t.finalDecisionCycles == 2000);
}

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "gensym/kernel/engine.hpp"
#include "gensym/rules/parser.hpp"

using namespace gensym;
using namespace gensym::kernel;
using rules::PreferenceSymbol;

namespace {

const char* kFillRules = R"(
sp {water-jug*elaborate*empty
   (state <s> ^jug <j>)
   (<j> ^volume <v> ^contents <c>)
-->
   (<j> ^empty (- <v> <c>))}

sp {water-jug*propose*fill
   (state <s> ^name water-jug ^jug <j>)
   (<j> ^empty > 0)
-->
   (<s> ^operator <o> +=)
   (<o> ^name fill ^fill-jug <j>)}

sp {water-jug*apply*fill
   (state <s> ^name water-jug ^operator <o> ^jug <j>)
   (<o> ^name fill ^fill-jug <j>)
   (<j> ^volume <volume> ^contents <contents>)
-->
   (<j> ^contents <volume> <contents> -)}
)";

std::vector<SeedWme> one_jug(std::int64_t volume, std::int64_t contents) {
  return {{"name", std::string("water-jug")}, {"jug[1].volume", volume}, {"jug[1].contents", contents}};
}

Symbol first_jug(const Engine& e) { return e.values(e.top_state(), "jug").at(0); }

bool has_wme(const Engine& e, const std::string& text) {
  auto d = e.dump();
  return std::find(d.begin(), d.end(), text) != d.end();
}

OperatorCandidate cand(std::int64_t n, std::vector<CandidatePreference> prefs) {
  return {Symbol::identifier('O', n), std::move(prefs)};
}
CandidatePreference pref(PreferenceSymbol s) { return {s, std::nullopt}; }
CandidatePreference pref(PreferenceSymbol s, std::int64_t ref) { return {s, Symbol::identifier('O', ref)}; }

}  // namespace

TEST_CASE("init_state builds the top state and seed structure") {
  rules::RuleSet none;
  SUBCASE("empty seed") {
    Engine e(none);
    e.init_state({});
    CHECK(e.wm().size() == 2);
    CHECK(has_wme(e, "(S1 ^superstate nil)"));
    CHECK(has_wme(e, "(S1 ^type state)"));
  }
  SUBCASE("two jugs") {
    Engine e(none);
    e.init_state({{"jug[a].volume", 5}, {"jug[a].contents", 0}, {"jug[b].volume", 3}, {"jug[b].contents", 0}});
    auto jugs = e.values(e.top_state(), "jug");
    CHECK(jugs.size() == 2);
    int attrs = 0;
    for (Symbol j : jugs) attrs += static_cast<int>(e.values(j, "volume").size() + e.values(j, "contents").size());
    CHECK(attrs == 4);
    CHECK(e.wm().size() == 2 + 2 + 4);
  }
  SUBCASE("duplicates collapse") {
    Engine e(none);
    e.init_state({{"flag", 1}, {"flag", 1}});
    CHECK(e.values(e.top_state(), "flag").size() == 1);
  }
}

TEST_CASE("propose fill creates an acceptable preference") {
  Engine e(rules::parse_ruleset(kFillRules));
  e.init_state(one_jug(5, 0));
  e.elaborate();
  auto c = e.candidates();
  REQUIRE(c.size() == 1);
  CHECK(e.values(c[0].operatorId, "name").at(0) == e.sym("fill"));
  CHECK(e.wm().find(e.top_state(), e.sym("operator"), c[0].operatorId, true).has_value());
  CHECK(e.audit().empty());
}

TEST_CASE("no rules leaves working memory unchanged") {
  Engine e(rules::RuleSet{});
  e.init_state(one_jug(5, 0));
  auto before = e.dump();
  auto r = e.elaborate();
  CHECK(r.fired.empty());
  CHECK(e.dump() == before);
}

TEST_CASE("retraction chain: conclusions vanish when a later rule removes the premise") {
  // Expected by hand: A derives b from a, B derives c from b, C removes a.
  // After quiescence a, b and c are all gone.
  const char* src = R"(
sp {a (state <s> ^a 1) --> (<s> ^b 1)}
sp {b (state <s> ^b 1) --> (<s> ^c 1)}
sp {c (state <s> ^c 1 ^a 1) --> (<s> ^a 1 -)}
)";
  Engine e(rules::parse_ruleset(src));
  e.init_state({{"a", 1}});
  auto r = e.elaborate();
  CHECK(r.fired.size() == 3);
  CHECK(e.values(e.top_state(), "a").empty());
  CHECK(e.values(e.top_state(), "b").empty());
  CHECK(e.values(e.top_state(), "c").empty());
  CHECK(e.audit().empty());
}

TEST_CASE("apply fill sets contents to the volume") {
  Engine e(rules::parse_ruleset(kFillRules));
  e.init_state(one_jug(5, 0));
  e.elaborate();
  auto c = e.candidates();
  REQUIRE(c.size() == 1);
  e.apply(c[0].operatorId);
  Symbol j = first_jug(e);
  auto contents = e.values(j, "contents");
  REQUIRE(contents.size() == 1);
  CHECK(contents[0] == Symbol::integer(5));
  e.elaborate();
  CHECK(e.values(j, "empty").at(0) == Symbol::integer(0));
  CHECK(e.candidates().empty());
  CHECK(e.audit().empty());
}

TEST_CASE("o-supported results persist after the operator retracts") {
  const char* src = R"(
sp {propose (state <s> -^done) --> (<s> ^operator <o> +) (<o> ^name go)}
sp {apply (state <s> ^operator <o>) (<o> ^name go) --> (<s> ^done yes)}
)";
  Engine e(rules::parse_ruleset(src));
  e.init_state({});
  e.elaborate();
  Symbol op = e.candidates().at(0).operatorId;
  e.apply(op);
  e.elaborate();
  CHECK(e.values(e.top_state(), "done").size() == 1);
  CHECK(e.values(e.top_state(), "operator").empty());
  CHECK(e.candidates().empty());
}

TEST_CASE("arithmetic on the right-hand side") {
  const char* src = R"(
sp {sum (state <s> ^x <x> ^y <y>) --> (<s> ^z (+ <x> <y>) ^w (* (- <y> <x>) 4) ^q (/ 12 <y>))}
)";
  Engine e(rules::parse_ruleset(src));
  e.init_state({{"x", 2}, {"y", 3}});
  e.elaborate();
  CHECK(e.values(e.top_state(), "z").at(0) == Symbol::integer(5));
  CHECK(e.values(e.top_state(), "w").at(0) == Symbol::integer(4));
  CHECK(e.values(e.top_state(), "q").at(0) == Symbol::integer(4));
}

TEST_CASE("runtime errors name the rule") {
  SUBCASE("division by zero") {
    auto t = run(rules::parse_ruleset("sp {div (state <s> ^x <x>) --> (<s> ^y (/ 4 <x>))}"), {{"x", 0}}, {}, {});
    CHECK(t.outcome == Outcome::RuntimeError);
    CHECK(t.errorRule == "div");
    CHECK(t.error.find("division by zero") != std::string::npos);
  }
  SUBCASE("non-integer division") {
    auto t = run(rules::parse_ruleset("sp {div (state <s> ^x <x>) --> (<s> ^y (/ 5 <x>))}"), {{"x", 2}}, {}, {});
    CHECK(t.outcome == Outcome::RuntimeError);
  }
  SUBCASE("non-numeric operand") {
    auto t = run(rules::parse_ruleset("sp {add (state <s> ^x <x>) --> (<s> ^y (+ 1 <x>))}"), {{"x", std::string("abc")}}, {}, {});
    CHECK(t.outcome == Outcome::RuntimeError);
    CHECK(t.error.find("non-numeric") != std::string::npos);
  }
  SUBCASE("elaboration livelock") {
    // Each firing creates a fresh identifier, so the match set never settles.
    const char* src = "sp {grow (state <s> ^node <n>) --> (<n> ^child <c>) (<s> ^node <c>)}";
    auto t = run(rules::parse_ruleset(src), {{"node.x", 1}}, {}, {});
    CHECK(t.outcome == Outcome::RuntimeError);
    CHECK(t.error.find("quiescence") != std::string::npos);
  }
}

TEST_CASE("selection examples") {
  Rng rng(7);
  using P = PreferenceSymbol;
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable)})}, rng)) == Symbol::identifier('O', 1));
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Best)}), cand(2, {pref(P::Acceptable)})},
                                         rng)) == Symbol::identifier('O', 1));
  CHECK(std::get<ImpasseKind>(select_operator({cand(1, {pref(P::Acceptable)}), cand(2, {pref(P::Acceptable)})}, rng)) ==
        ImpasseKind::Tie);
  CHECK(std::get<ImpasseKind>(select_operator({}, rng)) == ImpasseKind::NoChange);
  CHECK(std::get<ImpasseKind>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Reject)})}, rng)) ==
        ImpasseKind::NoChange);
  CHECK(std::get<ImpasseKind>(select_operator(
            {cand(1, {pref(P::Acceptable), pref(P::Require)}), cand(2, {pref(P::Acceptable), pref(P::Require)})}, rng)) ==
        ImpasseKind::ConstraintFailure);
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable)}), cand(2, {pref(P::Acceptable), pref(P::Require)})},
                                         rng)) == Symbol::identifier('O', 2));
  CHECK(std::get<ImpasseKind>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Better, 2)}),
                                               cand(2, {pref(P::Acceptable), pref(P::Better, 1)})},
                                              rng)) == ImpasseKind::Conflict);
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Worse, 2)}), cand(2, {pref(P::Acceptable)})},
                                         rng)) == Symbol::identifier('O', 2));
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Worst)}), cand(2, {pref(P::Acceptable)})},
                                         rng)) == Symbol::identifier('O', 2));
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Worst)})}, rng)) ==
        Symbol::identifier('O', 1));
  CHECK(std::get<Symbol>(select_operator({cand(1, {pref(P::Acceptable), pref(P::Indifferent, 2)}),
                                          cand(2, {pref(P::Acceptable)})},
                                         rng))
            .is_identifier());
}

TEST_CASE("indifferent selection is uniform") {
  using P = PreferenceSymbol;
  std::vector<OperatorCandidate> cs = {cand(1, {pref(P::Acceptable), pref(P::Indifferent)}),
                                       cand(2, {pref(P::Acceptable), pref(P::Indifferent)})};
  Rng a(12345), b(12345);
  CHECK(std::get<Symbol>(select_operator(cs, a)) == std::get<Symbol>(select_operator(cs, b)));
  Rng rng(2024);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (std::get<Symbol>(select_operator(cs, rng)) == Symbol::identifier('O', 1)) ++first;
  double f = static_cast<double>(first) / n;
  CHECK(f >= 0.47);
  CHECK(f <= 0.53);
}

TEST_CASE("Rng::below has no modulo bias on a skewed range") {
  // Three buckets with a range that is not a power of two.
  Rng rng(99);
  std::map<std::uint64_t, int> hist;
  for (int i = 0; i < 30000; ++i) ++hist[rng.below(3)];
  for (auto& [k, v] : hist) CHECK(std::abs(v - 10000) < 400);
}

TEST_CASE("selection algebra properties") {
  using P = PreferenceSymbol;
  std::mt19937_64 gen(42);
  const std::vector<P> kinds = {P::Reject, P::Best, P::Worst, P::Indifferent, P::Better, P::Worse, P::Require, P::Prohibit};
  for (int round = 0; round < 500; ++round) {
    int n = 1 + static_cast<int>(gen() % 5);
    std::vector<OperatorCandidate> cs;
    for (int i = 1; i <= n; ++i) {
      std::vector<CandidatePreference> ps = {pref(P::Acceptable)};
      int extra = static_cast<int>(gen() % 3);
      for (int k = 0; k < extra; ++k) {
        P s = kinds[gen() % kinds.size()];
        if (s == P::Better || s == P::Worse) ps.push_back(pref(s, 1 + static_cast<std::int64_t>(gen() % n)));
        else ps.push_back(pref(s));
      }
      cs.push_back(cand(i, ps));
    }
    std::uint64_t seed = gen();
    Rng r1(seed);
    auto base = select_operator(cs, r1);

    auto shuffled = cs;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    Rng r2(seed);
    CHECK(select_operator(shuffled, r2) == base);

    std::int64_t x = 1 + static_cast<std::int64_t>(gen() % n);
    auto rejected = cs;
    rejected[x - 1].preferences.push_back(pref(P::Reject));
    Rng r3(seed);
    auto res = select_operator(rejected, r3);
    if (auto* s = std::get_if<Symbol>(&res)) CHECK(*s != Symbol::identifier('O', x));
  }
  Rng r(1);
  CHECK(select_operator({cand(4, {pref(P::Acceptable), pref(P::Best)})}, r) ==
        select_operator({cand(4, {pref(P::Acceptable)})}, r));
}

TEST_CASE("run: goal already true gives one decision cycle") {
  const char* src = "sp {goal (state <s> ^done yes) --> (write |done|) (halt)}";
  auto t = run(rules::parse_ruleset(src), {{"done", std::string("yes")}}, {}, {});
  CHECK(t.outcome == Outcome::GoalReached);
  CHECK(t.finalDecisionCycles == 1);
  CHECK(t.output == "done");
}

TEST_CASE("run: counting to three") {
  const char* src = R"(
sp {propose*count (state <s> ^count <c> < 3) --> (<s> ^operator <o> + =) (<o> ^name count)}
sp {apply*count (state <s> ^operator <o> ^count <c>) (<o> ^name count) --> (<s> ^count (+ <c> 1) <c> -)}
sp {done (state <s> ^count 3) --> (halt)}
)";
  auto goal = [](const Engine& e) { return e.values(e.top_state(), "count").at(0) == Symbol::integer(3); };
  auto t = run(rules::parse_ruleset(src), {{"count", 0}}, goal, {});
  CHECK(t.outcome == Outcome::GoalReached);
  CHECK(t.finalDecisionCycles == 4);  // initial state plus three applications
  int selected = 0;
  for (const auto& c : t.cycles)
    if (c.selectedId) ++selected;
  CHECK(selected == t.finalDecisionCycles - 1);
}

TEST_CASE("run: halt without the goal is an error") {
  auto goal = [](const Engine&) { return false; };
  auto t = run(rules::parse_ruleset("sp {h (state <s>) --> (halt)}"), {}, goal, {});
  CHECK(t.outcome == Outcome::RuntimeError);
}

TEST_CASE("run: impasses are terminal") {
  SUBCASE("tie") {
    auto t = run(rules::parse_ruleset("sp {p (state <s> ^x <x>) --> (<s> ^operator <o> +) (<o> ^name a ^x <x>)}"),
                 {{"x", 1}, {"x", 2}}, {}, {});
    CHECK(t.outcome == Outcome::ImpasseHalt);
    CHECK(*t.impasse == ImpasseKind::Tie);
    CHECK(t.finalDecisionCycles == 1);
  }
  SUBCASE("nothing proposed") {
    auto t = run(rules::RuleSet{}, {}, {}, {});
    CHECK(*t.impasse == ImpasseKind::NoChange);
  }
  SUBCASE("operator without an apply rule stalls") {
    auto t = run(rules::parse_ruleset("sp {p (state <s>) --> (<s> ^operator <o> +) (<o> ^name idle)}"), {}, {}, {});
    CHECK(t.outcome == Outcome::ImpasseHalt);
    CHECK(*t.impasse == ImpasseKind::NoChange);
    CHECK(t.finalDecisionCycles == 2);
  }
}

namespace {
const char* kFlipRules = R"(
sp {propose*flip (state <s> ^flag <f>) --> (<s> ^operator <o> + =) (<o> ^name flip)}
sp {apply*flip (state <s> ^operator <o> ^flag <f>) (<o> ^name flip) --> (<s> ^flag (- 1 <f>) <f> -)}
)";
}

TEST_CASE("run: cutoff is exact") {
  for (std::int64_t cutoff : {1, 2, 7, 1000}) {
    RunConfig cfg;
    cfg.cutoff = cutoff;
    cfg.traceDetail = TraceDetail::Summary;
    auto t = run(rules::parse_ruleset(kFlipRules), {{"flag", 0}}, {}, cfg);
    CHECK(t.outcome == Outcome::CutoffExceeded);
    CHECK(t.finalDecisionCycles == cutoff);
    CHECK(t.cycles.size() <= 31);
    CHECK(static_cast<std::int64_t>(t.cycles.size()) + t.elidedCycles == cutoff);
  }
}

TEST_CASE("run: identical inputs give identical traces") {
  const char* src = R"(
sp {propose (state <s> ^n <n> < 6) --> (<s> ^operator <a> + = ^operator <b> + =) (<a> ^name inc ^by 1) (<b> ^name inc ^by 2)}
sp {apply (state <s> ^operator <o> ^n <n>) (<o> ^name inc ^by <k>) --> (<s> ^n (+ <n> <k>) <n> -)}
sp {stop (state <s> ^n >= 6) --> (halt)}
)";
  auto rs = rules::parse_ruleset(src);
  RunConfig cfg;
  cfg.rngSeed = 77;
  auto a = run(rs, {{"n", 0}}, {}, cfg);
  auto b = run(rs, {{"n", 0}}, {}, cfg);
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.outcome == Outcome::GoalReached);
  CHECK(a.to_text().find("seed=77") != std::string::npos);

  bool differs = false;
  for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed) {
    cfg.rngSeed = seed;
    differs = run(rs, {{"n", 0}}, {}, cfg).to_text().substr(20) != a.to_text().substr(20);
  }
  CHECK(differs);
}

TEST_CASE("support audit holds across a random walk") {
  const char* src = R"(
sp {elab (state <s> ^n <n>) --> (<s> ^double (* <n> 2))}
sp {elab2 (state <s> ^double <d> > 4) --> (<s> ^big yes)}
sp {propose (state <s> ^n <n>) --> (<s> ^operator <a> + =) (<a> ^name step ^by 1)
                                  (<s> ^operator <b> + =) (<b> ^name step ^by -1)}
sp {apply (state <s> ^operator <o> ^n <n>) (<o> ^name step ^by <k>) --> (<s> ^n (+ <n> <k>) <n> -)}
)";
  Engine e(rules::parse_ruleset(src), RunConfig{1, 5, TraceDetail::Full});
  e.init_state({{"n", 0}});
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    e.elaborate();
    CHECK(e.audit().empty());
    auto cs = e.candidates();
    REQUIRE(cs.size() == 2);
    auto choice = select_operator(cs, rng);
    e.apply(std::get<Symbol>(choice));
    CHECK(e.audit().empty());
  }
}

TEST_CASE("selection override forces a path") {
  const char* src = R"(
sp {propose (state <s> ^n <n> < 3) --> (<s> ^operator <a> + ^operator <b> +) (<a> ^name inc ^by 1) (<b> ^name inc ^by 2)}
sp {apply (state <s> ^operator <o> ^n <n>) (<o> ^name inc ^by <k>) --> (<s> ^n (+ <n> <k>) <n> -)}
sp {stop (state <s> ^n >= 3) --> (halt)}
)";
  Engine e(rules::parse_ruleset(src));
  e.init_state({{"n", 0}});
  e.set_selection_override([](const Engine& eng, const std::vector<OperatorCandidate>& cs) -> std::optional<Symbol> {
    for (const auto& c : cs)
      if (eng.values(c.operatorId, "by").at(0) == Symbol::integer(1)) return c.operatorId;
    return std::nullopt;
  });
  auto t = e.run();
  CHECK(t.outcome == Outcome::GoalReached);
  CHECK(t.finalDecisionCycles == 4);
}

TEST_CASE("trace renderings carry the config") {
  RunConfig cfg;
  cfg.rngSeed = 5;
  cfg.cutoff = 3;
  auto t = run(rules::parse_ruleset(kFlipRules), {{"flag", 0}}, {}, cfg);
  auto text = t.to_text();
  CHECK(text.find("seed=5 cutoff=3") != std::string::npos);
  CHECK(text.find("outcome=cutoff-exceeded decision-cycles=3") != std::string::npos);
  CHECK(text.find("selected=O") != std::string::npos);
  auto j = t.to_json();
  CHECK(j["config"]["seed"] == 5);
  CHECK(j["cycles"].size() == t.cycles.size());
}

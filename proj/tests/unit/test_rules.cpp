#include <doctest.h>

#include <random>
#include <string>

#include "gensym/rules/extract.hpp"
#include "gensym/rules/parser.hpp"
#include "gensym/rules/render.hpp"

using namespace gensym::rules;

namespace {

const char* kProposeFill = R"(
sp {water-jug*propose*fill
   (state <s> ^name water-jug
              ^jug <j>)
   (<j> ^empty > 0)
-->
   (<s> ^operator <o> +=)
   (<o> ^name fill
        ^fill-jug <j>)}
)";

const char* kApplyFill = R"(
sp {water-jug*apply*fill
   (state <s> ^name water-jug
              ^operator <o>
              ^jug <j>)
   (<o> ^name fill
        ^fill-jug <j>)
   (<j> ^volume <volume>
        ^contents <contents>)
-->
   (<j> ^contents <volume>
                  <contents> -)}
)";

ParseError parse_error(const std::string& src) {
  try {
    parse_ruleset(src);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected a ParseError for: " << src);
  return ParseError("", 0, 0, "", {}, "");
}

}  // namespace

TEST_CASE("propose fill parses to two conditions and one operator make") {
  RuleSet rs = parse_ruleset(kProposeFill);
  REQUIRE(rs.productions.size() == 1);
  const Production& p = rs.productions[0];
  CHECK(p.name == "water-jug*propose*fill");
  REQUIRE(p.conditions.size() == 2);
  CHECK(p.conditions[0].state);
  CHECK(p.conditions[0].attributeTests.size() == 2);
  const auto& empty = p.conditions[1].attributeTests.at(0).values.at(0);
  CHECK(empty.kind == ValueTest::Kind::Relational);
  CHECK(*empty.relation == Relation::Greater);

  int operator_makes = 0;
  for (const auto& a : p.actions) {
    if (a.kind == Action::Kind::Make && a.attribute == "operator") {
      ++operator_makes;
      REQUIRE(a.preferences.size() == 2);
      CHECK(a.preferences[0].symbol == PreferenceSymbol::Acceptable);
      CHECK(a.preferences[1].symbol == PreferenceSymbol::Indifferent);
    }
  }
  CHECK(operator_makes == 1);
  CHECK(p.actions.size() == 3);
}

TEST_CASE("apply fill: trailing minus on a plain attribute is a remove") {
  RuleSet rs = parse_ruleset(kApplyFill);
  const Production& p = rs.productions.at(0);
  REQUIRE(p.actions.size() == 2);
  CHECK(p.actions[0].kind == Action::Kind::Make);
  CHECK(p.actions[1].kind == Action::Kind::Remove);
  CHECK(p.actions[1].value.variable.name == "contents");
}

TEST_CASE("empty and comment-only input yield no productions") {
  CHECK(parse_ruleset("").productions.empty());
  CHECK(parse_ruleset("   # nothing here\n\n").productions.empty());
}

TEST_CASE("unbound action variable is rejected") {
  auto e = parse_error("sp{bad (state <s>) --> (<t> ^x 1)}");
  CHECK(e.message().find("<t>") != std::string::npos);
  CHECK(e.line() == 1);
  CHECK(e.column() == 25);
}

TEST_CASE("variables created on the right-hand side are allowed") {
  auto rs = parse_ruleset("sp {mk (state <s>) --> (<s> ^thing <t>) (<t> ^x 1)}");
  CHECK(rs.productions.at(0).actions.size() == 2);
}

TEST_CASE("static errors") {
  SUBCASE("first condition must be a state test") {
    auto e = parse_error("sp {a (<s> ^x 1) --> (<s> ^y 1)}");
    CHECK(e.message().find("state") != std::string::npos);
  }
  SUBCASE("duplicate names") {
    auto e = parse_error("sp {a (state <s>) --> (<s> ^y 1)}\nsp {a (state <s>) --> (<s> ^y 2)}");
    CHECK(e.message().find("duplicate") != std::string::npos);
    CHECK(e.line() == 2);
  }
  SUBCASE("unbalanced braces") {
    auto e = parse_error("sp {a (state <s>) --> (<s> ^y 1)");
    CHECK(e.message().find("unbalanced") != std::string::npos);
  }
  SUBCASE("conjunctive value test") {
    auto e = parse_error("sp {a (state <s> ^x { <y> > 2 }) --> (<s> ^y 1)}");
    CHECK(e.message().find("conjunctive") != std::string::npos);
  }
  SUBCASE("attribute variable") {
    auto e = parse_error("sp {a (state <s> ^<attr> 1) --> (<s> ^y 1)}");
    CHECK(e.message().find("attribute variables") != std::string::npos);
  }
  SUBCASE("float constant") {
    auto e = parse_error("sp {a (state <s> ^x 1.5) --> (<s> ^y 1)}");
    CHECK(e.message().find("floating") != std::string::npos);
  }
  SUBCASE("unknown RHS function names itself") {
    auto e = parse_error("sp {a (state <s>) --> (<s> ^y (abs 1))}");
    CHECK(e.message().find("'abs'") != std::string::npos);
  }
  SUBCASE("preference on a non-operator attribute") {
    auto e = parse_error("sp {a (state <s>) --> (<s> ^y 1 >)}");
    CHECK(e.message().find("^operator") != std::string::npos);
  }
  SUBCASE("gp and impasse") {
    CHECK(parse_error("gp {a (state <s>) --> (<s> ^y 1)}").message().find("gp") != std::string::npos);
    CHECK(parse_error("sp {a (impasse <s>) --> (<s> ^y 1)}").message().find("impasse") != std::string::npos);
  }
  SUBCASE("missing arrow") {
    auto e = parse_error("sp {a (state <s>) (<s> ^y 1)}");
    CHECK(e.message().find("-->") != std::string::npos);
  }
}

TEST_CASE("error carries expected set and source context") {
  auto e = parse_error("sp {a\n  (state <s> ^x)\n  --> (<s> ^y 1 ^)\n}");
  CHECK(e.line() == 3);
  CHECK(e.context() == "  --> (<s> ^y 1 ^)");
  CHECK(!e.expected().empty());
  CHECK(e.describe().find("^") != std::string::npos);
}

TEST_CASE("preference symbols") {
  auto rs = parse_ruleset(R"(
sp {p (state <s> ^operator <a> + ^operator <b> +)
-->
   (<s> ^operator <a> > <b> ^operator <b> < ^operator <a> ! ^operator <b> ~ ^operator <a> - ^operator <b> >)})");
  const auto& acts = rs.productions.at(0).actions;
  REQUIRE(acts.size() == 6);
  CHECK(acts[0].preferences.at(0).symbol == PreferenceSymbol::Better);
  CHECK(acts[0].preferences.at(0).referent->variable.name == "b");
  CHECK(acts[1].preferences.at(0).symbol == PreferenceSymbol::Worst);
  CHECK(acts[2].preferences.at(0).symbol == PreferenceSymbol::Require);
  CHECK(acts[3].preferences.at(0).symbol == PreferenceSymbol::Prohibit);
  CHECK(acts[4].preferences.at(0).symbol == PreferenceSymbol::Reject);
  CHECK(acts[4].kind == Action::Kind::Make);
  CHECK(acts[5].preferences.at(0).symbol == PreferenceSymbol::Best);
  const auto& c = rs.productions[0].conditions[0];
  CHECK(c.attributeTests[0].values[0].acceptable);
}

TEST_CASE("value tests") {
  auto rs = parse_ruleset(R"(sp {v (state <s> ^a << x y 3 >> ^b <> <c> ^c <c> ^d <= 4 ^e |hi there| ^f -2) --> (<s> ^z 1)})");
  const auto& ats = rs.productions[0].conditions[0].attributeTests;
  CHECK(ats[0].values[0].kind == ValueTest::Kind::Disjunction);
  CHECK(ats[0].values[0].alternatives.size() == 3);
  CHECK(ats[1].values[0].kind == ValueTest::Kind::Negation);
  CHECK(*ats[3].values[0].relation == Relation::LessEqual);
  CHECK(std::get<Constant>(ats[4].values[0].operand).kind == Constant::Kind::String);
  CHECK(std::get<Constant>(ats[5].values[0].operand).integer == -2);
}

TEST_CASE("dot notation desugars to chained conditions") {
  auto dotted = parse_ruleset("sp {d (state <s> ^desired.contents <g>) --> (<s> ^goal <g>)}");
  auto chained = parse_ruleset("sp {d (state <s> ^desired <_d1>) (<_d1> ^contents <g>) --> (<s> ^goal <g>)}");
  CHECK(dotted == chained);

  SUBCASE("fresh names avoid user variables") {
    auto a = parse_ruleset("sp {d (state <s> ^a.b <_d1>) --> (<s> ^goal <_d1>)}");
    auto b = parse_ruleset("sp {d (state <s> ^a <_d2>) (<_d2> ^b <_d1>) --> (<s> ^goal <_d1>)}");
    CHECK(a == b);
  }
  SUBCASE("negated dot path becomes a negated conjunction") {
    auto a = parse_ruleset("sp {d (state <s> -^a.b 1) --> (<s> ^goal 1)}");
    auto b = parse_ruleset("sp {d (state <s>) -{ (<s> ^a <_d1>) (<_d1> ^b 1) } --> (<s> ^goal 1)}");
    CHECK(a == b);
  }
  SUBCASE("negated attribute test splits off") {
    auto a = parse_ruleset("sp {d (state <s> ^x 1 -^y) --> (<s> ^goal 1)}");
    auto b = parse_ruleset("sp {d (state <s> ^x 1) -(<s> ^y) --> (<s> ^goal 1)}");
    CHECK(a == b);
  }
}

TEST_CASE("arithmetic and write") {
  auto rs = parse_ruleset("sp {w (state <s> ^a <a> ^b <b>) --> (<s> ^c (- <a> (* <b> 2))) (write |a=| <a> (crlf)) (halt)}");
  const auto& acts = rs.productions[0].actions;
  REQUIRE(acts.size() == 3);
  CHECK(acts[0].value.kind == RhsValue::Kind::Arithmetic);
  CHECK(acts[0].value.operands[1].op == '*');
  CHECK(acts[1].function == "write");
  CHECK(acts[1].arguments.size() == 3);
  CHECK(acts[2].function == "halt");
  CHECK_THROWS_AS(parse_ruleset("sp {w (state <s>) --> (<s> ^c (+ 1))}"), ParseError);
}

TEST_CASE("render round-trips") {
  const std::string src = std::string(kProposeFill) + kApplyFill + R"(
sp {misc "doc \"quoted\""
   (state <s> ^operator <o> + ^a.b << x 2 >> -^c <> 3)
   -{ (<s> ^v <v>) (<v> ^w |a\|b|) }
-->
   (<s> ^operator <o> > <o> = ^q (+ 1 <o>))
   (write |x| (crlf))
   (<s> ^r 1 -)
   (halt)})";
  RuleSet a = parse_ruleset(src);
  RuleSet b = parse_ruleset(render(a));
  CHECK(a == b);
  CHECK(render(a) == render(b));
}

TEST_CASE("fuzz: random noise never crashes the parser") {
  std::mt19937_64 rng(0xC0FFEE);
  const std::string alphabet = "sp{}()<>^-+=!~.|\"#\n\t abc019<s><o>state-->";
  for (int round = 0; round < 400; ++round) {
    std::size_t len = rng() % (round < 390 ? 512 : 65536);
    std::string s;
    s.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      if (rng() % 4 == 0) s.push_back(static_cast<char>(rng() % 256));
      else s.push_back(alphabet[rng() % alphabet.size()]);
    }
    try {
      parse_ruleset(s);
    } catch (const ParseError&) {
    }
  }
  std::string deep(40000, '(');
  CHECK_THROWS_AS(parse_ruleset("sp {x (state <s>) --> (<s> ^a " + deep + ")}"), ParseError);
  std::string negs;
  for (int i = 0; i < 5000; ++i) negs += "-{";
  CHECK_THROWS_AS(parse_ruleset("sp {x (state <s>) " + negs + "}"), ParseError);
}

TEST_CASE("extract productions from model output") {
  SUBCASE("fenced blocks") {
    std::string text = "Here are the rules:\n```soar\n" + std::string(kProposeFill) + "```\nand\n```\n" + kApplyFill + "```\n";
    auto rs = extract_productions(text);
    CHECK(rs.productions.size() == 2);
  }
  SUBCASE("unfenced text") {
    std::string text = std::string("Rules follow.\n") + kProposeFill + "\nThat is all {really}.";
    CHECK(extract_productions(text).productions.size() == 1);
  }
  SUBCASE("non-rule fences are skipped") {
    std::string text = "```json\n{\"a\": 1}\n```\n```\n" + std::string(kApplyFill) + "```";
    CHECK(extract_productions(text).productions.size() == 1);
  }
  SUBCASE("errors cite the block") {
    std::string text = "```\nsp {ok (state <s>) --> (<s> ^a 1)}\n```\n\n```\n\nsp {bad (state <s>) --> (<t> ^x 1)}\n```";
    try {
      extract_productions(text);
      FAIL("expected error");
    } catch (const ParseError& e) {
      CHECK(e.message().find("code block 2") != std::string::npos);
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("nothing found") {
    CHECK_THROWS_WITH_AS(extract_productions("no rules today"), doctest::Contains("no productions found"), ParseError);
  }
}

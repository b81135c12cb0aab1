#include "gensym/kernel/engine.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gensym::kernel {

using rules::PreferenceSymbol;
using rules::Relation;
using rules::ValueTest;

namespace {

constexpr int kMaxPasses = 10000;
constexpr std::size_t kSummaryHead = 10;
constexpr std::size_t kSummaryTail = 20;

using Bindings = std::vector<Symbol>;

struct Operand {
  int slot = -1;  // variable slot, or -1 for a constant
  Symbol constant;
};

struct CompiledTest {
  ValueTest::Kind kind = ValueTest::Kind::Constant;
  Relation relation = Relation::Equal;
  Operand operand;
  std::vector<Symbol> alternatives;
};

struct Pattern {
  Operand id;
  bool stateId = false;
  bool bindOnly = false;  // `(state <s>)` with no attribute tests
  Symbol attr;
  std::optional<CompiledTest> test;
  bool acceptable = false;
};

struct Group {
  std::vector<Pattern> patterns;
  std::vector<Group> negations;
};

struct CompiledValue {
  rules::RhsValue::Kind kind = rules::RhsValue::Kind::Constant;
  Symbol constant;
  int slot = -1;
  char op = 0;
  std::vector<CompiledValue> operands;
};

struct CompiledPreference {
  PreferenceSymbol symbol = PreferenceSymbol::Acceptable;
  std::optional<CompiledValue> referent;
};

struct CompiledAction {
  rules::Action::Kind kind = rules::Action::Kind::Make;
  int idSlot = -1;
  Symbol attr;
  CompiledValue value;
  std::vector<CompiledPreference> preferences;
  std::string function;
  std::vector<CompiledValue> arguments;
};

struct CompiledProduction {
  std::string name;
  Group lhs;
  std::vector<std::string> slotNames;
  std::map<std::string, int> slots;
  int lhsSlots = 0;  // slots >= lhsSlots are created on the right-hand side
  std::vector<CompiledAction> actions;
  bool oSupport = false;
  std::set<Symbol> attrs;
};

struct Match {
  std::vector<std::uint64_t> key;
  Bindings bindings;
};

struct Instantiation {
  int production = 0;
  std::vector<std::uint64_t> key;
  Bindings bindings;
  bool oSupport = false;
  std::vector<std::uint64_t> justified;  // i-support only
  std::vector<std::uint64_t> prefs;
};

struct PrefEntry {
  Symbol id;
  Symbol op;
  PreferenceSymbol symbol = PreferenceSymbol::Acceptable;
  std::optional<Symbol> referent;
  std::uint64_t inst = 0;
};

struct RawPhase {
  std::vector<std::pair<int, Bindings>> fired;
  std::vector<std::pair<bool, Wme>> deltas;
  std::string output;
  bool halted = false;
};

struct RawProposal {
  Symbol op;
  Symbol name;
  std::vector<CandidatePreference> prefs;
};

struct RawCycle {
  std::int64_t number = 0;
  std::vector<std::pair<int, Bindings>> fired;
  std::vector<RawProposal> proposals;
  std::optional<Symbol> selected;
  Symbol selectedName;
  std::vector<std::pair<bool, Wme>> deltas;
  std::optional<ImpasseKind> impasse;
  std::string output;

  void absorb(RawPhase&& p) {
    for (auto& f : p.fired) fired.push_back(std::move(f));
    for (auto& d : p.deltas) deltas.push_back(d);
    output += p.output;
  }
};

// ------------------------------------------------------------------ compiler

class Compiler {
 public:
  Compiler(SymbolTable& st, Symbol operatorAttr) : st_(st), operator_(operatorAttr) {}

  CompiledProduction compile(const rules::Production& p) {
    CompiledProduction cp;
    cp.name = p.name;
    for (const auto& c : p.conditions) add_condition(cp, cp.lhs, c);
    cp.lhsSlots = static_cast<int>(cp.slotNames.size());
    std::vector<char> bound(cp.slotNames.size(), 0);
    order(cp.lhs, bound);
    for (const auto& pat : cp.lhs.patterns)
      if (!pat.bindOnly && pat.attr == operator_ && !pat.acceptable) cp.oSupport = true;
    for (const auto& a : p.actions) cp.actions.push_back(action(cp, a));
    return cp;
  }

 private:
  int slot(CompiledProduction& cp, const std::string& name) {
    auto [it, inserted] = cp.slots.emplace(name, static_cast<int>(cp.slotNames.size()));
    if (inserted) cp.slotNames.push_back(name);
    return it->second;
  }

  Symbol constant(const rules::Constant& c) {
    if (c.kind == rules::Constant::Kind::Integer) return Symbol::integer(c.integer);
    return st_.intern(c.text);
  }

  Operand operand(CompiledProduction& cp, const rules::Term& t) {
    Operand o;
    if (const auto* v = std::get_if<rules::Variable>(&t)) o.slot = slot(cp, v->name);
    else o.constant = constant(std::get<rules::Constant>(t));
    return o;
  }

  void add_condition(CompiledProduction& cp, Group& g, const rules::Condition& c) {
    using P = rules::Condition::Polarity;
    if (c.polarity == P::NegatedConjunction) {
      Group neg;
      for (const auto& in : c.inner) add_condition(cp, neg, in);
      g.negations.push_back(std::move(neg));
      return;
    }
    Group* target = &g;
    Group neg;
    if (c.polarity == P::Negated) target = &neg;
    Operand id = operand(cp, c.idTest);
    if (c.attributeTests.empty()) {
      Pattern pat;
      pat.id = id;
      pat.stateId = c.state;
      pat.bindOnly = true;
      target->patterns.push_back(pat);
    }
    for (const auto& at : c.attributeTests) {
      Symbol attr = st_.intern(at.attribute);
      cp.attrs.insert(attr);
      auto base = [&] {
        Pattern pat;
        pat.id = id;
        pat.stateId = c.state;
        pat.attr = attr;
        return pat;
      };
      if (at.values.empty()) target->patterns.push_back(base());
      for (const auto& vt : at.values) {
        Pattern pat = base();
        CompiledTest t;
        t.kind = vt.kind;
        if (vt.relation) t.relation = *vt.relation;
        if (vt.kind == ValueTest::Kind::Negation) t.relation = Relation::NotEqual;
        if (vt.kind != ValueTest::Kind::Disjunction) t.operand = operand(cp, vt.operand);
        for (const auto& a : vt.alternatives) t.alternatives.push_back(constant(a));
        pat.test = std::move(t);
        pat.acceptable = vt.acceptable;
        target->patterns.push_back(std::move(pat));
      }
    }
    if (c.polarity == P::Negated) g.negations.push_back(std::move(neg));
  }

  // Greedy join order: prefer patterns whose identifier is already bound and
  // whose relational operands are available.
  static void order(Group& g, std::vector<char>& bound) {
    auto is_bound = [&](const Operand& o) { return o.slot < 0 || bound[o.slot]; };
    auto operands_ready = [&](const Pattern& p) {
      if (!p.test) return true;
      bool relational = p.test->kind == ValueTest::Kind::Relational || p.test->kind == ValueTest::Kind::Negation;
      return !relational || is_bound(p.test->operand);
    };
    std::vector<Pattern> rest = std::move(g.patterns);
    g.patterns.clear();
    while (!rest.empty()) {
      std::size_t pick = rest.size();
      for (std::size_t i = 0; i < rest.size() && pick == rest.size(); ++i)
        if ((is_bound(rest[i].id) || rest[i].stateId) && operands_ready(rest[i])) pick = i;
      for (std::size_t i = 0; i < rest.size() && pick == rest.size(); ++i)
        if (operands_ready(rest[i])) pick = i;
      if (pick == rest.size()) pick = 0;
      Pattern p = std::move(rest[pick]);
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
      if (p.id.slot >= 0) bound[p.id.slot] = 1;
      if (p.test && p.test->kind == ValueTest::Kind::Variable) bound[p.test->operand.slot] = 1;
      g.patterns.push_back(std::move(p));
    }
    for (auto& n : g.negations) {
      std::vector<char> local = bound;
      order(n, local);
    }
  }

  CompiledValue value(CompiledProduction& cp, const rules::RhsValue& v) {
    CompiledValue out;
    out.kind = v.kind;
    switch (v.kind) {
      case rules::RhsValue::Kind::Constant: out.constant = constant(v.constant); break;
      case rules::RhsValue::Kind::Variable: out.slot = slot(cp, v.variable.name); break;
      case rules::RhsValue::Kind::Arithmetic:
        out.op = v.op;
        for (const auto& o : v.operands) out.operands.push_back(value(cp, o));
        break;
      case rules::RhsValue::Kind::Crlf: break;
    }
    return out;
  }

  CompiledAction action(CompiledProduction& cp, const rules::Action& a) {
    CompiledAction out;
    out.kind = a.kind;
    if (a.kind == rules::Action::Kind::FunctionCall) {
      out.function = a.function;
      for (const auto& arg : a.arguments) out.arguments.push_back(value(cp, arg));
      return out;
    }
    out.idSlot = slot(cp, a.idVariable.name);
    out.attr = st_.intern(a.attribute);
    out.value = value(cp, a.value);
    for (const auto& p : a.preferences) {
      CompiledPreference cpf;
      cpf.symbol = p.symbol;
      if (p.referent) cpf.referent = value(cp, *p.referent);
      out.preferences.push_back(std::move(cpf));
    }
    return out;
  }

  SymbolTable& st_;
  Symbol operator_;
};

bool compare(Relation r, Symbol v, Symbol o) {
  switch (r) {
    case Relation::Equal: return v == o;
    case Relation::NotEqual: return v != o;
    default: break;
  }
  if (!v.is_integer() || !o.is_integer()) return false;
  switch (r) {
    case Relation::Less: return v.value < o.value;
    case Relation::Greater: return v.value > o.value;
    case Relation::LessEqual: return v.value <= o.value;
    case Relation::GreaterEqual: return v.value >= o.value;
    default: return false;
  }
}

}  // namespace

// --------------------------------------------------------------------- Impl

struct Engine::Impl {
  RunConfig config;
  SymbolTable symbols;
  WorkingMemory wm;
  Rng rng;
  std::vector<CompiledProduction> prods;
  std::unordered_map<Symbol, std::vector<int>, SymbolHash> prodsByAttr;
  Symbol top;
  std::vector<Symbol> states;
  Symbol aOperator, aName;

  std::map<std::uint64_t, Instantiation> insts;
  std::uint64_t nextInst = 1;
  std::vector<std::map<std::vector<std::uint64_t>, std::uint64_t>> live;
  std::map<std::uint64_t, PrefEntry> prefs;
  std::uint64_t nextPref = 1;
  std::map<std::pair<Symbol, Symbol>, int> acceptableCount;

  std::optional<Symbol> selected;
  std::vector<char> dirty;
  std::set<Symbol> changed;
  SelectionOverride override_;

  Impl(const rules::RuleSet& rs, RunConfig cfg) : config(cfg), rng(cfg.rngSeed) {
    aOperator = symbols.intern("operator");
    aName = symbols.intern("name");
    top = symbols.new_identifier('S');
    states.push_back(top);
    auto arch = [&](std::string_view attr, std::string_view value) {
      auto [tt, created] = wm.add(top, symbols.intern(attr), symbols.intern(value), false);
      wm.get(tt)->architectural = true;
    };
    arch("superstate", "nil");
    arch("type", "state");

    Compiler compiler(symbols, aOperator);
    for (const auto& p : rs.productions) prods.push_back(compiler.compile(p));
    for (std::size_t i = 0; i < prods.size(); ++i)
      for (Symbol a : prods[i].attrs) prodsByAttr[a].push_back(static_cast<int>(i));
    live.resize(prods.size());
    dirty.assign(prods.size(), 1);
  }

  // ------------------------------------------------------------- matching

  bool is_state(Symbol s) const { return std::find(states.begin(), states.end(), s) != states.end(); }

  static Symbol resolve(const Operand& o, const Bindings& b) { return o.slot < 0 ? o.constant : b[o.slot]; }

  template <typename F>
  bool step(const Group& g, std::size_t i, Bindings& b, std::vector<std::uint64_t>& key, F& emit) const {
    if (i == g.patterns.size()) {
      for (const auto& n : g.negations)
        if (exists(n, b)) return false;
      return emit();
    }
    const Pattern& p = g.patterns[i];
    Symbol idv = resolve(p.id, b);

    if (p.bindOnly) {
      if (!idv.is_none()) {
        if (p.stateId && !is_state(idv)) return false;
        return step(g, i + 1, b, key, emit);
      }
      if (!p.stateId) return false;
      for (Symbol s : states) {
        b[p.id.slot] = s;
        bool stop = step(g, i + 1, b, key, emit);
        b[p.id.slot] = Symbol{};
        if (stop) return true;
      }
      return false;
    }

    auto try_bucket = [&](const std::set<std::uint64_t>& bucket) -> bool {
      for (std::uint64_t tt : bucket) {
        const Wme& w = wm.get(tt)->wme;
        if (w.acceptable != p.acceptable) continue;
        int boundId = -1, boundVal = -1;
        if (idv.is_none()) {
          if (p.stateId && !is_state(w.id)) continue;
          b[p.id.slot] = w.id;
          boundId = p.id.slot;
        }
        bool ok = true;
        if (p.test) {
          const CompiledTest& t = *p.test;
          switch (t.kind) {
            case ValueTest::Kind::Constant: ok = w.value == t.operand.constant; break;
            case ValueTest::Kind::Variable:
              if (b[t.operand.slot].is_none()) {
                b[t.operand.slot] = w.value;
                boundVal = t.operand.slot;
              } else {
                ok = b[t.operand.slot] == w.value;
              }
              break;
            case ValueTest::Kind::Relational:
            case ValueTest::Kind::Negation: {
              Symbol o = resolve(t.operand, b);
              ok = !o.is_none() && compare(t.relation, w.value, o);
              break;
            }
            case ValueTest::Kind::Disjunction:
              ok = std::find(t.alternatives.begin(), t.alternatives.end(), w.value) != t.alternatives.end();
              break;
          }
        }
        bool stop = false;
        if (ok) {
          key.push_back(tt);
          stop = step(g, i + 1, b, key, emit);
          key.pop_back();
        }
        if (boundVal >= 0) b[boundVal] = Symbol{};
        if (boundId >= 0) b[boundId] = Symbol{};
        if (stop) return true;
      }
      return false;
    };

    if (!idv.is_none()) return try_bucket(wm.bucket(idv, p.attr));
    if (p.stateId) {
      for (Symbol s : states)
        if (try_bucket(wm.bucket(s, p.attr))) return true;
      return false;
    }
    return try_bucket(wm.bucket(p.attr));
  }

  bool exists(const Group& g, Bindings& b) const {
    std::vector<std::uint64_t> key;
    auto emit = [] { return true; };
    return step(g, 0, b, key, emit);
  }

  std::vector<Match> match(int p) const {
    const CompiledProduction& cp = prods[p];
    std::vector<Match> out;
    Bindings b(cp.slotNames.size());
    std::vector<std::uint64_t> key;
    auto emit = [&] {
      out.push_back({key, b});
      return false;
    };
    step(cp.lhs, 0, b, key, emit);
    return out;
  }

  // ------------------------------------------------------------ WM changes

  std::uint64_t wm_add(Symbol id, Symbol attr, Symbol value, bool acceptable, RawPhase& ph) {
    auto [tt, created] = wm.add(id, attr, value, acceptable);
    if (created) {
      ph.deltas.push_back({true, wm.get(tt)->wme});
      changed.insert(attr);
    }
    return tt;
  }

  void wm_remove(std::uint64_t tt, RawPhase& ph) {
    const auto* e = wm.get(tt);
    if (!e) return;
    ph.deltas.push_back({false, e->wme});
    changed.insert(e->wme.attribute);
    wm.remove(tt);
  }

  void mark_dirty() {
    for (Symbol a : changed) {
      auto it = prodsByAttr.find(a);
      if (it == prodsByAttr.end()) continue;
      for (int p : it->second) dirty[p] = 1;
    }
    changed.clear();
  }

  void remove_pref(std::uint64_t pid, RawPhase& ph) {
    auto it = prefs.find(pid);
    if (it == prefs.end()) return;
    const PrefEntry& pe = it->second;
    if (pe.symbol == PreferenceSymbol::Acceptable) {
      int& n = acceptableCount[{pe.id, pe.op}];
      if (--n == 0) {
        acceptableCount.erase({pe.id, pe.op});
        if (auto tt = wm.find(pe.id, aOperator, pe.op, true)) wm_remove(*tt, ph);
      }
    }
    prefs.erase(it);
  }

  void retract(std::uint64_t instId, RawPhase& ph) {
    auto it = insts.find(instId);
    if (it == insts.end()) return;
    Instantiation& inst = it->second;
    for (std::uint64_t tt : inst.justified) {
      auto* e = wm.get(tt);
      if (!e || e->justifications == 0) continue;
      if (--e->justifications == 0 && !e->oSupport && !e->architectural) wm_remove(tt, ph);
    }
    for (std::uint64_t pid : inst.prefs) remove_pref(pid, ph);
    live[inst.production].erase(inst.key);
    insts.erase(it);
  }

  // ---------------------------------------------------------------- firing

  struct MakeRec {
    Symbol id, attr, value;
    std::uint64_t inst;
  };
  struct PrefRec {
    PrefEntry entry;
  };
  struct RemoveRec {
    Symbol id, attr, value;
  };
  struct Effects {
    std::vector<PrefRec> prefs;
    std::vector<MakeRec> makes;
    std::vector<RemoveRec> removes;
  };

  [[noreturn]] void fail(const std::string& msg, const CompiledProduction& cp) const {
    throw RuntimeError(msg + " in rule '" + cp.name + "'", cp.name);
  }

  Symbol eval(const CompiledValue& v, const Bindings& b, const CompiledProduction& cp) {
    switch (v.kind) {
      case rules::RhsValue::Kind::Constant: return v.constant;
      case rules::RhsValue::Kind::Variable: return b[v.slot];
      case rules::RhsValue::Kind::Crlf: return symbols.intern("\n");
      case rules::RhsValue::Kind::Arithmetic: break;
    }
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < v.operands.size(); ++i) {
      Symbol s = eval(v.operands[i], b, cp);
      if (!s.is_integer()) fail(std::string("non-numeric operand ") + symbols.to_string(s) + " to '" + v.op + "'", cp);
      std::int64_t x = s.value;
      if (i == 0) {
        acc = x;
        continue;
      }
      bool overflow = false;
      switch (v.op) {
        case '+': overflow = __builtin_add_overflow(acc, x, &acc); break;
        case '-': overflow = __builtin_sub_overflow(acc, x, &acc); break;
        case '*': overflow = __builtin_mul_overflow(acc, x, &acc); break;
        case '/':
          if (x == 0) fail("division by zero", cp);
          if (acc % x != 0) fail("non-integer division " + std::to_string(acc) + " / " + std::to_string(x), cp);
          if (acc == INT64_MIN && x == -1) overflow = true;
          else acc /= x;
          break;
        default: fail(std::string("unknown operator '") + v.op + "'", cp);
      }
      if (overflow) fail("integer overflow in arithmetic", cp);
    }
    return Symbol::integer(acc);
  }

  std::string text_of(Symbol s) const {
    if (s.kind == Symbol::Kind::String) return symbols.text(s);
    return symbols.to_string(s);
  }

  void execute(std::uint64_t instId, Effects& fx, RawPhase& ph) {
    Instantiation& inst = insts.at(instId);
    const CompiledProduction& cp = prods[inst.production];
    Bindings b = inst.bindings;
    b.resize(cp.slotNames.size());
    for (std::size_t s = static_cast<std::size_t>(cp.lhsSlots); s < b.size(); ++s) {
      const std::string& name = cp.slotNames[s];
      char letter = 'I';
      for (char c : name)
        if (std::isalpha(static_cast<unsigned char>(c))) {
          letter = c;
          break;
        }
      b[s] = symbols.new_identifier(letter);
    }
    for (const auto& a : cp.actions) {
      if (a.kind == rules::Action::Kind::FunctionCall) {
        if (a.function == "halt") ph.halted = true;
        else if (a.function == "crlf") ph.output += "\n";
        else if (a.function == "write")
          for (const auto& arg : a.arguments) ph.output += text_of(eval(arg, b, cp));
        continue;
      }
      Symbol id = b[a.idSlot];
      if (!id.is_identifier()) fail("cannot add or remove attributes of non-identifier " + symbols.to_string(id), cp);
      Symbol value = eval(a.value, b, cp);
      if (a.kind == rules::Action::Kind::Remove) {
        fx.removes.push_back({id, a.attr, value});
        continue;
      }
      if (a.attr == aOperator) {
        if (!value.is_identifier()) fail("operator value must be an identifier", cp);
        if (a.preferences.empty()) {
          fx.prefs.push_back({PrefEntry{id, value, PreferenceSymbol::Acceptable, std::nullopt, instId}});
        }
        for (const auto& p : a.preferences) {
          PrefEntry pe{id, value, p.symbol, std::nullopt, instId};
          if (p.referent) pe.referent = eval(*p.referent, b, cp);
          fx.prefs.push_back({pe});
        }
        continue;
      }
      fx.makes.push_back({id, a.attr, value, instId});
    }
  }

  void fire(std::vector<std::pair<int, Match>>& fresh, RawPhase& ph) {
    std::vector<std::uint64_t> ids;
    for (auto& [p, m] : fresh) {
      std::uint64_t id = nextInst++;
      Instantiation inst;
      inst.production = p;
      inst.key = m.key;
      inst.bindings = std::move(m.bindings);
      inst.oSupport = prods[p].oSupport;
      live[p][inst.key] = id;
      ph.fired.push_back({p, inst.bindings});
      insts.emplace(id, std::move(inst));
      ids.push_back(id);
    }
    Effects fx;
    for (std::uint64_t id : ids) execute(id, fx, ph);

    for (auto& pr : fx.prefs) {
      std::uint64_t pid = nextPref++;
      const PrefEntry& pe = pr.entry;
      prefs.emplace(pid, pe);
      insts.at(pe.inst).prefs.push_back(pid);
      if (pe.symbol == PreferenceSymbol::Acceptable && acceptableCount[{pe.id, pe.op}]++ == 0) {
        std::uint64_t tt = wm_add(pe.id, aOperator, pe.op, true, ph);
        wm.get(tt)->architectural = true;
      }
    }
    for (const auto& mk : fx.makes) {
      Instantiation& inst = insts.at(mk.inst);
      std::uint64_t tt = wm_add(mk.id, mk.attr, mk.value, false, ph);
      auto* e = wm.get(tt);
      if (inst.oSupport) {
        e->oSupport = true;
      } else {
        ++e->justifications;
        inst.justified.push_back(tt);
      }
    }
    for (const auto& rm : fx.removes) {
      auto tt = wm.find(rm.id, rm.attr, rm.value, false);
      if (!tt) continue;
      const auto* e = wm.get(*tt);
      // Only persistent elements can be removed; i-supported ones follow their rules.
      if (e->oSupport && !e->architectural) wm_remove(*tt, ph);
    }
  }

  // ----------------------------------------------------------------- phases

  void check_selected(RawPhase& ph) {
    if (!selected) return;
    auto it = acceptableCount.find({top, *selected});
    if (it != acceptableCount.end() && it->second > 0) return;
    if (auto tt = wm.find(top, aOperator, *selected, false)) wm_remove(*tt, ph);
  }

  void phase(bool application, RawPhase& ph) {
    for (int pass = 0;; ++pass) {
      if (pass >= kMaxPasses)
        throw RuntimeError(std::string(application ? "operator application" : "elaboration") +
                               " did not reach quiescence within " + std::to_string(kMaxPasses) + " passes",
                           "");
      std::vector<std::uint64_t> vanished;
      std::vector<std::pair<int, Match>> fresh;
      std::vector<int> freshProds;
      for (int p = 0; p < static_cast<int>(prods.size()); ++p) {
        if (!dirty[p]) continue;
        dirty[p] = 0;
        std::vector<Match> ms = match(p);
        std::set<std::vector<std::uint64_t>> keys;
        bool any_new = false;
        for (auto& m : ms) {
          keys.insert(m.key);
          if (!live[p].count(m.key)) {
            fresh.push_back({p, std::move(m)});
            any_new = true;
          }
        }
        if (any_new) freshProds.push_back(p);
        for (const auto& [k, id] : live[p])
          if (!keys.count(k)) vanished.push_back(id);
      }
      if (!vanished.empty()) {
        // Retractions settle before anything new fires.
        for (std::uint64_t id : vanished) retract(id, ph);
        for (int p : freshProds) dirty[p] = 1;
        if (application) check_selected(ph);
        mark_dirty();
        continue;
      }
      if (fresh.empty()) break;
      fire(fresh, ph);
      if (application) check_selected(ph);
      mark_dirty();
      if (ph.halted) break;
    }
  }

  std::vector<OperatorCandidate> candidates() const {
    std::map<Symbol, OperatorCandidate> byOp;
    for (const auto& [pid, pe] : prefs) {
      if (pe.id != top) continue;
      auto& c = byOp[pe.op];
      c.operatorId = pe.op;
      c.preferences.push_back({pe.symbol, pe.referent});
    }
    std::vector<OperatorCandidate> out;
    for (auto& [op, c] : byOp) {
      bool acceptable = std::any_of(c.preferences.begin(), c.preferences.end(),
                                    [](const auto& p) { return p.symbol == PreferenceSymbol::Acceptable; });
      if (acceptable) out.push_back(std::move(c));
    }
    return out;
  }

  Symbol name_of(Symbol op) const {
    auto vs = wm.values(op, aName);
    return vs.empty() ? Symbol{} : vs.front();
  }

  PhaseResult to_phase_result(const RawPhase& raw) const {
    PhaseResult r;
    for (const auto& [p, b] : raw.fired) r.fired.push_back({prods[p].name, bindings_text(p, b)});
    for (const auto& [add, w] : raw.deltas) r.deltas.push_back({add, wme_text(w)});
    r.halted = raw.halted;
    r.output = raw.output;
    return r;
  }

  std::string bindings_text(int p, const Bindings& b) const {
    std::string out;
    const auto& names = prods[p].slotNames;
    for (std::size_t i = 0; i < b.size() && i < names.size(); ++i) {
      if (b[i].is_none()) continue;
      if (!out.empty()) out += " ";
      out += "<" + names[i] + ">=" + symbols.to_string(b[i]);
    }
    return out;
  }

  std::string wme_text(const Wme& w) const {
    std::string s = "(" + symbols.to_string(w.id) + " ^" + symbols.to_string(w.attribute) + " " +
                    symbols.to_string(w.value);
    if (w.acceptable) s += " +";
    return s + ")";
  }

  static std::string pref_text(const CandidatePreference& p, const SymbolTable& st) {
    std::string s;
    switch (p.symbol) {
      case PreferenceSymbol::Acceptable: s = "+"; break;
      case PreferenceSymbol::Reject: s = "-"; break;
      case PreferenceSymbol::Require: s = "!"; break;
      case PreferenceSymbol::Prohibit: s = "~"; break;
      case PreferenceSymbol::Best:
      case PreferenceSymbol::Better: s = ">"; break;
      case PreferenceSymbol::Worst:
      case PreferenceSymbol::Worse: s = "<"; break;
      case PreferenceSymbol::Indifferent: s = "="; break;
    }
    if (p.referent) s += st.to_string(*p.referent);
    return s;
  }

  CycleRecord to_record(const RawCycle& c) const {
    CycleRecord r;
    r.cycleNumber = c.number;
    for (const auto& [p, b] : c.fired) r.firedRules.push_back({prods[p].name, bindings_text(p, b)});
    for (const auto& prop : c.proposals) {
      ProposalView v;
      v.operatorId = symbols.to_string(prop.op);
      v.operatorName = prop.name.is_none() ? "" : text_of(prop.name);
      for (const auto& p : prop.prefs) v.preferences.push_back(pref_text(p, symbols));
      r.proposals.push_back(std::move(v));
    }
    if (c.selected) {
      r.selectedId = symbols.to_string(*c.selected);
      r.selectedName = c.selectedName.is_none() ? "" : text_of(c.selectedName);
    }
    for (const auto& [add, w] : c.deltas) r.wmDeltas.push_back({add, wme_text(w)});
    r.impasse = c.impasse;
    r.output = c.output;
    return r;
  }

  // -------------------------------------------------------------------- run

  DecisionTrace run(const GoalPredicate& goal, const Engine& self) {
    DecisionTrace trace;
    trace.config = config;
    if (config.cutoff < 1) throw std::invalid_argument("cutoff must be at least 1");
    const bool full = config.traceDetail == TraceDetail::Full;
    std::vector<RawCycle> head;
    std::deque<RawCycle> tail;
    std::int64_t recorded = 0;
    auto push = [&](RawCycle&& c) {
      ++recorded;
      if (full || head.size() < kSummaryHead) {
        head.push_back(std::move(c));
        return;
      }
      tail.push_back(std::move(c));
      if (tail.size() > kSummaryTail) tail.pop_front();
    };

    std::int64_t counter = 1;
    bool lastApplicationChanged = true;
    RawCycle cyc;
    auto finish_halt = [&](std::int64_t dc) {
      trace.finalDecisionCycles = dc;
      if (goal && !goal(self)) {
        trace.outcome = Outcome::RuntimeError;
        trace.error = "halt executed but the goal test is not satisfied";
      } else {
        trace.outcome = Outcome::GoalReached;
      }
    };

    try {
      for (;;) {
        cyc = RawCycle{};
        cyc.number = counter;
        RawPhase el;
        phase(false, el);
        bool elaborationChanged = !el.deltas.empty();
        bool halted = el.halted;
        cyc.absorb(std::move(el));
        trace.output += cyc.output;
        if (halted) {
          finish_halt(counter);
          break;
        }
        if (!lastApplicationChanged && !elaborationChanged) {
          cyc.impasse = ImpasseKind::NoChange;
          trace.outcome = Outcome::ImpasseHalt;
          trace.impasse = ImpasseKind::NoChange;
          trace.finalDecisionCycles = counter;
          break;
        }
        if (counter >= config.cutoff) {
          trace.outcome = Outcome::CutoffExceeded;
          trace.finalDecisionCycles = config.cutoff;
          break;
        }

        auto cands = candidates();
        for (const auto& c : cands) cyc.proposals.push_back({c.operatorId, name_of(c.operatorId), c.preferences});
        std::optional<Symbol> forced;
        if (override_) forced = override_(self, cands);
        SelectionResult choice = forced ? SelectionResult(*forced) : select_operator(cands, rng);
        if (auto* imp = std::get_if<ImpasseKind>(&choice)) {
          cyc.impasse = *imp;
          trace.outcome = Outcome::ImpasseHalt;
          trace.impasse = *imp;
          trace.finalDecisionCycles = counter;
          break;
        }
        Symbol op = std::get<Symbol>(choice);
        cyc.selected = op;
        cyc.selectedName = name_of(op);

        RawPhase ap;
        std::size_t before = ap.deltas.size();
        apply_raw(op, ap);
        lastApplicationChanged = false;
        for (std::size_t i = before; i < ap.deltas.size(); ++i) {
          const Wme& w = ap.deltas[i].second;
          if (!(w.id == top && w.attribute == aOperator && !w.acceptable)) lastApplicationChanged = true;
        }
        halted = ap.halted;
        std::string out = ap.output;
        cyc.absorb(std::move(ap));
        trace.output += out;
        if (halted) {
          finish_halt(counter + 1);
          break;
        }
        ++counter;
        push(std::move(cyc));
      }
    } catch (const RuntimeError& e) {
      trace.outcome = Outcome::RuntimeError;
      trace.error = e.what();
      trace.errorRule = e.rule();
      trace.finalDecisionCycles = counter;
    }
    push(std::move(cyc));

    for (const auto& c : head) trace.cycles.push_back(to_record(c));
    trace.elidedAfter = trace.cycles.size();
    trace.elidedCycles = recorded - static_cast<std::int64_t>(head.size() + tail.size());
    for (const auto& c : tail) trace.cycles.push_back(to_record(c));
    return trace;
  }

  void apply_raw(Symbol op, RawPhase& ph) {
    selected = op;
    std::uint64_t tt = wm_add(top, aOperator, op, false, ph);
    wm.get(tt)->architectural = true;
    mark_dirty();
    try {
      phase(true, ph);
    } catch (...) {
      selected.reset();
      throw;
    }
    if (auto cur = wm.find(top, aOperator, op, false)) wm_remove(*cur, ph);
    selected.reset();
    mark_dirty();
  }
};

// ---------------------------------------------------------------- Engine API

Engine::Engine(const rules::RuleSet& rules, RunConfig config) : impl_(std::make_unique<Impl>(rules, config)) {}
Engine::~Engine() = default;

void Engine::init_state(const std::vector<SeedWme>& seeds) {
  Impl& m = *impl_;
  std::map<std::string, Symbol> nodes;
  auto strip = [](std::string_view seg) {
    auto b = seg.find('[');
    return std::string(b == std::string_view::npos ? seg : seg.substr(0, b));
  };
  for (const auto& s : seeds) {
    std::vector<std::string> segs;
    std::string cur;
    for (char c : s.path) {
      if (c == '.') {
        segs.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    segs.push_back(cur);
    Symbol parent = m.top;
    std::string prefix;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      prefix += (i ? "." : "") + segs[i];
      auto it = nodes.find(prefix);
      if (it == nodes.end()) {
        std::string name = strip(segs[i]);
        Symbol id = m.symbols.new_identifier(name.empty() ? 'I' : name[0]);
        auto [tt, created] = m.wm.add(parent, m.symbols.intern(name), id, false);
        m.wm.get(tt)->oSupport = true;
        it = nodes.emplace(prefix, id).first;
      }
      parent = it->second;
    }
    Symbol value = std::holds_alternative<std::int64_t>(s.value)
                       ? Symbol::integer(std::get<std::int64_t>(s.value))
                       : m.symbols.intern(std::get<std::string>(s.value));
    auto [tt, created] = m.wm.add(parent, m.symbols.intern(strip(segs.back())), value, false);
    m.wm.get(tt)->oSupport = true;
  }
  std::fill(m.dirty.begin(), m.dirty.end(), 1);
}

DecisionTrace Engine::run(const GoalPredicate& goal) { return impl_->run(goal, *this); }

void Engine::set_selection_override(SelectionOverride fn) { impl_->override_ = std::move(fn); }

PhaseResult Engine::elaborate() {
  RawPhase ph;
  impl_->phase(false, ph);
  return impl_->to_phase_result(ph);
}

std::vector<OperatorCandidate> Engine::candidates() const { return impl_->candidates(); }

PhaseResult Engine::apply(Symbol op) {
  RawPhase ph;
  impl_->apply_raw(op, ph);
  return impl_->to_phase_result(ph);
}

Symbol Engine::top_state() const { return impl_->top; }
const WorkingMemory& Engine::wm() const { return impl_->wm; }
const SymbolTable& Engine::symbols() const { return impl_->symbols; }
Symbol Engine::sym(std::string_view text) const { return impl_->symbols.lookup(text); }

std::vector<Symbol> Engine::values(Symbol id, std::string_view attr) const {
  Symbol a = sym(attr);
  if (a.is_none()) return {};
  return impl_->wm.values(id, a);
}

std::string Engine::to_string(Symbol s) const { return impl_->symbols.to_string(s); }
std::string Engine::wme_string(const Wme& w) const { return impl_->wme_text(w); }

std::vector<std::string> Engine::dump() const {
  std::vector<std::string> out;
  for (const auto& [tt, e] : impl_->wm.entries()) out.push_back(impl_->wme_text(e.wme));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> Engine::audit() const {
  const Impl& m = *impl_;
  std::vector<std::string> problems;
  std::map<std::uint64_t, int> counts;
  for (const auto& [id, inst] : m.insts)
    for (std::uint64_t tt : inst.justified)
      if (m.wm.get(tt)) ++counts[tt];
  for (const auto& [tt, e] : m.wm.entries()) {
    if (e.architectural || e.oSupport) {
      if (e.wme.acceptable) {
        auto it = m.acceptableCount.find({e.wme.id, e.wme.value});
        if (it == m.acceptableCount.end() || it->second <= 0)
          problems.push_back("acceptable preference element without a preference: " + m.wme_text(e.wme));
      }
      continue;
    }
    int n = counts.count(tt) ? counts[tt] : 0;
    if (n == 0) problems.push_back("unjustified i-supported element: " + m.wme_text(e.wme));
    else if (n != e.justifications)
      problems.push_back("justification count mismatch on " + m.wme_text(e.wme) + ": stored " +
                         std::to_string(e.justifications) + ", live " + std::to_string(n));
  }
  for (std::size_t p = 0; p < m.live.size(); ++p)
    for (const auto& [k, id] : m.live[p])
      if (!m.insts.count(id)) problems.push_back("dangling live instantiation of " + m.prods[p].name);
  return problems;
}

std::size_t Engine::live_instantiations() const { return impl_->insts.size(); }

DecisionTrace run(const rules::RuleSet& rules, const std::vector<SeedWme>& seeds, const Engine::GoalPredicate& goal,
                  RunConfig config) {
  Engine e(rules, config);
  e.init_state(seeds);
  return e.run(goal);
}

}  // namespace gensym::kernel

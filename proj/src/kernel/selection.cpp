#include "gensym/kernel/selection.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace gensym::kernel {

using rules::PreferenceSymbol;

std::string_view to_string(ImpasseKind k) {
  switch (k) {
    case ImpasseKind::Tie: return "tie";
    case ImpasseKind::Conflict: return "conflict";
    case ImpasseKind::NoChange: return "no-change";
    case ImpasseKind::ConstraintFailure: return "constraint-failure";
  }
  return "?";
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do x = engine_();
  while (x >= limit);
  return x % n;
}

namespace {

bool has(const OperatorCandidate& c, PreferenceSymbol s) {
  return std::any_of(c.preferences.begin(), c.preferences.end(), [&](const auto& p) { return p.symbol == s; });
}

// True when the better-than graph restricted to `ops` contains a cycle.
bool has_cycle(const std::vector<Symbol>& ops, const std::map<Symbol, std::set<Symbol>>& better) {
  std::map<Symbol, int> state;  // 0 new, 1 on stack, 2 done
  std::function<bool(Symbol)> visit = [&](Symbol v) {
    state[v] = 1;
    auto it = better.find(v);
    if (it != better.end())
      for (Symbol w : it->second) {
        if (state[w] == 1) return true;
        if (state[w] == 0 && visit(w)) return true;
      }
    state[v] = 2;
    return false;
  };
  for (Symbol v : ops)
    if (state[v] == 0 && visit(v)) return true;
  return false;
}

}  // namespace

SelectionResult select_operator(std::vector<OperatorCandidate> candidates, Rng& rng) {
  // Merge duplicate entries for the same operator, then canonical order.
  std::map<Symbol, OperatorCandidate> merged;
  for (auto& c : candidates) {
    auto& m = merged[c.operatorId];
    m.operatorId = c.operatorId;
    m.preferences.insert(m.preferences.end(), c.preferences.begin(), c.preferences.end());
  }

  std::vector<const OperatorCandidate*> live;
  std::vector<const OperatorCandidate*> required;
  for (const auto& [id, c] : merged) {
    if (!has(c, PreferenceSymbol::Acceptable)) continue;
    bool excluded = has(c, PreferenceSymbol::Reject) || has(c, PreferenceSymbol::Prohibit);
    if (has(c, PreferenceSymbol::Require)) {
      if (excluded) return ImpasseKind::ConstraintFailure;
      required.push_back(&c);
    }
    if (!excluded) live.push_back(&c);
  }
  if (required.size() > 1) return ImpasseKind::ConstraintFailure;
  if (required.size() == 1) return required.front()->operatorId;
  if (live.empty()) return ImpasseKind::NoChange;

  if (std::any_of(live.begin(), live.end(), [](auto* c) { return has(*c, PreferenceSymbol::Best); })) {
    std::erase_if(live, [](auto* c) { return !has(*c, PreferenceSymbol::Best); });
  }

  std::set<Symbol> in_set;
  for (auto* c : live) in_set.insert(c->operatorId);
  std::map<Symbol, std::set<Symbol>> better;  // a -> {b : a better than b}
  for (auto* c : live)
    for (const auto& p : c->preferences) {
      if (!p.referent || !in_set.count(*p.referent) || *p.referent == c->operatorId) continue;
      if (p.symbol == PreferenceSymbol::Better) better[c->operatorId].insert(*p.referent);
      if (p.symbol == PreferenceSymbol::Worse) better[*p.referent].insert(c->operatorId);
    }
  {
    std::vector<Symbol> ids(in_set.begin(), in_set.end());
    if (has_cycle(ids, better)) return ImpasseKind::Conflict;
  }
  std::set<Symbol> dominated;
  for (const auto& [a, bs] : better) dominated.insert(bs.begin(), bs.end());
  std::erase_if(live, [&](auto* c) { return dominated.count(c->operatorId) > 0; });

  {
    std::vector<const OperatorCandidate*> not_worst;
    for (auto* c : live)
      if (!has(*c, PreferenceSymbol::Worst)) not_worst.push_back(c);
    if (!not_worst.empty()) live = std::move(not_worst);
  }

  if (live.size() == 1) return live.front()->operatorId;

  auto unary_indifferent = [](const OperatorCandidate& c) {
    return std::any_of(c.preferences.begin(), c.preferences.end(),
                       [](const auto& p) { return p.symbol == PreferenceSymbol::Indifferent && !p.referent; });
  };
  auto binary_indifferent = [](const OperatorCandidate& a, const OperatorCandidate& b) {
    return std::any_of(a.preferences.begin(), a.preferences.end(), [&](const auto& p) {
      return p.symbol == PreferenceSymbol::Indifferent && p.referent && *p.referent == b.operatorId;
    });
  };
  for (std::size_t i = 0; i < live.size(); ++i)
    for (std::size_t j = i + 1; j < live.size(); ++j) {
      const auto& a = *live[i];
      const auto& b = *live[j];
      if (unary_indifferent(a) || unary_indifferent(b) || binary_indifferent(a, b) || binary_indifferent(b, a)) continue;
      return ImpasseKind::Tie;
    }
  return live[rng.below(live.size())]->operatorId;
}

}  // namespace gensym::kernel

#include "gensym/kernel/trace.hpp"

#include <sstream>

namespace gensym::kernel {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::GoalReached: return "goal-reached";
    case Outcome::CutoffExceeded: return "cutoff-exceeded";
    case Outcome::ImpasseHalt: return "impasse-halt";
    case Outcome::RuntimeError: return "runtime-error";
  }
  return "?";
}

std::string_view to_string(TraceDetail d) { return d == TraceDetail::Full ? "full" : "summary"; }

namespace {

std::string escape_line(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') out += "\\n";
    else out.push_back(c);
  }
  return out;
}

void cycle_line(std::ostringstream& os, const CycleRecord& c) {
  os << "cycle " << c.cycleNumber;
  if (!c.firedRules.empty()) {
    os << " fired=[";
    for (std::size_t i = 0; i < c.firedRules.size(); ++i) {
      if (i) os << "; ";
      os << c.firedRules[i].name;
      if (!c.firedRules[i].bindings.empty()) os << " {" << c.firedRules[i].bindings << "}";
    }
    os << "]";
  }
  if (!c.proposals.empty()) {
    os << " proposed=[";
    for (std::size_t i = 0; i < c.proposals.size(); ++i) {
      const auto& p = c.proposals[i];
      if (i) os << ", ";
      os << p.operatorId;
      if (!p.operatorName.empty()) os << ":" << p.operatorName;
      for (const auto& pref : p.preferences) os << " " << pref;
    }
    os << "]";
  }
  if (c.selectedId) {
    os << " selected=" << *c.selectedId;
    if (c.selectedName && !c.selectedName->empty()) os << "(" << *c.selectedName << ")";
  }
  if (!c.wmDeltas.empty()) {
    os << " wm=[";
    for (std::size_t i = 0; i < c.wmDeltas.size(); ++i) {
      if (i) os << " ";
      os << (c.wmDeltas[i].add ? "+" : "-") << c.wmDeltas[i].wme;
    }
    os << "]";
  }
  if (c.impasse) os << " impasse=" << to_string(*c.impasse);
  if (!c.output.empty()) os << " output=\"" << escape_line(c.output) << "\"";
  os << "\n";
}

}  // namespace

std::string to_text(const CycleRecord& c) {
  std::ostringstream os;
  cycle_line(os, c);
  return os.str();
}

std::string DecisionTrace::to_text(std::size_t head, std::size_t tail) const {
  std::ostringstream os;
  os << "# trace seed=" << config.rngSeed << " cutoff=" << config.cutoff << " detail=" << to_string(config.traceDetail)
     << "\n";
  const std::size_t n = cycles.size();
  std::optional<std::int64_t> last;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= head && i + tail < n) continue;
    const auto& c = cycles[i];
    std::int64_t gap = last ? c.cycleNumber - *last - 1 : 0;
    if (gap > 0) os << "... " << gap << " cycles elided ...\n";
    cycle_line(os, c);
    last = c.cycleNumber;
  }
  os << "# outcome=" << to_string(outcome) << " decision-cycles=" << finalDecisionCycles;
  if (impasse) os << " impasse=" << to_string(*impasse);
  if (!error.empty()) os << " error=\"" << escape_line(error) << "\"";
  if (!errorRule.empty()) os << " rule=" << errorRule;
  os << "\n";
  return os.str();
}

std::string DecisionTrace::to_text() const {
  std::ostringstream os;
  os << "# trace seed=" << config.rngSeed << " cutoff=" << config.cutoff << " detail=" << to_string(config.traceDetail)
     << "\n";
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    if (elidedCycles > 0 && i == elidedAfter) os << "... " << elidedCycles << " cycles elided ...\n";
    cycle_line(os, cycles[i]);
  }
  if (elidedCycles > 0 && elidedAfter >= cycles.size()) os << "... " << elidedCycles << " cycles elided ...\n";
  os << "# outcome=" << to_string(outcome) << " decision-cycles=" << finalDecisionCycles;
  if (impasse) os << " impasse=" << to_string(*impasse);
  if (!error.empty()) os << " error=\"" << escape_line(error) << "\"";
  if (!errorRule.empty()) os << " rule=" << errorRule;
  os << "\n";
  return os.str();
}

nlohmann::json DecisionTrace::to_json() const {
  using nlohmann::json;
  json j;
  j["config"] = {{"seed", config.rngSeed}, {"cutoff", config.cutoff}, {"detail", to_string(config.traceDetail)}};
  j["outcome"] = to_string(outcome);
  j["finalDecisionCycles"] = finalDecisionCycles;
  j["impasse"] = impasse ? json(to_string(*impasse)) : json(nullptr);
  j["error"] = error;
  j["errorRule"] = errorRule;
  j["output"] = output;
  j["elidedCycles"] = elidedCycles;
  j["elidedAfter"] = elidedAfter;
  json cs = json::array();
  for (const auto& c : cycles) {
    json r;
    r["cycle"] = c.cycleNumber;
    json fired = json::array();
    for (const auto& f : c.firedRules) fired.push_back({{"rule", f.name}, {"bindings", f.bindings}});
    r["fired"] = std::move(fired);
    json props = json::array();
    for (const auto& p : c.proposals)
      props.push_back({{"id", p.operatorId}, {"name", p.operatorName}, {"preferences", p.preferences}});
    r["proposals"] = std::move(props);
    r["selected"] = c.selectedId ? json(*c.selectedId) : json(nullptr);
    r["selectedName"] = c.selectedName ? json(*c.selectedName) : json(nullptr);
    json deltas = json::array();
    for (const auto& d : c.wmDeltas) deltas.push_back({{"op", d.add ? "add" : "remove"}, {"wme", d.wme}});
    r["wmDeltas"] = std::move(deltas);
    r["impasse"] = c.impasse ? json(to_string(*c.impasse)) : json(nullptr);
    r["output"] = c.output;
    cs.push_back(std::move(r));
  }
  j["cycles"] = std::move(cs);
  return j;
}

}  // namespace gensym::kernel

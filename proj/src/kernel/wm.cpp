#include "gensym/kernel/wm.hpp"

namespace gensym::kernel {

namespace {
const std::set<std::uint64_t> kEmpty;
}

std::pair<std::uint64_t, bool> WorkingMemory::add(Symbol id, Symbol attr, Symbol value, bool acceptable) {
  TripleKey key{id, attr, value, acceptable};
  if (auto it = triples_.find(key); it != triples_.end()) return {it->second, false};
  std::uint64_t tt = nextTimetag_++;
  Entry e;
  e.wme = Wme{id, attr, value, acceptable, tt};
  entries_.emplace(tt, e);
  triples_.emplace(key, tt);
  byIdAttr_[PairKey{id, attr}].insert(tt);
  byAttr_[attr].insert(tt);
  return {tt, true};
}

void WorkingMemory::remove(std::uint64_t timetag) {
  auto it = entries_.find(timetag);
  if (it == entries_.end()) return;
  const Wme& w = it->second.wme;
  triples_.erase(TripleKey{w.id, w.attribute, w.value, w.acceptable});
  if (auto b = byIdAttr_.find(PairKey{w.id, w.attribute}); b != byIdAttr_.end()) {
    b->second.erase(timetag);
    if (b->second.empty()) byIdAttr_.erase(b);
  }
  if (auto b = byAttr_.find(w.attribute); b != byAttr_.end()) {
    b->second.erase(timetag);
    if (b->second.empty()) byAttr_.erase(b);
  }
  entries_.erase(it);
}

std::optional<std::uint64_t> WorkingMemory::find(Symbol id, Symbol attr, Symbol value, bool acceptable) const {
  auto it = triples_.find(TripleKey{id, attr, value, acceptable});
  if (it == triples_.end()) return std::nullopt;
  return it->second;
}

const WorkingMemory::Entry* WorkingMemory::get(std::uint64_t timetag) const {
  auto it = entries_.find(timetag);
  return it == entries_.end() ? nullptr : &it->second;
}

WorkingMemory::Entry* WorkingMemory::get(std::uint64_t timetag) {
  auto it = entries_.find(timetag);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::set<std::uint64_t>& WorkingMemory::bucket(Symbol id, Symbol attr) const {
  auto it = byIdAttr_.find(PairKey{id, attr});
  return it == byIdAttr_.end() ? kEmpty : it->second;
}

const std::set<std::uint64_t>& WorkingMemory::bucket(Symbol attr) const {
  auto it = byAttr_.find(attr);
  return it == byAttr_.end() ? kEmpty : it->second;
}

std::vector<Symbol> WorkingMemory::values(Symbol id, Symbol attr) const {
  std::vector<Symbol> out;
  for (auto tt : bucket(id, attr)) {
    const Entry& e = entries_.at(tt);
    if (!e.wme.acceptable) out.push_back(e.wme.value);
  }
  return out;
}

}  // namespace gensym::kernel

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "gensym/kernel/symbol.hpp"

namespace gensym::kernel {

enum class Support : std::uint8_t { Architectural, OSupport, ISupport };

struct Wme {
  Symbol id;
  Symbol attribute;
  Symbol value;
  bool acceptable = false;  // `(S1 ^operator O1 +)`
  std::uint64_t timetag = 0;
};

/// Element store with (id, attribute) and attribute indexes. Buckets are
/// ordered by timetag so iteration is deterministic.
class WorkingMemory {
 public:
  struct Entry {
    Wme wme;
    bool architectural = false;
    bool oSupport = false;
    int justifications = 0;  // live i-supported instantiations making it

    Support support() const {
      if (architectural) return Support::Architectural;
      return oSupport ? Support::OSupport : Support::ISupport;
    }
  };

  /// Returns the timetag of the existing or newly created element and
  /// whether it was created.
  std::pair<std::uint64_t, bool> add(Symbol id, Symbol attr, Symbol value, bool acceptable);
  void remove(std::uint64_t timetag);

  std::optional<std::uint64_t> find(Symbol id, Symbol attr, Symbol value, bool acceptable) const;
  const Entry* get(std::uint64_t timetag) const;
  Entry* get(std::uint64_t timetag);

  const std::set<std::uint64_t>& bucket(Symbol id, Symbol attr) const;
  const std::set<std::uint64_t>& bucket(Symbol attr) const;

  /// All values of `(id ^attr *)`, acceptable-preference elements excluded.
  std::vector<Symbol> values(Symbol id, Symbol attr) const;

  std::size_t size() const { return entries_.size(); }
  const std::map<std::uint64_t, Entry>& entries() const { return entries_; }

 private:
  struct TripleKey {
    Symbol id, attr, value;
    bool acceptable;
    friend bool operator==(const TripleKey&, const TripleKey&) = default;
  };
  struct TripleHash {
    std::size_t operator()(const TripleKey& k) const noexcept {
      SymbolHash h;
      return h(k.id) ^ (h(k.attr) * 1000003u) ^ (h(k.value) * 998244353u) ^ k.acceptable;
    }
  };
  struct PairKey {
    Symbol id, attr;
    friend bool operator==(const PairKey&, const PairKey&) = default;
  };
  struct PairHash {
    std::size_t operator()(const PairKey& k) const noexcept {
      SymbolHash h;
      return h(k.id) ^ (h(k.attr) * 1000003u);
    }
  };

  std::uint64_t nextTimetag_ = 1;
  std::map<std::uint64_t, Entry> entries_;
  std::unordered_map<TripleKey, std::uint64_t, TripleHash> triples_;
  std::unordered_map<PairKey, std::set<std::uint64_t>, PairHash> byIdAttr_;
  std::unordered_map<Symbol, std::set<std::uint64_t>, SymbolHash> byAttr_;
};

}  // namespace gensym::kernel

#pragma once

#include <compare>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "aol/errors.hpp"
#include "aol/rng.hpp"

namespace aol {

enum class entry_kind : std::uint8_t { action = 0, observation = 1, state = 2 };

struct HistoryEntry {
  entry_kind kind;
  std::int32_t value;

  friend auto operator<=>(const HistoryEntry&, const HistoryEntry&) = default;
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

/// Canonical tagged-entry sequence. Open-loop steps contribute only their action,
/// so observation branches merge automatically under this keying.
using HistoryKey = std::vector<HistoryEntry>;

inline HistoryEntry act(int a) { return {entry_kind::action, a}; }
inline HistoryEntry obs(int z) { return {entry_kind::observation, z}; }
inline HistoryEntry st(int x) { return {entry_kind::state, x}; }

inline std::uint64_t key_hash(const HistoryKey& key) noexcept {
  std::uint64_t h = 0x5eedULL;
  for (const auto& e : key)
    h = hash_combine(h, (static_cast<std::uint64_t>(e.kind) << 32) ^ static_cast<std::uint32_t>(e.value));
  return hash_combine(h, key.size());
}

struct HistoryKeyHash {
  std::size_t operator()(const HistoryKey& key) const noexcept { return static_cast<std::size_t>(key_hash(key)); }
};

/// Number of actions in the history, i.e. the tree depth of the node.
inline int key_depth(const HistoryKey& key) noexcept {
  int d = 0;
  for (const auto& e : key) d += e.kind == entry_kind::action;
  return d;
}

/// Drops state entries. Topology assignments are keyed by projected histories so
/// that the open-loop and fully-observable trees share one indicator structure.
inline HistoryKey project(const HistoryKey& key) {
  HistoryKey out;
  out.reserve(key.size());
  for (const auto& e : key)
    if (e.kind != entry_kind::state) out.push_back(e);
  return out;
}

inline bool has_prefix(const HistoryKey& key, const HistoryKey& prefix) noexcept {
  if (prefix.size() > key.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (!(key[i] == prefix[i])) return false;
  return true;
}

inline HistoryKey extended(HistoryKey key, std::initializer_list<HistoryEntry> entries) {
  key.insert(key.end(), entries.begin(), entries.end());
  return key;
}

/// "root" for the empty history, otherwise entries like a0.z2.x5 joined by dots.
inline std::string to_string(const HistoryKey& key) {
  if (key.empty()) return "root";
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) out += '.';
    out += key[i].kind == entry_kind::action ? 'a' : key[i].kind == entry_kind::observation ? 'z' : 'x';
    out += std::to_string(key[i].value);
  }
  return out;
}

inline HistoryKey parse_key(const std::string& text) {
  HistoryKey key;
  if (text == "root") return key;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, '.')) {
    if (tok.size() < 2) throw parse_error("bad history entry '" + tok + "'");
    entry_kind k;
    switch (tok[0]) {
      case 'a': k = entry_kind::action; break;
      case 'z': k = entry_kind::observation; break;
      case 'x': k = entry_kind::state; break;
      default: throw parse_error("bad history entry '" + tok + "'");
    }
    try {
      key.push_back({k, std::stoi(tok.substr(1))});
    } catch (const std::exception&) {
      throw parse_error("bad history entry '" + tok + "'");
    }
  }
  return key;
}

/// Action/observation/state sequence under a topology's history updater.
class AugmentedHistory {
 public:
  AugmentedHistory() = default;
  explicit AugmentedHistory(HistoryKey entries) : entries_(std::move(entries)) { check(); }

  const HistoryKey& key() const noexcept { return entries_; }
  int depth() const noexcept { return key_depth(entries_); }
  bool empty() const noexcept { return entries_.empty(); }
  int state_entries() const noexcept {
    int n = 0;
    for (const auto& e : entries_) n += e.kind == entry_kind::state;
    return n;
  }

  AugmentedHistory append_action(int a) const { return AugmentedHistory(extended(entries_, {act(a)})); }
  AugmentedHistory append(int a, HistoryEntry outcome) const {
    return AugmentedHistory(extended(entries_, {act(a), outcome}));
  }

  friend bool operator==(const AugmentedHistory&, const AugmentedHistory&) = default;

 private:
  void check() const {
    if (!entries_.empty() && entries_.front().kind != entry_kind::action)
      throw contract_violation("augmented history must start with an action");
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (entries_[i].kind != entry_kind::action && entries_[i - 1].kind != entry_kind::action)
        throw contract_violation("at most one outcome entry may follow each action");
  }

  HistoryKey entries_;
};

}  // namespace aol

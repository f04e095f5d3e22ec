#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aol/errors.hpp"
#include "aol/history.hpp"

namespace aol {

/// Indicator value: 1 selects the simplified updater (open-loop for the lower
/// bound, fully-observable for the upper bound), 0 the closed-loop updater.
using beta_t = std::uint8_t;
inline constexpr beta_t simplified = 1;
inline constexpr beta_t closed = 0;

enum class bound_side : std::uint8_t { lower = 0, upper = 1 };

enum class node_mode : std::uint8_t { open_loop, closed_loop, fully_observable };

inline node_mode mode_for(bound_side side, beta_t b) noexcept {
  if (b == closed) return node_mode::closed_loop;
  return side == bound_side::lower ? node_mode::open_loop : node_mode::fully_observable;
}

inline const char* to_string(node_mode m) noexcept {
  switch (m) {
    case node_mode::open_loop: return "open_loop";
    case node_mode::closed_loop: return "closed_loop";
    case node_mode::fully_observable: return "fully_observable";
  }
  return "?";
}

/**
 * Paired indicator assignments (tau_U, tau_L).
 *
 * Both assignments map projected history keys to beta and fall back to a shared
 * default for unlisted nodes. They are always transitioned together; by default
 * they hold identical patterns.
 */
class Topology {
 public:
  using assignment = std::map<HistoryKey, beta_t>;

  explicit Topology(beta_t default_beta = simplified) : default_(default_beta) {}

  static Topology fully_open_loop() { return Topology(simplified); }
  static Topology fully_closed_loop() { return Topology(closed); }

  beta_t default_beta() const noexcept { return default_; }

  beta_t beta(bound_side side, const HistoryKey& key) const {
    const auto& m = side == bound_side::lower ? lower_ : upper_;
    auto it = m.find(project(key));
    return it == m.end() ? default_ : it->second;
  }
  beta_t lower(const HistoryKey& key) const { return beta(bound_side::lower, key); }
  beta_t upper(const HistoryKey& key) const { return beta(bound_side::upper, key); }
  node_mode mode(bound_side side, const HistoryKey& key) const { return mode_for(side, beta(side, key)); }

  void set(const HistoryKey& key, beta_t b) {
    set(bound_side::lower, key, b);
    set(bound_side::upper, key, b);
  }
  void set(bound_side side, const HistoryKey& key, beta_t b) {
    (side == bound_side::lower ? lower_ : upper_)[project(key)] = b;
  }

  const assignment& entries(bound_side side) const noexcept { return side == bound_side::lower ? lower_ : upper_; }

  /// Sets node to closed-loop and copies every explicit entry found below
  /// node+[a] onto node+[a,z] for all z. Returns the number of copied entries.
  int close_node(bound_side side, const HistoryKey& key, int num_observations) {
    auto& m = side == bound_side::lower ? lower_ : upper_;
    HistoryKey node = project(key);
    const std::size_t n = node.size();
    std::vector<std::pair<HistoryKey, beta_t>> added;
    for (auto it = m.upper_bound(node); it != m.end() && has_prefix(it->first, node); ++it) {
      const HistoryKey& k = it->first;
      if (k.size() <= n || k[n].kind != entry_kind::action) continue;
      if (k.size() > n + 1 && k[n + 1].kind == entry_kind::observation) continue;
      for (int z = 0; z < num_observations; ++z) {
        HistoryKey nk(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(n) + 1);
        nk.push_back(obs(z));
        nk.insert(nk.end(), k.begin() + static_cast<std::ptrdiff_t>(n) + 1, k.end());
        added.emplace_back(std::move(nk), it->second);
      }
    }
    int mirrored = 0;
    for (auto& [k, b] : added)
      if (m.emplace(std::move(k), b).second) ++mirrored;
    m[node] = closed;
    return mirrored;
  }

  /// Hash of every assignment entry at or below `key`, plus the default. Two
  /// topologies with equal signatures induce identical subtrees under `key`.
  std::uint64_t subtree_signature(bound_side side, const HistoryKey& key) const {
    const auto& m = entries(side);
    HistoryKey prefix = project(key);
    std::uint64_t h = hash_combine(0x70b0ULL, default_);
    for (auto it = m.lower_bound(prefix); it != m.end() && has_prefix(it->first, prefix); ++it) {
      if (it->second == default_) continue;
      h = hash_combine(h, key_hash(it->first));
    }
    return h;
  }

  /// Short stable identifier for traces.
  std::string id() const {
    std::uint64_t h = hash_combine(0x1dULL, default_);
    for (auto side : {bound_side::lower, bound_side::upper})
      for (const auto& [k, b] : entries(side))
        if (b != default_) h = hash_combine(h, key_hash(k) ^ (static_cast<std::uint64_t>(side) << 1));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.default_ == b.default_ && a.normalized(bound_side::lower) == b.normalized(bound_side::lower) &&
           a.normalized(bound_side::upper) == b.normalized(bound_side::upper);
  }

 private:
  assignment normalized(bound_side side) const {
    assignment out;
    for (const auto& [k, b] : entries(side))
      if (b != default_) out.emplace(k, b);
    return out;
  }

  beta_t default_;
  assignment lower_;
  assignment upper_;
};

// ---------------------------------------------------------------------------
// History updaters
// ---------------------------------------------------------------------------

/// Adaptive open-loop updater: beta=1 appends the action only, beta=0 appends
/// the action and the observation.
inline AugmentedHistory update_history_aol(const Topology& tau, const AugmentedHistory& h, int action,
                                           int observation) {
  if (tau.lower(h.key()) == simplified) return h.append_action(action);
  return h.append(action, obs(observation));
}

/// Adaptive fully-observable updater: beta=1 appends the action and the true
/// next state, beta=0 appends the action and the observation.
inline AugmentedHistory update_history_afo(const Topology& tau, const AugmentedHistory& h, int action,
                                           int observation, int next_state) {
  if (tau.upper(h.key()) == simplified) return h.append(action, st(next_state));
  return h.append(action, obs(observation));
}

/// True when every step of `key` was produced by the updater `tau` prescribes,
/// i.e. the node is reachable in the tree of `tau`.
inline bool is_consistent(const Topology& tau, bound_side side, const HistoryKey& key) {
  HistoryKey prefix;
  std::size_t i = 0;
  while (i < key.size()) {
    if (key[i].kind != entry_kind::action) return false;
    beta_t b = tau.beta(side, prefix);
    prefix.push_back(key[i]);
    ++i;
    bool has_outcome = i < key.size() && key[i].kind != entry_kind::action;
    if (b == closed) {
      if (!has_outcome || key[i].kind != entry_kind::observation) return false;
    } else if (side == bound_side::lower) {
      if (has_outcome) return false;
    } else {
      if (!has_outcome || key[i].kind != entry_kind::state) return false;
    }
    if (has_outcome) prefix.push_back(key[i++]);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

struct TopologyTransition {
  Topology topology;
  int flipped = 0;   ///< nodes switched to closed-loop
  int no_ops = 0;    ///< selected nodes that were already closed-loop
  int mirrored = 0;  ///< assignment entries copied onto newly spawned observation branches
};

/**
 * Switches the selected nodes to closed-loop in both assignments.
 *
 * Observation children spawned under a flipped node inherit the mode of the
 * open-loop child they replace, so every explicit entry below node+[a] is copied
 * to node+[a,z] for each observation z. Unselected nodes keep their mode.
 * refine_in_place leaves `topology` of the result default-constructed.
 */
inline TopologyTransition refine_in_place(Topology& tau, const std::vector<HistoryKey>& selection, int num_observations) {
  TopologyTransition out;
  std::set<HistoryKey> seen;
  for (const auto& raw : selection) {
    HistoryKey node = project(raw);
    if (!seen.insert(node).second) continue;
    int changed = 0;
    for (auto side : {bound_side::lower, bound_side::upper}) {
      if (tau.beta(side, node) != simplified) continue;
      out.mirrored += tau.close_node(side, node, num_observations);
      ++changed;
    }
    if (changed) ++out.flipped;
    else ++out.no_ops;
  }
  return out;
}

inline TopologyTransition refine_topology(const Topology& tau, const std::vector<HistoryKey>& selection,
                                          int num_observations) {
  Topology next = tau;
  TopologyTransition out = refine_in_place(next, selection, num_observations);
  out.topology = std::move(next);
  return out;
}

/// A simplified node found in an evaluated tree, eligible for refinement.
struct RefinementCandidate {
  HistoryKey key;  ///< projected key
  int depth = 0;

  friend bool operator==(const RefinementCandidate&, const RefinementCandidate&) = default;
};

inline bool candidate_order(const RefinementCandidate& a, const RefinementCandidate& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.key < b.key;  // lowest action index, then lowest observation index
}

/**
 * Default selection: the shallowest simplified nodes lying under the given root
 * actions (the root itself counts for every action). `batch` limits how many of
 * them are returned in (depth, action, observation) order; 0 means the whole
 * shallowest layer.
 */
inline std::vector<HistoryKey> select_shallowest(std::vector<RefinementCandidate> candidates,
                                                 const std::vector<int>& root_actions, int batch = 0) {
  std::erase_if(candidates, [&](const RefinementCandidate& c) {
    if (c.key.empty()) return false;
    return std::find(root_actions.begin(), root_actions.end(), c.key.front().value) == root_actions.end();
  });
  std::sort(candidates.begin(), candidates.end(), candidate_order);
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::vector<HistoryKey> out;
  if (candidates.empty()) return out;
  int depth = candidates.front().depth;
  for (const auto& c : candidates) {
    if (c.depth != depth) break;
    if (batch > 0 && static_cast<int>(out.size()) >= batch) break;
    out.push_back(c.key);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// "default <beta>" followed by "node <key> <beta_lower> <beta_upper>" lines.
inline void write_topology(std::ostream& os, const Topology& tau) {
  os << "default " << static_cast<int>(tau.default_beta()) << "\n";
  std::set<HistoryKey> keys;
  for (auto side : {bound_side::lower, bound_side::upper})
    for (const auto& [k, b] : tau.entries(side))
      if (b != tau.default_beta()) keys.insert(k);
  for (const auto& k : keys)
    os << "node " << to_string(k) << " " << static_cast<int>(tau.lower(k)) << " " << static_cast<int>(tau.upper(k))
       << "\n";
}

inline Topology read_topology(std::istream& is) {
  std::optional<Topology> tau;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word[0] == '#') continue;
    if (word == "default") {
      int b;
      if (!(ls >> b) || (b != 0 && b != 1)) throw parse_error("topology line " + std::to_string(line_no));
      tau.emplace(static_cast<beta_t>(b));
    } else if (word == "node") {
      std::string key;
      int lo, up;
      if (!tau || !(ls >> key >> lo >> up) || lo < 0 || lo > 1 || up < 0 || up > 1)
        throw parse_error("topology line " + std::to_string(line_no));
      HistoryKey k = parse_key(key);
      tau->set(bound_side::lower, k, static_cast<beta_t>(lo));
      tau->set(bound_side::upper, k, static_cast<beta_t>(up));
    } else {
      throw parse_error("topology line " + std::to_string(line_no) + ": unknown key '" + word + "'");
    }
  }
  if (!tau) throw parse_error("topology document has no default line");
  return *tau;
}

}  // namespace aol

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bistoch/flow_matrix.hpp"
#include "bistoch/graph.hpp"

namespace bistoch {

// All components that formed at one threshold. Each member set is the full
// membership of a component that fused from two or more earlier ones.
struct MergeLevel {
  double threshold = 0.0;
  std::vector<std::vector<std::size_t>> components;
};

// Result of strong-component hierarchical clustering. Levels are stored in
// strictly decreasing threshold order.
struct Dendrogram {
  std::vector<RegionId> leaves;
  std::vector<MergeLevel> merges;
  // Threshold at which each leaf first joins a component of size >= 2;
  // nullopt means never.
  std::vector<std::optional<double>> first_merge_level;
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), members_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) members_[i] = {i};
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns the surviving root, or nullopt when already joined.
  std::optional<std::size_t> unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return std::nullopt;
    if (members_[a].size() < members_[b].size()) std::swap(a, b);
    parent_[b] = a;
    members_[a].insert(members_[a].end(), members_[b].begin(), members_[b].end());
    members_[b].clear();
    members_[b].shrink_to_fit();
    return a;
  }

  const std::vector<std::size_t>& members(std::size_t root) const {
    return members_[root];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> members_;
};

struct TimedArc {
  std::size_t src;
  std::size_t dst;
  std::size_t time;  // index of the arc's weight in the descending level list
};

// Offline incremental strong components. Arcs appear in time order; for each
// arc we locate the first time its endpoints become mutually reachable by
// divide and conquer over time, contracting finished merges in a union-find.
// Arcs whose endpoints never join are dropped at the sentinel time `never`.
class HierarchySweep {
 public:
  HierarchySweep(std::size_t n, std::vector<TimedArc> arcs, std::size_t never,
                 const std::vector<double>& levels)
      : sets_(n), arcs_(std::move(arcs)), never_(never), levels_(levels),
        local_id_(n, kNone) {}

  std::vector<MergeLevel> run() {
    std::vector<std::size_t> all(arcs_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    solve(0, never_, std::move(all));
    return std::move(merges_);
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  void solve(std::size_t lo, std::size_t hi, std::vector<std::size_t> ids) {
    if (ids.empty()) return;
    if (lo == hi) {
      if (lo != never_) commit(lo, ids);
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;

    // Contracted graph of arcs present at time mid.
    std::vector<std::size_t> touched;
    auto local = [&](std::size_t v) {
      const std::size_t r = sets_.find(v);
      if (local_id_[r] == kNone) {
        local_id_[r] = touched.size();
        touched.push_back(r);
      }
      return local_id_[r];
    };
    std::vector<std::pair<std::size_t, std::size_t>> ends(ids.size(), {kNone, kNone});
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& a = arcs_[ids[k]];
      if (a.time <= mid) ends[k] = {local(a.src), local(a.dst)};
    }
    std::vector<std::vector<std::size_t>> adj(touched.size());
    for (const auto& [u, v] : ends)
      if (u != kNone && u != v) adj[u].push_back(v);
    const auto comp = tarjan_keys(adj);

    std::vector<std::size_t> left, right;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto [u, v] = ends[k];
      if (u != kNone && comp[u] == comp[v])
        left.push_back(ids[k]);
      else
        right.push_back(ids[k]);
    }
    for (std::size_t r : touched) local_id_[r] = kNone;
    ids.clear();
    ids.shrink_to_fit();

    solve(lo, mid, std::move(left));
    solve(mid + 1, hi, std::move(right));
  }

  void commit(std::size_t time, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> roots;
    for (std::size_t id : ids)
      if (auto r = sets_.unite(arcs_[id].src, arcs_[id].dst)) roots.push_back(*r);
    if (roots.empty()) return;
    for (auto& r : roots) r = sets_.find(r);
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

    MergeLevel level{levels_[time], {}};
    for (std::size_t r : roots) {
      auto m = sets_.members(r);
      std::sort(m.begin(), m.end());
      level.components.push_back(std::move(m));
    }
    std::sort(level.components.begin(), level.components.end());
    merges_.push_back(std::move(level));
  }

  DisjointSets sets_;
  std::vector<TimedArc> arcs_;
  std::size_t never_;
  const std::vector<double>& levels_;
  std::vector<std::size_t> local_id_;
  std::vector<MergeLevel> merges_;
};

}  // namespace detail

// Sweeps thresholds over the distinct positive off-diagonal values of B in
// decreasing order and records every level at which strong components of
// threshold_digraph(B, t) fuse. Equal values form a single level.
inline Dendrogram strong_component_hierarchy(const FlowMatrix& b) {
  const std::size_t n = b.size();
  std::vector<double> levels;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && b(i, j) > 0.0) levels.push_back(b(i, j));
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  std::unordered_map<double, std::size_t> time_of;
  time_of.reserve(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) time_of.emplace(levels[k], k);

  std::vector<detail::TimedArc> arcs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && b(i, j) > 0.0) arcs.push_back({i, j, time_of.at(b(i, j))});

  Dendrogram d;
  d.leaves = b.labels();
  d.merges = detail::HierarchySweep(n, std::move(arcs), levels.size(), levels).run();
  d.first_merge_level.assign(n, std::nullopt);
  for (const auto& level : d.merges)
    for (const auto& comp : level.components)
      for (std::size_t v : comp)
        if (!d.first_merge_level[v]) d.first_merge_level[v] = level.threshold;
  return d;
}

// Partition at level t: every merge recorded at a threshold >= t applied.
inline Partition cut_dendrogram(const Dendrogram& d, double t) {
  detail::DisjointSets sets(d.leaves.size());
  for (const auto& level : d.merges) {
    if (level.threshold < t) break;
    for (const auto& comp : level.components)
      for (std::size_t k = 1; k < comp.size(); ++k) sets.unite(comp.front(), comp[k]);
  }
  std::vector<std::size_t> keys(d.leaves.size());
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = sets.find(i);
  return Partition::from_keys(keys);
}

struct CosmopolitanEntry {
  RegionId region;
  std::size_t index = 0;
  std::optional<double> first_merge_level;  // nullopt: never merged
};

// Leaves ordered by how weakly they enter the hierarchy: ascending first
// merge level, never-merged leaves last, ties in label order.
inline std::vector<CosmopolitanEntry> cosmopolitan_ranking(const Dendrogram& d) {
  std::vector<CosmopolitanEntry> out;
  out.reserve(d.leaves.size());
  for (std::size_t i = 0; i < d.leaves.size(); ++i)
    out.push_back({d.leaves[i], i, d.first_merge_level[i]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.first_merge_level.has_value() != b.first_merge_level.has_value())
      return a.first_merge_level.has_value();
    return a.first_merge_level && *a.first_merge_level < *b.first_merge_level;
  });
  return out;
}

}  // namespace bistoch

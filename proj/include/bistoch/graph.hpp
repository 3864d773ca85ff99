#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "bistoch/error.hpp"
#include "bistoch/flow_matrix.hpp"

namespace bistoch {

struct Arc {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 1.0;

  friend bool operator==(const Arc&, const Arc&) = default;
};

// Weighted digraph over the indices of a flow matrix.
class ThresholdDigraph {
 public:
  ThresholdDigraph(std::size_t n, std::vector<Arc> arcs, std::vector<RegionId> labels)
      : n_(n), arcs_(std::move(arcs)), labels_(std::move(labels)) {
    if (labels_.size() != n_)
      throw invalid_input("ThresholdDigraph: label count does not match n");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& a : arcs_) {
      if (a.src >= n_ || a.dst >= n_)
        throw invalid_input("ThresholdDigraph: arc endpoint out of range");
      if (!std::isfinite(a.weight) || a.weight <= 0.0)
        throw invalid_input("ThresholdDigraph: arc weight must be finite and > 0");
      if (!seen.emplace(a.src, a.dst).second)
        throw invalid_input("ThresholdDigraph: parallel arcs " +
                            std::to_string(a.src) + "->" + std::to_string(a.dst));
    }
  }

  ThresholdDigraph(std::size_t n, std::vector<Arc> arcs)
      : ThresholdDigraph(n, std::move(arcs), index_labels(n)) {}

  std::size_t size() const noexcept { return n_; }
  const std::vector<Arc>& arcs() const noexcept { return arcs_; }
  const std::vector<RegionId>& labels() const noexcept { return labels_; }

  // Out-neighbour lists, each sorted ascending.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(n_);
    for (const auto& a : arcs_) adj[a.src].push_back(a.dst);
    for (auto& l : adj) std::sort(l.begin(), l.end());
    return adj;
  }

 private:
  std::size_t n_;
  std::vector<Arc> arcs_;
  std::vector<RegionId> labels_;
};

// Partition of {0..n-1}. A component's id is its smallest member index;
// components are listed in increasing id order with sorted members.
class Partition {
 public:
  Partition() = default;

  // Canonicalizes an arbitrary assignment (equal values = same component).
  template <typename Key>
  static Partition from_keys(const std::vector<Key>& keys) {
    Partition p;
    const std::size_t n = keys.size();
    p.assignment_.assign(n, 0);
    std::vector<std::pair<Key, std::size_t>> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) order.emplace_back(keys[i], i);
    std::sort(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == 0 || !(order[k].first == order[k - 1].first)) groups.emplace_back();
      groups.back().push_back(order[k].second);
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    std::sort(groups.begin(), groups.end());
    for (const auto& g : groups)
      for (std::size_t v : g) p.assignment_[v] = g.front();
    p.components_ = std::move(groups);
    return p;
  }

  static Partition singletons(std::size_t n) {
    std::vector<std::size_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = i;
    return from_keys(keys);
  }

  std::size_t size() const noexcept { return assignment_.size(); }
  std::size_t component_count() const noexcept { return components_.size(); }
  // Component id (smallest member) of index i.
  std::size_t component_of(std::size_t i) const { return assignment_[i]; }
  const std::vector<std::size_t>& assignment() const noexcept { return assignment_; }
  const std::vector<std::vector<std::size_t>>& components() const noexcept {
    return components_;
  }

  std::size_t largest_component_size() const {
    std::size_t m = 0;
    for (const auto& c : components_) m = std::max(m, c.size());
    return m;
  }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<std::size_t> assignment_;
  std::vector<std::vector<std::size_t>> components_;
};

// Arcs at every cell within unit_tolerance of 1, weight 1. Diagonal cells
// qualify like any other.
inline ThresholdDigraph unit_entry_digraph(const FlowMatrix& b,
                                           double unit_tolerance = kDefaultUnitTolerance) {
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (std::abs(b(i, j) - 1.0) <= unit_tolerance) arcs.push_back({i, j, 1.0});
  return {b.size(), std::move(arcs), b.labels()};
}

// Arcs at every positive cell with value >= t, weighted by the cell value.
inline ThresholdDigraph threshold_digraph(const FlowMatrix& b, double t,
                                          bool allow_diagonal = false) {
  if (t < 0.0) throw invalid_input("threshold_digraph: threshold must be >= 0");
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (i == j && !allow_diagonal) continue;
      const double v = b(i, j);
      if (v > 0.0 && v >= t) arcs.push_back({i, j, v});
    }
  return {b.size(), std::move(arcs), b.labels()};
}

namespace detail {

// Iterative Tarjan over adjacency lists; returns a component key per vertex.
inline std::vector<std::size_t> tarjan_keys(
    const std::vector<std::vector<std::size_t>>& adj) {
  constexpr std::size_t kUnvisited = std::numeric_limits<std::size_t>::max();
  const std::size_t n = adj.size();
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0), comp(n, kUnvisited);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (vertex, next edge)
  std::size_t counter = 0, next_comp = 0;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    call.emplace_back(root, 0);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e < adj[v].size()) {
        const std::size_t w = adj[v][e++];
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) {
        const std::size_t parent = call.back().first;
        low[parent] = std::min(low[parent], low[done]);
      }
      if (low[done] == index[done]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = next_comp;
        } while (w != done);
        ++next_comp;
      }
    }
  }
  return comp;
}

}  // namespace detail

// Maximal mutually reachable vertex sets (Tarjan).
inline Partition strong_components(const ThresholdDigraph& g) {
  return Partition::from_keys(detail::tarjan_keys(g.adjacency()));
}

// Connected components after forgetting arc direction (breadth-first).
inline Partition weak_components(const ThresholdDigraph& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::size_t>> und(n);
  for (const auto& a : g.arcs()) {
    und[a.src].push_back(a.dst);
    und[a.dst].push_back(a.src);
  }
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> key(n, kNone);
  std::queue<std::size_t> frontier;
  for (std::size_t s = 0; s < n; ++s) {
    if (key[s] != kNone) continue;
    key[s] = s;
    frontier.push(s);
    while (!frontier.empty()) {
      const std::size_t v = frontier.front();
      frontier.pop();
      for (std::size_t w : und[v])
        if (key[w] == kNone) {
          key[w] = s;
          frontier.push(w);
        }
    }
  }
  return Partition::from_keys(key);
}

}  // namespace bistoch

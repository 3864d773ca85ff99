#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string_view>
#include <vector>

#include "bistoch/error.hpp"
#include "bistoch/flow_matrix.hpp"
#include "bistoch/graph.hpp"

namespace bistoch {

// How a singleton component relates to the unit entries of the matrix.
enum class IsolatedClass { UnitInRowAndColumn, UnitInRowXorColumn, NoUnit };

inline std::string_view to_string(IsolatedClass c) {
  switch (c) {
    case IsolatedClass::UnitInRowAndColumn: return "UnitInRowAndColumn";
    case IsolatedClass::UnitInRowXorColumn: return "UnitInRowXorColumn";
    case IsolatedClass::NoUnit: return "NoUnit";
  }
  return "unknown";
}

struct ComponentCensus {
  Partition partition;
  std::vector<RegionId> labels;
  // component size -> number of components of that size
  std::map<std::size_t, std::size_t> size_histogram;
  // ids of components whose members carry >= 2 distinct state prefixes
  std::vector<std::size_t> interstate_components;
  // singleton index -> classification
  std::map<std::size_t, IsolatedClass> isolated_classification;

  std::size_t interstate_count(std::size_t component_size) const {
    std::size_t k = 0;
    for (std::size_t id : interstate_components)
      for (const auto& c : partition.components())
        if (c.front() == id && c.size() == component_size) ++k;
    return k;
  }

  std::size_t isolated_count(IsolatedClass cls) const {
    std::size_t k = 0;
    for (const auto& [idx, c] : isolated_classification)
      if (c == cls) ++k;
    return k;
  }
};

inline bool spans_states(const std::vector<std::size_t>& members,
                         const std::vector<RegionId>& labels) {
  std::set<std::string> prefixes;
  for (std::size_t v : members) prefixes.insert(labels[v].state_prefix());
  return prefixes.size() >= 2;
}

inline ComponentCensus component_census(const Partition& p, const ThresholdDigraph& g,
                                        const FlowMatrix& b,
                                        double unit_tolerance = kDefaultUnitTolerance) {
  const std::size_t n = b.size();
  if (p.size() != n || g.size() != n)
    throw invalid_input("component_census: partition, digraph and matrix sizes differ");
  if (g.labels() != b.labels())
    throw invalid_input("component_census: digraph and matrix labels differ");

  ComponentCensus c;
  c.partition = p;
  c.labels = b.labels();
  for (const auto& comp : p.components()) {
    ++c.size_histogram[comp.size()];
    if (spans_states(comp, c.labels)) c.interstate_components.push_back(comp.front());
  }

  std::vector<bool> row_unit(n, false), col_unit(n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(b(i, j) - 1.0) <= unit_tolerance) row_unit[i] = col_unit[j] = true;
  for (const auto& comp : p.components()) {
    if (comp.size() != 1) continue;
    const std::size_t v = comp.front();
    c.isolated_classification[v] =
        row_unit[v] && col_unit[v]   ? IsolatedClass::UnitInRowAndColumn
        : row_unit[v] || col_unit[v] ? IsolatedClass::UnitInRowXorColumn
                                     : IsolatedClass::NoUnit;
  }
  return c;
}

}  // namespace bistoch

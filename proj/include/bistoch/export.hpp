#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bistoch/bistochastic.hpp"
#include "bistoch/census.hpp"
#include "bistoch/flow_matrix.hpp"
#include "bistoch/hierarchy.hpp"
#include "bistoch/io.hpp"
#include "bistoch/spectral.hpp"

namespace bistoch::exporting {

using json = nlohmann::ordered_json;

inline json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json(const ConvergenceReport& r) {
  return {{"iterations", r.iterations},
          {"last_step_delta", r.last_step_delta},
          {"max_sum_deviation", r.max_sum_deviation},
          {"converged", r.converged},
          {"method", std::string(to_string(r.method))}};
}

inline json to_json(const MatrixStats& s) {
  json top = json::array();
  for (const auto& [id, v] : s.top_diag) top.push_back({{"code", id.code()}, {"value", v}});
  return {{"nonzero_count", s.nonzero_count},
          {"above_threshold_count", s.above_threshold_count},
          {"sparsity_fraction", s.sparsity_fraction},
          {"diag_sum", s.diag_sum},
          {"diag_nonzero_count", s.diag_nonzero_count},
          {"top_diag", std::move(top)},
          {"unit_entry_count", s.unit_entry_count}};
}

inline json codes(const std::vector<std::size_t>& members, const std::vector<RegionId>& labels) {
  json out = json::array();
  for (std::size_t v : members) out.push_back(labels[v].code());
  return out;
}

inline json histogram_json(const std::map<std::size_t, std::size_t>& h) {
  json out = json::object();
  for (const auto& [size, count] : h) out[std::to_string(size)] = count;
  return out;
}

inline json to_json(const ComponentCensus& c) {
  json comps = json::array();
  for (const auto& comp : c.partition.components()) {
    const bool inter = std::find(c.interstate_components.begin(), c.interstate_components.end(),
                                 comp.front()) != c.interstate_components.end();
    comps.push_back({{"id", comp.front()},
                     {"size", comp.size()},
                     {"members", codes(comp, c.labels)},
                     {"interstate", inter}});
  }
  json iso_counts = json::object();
  for (auto cls : {IsolatedClass::UnitInRowAndColumn, IsolatedClass::UnitInRowXorColumn,
                   IsolatedClass::NoUnit})
    iso_counts[std::string(to_string(cls))] = c.isolated_count(cls);
  json iso = json::object();
  for (const auto& [idx, cls] : c.isolated_classification)
    iso[c.labels[idx].code()] = std::string(to_string(cls));
  json interstate_by_size = json::object();
  for (const auto& [size, count] : c.size_histogram)
    if (size >= 2) interstate_by_size[std::to_string(size)] = c.interstate_count(size);
  return {{"component_count", c.partition.component_count()},
          {"size_histogram", histogram_json(c.size_histogram)},
          {"interstate_components", c.interstate_components},
          {"interstate_by_size", std::move(interstate_by_size)},
          {"isolated_classification_counts", std::move(iso_counts)},
          {"isolated_classification", std::move(iso)},
          {"components", std::move(comps)}};
}

inline json to_json(const SpectrumReport& s) {
  json vals = json::array();
  for (std::size_t i = 0; i < s.eigenvalues.size(); ++i)
    vals.push_back({{"re", s.eigenvalues[i].real()},
                    {"im", s.eigenvalues[i].imag()},
                    {"residual", s.residuals[i]}});
  return {{"eigenvalues", std::move(vals)},
          {"k", s.k},
          {"converged", s.converged},
          {"method", s.method}};
}

inline json to_json(const std::vector<CosmopolitanEntry>& ranking, std::size_t limit) {
  json out = json::array();
  for (std::size_t i = 0; i < std::min(limit, ranking.size()); ++i)
    out.push_back({{"code", ranking[i].region.code()},
                   {"first_merge_level", optional_number(ranking[i].first_merge_level)}});
  return out;
}

// Dendrogram as an explicit tree: leaves are indices 0..n-1, internal nodes
// follow in creation order (non-increasing threshold).
struct DendrogramTree {
  struct Node {
    std::optional<double> threshold;  // nullopt for leaves
    std::vector<std::size_t> members;
    std::vector<std::size_t> children;
  };
  std::vector<Node> nodes;
  std::vector<std::size_t> roots;
};

inline DendrogramTree build_tree(const Dendrogram& d) {
  const std::size_t n = d.leaves.size();
  DendrogramTree tree;
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) {
    tree.nodes.push_back({std::nullopt, {i}, {}});
    owner[i] = i;
  }
  for (const auto& level : d.merges)
    for (const auto& comp : level.components) {
      DendrogramTree::Node node{level.threshold, comp, {}};
      for (std::size_t v : comp)  // members sorted: children ordered by smallest member
        if (std::find(node.children.begin(), node.children.end(), owner[v]) ==
            node.children.end())
          node.children.push_back(owner[v]);
      const std::size_t id = tree.nodes.size();
      tree.nodes.push_back(std::move(node));
      for (std::size_t v : comp) owner[v] = id;
    }
  for (std::size_t i = 0; i < n; ++i)
    if (std::find(tree.roots.begin(), tree.roots.end(), owner[i]) == tree.roots.end())
      tree.roots.push_back(owner[i]);
  return tree;
}

inline json node_json(const DendrogramTree& t, std::size_t id, const std::vector<RegionId>& labels) {
  const auto& node = t.nodes[id];
  json j = {{"threshold", optional_number(node.threshold)},
            {"members", codes(node.members, labels)}};
  if (!node.children.empty()) {
    json kids = json::array();
    for (std::size_t c : node.children) kids.push_back(node_json(t, c, labels));
    j["children"] = std::move(kids);
  }
  return j;
}

inline json to_json(const Dendrogram& d) {
  const auto tree = build_tree(d);
  json levels = json::array();
  for (const auto& level : d.merges) {
    json comps = json::array();
    for (const auto& c : level.components) comps.push_back(codes(c, d.leaves));
    levels.push_back({{"threshold", level.threshold}, {"components", std::move(comps)}});
  }
  json roots = json::array();
  for (std::size_t r : tree.roots) roots.push_back(node_json(tree, r, d.leaves));
  json first = json::object();
  for (std::size_t i = 0; i < d.leaves.size(); ++i)
    first[d.leaves[i].code()] = optional_number(d.first_merge_level[i]);
  json leaves = json::array();
  for (const auto& l : d.leaves) leaves.push_back(l.code());
  return {{"leaves", std::move(leaves)},
          {"levels", std::move(levels)},
          {"first_merge_level", std::move(first)},
          {"roots", std::move(roots)}};
}

namespace detail {
inline std::string newick_label(const std::string& code) {
  if (code.find_first_of(" \t()[]':;,") == std::string::npos) return code;
  std::string out = "'";
  for (char c : code) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  return out + "'";
}

inline void newick_node(std::ostream& out, const DendrogramTree& t, std::size_t id,
                        const std::vector<RegionId>& labels) {
  const auto& node = t.nodes[id];
  if (node.children.empty()) {
    out << newick_label(labels[node.members.front()].code());
    return;
  }
  out << '(';
  for (std::size_t k = 0; k < node.children.size(); ++k) {
    if (k) out << ',';
    newick_node(out, t, node.children[k], labels);
  }
  out << ")[&level=" << io::detail::format_double(*node.threshold) << ']';
}
}  // namespace detail

// Newick with [&level=t] on every internal node. A forest is wrapped in an
// unannotated root.
inline void write_newick(const Dendrogram& d, std::ostream& out) {
  const auto tree = build_tree(d);
  if (tree.roots.size() == 1) {
    detail::newick_node(out, tree, tree.roots.front(), d.leaves);
  } else {
    out << '(';
    for (std::size_t k = 0; k < tree.roots.size(); ++k) {
      if (k) out << ',';
      detail::newick_node(out, tree, tree.roots[k], d.leaves);
    }
    out << ')';
  }
  out << ";\n";
}

inline void write_arcs_csv(const ThresholdDigraph& g, std::ostream& out) {
  out << "src,dst,weight\n";
  for (const auto& a : g.arcs())
    out << io::detail::quote(g.labels()[a.src].code()) << ','
        << io::detail::quote(g.labels()[a.dst].code()) << ','
        << io::detail::format_double(a.weight) << '\n';
}

inline void write_census_csv(const ComponentCensus& c, std::ostream& out) {
  out << "code,component,size,interstate,isolated_class\n";
  for (const auto& comp : c.partition.components()) {
    const bool inter = std::find(c.interstate_components.begin(), c.interstate_components.end(),
                                 comp.front()) != c.interstate_components.end();
    for (std::size_t v : comp) {
      auto it = c.isolated_classification.find(v);
      out << io::detail::quote(c.labels[v].code()) << ',' << comp.front() << ','
          << comp.size() << ',' << (inter ? "true" : "false") << ','
          << (it == c.isolated_classification.end() ? "" : std::string(to_string(it->second)))
          << '\n';
    }
  }
}

inline void write_spectrum_csv(const SpectrumReport& s, std::ostream& out) {
  out << "re,im,residual\n";
  for (std::size_t i = 0; i < s.eigenvalues.size(); ++i)
    out << io::detail::format_double(s.eigenvalues[i].real()) << ','
        << io::detail::format_double(s.eigenvalues[i].imag()) << ','
        << io::detail::format_double(s.residuals[i]) << '\n';
}

}  // namespace bistoch::exporting

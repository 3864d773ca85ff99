// Balances a small flow table both ways and prints what each method makes of it.

#include <iostream>

#include "bistoch/bistoch.hpp"

int main() {
  using namespace bistoch;
  const std::vector<FlowRecord> flows{
      {"01001", "01003", 120}, {"01003", "01001", 95}, {"01001", "02010", 4},
      {"02010", "01001", 7},   {"01003", "02010", 2},  {"02010", "02020", 60},
      {"02020", "02010", 55},  {"02020", "01003", 3},  {"01003", "02020", 1},
      {"02020", "01001", 2},   {"01001", "02020", 1}};
  const FlowMatrix raw = load_flows(flows);

  const auto sk = sinkhorn_knopp(raw);
  const auto sq = squared_norm_bistochastize(raw);

  for (const auto* res : {&sk, &sq}) {
    const auto& b = res->matrix;
    std::cout << to_string(res->report.method) << ": " << res->report.iterations
              << " iterations, deviation " << res->report.max_sum_deviation << '\n';
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) std::cout << ' ' << b(i, j);
      std::cout << '\n';
    }
    const auto unit = unit_entry_digraph(b);
    const auto census = component_census(strong_components(unit), unit, b);
    std::cout << "  unit entries: " << unit.arcs().size()
              << ", strong components: " << census.partition.component_count() << '\n';
    for (const auto& e : cosmopolitan_ranking(strong_component_hierarchy(b)))
      std::cout << "  " << e.region.code() << " joins at "
                << (e.first_merge_level ? std::to_string(*e.first_merge_level) : "never") << '\n';
  }
  std::cout << "correlation(sk, sqnorm) = " << correlation(sk.matrix, sq.matrix) << '\n';
}

// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
// here and never loosened at run time.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "../oracles.hpp"
#include "bistoch/bistoch.hpp"

using namespace bistoch;

namespace {

constexpr double kSkTol = 1e-12;
constexpr std::size_t kSkPositiveIter = 10'000;
constexpr std::size_t kSkHollowIter = 200'000;
constexpr double kSkSecondsPerCase = 10.0;
constexpr double kClosedFormTol = 1e-10;
constexpr double kProjectionGap = 1e-6;
constexpr double kSquaredNormStep = 1e-30;
constexpr std::size_t kSquaredNormIter = 500'000;
constexpr double kAffineSumTol = 1e-12;
constexpr double kAffineOracleTol = 1e-9;
constexpr double kModulusSlack = 1e-8;
constexpr double kResidualTol = 1e-8;
constexpr double kSpectrumTol = 1e-8;
constexpr double kNoise = 1e-3;
constexpr double kUnitTol = 1e-2;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Row/column sum deviation in extended precision, independent of the library.
double sum_deviation(const SquareMatrix& m) {
  const std::size_t n = m.size();
  long double worst = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    long double r = 0.0L, c = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      r += m(i, j);
      c += m(j, i);
    }
    worst = std::max({worst, std::abs(r - 1.0L), std::abs(c - 1.0L)});
  }
  return static_cast<double>(worst);
}

Outcome sk_bistochasticity() {
  std::mt19937_64 gen(1001);
  const std::size_t sizes[] = {5, 20, 100};
  double worst_dev = 0.0, slowest = 0.0;
  std::size_t most_iter = 0, bad = 0;
  auto run = [&](const SquareMatrix& a, std::size_t cap) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = sinkhorn_knopp(FlowMatrix::indexed(a), {kSkTol, cap, 1});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double dev = sum_deviation(res.matrix.entries());
    worst_dev = std::max(worst_dev, dev);
    most_iter = std::max(most_iter, res.report.iterations);
    if (a.size() == 100) slowest = std::max(slowest, secs);
    if (!res.report.converged || dev > kSkTol || (a.size() == 100 && secs >= kSkSecondsPerCase)) ++bad;
  };
  for (int t = 0; t < 100; ++t) run(oracle::random_positive(sizes[t % 3], gen), kSkPositiveIter);
  const std::size_t positive_iter = most_iter;
  most_iter = 0;
  for (int t = 0; t < 30; ++t)
    run(oracle::random_hollow_full_support(sizes[t % 3], 2 + t % 4, gen), kSkHollowIter);
  return {bad == 0, fmt("130 cases, %zu bad; max deviation %.2e; max iterations positive %zu, "
                        "hollow %zu; slowest n=100 %.2fs",
                        bad, worst_dev, positive_iter, most_iter, slowest)};
}

Outcome sk_closed_form() {
  std::mt19937_64 gen(1002);
  std::uniform_real_distribution<double> d(1e-3, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double a11 = d(gen), a12 = d(gen), a21 = d(gen), a22 = d(gen);
    const double p = std::sqrt(a11 * a22), q = std::sqrt(a12 * a21);
    const double a = p / (p + q);
    const auto b = sinkhorn_knopp(FlowMatrix::indexed({{a11, a12}, {a21, a22}})).matrix;
    worst = std::max({worst, std::abs(b(0, 0) - a), std::abs(b(1, 1) - a), std::abs(b(0, 1) - (1 - a)),
                      std::abs(b(1, 0) - (1 - a))});
  }
  return {worst <= kClosedFormTol, fmt("1000 cases, max |error| %.2e (tol %.0e)", worst, kClosedFormTol)};
}

Outcome squared_norm_optimality() {
  std::mt19937_64 gen(1003);
  std::uniform_real_distribution<double> scale(0.2, 3.0);
  double worst_gap = 0.0, worst_step = 0.0;
  std::size_t most_iter = 0, bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + t % 3;
    const SquareMatrix a = oracle::random_positive(n, gen, 0.0, scale(gen));
    SquaredNormOptions opt;
    opt.tol = kSquaredNormStep;
    opt.max_iter = kSquaredNormIter;
    const auto res = squared_norm_bistochastize(FlowMatrix::indexed(a), opt);
    const double d = oracle::frobenius_distance(res.matrix.entries(), a);
    const double pg = oracle::birkhoff_distance_projected_gradient(a, gen);
    const double gap = std::abs(d - pg);
    worst_gap = std::max(worst_gap, gap);
    worst_step = std::max(worst_step, res.report.last_step_delta);
    most_iter = std::max(most_iter, res.report.iterations);
    if (gap > kProjectionGap || !res.report.converged || res.report.last_step_delta > kSquaredNormStep ||
        sum_deviation(res.matrix.entries()) > 1e-9)
      ++bad;
  }
  return {bad == 0, fmt("200 cases, %zu bad; max |distance - oracle| %.2e; max final step %.2e; "
                        "max iterations %zu",
                        bad, worst_gap, worst_step, most_iter)};
}

Outcome affine_projection() {
  std::mt19937_64 gen(1004);
  std::normal_distribution<double> d(0.0, 2.0);
  double worst_sum = 0.0, worst_entry = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 20;
    SquareMatrix x(n);
    for (double& v : x.data()) v = d(gen);
    const auto y = project_affine_doubly_stochastic(x);
    const auto ref = oracle::affine_projection_lsq(x);
    worst_sum = std::max(worst_sum, sum_deviation(y));
    for (std::size_t k = 0; k < n * n; ++k) worst_entry = std::max(worst_entry, std::abs(y.data()[k] - ref.data()[k]));
  }
  return {worst_sum <= kAffineSumTol && worst_entry <= kAffineOracleTol,
          fmt("1000 cases, max sum deviation %.2e, max entry error vs least squares %.2e", worst_sum,
              worst_entry)};
}

Outcome component_oracles() {
  std::mt19937_64 gen(1005);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  std::uniform_real_distribution<double> dens(0.0, 0.25);
  std::size_t bad = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = size(gen);
    const auto arcs = oracle::random_arcs(n, dens(gen) * dens(gen) * 4, gen);
    const ThresholdDigraph g(n, arcs);
    if (strong_components(g) != Partition::from_keys(oracle::closure_scc_keys(n, arcs))) ++bad;
    if (weak_components(g) != Partition::from_keys(oracle::union_find_keys(n, arcs))) ++bad;
  }
  return {bad == 0, fmt("500 digraphs, %zu mismatches", bad)};
}

Outcome dendrogram_consistency() {
  std::mt19937_64 gen(1006);
  std::uniform_int_distribution<std::size_t> size(2, 40);
  std::bernoulli_distribution sparse_coin(0.5);
  std::size_t bad = 0, levels = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = size(gen);
    SquareMatrix b(n);
    if (t % 2) {
      std::uniform_int_distribution<int> pool(1, 20);
      std::bernoulli_distribution keep(0.2);
      for (double& v : b.data())
        if (keep(gen)) v = pool(gen) / 20.0;
    } else {
      b = oracle::random_positive(n, gen, 0.0, 1.0);
      if (sparse_coin(gen))
        for (double& v : b.data())
          if (v < 0.7) v = 0.0;
    }
    const auto d = strong_component_hierarchy(FlowMatrix::indexed(b));
    std::set<double, std::greater<>> values;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && b(i, j) > 0) values.insert(b(i, j));
    std::set<double, std::greater<>> changes, recorded;
    for (const auto& m : d.merges) recorded.insert(m.threshold);
    for (std::size_t k = 1; k < d.merges.size(); ++k)
      if (!(d.merges[k - 1].threshold > d.merges[k].threshold)) ++bad;
    Partition prev = Partition::singletons(n);
    for (double th : values) {
      const auto expect = Partition::from_keys(oracle::closure_scc_keys(n, oracle::threshold_arcs(b, th)));
      if (cut_dendrogram(d, th) != expect) ++bad;
      for (const auto& comp : prev.components())
        for (std::size_t v : comp)
          if (expect.component_of(v) != expect.component_of(comp.front())) ++bad;
      if (expect != prev) changes.insert(th);
      prev = expect;
      ++levels;
    }
    if (changes != recorded) ++bad;
  }
  return {bad == 0, fmt("100 matrices, %zu thresholds checked, %zu violations", levels, bad)};
}

Outcome spectral_bounds() {
  std::mt19937_64 gen(1007);
  std::uniform_int_distribution<std::size_t> size(2, 50);
  double worst_mod = 0.0, worst_res = 0.0, worst_match = 0.0;
  std::size_t bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = size(gen);
    SquareMatrix b;
    if (t % 2 == 0) {
      // Product of three random permutation matrices.
      auto p = oracle::random_permutation(n, gen);
      for (int f = 0; f < 2; ++f) {
        const auto q = oracle::random_permutation(n, gen);
        for (auto& v : p) v = q[v];
      }
      b = oracle::permutation_matrix(p);
    } else {
      b = oracle::random_bistochastic(n, 1 + t % 6, gen);
    }
    const auto r = leading_eigenvalues(b, n);
    const auto want = oracle::dense_spectrum(b);
    bool has_one = false;
    for (std::size_t i = 0; i < n; ++i) {
      worst_mod = std::max(worst_mod, std::abs(r.eigenvalues[i]));
      worst_res = std::max(worst_res, r.residuals[i]);
      if (std::abs(r.eigenvalues[i] - 1.0) <= kSpectrumTol && r.residuals[i] <= kResidualTol) has_one = true;
      worst_match = std::max(worst_match, std::abs(std::abs(r.eigenvalues[i]) - std::abs(want[i])));
    }
    if (!oracle::spectra_match(r.eigenvalues, want, kSpectrumTol)) ++bad;
    if (!has_one) ++bad;
    // Top-9 selection obeys the ordering convention.
    const auto top = leading_eigenvalues(b, std::min<std::size_t>(9, n));
    for (std::size_t i = 0; i < top.eigenvalues.size(); ++i)
      if (std::abs(top.eigenvalues[i] - r.eigenvalues[i]) > kSpectrumTol) ++bad;
  }
  const bool ok = bad == 0 && worst_mod <= 1 + kModulusSlack && worst_res <= kResidualTol &&
                  worst_match <= kSpectrumTol;
  return {ok, fmt("100 matrices (50 permutation products, 50 convex combinations), %zu bad; "
                  "max modulus %.12f, max residual %.2e, max sorted-modulus gap %.2e",
                  bad, worst_mod, worst_res, worst_match)};
}

Outcome permutation_limit() {
  std::mt19937_64 gen(1008);
  std::uniform_real_distribution<double> noise(0.0, kNoise);
  std::size_t bad = 0;
  double worst_unit_gap = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 9;
    const auto perm = oracle::random_permutation(n, gen);
    SquareMatrix a = oracle::permutation_matrix(perm);
    for (double& v : a.data()) v += noise(gen);
    const auto fa = FlowMatrix::indexed(a);
    std::vector<Arc> expect_arcs;
    for (std::size_t i = 0; i < n; ++i) expect_arcs.push_back({i, perm[i], 1.0});
    const auto cycles = Partition::from_keys(oracle::closure_scc_keys(n, expect_arcs));
    for (const auto& b : {sinkhorn_knopp(fa).matrix, squared_norm_bistochastize(fa).matrix}) {
      const auto g = unit_entry_digraph(b, kUnitTol);
      if (g.arcs() != expect_arcs || strong_components(g) != cycles) ++bad;
      for (std::size_t i = 0; i < n; ++i) worst_unit_gap = std::max(worst_unit_gap, 1.0 - b(i, perm[i]));
    }
  }
  return {bad == 0, fmt("100 inputs x 2 methods, %zu mismatches; largest 1 - b[i][p(i)] %.2e", bad,
                        worst_unit_gap)};
}

std::optional<Outcome> census_reproduction() {
  const char* flows = std::getenv("BISTOCH_CENSUS_FLOWS");
  if (!flows) return std::nullopt;
  const char* labels = std::getenv("BISTOCH_CENSUS_LABELS");
  auto records = io::read_flow_csv(flows);
  std::optional<std::vector<RegionId>> lab;
  if (labels) lab = io::read_labels(labels);
  const auto raw = load_flows(records, std::move(lab));
  const auto raw_stats = matrix_stats(raw);
  const auto sk = sinkhorn_knopp(raw).matrix;
  const auto sq = squared_norm_bistochastize(raw).matrix;
  const auto sk_units = matrix_stats(sk).unit_entry_count;
  const auto sq_stats = matrix_stats(sq);
  const auto g = unit_entry_digraph(sq);
  const auto strong = component_census(strong_components(g), g, sq);
  const auto weak = weak_components(g);
  const std::map<std::size_t, std::size_t> hist{{1, 1659}, {2, 654}, {3, 22}, {4, 13}, {5, 3}, {7, 1}};
  const bool ok = raw_stats.nonzero_count == 735'531 && sk_units == 1 && sq_stats.unit_entry_count == 2707 &&
                  strong.size_histogram == hist && strong.interstate_count(2) == 31 &&
                  weak.component_count() == 1093 && weak.largest_component_size() == 29;
  std::string h;
  for (const auto& [s, c] : strong.size_histogram) h += fmt("%zu:%zu ", s, c);
  // The reference raw-vs-balanced correlations may be listed in either order;
  // reported for information, the integer censuses decide the criterion.
  const double c_sq = correlation(raw, sq), c_sk = correlation(raw, sk);
  const auto near = [](double x, double y) { return std::abs(x - y) <= 1e-4; };
  const bool corr_match = (near(c_sq, 0.186802) && near(c_sk, 0.176193)) ||
                          (near(c_sq, 0.176193) && near(c_sk, 0.186802));
  return Outcome{ok, fmt("n=%zu raw nonzeros %zu; SK units %zu; squared-norm units %zu; strong {%s}; "
                         "interstate pairs %zu; weak %zu (largest %zu); correlations raw-sqnorm %.6f "
                         "raw-sk %.6f sk-sqnorm %.6f (reference pair %s)",
                         raw.size(), raw_stats.nonzero_count, sk_units, sq_stats.unit_entry_count, h.c_str(),
                         strong.interstate_count(2), weak.component_count(), weak.largest_component_size(),
                         c_sq, c_sk, correlation(sk, sq), corr_match ? "matched" : "not matched")};
}

}  // namespace

int main() {
  report(1, "sk-bistochasticity", sk_bistochasticity);
  report(2, "sk-2x2-closed-form", sk_closed_form);
  report(3, "squared-norm-optimality", squared_norm_optimality);
  report(4, "affine-projection", affine_projection);
  report(5, "scc-wcc-oracles", component_oracles);
  report(6, "dendrogram-consistency", dendrogram_consistency);
  report(7, "spectral-bounds", spectral_bounds);
  report(8, "permutation-limit", permutation_limit);

  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Outcome> census;
  try {
    census = census_reproduction();
  } catch (const std::exception& e) {
    census = Outcome{false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!census) {
    std::printf("SKIP 9 census-reproduction: BISTOCH_CENSUS_FLOWS not set\n");
  } else {
    if (!census->pass) ++failures;
    std::printf("%s 9 census-reproduction: %s (%.1fs)\n", census->pass ? "PASS" : "FAIL",
                census->detail.c_str(), secs);
  }
  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}

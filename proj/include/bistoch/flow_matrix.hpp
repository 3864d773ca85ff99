#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bistoch/detail/reduce.hpp"
#include "bistoch/error.hpp"

namespace bistoch {

inline constexpr double kDefaultNonzeroThreshold = 1e-10;
inline constexpr double kDefaultUnitTolerance = 1e-9;

// Dense row-major n x n matrix of reals. Entries are unconstrained; this is
// the working type for intermediate iterates that may go negative.
class SquareMatrix {
 public:
  SquareMatrix() = default;

  explicit SquareMatrix(std::size_t n, double fill = 0.0)
      : n_(n), data_(n * n, fill) {}

  SquareMatrix(std::size_t n, std::vector<double> row_major)
      : n_(n), data_(std::move(row_major)) {
    if (data_.size() != n_ * n_)
      throw invalid_input("SquareMatrix: expected " + std::to_string(n_ * n_) +
                          " entries, got " + std::to_string(data_.size()));
  }

  SquareMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : n_(rows.size()) {
    data_.reserve(n_ * n_);
    for (const auto& r : rows) {
      if (r.size() != n_) throw invalid_input("SquareMatrix: ragged rows");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const noexcept { return n_; }

  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * n_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * n_, n_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * n_, n_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Region identifier, e.g. a 5-digit FIPS county code. The state is the
// two-character prefix of the code.
class RegionId {
 public:
  RegionId() = default;
  RegionId(std::string code) : code_(std::move(code)) {  // NOLINT
    if (code_.empty()) throw invalid_input("RegionId: empty code");
  }
  RegionId(const char* code) : RegionId(std::string(code)) {}  // NOLINT

  const std::string& code() const noexcept { return code_; }
  std::string state_prefix() const { return code_.substr(0, 2); }

  friend auto operator<=>(const RegionId&, const RegionId&) = default;

 private:
  std::string code_;
};

inline std::vector<RegionId> index_labels(std::size_t n) {
  const std::size_t width = std::to_string(n == 0 ? 0 : n - 1).size();
  std::vector<RegionId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = std::to_string(i);
    out.emplace_back(std::string(width - s.size(), '0') + s);
  }
  return out;
}

// Square non-negative flow table with one region label per index.
// Immutable after construction.
class FlowMatrix {
 public:
  FlowMatrix(SquareMatrix entries, std::vector<RegionId> labels)
      : entries_(std::move(entries)), labels_(std::move(labels)) {
    const std::size_t n = entries_.size();
    if (n == 0) throw invalid_input("FlowMatrix: dimension must be positive");
    if (labels_.size() != n)
      throw invalid_input("FlowMatrix: " + std::to_string(labels_.size()) +
                          " labels for dimension " + std::to_string(n));
    std::set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.code().empty()) throw invalid_input("FlowMatrix: empty label");
      if (!seen.insert(l.code()).second)
        throw invalid_input("FlowMatrix: duplicate label '" + l.code() + "'");
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double v = entries_(i, j);
        if (!std::isfinite(v) || v < 0.0)
          throw invalid_input("FlowMatrix: entry (" + std::to_string(i) + "," +
                              std::to_string(j) +
                              ") is negative or non-finite");
      }
    hollow_ = true;
    for (std::size_t i = 0; i < n; ++i)
      if (entries_(i, i) != 0.0) hollow_ = false;
  }

  // Labels are the zero-padded indices "0", "1", ...
  static FlowMatrix indexed(SquareMatrix entries) {
    auto labels = index_labels(entries.size());
    return FlowMatrix(std::move(entries), std::move(labels));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  double operator()(std::size_t i, std::size_t j) const {
    return entries_(i, j);
  }
  const SquareMatrix& entries() const noexcept { return entries_; }
  const std::vector<RegionId>& labels() const noexcept { return labels_; }
  const RegionId& label(std::size_t i) const { return labels_[i]; }
  bool hollow() const noexcept { return hollow_; }

  bool same_labels(const FlowMatrix& other) const {
    return labels_ == other.labels_;
  }

  friend bool operator==(const FlowMatrix& a, const FlowMatrix& b) {
    return a.entries_ == b.entries_ && a.labels_ == b.labels_;
  }

 private:
  SquareMatrix entries_;
  std::vector<RegionId> labels_;
  bool hollow_ = true;
};

struct FlowRecord {
  std::string origin;
  std::string dest;
  double flow = 0.0;
  std::size_t line = 0;  // source line, 0 when unknown
};

namespace detail {
inline std::string describe(const FlowRecord& r, std::size_t index) {
  std::string s = "record " + std::to_string(index + 1);
  if (r.line != 0) s += " (line " + std::to_string(r.line) + ")";
  return s + " '" + r.origin + "' -> '" + r.dest + "'";
}
}  // namespace detail

// Assembles a flow matrix from (origin, dest, flow) records. Duplicate pairs
// are summed. Without an explicit label list the labels are the sorted set of
// all codes seen.
inline FlowMatrix load_flows(std::span<const FlowRecord> records,
                             std::optional<std::vector<RegionId>> labels = {}) {
  if (records.empty()) throw invalid_input("load_flows: no flow records");
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (!std::isfinite(r.flow))
      throw invalid_input("load_flows: non-finite flow in " +
                          detail::describe(r, k));
    if (r.flow < 0.0)
      throw invalid_input("load_flows: negative flow in " +
                          detail::describe(r, k));
    if (r.origin.empty() || r.dest.empty())
      throw invalid_input("load_flows: empty region code in " +
                          detail::describe(r, k));
  }

  std::vector<RegionId> order;
  if (labels) {
    order = std::move(*labels);
  } else {
    std::set<std::string> codes;
    for (const auto& r : records) {
      codes.insert(r.origin);
      codes.insert(r.dest);
    }
    order.assign(codes.begin(), codes.end());
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (!index.emplace(order[i].code(), i).second)
      throw invalid_input("load_flows: duplicate label '" + order[i].code() +
                          "'");

  SquareMatrix m(order.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    auto o = index.find(r.origin);
    auto d = index.find(r.dest);
    if (o == index.end() || d == index.end())
      throw invalid_input("load_flows: unknown region code '" +
                          (o == index.end() ? r.origin : r.dest) + "' in " +
                          detail::describe(r, k));
    m(o->second, d->second) += r.flow;
  }
  return FlowMatrix(std::move(m), std::move(order));
}

// Pearson correlation over all n^2 entry pairs, diagonal included.
inline double correlation(const FlowMatrix& a, const FlowMatrix& b) {
  if (a.size() != b.size())
    throw invalid_input("correlation: dimension mismatch");
  if (!a.same_labels(b)) throw invalid_input("correlation: label mismatch");

  const auto x = a.entries().data();
  const auto y = b.entries().data();
  const double count = static_cast<double>(x.size());
  const double mx = detail::pairwise_sum(x) / count;
  const double my = detail::pairwise_sum(y) / count;

  std::vector<double> sxy(x.size()), sxx(x.size()), syy(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxy[k] = dx * dy;
    sxx[k] = dx * dx;
    syy[k] = dy * dy;
  }
  const double vx = detail::pairwise_sum(sxx);
  const double vy = detail::pairwise_sum(syy);
  if (vx == 0.0 || vy == 0.0)
    throw undefined_correlation(
        "correlation: undefined correlation (zero-variance matrix)");
  const double r = detail::pairwise_sum(sxy) / std::sqrt(vx * vy);
  return std::clamp(r, -1.0, 1.0);
}

struct MatrixStats {
  std::size_t nonzero_count = 0;
  // Entries strictly above the nonzero threshold.
  std::size_t above_threshold_count = 0;
  double sparsity_fraction = 0.0;
  double diag_sum = 0.0;
  std::size_t diag_nonzero_count = 0;
  std::vector<std::pair<RegionId, double>> top_diag;
  std::size_t unit_entry_count = 0;
};

inline MatrixStats matrix_stats(const FlowMatrix& a,
                                double nonzero_threshold = kDefaultNonzeroThreshold,
                                double unit_tolerance = kDefaultUnitTolerance) {
  if (nonzero_threshold < 0.0 || unit_tolerance < 0.0)
    throw invalid_input("matrix_stats: thresholds must be non-negative");
  const std::size_t n = a.size();
  MatrixStats s;
  for (double v : a.entries().data()) {
    if (v != 0.0) ++s.nonzero_count;
    if (v > nonzero_threshold) ++s.above_threshold_count;
    if (std::abs(v - 1.0) <= unit_tolerance) ++s.unit_entry_count;
  }
  const double cells = static_cast<double>(n) * static_cast<double>(n);
  s.sparsity_fraction = 1.0 - static_cast<double>(s.nonzero_count) / cells;

  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  s.diag_sum = detail::pairwise_sum(diag);

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (diag[i] > nonzero_threshold) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
    return diag[l] > diag[r];
  });
  s.diag_nonzero_count = idx.size();
  for (std::size_t i : idx) s.top_diag.emplace_back(a.label(i), diag[i]);
  return s;
}

namespace detail {
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajorMatrix> as_eigen(const SquareMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.size());
  return {m.data().data(), n, n};
}
inline Eigen::Map<RowMajorMatrix> as_eigen(SquareMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.size());
  return {m.data().data(), n, n};
}
}  // namespace detail

// A^k by k-1 successive products. Powers of a bi-stochastic matrix stay
// bi-stochastic.
inline FlowMatrix matrix_power(const FlowMatrix& a, unsigned k) {
  if (k == 0) throw invalid_input("matrix_power: exponent must be >= 1");
  const auto base = detail::as_eigen(a.entries());
  SquareMatrix acc = a.entries();
  SquareMatrix next(a.size());
  for (unsigned step = 1; step < k; ++step) {
    detail::as_eigen(next).noalias() = detail::as_eigen(acc) * base;
    std::swap(acc, next);
  }
  // Products of non-negative matrices are non-negative up to signed zeros.
  for (double& v : acc.data())
    if (v < 0.0) v = 0.0;
  return FlowMatrix(std::move(acc), a.labels());
}

}  // namespace bistoch

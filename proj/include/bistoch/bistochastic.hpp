#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "bistoch/detail/parallel.hpp"
#include "bistoch/detail/reduce.hpp"
#include "bistoch/error.hpp"
#include "bistoch/flow_matrix.hpp"

namespace bistoch {

// Generator functions of the two supported Bregman divergences:
//   KullbackLeibler  phi(x) = x log x - x
//   SquaredNorm      phi(x) = x^2 / 2
enum class DivergenceKind { KullbackLeibler, SquaredNorm };

enum class BalanceMethod {
  KL_Sinkhorn,
  SquaredNorm_Dykstra,
  SquaredNorm_PlainAlternation
};

enum class SquaredNormVariant { Dykstra, PlainAlternation };

inline std::string_view to_string(BalanceMethod m) {
  switch (m) {
    case BalanceMethod::KL_Sinkhorn: return "KL_Sinkhorn";
    case BalanceMethod::SquaredNorm_Dykstra: return "SquaredNorm_Dykstra";
    case BalanceMethod::SquaredNorm_PlainAlternation:
      return "SquaredNorm_PlainAlternation";
  }
  return "unknown";
}

struct ConvergenceReport {
  std::size_t iterations = 0;
  // Sum of squared entry changes between the final two iterates.
  double last_step_delta = 0.0;
  // max over all row and column sums of |sum - 1|.
  double max_sum_deviation = 0.0;
  bool converged = false;
  BalanceMethod method = BalanceMethod::KL_Sinkhorn;
};

struct BalanceResult {
  FlowMatrix matrix;
  ConvergenceReport report;
};

inline constexpr double kSinkhornDefaultTol = 1e-12;
inline constexpr double kSquaredNormDefaultTol = 1e-30;
inline constexpr std::size_t kDefaultMaxIter = 200'000;

// Entries of a squared-norm result in (-kNegativeRoundoff, 0) are treated as
// round-off and clamped.
inline constexpr double kNegativeRoundoff = 1e-12;

struct SinkhornOptions {
  double tol = kSinkhornDefaultTol;  // on max_sum_deviation
  std::size_t max_iter = kDefaultMaxIter;
  unsigned threads = 1;
};

struct SquaredNormOptions {
  double tol = kSquaredNormDefaultTol;  // on last_step_delta
  std::size_t max_iter = kDefaultMaxIter;
  SquaredNormVariant variant = SquaredNormVariant::Dykstra;
  unsigned threads = 1;
  // Called with (iteration, iterate) after every step when set.
  std::function<void(std::size_t, const SquareMatrix&)> on_iterate;
};

namespace detail {

inline constexpr std::size_t kColumnBlock = 64;

inline std::vector<double> row_sums(const SquareMatrix& m, unsigned threads) {
  std::vector<double> out(m.size());
  parallel_for(m.size(), threads, [&](std::size_t i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    out[i] = s;
  });
  return out;
}

// Column sums via partial sums over fixed 64-row blocks combined in block
// order; the blocking does not depend on the thread count.
inline std::vector<double> column_sums(const SquareMatrix& m, unsigned threads) {
  const std::size_t n = m.size();
  const std::size_t blocks = (n + kColumnBlock - 1) / kColumnBlock;
  std::vector<double> partial(blocks * n, 0.0);
  parallel_for(blocks, threads, [&](std::size_t b) {
    double* acc = partial.data() + b * n;
    const std::size_t hi = std::min(n, (b + 1) * kColumnBlock);
    for (std::size_t i = b * kColumnBlock; i < hi; ++i) {
      const auto r = m.row(i);
      for (std::size_t j = 0; j < n; ++j) acc[j] += r[j];
    }
  });
  std::vector<double> out(n, 0.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < n; ++j) out[j] += partial[b * n + j];
  return out;
}

inline double max_deviation(const std::vector<double>& rows,
                            const std::vector<double>& cols) {
  double d = 0.0;
  for (double s : rows) d = std::max(d, std::abs(s - 1.0));
  for (double s : cols) d = std::max(d, std::abs(s - 1.0));
  return d;
}

}  // namespace detail

inline double bistochastic_deviation(const SquareMatrix& b, unsigned threads = 1) {
  return detail::max_deviation(detail::row_sums(b, threads),
                               detail::column_sums(b, threads));
}

inline double bistochastic_deviation(const FlowMatrix& b, unsigned threads = 1) {
  return bistochastic_deviation(b.entries(), threads);
}

// Kullback-Leibler balancing by Sinkhorn-Knopp: alternately normalize every
// row, then every column, to sum 1. One iteration is one row pass plus one
// column pass. The iterate is kept in factored form diag(r) A diag(c) over the
// non-zero pattern of A, so the zero pattern is preserved exactly.
inline BalanceResult sinkhorn_knopp(const FlowMatrix& a, const SinkhornOptions& opt = {}) {
  const std::size_t n = a.size();

  // CSR and CSC copies of the support.
  std::vector<std::size_t> row_ptr(n + 1, 0), col_ptr(n + 1, 0);
  std::vector<std::size_t> col_idx, row_idx;
  std::vector<double> row_val, col_val;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) > 0.0) {
        col_idx.push_back(j);
        row_val.push_back(a(i, j));
        ++col_ptr[j + 1];
      }
    row_ptr[i + 1] = col_idx.size();
  }
  for (std::size_t i = 0; i < n; ++i)
    if (row_ptr[i + 1] == row_ptr[i])
      throw invalid_input("sinkhorn_knopp: row " + std::to_string(i) + " ('" +
                          a.label(i).code() + "') has no positive entry");
  for (std::size_t j = 0; j < n; ++j)
    if (col_ptr[j + 1] == 0)
      throw invalid_input("sinkhorn_knopp: column " + std::to_string(j) + " ('" +
                          a.label(j).code() + "') has no positive entry");
  for (std::size_t j = 0; j < n; ++j) col_ptr[j + 1] += col_ptr[j];
  row_idx.resize(col_idx.size());
  col_val.resize(col_idx.size());
  {
    std::vector<std::size_t> fill(col_ptr.begin(), col_ptr.end() - 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        const std::size_t slot = fill[col_idx[k]]++;
        row_idx[slot] = i;
        col_val[slot] = row_val[k];
      }
  }

  std::vector<double> r(n, 1.0), c(n, 1.0), prev_r, prev_c;
  std::vector<double> rsum(n), csum(n);

  // Sums of the materialized iterate (r_i * a_ij) * c_j, accumulated in the
  // same order bistochastic_deviation would use on the dense result.
  auto deviation = [&] {
    detail::parallel_for(n, opt.threads, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        s += r[i] * row_val[k] * c[col_idx[k]];
      rsum[i] = s;
    });
    detail::parallel_for(n, opt.threads, [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t k = col_ptr[j]; k < col_ptr[j + 1]; ++k)
        s += r[row_idx[k]] * col_val[k] * c[j];
      csum[j] = s;
    });
    return detail::max_deviation(rsum, csum);
  };

  ConvergenceReport rep;
  rep.method = BalanceMethod::KL_Sinkhorn;
  double dev = deviation();
  while (dev > opt.tol && rep.iterations < opt.max_iter) {
    prev_r = r;
    prev_c = c;
    detail::parallel_for(n, opt.threads, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        s += row_val[k] * c[col_idx[k]];
      r[i] = 1.0 / s;
    });
    detail::parallel_for(n, opt.threads, [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t k = col_ptr[j]; k < col_ptr[j + 1]; ++k)
        s += r[row_idx[k]] * col_val[k];
      c[j] = 1.0 / s;
    });
    ++rep.iterations;
    dev = deviation();
    if (!std::isfinite(dev))
      throw numerical_error("sinkhorn_knopp: scaling factors overflowed");
  }
  rep.converged = dev <= opt.tol;
  rep.max_sum_deviation = dev;

  SquareMatrix out(n);
  double delta = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      const std::size_t j = col_idx[k];
      out(i, j) = r[i] * row_val[k] * c[j];
      if (rep.iterations > 0) {
        const double d = out(i, j) - prev_r[i] * row_val[k] * prev_c[j];
        delta += d * d;
      }
    }
  rep.last_step_delta = delta;
  return {FlowMatrix(std::move(out), a.labels()), rep};
}

// Euclidean projection onto the affine set {Y : all row and column sums 1}:
//   Y = X + (1/n)J + (s/n^2)J - (1/n)XJ - (1/n)JX,   s = sum of X,
// evaluated entrywise as x_ij + (1 - r_i)/n + (s/n - c_j)/n.
inline SquareMatrix project_affine_doubly_stochastic(const SquareMatrix& x,
                                                     unsigned threads = 1) {
  const std::size_t n = x.size();
  if (n == 0) throw invalid_input("project_affine_doubly_stochastic: empty matrix");
  for (double v : x.data())
    if (!std::isfinite(v))
      throw invalid_input("project_affine_doubly_stochastic: non-finite entry");
  const double dn = static_cast<double>(n);
  const auto r = detail::row_sums(x, threads);
  const auto c = detail::column_sums(x, threads);
  const double s = detail::pairwise_sum(r);
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = (1.0 - r[i]) / dn;
    v[i] = (s / dn - c[i]) / dn;
  }
  SquareMatrix y(n);
  detail::parallel_for(n, threads, [&](std::size_t i) {
    const auto src = x.row(i);
    auto dst = y.row(i);
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] + u[i] + v[j];
  });
  return y;
}

// Squared-norm balancing: the Euclidean projection of A onto the Birkhoff
// polytope, by alternating the affine projection above with clipping at
// zero. The Dykstra variant carries the correction term for the orthant
// (the affine set needs none) and converges to the exact nearest point;
// plain alternation only reaches some point of the intersection.
inline BalanceResult squared_norm_bistochastize(const FlowMatrix& a,
                                                const SquaredNormOptions& opt = {}) {
  const std::size_t n = a.size();
  const bool dykstra = opt.variant == SquaredNormVariant::Dykstra;

  SquareMatrix x = a.entries();
  SquareMatrix q(dykstra ? n : 0);

  ConvergenceReport rep;
  rep.method = dykstra ? BalanceMethod::SquaredNorm_Dykstra
                       : BalanceMethod::SquaredNorm_PlainAlternation;
  std::vector<double> step(n);
  while (rep.iterations < opt.max_iter) {
    const SquareMatrix y = project_affine_doubly_stochastic(x, opt.threads);
    detail::parallel_for(n, opt.threads, [&](std::size_t i) {
      const auto yr = y.row(i);
      auto xr = x.row(i);
      double acc = 0.0;
      if (dykstra) {
        auto qr = q.row(i);
        for (std::size_t j = 0; j < n; ++j) {
          const double shifted = yr[j] + qr[j];
          const double next = shifted > 0.0 ? shifted : 0.0;
          qr[j] = shifted - next;
          const double d = next - xr[j];
          acc += d * d;
          xr[j] = next;
        }
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          const double next = yr[j] > 0.0 ? yr[j] : 0.0;
          const double d = next - xr[j];
          acc += d * d;
          xr[j] = next;
        }
      }
      step[i] = acc;
    });
    ++rep.iterations;
    rep.last_step_delta = detail::pairwise_sum(step);
    if (opt.on_iterate) opt.on_iterate(rep.iterations, x);
    if (rep.last_step_delta <= opt.tol) {
      rep.converged = true;
      break;
    }
  }

  // Finish on the affine set when that only costs round-off clamping;
  // otherwise the non-negative iterate itself is the answer.
  SquareMatrix y = project_affine_doubly_stochastic(x, opt.threads);
  bool usable = true;
  for (double& v : y.data()) {
    if (v < -kNegativeRoundoff) {
      usable = false;
      break;
    }
    if (v < 0.0) v = 0.0;
  }
  SquareMatrix& out = usable ? y : x;
  rep.max_sum_deviation = bistochastic_deviation(out, opt.threads);
  return {FlowMatrix(std::move(out), a.labels()), rep};
}

// D_phi(B, A) summed over all cells.
inline double bregman_divergence(DivergenceKind kind, const FlowMatrix& b,
                                 const FlowMatrix& a) {
  if (a.size() != b.size())
    throw invalid_input("bregman_divergence: dimension mismatch");
  const auto x = b.entries().data();
  const auto y = a.entries().data();
  std::vector<double> terms(x.size(), 0.0);
  if (kind == DivergenceKind::SquaredNorm) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - y[k];
      terms[k] = 0.5 * d * d;
    }
  } else {
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (y[k] == 0.0) {
        if (x[k] > 0.0)
          throw invalid_input(
              "bregman_divergence: infinite KL divergence (B positive where A is zero)");
        continue;
      }
      // 0 log 0 = 0
      const double xlog = x[k] > 0.0 ? x[k] * std::log(x[k] / y[k]) : 0.0;
      terms[k] = xlog - x[k] + y[k];
    }
  }
  return std::max(0.0, detail::pairwise_sum(terms));
}

}  // namespace bistoch

#pragma once

// Test-only reference computations. Nothing in here calls into the library's
// algorithms; each oracle takes an independent route to the same answer.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bistoch/flow_matrix.hpp"
#include "bistoch/graph.hpp"

namespace oracle {

using bistoch::Arc;
using bistoch::SquareMatrix;

inline SquareMatrix random_positive(std::size_t n, std::mt19937_64& gen, double lo = 0.01,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  SquareMatrix m(n);
  for (double& v : m.data()) v = d(gen);
  return m;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& gen) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), gen);
  return p;
}

inline std::vector<std::size_t> random_derangement(std::size_t n, std::mt19937_64& gen) {
  for (;;) {
    auto p = random_permutation(n, gen);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) ok = ok && p[i] != i;
    if (ok) return p;
  }
}

inline SquareMatrix permutation_matrix(const std::vector<std::size_t>& p) {
  SquareMatrix m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m(i, p[i]) = 1.0;
  return m;
}

// Convex combination of `terms` random permutation matrices.
inline SquareMatrix random_bistochastic(std::size_t n, std::size_t terms, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  std::vector<double> w(terms);
  for (double& x : w) x = d(gen);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  SquareMatrix m(n);
  for (std::size_t t = 0; t < terms; ++t) {
    const auto p = random_permutation(n, gen);
    for (std::size_t i = 0; i < n; ++i) m(i, p[i]) += w[t] / total;
  }
  return m;
}

// Hollow, sparse, with total support: a weighted union of derangements.
inline SquareMatrix random_hollow_full_support(std::size_t n, std::size_t terms,
                                               std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(0.5, 100.0);
  SquareMatrix m(n);
  for (std::size_t t = 0; t < terms; ++t) {
    const auto p = random_derangement(n, gen);
    for (std::size_t i = 0; i < n; ++i) m(i, p[i]) += d(gen);
  }
  return m;
}

inline std::vector<Arc> random_arcs(std::size_t n, double density, std::mt19937_64& gen) {
  std::bernoulli_distribution coin(density);
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && coin(gen)) arcs.push_back({i, j, 1.0});
  return arcs;
}

// Strong components from the reflexive transitive closure (Floyd-Warshall).
inline std::vector<std::size_t> closure_scc_keys(std::size_t n, const std::vector<Arc>& arcs) {
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
  for (const auto& a : arcs) reach[a.src][a.dst] = true;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i][k])
        for (std::size_t j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = true;
  std::vector<std::size_t> key(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j] && reach[j][i]) {
        key[i] = j;
        break;
      }
  return key;
}

// Weak components by union-find.
inline std::vector<std::size_t> union_find_keys(std::size_t n, const std::vector<Arc>& arcs) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& a : arcs) {
    const std::size_t r1 = find(a.src), r2 = find(a.dst);
    if (r1 != r2) parent[std::max(r1, r2)] = std::min(r1, r2);
  }
  std::vector<std::size_t> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = find(i);
  return key;
}

inline std::vector<Arc> threshold_arcs(const SquareMatrix& b, double t) {
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j && b(i, j) > 0.0 && b(i, j) >= t) arcs.push_back({i, j, b(i, j)});
  return arcs;
}

// Row/column-sum constraint matrix over the cells listed in `cells`.
inline Eigen::MatrixXd sum_constraints(std::size_t n, const std::vector<std::size_t>& cells) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n),
                                            static_cast<Eigen::Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    c(static_cast<Eigen::Index>(cells[k] / n), static_cast<Eigen::Index>(k)) = 1.0;
    c(static_cast<Eigen::Index>(n + cells[k] % n), static_cast<Eigen::Index>(k)) = 1.0;
  }
  return c;
}

// Equality-constrained least squares: min ||y - x|| s.t. row/col sums 1, via
// the KKT normal equations solved with a rank-revealing decomposition.
inline SquareMatrix affine_projection_lsq(const SquareMatrix& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> cells(n * n);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  const Eigen::MatrixXd c = sum_constraints(n, cells);
  Eigen::VectorXd xv(static_cast<Eigen::Index>(n * n));
  for (std::size_t k = 0; k < n * n; ++k) xv(static_cast<Eigen::Index>(k)) = x.data()[k];
  const Eigen::VectorXd rhs = c * xv - Eigen::VectorXd::Ones(static_cast<Eigen::Index>(2 * n));
  const Eigen::MatrixXd cct = c * c.transpose();
  const Eigen::VectorXd mu = cct.completeOrthogonalDecomposition().solve(rhs);
  const Eigen::VectorXd y = xv - c.transpose() * mu;
  SquareMatrix out(n);
  for (std::size_t k = 0; k < n * n; ++k) out.data()[k] = y(static_cast<Eigen::Index>(k));
  return out;
}

inline double frobenius_distance(const SquareMatrix& a, const SquareMatrix& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// Nearest doubly-stochastic matrix for n <= 4 by enumerating every zero set:
// each candidate solves the equality-constrained problem on its free cells;
// the best primal-feasible candidate is the projection.
inline double birkhoff_distance_active_set(const SquareMatrix& a, SquareMatrix* best_out = nullptr) {
  const std::size_t n = a.size();
  const std::size_t cells = n * n;
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t zero = 0; zero < (1u << cells); ++zero) {
    std::vector<std::size_t> free;
    bool blocked = false;
    for (std::size_t i = 0; i < n && !blocked; ++i) {
      bool row_open = false, col_open = false;
      for (std::size_t j = 0; j < n; ++j) {
        row_open = row_open || !(zero >> (i * n + j) & 1u);
        col_open = col_open || !(zero >> (j * n + i) & 1u);
      }
      blocked = !row_open || !col_open;
    }
    if (blocked) continue;
    for (std::size_t k = 0; k < cells; ++k)
      if (!(zero >> k & 1u)) free.push_back(k);
    const Eigen::MatrixXd c = sum_constraints(n, free);
    Eigen::VectorXd af(static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) af(static_cast<Eigen::Index>(k)) = a.data()[free[k]];
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(2 * n));
    const Eigen::MatrixXd cct = c * c.transpose();
    const Eigen::VectorXd mu = cct.completeOrthogonalDecomposition().solve(c * af - ones);
    const Eigen::VectorXd y = af - c.transpose() * mu;
    if ((c * y - ones).cwiseAbs().maxCoeff() > 1e-9) continue;
    if (y.minCoeff() < -1e-12) continue;
    SquareMatrix cand(n);
    for (std::size_t k = 0; k < free.size(); ++k)
      cand.data()[free[k]] = std::max(0.0, y(static_cast<Eigen::Index>(k)));
    const double d = frobenius_distance(cand, a);
    if (d < best) {
      best = d;
      if (best_out) *best_out = cand;
    }
  }
  return best;
}

inline void project_simplex(Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    css += u[k];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = std::max(0.0, v(k) - theta);
}

// Nearest doubly-stochastic matrix by projected gradient over convex weights
// of all n! permutation matrices (Birkhoff-von Neumann), accelerated with
// restarts, from `starts` random initial weights. Returns the best distance.
inline double birkhoff_distance_projected_gradient(const SquareMatrix& a, std::mt19937_64& gen,
                                                   int starts = 20, double step_tol = 1e-12,
                                                   std::size_t max_iter = 200'000) {
  const std::size_t n = a.size();
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> perms;
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  const auto cells = static_cast<Eigen::Index>(n * n);
  const auto k = static_cast<Eigen::Index>(perms.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cells, k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (std::size_t i = 0; i < n; ++i)
      m(static_cast<Eigen::Index>(i * n + perms[static_cast<std::size_t>(c)][i]), c) = 1.0;
  Eigen::VectorXd target(cells);
  for (Eigen::Index c = 0; c < cells; ++c) target(c) = a.data()[static_cast<std::size_t>(c)];
  const Eigen::MatrixXd gram = m.transpose() * m;
  const Eigen::VectorXd lin = m.transpose() * target;
  const double lipschitz = gram.eigenvalues().cwiseAbs().maxCoeff();
  auto objective = [&](const Eigen::VectorXd& w) { return (m * w - target).squaredNorm(); };

  std::uniform_real_distribution<double> d(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    Eigen::VectorXd w(k);
    for (Eigen::Index c = 0; c < k; ++c) w(c) = d(gen);
    project_simplex(w);
    Eigen::VectorXd z = w, prev = w;
    double t = 1.0, fprev = objective(w);
    for (std::size_t it = 0; it < max_iter; ++it) {
      Eigen::VectorXd next = z - (gram * z - lin) / lipschitz;
      project_simplex(next);
      const double f = objective(next);
      if (f > fprev) {  // adaptive restart
        t = 1.0;
        z = w;
        continue;
      }
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z = next + ((t - 1.0) / tn) * (next - w);
      const double moved = (next - w).norm();
      prev = w;
      w = next;
      t = tn;
      fprev = f;
      if (moved <= step_tol) break;
    }
    best = std::min(best, std::sqrt(objective(w)));
  }
  return best;
}

// Full complex spectrum from Eigen's complex Schur route, modulus-descending.
inline std::vector<std::complex<double>> dense_spectrum(const SquareMatrix& b) {
  const auto n = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXcd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) = b(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(c, false);
  std::vector<std::complex<double>> vals(es.eigenvalues().data(), es.eigenvalues().data() + n);
  std::sort(vals.begin(), vals.end(),
            [](auto x, auto y) { return std::abs(x) > std::abs(y); });
  return vals;
}

// Every value in `got` is within tol of a distinct value of `want`.
inline bool spectra_match(const std::vector<std::complex<double>>& got,
                          const std::vector<std::complex<double>>& want, double tol) {
  std::vector<bool> used(want.size(), false);
  for (const auto& g : got) {
    std::size_t best = want.size();
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < want.size(); ++k)
      if (!used[k] && std::abs(want[k] - g) < dist) {
        dist = std::abs(want[k] - g);
        best = k;
      }
    if (best == want.size() || dist > tol) return false;
    used[best] = true;
  }
  return true;
}

// 2x2 Sinkhorn limit by bisection on the cross-ratio, which diagonal
// scaling preserves: b11 b22 / (b12 b21) = a11 a22 / (a12 a21).
inline double sinkhorn_2x2_bisection(double a11, double a12, double a21, double a22) {
  const double ratio = a11 * a22 / (a12 * a21);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cross = mid * mid / ((1.0 - mid) * (1.0 - mid));
    (cross < ratio ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle

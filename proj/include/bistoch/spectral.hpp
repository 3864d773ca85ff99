#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bistoch/error.hpp"
#include "bistoch/flow_matrix.hpp"

namespace bistoch {

struct SpectrumReport {
  // Sorted by descending modulus, then descending real part, then
  // descending imaginary part.
  std::vector<std::complex<double>> eigenvalues;
  std::size_t k = 0;
  // ||B v - lambda v|| / ||v|| for the eigenvector behind each value.
  std::vector<double> residuals;
  bool converged = true;
  std::string method;  // "dense" or "krylov-schur"
};

// Raised when the iterative solver runs out of restarts. Carries whatever
// Ritz values were available, flagged unconverged.
class spectral_error : public numerical_error {
 public:
  spectral_error(const std::string& what, SpectrumReport partial)
      : numerical_error(what), partial_(std::move(partial)) {}
  const SpectrumReport& partial() const noexcept { return partial_; }

 private:
  SpectrumReport partial_;
};

struct SpectralOptions {
  // Matrices up to this size use a dense eigendecomposition.
  std::size_t dense_limit = 512;
  std::size_t max_restarts = 3000;
  // Krylov subspace dimension; 0 picks max(2 * wanted + 10, 40).
  std::size_t subspace = 0;
  // Relative Ritz residual at which a value counts as converged.
  double tol = 1e-12;
};

namespace detail {

using cplx = std::complex<double>;

struct Eigenpair {
  cplx value;
  double residual;
};

// Descending modulus; values whose moduli agree to round-off are ordered by
// descending real then imaginary part.
inline void sort_spectrum(std::vector<Eigenpair>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return std::abs(a.value) > std::abs(b.value);
  });
  std::size_t start = 0;
  while (start < pairs.size()) {
    const double lead = std::abs(pairs[start].value);
    const double eps = 1e-12 * std::max(1.0, lead);
    std::size_t end = start + 1;
    while (end < pairs.size() && lead - std::abs(pairs[end].value) <= eps) ++end;
    std::stable_sort(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                     pairs.begin() + static_cast<std::ptrdiff_t>(end),
                     [](const auto& a, const auto& b) {
                       if (a.value.real() != b.value.real())
                         return a.value.real() > b.value.real();
                       return a.value.imag() > b.value.imag();
                     });
    start = end;
  }
}

// The input is real, so non-real values come in conjugate pairs. Iterative
// solvers return the two members with slightly different round-off; average
// each pair so the output is exactly conjugate-symmetric.
inline void pair_conjugates(std::vector<Eigenpair>& pairs) {
  std::vector<bool> used(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (used[i] || pairs[i].value.imag() <= 0.0) continue;
    const cplx z = pairs[i].value;
    std::size_t best = pairs.size();
    double dist = 1e-8 * std::max(1.0, std::abs(z));
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (used[j] || pairs[j].value.imag() >= 0.0) continue;
      const double d = std::abs(pairs[j].value - std::conj(z));
      if (d <= dist) {
        dist = d;
        best = j;
      }
    }
    if (best == pairs.size()) continue;
    used[i] = used[best] = true;
    const cplx mean = 0.5 * (z + std::conj(pairs[best].value));
    const double res = std::max(pairs[i].residual, pairs[best].residual);
    pairs[i] = {mean, res};
    pairs[best] = {std::conj(mean), res};
  }
}

inline SpectrumReport make_report(std::vector<Eigenpair> pairs, std::size_t k,
                                  std::string method) {
  pair_conjugates(pairs);
  sort_spectrum(pairs);
  if (pairs.size() > k) pairs.resize(k);
  SpectrumReport rep;
  rep.k = k;
  rep.method = std::move(method);
  for (const auto& p : pairs) {
    rep.eigenvalues.push_back(p.value);
    rep.residuals.push_back(p.residual);
  }
  return rep;
}

inline double residual_of(const Eigen::MatrixXd& a, const Eigen::VectorXcd& v, cplx lambda) {
  const Eigen::VectorXcd av = a.cast<cplx>() * v;
  return (av - lambda * v).norm() / v.norm();
}

inline SpectrumReport dense_spectrum(const Eigen::MatrixXd& a, std::size_t k) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, true);
  if (es.info() != Eigen::Success)
    throw spectral_error("leading_eigenvalues: dense eigensolver failed", {});
  const Eigen::VectorXcd vals = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  const Eigen::MatrixXcd av = a.cast<cplx>() * vecs;
  std::vector<Eigenpair> pairs;
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    const double r = (av.col(i) - vals(i) * vecs.col(i)).norm() / vecs.col(i).norm();
    pairs.push_back({vals(i), r});
  }
  return make_report(std::move(pairs), k, "dense");
}

// Moves the diagonal entries of an upper-triangular T into descending
// modulus order with adjacent Givens swaps, updating the Schur vectors U.
inline void reorder_schur(Eigen::MatrixXcd& t, Eigen::MatrixXcd& u) {
  const Eigen::Index m = t.rows();
  auto before = [](cplx a, cplx b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  };
  for (Eigen::Index pass = 0; pass < m; ++pass) {
    bool swapped = false;
    for (Eigen::Index i = 0; i + 1 < m - pass; ++i) {
      if (!before(t(i + 1, i + 1), t(i, i))) continue;
      const cplx t11 = t(i, i), t22 = t(i + 1, i + 1);
      Eigen::JacobiRotation<cplx> g;
      g.makeGivens(t(i, i + 1), t22 - t11);
      t.applyOnTheLeft(i, i + 1, g.adjoint());
      t.applyOnTheRight(i, i + 1, g);
      u.applyOnTheRight(i, i + 1, g);
      t(i + 1, i) = 0.0;
      t(i, i) = t22;
      t(i + 1, i + 1) = t11;
      swapped = true;
    }
    if (!swapped) break;
  }
}

// Eigenvector of upper-triangular T for its l-th diagonal value.
inline Eigen::VectorXcd triangular_eigvec(const Eigen::MatrixXcd& t, Eigen::Index l) {
  Eigen::VectorXcd s = Eigen::VectorXcd::Zero(t.rows());
  s(l) = 1.0;
  const cplx theta = t(l, l);
  const double tiny = 1e-300;
  for (Eigen::Index i = l - 1; i >= 0; --i) {
    cplx acc = 0.0;
    for (Eigen::Index j = i + 1; j <= l; ++j) acc += t(i, j) * s(j);
    cplx d = t(i, i) - theta;
    if (std::abs(d) < tiny) d = tiny;
    s(i) = -acc / d;
  }
  return s;
}

// Converged leading part of a partial Schur form: A Q ~= Q T with T upper
// triangular, values on the diagonal of T in descending modulus.
struct PartialSchur {
  Eigen::MatrixXcd vectors;
  std::vector<cplx> values;
  bool converged = true;
};

// Krylov-Schur restarted Arnoldi in complex arithmetic, run on the operator
// (I - Q Q^H) A restricted to the complement of an orthonormal basis Q.
class KrylovSchur {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  KrylovSchur(const Sparse& a, const Eigen::MatrixXcd& locked, std::size_t wanted,
              const SpectralOptions& opt, std::size_t seed)
      : a_(a), q_(locked), n_(a.rows()), nev_(static_cast<Eigen::Index>(wanted)), opt_(opt),
        seed_(seed) {
    const auto auto_m = std::max<Eigen::Index>(2 * nev_ + 10, 40);
    m_ = opt.subspace ? static_cast<Eigen::Index>(opt.subspace) : auto_m;
    m_ = std::min(m_, n_ - q_.cols() - 1);
    if (m_ <= nev_) throw invalid_input("leading_eigenvalues: subspace too small");
    anorm_ = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) anorm_ = std::max(anorm_, a_.row(i).cwiseAbs().sum());
    anorm_ = std::max(anorm_, 1e-300);
  }

  PartialSchur run() {
    v_ = Eigen::MatrixXcd::Zero(n_, m_ + 1);
    h_ = Eigen::MatrixXcd::Zero(m_ + 1, m_);
    v_.col(0) = start_vector(0, 0);
    Eigen::Index p = 0;
    Eigen::MatrixXcd t, u;
    for (std::size_t restart = 0;; ++restart) {
      expand(p);
      Eigen::ComplexSchur<Eigen::MatrixXcd> schur(h_.topLeftCorner(m_, m_));
      t = schur.matrixT();
      u = schur.matrixU();
      reorder_schur(t, u);
      const Eigen::RowVectorXcd b = h_(m_, m_ - 1) * u.row(m_ - 1);

      Eigen::Index nconv = 0;
      for (Eigen::Index l = 0; l < nev_; ++l) {
        const Eigen::VectorXcd s = triangular_eigvec(t, l);
        const double est = std::abs((b * s)(0)) / s.norm();
        if (est <= opt_.tol * anorm_) ++nconv;
      }
      if (nconv == nev_ || restart >= opt_.max_restarts) {
        PartialSchur out;
        out.vectors = v_.leftCols(m_) * u.leftCols(nev_);
        for (Eigen::Index l = 0; l < nev_; ++l) out.values.push_back(t(l, l));
        out.converged = nconv == nev_;
        return out;
      }

      p = std::min(m_ - 1, nev_ + std::max<Eigen::Index>(nconv, (m_ - nev_) / 2));
      const Eigen::MatrixXcd kept = v_.leftCols(m_) * u.leftCols(p);
      v_.leftCols(p) = kept;
      v_.col(p) = v_.col(m_);
      h_.setZero();
      h_.topLeftCorner(p, p) = t.topLeftCorner(p, p);
      h_.row(p).head(p) = b.head(p);
    }
  }

 private:
  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    Eigen::VectorXcd y(n_);
    y.real() = a_ * x.real();
    y.imag() = a_ * x.imag();
    return y;
  }

  Eigen::VectorXcd deflate(Eigen::VectorXcd w) const {
    if (q_.cols() == 0) return w;
    for (int pass = 0; pass < 2; ++pass) w -= q_ * (q_.adjoint() * w);
    return w;
  }

  Eigen::VectorXcd start_vector(std::size_t salt, Eigen::Index cols) const {
    for (;; ++salt) {
      std::mt19937_64 gen(0x5eedULL + 7919 * seed_ + salt);
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      Eigen::VectorXcd x(n_);
      for (Eigen::Index i = 0; i < n_; ++i) x(i) = dist(gen);
      x = orthogonalize(deflate(x.normalized()), cols, nullptr);
      if (x.norm() > 1e-8) return x.normalized();
    }
  }

  // Two passes of classical Gram-Schmidt against the first `cols` vectors.
  Eigen::VectorXcd orthogonalize(Eigen::VectorXcd w, Eigen::Index cols,
                                 Eigen::VectorXcd* coeff) const {
    const auto basis = v_.leftCols(cols);
    Eigen::VectorXcd h = basis.adjoint() * w;
    w -= basis * h;
    const Eigen::VectorXcd h2 = basis.adjoint() * w;
    w -= basis * h2;
    if (coeff) *coeff = h + h2;
    return w;
  }

  void expand(Eigen::Index from) {
    for (Eigen::Index j = from; j < m_; ++j) {
      Eigen::VectorXcd coeff;
      Eigen::VectorXcd w = orthogonalize(deflate(apply(v_.col(j))), j + 1, &coeff);
      h_.col(j).head(j + 1) = coeff;
      const double beta = w.norm();
      if (beta > 1e-12 * anorm_) {
        h_(j + 1, j) = beta;
        v_.col(j + 1) = w / beta;
        continue;
      }
      // Invariant subspace: continue from a fresh direction, decoupled.
      h_(j + 1, j) = 0.0;
      v_.col(j + 1) = start_vector(1000 * ++breakdowns_, j + 1);
    }
  }

  const Sparse& a_;
  const Eigen::MatrixXcd& q_;
  Eigen::Index n_;
  Eigen::Index nev_;
  Eigen::Index m_ = 0;
  SpectralOptions opt_;
  std::size_t seed_;
  double anorm_ = 1.0;
  std::size_t breakdowns_ = 0;
  Eigen::MatrixXcd v_, h_;
};

// Eigenpairs of A on the invariant subspace spanned by the orthonormal Q.
inline std::vector<Eigenpair> ritz_pairs(const KrylovSchur::Sparse& a, const Eigen::MatrixXcd& q) {
  Eigen::MatrixXcd aq(q.rows(), q.cols());
  aq.real() = a * q.real();
  aq.imag() = a * q.imag();
  const Eigen::MatrixXcd small = q.adjoint() * aq;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(small, true);
  std::vector<Eigenpair> pairs;
  for (Eigen::Index l = 0; l < small.rows(); ++l) {
    const Eigen::VectorXcd x = q * es.eigenvectors().col(l);
    cplx theta = es.eigenvalues()(l);
    const double res = (aq * es.eigenvectors().col(l) - theta * x).norm() / x.norm();
    if (std::abs(theta.imag()) <= std::max(100.0 * res, 1e-13 * std::max(1.0, std::abs(theta))))
      theta = theta.real();
    pairs.push_back({theta, res});
  }
  return pairs;
}

// Leading eigenvalues by Krylov-Schur with a deflation check: after each
// solve the operator is restricted to the complement of everything found so
// far and solved again, so a repeated eigenvalue that a single Krylov
// sequence cannot see is picked up on a later round.
inline SpectrumReport krylov_spectrum(const Eigen::MatrixXd& dense, std::size_t wanted,
                                      std::size_t k, const SpectralOptions& opt) {
  const KrylovSchur::Sparse a = dense.sparseView();
  const Eigen::Index n = dense.rows();
  Eigen::MatrixXcd q(n, 0);
  std::vector<cplx> found;
  const std::size_t max_rounds = wanted + 16;
  for (std::size_t round = 0;; ++round) {
    const auto room = static_cast<std::size_t>(n - q.cols());
    if (round > max_rounds || room <= wanted + 2) {
      auto rep = make_report(ritz_pairs(a, q), k, "krylov-schur");
      rep.converged = false;
      throw spectral_error("leading_eigenvalues: deflated Krylov-Schur did not settle", std::move(rep));
    }
    const PartialSchur ps = KrylovSchur(a, q, wanted, opt, round).run();
    if (!ps.converged) {
      Eigen::MatrixXcd all(n, q.cols() + ps.vectors.cols());
      all << q, ps.vectors;
      auto rep = make_report(ritz_pairs(a, all), k, "krylov-schur");
      rep.converged = false;
      throw spectral_error("leading_eigenvalues: Krylov-Schur did not converge in " +
                               std::to_string(opt.max_restarts) + " restarts",
                           std::move(rep));
    }
    Eigen::Index take = static_cast<Eigen::Index>(ps.values.size());
    if (!found.empty()) {
      std::vector<double> mod;
      for (cplx v : found) mod.push_back(std::abs(v));
      std::sort(mod.begin(), mod.end(), std::greater<>());
      const double cutoff = mod[std::min(wanted, mod.size()) - 1];
      take = 0;
      while (take < static_cast<Eigen::Index>(ps.values.size()) &&
             std::abs(ps.values[static_cast<std::size_t>(take)]) >= cutoff * (1.0 - 1e-10))
        ++take;
      if (take == 0) break;
    }
    Eigen::MatrixXcd grown(n, q.cols() + take);
    grown << q, ps.vectors.leftCols(take);
    q = std::move(grown);
    found.insert(found.end(), ps.values.begin(), ps.values.begin() + take);
  }
  return make_report(ritz_pairs(a, q), k, "krylov-schur");
}

}  // namespace detail

// The k largest-modulus eigenvalues of a (generally non-symmetric) matrix.
inline SpectrumReport leading_eigenvalues(const SquareMatrix& b, std::size_t k,
                                          const SpectralOptions& opt = {}) {
  const std::size_t n = b.size();
  if (k < 1 || k > n)
    throw invalid_input("leading_eigenvalues: k must lie in [1, " + std::to_string(n) + "]");
  const Eigen::MatrixXd a = detail::as_eigen(b);
  // Ask for one extra value so a conjugate partner at the cut is resolved.
  const std::size_t wanted = k + 1;
  if (n <= opt.dense_limit || 4 * wanted + 8 >= n) return detail::dense_spectrum(a, k);
  return detail::krylov_spectrum(a, wanted, k, opt);
}

inline SpectrumReport leading_eigenvalues(const FlowMatrix& b, std::size_t k,
                                          const SpectralOptions& opt = {}) {
  return leading_eigenvalues(b.entries(), k, opt);
}

}  // namespace bistoch

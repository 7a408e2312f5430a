#pragma once

// Krylov-space kernels shared by the model (spectral width) and the propagator:
// extremal eigenvalues by Lanczos, short-iterative-Lanczos exponentials and a
// Chebyshev expansion of exp(-i H dt).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include "deortho/errors.hpp"
#include "deortho/grid.hpp"

namespace deortho {

/// Hermitian operator acting on flat complex vectors.
template <class Op>
concept LinearOperator = requires(const Op& op, const ComplexArray& x, ComplexArray& y) {
  { op.dim() } -> std::convertible_to<Eigen::Index>;
  op.apply(x, y);
};

/// Operators that can also hand out an assembled sparse matrix (needed by Crank-Nicolson).
template <class Op>
concept SparseOperator = LinearOperator<Op> && requires(const Op& op) {
  { op.sparse() } -> std::convertible_to<Eigen::SparseMatrix<double>>;
};

struct SpectralBounds {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

namespace detail {

inline ComplexArray lanczos_start_vector(Eigen::Index dim) {
  ComplexArray v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double x = static_cast<double>(i);
    v[i] = cplx(0.5 + std::cos(0.618 * x) + 0.25 * std::sin(2.3 * x + 0.1), 0.0);
  }
  return v / v.norm();
}

/// Two passes of classical Gram-Schmidt against every stored basis vector.
inline void reorthogonalize(const std::vector<ComplexArray>& basis, ComplexArray& w) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) w -= q.dot(w) * q;
}

} // namespace detail

/// Smallest and largest eigenvalue of a Hermitian operator by Lanczos with full
/// reorthogonalisation. `rel_tol` is relative to the spectral width.
template <LinearOperator Op>
SpectralBounds lanczos_extremes(const Op& op, double rel_tol = 1e-6, int max_iter = 2000) {
  const Eigen::Index dim = op.dim();
  const int cap = static_cast<int>(std::min<Eigen::Index>(dim, max_iter));
  std::vector<ComplexArray> basis;
  std::vector<double> alpha, beta;
  ComplexArray v = detail::lanczos_start_vector(dim);
  ComplexArray w(dim);

  SpectralBounds current;
  std::vector<SpectralBounds> history;
  for (int j = 0; j < cap; ++j) {
    basis.push_back(v);
    op.apply(v, w);
    alpha.push_back(v.dot(w).real());
    detail::reorthogonalize(basis, w);
    const double b = w.norm();

    const int m = j + 1;
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1))
                                : Eigen::VectorXd();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const auto& ev = es.eigenvalues();
    current = {ev[0], ev[m - 1]};
    const double scale = std::max(current.width(), 1e-300 + std::abs(current.upper));

    const bool breakdown = b <= 1e-13 * std::max(1.0, scale);
    if (breakdown || m == dim) return current;

    const double res_lo = b * std::abs(es.eigenvectors()(m - 1, 0));
    const double res_hi = b * std::abs(es.eigenvectors()(m - 1, m - 1));
    history.push_back(current);
    bool stagnant = false;
    if (history.size() > 10) {
      const auto& old = history[history.size() - 11];
      stagnant = std::abs(old.lower - current.lower) <= 1e-2 * rel_tol * scale &&
                 std::abs(old.upper - current.upper) <= 1e-2 * rel_tol * scale;
    }
    if ((res_lo <= rel_tol * scale && res_hi <= rel_tol * scale) || stagnant) return current;

    beta.push_back(b);
    v = w / b;
  }
  throw ConvergenceError("Lanczos extremal eigenvalues did not converge in " + std::to_string(cap) +
                         " iterations");
}

struct KrylovStats {
  int dimension = 0;
  double error_estimate = 0.0;
};

/// psi <- exp(-i H dt) psi using a short-iterative-Lanczos step with adaptive
/// Krylov dimension (up to `max_dim`). `tol` bounds the estimated local error
/// relative to |psi|.
template <LinearOperator Op>
KrylovStats lanczos_exp_step(const Op& op, ComplexArray& psi, double dt, double tol = 1e-12,
                             int max_dim = 30) {
  const double norm0 = psi.norm();
  if (norm0 == 0.0) return {};
  const Eigen::Index dim = op.dim();
  const int cap = static_cast<int>(std::min<Eigen::Index>(dim, max_dim));

  std::vector<ComplexArray> basis;
  std::vector<double> alpha, beta;
  ComplexArray v = psi / norm0;
  ComplexArray w(dim);
  Eigen::VectorXcd coeff;

  for (int j = 0; j < cap; ++j) {
    basis.push_back(v);
    op.apply(v, w);
    alpha.push_back(v.dot(w).real());
    detail::reorthogonalize(basis, w);
    const double b = w.norm();
    const int m = j + 1;

    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1))
                                : Eigen::VectorXd();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const Eigen::MatrixXd& s = es.eigenvectors();
    Eigen::VectorXcd phases(m);
    for (int q = 0; q < m; ++q) phases[q] = std::exp(cplx(0.0, -es.eigenvalues()[q] * dt)) * s(0, q);
    coeff = s.cast<cplx>() * phases;

    const double scale = std::max(1.0, std::abs(es.eigenvalues()[m - 1]) +
                                           std::abs(es.eigenvalues()[0]));
    const bool breakdown = b <= 1e-13 * scale;
    const double err = b * std::abs(coeff[m - 1]);
    if (breakdown || err <= tol || m == dim) {
      ComplexArray out = ComplexArray::Zero(dim);
      for (int q = 0; q < m; ++q) out += coeff[q] * basis[q];
      psi = norm0 * out;
      return {m, breakdown ? 0.0 : err};
    }
    beta.push_back(b);
    v = w / b;
  }
  throw ConvergenceError("short-iterative Lanczos did not reach tolerance within Krylov dimension " +
                         std::to_string(cap));
}

/// psi <- exp(-i H dt) psi by Chebyshev expansion. `bounds` must enclose the spectrum.
template <LinearOperator Op>
KrylovStats chebyshev_exp_step(const Op& op, ComplexArray& psi, double dt, SpectralBounds bounds,
                               double tol = 1e-14, int max_terms = 4000) {
  const double half = 0.5 * bounds.width();
  const double mid = 0.5 * (bounds.upper + bounds.lower);
  const double z = half * dt;
  const Eigen::Index dim = op.dim();

  // H' = (H - mid) / half maps the spectrum into [-1, 1].
  auto scaled_apply = [&](const ComplexArray& x, ComplexArray& y) {
    op.apply(x, y);
    if (half > 0.0) y = (y - mid * x) / half;
    else y.setZero();
  };

  ComplexArray prev = psi;
  ComplexArray curr(dim), next(dim);
  ComplexArray sum = std::cyl_bessel_j(0.0, z) * psi;
  if (half == 0.0) {
    psi = std::exp(cplx(0.0, -mid * dt)) * psi;
    return {1, 0.0};
  }
  scaled_apply(prev, curr);
  cplx phase(0.0, -1.0);
  int k = 1;
  double last = 0.0;
  for (; k < max_terms; ++k) {
    const double jk = std::cyl_bessel_j(static_cast<double>(k), z);
    sum += 2.0 * phase * jk * curr;
    last = std::abs(jk);
    if (k > z && last < tol) break;
    scaled_apply(curr, next);
    next = 2.0 * next - prev;
    prev.swap(curr);
    curr.swap(next);
    phase *= cplx(0.0, -1.0);
  }
  if (k >= max_terms) throw ConvergenceError("Chebyshev expansion did not converge");
  psi = std::exp(cplx(0.0, -mid * dt)) * sum;
  return {k + 1, last};
}

} // namespace deortho

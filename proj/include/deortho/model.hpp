#pragma once

// Double-arc two-level model on a 1-D nuclear lattice.
//
//   H_BO(R) = V0(R) + (g0/2) sigma_z + Vx(R) sigma_x
//   Vx(R)   = gx exp(-kappa (R/Lx)^alpha),   V0(R) = K (R/LW)^2
//
// Nuclear kinetic energy is nearest-neighbour hopping with a +2 J_L diagonal
// shift, T chi_i = -J_L (chi_{i+1} + chi_{i-1} - 2 chi_i), open boundaries.
// Full-state vectors are interleaved: index 2 i + r for site i, diabatic level r.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/krylov.hpp"

namespace deortho {

struct ModelParams {
  double g0 = 1.0;     // energy unit
  double gx = 10.0;    // [g0]
  double kappa = 2.5;
  int alpha = 4;       // positive even integer
  double K = 0.1;      // [g0]
  double LW = 15.0;    // [sigma]
  double Lx = 1.0;     // [sigma]
  double sigma = 1.0;  // length unit
  double JL = 1.0;     // [g0]
  cplx c0{M_SQRT1_2, 0.0};
  cplx c1{M_SQRT1_2, 0.0};

  double phi_rel() const { return std::arg(c1) - std::arg(c0); }

  /// c0 = sqrt(1 - pop1), c1 = sqrt(pop1) e^{i phi}.
  void set_superposition(double pop1, double phi) {
    if (!(pop1 >= 0.0 && pop1 <= 1.0)) throw CoefficientError("population must lie in [0, 1]");
    c0 = cplx(std::sqrt(1.0 - pop1), 0.0);
    c1 = std::polar(std::sqrt(pop1), phi);
  }

  void validate() const {
    if (!(g0 > 0.0)) throw InvalidArgument("g0 must be positive");
    if (!(gx >= 0.0)) throw InvalidArgument("gx must be non-negative");
    if (!(JL >= 0.0)) throw InvalidArgument("JL must be non-negative");
    if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
    if (!(Lx > 0.0)) throw InvalidArgument("Lx must be positive");
    if (!(LW > 0.0)) throw InvalidArgument("LW must be positive");
    if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be non-negative");
    if (alpha <= 0 || alpha % 2 != 0) throw InvalidArgument("alpha must be a positive even integer");
    const double norm = std::norm(c0) + std::norm(c1);
    if (std::abs(norm - 1.0) > 1e-10)
      throw CoefficientError("|c0|^2 + |c1|^2 = " + std::to_string(norm) + " != 1");
  }
};

struct Potentials {
  RealArray v0;
  RealArray vx;
  RealArray vx_prime;  // dVx/dR
};

namespace detail {

inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

inline double coupling(const ModelParams& p, double R) {
  return p.gx * std::exp(-p.kappa * ipow(R / p.Lx, p.alpha));
}

inline double coupling_derivative(const ModelParams& p, double R) {
  const double x = R / p.Lx;
  return -p.gx * p.kappa * p.alpha * ipow(x, p.alpha - 1) / p.Lx * std::exp(-p.kappa * ipow(x, p.alpha));
}

/// Real BO eigenvectors of [[a, b], [b, -a]] with a = g0/2 > 0. Lower state
/// (-sin t, cos t), upper state (cos t, sin t), t = atan2(b, a) / 2.
struct LocalEigenpair {
  double eps0, eps1;
  Eigen::Vector2d e0, e1;
};

inline LocalEigenpair local_eigenpair(const ModelParams& p, double R) {
  const double v0 = p.K * ipow(R / p.LW, 2);
  const double vx = coupling(p, R);
  const double omega = std::hypot(0.5 * p.g0, vx);
  const double theta = 0.5 * std::atan2(vx, 0.5 * p.g0);
  return {v0 - omega, v0 + omega, {-std::sin(theta), std::cos(theta)},
          {std::cos(theta), std::sin(theta)}};
}

inline void align_sign(Eigen::Vector2d& v, const Eigen::Vector2d& ref) {
  if (v.dot(ref) < 0.0) v = -v;
}

} // namespace detail

inline Potentials eval_potentials(const ModelParams& params, const GridSpec& grid) {
  Potentials pot{RealArray(grid.n_points), RealArray(grid.n_points), RealArray(grid.n_points)};
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    const double R = grid.position(i);
    pot.v0[i] = params.K * detail::ipow(R / params.LW, 2);
    pot.vx[i] = detail::coupling(params, R);
    pot.vx_prime[i] = detail::coupling_derivative(params, R);
  }
  return pot;
}

/// BO surfaces, eigenvectors (smooth sign convention) and derivative coupling.
struct BOData {
  ModelParams params;
  GridSpec grid;
  RealArray v0, vx;
  RealArray eps0, eps1;
  Eigen::Matrix2Xd evec0, evec1;  // columns are diabatic components per site
  RealArray nac;                  // d01 = <phi0 | d/dR phi1>
  double sign01 = 1.0;            // product of the convention signs of evec0 and evec1

  const Eigen::Matrix2Xd& evec(int k) const { return k == 0 ? evec0 : evec1; }
  const RealArray& eps(int k) const { return k == 0 ? eps0 : eps1; }

  /// Electronic Hamiltonian block at site i.
  Eigen::Matrix2d h_bo(Eigen::Index i) const {
    Eigen::Matrix2d h;
    h << v0[i] + 0.5 * params.g0, vx[i], vx[i], v0[i] - 0.5 * params.g0;
    return h;
  }
};

struct NacCheck {
  RealArray analytic;
  RealArray fd_grid;      // step dR between grid points
  RealArray fd_substep;   // step dR / substeps, off-grid re-diagonalisation
  double rel_dev_grid = 0.0;
  double rel_dev_substep = 0.0;
};

/// Analytic NAC from the mixing angle, plus two central-difference evaluations of
/// <phi0(R)|(phi1(R+h) - phi1(R-h)) / 2h>: one with h = dR on the stored grid
/// eigenvectors and one with h = min(dR / substeps, 1e-3 sigma) on re-diagonalised
/// off-grid points.
inline NacCheck nac_check(const BOData& bo, int substeps = 16) {
  const auto& p = bo.params;
  const auto& grid = bo.grid;
  const Eigen::Index n = grid.n_points;
  NacCheck out{RealArray(n), RealArray::Zero(n), RealArray::Zero(n), 0.0, 0.0};

  for (Eigen::Index i = 0; i < n; ++i) {
    const double R = grid.position(i);
    const double vx = detail::coupling(p, R);
    out.analytic[i] = bo.sign01 * p.g0 * detail::coupling_derivative(p, R) / (p.g0 * p.g0 + 4.0 * vx * vx);

    const double h = std::min(grid.dR / std::max(1, substeps), 1e-3 * p.sigma);
    auto plus = detail::local_eigenpair(p, R + h).e1;
    auto minus = detail::local_eigenpair(p, R - h).e1;
    const Eigen::Vector2d e1 = bo.evec1.col(i);
    detail::align_sign(plus, e1);
    detail::align_sign(minus, e1);
    out.fd_substep[i] = bo.evec0.col(i).dot((plus - minus) / (2.0 * h));
  }
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    out.fd_grid[i] = bo.evec0.col(i).dot((bo.evec1.col(i + 1) - bo.evec1.col(i - 1)) / (2.0 * grid.dR));

  const double scale = out.analytic.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    double dev_grid = 0.0;
    for (Eigen::Index i = 1; i + 1 < n; ++i)
      dev_grid = std::max(dev_grid, std::abs(out.fd_grid[i] - out.analytic[i]));
    out.rel_dev_grid = dev_grid / scale;
    out.rel_dev_substep = (out.fd_substep - out.analytic).cwiseAbs().maxCoeff() / scale;
  }
  return out;
}

/// Stored NAC is the analytic one; the sub-step finite difference must agree to
/// tol_nac * max|NAC| or the sign convention is broken somewhere.
inline RealArray compute_nac(const BOData& bo, double tol_nac = 1e-4, int substeps = 16) {
  NacCheck check = nac_check(bo, substeps);
  if (check.rel_dev_substep > tol_nac)
    throw MismatchError("analytic vs finite-difference NAC deviate by " +
                        std::to_string(check.rel_dev_substep) + " (relative)");
  return check.analytic;
}

inline BOData diagonalize_bo(const ModelParams& params, const GridSpec& grid, double tol_nac = 1e-4,
                             int nac_substeps = 16) {
  const Eigen::Index n = grid.n_points;
  Potentials pot = eval_potentials(params, grid);
  BOData bo{params, grid, pot.v0, pot.vx, RealArray(n), RealArray(n),
            Eigen::Matrix2Xd(2, n), Eigen::Matrix2Xd(2, n), RealArray::Zero(n), 1.0};

  for (Eigen::Index i = 0; i < n; ++i) {
    auto pair = detail::local_eigenpair(params, grid.position(i));
    bo.eps0[i] = pair.eps0;
    bo.eps1[i] = pair.eps1;
    bo.evec0.col(i) = pair.e0;
    bo.evec1.col(i) = pair.e1;
  }

  // Leftmost site: first diabatic component non-negative (second positive if the
  // first vanishes). Then carry the sign left to right.
  double signs[2] = {1.0, 1.0};
  for (int k = 0; k < 2; ++k) {
    Eigen::Matrix2Xd& ev = k == 0 ? bo.evec0 : bo.evec1;
    const Eigen::Vector2d first = ev.col(0);
    if (first[0] < 0.0 || (first[0] == 0.0 && first[1] < 0.0)) {
      ev.col(0) = -first;
      signs[k] = -1.0;
    }
    for (Eigen::Index i = 1; i < n; ++i)
      if (ev.col(i).dot(ev.col(i - 1)) < 0.0) ev.col(i) = -ev.col(i);
  }
  bo.sign01 = signs[0] * signs[1];
  bo.nac = compute_nac(bo, tol_nac, nac_substeps);
  return bo;
}

/// Full Hamiltonian on 2 * n_points amplitudes.
struct Hamiltonian {
  GridSpec grid;
  double hopping = 0.0;
  RealArray diag0, diag1;  // V0 + g0/2, V0 - g0/2
  RealArray offdiag;       // Vx

  Eigen::Index dim() const { return 2 * grid.n_points; }

  void apply(const ComplexArray& x, ComplexArray& y) const {
    const Eigen::Index n = grid.n_points;
    y.resize(2 * n);
    const double shift = 2.0 * hopping;
    for (Eigen::Index i = 0; i < n; ++i) {
      const cplx a = x[2 * i], b = x[2 * i + 1];
      cplx ya = (diag0[i] + shift) * a + offdiag[i] * b;
      cplx yb = offdiag[i] * a + (diag1[i] + shift) * b;
      if (i > 0) {
        ya -= hopping * x[2 * i - 2];
        yb -= hopping * x[2 * i - 1];
      }
      if (i + 1 < n) {
        ya -= hopping * x[2 * i + 2];
        yb -= hopping * x[2 * i + 3];
      }
      y[2 * i] = ya;
      y[2 * i + 1] = yb;
    }
  }

  Eigen::SparseMatrix<double> sparse() const {
    const Eigen::Index n = grid.n_points;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(8 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
      t.emplace_back(2 * i, 2 * i, diag0[i] + 2.0 * hopping);
      t.emplace_back(2 * i + 1, 2 * i + 1, diag1[i] + 2.0 * hopping);
      t.emplace_back(2 * i, 2 * i + 1, offdiag[i]);
      t.emplace_back(2 * i + 1, 2 * i, offdiag[i]);
      if (i + 1 < n && hopping != 0.0) {
        for (int r = 0; r < 2; ++r) {
          t.emplace_back(2 * i + r, 2 * (i + 1) + r, -hopping);
          t.emplace_back(2 * (i + 1) + r, 2 * i + r, -hopping);
        }
      }
    }
    Eigen::SparseMatrix<double> m(dim(), dim());
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(sparse()); }

  /// Gershgorin enclosure of the spectrum.
  SpectralBounds gershgorin() const {
    SpectralBounds b{1e300, -1e300};
    for (Eigen::Index i = 0; i < grid.n_points; ++i) {
      const double hop = (i > 0 ? hopping : 0.0) + (i + 1 < grid.n_points ? hopping : 0.0);
      for (double d : {diag0[i], diag1[i]}) {
        const double c = d + 2.0 * hopping, r = std::abs(offdiag[i]) + hop;
        b.lower = std::min(b.lower, c - r);
        b.upper = std::max(b.upper, c + r);
      }
    }
    return b;
  }
};

/// Scalar nuclear Hamiltonian on one BO surface: T + eps_k(R).
struct SurfaceHamiltonian {
  GridSpec grid;
  double hopping = 0.0;
  RealArray potential;

  Eigen::Index dim() const { return grid.n_points; }

  void apply(const ComplexArray& x, ComplexArray& y) const {
    const Eigen::Index n = grid.n_points;
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      cplx v = (potential[i] + 2.0 * hopping) * x[i];
      if (i > 0) v -= hopping * x[i - 1];
      if (i + 1 < n) v -= hopping * x[i + 1];
      y[i] = v;
    }
  }

  Eigen::SparseMatrix<double> sparse() const {
    const Eigen::Index n = grid.n_points;
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, potential[i] + 2.0 * hopping);
      if (i + 1 < n && hopping != 0.0) {
        t.emplace_back(i, i + 1, -hopping);
        t.emplace_back(i + 1, i, -hopping);
      }
    }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  SpectralBounds gershgorin() const {
    return {potential.minCoeff(), potential.maxCoeff() + 4.0 * hopping};
  }
};

inline Hamiltonian assemble_hamiltonian(const ModelParams& params, const GridSpec& grid) {
  Potentials pot = eval_potentials(params, grid);
  Hamiltonian h;
  h.grid = grid;
  h.hopping = params.JL;
  h.diag0 = pot.v0.array() + 0.5 * params.g0;
  h.diag1 = pot.v0.array() - 0.5 * params.g0;
  h.offdiag = pot.vx;
  return h;
}

inline SurfaceHamiltonian surface_hamiltonian(const BOData& bo, int k) {
  return {bo.grid, bo.params.JL, bo.eps(k)};
}

/// Largest element of |H - H^T| (the operator is real, so this is |H - H^dagger|).
inline double hermiticity_defect(const Hamiltonian& h) {
  Eigen::SparseMatrix<double> m = h.sparse();
  Eigen::SparseMatrix<double> d = m - Eigen::SparseMatrix<double>(m.transpose());
  double worst = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(d, k); it; ++it)
      worst = std::max(worst, std::abs(it.value()));
  return worst;
}

/// Spectral range E_max - E_min, the time scale omega_B.
template <LinearOperator Op>
double energy_width(const Op& h, double rel_tol = 1e-6) {
  return lanczos_extremes(h, rel_tol).width();
}

} // namespace deortho

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <vector>

#include "deortho/efactor.hpp"
#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/model.hpp"
#include "deortho/propagator.hpp"

namespace deortho {

/// n_jk(R) = sum_r Psi_j*(r, R) Psi_k(r, R)
inline ComplexArray cross_density(const SpinorField& psi_j, const SpinorField& psi_k) {
  require_same(psi_j, psi_k);
  const Eigen::Index n = psi_j.grid.n_points;
  ComplexArray out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = std::conj(psi_j.values[2 * i]) * psi_k.values[2 * i] +
             std::conj(psi_j.values[2 * i + 1]) * psi_k.values[2 * i + 1];
  return out;
}

inline void check_coefficients(cplx c0, cplx c1) {
  const double norm = std::norm(c0) + std::norm(c1);
  if (std::abs(norm - 1.0) > 1e-10)
    throw CoefficientError("|c0|^2 + |c1|^2 = " + std::to_string(norm) + ", expected 1");
}

struct DensityDecomposition {
  RealArray n0, n1;
  ComplexArray n01;
  RealArray n_total;
  RealArray cross;  // 2 Re[c0* c1 n01]
  cplx c0, c1;
  double weight = 0.0;  // W = sum_R |n01| dR
};

inline DensityDecomposition assemble_total(const RealArray& n0, const RealArray& n1,
                                           const ComplexArray& n01, cplx c0, cplx c1, double dR) {
  check_coefficients(c0, c1);
  if (n0.size() != n1.size() || n0.size() != n01.size())
    throw InvalidArgument("density arrays differ in length");
  DensityDecomposition d{n0, n1, n01, {}, {}, c0, c1, 0.0};
  d.cross = 2.0 * (std::conj(c0) * c1 * n01.array()).real().matrix();
  d.n_total = std::norm(c0) * n0 + std::norm(c1) * n1 + d.cross;
  d.weight = n01.cwiseAbs().sum() * dR;
  return d;
}

inline DensityDecomposition decompose(const SpinorField& psi0, const SpinorField& psi1, cplx c0,
                                      cplx c1) {
  return assemble_total(marginal_density(psi0), marginal_density(psi1), cross_density(psi0, psi1),
                        c0, c1, psi0.grid.dR);
}

struct ReducedDensityMatrix {
  Eigen::Matrix2cd rho = Eigen::Matrix2cd::Zero();

  double trace() const { return rho.trace().real(); }
  double hermiticity_defect() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::Matrix2cd h = 0.5 * (rho + rho.adjoint());
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd>(h, Eigen::EigenvaluesOnly).eigenvalues()[0];
  }
};

/// rho_lm = sum_R dR <e_l|Psi> <Psi|e_m> in the BO basis.
inline ReducedDensityMatrix reduced_density_matrix(const SpinorField& psi, const BOData& bo) {
  if (!same_grid(psi.grid, bo.grid)) throw InvalidArgument("field and BO grids differ");
  ReducedDensityMatrix out;
  for (Eigen::Index i = 0; i < psi.grid.n_points; ++i) {
    const Eigen::Vector2cd v = psi.spinor(i);
    const Eigen::Vector2cd proj(bo.evec0.col(i).cast<cplx>().dot(v), bo.evec1.col(i).cast<cplx>().dot(v));
    out.rho += proj * proj.adjoint();
  }
  out.rho *= psi.grid.dR;
  return out;
}

/// rho^e = sum_j |c_j|^2 rho^j + sum_{j != k} c_j* c_k rho^jk, each term a
/// quadrature of factor-level integrands over the points valid in both factors.
struct RhoDecomposition {
  std::array<Eigen::Matrix2cd, 2> rho_j;
  Eigen::Matrix2cd rho_01, rho_10;
  Eigen::Matrix2cd total;
  double masked_weight = 0.0;  // density carried by masked points

  bool masked_warning(double limit = 1e-8) const { return masked_weight > limit; }
};

inline RhoDecomposition ef_decompose_rho(const SpinorField& psi0, const SpinorField& psi1,
                                         const BOData& bo, cplx c0, cplx c1, double eps_den = 1e-12) {
  require_same(psi0, psi1);
  check_coefficients(c0, c1);
  const std::array<FactorField, 2> f{extract_factors(psi0, eps_den), extract_factors(psi1, eps_den)};
  const std::array<cplx, 2> c{c0, c1};
  const std::array<RealArray, 2> dens{marginal_density(psi0), marginal_density(psi1)};
  const double dR = psi0.grid.dR;
  RhoDecomposition out;
  std::array<std::array<Eigen::Matrix2cd, 2>, 2> term;
  for (auto& row : term)
    for (auto& m : row) m.setZero();

  for (Eigen::Index i = 0; i < psi0.grid.n_points; ++i) {
    const Eigen::Matrix2cd basis = (Eigen::Matrix2d() << bo.evec0.col(i), bo.evec1.col(i)).finished().cast<cplx>();
    // proj[k](l) = <e_l|phi_k>
    std::array<Eigen::Vector2cd, 2> proj;
    for (int k = 0; k < 2; ++k) proj[k] = basis.adjoint() * f[k].phi.col(i);
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        if (!(f[j].valid[i] && f[k].valid[i])) continue;
        const cplx w = std::conj(f[j].y[i]) * f[k].y[i];
        term[j][k] += w * proj[k] * proj[j].adjoint();
      }
    for (int k = 0; k < 2; ++k)
      if (!f[k].valid[i]) out.masked_weight += std::norm(c[k]) * dens[k][i] * dR;
  }
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) term[j][k] *= dR;

  out.rho_j = {term[0][0], term[1][1]};
  out.rho_01 = term[0][1];
  out.rho_10 = term[1][0];
  out.total = std::norm(c0) * term[0][0] + std::norm(c1) * term[1][1] + std::conj(c0) * c1 * term[0][1] +
              std::conj(c1) * c0 * term[1][0];
  return out;
}

} // namespace deortho

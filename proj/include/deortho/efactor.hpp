#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/model.hpp"
#include "deortho/propagator.hpp"

namespace deortho {

/// Real field with a per-point validity mask.
struct MaskedReal {
  RealArray values;
  Mask valid;
};

/// Complex field with a per-point validity mask.
struct MaskedComplex {
  ComplexArray values;
  Mask valid;
};

inline Eigen::Index count_valid(const Mask& m) {
  return static_cast<Eigen::Index>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

/// n_k(R) = sum_r |Psi_k(r, R)|^2
inline RealArray marginal_density(const SpinorField& psi) {
  const Eigen::Index n = psi.grid.n_points;
  RealArray out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = std::norm(psi.values[2 * i]) + std::norm(psi.values[2 * i + 1]);
  return out;
}

/// Points where n >= eps_den * max n.
inline Mask density_mask(const RealArray& n, double eps_den) {
  if (!(eps_den > 0.0)) throw InvalidArgument("eps_den must be positive");
  const double floor = eps_den * (n.size() ? n.maxCoeff() : 0.0);
  Mask m(static_cast<std::size_t>(n.size()), 0);
  if (!(floor > 0.0)) return m;
  for (Eigen::Index i = 0; i < n.size(); ++i) m[i] = n[i] >= floor ? 1 : 0;
  return m;
}

/// Psi = Y phi with <phi|phi> = 1 at each valid R. Y is complex: its phase is
/// fixed by the electronic gauge, which makes the larger diabatic component of
/// phi real-positive.
struct FactorField {
  GridSpec grid;
  double time = 0.0;
  RealArray y_abs;
  ComplexArray y;
  Eigen::Matrix2Xcd phi;
  Mask valid;

  Eigen::Vector2cd phi_at(Eigen::Index i) const { return phi.col(i); }
};

inline FactorField extract_factors(const SpinorField& psi, double eps_den = 1e-12) {
  const Eigen::Index n = psi.grid.n_points;
  RealArray dens = marginal_density(psi);
  FactorField f{psi.grid, psi.time, RealArray::Zero(n), ComplexArray::Zero(n),
                Eigen::Matrix2Xcd::Zero(2, n), density_mask(dens, eps_den)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!f.valid[i]) continue;
    const cplx a = psi.values[2 * i], b = psi.values[2 * i + 1];
    const double mag = std::sqrt(dens[i]);
    const cplx lead = std::abs(a) >= std::abs(b) ? a : b;
    const cplx phase = lead / std::abs(lead);
    f.y_abs[i] = mag;
    f.y[i] = mag * phase;
    f.phi(0, i) = a / f.y[i];
    f.phi(1, i) = b / f.y[i];
  }
  return f;
}

/// Same factorisation in the gauge where <e_k(R)|phi(R)> is real-positive, e_k
/// being the BO eigenvector the component started on. Points where that
/// projection is below `eps_den` relative to |Y| are masked.
inline FactorField extract_factors_bo_gauge(const SpinorField& psi, const BOData& bo, int k,
                                            double eps_den = 1e-12) {
  FactorField f = extract_factors(psi, eps_den);
  const auto& ev = bo.evec(k);
  for (Eigen::Index i = 0; i < psi.grid.n_points; ++i) {
    if (!f.valid[i]) continue;
    const cplx proj = ev(0, i) * psi.values[2 * i] + ev(1, i) * psi.values[2 * i + 1];
    if (std::abs(proj) < eps_den * f.y_abs[i]) {
      f.valid[i] = 0;
      continue;
    }
    f.y[i] = f.y_abs[i] * proj / std::abs(proj);
    f.phi(0, i) = psi.values[2 * i] / f.y[i];
    f.phi(1, i) = psi.values[2 * i + 1] / f.y[i];
  }
  return f;
}

inline void require_same(const SpinorField& a, const SpinorField& b) {
  if (!same_grid(a.grid, b.grid)) throw InvalidArgument("fields live on different grids");
  if (a.time != b.time) throw InvalidArgument("fields belong to different times");
}

inline MaskedComplex factor_overlap(const FactorField& f0, const FactorField& f1) {
  const Eigen::Index n = f0.grid.n_points;
  MaskedComplex out{ComplexArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(f0.valid[i] && f1.valid[i])) continue;
    out.valid[i] = 1;
    out.values[i] = f0.phi.col(i).dot(f1.phi.col(i));
  }
  return out;
}

/// <phi_0(t,R)|phi_1(t,R)> in the extract_factors gauge.
inline MaskedComplex overlap_field(const SpinorField& psi0, const SpinorField& psi1,
                                   double eps_den = 1e-12) {
  require_same(psi0, psi1);
  return factor_overlap(extract_factors(psi0, eps_den), extract_factors(psi1, eps_den));
}

/// Overlap with phi_k in the gauge where <e_k|phi_k> is real-positive.
inline MaskedComplex overlap_bo_gauge(const SpinorField& psi0, const SpinorField& psi1,
                                      const BOData& bo, double eps_den = 1e-12) {
  require_same(psi0, psi1);
  return factor_overlap(extract_factors_bo_gauge(psi0, bo, 0, eps_den),
                        extract_factors_bo_gauge(psi1, bo, 1, eps_den));
}

/// |n_01| / (|Y_0||Y_1|), the gauge-free route to |overlap|.
inline MaskedReal overlap_magnitude(const SpinorField& psi0, const SpinorField& psi1,
                                    double eps_den = 1e-12) {
  require_same(psi0, psi1);
  const RealArray n0 = marginal_density(psi0), n1 = marginal_density(psi1);
  const Mask m0 = density_mask(n0, eps_den), m1 = density_mask(n1, eps_den);
  const Eigen::Index n = psi0.grid.n_points;
  MaskedReal out{RealArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(m0[i] && m1[i])) continue;
    const cplx n01 = std::conj(psi0.values[2 * i]) * psi1.values[2 * i] +
                     std::conj(psi0.values[2 * i + 1]) * psi1.values[2 * i + 1];
    out.values[i] = std::abs(n01) / std::sqrt(n0[i] * n1[i]);
    out.valid[i] = 1;
  }
  return out;
}

namespace detail {

/// Neighbours usable for a derivative at i: central if both are valid,
/// one-sided at region edges, none for isolated points.
struct Stencil {
  Eigen::Index lo, hi;
  double span;  // hi - lo in grid steps
};

inline std::optional<Stencil> stencil_at(const Mask& valid, Eigen::Index i) {
  const Eigen::Index n = static_cast<Eigen::Index>(valid.size());
  if (!valid[i]) return std::nullopt;
  const bool left = i > 0 && valid[i - 1];
  const bool right = i + 1 < n && valid[i + 1];
  if (left && right) return Stencil{i - 1, i + 1, 2.0};
  if (right) return Stencil{i, i + 1, 1.0};
  if (left) return Stencil{i - 1, i, 1.0};
  return std::nullopt;
}

/// d phi / dR at every point with a usable stencil.
inline Eigen::Matrix2Xcd phi_derivative(const FactorField& f, Mask& usable) {
  const Eigen::Index n = f.grid.n_points;
  Eigen::Matrix2Xcd d = Eigen::Matrix2Xcd::Zero(2, n);
  usable.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto s = stencil_at(f.valid, i);
    if (!s) continue;
    usable[i] = 1;
    d.col(i) = (f.phi.col(s->hi) - f.phi.col(s->lo)) / (s->span * f.grid.dR);
  }
  return d;
}

} // namespace detail

/// A(R) = Re <phi| -i d_R phi>.
inline MaskedReal vector_potential(const FactorField& f) {
  Mask usable;
  Eigen::Matrix2Xcd d = detail::phi_derivative(f, usable);
  MaskedReal out{RealArray::Zero(f.grid.n_points), usable};
  for (Eigen::Index i = 0; i < f.grid.n_points; ++i)
    if (usable[i]) out.values[i] = (cplx(0.0, -1.0) * f.phi.col(i).dot(d.col(i))).real();
  return out;
}

/// Gauge-invariant current Im sum_r Psi* d_R Psi (central differences, masked).
inline MaskedReal nuclear_current(const SpinorField& psi, const Mask& valid) {
  const Eigen::Index n = psi.grid.n_points;
  MaskedReal out{RealArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    auto s = detail::stencil_at(valid, i);
    if (!s) continue;
    cplx acc = 0.0;
    for (int r = 0; r < 2; ++r)
      acc += std::conj(psi.values[2 * i + r]) *
             (psi.values[2 * s->hi + r] - psi.values[2 * s->lo + r]) / (s->span * psi.grid.dR);
    out.values[i] = acc.imag();
    out.valid[i] = 1;
  }
  return out;
}

/// Nuclear momentum function p = -i d_R Y / Y + A.
///
/// Im p = -d_R ln|Y| from a log-ratio stencil, exact for Gaussian |Y|.
/// Re p = d_R S + A = J / |Y|^2, taken from the gauge-invariant current so that
/// gauge switches in the piecewise electronic gauge do not enter.
inline MaskedComplex momentum_function(const SpinorField& psi, const FactorField& f) {
  const Eigen::Index n = f.grid.n_points;
  MaskedReal current = nuclear_current(psi, f.valid);
  MaskedComplex out{ComplexArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    auto s = detail::stencil_at(f.valid, i);
    if (!s) continue;
    const double qm = -(std::log(f.y_abs[s->hi]) - std::log(f.y_abs[s->lo])) / (s->span * f.grid.dR);
    const double re = current.values[i] / (f.y_abs[i] * f.y_abs[i]);
    out.values[i] = cplx(re, qm);
    out.valid[i] = 1;
  }
  return out;
}

struct TdpesParts {
  MaskedReal bo_expectation;  // <phi|H_BO|phi>
  MaskedReal eps_na;          // (mu/2M) |(-i d_R - A) phi|^2
};

/// Gauge-invariant parts of the TDPES. The kinetic prefactor mu/2M is J_L dR^2.
inline TdpesParts tdpes_gi_part(const FactorField& f, const BOData& bo) {
  if (!same_grid(f.grid, bo.grid)) throw InvalidArgument("factor and BO grids differ");
  const Eigen::Index n = f.grid.n_points;
  const double c = bo.params.JL * f.grid.dR * f.grid.dR;
  Mask usable;
  Eigen::Matrix2Xcd d = detail::phi_derivative(f, usable);
  MaskedReal a = vector_potential(f);
  TdpesParts out{{RealArray::Zero(n), f.valid}, {RealArray::Zero(n), usable}};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!f.valid[i]) continue;
    const Eigen::Vector2cd p = f.phi.col(i);
    out.bo_expectation.values[i] = p.dot(bo.h_bo(i).cast<cplx>() * p).real();
    if (usable[i]) {
      const Eigen::Vector2cd v = cplx(0.0, -1.0) * d.col(i) - a.values[i] * p;
      out.eps_na.values[i] = c * v.squaredNorm();
    }
  }
  return out;
}

/// Gauge-dependent term <phi|-i d_t phi> from two consecutive snapshots,
/// evaluated as -arg<phi(t1)|phi(t2)> / (t2 - t1).
inline MaskedReal gauge_time_term(const FactorField& earlier, const FactorField& later) {
  if (!same_grid(earlier.grid, later.grid)) throw InvalidArgument("factor grids differ");
  const double dt = later.time - earlier.time;
  if (!(dt > 0.0)) throw InvalidArgument("snapshots must be time ordered");
  const Eigen::Index n = earlier.grid.n_points;
  MaskedReal out{RealArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(earlier.valid[i] && later.valid[i])) continue;
    out.values[i] = -std::arg(earlier.phi.col(i).dot(later.phi.col(i))) / dt;
    out.valid[i] = 1;
  }
  return out;
}

/// Per-component diagnostics for one snapshot.
struct ComponentDiagnostics {
  FactorField factors;
  MaskedReal a_field;
  MaskedComplex p_field;
  MaskedReal current;
  TdpesParts tdpes;
};

struct EFDiagnostics {
  std::array<ComponentDiagnostics, 2> component;
  MaskedComplex overlap;
};

inline ComponentDiagnostics component_diagnostics(const SpinorField& psi, const BOData& bo,
                                                  double eps_den = 1e-12) {
  FactorField f = extract_factors(psi, eps_den);
  MaskedReal a = vector_potential(f);
  MaskedComplex p = momentum_function(psi, f);
  MaskedReal j = nuclear_current(psi, f.valid);
  TdpesParts t = tdpes_gi_part(f, bo);
  return {std::move(f), std::move(a), std::move(p), std::move(j), std::move(t)};
}

inline EFDiagnostics ef_diagnostics(const SpinorField& psi0, const SpinorField& psi1,
                                    const BOData& bo, double eps_den = 1e-12) {
  require_same(psi0, psi1);
  EFDiagnostics d{{component_diagnostics(psi0, bo, eps_den), component_diagnostics(psi1, bo, eps_den)},
                  {}};
  d.overlap = factor_overlap(d.component[0].factors, d.component[1].factors);
  return d;
}

} // namespace deortho

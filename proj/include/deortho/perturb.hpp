#pragma once

#include <Eigen/Dense>

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "deortho/efactor.hpp"
#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/model.hpp"
#include "deortho/propagator.hpp"

namespace deortho {

/// phi_k^(0)(t, R) = exp(-i eps_k(R) t) e_k(R) together with the adiabatic
/// nuclear amplitude chi_k^ad on a uniform time mesh.
struct ZerothOrderFactors {
  int k = 0;
  GridSpec grid;
  double JL = 0.0;
  std::vector<double> times;
  std::vector<ComplexArray> chi;
  RealArray eps;
  Eigen::Matrix2Xd evec;

  std::size_t size() const { return times.size(); }

  Eigen::Vector2cd phi(std::size_t s, Eigen::Index i) const {
    return std::exp(cplx(0.0, -eps[i] * times[s])) * evec.col(i).cast<cplx>();
  }

  /// The factor field at mesh point s.
  FactorField factors(std::size_t s, double eps_den = 1e-12) const {
    const Eigen::Index n = grid.n_points;
    RealArray dens = chi[s].cwiseAbs2();
    FactorField f{grid, times[s], dens.cwiseSqrt(), ComplexArray::Zero(n), Eigen::Matrix2Xcd::Zero(2, n),
                  density_mask(dens, eps_den)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2cd p = phi(s, i);
      f.phi.col(i) = p;
      f.y[i] = chi[s][i] * std::exp(cplx(0.0, eps[i] * times[s]));
    }
    return f;
  }

  /// p|_k^0 = -i d_R chi / chi (A = 0 for real BO states), masked by the density floor.
  MaskedComplex momentum(std::size_t s, double eps_den = 1e-12) const {
    const Eigen::Index n = grid.n_points;
    Mask valid = density_mask(chi[s].cwiseAbs2(), eps_den);
    MaskedComplex out{ComplexArray::Zero(n), Mask(static_cast<std::size_t>(n), 0)};
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!valid[i] || i == 0 || i + 1 == n || !valid[i - 1] || !valid[i + 1]) continue;
      out.values[i] = cplx(0.0, -1.0) * (chi[s][i + 1] - chi[s][i - 1]) / (2.0 * grid.dR * chi[s][i]);
      out.valid[i] = 1;
    }
    return out;
  }
};

inline ZerothOrderFactors zeroth_factors(int k, const BOData& bo, const RunRecord& adiabatic) {
  if (!adiabatic.adiabatic || adiabatic.component != k)
    throw InvalidArgument("zeroth-order factors need the adiabatic record of surface " + std::to_string(k));
  if (!same_grid(bo.grid, adiabatic.grid)) throw InvalidArgument("BO data and record grids differ");
  ZerothOrderFactors z{k, bo.grid, bo.params.JL, {}, {}, bo.eps(k), bo.evec(k)};
  for (const auto& ch : adiabatic.channels) {
    z.times.push_back(ch.time);
    z.chi.push_back(ch.chi);
  }
  return z;
}

/// <phi_j^(0)|phi_k^(0)> per R at mesh point s.
inline ComplexArray zeroth_overlap(const ZerothOrderFactors& zj, const ZerothOrderFactors& zk,
                                   std::size_t s) {
  ComplexArray out(zj.grid.n_points);
  for (Eigen::Index i = 0; i < zj.grid.n_points; ++i) out[i] = zj.phi(s, i).dot(zk.phi(s, i));
  return out;
}

/// 2-spinor field over the grid with a validity mask.
struct MaskedSpinor {
  Eigen::Matrix2Xcd values;
  Mask valid;
};

/// Continuum-stencil ENC operator V = U_K + U_Q - eps_NA at fixed t with
/// U_K = c (-i D - A)^2 and U_Q = 2 c p (-i D - A), where c = mu/2M = J_L dR^2
/// and D is the central difference. Acts on spinor fields; rows at region
/// edges are dropped.
///
/// The subtracted diagonal is <phi|(U_K + U_Q) phi> with the same stencils.
/// Its real part is eps_NA up to O(dR^2); its imaginary part vanishes in the
/// continuum and here absorbs the stencil error, so <phi|V phi> = 0 exactly.
struct EncOperator {
  GridSpec grid;
  double c = 0.0;
  RealArray a;
  ComplexArray p;
  ComplexArray shift;
  RealArray eps_na;  // Re <phi|U_K phi>
  Mask interior;

  Eigen::Index dim() const { return 2 * grid.n_points; }

  MaskedSpinor apply(const Eigen::Matrix2Xcd& psi) const {
    const Eigen::Index n = grid.n_points;
    const double h = grid.dR;
    const cplx I(0.0, 1.0);
    MaskedSpinor out{Eigen::Matrix2Xcd::Zero(2, n), interior};
    // m = (-i D - A) psi
    auto m_at = [&](Eigen::Index i) -> Eigen::Vector2cd {
      return -I * (psi.col(i + 1) - psi.col(i - 1)) / (2.0 * h) - a[i] * psi.col(i);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!interior[i]) continue;
      const Eigen::Vector2cd lap = (psi.col(i + 1) + psi.col(i - 1) - 2.0 * psi.col(i)) / (h * h);
      const Eigen::Vector2cd d_apsi = (a[i + 1] * psi.col(i + 1) - a[i - 1] * psi.col(i - 1)) / (2.0 * h);
      const Eigen::Vector2cd d_psi = (psi.col(i + 1) - psi.col(i - 1)) / (2.0 * h);
      // (-iD - A)^2 = -Lap + i D(A .) + i A D + A^2
      const Eigen::Vector2cd uk = c * (-lap + I * d_apsi + I * a[i] * d_psi + a[i] * a[i] * psi.col(i));
      const Eigen::Vector2cd uq = 2.0 * c * p[i] * m_at(i);
      out.values.col(i) = uk + uq - shift[i] * psi.col(i);
    }
    return out;
  }

  /// Dense matrix on the interior rows (zero rows elsewhere); for small grids.
  Eigen::MatrixXcd dense() const {
    const Eigen::Index n = grid.n_points;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    for (Eigen::Index col = 0; col < 2 * n; ++col) {
      Eigen::Matrix2Xcd e = Eigen::Matrix2Xcd::Zero(2, n);
      e(col % 2, col / 2) = 1.0;
      MaskedSpinor r = apply(e);
      for (Eigen::Index i = 0; i < n; ++i) m.block(2 * i, col, 2, 1) = r.values.col(i);
    }
    return m;
  }
};

namespace detail {

/// Interior points (both neighbours valid); every contiguous valid region must
/// be at least three points wide.
inline Mask enc_interior(const Mask& valid) {
  const std::size_t n = valid.size();
  Mask interior(n, 0);
  std::size_t i = 0;
  while (i < n) {
    if (!valid[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && valid[j]) ++j;
    if (j - i < 3)
      throw StencilError("valid region [" + std::to_string(i) + ", " + std::to_string(j - 1) +
                         "] is narrower than the three-point stencil");
    for (std::size_t q = i + 1; q + 1 < j; ++q) interior[q] = 1;
    i = j;
  }
  return interior;
}

} // namespace detail

inline EncOperator make_enc_operator(const FactorField& f, const MaskedComplex& p_field,
                                     const MaskedReal& a_field, double JL) {
  const Eigen::Index n = f.grid.n_points;
  Mask valid(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) valid[i] = f.valid[i] && p_field.valid[i] && a_field.valid[i];
  EncOperator op{f.grid, JL * f.grid.dR * f.grid.dR, a_field.values, p_field.values, ComplexArray::Zero(n),
                 RealArray::Zero(n), detail::enc_interior(valid)};
  EncOperator uk = op;
  uk.p.setZero();
  const MaskedSpinor kin = uk.apply(f.phi);
  const MaskedSpinor both = op.apply(f.phi);
  for (Eigen::Index i = 0; i < n; ++i)
    if (op.interior[i]) {
      op.eps_na[i] = f.phi.col(i).dot(kin.values.col(i)).real();
      op.shift[i] = f.phi.col(i).dot(both.values.col(i));
    }
  return op;
}

/// [U_K + U_Q - eps_NA] phi on the interior of the valid region.
inline MaskedSpinor apply_enc(const FactorField& f, const MaskedComplex& p_field,
                              const MaskedReal& a_field, double JL) {
  return make_enc_operator(f, p_field, a_field, JL).apply(f.phi);
}

/// max |V - V^dagger| over the dense interior operator.
inline double enc_nonhermiticity(const EncOperator& op) {
  Eigen::MatrixXcd m = op.dense();
  const Eigen::Index n = op.grid.n_points;
  // restrict to interior rows and columns
  for (Eigen::Index i = 0; i < n; ++i)
    if (!op.interior[i]) {
      m.middleRows(2 * i, 2).setZero();
      m.middleCols(2 * i, 2).setZero();
    }
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

namespace detail {

/// G_jk(R) = <e_j(R)| (T Psi_k^ad)(R)> / chi_k^ad(R): the lattice-exact ENC
/// matrix element between BO states with the phases of phi^(0) stripped.
inline ComplexArray enc_element(const ZerothOrderFactors& zj, const ZerothOrderFactors& zk,
                                std::size_t s, const Mask& valid) {
  const Eigen::Index n = zk.grid.n_points;
  ComplexArray out = ComplexArray::Zero(n);
  const ComplexArray& chi = zk.chi[s];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    cplx acc = 0.0;
    if (i + 1 < n) acc += chi[i + 1] / chi[i] * zj.evec.col(i).dot(zk.evec.col(i + 1));
    if (i > 0) acc += chi[i - 1] / chi[i] * zj.evec.col(i).dot(zk.evec.col(i - 1));
    out[i] = -zk.JL * acc;
  }
  return out;
}

} // namespace detail

struct S1Result {
  ComplexArray value;     // gauge of phi^(0): S^(1) including its J_L prefactor
  ComplexArray bo_gauge;  // value * exp(i (eps_k - eps_j) t)
  Mask valid;
  double t = 0.0;
  double richardson = 0.0;      // |S_N - S_{N/2}| / 3, relative to max |S_N|
  double masked_measure = 0.0;  // chi_ini^2-weight of masked points
  int panels = 0;
};

/// First-order overlap <phi_j|phi_k>^(1)(t, R) by composite trapezoid over the
/// zeroth-order mesh, which must be uniform with `quad_steps` panels (even).
inline S1Result s1_overlap(const ZerothOrderFactors& zj, const ZerothOrderFactors& zk, int quad_steps,
                           double eps_den = 1e-12, double richardson_tol = 1e-6) {
  if (zj.k == zk.k) throw InvalidArgument("s1_overlap needs distinct surfaces");
  if (!same_grid(zj.grid, zk.grid) || zj.times != zk.times)
    throw ScheduleMismatch("zeroth-order factors use different grids or meshes");
  const std::size_t m = zj.size();
  if (m < 1) throw InvalidArgument("empty time mesh");
  const int panels = static_cast<int>(m) - 1;
  if (panels != quad_steps)
    throw InvalidArgument("time mesh has " + std::to_string(panels) + " panels, quad_steps = " +
                          std::to_string(quad_steps));
  const Eigen::Index n = zj.grid.n_points;
  const double t = zj.times.back();
  S1Result res;
  res.t = t;
  res.panels = panels;
  res.valid.assign(static_cast<std::size_t>(n), 1);
  if (panels == 0) {
    res.value = res.bo_gauge = ComplexArray::Zero(n);
    return res;
  }
  if (panels % 2) throw InvalidArgument("quad_steps must be even for the Richardson check");
  const double dt = t / panels;
  for (std::size_t s = 1; s < m; ++s)
    if (std::abs(zj.times[s] - zj.times[s - 1] - dt) > 1e-9 * dt)
      throw InvalidArgument("time mesh is not uniform");

  // Points masked at any mesh time are excluded throughout.
  std::vector<ComplexArray> g(m);
  for (std::size_t s = 0; s < m; ++s) {
    const Mask vj = density_mask(zj.chi[s].cwiseAbs2(), eps_den);
    const Mask vk = density_mask(zk.chi[s].cwiseAbs2(), eps_den);
    for (Eigen::Index i = 0; i < n; ++i) res.valid[i] = res.valid[i] && vj[i] && vk[i];
  }
  for (std::size_t s = 0; s < m; ++s) {
    const ComplexArray g_jk = detail::enc_element(zj, zk, s, res.valid);
    const ComplexArray g_kj = detail::enc_element(zk, zj, s, res.valid);
    g[s].resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      g[s][i] = std::exp(cplx(0.0, (zj.eps[i] - zk.eps[i]) * zj.times[s])) *
                (std::conj(g_kj[i]) - g_jk[i]);
  }
  auto trapezoid = [&](int stride) {
    ComplexArray acc = 0.5 * (g.front() + g.back());
    for (std::size_t s = static_cast<std::size_t>(stride); s + 1 < m; s += static_cast<std::size_t>(stride)) acc += g[s];
    return ComplexArray(cplx(0.0, dt * stride) * acc);
  };
  res.value = trapezoid(1);
  const ComplexArray coarse = trapezoid(2);
  const double scale = res.value.cwiseAbs().maxCoeff();
  const double diff = (res.value - coarse).cwiseAbs().maxCoeff() / 3.0;
  res.richardson = scale > 0.0 ? diff / scale : 0.0;
  if (scale > 0.0 && res.richardson > richardson_tol)
    throw QuadratureError("Richardson estimate " + std::to_string(res.richardson) + " exceeds " +
                          std::to_string(richardson_tol) + " with " + std::to_string(panels) + " panels");
  res.bo_gauge.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!res.valid[i]) res.value[i] = 0.0;
    res.bo_gauge[i] = res.value[i] * std::exp(cplx(0.0, (zk.eps[i] - zj.eps[i]) * t));
  }
  const RealArray w = zj.chi.front().cwiseAbs2();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!res.valid[i]) res.masked_measure += w[i] * zj.grid.dR;
  return res;
}

struct OrdersRow {
  double JL = 0.0;
  double omega_B = 0.0;
  double residual = 0.0;        // weighted L2 of exact - predicted
  double exact_norm = 0.0;      // weighted L2 of exact
  double relative_error = 0.0;  // residual / exact_norm
  double R0 = 0.0;              // argmax_R |exact|
  double exact_R0 = 0.0;
  double predicted_R0 = 0.0;
};

struct OrdersReport {
  std::vector<OrdersRow> rows;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double band_lo = 0.0, band_hi = 0.0;  // 95 % Student-t interval
  std::vector<double> R;                // points used for per-R slopes
  std::vector<double> slope_per_R;
};

/// One J_L entry of a perturbation series, evaluated at the readout time.
struct SeriesEntry {
  double JL = 0.0;
  double omega_B = 0.0;
  double readout_t = 0.0;   // [1/g0]
  GridSpec grid;
  RealArray weight;         // chi_ini^2
  ComplexArray exact;       // BO-gauge overlap from full dynamics
  ComplexArray predicted;   // BO-gauge first-order prediction
  Mask valid;
};

/// Nuclear amplitudes inside the zeroth-order factors: adiabatic dynamics at the
/// same J_L, or the J_L -> 0 limit chi_ini exp(-i eps_k t), which makes the
/// prediction strictly linear in J_L.
enum class ZerothNuclei { adiabatic, frozen };

/// Runs the exact and adiabatic dynamics for one parameter set and evaluates
/// both overlaps at omega_B t = readout.
inline SeriesEntry series_entry(const ModelParams& params, const GridSpec& grid, double readout,
                                int quad_steps, const PropagationOptions& opts = {},
                                double eps_den = 1e-12, double tol_nac = 1e-4,
                                ZerothNuclei nuclei = ZerothNuclei::adiabatic) {
  const BOData bo = diagonalize_bo(params, grid, tol_nac);
  const double w = omega_b(params, grid);
  const Schedule mesh = Schedule::uniform(readout, quad_steps, w);
  ModelParams p0 = params;
  if (nuclei == ZerothNuclei::frozen) p0.JL = 0.0;
  const BOData bo0 = nuclei == ZerothNuclei::frozen ? diagonalize_bo(p0, grid, tol_nac) : bo;
  const ZerothOrderFactors z0 = zeroth_factors(0, bo, run_adiabatic(0, p0, grid, bo0, mesh, opts));
  const ZerothOrderFactors z1 = zeroth_factors(1, bo, run_adiabatic(1, p0, grid, bo0, mesh, opts));
  const S1Result s1 = s1_overlap(z0, z1, quad_steps, eps_den);

  const Schedule once = Schedule::make({readout}, w);
  const RunRecord full0 = run_component(0, params, grid, bo, once, opts);
  const RunRecord full1 = run_component(1, params, grid, bo, once, opts);
  const MaskedComplex exact = overlap_bo_gauge(full0.fields.back(), full1.fields.back(), bo, eps_den);

  SeriesEntry e;
  e.JL = params.JL;
  e.omega_B = w;
  e.readout_t = readout / w;
  e.grid = grid;
  e.weight = initial_nuclear_amplitude(params, grid).cwiseAbs2();
  e.exact = exact.values;
  e.predicted = s1.bo_gauge;
  e.valid.assign(static_cast<std::size_t>(grid.n_points), 0);
  for (Eigen::Index i = 0; i < grid.n_points; ++i) e.valid[i] = exact.valid[i] && s1.valid[i];
  return e;
}

namespace detail {

struct LineFit {
  double slope = 0.0, intercept = 0.0, stderr_slope = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      sse += r * r;
    }
    f.stderr_slope = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  }
  return f;
}

inline double weighted_l2(const ComplexArray& v, const RealArray& w, const Mask& valid, double dR) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (valid[i]) acc += w[i] * std::norm(v[i]);
  return std::sqrt(acc * dR);
}

} // namespace detail

/// Log-log fit of the first-order residual against J_L. Entries with J_L = 0
/// are reported but excluded from the fit.
inline OrdersReport compare_orders(const std::vector<SeriesEntry>& series, double weight_floor = 1e-6) {
  std::vector<const SeriesEntry*> fit;
  for (const auto& e : series)
    if (e.JL > 0.0) fit.push_back(&e);
  if (fit.size() < 3)
    throw InsufficientSeries("need at least three positive J_L values, got " + std::to_string(fit.size()));
  for (const auto* e : fit)
    if (!same_grid(e->grid, fit.front()->grid)) throw ScheduleMismatch("series entries use different grids");

  OrdersReport rep;
  for (const auto& e : series) {
    OrdersRow row{e.JL, e.omega_B};
    const ComplexArray diff = e.exact - e.predicted;
    row.residual = detail::weighted_l2(diff, e.weight, e.valid, e.grid.dR);
    row.exact_norm = detail::weighted_l2(e.exact, e.weight, e.valid, e.grid.dR);
    row.relative_error = row.exact_norm > 0.0 ? row.residual / row.exact_norm : 0.0;
    Eigen::Index best = e.grid.centre_index();
    double best_val = -1.0;
    for (Eigen::Index i = 0; i < e.grid.n_points; ++i)
      if (e.valid[i] && std::abs(e.exact[i]) > best_val) {
        best_val = std::abs(e.exact[i]);
        best = i;
      }
    row.R0 = e.grid.position(best);
    row.exact_R0 = std::abs(e.exact[best]);
    row.predicted_R0 = std::abs(e.predicted[best]);
    rep.rows.push_back(row);
  }

  std::vector<double> lx, ly;
  for (const auto& row : rep.rows)
    if (row.JL > 0.0) {
      if (!(row.residual > 0.0)) throw InsufficientSeries("zero residual at J_L = " + std::to_string(row.JL));
      lx.push_back(std::log(row.JL));
      ly.push_back(std::log(row.residual));
    }
  const detail::LineFit f = detail::least_squares(lx, ly);
  rep.slope = f.slope;
  rep.slope_stderr = f.stderr_slope;
  const double dof = static_cast<double>(lx.size()) - 2.0;
  const double tq = dof > 0.0
                        ? boost::math::quantile(boost::math::complement(boost::math::students_t(dof), 0.025))
                        : 0.0;
  rep.band_lo = f.slope - tq * f.stderr_slope;
  rep.band_hi = f.slope + tq * f.stderr_slope;

  // Per-R slopes where the initial packet carries weight and all residuals are nonzero.
  const SeriesEntry& ref = *fit.front();
  const double wmax = ref.weight.maxCoeff();
  for (Eigen::Index i = 0; i < ref.grid.n_points; ++i) {
    if (ref.weight[i] < weight_floor * wmax) continue;
    std::vector<double> y;
    bool ok = true;
    for (const auto* e : fit) {
      const double r = std::abs(e->exact[i] - e->predicted[i]);
      if (!e->valid[i] || !(r > 0.0)) {
        ok = false;
        break;
      }
      y.push_back(std::log(r));
    }
    if (!ok) continue;
    rep.R.push_back(ref.grid.position(i));
    rep.slope_per_R.push_back(detail::least_squares(lx, y).slope);
  }
  return rep;
}

} // namespace deortho

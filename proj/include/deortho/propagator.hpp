#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deortho/errors.hpp"
#include "deortho/grid.hpp"
#include "deortho/krylov.hpp"
#include "deortho/model.hpp"

namespace deortho {

/// One full wavefunction component: a diabatic 2-spinor per grid point.
struct SpinorField {
  GridSpec grid;
  ComplexArray values;  // interleaved, index 2 i + r
  double time = 0.0;    // [1/g0]

  static SpinorField zeros(const GridSpec& grid, double time = 0.0) {
    return {grid, ComplexArray::Zero(2 * grid.n_points), time};
  }

  cplx& at(Eigen::Index i, int r) { return values[2 * i + r]; }
  const cplx& at(Eigen::Index i, int r) const { return values[2 * i + r]; }
  Eigen::Vector2cd spinor(Eigen::Index i) const { return {values[2 * i], values[2 * i + 1]}; }

  /// sum_R sum_r |psi|^2 dR
  double norm2() const { return values.squaredNorm() * grid.dR; }
};

/// Nuclear amplitude on a single BO surface (adiabatic dynamics).
struct AdiabaticChannel {
  GridSpec grid;
  int surface = 0;
  ComplexArray chi;
  double time = 0.0;

  double norm2() const { return chi.squaredNorm() * grid.dR; }
};

enum class Scheme { chebyshev, lanczos, crank_nicolson };

inline std::string to_string(Scheme s) {
  switch (s) {
  case Scheme::chebyshev: return "chebyshev";
  case Scheme::lanczos: return "lanczos";
  case Scheme::crank_nicolson: return "crank_nicolson";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "chebyshev") return Scheme::chebyshev;
  if (s == "lanczos") return Scheme::lanczos;
  if (s == "crank_nicolson" || s == "cn") return Scheme::crank_nicolson;
  throw InvalidArgument("unknown propagation scheme '" + s + "'");
}

struct PropagationOptions {
  Scheme scheme = Scheme::lanczos;
  double dt_omega = 0.05;        // step in units of 1/omega_B
  double tol_prop = 1e-10;       // local error per step, relative 2-norm
  int krylov_cap = 30;
  double norm_drift_tol = 1e-12; // per step, relative
  double leakage_tol = 1e-8;
  double boundary_fraction = 0.05;  // outer fraction of the grid monitored for leakage
};

/// Snapshot times in omega_B t units together with omega_B itself.
struct Schedule {
  std::vector<double> omega_t;
  double omega_B = 0.0;

  double time(std::size_t s) const { return omega_t[s] / omega_B; }

  /// Sorted, de-duplicated and anchored at 0.
  static Schedule make(std::vector<double> omega_t, double omega_B) {
    omega_t.push_back(0.0);
    std::sort(omega_t.begin(), omega_t.end());
    std::vector<double> unique;
    for (double x : omega_t) {
      if (x < 0.0) throw InvalidArgument("snapshot times must be non-negative");
      if (unique.empty() || x - unique.back() > 1e-12) unique.push_back(x);
    }
    return {unique, omega_B};
  }

  /// Uniform mesh of `panels` intervals over [0, end] merged with `extra`.
  static Schedule uniform(double end, int panels, double omega_B, std::vector<double> extra = {}) {
    for (int m = 0; m <= panels; ++m) extra.push_back(end * m / panels);
    return make(std::move(extra), omega_B);
  }
};

/// Stepper for exp(-i H dt) with a fixed scheme. Crank-Nicolson factorisations
/// are cached per step size.
template <SparseOperator Op>
class Propagator {
public:
  Propagator(const Op& h, Scheme scheme, double tol = 1e-10, int krylov_cap = 30,
             double norm_drift_tol = 1e-12)
      : h_(h), scheme_(scheme), tol_(tol), cap_(krylov_cap), drift_tol_(norm_drift_tol),
        bounds_(h.gershgorin()) {}

  Scheme scheme() const { return scheme_; }

  KrylovStats step(ComplexArray& psi, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
    const double before = psi.norm();
    KrylovStats stats;
    switch (scheme_) {
    case Scheme::lanczos: stats = lanczos_exp_step(h_, psi, dt, tol_, cap_); break;
    case Scheme::chebyshev:
      stats = chebyshev_exp_step(h_, psi, dt, bounds_, std::min(tol_, 1e-14));
      break;
    case Scheme::crank_nicolson: stats = crank_nicolson_step(psi, dt); break;
    }
    const double after = psi.norm();
    if (!std::isfinite(after) || std::abs(after - before) > drift_tol_ * std::max(before, 1e-300))
      throw StabilityError("norm drift " + std::to_string(std::abs(after - before) / before) +
                           " in one " + to_string(scheme_) + " step");
    return stats;
  }

private:
  struct CnFactor {
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    Eigen::SparseMatrix<cplx> rhs;
  };

  // (1 + i dt/2 (H - E)) psi' = (1 - i dt/2 (H - E)) psi, phase e^{-i E dt} restored
  // exactly. E is the centre of the Gershgorin interval.
  KrylovStats crank_nicolson_step(ComplexArray& psi, double dt) {
    const double mid = 0.5 * (bounds_.lower + bounds_.upper);
    auto it = cn_.find(dt);
    if (it == cn_.end()) {
      Eigen::SparseMatrix<double> hs = h_.sparse();
      Eigen::SparseMatrix<cplx> shifted = hs.cast<cplx>();
      Eigen::SparseMatrix<cplx> id(shifted.rows(), shifted.cols());
      id.setIdentity();
      shifted -= mid * id;
      const cplx half(0.0, 0.5 * dt);
      auto f = std::make_unique<CnFactor>();
      Eigen::SparseMatrix<cplx> lhs = id + half * shifted;
      lhs.makeCompressed();
      f->lu.analyzePattern(lhs);
      f->lu.factorize(lhs);
      if (f->lu.info() != Eigen::Success) throw ConvergenceError("Crank-Nicolson factorisation failed");
      f->rhs = id - half * shifted;
      it = cn_.emplace(dt, std::move(f)).first;
    }
    ComplexArray rhs = it->second->rhs * psi;
    ComplexArray next = it->second->lu.solve(rhs);
    if (it->second->lu.info() != Eigen::Success) throw ConvergenceError("Crank-Nicolson solve failed");
    psi = std::exp(cplx(0.0, -mid * dt)) * next;
    return {1, 0.0};
  }

  const Op& h_;
  Scheme scheme_;
  double tol_;
  int cap_;
  double drift_tol_;
  SpectralBounds bounds_;
  std::map<double, std::unique_ptr<CnFactor>> cn_;
};

/// One-shot propagation of a spinor field by dt.
inline SpinorField propagate(const SpinorField& state, const Hamiltonian& h, double dt,
                             Scheme scheme = Scheme::lanczos, double tol = 1e-10) {
  if (!same_grid(state.grid, h.grid)) throw InvalidArgument("state and Hamiltonian grids differ");
  Propagator<Hamiltonian> prop(h, scheme, tol);
  SpinorField out = state;
  prop.step(out.values, dt);
  out.time += dt;
  return out;
}

/// Normalised Gaussian [sigma sqrt(pi)]^{-1/2} exp(-R^2 / 2 sigma^2) on the grid.
inline RealArray initial_nuclear_amplitude(const ModelParams& params, const GridSpec& grid) {
  RealArray chi(grid.n_points);
  const double pref = 1.0 / std::sqrt(params.sigma * std::sqrt(M_PI));
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    const double R = grid.position(i);
    chi[i] = pref * std::exp(-R * R / (2.0 * params.sigma * params.sigma));
  }
  const double edge = std::max(std::abs(chi[0]), std::abs(chi[grid.n_points - 1]));
  if (edge > 1e-10)
    throw LeakageError("initial wavepacket amplitude " + std::to_string(edge) +
                       " at the grid boundary (grid too small)");
  chi /= std::sqrt(chi.squaredNorm() * grid.dR);
  return chi;
}

/// Psi_k(r, R, 0) = chi_ini(R) <r|phi_k(R)>.
inline SpinorField initial_component(int k, const ModelParams& params, const GridSpec& grid,
                                     const BOData& bo) {
  if (k != 0 && k != 1) throw InvalidArgument("surface index must be 0 or 1");
  RealArray chi = initial_nuclear_amplitude(params, grid);
  SpinorField f = SpinorField::zeros(grid);
  const auto& ev = bo.evec(k);
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    f.at(i, 0) = chi[i] * ev(0, i);
    f.at(i, 1) = chi[i] * ev(1, i);
  }
  return f;
}

/// Probability in the outer `fraction` of the grid on both sides.
inline double boundary_probability(const ComplexArray& values, const GridSpec& grid, int components,
                                   double fraction) {
  const Eigen::Index n = grid.n_points;
  const Eigen::Index edge =
      std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(fraction * n)));
  double p = 0.0;
  for (Eigen::Index i = 0; i < std::min(edge, n); ++i)
    for (int r = 0; r < components; ++r) {
      p += std::norm(values[components * i + r]);
      if (n - 1 - i != i) p += std::norm(values[components * (n - 1 - i) + r]);
    }
  return p * grid.dR;
}

struct RunRecord {
  int component = -1;  // -1 for a directly propagated superposition
  bool adiabatic = false;
  ModelParams params;
  GridSpec grid;
  Scheme scheme = Scheme::lanczos;
  double omega_B = 0.0;
  std::vector<double> omega_t;
  std::vector<SpinorField> fields;
  std::vector<AdiabaticChannel> channels;  // adiabatic runs only
  std::vector<double> boundary_prob;
  std::vector<double> norms;
  std::vector<double> energies;
  long steps = 0;
  double wall_seconds = 0.0;

  double time(std::size_t s) const { return omega_t[s] / omega_B; }
  std::size_t size() const { return omega_t.size(); }
};

namespace detail {

template <class Op>
double expectation(const Op& h, const ComplexArray& psi, double dR) {
  ComplexArray hpsi;
  h.apply(psi, hpsi);
  return psi.dot(hpsi).real() * dR;
}

/// Drives `state` through the schedule; `record` is called at every snapshot.
template <class Op, class Record>
long drive(const Op& h, ComplexArray state, const Schedule& schedule, const PropagationOptions& opts,
           Record&& record) {
  if (!(schedule.omega_B > 0.0)) throw InvalidArgument("schedule has no omega_B");
  Propagator<Op> prop(h, opts.scheme, opts.tol_prop, opts.krylov_cap, opts.norm_drift_tol);
  const double dt_max = opts.dt_omega / schedule.omega_B;
  long steps = 0;
  double t = 0.0;
  for (std::size_t s = 0; s < schedule.omega_t.size(); ++s) {
    const double target = schedule.time(s);
    const double span = target - t;
    if (span > 0.0) {
      // Uniform sub-steps no longer than dt_max; landing exactly on the snapshot.
      const long n = std::max<long>(1, static_cast<long>(std::ceil(span / dt_max - 1e-9)));
      const double dt = span / static_cast<double>(n);
      for (long q = 0; q < n; ++q) prop.step(state, dt);
      steps += n;
    }
    t = target;
    record(s, state);
  }
  return steps;
}

inline RunRecord make_record(int component, bool adiabatic, const ModelParams& params,
                             const GridSpec& grid, const Schedule& schedule,
                             const PropagationOptions& opts) {
  RunRecord rec;
  rec.component = component;
  rec.adiabatic = adiabatic;
  rec.params = params;
  rec.grid = grid;
  rec.scheme = opts.scheme;
  rec.omega_B = schedule.omega_B;
  rec.omega_t = schedule.omega_t;
  return rec;
}

inline void check_leakage(double p, double tol, double omega_t) {
  if (p > tol)
    throw LeakageError("boundary probability " + std::to_string(p) + " exceeds " +
                       std::to_string(tol) + " at omega_B t = " + std::to_string(omega_t));
}

template <class Op>
RunRecord run_full_state(int component, const SpinorField& initial, const Hamiltonian& h,
                         const ModelParams& params, const Schedule& schedule,
                         const PropagationOptions& opts) {
  const GridSpec& grid = initial.grid;
  RunRecord rec = make_record(component, false, params, grid, schedule, opts);
  const auto start = std::chrono::steady_clock::now();
  rec.steps = drive(h, initial.values, schedule, opts, [&](std::size_t s, const ComplexArray& state) {
    rec.fields.push_back({grid, state, schedule.time(s)});
    const double p = boundary_probability(state, grid, 2, opts.boundary_fraction);
    rec.boundary_prob.push_back(p);
    rec.norms.push_back(state.squaredNorm() * grid.dR);
    rec.energies.push_back(expectation(h, state, grid.dR));
    check_leakage(p, opts.leakage_tol, schedule.omega_t[s]);
  });
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

} // namespace detail

/// omega_B of the full coupled Hamiltonian for the given parameters.
inline double omega_b(const ModelParams& params, const GridSpec& grid, double rel_tol = 1e-6) {
  return energy_width(assemble_hamiltonian(params, grid), rel_tol);
}

/// Full TDSE propagation of component k, Psi_k(0) = chi_ini phi_k.
inline RunRecord run_component(int k, const ModelParams& params, const GridSpec& grid,
                               const BOData& bo, const Schedule& schedule,
                               const PropagationOptions& opts = {}) {
  Hamiltonian h = assemble_hamiltonian(params, grid);
  return detail::run_full_state<Hamiltonian>(k, initial_component(k, params, grid, bo), h, params,
                                             schedule, opts);
}

/// Direct propagation of c0 Psi_0(0) + c1 Psi_1(0).
inline RunRecord run_superposition(const ModelParams& params, const GridSpec& grid, const BOData& bo,
                                   const Schedule& schedule, const PropagationOptions& opts = {}) {
  Hamiltonian h = assemble_hamiltonian(params, grid);
  SpinorField init = initial_component(0, params, grid, bo);
  init.values = params.c0 * init.values + params.c1 * initial_component(1, params, grid, bo).values;
  return detail::run_full_state<Hamiltonian>(-1, init, h, params, schedule, opts);
}

/// chi_k^ad on surface eps_k with the same kinetic operator and no interchannel
/// coupling. Fields are stored as chi_k^ad(R, t) phi_k(R) so the downstream
/// analysis treats both kinds of record alike.
inline RunRecord run_adiabatic(int k, const ModelParams& params, const GridSpec& grid,
                               const BOData& bo, const Schedule& schedule,
                               const PropagationOptions& opts = {}) {
  if (k != 0 && k != 1) throw InvalidArgument("surface index must be 0 or 1");
  SurfaceHamiltonian h = surface_hamiltonian(bo, k);
  RunRecord rec = detail::make_record(k, true, params, grid, schedule, opts);
  ComplexArray chi0 = initial_nuclear_amplitude(params, grid).cast<cplx>();
  const auto& ev = bo.evec(k);
  const auto start = std::chrono::steady_clock::now();
  rec.steps = detail::drive(h, chi0, schedule, opts, [&](std::size_t s, const ComplexArray& chi) {
    const double t = schedule.time(s);
    rec.channels.push_back({grid, k, chi, t});
    SpinorField f = SpinorField::zeros(grid, t);
    for (Eigen::Index i = 0; i < grid.n_points; ++i) {
      f.at(i, 0) = chi[i] * ev(0, i);
      f.at(i, 1) = chi[i] * ev(1, i);
    }
    const double p = boundary_probability(chi, grid, 1, opts.boundary_fraction);
    rec.fields.push_back(std::move(f));
    rec.boundary_prob.push_back(p);
    rec.norms.push_back(chi.squaredNorm() * grid.dR);
    rec.energies.push_back(detail::expectation(h, chi, grid.dR));
    detail::check_leakage(p, opts.leakage_tol, schedule.omega_t[s]);
  });
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

inline void require_matching(const RunRecord& a, const RunRecord& b) {
  if (!same_grid(a.grid, b.grid)) throw ScheduleMismatch("records live on different grids");
  if (a.omega_t.size() != b.omega_t.size()) throw ScheduleMismatch("snapshot counts differ");
  for (std::size_t s = 0; s < a.omega_t.size(); ++s)
    if (a.omega_t[s] != b.omega_t[s] || a.omega_B != b.omega_B)
      throw ScheduleMismatch("snapshot times differ at index " + std::to_string(s));
}

/// sum_k c_k Psi_k per snapshot.
inline std::vector<SpinorField> assemble_superposition(const RunRecord& rec0, const RunRecord& rec1,
                                                       cplx c0, cplx c1) {
  require_matching(rec0, rec1);
  std::vector<SpinorField> out;
  out.reserve(rec0.size());
  for (std::size_t s = 0; s < rec0.size(); ++s)
    out.push_back({rec0.grid, c0 * rec0.fields[s].values + c1 * rec1.fields[s].values,
                   rec0.fields[s].time});
  return out;
}

} // namespace deortho

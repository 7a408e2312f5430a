#pragma once

// Scenario drivers behind the command-line tool: single runs, sweeps and the
// perturbation report. Every driver writes into its own output directory and
// finishes with manifest.json.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "deortho/config.hpp"
#include "deortho/efactor.hpp"
#include "deortho/errors.hpp"
#include "deortho/interference.hpp"
#include "deortho/io.hpp"
#include "deortho/model.hpp"
#include "deortho/perturb.hpp"
#include "deortho/propagator.hpp"

#ifndef DEORTHO_VERSION
#define DEORTHO_VERSION "0.0.0"
#endif

namespace deortho {

namespace fs = std::filesystem;

struct RunSummary {
  double omega_B = 0.0;
  double R0 = 0.0;
  double max_overlap_R0 = 0.0;
  double max_n01_R0 = 0.0;
  double weight_end = 0.0;
  double max_abs_n01 = 0.0;
  std::vector<fs::path> files;
};

/// Time series and snapshots of one run, already reduced to observables.
struct RunObservables {
  std::vector<double> omega_t;
  std::vector<MaskedReal> overlap_abs;  // |<phi_0|phi_1>| per time
  std::vector<DensityDecomposition> densities;
  std::vector<ReducedDensityMatrix> rho;
  Eigen::Index r0_index = 0;
};

namespace detail {

inline std::string snapshot_name(double omega_t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "snapshot_wt%g.csv", omega_t);
  return buf;
}

inline Json params_json(const ModelParams& p) {
  return Json{{"g0", p.g0},       {"gx", p.gx},       {"kappa", p.kappa}, {"alpha", p.alpha},
              {"K", p.K},         {"LW", p.LW},       {"Lx", p.Lx},       {"sigma", p.sigma},
              {"JL", p.JL},       {"c0", {p.c0.real(), p.c0.imag()}},     {"c1", {p.c1.real(), p.c1.imag()}},
              {"phi_rel", p.phi_rel()}};
}

inline Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : describe(cfg)) j[k] = v;
  return j;
}

/// argmax over (R, t) of |overlap| on valid points. The profile is mirror
/// symmetric, so near-ties within 1e-9 keep the earlier (smaller R) point.
inline Eigen::Index argmax_overlap(const std::vector<MaskedReal>& ov) {
  Eigen::Index best = 0;
  double best_val = -1.0;
  for (const auto& m : ov)
    for (Eigen::Index i = 0; i < m.values.size(); ++i)
      if (m.valid[i] && m.values[i] > best_val * (1.0 + 1e-9)) {
        best_val = m.values[i];
        best = i;
      }
  return best;
}

inline Eigen::Index nearest_index(const GridSpec& g, double R) {
  const double x = R / g.dR + 0.5 * static_cast<double>(g.n_points - 1);
  const long i = std::lround(x);
  if (i < 0 || i >= g.n_points) throw ConfigError("run.R0 = " + std::to_string(R) + " lies outside the grid");
  return static_cast<Eigen::Index>(i);
}

} // namespace detail

/// Reduces a pair of component records to the observables written by `run`.
inline RunObservables reduce_records(const RunRecord& rec0, const RunRecord& rec1, const BOData& bo,
                                     const ModelParams& params, double eps_den) {
  require_matching(rec0, rec1);
  RunObservables obs;
  obs.omega_t = rec0.omega_t;
  const auto super = assemble_superposition(rec0, rec1, params.c0, params.c1);
  for (std::size_t s = 0; s < rec0.size(); ++s) {
    const SpinorField& a = rec0.fields[s];
    const SpinorField& b = rec1.fields[s];
    const MaskedComplex ov = overlap_field(a, b, eps_den);
    obs.overlap_abs.push_back({ov.values.cwiseAbs(), ov.valid});
    obs.densities.push_back(decompose(a, b, params.c0, params.c1));
    obs.rho.push_back(reduced_density_matrix(super[s], bo));
  }
  obs.r0_index = detail::argmax_overlap(obs.overlap_abs);
  return obs;
}

/// Single scenario in full or adiabatic mode.
inline RunSummary run(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const ModelParams params = cfg.resolved_model();
  const GridSpec& grid = cfg.grid;
  const BOData bo = diagonalize_bo(params, grid, cfg.tol_nac);
  const NacCheck nac = nac_check(bo);
  const double w = omega_b(params, grid);
  const Schedule schedule = Schedule::uniform(cfg.window(), cfg.series_points, w, cfg.snapshots);

  const bool adiabatic = cfg.mode == RunMode::adiabatic;
  const RunRecord rec0 = adiabatic ? run_adiabatic(0, params, grid, bo, schedule, cfg.prop)
                                   : run_component(0, params, grid, bo, schedule, cfg.prop);
  const RunRecord rec1 = adiabatic ? run_adiabatic(1, params, grid, bo, schedule, cfg.prop)
                                   : run_component(1, params, grid, bo, schedule, cfg.prop);
  RunObservables obs = reduce_records(rec0, rec1, bo, params, cfg.eps_den);
  if (!cfg.r0_auto) obs.r0_index = detail::nearest_index(grid, cfg.r0);
  const Eigen::Index r0 = obs.r0_index;

  RunSummary sum;
  sum.omega_B = w;
  sum.R0 = grid.position(r0);
  const std::vector<std::string> units{"energies in g0, lengths in sigma, t in 1/g0",
                                       "omega_B = " + format_cell(w) + " g0"};

  {
    CsvWriter csv(out_dir / "bo_profile.csv", "deortho.bo_profile/1", units,
                  {"R", "V0", "Vx", "eps0", "eps1", "nac", "nac_fd"});
    for (Eigen::Index i = 0; i < grid.n_points; ++i)
      csv.row({grid.position(i), bo.v0[i], bo.vx[i], bo.eps0[i], bo.eps1[i], bo.nac[i], nac.fd_grid[i]});
    sum.files.push_back(csv.path());
  }

  for (double snap : cfg.snapshots) {
    std::size_t s = 0;
    while (s < obs.omega_t.size() && std::abs(obs.omega_t[s] - snap) > 1e-12) ++s;
    const DensityDecomposition& d = obs.densities[s];
    const MaskedReal& ov = obs.overlap_abs[s];
    std::vector<std::string> comments = units;
    comments.push_back("omega_B t = " + format_cell(snap) + ", t = " + format_cell(schedule.time(s)));
    CsvWriter csv(out_dir / detail::snapshot_name(snap), "deortho.snapshot/1", comments,
                  {"R", "n0", "n1", "re_n01", "im_n01", "n_total", "abs_overlap", "valid"});
    for (Eigen::Index i = 0; i < grid.n_points; ++i)
      csv.row({grid.position(i), d.n0[i], d.n1[i], d.n01[i].real(), d.n01[i].imag(), d.n_total[i],
               ov.valid[i] ? ov.values[i] : 0.0, static_cast<long>(ov.valid[i])});
    sum.files.push_back(csv.path());
  }

  {
    std::vector<std::string> comments = units;
    comments.push_back("R_0 = " + format_cell(sum.R0) + (cfg.r0_auto ? " (argmax of |overlap|)" : " (configured)"));
    CsvWriter csv(out_dir / "series_R0.csv", "deortho.series/1", comments,
                  {"omega_t", "t", "abs_overlap_R0", "abs_n01_R0", "W", "valid"});
    for (std::size_t s = 0; s < obs.omega_t.size(); ++s) {
      const MaskedReal& ov = obs.overlap_abs[s];
      const double n01 = std::abs(obs.densities[s].n01[r0]);
      csv.row({obs.omega_t[s], schedule.time(s), ov.valid[r0] ? ov.values[r0] : 0.0, n01,
               obs.densities[s].weight, static_cast<long>(ov.valid[r0])});
      if (ov.valid[r0]) sum.max_overlap_R0 = std::max(sum.max_overlap_R0, ov.values[r0]);
      sum.max_n01_R0 = std::max(sum.max_n01_R0, n01);
      sum.max_abs_n01 = std::max(sum.max_abs_n01, obs.densities[s].n01.cwiseAbs().maxCoeff());
    }
    sum.weight_end = obs.densities.back().weight;
    sum.files.push_back(csv.path());
  }

  {
    CsvWriter csv(out_dir / "rho_e.csv", "deortho.rho_e/1", units,
                  {"omega_t", "t", "rho00", "rho11", "re_rho01", "im_rho01", "trace", "min_eig"});
    for (std::size_t s = 0; s < obs.omega_t.size(); ++s) {
      const auto& r = obs.rho[s];
      csv.row({obs.omega_t[s], schedule.time(s), r.rho(0, 0).real(), r.rho(1, 1).real(), r.rho(0, 1).real(),
               r.rho(0, 1).imag(), r.trace(), r.min_eigenvalue()});
    }
    sum.files.push_back(csv.path());
  }

  {
    CsvWriter csv(out_dir / "run_log.csv", "deortho.run_log/1", units,
                  {"omega_t", "t", "norm0", "norm1", "energy0", "energy1", "boundary0", "boundary1"});
    for (std::size_t s = 0; s < obs.omega_t.size(); ++s)
      csv.row({obs.omega_t[s], schedule.time(s), rec0.norms[s], rec1.norms[s], rec0.energies[s],
               rec1.energies[s], rec0.boundary_prob[s], rec1.boundary_prob[s]});
    sum.files.push_back(csv.path());
  }

  Json manifest;
  manifest["tool"] = "deortho";
  manifest["version"] = DEORTHO_VERSION;
  manifest["mode"] = to_string(cfg.mode);
  manifest["config"] = detail::config_json(cfg);
  manifest["params"] = detail::params_json(params);
  manifest["derived"] = {{"omega_B", w},
                         {"R0", sum.R0},
                         {"R0_index", r0},
                         {"R0_rule", cfg.r0_auto ? "argmax |overlap| over (R, t)" : "configured"},
                         {"max_overlap_R0", sum.max_overlap_R0},
                         {"max_abs_n01", sum.max_abs_n01},
                         {"W_end", sum.weight_end},
                         {"nac_rel_dev_grid", nac.rel_dev_grid},
                         {"nac_rel_dev_substep", nac.rel_dev_substep}};
  manifest["steps"] = {{"component0", rec0.steps}, {"component1", rec1.steps}};
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["files"] = hash_files(out_dir, sum.files);
  write_json(out_dir / "manifest.json", manifest);
  return sum;
}

struct SweepCell {
  double JL = 0.0;
  double kappa = 0.0;
  int status = 0;  // exit code, 0 on success
  std::string message;
  RunSummary summary;
};

/// Cartesian product of the sweep axes, each cell in its own subdirectory,
/// executed on a bounded worker pool. Failed cells are recorded and skipped.
inline std::vector<SweepCell> sweep(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  if (cfg.sweep_JL.empty() && cfg.sweep_kappa.empty()) throw ConfigError("sweep axes are empty");
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const std::vector<double> jls = cfg.sweep_JL.empty() ? std::vector<double>{cfg.model.JL} : cfg.sweep_JL;
  const std::vector<double> kappas =
      cfg.sweep_kappa.empty() ? std::vector<double>{cfg.model.kappa} : cfg.sweep_kappa;
  std::vector<SweepCell> cells;
  for (double j : jls)
    for (double k : kappas) cells.push_back({j, k});

  auto cell_dir = [&](std::size_t i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "cell%03zu_JL%g_kappa%g", i, cells[i].JL, cells[i].kappa);
    return out_dir / buf;
  };

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      RunConfig c = cfg;
      c.mode = RunMode::full;
      c.model.JL = cells[i].JL;
      c.model.kappa = cells[i].kappa;
      try {
        cells[i].summary = run(c, cell_dir(i));
      } catch (const Error& e) {
        cells[i].status = e.exit_code();
        cells[i].message = e.what();
      } catch (const std::exception& e) {
        cells[i].status = 3;
        cells[i].message = e.what();
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "sweep cell " << i << " (JL=" << cells[i].JL << ", kappa=" << cells[i].kappa << "): "
                << (cells[i].status ? cells[i].message : "ok") << "\n";
    }
  };
  const int width = std::min<int>(cfg.workers, static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < width; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<fs::path> files;
  {
    CsvWriter csv(out_dir / "sweep_summary.csv", "deortho.sweep/1",
                  {"energies in g0, lengths in sigma; failed cells have status != 0 and zero values"},
                  {"JL", "kappa", "omega_B", "R0", "max_overlap_R0", "W_end", "status"});
    for (const auto& c : cells)
      csv.row({c.JL, c.kappa, c.summary.omega_B, c.summary.R0, c.summary.max_overlap_R0, c.summary.weight_end,
               static_cast<long>(c.status)});
    files.push_back(csv.path());
  }
  Json manifest;
  manifest["tool"] = "deortho";
  manifest["version"] = DEORTHO_VERSION;
  manifest["mode"] = "sweep";
  manifest["config"] = detail::config_json(cfg);
  Json jc = Json::array();
  for (std::size_t i = 0; i < cells.size(); ++i)
    jc.push_back({{"dir", cell_dir(i).filename().string()},
                  {"JL", cells[i].JL},
                  {"kappa", cells[i].kappa},
                  {"status", cells[i].status},
                  {"message", cells[i].message}});
  manifest["cells"] = jc;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["files"] = hash_files(out_dir, files);
  write_json(out_dir / "manifest.json", manifest);
  return cells;
}

/// First-order overlap against exact dynamics over the J_L series.
inline OrdersReport perturb_report(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  std::vector<SeriesEntry> series;
  for (double jl : cfg.JL_series) {
    ModelParams p = cfg.resolved_model();
    p.JL = jl;
    series.push_back(series_entry(p, cfg.grid, cfg.readout, cfg.quad_steps, cfg.prop, cfg.eps_den, cfg.tol_nac,
                                  cfg.zeroth));
  }
  const OrdersReport rep = compare_orders(series);

  std::vector<fs::path> files;
  const std::vector<std::string> units{"lengths in sigma, t in 1/g0; readout at omega_B t = " +
                                       format_cell(cfg.readout)};
  {
    CsvWriter csv(out_dir / "perturb_series.csv", "deortho.perturb_series/1", units,
                  {"JL", "omega_B", "t_readout", "residual", "exact_norm", "relative_error", "R0", "abs_exact_R0",
                   "abs_predicted_R0"});
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      const auto& r = rep.rows[i];
      csv.row({r.JL, r.omega_B, series[i].readout_t, r.residual, r.exact_norm, r.relative_error, r.R0, r.exact_R0,
               r.predicted_R0});
    }
    files.push_back(csv.path());
  }
  {
    CsvWriter csv(out_dir / "perturb_slope_R.csv", "deortho.perturb_slope_R/1", units, {"R", "slope"});
    for (std::size_t i = 0; i < rep.R.size(); ++i) csv.row({rep.R[i], rep.slope_per_R[i]});
    files.push_back(csv.path());
  }
  {
    CsvWriter csv(out_dir / "perturb_profile.csv", "deortho.perturb_profile/1",
                  {"BO-gauge overlaps at the readout; one column pair per J_L in series order"},
                  [&] {
                    std::vector<std::string> cols{"R"};
                    for (std::size_t k = 0; k < series.size(); ++k) {
                      cols.push_back("abs_exact_" + std::to_string(k));
                      cols.push_back("abs_predicted_" + std::to_string(k));
                    }
                    return cols;
                  }());
    for (Eigen::Index i = 0; i < cfg.grid.n_points; ++i) {
      std::vector<Cell> row{cfg.grid.position(i)};
      for (const auto& e : series) {
        row.push_back(e.valid[i] ? std::abs(e.exact[i]) : 0.0);
        row.push_back(e.valid[i] ? std::abs(e.predicted[i]) : 0.0);
      }
      csv.row(row);
    }
    files.push_back(csv.path());
  }
  Json summary{{"slope", rep.slope},
               {"slope_stderr", rep.slope_stderr},
               {"slope_band95", {rep.band_lo, rep.band_hi}},
               {"points", rep.rows.size()},
               {"readout_omega_t", cfg.readout},
               {"quad_steps", cfg.quad_steps},
               {"zeroth_nuclei", cfg.zeroth == ZerothNuclei::frozen ? "frozen" : "adiabatic"}};
  write_json(out_dir / "perturb_summary.json", summary);
  files.push_back(out_dir / "perturb_summary.json");

  Json manifest;
  manifest["tool"] = "deortho";
  manifest["version"] = DEORTHO_VERSION;
  manifest["mode"] = "perturb";
  manifest["config"] = detail::config_json(cfg);
  manifest["derived"] = summary;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["files"] = hash_files(out_dir, files);
  write_json(out_dir / "manifest.json", manifest);
  return rep;
}

} // namespace deortho

// Command-line front end: deortho run --config FILE [--set k=v]... --out DIR --mode MODE

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "deortho/config.hpp"
#include "deortho/errors.hpp"
#include "deortho/io.hpp"
#include "deortho/runner.hpp"

namespace fs = std::filesystem;
using namespace deortho;

namespace {

bool on_path(const std::string& exe) {
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    std::error_code ec;
    const fs::path p = fs::path(dir.empty() ? "." : dir) / exe;
    if (fs::is_regular_file(p, ec) && access(p.c_str(), X_OK) == 0) return true;
  }
  return false;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// Writes plots.json next to the data and hands it to the external renderer,
/// if there is one.
void emit_plots(const RunConfig& cfg, const fs::path& out) {
  Json spec;
  spec["output_dir"] = (out / "plots").string();
  Json layouts = Json::array();
  if (cfg.mode == RunMode::full || cfg.mode == RunMode::adiabatic) {
    layouts.push_back({{"id", "landscape"}, {"inputs", {(out / "bo_profile.csv").string()}}});
    layouts.push_back({{"id", "growth"}, {"inputs", {(out / "series_R0.csv").string()}}});
    Json snaps = Json::array();
    for (double s : cfg.snapshots) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "snapshot_wt%g.csv", s);
      snaps.push_back((out / buf).string());
    }
    layouts.push_back({{"id", "snapshots"}, {"inputs", snaps}});
  }
  spec["layouts"] = layouts;
  const fs::path spec_path = out / "plots.json";
  write_json(spec_path, spec);
  if (!on_path("render")) {
    std::cerr << "note: 'render' not found on PATH; plot spec left at " << spec_path << "\n";
    return;
  }
  const int rc = std::system(("render --spec " + shell_quote(spec_path.string())).c_str());
  if (rc != 0) std::cerr << "note: render exited with status " << rc << "; data files are unaffected\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electron-nuclear de-orthogonalisation simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DEORTHO_VERSION);

  auto* run_cmd = app.add_subcommand("run", "run a scenario described by a config file");
  std::string config_path, out_dir, mode;
  std::vector<std::string> sets;
  bool plots = false;
  run_cmd->add_option("--config", config_path, "config file (key = value lines)")->required();
  run_cmd->add_option("--set", sets, "override a config key, e.g. --set model.JL=0.5")->take_all();
  run_cmd->add_option("--out", out_dir, "output directory")->required();
  run_cmd->add_option("--mode", mode, "full | adiabatic | sweep | perturb (default: run.mode)")
      ->check(CLI::IsMember({"full", "adiabatic", "sweep", "perturb"}));
  run_cmd->add_flag("--emit-plots", plots, "render figures with the external 'render' tool if present");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorClass::config);
  }

  try {
    RunConfig cfg = load_config(config_path);
    apply_overrides(cfg, sets);
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    cfg.validate();
    const fs::path out(out_dir);
    switch (cfg.mode) {
    case RunMode::full:
    case RunMode::adiabatic: {
      const RunSummary s = run(cfg, out);
      std::cout << "omega_B = " << s.omega_B << " g0, R_0 = " << s.R0 << " sigma, max |overlap|(R_0) = "
                << s.max_overlap_R0 << ", max |n01| = " << s.max_abs_n01 << "\n";
      break;
    }
    case RunMode::sweep: {
      const auto cells = sweep(cfg, out);
      int failed = 0;
      for (const auto& c : cells) failed += c.status != 0;
      std::cout << cells.size() << " sweep cells, " << failed << " failed\n";
      if (failed == static_cast<int>(cells.size())) return cells.front().status;
      break;
    }
    case RunMode::perturb: {
      const OrdersReport r = perturb_report(cfg, out);
      std::cout << "residual slope = " << r.slope << " +- " << r.slope_stderr << " over " << r.rows.size()
                << " J_L values\n";
      break;
    }
    }
    if (plots) emit_plots(cfg, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::numerical);
  }
  return 0;
}

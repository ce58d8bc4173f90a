// Command-line driver: sigma^2(z) sweeps from a config file, plus the
// trajectory-oracle inspection dumps.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "scint/cli.hpp"
#include "scint/mc_oracle.hpp"

namespace {

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw scint::cli::ConfigError("--set expects section.key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scintillation index of laser beams in atmospheric turbulence"};
  app.require_subcommand(1);

  // --- run ---------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "compute a sigma^2(z) sweep from a config file");
  std::string config_path;
  std::vector<std::string> sets;
  std::string output, mode, method;
  std::int64_t seed = -1;
  int workers = -1;
  double rel_tol = -1.0, abs_tol = -1.0, trunc = -1.0;
  std::int64_t max_evals = -1;
  run_cmd->add_option("-c,--config", config_path, "config file")->required();
  run_cmd->add_option("--set", sets, "override 'section.key=value' (repeatable)");
  run_cmd->add_option("-o,--output", output, "output CSV path (overrides output.path)");
  run_cmd->add_option("--mode", mode, "correlated|multiplicative|both");
  run_cmd->add_option("--method", method, "adaptive|qmc|mc");
  run_cmd->add_option("--seed", seed, "RNG seed");
  run_cmd->add_option("--workers", workers, "worker threads (0 = auto via SCINT_WORKERS/hardware)");
  run_cmd->add_option("--rel-tol", rel_tol, "relative tolerance");
  run_cmd->add_option("--abs-tol", abs_tol, "absolute tolerance");
  run_cmd->add_option("--max-evals", max_evals, "integrand evaluation budget");
  run_cmd->add_option("--truncation-sigmas", trunc, "Gaussian-domain cutoff radius");

  // --- oracle ------------------------------------------------------------
  auto* oracle_cmd = app.add_subcommand("oracle", "trajectory-oracle dumps and spot checks");
  std::string dump_field_path, dump_traj_path;
  double oz = 200.0;
  std::int64_t oseed = 1;
  double ocn2 = 1e-13, ol0 = 2.0 * M_PI * 1e-3, or0 = 0.01, oq0 = 1e7;
  int ophotons = 4;
  oracle_cmd->add_option("--dump-field", dump_field_path, "write one slab's force field (columnar text)");
  oracle_cmd->add_option("--dump-trajectories", dump_traj_path, "write sample photon trajectories");
  oracle_cmd->add_option("--z", oz, "propagation distance, m");
  oracle_cmd->add_option("--seed", oseed, "RNG seed");
  oracle_cmd->add_option("--cn2", ocn2, "structure constant, m^-2/3");
  oracle_cmd->add_option("--l0", ol0, "inner scale, m");
  oracle_cmd->add_option("--r0", or0, "beam radius, m");
  oracle_cmd->add_option("--q0", oq0, "central wavenumber, m^-1");
  oracle_cmd->add_option("--photons", ophotons, "trajectories to dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      auto overrides = parse_sets(sets);
      if (!output.empty()) overrides.emplace_back("output.path", output);
      if (!mode.empty()) overrides.emplace_back("sweep.modes", mode);
      if (!method.empty()) overrides.emplace_back("integration.method", method);
      if (seed >= 0) overrides.emplace_back("integration.seed", std::to_string(seed));
      if (workers >= 0) overrides.emplace_back("integration.workers", std::to_string(workers));
      if (rel_tol > 0) overrides.emplace_back("integration.rel_tol", std::to_string(rel_tol));
      if (abs_tol >= 0) overrides.emplace_back("integration.abs_tol", std::to_string(abs_tol));
      if (max_evals > 0) overrides.emplace_back("integration.max_evals", std::to_string(max_evals));
      if (trunc > 0) overrides.emplace_back("integration.truncation_sigmas", std::to_string(trunc));

      const scint::cli::RunConfig cfg = scint::cli::parse_config_file(config_path, overrides);
      std::fprintf(stderr, "scint %s: %zu z-points -> %s\n", SCINT_VERSION, cfg.z_list.size(),
                   cfg.output_path.c_str());
      const scint::cli::RunReport report = scint::cli::run(cfg);
      for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      if (report.exit_code == scint::cli::kOk)
        std::fprintf(stderr, "done: %zu points\n", report.n_points);
      else if (report.exit_code == scint::cli::kPointFailure)
        std::fprintf(stderr, "done with %zu unconverged points (recorded as nan)\n", report.n_failed);
      return report.exit_code;
    }

    if (*oracle_cmd) {
      scint::TurbulenceParams turb{ocn2, ol0, INFINITY, scint::SpectrumModel::Tatarskii};
      scint::BeamParams beam{or0, oq0, INFINITY};
      scint::mc::OracleConfig oc;
      oc.seed = static_cast<std::uint64_t>(oseed);
      if (!dump_field_path.empty()) {
        scint::mc::SpectrumPlan plan(turb, beam, oc.grid);
        scint::mc::FieldRealization field(plan, oc.seed, 0, 0);
        std::ofstream out(dump_field_path);
        if (!out) return scint::cli::kIoError;
        scint::mc::dump_field(out, field, 1);
        std::fprintf(stderr, "wrote field dump to %s\n", dump_field_path.c_str());
      }
      if (!dump_traj_path.empty()) {
        std::ofstream out(dump_traj_path);
        if (!out) return scint::cli::kIoError;
        for (int i = 0; i < ophotons; ++i) {
          const auto rec = scint::mc::record_trajectory(turb, beam, oz, oc, {0.0, 0.0},
                                                        static_cast<std::uint64_t>(i));
          out << "# photon " << i << '\n';
          scint::mc::dump_trajectory(out, rec);
        }
        std::fprintf(stderr, "wrote %d trajectories to %s\n", ophotons, dump_traj_path.c_str());
      }
      return scint::cli::kOk;
    }
  } catch (const scint::cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return scint::cli::kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return scint::cli::kConfigError;
  }
  return scint::cli::kOk;
}

#pragma once

// Configuration ingestion, z-sweeps, CSV emission, run metadata.
//
// Config grammar (flat INI-style sections, '#' comments):
//   [beam]         r0, q0, lambda ('inf' for a coherent beam)
//   [turbulence]   cn2, l0, model (tatarskii|vonkarman), L0 (vonkarman only)
//   [sweep]        z (explicit list) or z_min/z_max/z_count (+ z_spacing),
//                  r_perp, modes, applicability_floor
//   [integration]  method, rel_tol, abs_tol, max_evals, truncation_sigmas,
//                  seed, workers
//   [output]       path, format
// Unknown keys are errors; missing required keys are errors that name the
// defaults-eligible keys. Precedence: CLI overrides > file > defaults.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scint/scintillation.hpp"
#include "scint/support/version.hpp"

namespace scint::cli {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  BeamParams beam{};
  TurbulenceParams turb{};
  std::vector<double> z_list;
  Vec2 r_perp{0.0, 0.0};
  SweepModes modes = SweepModes::Both;
  double applicability_floor = 5.0;
  IntegrationConfig integration{};
  std::string output_path = "sigma_curve.csv";
  std::string output_format = "csv";
};

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kPointFailure = 3,
  kIoError = 4,
};

namespace detail {

struct RawEntry {
  std::string value;
  int line = 0;
};

using RawConfig = std::map<std::string, RawEntry>;  // "section.key" -> value

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any [section]");
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    const std::string full = section + "." + key;
    if (raw.count(full)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
    raw[full] = {value, lineno};
  }
  return raw;
}

inline double parse_double(const std::string& full, const RawEntry& e) {
  const std::string v = trim(e.value);
  if (v == "inf" || v == "infinite" || v == "infinity") return INFINITY;
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("line " + std::to_string(e.line) + ": '" + full + "' is not a number: '" + v + "'");
  }
}

inline std::vector<double> parse_double_list(const std::string& full, const RawEntry& e) {
  std::istringstream in(e.value);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    RawEntry sub{tok, e.line};
    out.push_back(parse_double(full, sub));
  }
  if (out.empty()) throw ConfigError("line " + std::to_string(e.line) + ": '" + full + "' is empty");
  return out;
}

inline std::int64_t parse_int(const std::string& full, const RawEntry& e) {
  const double d = parse_double(full, e);
  if (d != std::floor(d)) throw ConfigError("line " + std::to_string(e.line) + ": '" + full + "' must be an integer");
  return static_cast<std::int64_t>(d);
}

/// Locale-independent shortest round-trip formatting.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "beam.r0", "beam.q0", "beam.lambda",
      "turbulence.cn2", "turbulence.l0", "turbulence.L0", "turbulence.model",
      "sweep.z", "sweep.z_min", "sweep.z_max", "sweep.z_count", "sweep.z_spacing",
      "sweep.r_perp", "sweep.modes", "sweep.applicability_floor",
      "integration.method", "integration.rel_tol", "integration.abs_tol", "integration.max_evals",
      "integration.truncation_sigmas", "integration.seed", "integration.workers",
      "output.path", "output.format"};
  return keys;
}

/// Parses and fully validates a config document; every invariant violation is
/// reported with the offending key (and line, when it came from the file).
inline RunConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  detail::RawConfig raw = detail::tokenize(text);
  for (const auto& kv : overrides) raw[kv.first] = {kv.second, 0};

  for (const auto& [key, entry] : raw) {
    bool known = false;
    for (const auto& k : known_keys()) known = known || (k == key);
    if (!known) throw ConfigError("line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
  }

  auto get = [&](const std::string& key) -> std::optional<detail::RawEntry> {
    const auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    return it->second;
  };
  auto require = [&](const std::string& key) -> detail::RawEntry {
    const auto v = get(key);
    if (!v)
      throw ConfigError("missing required key '" + key +
                        "' (keys with defaults: beam.lambda, turbulence.model, turbulence.L0 "
                        "(tatarskii only), sweep.r_perp, sweep.modes, sweep.applicability_floor, "
                        "integration.*, output.*)");
    return *v;
  };

  RunConfig cfg;
  cfg.beam.r0 = detail::parse_double("beam.r0", require("beam.r0"));
  cfg.beam.q0 = detail::parse_double("beam.q0", require("beam.q0"));
  if (const auto v = get("beam.lambda")) cfg.beam.lambda_diffuser = detail::parse_double("beam.lambda", *v);

  cfg.turb.cn2 = detail::parse_double("turbulence.cn2", require("turbulence.cn2"));
  cfg.turb.l0 = detail::parse_double("turbulence.l0", require("turbulence.l0"));
  if (const auto v = get("turbulence.model")) {
    const std::string m = detail::trim(v->value);
    if (m == "tatarskii")
      cfg.turb.model = SpectrumModel::Tatarskii;
    else if (m == "vonkarman")
      cfg.turb.model = SpectrumModel::VonKarman;
    else
      throw ConfigError("line " + std::to_string(v->line) + ": turbulence.model must be tatarskii or vonkarman");
  }
  if (const auto v = get("turbulence.L0")) cfg.turb.L0 = detail::parse_double("turbulence.L0", *v);
  if (cfg.turb.model == SpectrumModel::VonKarman && !std::isfinite(cfg.turb.L0))
    throw ConfigError("turbulence.L0 must be given explicitly (finite) when turbulence.model = vonkarman");

  // z sweep: explicit list or range + count.
  const auto zlist = get("sweep.z");
  const auto zmin = get("sweep.z_min"), zmax = get("sweep.z_max"), zcount = get("sweep.z_count");
  if (zlist && (zmin || zmax || zcount))
    throw ConfigError("give either sweep.z or sweep.z_min/z_max/z_count, not both");
  if (zlist) {
    cfg.z_list = detail::parse_double_list("sweep.z", *zlist);
  } else if (zmin || zmax || zcount) {
    if (!(zmin && zmax && zcount))
      throw ConfigError("sweep.z_min, sweep.z_max and sweep.z_count must be given together");
    const double lo = detail::parse_double("sweep.z_min", *zmin);
    const double hi = detail::parse_double("sweep.z_max", *zmax);
    const auto n = detail::parse_int("sweep.z_count", *zcount);
    if (!(lo > 0.0) || !(hi > lo) || n < 1)
      throw ConfigError("sweep range requires 0 < z_min < z_max and z_count >= 1");
    bool log_spacing = false;
    if (const auto v = get("sweep.z_spacing")) {
      const std::string m = detail::trim(v->value);
      if (m == "log")
        log_spacing = true;
      else if (m != "linear")
        throw ConfigError("line " + std::to_string(v->line) + ": sweep.z_spacing must be linear or log");
    }
    for (std::int64_t i = 0; i < n; ++i) {
      const double t = (n == 1) ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      cfg.z_list.push_back(log_spacing ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t);
    }
  } else {
    throw ConfigError("missing required z sweep: give sweep.z or sweep.z_min/z_max/z_count");
  }
  for (std::size_t i = 0; i < cfg.z_list.size(); ++i) {
    if (!(cfg.z_list[i] > 0.0)) throw ConfigError("sweep.z values must be > 0");
    if (i > 0 && !(cfg.z_list[i] > cfg.z_list[i - 1]))
      throw ConfigError("sweep.z values must be strictly increasing");
  }

  if (const auto v = get("sweep.r_perp")) {
    const auto xy = detail::parse_double_list("sweep.r_perp", *v);
    if (xy.size() != 2) throw ConfigError("line " + std::to_string(v->line) + ": sweep.r_perp needs two components");
    cfg.r_perp = {xy[0], xy[1]};
  }
  if (const auto v = get("sweep.modes")) {
    const std::string m = detail::trim(v->value);
    if (m == "correlated")
      cfg.modes = SweepModes::Correlated;
    else if (m == "multiplicative")
      cfg.modes = SweepModes::Multiplicative;
    else if (m == "both")
      cfg.modes = SweepModes::Both;
    else
      throw ConfigError("line " + std::to_string(v->line) + ": sweep.modes must be correlated, multiplicative or both");
  }
  if (const auto v = get("sweep.applicability_floor"))
    cfg.applicability_floor = detail::parse_double("sweep.applicability_floor", *v);

  if (const auto v = get("integration.method")) {
    const std::string m = detail::trim(v->value);
    if (m == "adaptive")
      cfg.integration.method = IntegrationMethod::AdaptiveProduct;
    else if (m == "qmc")
      cfg.integration.method = IntegrationMethod::QuasiMonteCarlo;
    else if (m == "mc")
      cfg.integration.method = IntegrationMethod::MonteCarlo;
    else
      throw ConfigError("line " + std::to_string(v->line) + ": integration.method must be adaptive, qmc or mc");
  }
  if (const auto v = get("integration.rel_tol")) cfg.integration.rel_tol = detail::parse_double("integration.rel_tol", *v);
  if (const auto v = get("integration.abs_tol")) cfg.integration.abs_tol = detail::parse_double("integration.abs_tol", *v);
  if (const auto v = get("integration.max_evals")) cfg.integration.max_evals = detail::parse_int("integration.max_evals", *v);
  if (const auto v = get("integration.truncation_sigmas"))
    cfg.integration.truncation_sigmas = detail::parse_double("integration.truncation_sigmas", *v);
  if (const auto v = get("integration.seed"))
    cfg.integration.seed = static_cast<std::uint64_t>(detail::parse_int("integration.seed", *v));
  if (const auto v = get("integration.workers"))
    cfg.integration.workers = static_cast<int>(detail::parse_int("integration.workers", *v));

  if (const auto v = get("output.path")) cfg.output_path = detail::trim(v->value);
  if (const auto v = get("output.format")) {
    cfg.output_format = detail::trim(v->value);
    if (cfg.output_format != "csv") throw ConfigError("output.format: only 'csv' is supported");
  }

  // Module invariants, reported with the offending key.
  try {
    cfg.beam.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid beam parameters: ") + e.what());
  }
  try {
    cfg.turb.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid turbulence parameters: ") + e.what());
  }
  try {
    cfg.integration.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid integration parameters: ") + e.what());
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path,
                                   const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

inline const char* kCsvHeader =
    "z_m, sigma2_correlated, sigma2_multiplicative, mean_intensity_au, dq2_m-2, "
    "beam_radius_sq_m2, applicability_ratio, err_sigma2_corr, err_sigma2_mult";

inline std::string format_csv(const std::vector<SigmaCurvePoint>& points) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& p : points) {
    out += detail::format_double(p.z);
    out += ", " + detail::format_double(p.sigma2_correlated);
    out += ", " + detail::format_double(p.sigma2_multiplicative);
    out += ", " + detail::format_double(p.mean_intensity);
    out += ", " + detail::format_double(p.dq2);
    out += ", " + detail::format_double(p.beam_radius_sq);
    out += ", " + detail::format_double(p.applicability_ratio);
    out += ", " + detail::format_double(p.err_sigma2_corr);
    out += ", " + detail::format_double(p.err_sigma2_mult);
    out += '\n';
  }
  return out;
}

/// Round-trip reader for the emitted CSV (used by tests and downstream
/// consumers; the column contract is kCsvHeader).
inline std::vector<SigmaCurvePoint> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("csv: bad header");
  std::vector<SigmaCurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    SigmaCurvePoint p;
    std::vector<double*> cols = {&p.z,   &p.sigma2_correlated,   &p.sigma2_multiplicative,
                                 &p.mean_intensity, &p.dq2, &p.beam_radius_sq,
                                 &p.applicability_ratio, &p.err_sigma2_corr, &p.err_sigma2_mult};
    for (double* c : cols) {
      std::string tok;
      if (!(row >> tok)) throw std::runtime_error("csv: short row");
      *c = (tok == "nan") ? std::nan("") : std::stod(tok);
    }
    out.push_back(p);
  }
  return out;
}

struct RunReport {
  int exit_code = kOk;
  std::vector<std::string> warnings;
  std::size_t n_points = 0;
  std::size_t n_failed = 0;
};

/// Runs the sweep described by the config and writes the CSV plus a metadata
/// sidecar ('<path>.meta.json'). Per-point integration failures are recorded
/// in-row as nan and reported with a distinct exit status; I/O errors fatal.
inline RunReport run(const RunConfig& cfg) {
  RunReport report;
  const auto t0 = std::chrono::steady_clock::now();

  SweepOptions opt;
  opt.modes = cfg.modes;
  opt.r_perp = cfg.r_perp;
  opt.applicability_floor = cfg.applicability_floor;
  SweepResult result;
  try {
    result = sweep(cfg.z_list, cfg.beam, cfg.turb, cfg.integration, opt);
  } catch (const std::exception& e) {
    report.exit_code = kConfigError;
    report.warnings.push_back(std::string("sweep failed: ") + e.what());
    return report;
  }
  report.warnings = result.warnings;
  report.n_points = result.points.size();
  for (const auto& p : result.points)
    if (!p.converged) ++report.n_failed;

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream csv(cfg.output_path, std::ios::binary);
  if (!csv) {
    report.exit_code = kIoError;
    report.warnings.push_back("cannot open output file '" + cfg.output_path + "'");
    return report;
  }
  csv << format_csv(result.points);
  csv.close();
  if (!csv) {
    report.exit_code = kIoError;
    return report;
  }

  nlohmann::json meta;
  meta["code_version"] = SCINT_VERSION;
  meta["seed"] = cfg.integration.seed;
  meta["method"] = cfg.integration.method == IntegrationMethod::AdaptiveProduct ? "adaptive"
                   : cfg.integration.method == IntegrationMethod::QuasiMonteCarlo ? "qmc"
                                                                                  : "mc";
  meta["rel_tol"] = cfg.integration.rel_tol;
  meta["abs_tol"] = cfg.integration.abs_tol;
  meta["truncation_sigmas"] = cfg.integration.truncation_sigmas;
  meta["max_evals"] = cfg.integration.max_evals;
  meta["workers_requested"] = cfg.integration.workers;
  meta["tolerance_note"] =
      "rel_tol and truncation_sigmas defaults (1e-2, 6) are choices of this implementation; "
      "they are recorded here because the calculation they control reports no external reference values";
  meta["wall_time_s"] = wall;
  meta["n_points"] = report.n_points;
  meta["n_failed"] = report.n_failed;
  meta["warnings"] = report.warnings;
  std::ofstream metaout(cfg.output_path + ".meta.json", std::ios::binary);
  if (!metaout) {
    report.exit_code = kIoError;
    return report;
  }
  metaout << meta.dump(2) << '\n';
  metaout.close();

  if (report.n_failed > 0) report.exit_code = kPointFailure;
  return report;
}

}  // namespace scint::cli

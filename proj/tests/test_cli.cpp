#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scint/cli.hpp"

using namespace scint;
using namespace scint::cli;

namespace {
std::string minimal_cfg() {
  return R"([beam]
r0 = 0.01
q0 = 1.0e7

[turbulence]
cn2 = 1.0e-13
l0 = 6.283185307179586e-3

[sweep]
z = 800 1600
)";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

TEST_CASE("parse: minimal config fills defaults") {
  const RunConfig cfg = parse_config(minimal_cfg());
  REQUIRE(cfg.beam.r0 == 0.01);
  REQUIRE(cfg.beam.q0 == 1e7);
  REQUIRE(std::isinf(cfg.beam.lambda_diffuser));
  REQUIRE(cfg.turb.model == SpectrumModel::Tatarskii);
  REQUIRE(cfg.z_list == std::vector<double>{800.0, 1600.0});
  REQUIRE(cfg.modes == SweepModes::Both);
  REQUIRE(cfg.integration.rel_tol == 1e-2);
  REQUIRE(cfg.integration.truncation_sigmas == 6.0);
}

TEST_CASE("parse: bundled fig1 config carries the standard parameter set") {
  const RunConfig cfg = parse_config_file(std::string(SCINT_TEST_CONFIG_DIR) + "/fig1.cfg");
  REQUIRE(cfg.beam.r0 == 0.01);
  REQUIRE(cfg.beam.q0 == 1e7);
  REQUIRE(std::isinf(cfg.beam.lambda_diffuser));
  REQUIRE(cfg.turb.cn2 == 1e-13);
  REQUIRE(cfg.turb.l0 == Catch::Approx(2.0 * M_PI * 1e-3).epsilon(1e-15));
  REQUIRE(cfg.turb.model == SpectrumModel::Tatarskii);
  REQUIRE(cfg.z_list.size() == 20);
  REQUIRE(cfg.z_list.front() == 500.0);
  REQUIRE(cfg.z_list.back() == 10000.0);
}

TEST_CASE("parse: errors name the offending key") {
  SECTION("unknown key") {
    const std::string bad = minimal_cfg() + "\n[sweep]\nfoo = 1\n";
    REQUIRE_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("sweep.foo"));
  }
  SECTION("negative structure constant") {
    std::string bad = minimal_cfg();
    bad.replace(bad.find("1.0e-13"), 7, "-1.0e-1");
    REQUIRE_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("cn2"));
  }
  SECTION("von Karman without an explicit outer scale") {
    const std::string bad = minimal_cfg() + "\n[turbulence]\nmodel = vonkarman\n";
    REQUIRE_THROWS_AS(parse_config(bad), ConfigError);
  }
  SECTION("missing required key lists the defaults-eligible ones") {
    const std::string bad = "[beam]\nr0 = 0.01\n";
    REQUIRE_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("defaults"));
  }
  SECTION("decreasing z") {
    std::string bad = minimal_cfg();
    bad.replace(bad.find("800 1600"), 8, "1600 800");
    REQUIRE_THROWS_AS(parse_config(bad), ConfigError);
  }
  SECTION("duplicate section key") {
    const std::string dup = minimal_cfg() + "\n[turbulence]\ncn2 = 3e-13\n";
    REQUIRE_THROWS_WITH(parse_config(dup), Catch::Matchers::ContainsSubstring("duplicate"));
  }
}

TEST_CASE("parse: overrides take precedence over the file") {
  const RunConfig cfg = parse_config(minimal_cfg(), {{"integration.seed", "99"}, {"beam.r0", "0.03"}});
  REQUIRE(cfg.integration.seed == 99);
  REQUIRE(cfg.beam.r0 == 0.03);
}

TEST_CASE("csv: emitted text round-trips through the bundled reader") {
  std::vector<SigmaCurvePoint> pts(2);
  pts[0].z = 800.0;
  pts[0].sigma2_correlated = 1.25;
  pts[0].sigma2_multiplicative = std::nan("");
  pts[0].mean_intensity = 3.5e8;
  pts[0].dq2 = 2.9e5;
  pts[0].beam_radius_sq = 1.1e-3;
  pts[0].applicability_ratio = 13.4;
  pts[0].err_sigma2_corr = 1e-3;
  pts[0].err_sigma2_mult = std::nan("");
  pts[1] = pts[0];
  pts[1].z = 1600.0;
  const std::string text = format_csv(pts);
  const auto back = parse_csv(text);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].z == 800.0);
  REQUIRE(back[0].sigma2_correlated == 1.25);
  REQUIRE(std::isnan(back[0].sigma2_multiplicative));
  REQUIRE(back[1].z == 1600.0);
  REQUIRE(back[0].mean_intensity == 3.5e8);
}

TEST_CASE("run: end-to-end sweep writes CSV and metadata deterministically") {
  RunConfig cfg = parse_config(minimal_cfg());
  cfg.output_path = "test_cli_out.csv";
  cfg.integration.rel_tol = 2e-2;
  cfg.integration.workers = 2;
  cfg.modes = SweepModes::Correlated;

  const RunReport rep1 = run(cfg);
  REQUIRE(rep1.exit_code == kOk);
  const std::string csv1 = slurp("test_cli_out.csv");
  REQUIRE_FALSE(csv1.empty());
  const auto points = parse_csv(csv1);
  REQUIRE(points.size() == 2);
  REQUIRE(points[0].sigma2_correlated > 0.0);
  REQUIRE(std::isnan(points[0].sigma2_multiplicative));  // mode not requested

  // byte-identical on rerun with the same seed, including across a worker
  // count change
  cfg.integration.workers = 1;
  const RunReport rep2 = run(cfg);
  REQUIRE(rep2.exit_code == kOk);
  REQUIRE(slurp("test_cli_out.csv") == csv1);

  const std::string meta = slurp("test_cli_out.csv.meta.json");
  REQUIRE(meta.find("\"seed\"") != std::string::npos);
  REQUIRE(meta.find("rel_tol") != std::string::npos);
  REQUIRE(meta.find("code_version") != std::string::npos);
  REQUIRE(meta.find("wall_time_s") != std::string::npos);

  std::remove("test_cli_out.csv");
  std::remove("test_cli_out.csv.meta.json");
}

TEST_CASE("run: empty z list is not constructible via the parser") {
  // the parser requires a z specification; an empty sweep is only reachable
  // through the library API, where it produces a header-only CSV
  const std::string empty_csv = format_csv({});
  REQUIRE(empty_csv == std::string(kCsvHeader) + "\n");
}

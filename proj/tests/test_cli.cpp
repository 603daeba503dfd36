#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hjfield/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path test_root() {
  const fs::path root = fs::temp_directory_path() / "hjfield_cli_tests";
  return root;
}

json load_bundled(const std::string& name) {
  const fs::path path = fs::path(HJFIELD_CONFIG_DIR) / name;
  std::ifstream in(path);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

// Smaller fan for unit-level pipeline runs; the acceptance suite exercises
// the full bundled resolution.
json reduced_paper_config(const fs::path& out_dir) {
  json j = load_bundled("paper_example.json");
  j["numerics"]["steps"] = 500;
  j["numerics"]["zeta_grid"] = {11};
  j["outputs"]["grid_resolution"] = {10, 10};
  j["outputs"]["directory"] = out_dir.string();
  // the bundled closed-form tolerance is calibrated to the full 21 x 2001
  // fan; at 11 zeta samples the fit bias sits around 1e-4
  j["verify"]["tolerances"]["closed_form"] = 5e-4;
  return j;
}

fs::path write_config(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("pipeline end-to-end on the example configuration") {
  const fs::path root = test_root() / "run_ok";
  fs::remove_all(root);
  const fs::path out = root / "out";
  const fs::path cfg = write_config(reduced_paper_config(out), root / "config.json");

  const int code = hjfield::run(cfg, "", 1);
  CHECK(code == hjfield::kExitOk);

  const auto paths = hjfield::artifact_paths(out);
  CHECK(fs::exists(paths.fan_csv));
  CHECK(fs::exists(paths.fit_json));
  CHECK(fs::exists(paths.fit_residual_csv));
  CHECK(fs::exists(paths.solution_csv));
  CHECK(fs::exists(paths.sidecar_json));
  CHECK(fs::exists(paths.report_json));

  json fit;
  std::ifstream(paths.fit_json) >> fit;
  CHECK(fit["compatible"] == true);
  CHECK(std::abs(fit["fitted_params"]["c"].get<double>()) < 2e-3);
  CHECK(std::abs(fit["fitted_params"]["A"].get<double>() - 1.0) < 2e-3);
  CHECK(std::abs(fit["fitted_params"]["B"].get<double>()) < 2e-3);

  json report;
  std::ifstream(paths.report_json) >> report;
  CHECK(report["pass"] == true);

  SUBCASE("solution grid inverts everywhere inside the domain box") {
    std::ifstream csv(paths.solution_csv);
    std::string line;
    std::getline(csv, line);  // header
    int rows = 0, ok = 0;
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      ++rows;
      if (line.substr(line.size() - 2) == ",1") ++ok;
    }
    CHECK(rows == 100);
    CHECK(ok == 100);
  }

  SUBCASE("verify subcommand accepts the stored artifacts") {
    CHECK(hjfield::verify_only(cfg, out) == hjfield::kExitOk);
  }

  SUBCASE("tightened tolerances turn the verdict red") {
    json j = reduced_paper_config(out);
    j["verify"]["tolerances"]["hamilton_first"] = 1e-7;
    const fs::path tight = write_config(j, root / "tight.json");
    CHECK(hjfield::verify_only(tight, out) == hjfield::kExitNumerical);
  }

  SUBCASE("missing artifacts are reported") {
    fs::remove(paths.fan_csv);
    CHECK(hjfield::verify_only(cfg, out) == hjfield::kExitNumerical);
  }
}

TEST_CASE("incompatible boundary data exits with code 2") {
  const fs::path root = test_root() / "run_incompatible";
  fs::remove_all(root);
  const fs::path out = root / "out";
  json j = load_bundled("incompatible_example.json");
  j["numerics"]["steps"] = 500;
  j["numerics"]["zeta_grid"] = {11};
  j["outputs"]["grid_resolution"] = {10, 10};
  j["outputs"]["directory"] = out.string();
  const fs::path cfg = write_config(j, root / "config.json");

  CHECK(hjfield::run(cfg, "", 1) == hjfield::kExitIncompatible);

  json fit;
  std::ifstream(hjfield::artifact_paths(out).fit_json) >> fit;
  CHECK(fit["compatible"] == false);
  CHECK(fit["residual_rms"].get<double>() > 1e-2);

  // diagnostics are still produced for the incompatible run
  json report;
  std::ifstream(hjfield::artifact_paths(out).report_json) >> report;
  CHECK(report["hamilton_first"]["max"].get<double>() > 1e-2);
}

TEST_CASE("config errors exit with code 64") {
  const fs::path root = test_root() / "config_errors";
  fs::remove_all(root);
  fs::create_directories(root);

  SUBCASE("unparseable file") {
    const fs::path bad = root / "bad.json";
    std::ofstream(bad) << "{ this is not json";
    CHECK(hjfield::run(bad, "", 1) == hjfield::kExitConfig);
  }

  SUBCASE("unknown key is rejected") {
    json j = reduced_paper_config(root / "out");
    j["modle"] = 1;
    CHECK(hjfield::run(write_config(j, root / "unknown.json"), "", 1) ==
          hjfield::kExitConfig);
  }

  SUBCASE("nested unknown key is rejected") {
    json j = reduced_paper_config(root / "out");
    j["numerics"]["stepz"] = 100;
    CHECK(hjfield::run(write_config(j, root / "nested.json"), "", 1) ==
          hjfield::kExitConfig);
  }

  SUBCASE("invariants on numerics") {
    json j = reduced_paper_config(root / "out");
    j["numerics"]["steps"] = 5;
    CHECK(hjfield::run(write_config(j, root / "steps.json"), "", 1) ==
          hjfield::kExitConfig);

    j = reduced_paper_config(root / "out");
    j["numerics"]["zeta_grid"] = {2};
    CHECK(hjfield::run(write_config(j, root / "grid.json"), "", 1) ==
          hjfield::kExitConfig);

    j = reduced_paper_config(root / "out");
    j["numerics"]["fit_tol"] = -1.0;
    CHECK(hjfield::run(write_config(j, root / "tol.json"), "", 1) ==
          hjfield::kExitConfig);
  }

  SUBCASE("missing config file") {
    CHECK(hjfield::run(root / "absent.json", "", 1) == hjfield::kExitConfig);
  }
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
  const fs::path root = test_root() / "determinism";
  fs::remove_all(root);
  const fs::path out1 = root / "out1";
  const fs::path out2 = root / "out2";
  const fs::path cfg1 = write_config(reduced_paper_config(out1), root / "c1.json");
  const fs::path cfg2 = write_config(reduced_paper_config(out2), root / "c2.json");

  REQUIRE(hjfield::run(cfg1, "", 1) == hjfield::kExitOk);
  REQUIRE(hjfield::run(cfg2, "", 2) == hjfield::kExitOk);  // thread count too

  const auto p1 = hjfield::artifact_paths(out1);
  const auto p2 = hjfield::artifact_paths(out2);
  CHECK(slurp(p1.fan_csv) == slurp(p2.fan_csv));
  CHECK(slurp(p1.fit_json) == slurp(p2.fit_json));
  CHECK(slurp(p1.fit_residual_csv) == slurp(p2.fit_residual_csv));
  CHECK(slurp(p1.solution_csv) == slurp(p2.solution_csv));
  CHECK(slurp(p1.sidecar_json) == slurp(p2.sidecar_json));
  CHECK(slurp(p1.report_json) == slurp(p2.report_json));
}

TEST_CASE("tabulated boundary data through the csv preset") {
  const fs::path root = test_root() / "csv_data";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path out = root / "out";

  // Tabulate the compatibility-ODE data densely enough that the zeta-grid
  // nodes hit table rows exactly.
  {
    std::ofstream csv(root / "data.csv");
    csv << "zeta,psi,psi_hat\n";
    const double s = std::sqrt(2.0);
    const double omega = 1.0 / s;
    for (int k = 0; k <= 200; ++k) {
      const double z = k / 200.0;
      // closed form of the data family at A = 1, B = 0, c_data = 0
      csv << z << ',' << std::cos(omega * z) << ',' << (-std::sin(omega * z) / s)
          << "\n";
    }
  }

  json j = reduced_paper_config(out);
  j["boundary"]["preset"] = "csv";
  j["boundary"].erase("params");
  j["boundary"]["csv"] = (root / "data.csv").string();
  j["ansatz"]["direction_params"] = {0.25};
  j["ansatz"].erase("free_constants");
  const fs::path cfg = write_config(j, root / "config.json");

  CHECK(hjfield::run(cfg, "", 1) == hjfield::kExitOk);
  json fit;
  std::ifstream(hjfield::artifact_paths(out).fit_json) >> fit;
  CHECK(fit["compatible"] == true);
  CHECK(std::abs(fit["fitted_params"]["c"].get<double>()) < 3e-3);
}

TEST_CASE("derivative self-check subcommand") {
  const fs::path root = test_root() / "check_derivatives";
  fs::remove_all(root);

  json j = reduced_paper_config(root / "out");
  CHECK(hjfield::check_derivatives_cmd(write_config(j, root / "h.json")) ==
        hjfield::kExitOk);

  j["model"]["name"] = "free_scalar_lagrangian";
  CHECK(hjfield::check_derivatives_cmd(write_config(j, root / "l.json")) ==
        hjfield::kExitOk);
}

TEST_CASE("command-line binary smoke test") {
  const fs::path root = test_root() / "binary";
  fs::remove_all(root);
  const fs::path out = root / "out";
  const fs::path cfg = write_config(reduced_paper_config(out), root / "config.json");

  const std::string cli = HJFIELD_CLI_PATH;
  const std::string cmd =
      cli + " run --config " + cfg.string() + " --threads 1 > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == hjfield::kExitOk);

  const std::string verify_cmd = cli + " verify --config " + cfg.string() +
                                 " --solution " + out.string() + " > /dev/null 2>&1";
  const int vstatus = std::system(verify_cmd.c_str());
  REQUIRE(WIFEXITED(vstatus));
  CHECK(WEXITSTATUS(vstatus) == hjfield::kExitOk);

  const int hstatus = std::system((cli + " --help > /dev/null 2>&1").c_str());
  REQUIRE(WIFEXITED(hstatus));
  CHECK(WEXITSTATUS(hstatus) == 0);
}

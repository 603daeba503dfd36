#include <string>
#include <thread>

#include <CLI11.hpp>

#include "hjfield/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hjfield: characteristics-based solver for first-order Hamiltonian "
               "field theories with flux-potential reconstruction and residual "
               "verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string solution_dir;
  int threads = 0;

  auto* run_cmd = app.add_subcommand("run", "full pipeline: fit, trace, reconstruct, verify");
  run_cmd->add_option("--config", config_path, "run configuration JSON")->required();
  run_cmd->add_option("--out-dir", out_dir, "output directory (overrides config)");
  run_cmd->add_option("--threads", threads, "worker threads (0 = hardware)");

  auto* verify_cmd = app.add_subcommand("verify", "re-verify stored run artifacts");
  verify_cmd->add_option("--config", config_path, "run configuration JSON")->required();
  verify_cmd->add_option("--solution", solution_dir, "directory with run artifacts")
      ->required();

  auto* check_cmd =
      app.add_subcommand("check-derivatives", "finite-difference model self check");
  check_cmd->add_option("--config", config_path, "run configuration JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hjfield::kExitConfig;
  }

  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = 1;

  if (run_cmd->parsed()) return hjfield::run(config_path, out_dir, threads);
  if (verify_cmd->parsed()) return hjfield::verify_only(config_path, solution_dir);
  return hjfield::check_derivatives_cmd(config_path);
}

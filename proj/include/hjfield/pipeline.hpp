#pragma once

// Pipeline orchestration behind the CLI: run the full chain
// sample -> fit -> trace -> reconstruct -> export -> verify,
// re-verify stored artifacts, and the derivative self-check.
//
// Exit codes: 0 compatible and verified, 1 numerical or verification failure,
// 2 incompatible boundary data, 64 config error.

#include <filesystem>
#include <string>

namespace hjfield {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitIncompatible = 2;
inline constexpr int kExitConfig = 64;

struct ArtifactPaths {
  std::filesystem::path fan_csv;
  std::filesystem::path fit_json;
  std::filesystem::path fit_residual_csv;
  std::filesystem::path solution_csv;
  std::filesystem::path sidecar_json;
  std::filesystem::path report_json;
};

ArtifactPaths artifact_paths(const std::filesystem::path& out_dir);

int run(const std::filesystem::path& config_path, const std::string& out_dir_override = "",
        int threads = 1);

int verify_only(const std::filesystem::path& config_path,
                const std::filesystem::path& solution_dir);

int check_derivatives_cmd(const std::filesystem::path& config_path);

}  // namespace hjfield

#pragma once

// Run configuration: strict JSON schema (unknown keys rejected), model and
// boundary presets, ansatz construction.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjfield/embeddability.hpp"
#include "hjfield/verify.hpp"

namespace hjfield {

struct RunConfig {
  // model
  std::string model_name;  // "free_scalar" | "free_scalar_lagrangian"
  Index n = 2;
  double mu = 1.0;

  // boundary
  std::string boundary_preset;  // "paper_example" | "linear" | "csv"
  std::map<std::string, double> boundary_params;
  std::string boundary_csv;
  Index surface_axis = 0;
  double surface_offset = 0.0;
  Vector transverse;
  std::vector<std::array<double, 2>> zeta_box;

  // ansatz
  std::string ansatz_kind;  // "constant" | "scaled_direction"
  Vector ansatz_A;
  Vector direction_params;
  std::string alpha_kind = "constant";  // "constant" | "sinusoidal"
  double alpha_value = 1.0;
  double alpha_base = 1.0;
  double alpha_amplitude = 0.0;
  double alpha_frequency = 1.0;
  std::vector<std::pair<std::string, double>> free_constants;

  // numerics
  double Xi = 1.0;
  int steps = 100;
  std::vector<int> zeta_grid;
  double fit_tol = 1e-3;
  int fit_max_iter = 30;
  double chart_tol = 1e-10;
  int chart_max_iter = 50;
  double covelocity_tol = 1e-12;
  double fd_step_rel = 1e-3;  // relative to the largest domain-box extent

  // outputs
  std::string out_dir = "out";
  std::vector<int> grid_resolution;
  bool emit_fan_csv = true;
  bool emit_residual_csv = true;

  // verification tolerances (absolute, scaled by data magnitude at run time)
  std::map<std::string, double> verify_tolerances;

  unsigned seed = 0;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_json(const nlohmann::json& j);

HamiltonianModel build_model(const RunConfig& cfg);
std::optional<LagrangianModel> build_lagrangian(const RunConfig& cfg);
BoundaryFamily build_boundary_family(const RunConfig& cfg);
XAnsatz build_ansatz(const RunConfig& cfg);
FitNumerics build_fit_numerics(const RunConfig& cfg, int threads);

}  // namespace hjfield

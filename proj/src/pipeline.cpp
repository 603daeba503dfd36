#include "hjfield/pipeline.hpp"

#include <fstream>
#include <iostream>

#include "hjfield/config.hpp"
#include "hjfield/errors.hpp"

namespace hjfield {

namespace fs = std::filesystem;

ArtifactPaths artifact_paths(const fs::path& out_dir) {
  return {out_dir / "fan.csv",          out_dir / "fit.json",
          out_dir / "fit_residuals.csv", out_dir / "solution.csv",
          out_dir / "solution_meta.json", out_dir / "residual_report.json"};
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("pipeline", "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

double data_magnitude(const CharacteristicFan& fan) {
  double m = 0.0;
  for (const auto& traj : fan.trajectories)
    for (const auto& s : traj) m = std::max(m, s.y.cwiseAbs().maxCoeff());
  return m;
}

// Residual suite shared by run() and verify_only(): tolerances scale linearly
// with the field magnitude once it exceeds unity.  Per-point residual grids
// are written next to the report when requested.
ResidualReport verification_suite(const RunConfig& cfg, const HamiltonianModel& model,
                                  const FieldSolution& sol, bool with_closed_form,
                                  const ClosedFormParams& oracle,
                                  const fs::path& per_point_dir = {}) {
  ResidualReport report;
  report.grid_resolution = cfg.grid_resolution;

  double extent = 0.0;
  for (const auto& iv : sol.domain_box) extent = std::max(extent, iv[1] - iv[0]);
  report.fd_step = cfg.fd_step_rel * extent;

  const double scale = std::max(1.0, data_magnitude(sol.fan));
  for (const auto& [name, tol] : cfg.verify_tolerances)
    report.tolerances[name] = tol * scale;
  if (!with_closed_form) report.tolerances.erase("closed_form");

  const auto grid = residual_grid(sol, cfg.grid_resolution, 3.0 * report.fd_step);
  if (per_point_dir.empty()) {
    report.hj = hj_residual(model, sol, grid, report.fd_step);
    std::tie(report.hamilton_first, report.hamilton_second) =
        hamilton_residual(model, sol, grid, report.fd_step);
  } else {
    std::ofstream hj_csv(per_point_dir / "residual_hj.csv", std::ios::binary);
    std::ofstream ham_csv(per_point_dir / "residual_hamilton.csv", std::ios::binary);
    report.hj = hj_residual(model, sol, grid, report.fd_step, &hj_csv);
    std::tie(report.hamilton_first, report.hamilton_second) =
        hamilton_residual(model, sol, grid, report.fd_step, &ham_csv);
  }

  if (auto lagrangian = build_lagrangian(cfg))
    report.euler_lagrange = euler_lagrange_residual(*lagrangian, sol, grid, report.fd_step);
  else
    report.tolerances.erase("euler_lagrange");

  if (with_closed_form) report.closed_form_max = closed_form_compare(sol, oracle);
  return report;
}

void print_report(const ResidualReport& report) {
  auto line = [&](const std::string& name, double value) {
    auto it = report.tolerances.find(name);
    if (it == report.tolerances.end()) return;
    std::cout << (value <= it->second ? "[PASS] " : "[FAIL] ") << name
              << "  max = " << value << "  (tol " << it->second << ")\n";
  };
  line("hj", report.hj.max_abs);
  line("hamilton_first", report.hamilton_first.max_abs);
  line("hamilton_second", report.hamilton_second.max_abs);
  if (report.euler_lagrange) line("euler_lagrange", report.euler_lagrange->max_abs);
  if (report.closed_form_max) line("closed_form", *report.closed_form_max);
}

ClosedFormParams oracle_from_fit(const RunConfig& cfg, const EmbeddabilityFit& fit) {
  ClosedFormParams oracle;
  oracle.A = fit.data_constants.count("A") ? fit.data_constants.at("A") : 1.0;
  oracle.B = fit.data_constants.count("B") ? fit.data_constants.at("B") : 0.0;
  oracle.c = fit.fitted_params.size() > 0 ? fit.fitted_params[0] : 0.0;
  oracle.mu = cfg.mu;
  oracle.alpha = fit.ansatz.alpha;
  return oracle;
}

}  // namespace

int run(const fs::path& config_path, const std::string& out_dir_override, int threads) {
  RunConfig cfg;
  try {
    cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;

  try {
    const HamiltonianModel model = build_model(cfg);
    const BoundaryFamily family = build_boundary_family(cfg);
    const XAnsatz ansatz0 = build_ansatz(cfg);
    const FitNumerics numerics = build_fit_numerics(cfg, threads);

    fs::create_directories(cfg.out_dir);
    const ArtifactPaths paths = artifact_paths(cfg.out_dir);

    // Fit the transport-field parameters (and any opened data constants).
    const EmbeddabilityFit fit = fit_embeddability(model, family, ansatz0, numerics);
    std::cout << "fit: compatible = " << (fit.compatible ? "true" : "false")
              << ", residual = " << fit.residual_norm << ", iterations = "
              << fit.iterations << "\n";

    // Final fan at the fitted parameters.
    const BoundarySpec spec = family.make_spec(fit.data_constants);
    const ZetaGrid grid{cfg.zeta_grid, spec.zeta_box};
    const auto samples = sample_boundary(spec, cfg.zeta_grid);
    CharacteristicFan fan =
        trace_fan(model, samples, grid, x_field(fit.ansatz, model.n), spec.transverse,
                  cfg.Xi, cfg.steps, cfg.covelocity_tol, threads);

    if (cfg.emit_residual_csv) {
      const EmbeddabilityResidual res = embeddability_residual(model, fan);
      std::ofstream csv(paths.fit_residual_csv, std::ios::binary);
      write_embeddability_csv(res, fan, csv);
    }
    write_json(paths.fit_json,
               fit_report_json(fit, cfg.emit_residual_csv
                                        ? paths.fit_residual_csv.filename().string()
                                        : ""));

    if (cfg.emit_fan_csv) {
      std::ofstream csv(paths.fan_csv, std::ios::binary);
      write_fan_csv(fan, csv);
    }

    ChartOptions chart;
    chart.tol = cfg.chart_tol;
    chart.max_iter = cfg.chart_max_iter;
    FieldSolution sol = make_solution(model, std::move(fan), chart);
    sol.fit = fit;

    {
      std::ofstream csv(paths.solution_csv, std::ios::binary);
      export_grid(sol, cfg.grid_resolution, csv);
    }
    write_json(paths.sidecar_json, solution_sidecar(sol, cfg.grid_resolution));

    const bool closed_form = cfg.boundary_preset == "paper_example" &&
                             cfg.model_name == "free_scalar" && cfg.n == 2;
    const ResidualReport report =
        verification_suite(cfg, model, sol, closed_form, oracle_from_fit(cfg, fit),
                           cfg.emit_residual_csv ? fs::path(cfg.out_dir) : fs::path{});
    write_json(paths.report_json, report_json(report));
    print_report(report);

    if (!fit.compatible) {
      std::cout << "boundary data incompatible with the ansatz family"
                << (fit.message.empty() ? "" : " (" + fit.message + ")") << "\n";
      return kExitIncompatible;
    }
    return report.pass() ? kExitOk : kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int verify_only(const fs::path& config_path, const fs::path& solution_dir) {
  RunConfig cfg;
  try {
    cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const ArtifactPaths paths = artifact_paths(solution_dir);
    if (!fs::exists(paths.fan_csv))
      throw MissingArtifact("verify_only", "missing fan CSV: " + paths.fan_csv.string());
    if (!fs::exists(paths.sidecar_json))
      throw MissingArtifact("verify_only",
                            "missing sidecar: " + paths.sidecar_json.string());

    const HamiltonianModel model = build_model(cfg);

    nlohmann::json sidecar;
    {
      std::ifstream in(paths.sidecar_json);
      in >> sidecar;
    }
    ZetaGrid grid;
    for (const auto& a : sidecar.at("zeta_axes")) grid.axes.push_back(a.get<int>());
    for (const auto& iv : sidecar.at("zeta_box"))
      grid.box.push_back({iv[0].get<double>(), iv[1].get<double>()});

    std::ifstream csv(paths.fan_csv);
    CharacteristicFan fan = read_fan_csv(csv, grid, model.n, model.r);

    ChartOptions chart;
    chart.tol = cfg.chart_tol;
    chart.max_iter = cfg.chart_max_iter;
    const FieldSolution sol = make_solution(model, std::move(fan), chart,
                                            /*fd_u_rate=*/true);

    bool closed_form = false;
    ClosedFormParams oracle;
    if (cfg.boundary_preset == "paper_example" && cfg.model_name == "free_scalar" &&
        cfg.n == 2 && fs::exists(paths.fit_json)) {
      nlohmann::json fitj;
      std::ifstream in(paths.fit_json);
      in >> fitj;
      if (fitj.contains("data_constants") && fitj.contains("fitted_params")) {
        closed_form = true;
        oracle.A = fitj["data_constants"].value("A", 1.0);
        oracle.B = fitj["data_constants"].value("B", 0.0);
        oracle.c = fitj["fitted_params"].value("c", 0.0);
        oracle.mu = cfg.mu;
        const XAnsatz ansatz = build_ansatz(cfg);
        oracle.alpha = ansatz.alpha;
      }
    }

    const ResidualReport report = verification_suite(cfg, model, sol, closed_form, oracle);
    write_json(paths.report_json, report_json(report));
    print_report(report);

    if (!report.pass()) {
      for (const auto& [name, ok] : report.verdicts())
        if (!ok) std::cerr << "failing residual: " << name << "\n";
      return kExitNumerical;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int check_derivatives_cmd(const fs::path& config_path) {
  RunConfig cfg;
  try {
    cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const HamiltonianModel model = build_model(cfg);
    const double max_error = check_derivatives(model, 100, 1e-5, cfg.seed);
    std::cout << "derivative check: max error = " << max_error << "\n";
    return max_error <= 1e-6 ? kExitOk : kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace hjfield

#include "hjfield/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "hjfield/errors.hpp"

namespace hjfield {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
}

double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

Vector as_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = as_double(j[i], where);
  return v;
}

std::vector<std::array<double, 2>> as_box(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of [lo, hi] pairs");
  std::vector<std::array<double, 2>> box;
  for (const auto& iv : j) {
    if (!iv.is_array() || iv.size() != 2)
      throw ConfigError(where + ": each interval must be [lo, hi]");
    box.push_back({as_double(iv[0], where), as_double(iv[1], where)});
    if (!(box.back()[0] < box.back()[1]))
      throw ConfigError(where + ": interval must have lo < hi");
  }
  return box;
}

}  // namespace

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config_json(j);
}

RunConfig parse_config_json(const json& j) {
  require_keys(j, "config",
               {"model", "boundary", "ansatz", "numerics", "outputs", "verify", "seed"});
  RunConfig cfg;

  // --- model ---------------------------------------------------------------
  if (!j.contains("model")) throw ConfigError("config: missing 'model'");
  {
    const json& m = j.at("model");
    require_keys(m, "model", {"name", "n", "mu"});
    cfg.model_name = as_string(m.at("name"), "model.name");
    if (cfg.model_name != "free_scalar" && cfg.model_name != "free_scalar_lagrangian")
      throw ConfigError("model.name: unknown model '" + cfg.model_name + "'");
    cfg.n = m.contains("n") ? as_int(m.at("n"), "model.n") : 2;
    if (cfg.n < 1) throw ConfigError("model.n: must be >= 1");
    cfg.mu = m.contains("mu") ? as_double(m.at("mu"), "model.mu") : 1.0;
    if (!(cfg.mu > 0.0)) throw ConfigError("model.mu: must be > 0");
  }

  // --- boundary ------------------------------------------------------------
  if (!j.contains("boundary")) throw ConfigError("config: missing 'boundary'");
  {
    const json& b = j.at("boundary");
    require_keys(b, "boundary",
                 {"preset", "params", "csv", "surface", "transverse", "zeta_box"});
    cfg.boundary_preset = as_string(b.at("preset"), "boundary.preset");
    if (cfg.boundary_preset != "paper_example" && cfg.boundary_preset != "linear" &&
        cfg.boundary_preset != "csv")
      throw ConfigError("boundary.preset: unknown preset '" + cfg.boundary_preset + "'");
    if (b.contains("params")) {
      if (!b.at("params").is_object())
        throw ConfigError("boundary.params: expected an object");
      for (const auto& [key, value] : b.at("params").items())
        cfg.boundary_params[key] = as_double(value, "boundary.params." + key);
    }
    if (cfg.boundary_preset == "csv") {
      if (!b.contains("csv")) throw ConfigError("boundary.csv: required for the csv preset");
      cfg.boundary_csv = as_string(b.at("csv"), "boundary.csv");
    } else if (b.contains("csv")) {
      throw ConfigError("boundary.csv: only valid with the csv preset");
    }
    if (b.contains("surface")) {
      const json& s = b.at("surface");
      require_keys(s, "boundary.surface", {"axis", "offset"});
      if (s.contains("axis")) cfg.surface_axis = as_int(s.at("axis"), "boundary.surface.axis");
      if (s.contains("offset"))
        cfg.surface_offset = as_double(s.at("offset"), "boundary.surface.offset");
    }
    if (cfg.surface_axis < 0 || cfg.surface_axis >= cfg.n)
      throw ConfigError("boundary.surface.axis: out of range");
    if (b.contains("transverse"))
      cfg.transverse = as_vector(b.at("transverse"), "boundary.transverse");
    else {
      cfg.transverse = Vector::Zero(cfg.n);
      cfg.transverse[cfg.surface_axis] = 1.0;
    }
    if (cfg.transverse.size() != cfg.n)
      throw ConfigError("boundary.transverse: needs n components");
    if (b.contains("zeta_box"))
      cfg.zeta_box = as_box(b.at("zeta_box"), "boundary.zeta_box");
    else
      cfg.zeta_box.assign(cfg.n - 1, {0.0, 1.0});
    if (static_cast<Index>(cfg.zeta_box.size()) != cfg.n - 1)
      throw ConfigError("boundary.zeta_box: needs n-1 intervals");
  }

  // --- ansatz --------------------------------------------------------------
  if (!j.contains("ansatz")) throw ConfigError("config: missing 'ansatz'");
  {
    const json& a = j.at("ansatz");
    require_keys(a, "ansatz",
                 {"kind", "A", "direction_params", "alpha", "free_constants"});
    cfg.ansatz_kind = as_string(a.at("kind"), "ansatz.kind");
    if (cfg.ansatz_kind == "constant") {
      if (!a.contains("A")) throw ConfigError("ansatz.A: required for the constant kind");
      cfg.ansatz_A = as_vector(a.at("A"), "ansatz.A");
      if (cfg.ansatz_A.size() != cfg.n) throw ConfigError("ansatz.A: needs n components");
    } else if (cfg.ansatz_kind == "scaled_direction") {
      if (!a.contains("direction_params"))
        throw ConfigError("ansatz.direction_params: required for scaled_direction");
      cfg.direction_params = as_vector(a.at("direction_params"), "ansatz.direction_params");
      if (cfg.direction_params.size() != cfg.n - 1)
        throw ConfigError("ansatz.direction_params: needs n-1 components");
    } else {
      throw ConfigError("ansatz.kind: unknown kind '" + cfg.ansatz_kind + "'");
    }
    if (a.contains("alpha")) {
      const json& al = a.at("alpha");
      require_keys(al, "ansatz.alpha",
                   {"kind", "value", "base", "amplitude", "frequency"});
      cfg.alpha_kind = as_string(al.at("kind"), "ansatz.alpha.kind");
      if (cfg.alpha_kind == "constant") {
        if (al.contains("value"))
          cfg.alpha_value = as_double(al.at("value"), "ansatz.alpha.value");
        if (!(cfg.alpha_value > 0)) throw ConfigError("ansatz.alpha.value: must be > 0");
      } else if (cfg.alpha_kind == "sinusoidal") {
        if (al.contains("base")) cfg.alpha_base = as_double(al.at("base"), "ansatz.alpha.base");
        if (al.contains("amplitude"))
          cfg.alpha_amplitude = as_double(al.at("amplitude"), "ansatz.alpha.amplitude");
        if (al.contains("frequency"))
          cfg.alpha_frequency = as_double(al.at("frequency"), "ansatz.alpha.frequency");
        if (!(cfg.alpha_base - std::abs(cfg.alpha_amplitude) > 0))
          throw ConfigError("ansatz.alpha: sinusoidal magnitude must stay positive");
      } else {
        throw ConfigError("ansatz.alpha.kind: unknown kind '" + cfg.alpha_kind + "'");
      }
    }
    if (a.contains("free_constants")) {
      if (!a.at("free_constants").is_object())
        throw ConfigError("ansatz.free_constants: expected an object name -> initial guess");
      for (const auto& [key, value] : a.at("free_constants").items())
        cfg.free_constants.emplace_back(key,
                                        as_double(value, "ansatz.free_constants." + key));
    }
  }

  // --- numerics ------------------------------------------------------------
  if (!j.contains("numerics")) throw ConfigError("config: missing 'numerics'");
  {
    const json& nm = j.at("numerics");
    require_keys(nm, "numerics",
                 {"Xi", "steps", "zeta_grid", "fit_tol", "fit_max_iter", "chart_tol",
                  "chart_max_iter", "covelocity_tol", "fd_step"});
    cfg.Xi = as_double(nm.at("Xi"), "numerics.Xi");
    if (cfg.Xi == 0.0) throw ConfigError("numerics.Xi: must be nonzero");
    cfg.steps = as_int(nm.at("steps"), "numerics.steps");
    if (cfg.steps < 10) throw ConfigError("numerics.steps: must be >= 10");
    if (!nm.contains("zeta_grid")) throw ConfigError("numerics.zeta_grid: required");
    for (const auto& g : nm.at("zeta_grid")) {
      cfg.zeta_grid.push_back(as_int(g, "numerics.zeta_grid"));
      if (cfg.zeta_grid.back() < 3)
        throw ConfigError("numerics.zeta_grid: each axis needs >= 3 points");
    }
    if (static_cast<Index>(cfg.zeta_grid.size()) != cfg.n - 1)
      throw ConfigError("numerics.zeta_grid: needs n-1 axes");
    auto positive = [&](const char* key, double fallback) {
      double v = nm.contains(key) ? as_double(nm.at(key), std::string("numerics.") + key)
                                  : fallback;
      if (!(v > 0)) throw ConfigError(std::string("numerics.") + key + ": must be > 0");
      return v;
    };
    cfg.fit_tol = positive("fit_tol", 1e-3);
    cfg.chart_tol = positive("chart_tol", 1e-10);
    cfg.covelocity_tol = positive("covelocity_tol", 1e-12);
    cfg.fd_step_rel = positive("fd_step", 1e-3);
    if (nm.contains("fit_max_iter"))
      cfg.fit_max_iter = as_int(nm.at("fit_max_iter"), "numerics.fit_max_iter");
    if (nm.contains("chart_max_iter"))
      cfg.chart_max_iter = as_int(nm.at("chart_max_iter"), "numerics.chart_max_iter");
    if (cfg.fit_max_iter < 1 || cfg.chart_max_iter < 1)
      throw ConfigError("numerics: iteration limits must be >= 1");
  }

  // --- outputs -------------------------------------------------------------
  {
    const json& o = j.contains("outputs") ? j.at("outputs") : json::object();
    require_keys(o, "outputs",
                 {"directory", "grid_resolution", "emit_fan_csv", "emit_residual_csv"});
    if (o.contains("directory"))
      cfg.out_dir = as_string(o.at("directory"), "outputs.directory");
    if (o.contains("grid_resolution")) {
      for (const auto& g : o.at("grid_resolution")) {
        cfg.grid_resolution.push_back(as_int(g, "outputs.grid_resolution"));
        if (cfg.grid_resolution.back() < 2)
          throw ConfigError("outputs.grid_resolution: must be >= 2 per axis");
      }
    } else {
      cfg.grid_resolution.assign(cfg.n, 10);
    }
    if (static_cast<Index>(cfg.grid_resolution.size()) != cfg.n)
      throw ConfigError("outputs.grid_resolution: needs n axes");
    if (o.contains("emit_fan_csv")) {
      if (!o.at("emit_fan_csv").is_boolean())
        throw ConfigError("outputs.emit_fan_csv: expected a boolean");
      cfg.emit_fan_csv = o.at("emit_fan_csv").get<bool>();
    }
    if (o.contains("emit_residual_csv")) {
      if (!o.at("emit_residual_csv").is_boolean())
        throw ConfigError("outputs.emit_residual_csv: expected a boolean");
      cfg.emit_residual_csv = o.at("emit_residual_csv").get<bool>();
    }
  }

  // --- verify --------------------------------------------------------------
  cfg.verify_tolerances = {{"hj", 1e-3},
                           {"hamilton_first", 1e-3},
                           {"hamilton_second", 1e-3},
                           {"euler_lagrange", 5e-3},
                           {"closed_form", 1e-4}};
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    require_keys(v, "verify", {"tolerances"});
    if (v.contains("tolerances")) {
      if (!v.at("tolerances").is_object())
        throw ConfigError("verify.tolerances: expected an object");
      for (const auto& [key, value] : v.at("tolerances").items()) {
        if (!cfg.verify_tolerances.count(key))
          throw ConfigError("verify.tolerances: unknown residual '" + key + "'");
        const double tol = as_double(value, "verify.tolerances." + key);
        if (!(tol > 0)) throw ConfigError("verify.tolerances." + key + ": must be > 0");
        cfg.verify_tolerances[key] = tol;
      }
    }
  }

  if (j.contains("seed")) cfg.seed = static_cast<unsigned>(as_int(j.at("seed"), "seed"));
  return cfg;
}

HamiltonianModel build_model(const RunConfig& cfg) {
  if (cfg.model_name == "free_scalar")
    return make_free_scalar(cfg.n, FreeScalarParams{cfg.mu});
  return hamiltonian_from_lagrangian(make_free_scalar_lagrangian(cfg.n, FreeScalarParams{cfg.mu}));
}

std::optional<LagrangianModel> build_lagrangian(const RunConfig& cfg) {
  return make_free_scalar_lagrangian(cfg.n, FreeScalarParams{cfg.mu});
}

namespace {

// Tabulated boundary data: single zeta column, then psi and psi_hat columns.
struct CsvTable {
  std::vector<double> z;
  std::vector<Vector> psi;
  std::vector<Vector> psihat;

  Vector interp(const std::vector<Vector>& col, double zq) const {
    if (zq <= z.front()) return col.front();
    if (zq >= z.back()) return col.back();
    const auto it = std::upper_bound(z.begin(), z.end(), zq);
    const size_t k = static_cast<size_t>(it - z.begin()) - 1;
    const double t = (zq - z[k]) / (z[k + 1] - z[k]);
    return (1.0 - t) * col[k] + t * col[k + 1];
  }
};

CsvTable read_boundary_csv(const std::string& path, Index r) {
  std::ifstream in(path);
  if (!in) throw ConfigError("boundary.csv: cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (!line.empty() && !(std::isdigit(line[0]) || line[0] == '-' || line[0] == '+'))
        continue;  // header row
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Index>(row.size()) != 1 + 2 * r)
      throw ConfigError("boundary.csv: expected columns zeta, psi*" + std::to_string(r) +
                        ", psi_hat*" + std::to_string(r));
    table.z.push_back(row[0]);
    Vector psi(r), psihat(r);
    for (Index i = 0; i < r; ++i) psi[i] = row[1 + i];
    for (Index i = 0; i < r; ++i) psihat[i] = row[1 + r + i];
    table.psi.push_back(psi);
    table.psihat.push_back(psihat);
  }
  if (table.z.size() < 2) throw ConfigError("boundary.csv: needs at least two rows");
  for (size_t k = 1; k < table.z.size(); ++k)
    if (!(table.z[k] > table.z[k - 1]))
      throw ConfigError("boundary.csv: zeta column must be strictly increasing");
  return table;
}

}  // namespace

BoundaryFamily build_boundary_family(const RunConfig& cfg) {
  const Index n = cfg.n;
  const Index axis = cfg.surface_axis;
  const double offset = cfg.surface_offset;
  const double mu = cfg.mu;

  // Coordinate hyperplane x^axis = offset, remaining coordinates = zeta.
  auto surface = [n, axis, offset](const Vector& zeta) {
    Vector x(n);
    Index at = 0;
    for (Index i = 0; i < n; ++i) x[i] = (i == axis) ? offset : zeta[at++];
    return x;
  };
  Vector transverse = cfg.transverse;
  auto transverse_fn = [transverse](const Vector&) { return transverse; };

  BoundaryFamily family;
  family.free_constants = cfg.free_constants;

  if (cfg.boundary_preset == "paper_example") {
    if (n != 2) throw ConfigError("boundary preset paper_example requires n = 2");
    family.params = {{"A", 1.0}, {"B", 0.0}, {"c_data", 0.0}};
    for (const auto& [key, value] : cfg.boundary_params) {
      if (!family.params.count(key))
        throw ConfigError("boundary.params: unknown constant '" + key + "'");
      family.params[key] = value;
    }
    family.make_spec = [=](const std::map<std::string, double>& c) {
      const double A = c.at("A");
      const double B = c.at("B");
      const double cd = c.at("c_data");
      const double s = std::sqrt(1.0 + std::exp(2.0 * cd));
      const double omega = mu * std::exp(cd) / s;
      BoundarySpec spec;
      spec.n = n;
      spec.r = 1;
      spec.surface = surface;
      spec.transverse = transverse_fn;
      spec.zeta_box = cfg.zeta_box;
      spec.field_data = [=](const Vector& zeta) {
        Vector psi(1);
        psi[0] = A * std::cos(omega * zeta[0]) + B * std::sin(omega * zeta[0]);
        return psi;
      };
      spec.normal_data = [=](const Vector& zeta) {
        Vector psihat(1);
        psihat[0] =
            mu * (B * std::cos(omega * zeta[0]) - A * std::sin(omega * zeta[0])) / s;
        return psihat;
      };
      return spec;
    };
  } else if (cfg.boundary_preset == "linear") {
    family.params = {{"slope", 1.0}, {"normal_value", 0.0}};
    for (const auto& [key, value] : cfg.boundary_params) {
      if (!family.params.count(key))
        throw ConfigError("boundary.params: unknown constant '" + key + "'");
      family.params[key] = value;
    }
    family.make_spec = [=](const std::map<std::string, double>& c) {
      const double slope = c.at("slope");
      const double normal_value = c.at("normal_value");
      BoundarySpec spec;
      spec.n = n;
      spec.r = 1;
      spec.surface = surface;
      spec.transverse = transverse_fn;
      spec.zeta_box = cfg.zeta_box;
      spec.field_data = [slope, n](const Vector& zeta) {
        Vector psi(1);
        psi[0] = n > 1 ? slope * zeta[0] : slope;
        return psi;
      };
      spec.normal_data = [normal_value](const Vector&) {
        Vector psihat(1);
        psihat[0] = normal_value;
        return psihat;
      };
      return spec;
    };
  } else {  // csv
    if (n != 2) throw ConfigError("boundary preset csv requires n = 2 (single zeta column)");
    if (!cfg.free_constants.empty())
      throw ConfigError("ansatz.free_constants: tabulated boundary data has no constants");
    auto table = std::make_shared<CsvTable>(read_boundary_csv(cfg.boundary_csv, 1));
    family.make_spec = [=](const std::map<std::string, double>&) {
      BoundarySpec spec;
      spec.n = n;
      spec.r = 1;
      spec.surface = surface;
      spec.transverse = transverse_fn;
      spec.zeta_box = cfg.zeta_box;
      spec.field_data = [table](const Vector& zeta) {
        return table->interp(table->psi, zeta[0]);
      };
      spec.normal_data = [table](const Vector& zeta) {
        return table->interp(table->psihat, zeta[0]);
      };
      return spec;
    };
  }

  for (const auto& [name, init] : family.free_constants)
    if (!family.params.count(name))
      throw ConfigError("ansatz.free_constants: unknown boundary constant '" + name + "'");
  return family;
}

XAnsatz build_ansatz(const RunConfig& cfg) {
  XAnsatz a;
  if (cfg.ansatz_kind == "constant") {
    a.kind = XAnsatz::Kind::constant;
    a.const_A = cfg.ansatz_A;
    return a;
  }
  a.kind = XAnsatz::Kind::scaled_direction;
  a.direction_params = cfg.direction_params;
  if (cfg.alpha_kind == "constant") {
    const double value = cfg.alpha_value;
    a.alpha = [value](const Vector&) { return value; };
  } else {
    const double base = cfg.alpha_base;
    const double amp = cfg.alpha_amplitude;
    const double freq = cfg.alpha_frequency;
    a.alpha = [base, amp, freq](const Vector& zeta) {
      return base + amp * std::sin(freq * zeta[0]);
    };
  }
  return a;
}

FitNumerics build_fit_numerics(const RunConfig& cfg, int threads) {
  FitNumerics fn;
  fn.Xi = cfg.Xi;
  fn.steps = cfg.steps;
  fn.zeta_grid = cfg.zeta_grid;
  fn.tol = cfg.fit_tol;
  fn.max_iter = cfg.fit_max_iter;
  fn.covelocity_tol = cfg.covelocity_tol;
  fn.threads = threads;
  return fn;
}

}  // namespace hjfield

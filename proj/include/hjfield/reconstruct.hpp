#pragma once

// Inversion of the (xi, zeta) -> x chart and evaluation of the critical field
// y(x), p(x) and the flux potentials S^mu(x) on arbitrary base points.
//
// Interpolation: cubic Hermite along xi (nodal rates from the characteristic
// RHS) and tensor-product cubic Lagrange across trajectories in zeta, with the
// same zeta rule applied to the chart functions x0(zeta), X(zeta) so the
// interpolated field and the interpolated chart stay consistent.

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjfield/characteristics.hpp"
#include "hjfield/embeddability.hpp"

namespace hjfield {

struct ChartOptions {
  double tol = 1e-10;        // Newton tolerance on ||x(s) - x_query||_inf
  int max_iter = 50;
  double caustic_det_tol = 1e-10;  // |det| below this raises CausticDetected
};

struct ChartPoint {
  double xi = 0.0;
  Vector zeta;
};

// Per-worker scratch: warm start plus a cache keyed on the query point bits.
struct ChartScratch {
  std::optional<ChartPoint> warm;
  std::unordered_map<std::string, ChartPoint> cache;
};

struct FieldSolution {
  HamiltonianModel model;
  CharacteristicFan fan;
  std::optional<EmbeddabilityFit> fit;
  ChartOptions chart;
  std::vector<std::array<double, 2>> domain_box;  // n intervals

  // Per-trajectory nodal data for Hermite interpolation: rates of y and u_i
  // from the characteristic RHS, plus the strip-corrected quadrature
  // u_eff = u - H0 * xi whose S^mu = u_eff X^mu satisfies the governing
  // first-order equation (H0 is the Hamiltonian value at xi = 0).
  struct TrajData {
    std::vector<Vector> dy;    // per node, r
    std::vector<Vector> du_i;  // per node, r
    std::vector<double> ueff;
    std::vector<double> dueff;
    double H0 = 0.0;
  };
  std::vector<TrajData> nodes;
};

/// Builds the solution wrapper: nodal rates, strip correction, domain box.
/// With fd_u_rate the quadrature rate comes from differencing the stored u
/// nodes instead of the RHS (used for fans re-imported from CSV, which do not
/// carry u_mu).
FieldSolution make_solution(const HamiltonianModel& model, CharacteristicFan fan,
                            const ChartOptions& chart = {}, bool fd_u_rate = false);

/// Forward chart map through the interpolants: x(xi, zeta).
Vector forward_map(const FieldSolution& sol, double xi, const Vector& zeta);

/// Newton inversion of the chart, seeded from the nearest stored fan node
/// (brute force) unless the scratch warm start already converges.  Throws
/// OutOfDomain / CausticDetected / NoConvergence.
ChartPoint invert_chart(const FieldSolution& sol, const Vector& x_query,
                        ChartScratch* scratch = nullptr);

struct FieldValue {
  Vector y;  // r
  Matrix p;  // n x r
};

FieldValue field_at(const FieldSolution& sol, const Vector& x_query,
                    ChartScratch* scratch = nullptr);

/// S^mu(x) = u_eff(xi, zeta) X^mu(zeta); zero on the boundary surface by the
/// u(0) = 0 convention.
Vector s_at(const FieldSolution& sol, const Vector& x_query,
            ChartScratch* scratch = nullptr);

/// Regular grid over the domain box as CSV: x, y, p, S and a chart_ok flag
/// (0 where the inversion failed; field columns are NaN there).
void export_grid(const FieldSolution& sol, const std::vector<int>& resolution,
                 std::ostream& os);

/// Sidecar metadata: domain box, resolutions, conventions.
nlohmann::ordered_json solution_sidecar(const FieldSolution& sol,
                                        const std::vector<int>& resolution);

}  // namespace hjfield

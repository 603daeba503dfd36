#pragma once

// Divergence-free transport-field ansatz families, the chart-regularity
// matrix, the weak-embeddability residual measured across the characteristic
// fan, and the Gauss-Newton fit of ansatz parameters (optionally together
// with designated boundary-data constants).

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjfield/characteristics.hpp"

namespace hjfield {

struct XAnsatz {
  enum class Kind { constant, scaled_direction };
  Kind kind = Kind::constant;

  // constant: X = A everywhere (divergence-free trivially).
  Vector const_A;

  // scaled_direction: X(zeta) = alpha(zeta) * dhat(c), with the unit direction
  // dhat = (1, e^{c_1}, ..., e^{c_{n-1}}) / norm.  Because the direction is
  // fixed and the magnitude rides the characteristic labels, the divergence
  // vanishes for every choice of alpha.
  Vector direction_params;                      // n-1 entries
  std::function<double(const Vector&)> alpha;   // zeta -> magnitude > 0
};

/// Transport field evaluator zeta -> X[n] for the given ansatz.
std::function<Vector(const Vector&)> x_field(const XAnsatz& ansatz, Index n);

/// Free parameter vector of the ansatz (A for constant, direction params for
/// scaled_direction) and its counterpart setter.
Vector ansatz_params(const XAnsatz& ansatz);
XAnsatz ansatz_with_params(XAnsatz ansatz, const Vector& params);
std::vector<std::string> ansatz_param_names(const XAnsatz& ansatz, Index n);

/// Numerical audit of dX^mu/dx^mu through the inverse chart Jacobian at
/// interior fan nodes; returns the max absolute divergence.  Throws
/// SingularChart when the chart matrix is singular at a stencil point.
double divergence_residual(const CharacteristicFan& fan);

struct RegularityMatrix {
  Matrix m;  // first row A^mu, then rows dA^mu/dzeta^B xi + dx0^mu/dzeta^B
  double det = 0.0;
};

/// Chart-regularity matrix at one fan node; zeta index must be interior.
RegularityMatrix regularity_matrix(const CharacteristicFan& fan, Index zeta_flat,
                                   Index xi_index);

struct EmbeddabilityResidual {
  // One row per (interior zeta node, xi step), one column per (i, A) pair
  // with column index = A + (n-1)*i.
  Matrix values;
  std::vector<Index> zeta_nodes;
  std::vector<Index> xi_indices;
  double rms = 0.0;
  double max_abs = 0.0;
};

/// Weak-embeddability residual R^i_A = dy^i/dzeta^A - dH/dp^mu_i dx^mu/dzeta^A
/// with the zeta derivatives taken by central differences across neighboring
/// trajectories at equal xi.
EmbeddabilityResidual embeddability_residual(const HamiltonianModel& model,
                                             const CharacteristicFan& fan);

void write_embeddability_csv(const EmbeddabilityResidual& res,
                             const CharacteristicFan& fan, std::ostream& os);

// Boundary data parametrized by named constants.  `params` holds the data as
// configured (the fit target); `free_constants` lists constants opened to the
// fitter with their initial guesses.
struct BoundaryFamily {
  std::function<BoundarySpec(const std::map<std::string, double>&)> make_spec;
  std::map<std::string, double> params;
  std::vector<std::pair<std::string, double>> free_constants;
};

struct FitNumerics {
  double Xi = 1.0;
  int steps = 100;
  std::vector<int> zeta_grid;
  double tol = 1e-3;           // compatibility tolerance, scaled by data magnitude
  int max_iter = 30;
  double covelocity_tol = 1e-12;
  int threads = 1;
};

struct EmbeddabilityFit {
  XAnsatz ansatz;                        // fitted parameters substituted
  double residual_norm = 0.0;            // see note below
  bool compatible = false;               // residual_norm <= scaled tol
  Vector fitted_params;                  // [ansatz params..., opened constants...]
  std::vector<std::string> param_names;
  int iterations = 0;
  bool converged = false;
  double embed_rms = 0.0;
  double embed_max = 0.0;
  double data_rms = 0.0;                 // 0 when no constants were opened
  double tol_effective = 0.0;
  std::map<std::string, double> data_constants;  // full set, fitted values in place
  std::string message;
};

/// Gauss-Newton least squares over the ansatz parameters plus any opened data
/// constants, re-tracing the fan per residual evaluation (numerical Jacobian
/// by forward differences, relative step 1e-6).  residual_norm is the RMS of
/// the embeddability residual; when data constants are opened it is the max of
/// that RMS and the RMS mismatch against the configured boundary data, so the
/// verdict still answers "are the given data compatible".
EmbeddabilityFit fit_embeddability(const HamiltonianModel& model,
                                   const BoundaryFamily& family, const XAnsatz& ansatz0,
                                   const FitNumerics& numerics);

nlohmann::ordered_json fit_report_json(const EmbeddabilityFit& fit,
                                       const std::string& residual_csv_path);

}  // namespace hjfield

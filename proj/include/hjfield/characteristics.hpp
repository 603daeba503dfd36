#pragma once

// Characteristic system of the transport-ansatz Hamilton-Jacobi equation:
//   dx/dxi   = X                     dX/dxi   = 0
//   dy_i/dxi = X^mu dH/dp^mu_i       du_i/dxi = -dH/dy^i
//   du_mu/dxi= -dH/dx^mu             du/dxi   = u_mu X^mu + u_i dH/dp^mu_i X^mu
// with momenta factorized as p^mu_i = u_i X^mu.  Fixed-step classical RK4;
// the x-flow is linear so RK4 reproduces x = X xi + x0 exactly.

#include <functional>
#include <iosfwd>
#include <vector>

#include "hjfield/boundary.hpp"
#include "hjfield/model.hpp"
#include "hjfield/types.hpp"

namespace hjfield {

struct CharacteristicState {
  double xi = 0.0;
  Vector x;     // n
  Vector y;     // r
  Vector u_i;   // r covelocities
  Vector u_mu;  // n quadrature variables
  double u = 0.0;
  Vector X;     // n transport vector, constant along the curve
};

struct CharacteristicRates {
  Vector dx;
  Vector dy;
  Vector du_i;
  Vector du_mu;
  double du = 0.0;
};

CharacteristicRates char_rhs(const HamiltonianModel& model, const CharacteristicState& s);

/// Traces one characteristic over xi in [0, Xi] (Xi may be negative) with
/// `steps` RK4 steps; returns steps+1 states including the initial one.
/// Throws NonFinite if any component stops being finite.
std::vector<CharacteristicState> trace_characteristic(const HamiltonianModel& model,
                                                      const CharacteristicState& init,
                                                      double Xi, int steps);

struct CharacteristicFan {
  std::vector<std::vector<CharacteristicState>> trajectories;  // zeta-grid order
  std::vector<BoundarySample> samples;                         // same order
  double xi_max = 0.0;
  int steps = 0;
  ZetaGrid grid;

  double xi_step() const { return xi_max / steps; }
};

/// Traces the whole fan: one characteristic per boundary sample, with
/// X = X_of_zeta(zeta), u_i from initial_covelocity, u_mu = 0 and u = 0.
/// Trajectories are independent; `threads` > 1 traces them concurrently with
/// results gathered in zeta order.
CharacteristicFan trace_fan(const HamiltonianModel& model,
                            const std::vector<BoundarySample>& samples,
                            const ZetaGrid& grid,
                            const std::function<Vector(const Vector&)>& X_of_zeta,
                            const std::function<Vector(const Vector&)>& transverse,
                            double Xi, int steps, double covelocity_tol = 1e-12,
                            int threads = 1);

/// Fan CSV: zeta-index, xi, x^1..x^n, y^1..y^r, u_1..u_r, u, X^1..X^n.
void write_fan_csv(const CharacteristicFan& fan, std::ostream& os);

/// Rebuilds a fan from its CSV export (grid and xi metadata from the sidecar).
CharacteristicFan read_fan_csv(std::istream& is, const ZetaGrid& grid, Index n, Index r);

}  // namespace hjfield

#pragma once

// Boundary surface N, the data (field values and transverse derivative) given
// on it, regular zeta-grid sampling, and the Newton solve for the initial
// covelocities u_i of the characteristics.

#include <array>
#include <functional>
#include <vector>

#include "hjfield/model.hpp"
#include "hjfield/types.hpp"

namespace hjfield {

// Regular tensor-product grid over the zeta box, row-major (last axis fastest).
struct ZetaGrid {
  std::vector<int> axes;                       // points per axis, size n-1
  std::vector<std::array<double, 2>> box;      // [lo, hi] per axis

  Index dim() const { return static_cast<Index>(axes.size()); }
  Index count() const {
    Index c = 1;
    for (int a : axes) c *= a;
    return c;
  }
  double spacing(Index axis) const {
    return (box[axis][1] - box[axis][0]) / (axes[axis] - 1);
  }
  double coord(Index axis, Index k) const { return box[axis][0] + k * spacing(axis); }

  std::vector<Index> unflatten(Index flat) const;
  Index flatten(const std::vector<Index>& multi) const;
  Vector node(Index flat) const;
};

struct BoundarySpec {
  Index n = 0;
  Index r = 0;
  std::function<Vector(const Vector&)> surface;      // zeta[n-1] -> x[n]
  std::function<Vector(const Vector&)> field_data;   // zeta -> psi[r]
  std::function<Vector(const Vector&)> normal_data;  // zeta -> psi_hat[r]
  std::function<Vector(const Vector&)> transverse;   // zeta -> n^mu[n]
  std::vector<std::array<double, 2>> zeta_box;       // n-1 intervals
};

struct BoundarySample {
  Vector zeta;           // n-1
  Vector x0;             // n, = surface(zeta)
  Vector y0;             // r
  Vector ydot0;          // r, transverse-derivative data
  Matrix tangent_basis;  // (n-1) x n, rows d surface^mu / d zeta^A
};

/// Samples the boundary data on a regular grid over the zeta box.  The tangent
/// basis comes from central differences of the surface evaluator with the grid
/// spacing as step.  Throws DegenerateSurface when the surface Jacobian loses
/// rank or the transverse vector falls into the tangent span.
std::vector<BoundarySample> sample_boundary(const BoundarySpec& spec,
                                            const std::vector<int>& grid);

/// Initial covelocities: solves sum_mu dH/dp^mu_i(x0, y0, u (x) X0) n^mu =
/// ydot0_i for u by damped Newton seeded at u = 0 (exact in one step for
/// quadratic Hamiltonians).
Vector initial_covelocity(const HamiltonianModel& model, const BoundarySample& sample,
                          const Vector& X0, const Vector& transverse,
                          double tol = 1e-12, int max_iter = 50);

}  // namespace hjfield

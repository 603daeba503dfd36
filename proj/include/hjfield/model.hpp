#pragma once

// Hamiltonian / Lagrangian model layer: evaluators for H(x, y, p) and its
// partial derivatives, the fibered Legendre map p = dL/dv with its local
// Newton inverse, and finite-difference self checks for user-supplied
// derivative evaluators.

#include <functional>

#include "hjfield/types.hpp"

namespace hjfield {

struct HamiltonianModel {
  Index n = 0;  // base dimension
  Index r = 0;  // field components

  // All evaluators take (x[n], y[r], p[n x r]) and must be pure.
  std::function<double(const Vector&, const Vector&, const Matrix&)> h;
  std::function<Vector(const Vector&, const Vector&, const Matrix&)> dh_dy;
  std::function<Matrix(const Vector&, const Vector&, const Matrix&)> dh_dp;
  std::function<Vector(const Vector&, const Vector&, const Matrix&)> dh_dx;

  // Constant diagonal metric entries on the base; the constant volume factor
  // is absorbed into the Lagrangian/Hamiltonian normalization.
  Vector metric_diag;
};

struct LagrangianModel {
  Index n = 0;
  Index r = 0;

  // Evaluators take (x[n], y[r], v[n x r]) with v^i_mu = dy^i/dx^mu.
  std::function<double(const Vector&, const Vector&, const Matrix&)> l;
  std::function<Matrix(const Vector&, const Vector&, const Matrix&)> dl_dv;
  std::function<Vector(const Vector&, const Vector&, const Matrix&)> dl_dy;
  // Hessian in v, vectorized column-major: flat index = mu + n*i.
  std::function<Matrix(const Vector&, const Vector&, const Matrix&)> d2l_dvdv;
};

struct FreeScalarParams {
  double mu = 1.0;  // mass parameter, must be > 0
};

/// Free scalar field on an n-dimensional base: H = 1/2 (|p|^2 + mu^2 y^2),
/// with exact analytic derivatives.
HamiltonianModel make_free_scalar(Index n, const FreeScalarParams& params);

/// Matching Lagrangian L = 1/2 (|v|^2 - mu^2 y^2); used to exercise the
/// Legendre route against the analytic Hamiltonian.
LagrangianModel make_free_scalar_lagrangian(Index n, const FreeScalarParams& params);

struct LegendreImage {
  Matrix p;         // p^mu_i = dL/dv^i_mu
  double p_scalar;  // L - dL/dv : v  (equals -H after inversion)
};

LegendreImage legendre_map(const LagrangianModel& model, const Vector& x,
                           const Vector& y, const Matrix& v);

/// Newton inversion of the Legendre map: finds v with ||dL/dv - p||_inf <= tol.
/// Damped: the step is halved while the residual increases.
Matrix invert_legendre(const LagrangianModel& model, const Vector& x,
                       const Vector& y, const Matrix& p, const Matrix& v_seed,
                       double tol = 1e-10, int max_iter = 50);

/// Hamiltonian induced by a regular Lagrangian: H = v(p) : p - L(x, y, v(p)).
/// Derivative evaluators are central differences of h with relative step 1e-6.
HamiltonianModel hamiltonian_from_lagrangian(const LagrangianModel& model,
                                             double tol = 1e-10);

/// Max deviation between the analytic derivative evaluators and central
/// differences of h over `samples` random points; deterministic given `seed`.
double check_derivatives(const HamiltonianModel& model, int samples, double eps,
                         unsigned seed = 0);

}  // namespace hjfield

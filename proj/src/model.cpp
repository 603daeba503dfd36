#include "hjfield/model.hpp"

#include <random>

#include "hjfield/errors.hpp"

namespace hjfield {

HamiltonianModel make_free_scalar(Index n, const FreeScalarParams& params) {
  if (n < 1) throw ConfigError("make_free_scalar: base dimension must be >= 1");
  if (!(params.mu > 0.0)) throw ConfigError("make_free_scalar: mu must be > 0");
  const double mu2 = params.mu * params.mu;

  HamiltonianModel m;
  m.n = n;
  m.r = 1;
  m.metric_diag = Vector::Ones(n);
  m.h = [mu2](const Vector&, const Vector& y, const Matrix& p) {
    return 0.5 * (p.squaredNorm() + mu2 * y.squaredNorm());
  };
  m.dh_dy = [mu2](const Vector&, const Vector& y, const Matrix&) {
    return Vector(mu2 * y);
  };
  m.dh_dp = [](const Vector&, const Vector&, const Matrix& p) { return p; };
  m.dh_dx = [n](const Vector&, const Vector&, const Matrix&) {
    return Vector(Vector::Zero(n));
  };
  return m;
}

LagrangianModel make_free_scalar_lagrangian(Index n, const FreeScalarParams& params) {
  if (n < 1) throw ConfigError("make_free_scalar_lagrangian: base dimension must be >= 1");
  if (!(params.mu > 0.0)) throw ConfigError("make_free_scalar_lagrangian: mu must be > 0");
  const double mu2 = params.mu * params.mu;

  LagrangianModel m;
  m.n = n;
  m.r = 1;
  m.l = [mu2](const Vector&, const Vector& y, const Matrix& v) {
    return 0.5 * (v.squaredNorm() - mu2 * y.squaredNorm());
  };
  m.dl_dv = [](const Vector&, const Vector&, const Matrix& v) { return v; };
  m.dl_dy = [mu2](const Vector&, const Vector& y, const Matrix&) {
    return Vector(-mu2 * y);
  };
  m.d2l_dvdv = [n](const Vector&, const Vector&, const Matrix&) {
    return Matrix(Matrix::Identity(n, n));
  };
  return m;
}

LegendreImage legendre_map(const LagrangianModel& model, const Vector& x,
                           const Vector& y, const Matrix& v) {
  LegendreImage out;
  out.p = model.dl_dv(x, y, v);
  out.p_scalar = model.l(x, y, v) - (out.p.array() * v.array()).sum();
  return out;
}

Matrix invert_legendre(const LagrangianModel& model, const Vector& x,
                       const Vector& y, const Matrix& p, const Matrix& v_seed,
                       double tol, int max_iter) {
  const Index nr = model.n * model.r;
  Matrix v = v_seed;
  Matrix g = model.dl_dv(x, y, v) - p;
  double gnorm = g.cwiseAbs().maxCoeff();

  for (int iter = 0; iter < max_iter; ++iter) {
    if (gnorm <= tol) return v;

    Matrix hess = model.d2l_dvdv(x, y, v);
    Eigen::FullPivLU<Matrix> lu(hess);
    if (!lu.isInvertible())
      throw SingularHessian("invert_legendre",
                            "regularity condition violated: d2L/dv2 singular");

    Vector step = lu.solve(Eigen::Map<const Vector>(g.data(), nr));
    // Damped update: halve on residual increase.
    double scale = 1.0;
    for (int halving = 0; halving < 30; ++halving) {
      Matrix v_try = v - scale * Eigen::Map<const Matrix>(step.data(), model.n, model.r);
      Matrix g_try = model.dl_dv(x, y, v_try) - p;
      double gnorm_try = g_try.cwiseAbs().maxCoeff();
      if (gnorm_try < gnorm || scale < 1e-8) {
        v = v_try;
        g = g_try;
        gnorm = gnorm_try;
        break;
      }
      scale *= 0.5;
    }
  }
  if (gnorm <= tol) return v;
  throw NoConvergence("invert_legendre", "no convergence after " +
                                             std::to_string(max_iter) + " iterations");
}

HamiltonianModel hamiltonian_from_lagrangian(const LagrangianModel& model, double tol) {
  HamiltonianModel h;
  h.n = model.n;
  h.r = model.r;
  h.metric_diag = Vector::Ones(model.n);

  auto lmodel = model;  // captured by value; evaluators stay pure
  h.h = [lmodel, tol](const Vector& x, const Vector& y, const Matrix& p) {
    Matrix v = invert_legendre(lmodel, x, y, p, /*v_seed=*/p, tol);
    return (p.array() * v.array()).sum() - lmodel.l(x, y, v);
  };
  // At the inverted velocity the p-gradient collapses to v itself, and the
  // x/y gradients reduce to the Lagrangian partials at frozen v; differencing
  // h directly would put the Newton tolerance on top of a 1e-10 rounding
  // floor, which is too coarse for the downstream covelocity solves.
  h.dh_dp = [lmodel, tol](const Vector& x, const Vector& y, const Matrix& p) {
    return invert_legendre(lmodel, x, y, p, p, tol);
  };
  h.dh_dy = [lmodel, tol](const Vector& x, const Vector& y, const Matrix& p) {
    const Matrix v = invert_legendre(lmodel, x, y, p, p, tol);
    return Vector(-lmodel.dl_dy(x, y, v));
  };
  h.dh_dx = [lmodel, tol](const Vector& x, const Vector& y, const Matrix& p) {
    const Matrix v = invert_legendre(lmodel, x, y, p, p, tol);
    Vector out(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const double e = 1e-6 * std::max(1.0, std::abs(x[i]));
      Vector xp = x, xm = x;
      xp[i] += e;
      xm[i] -= e;
      out[i] = -(lmodel.l(xp, y, v) - lmodel.l(xm, y, v)) / (2.0 * e);
    }
    return out;
  };
  return h;
}

double check_derivatives(const HamiltonianModel& model, int samples, double eps,
                         unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  double worst = 0.0;

  for (int s = 0; s < samples; ++s) {
    Vector x(model.n), y(model.r);
    Matrix p(model.n, model.r);
    for (Index i = 0; i < model.n; ++i) x[i] = unif(rng);
    for (Index i = 0; i < model.r; ++i) y[i] = unif(rng);
    for (Index j = 0; j < model.r; ++j)
      for (Index i = 0; i < model.n; ++i) p(i, j) = unif(rng);

    const Vector ady = model.dh_dy(x, y, p);
    const Matrix adp = model.dh_dp(x, y, p);
    const Vector adx = model.dh_dx(x, y, p);

    for (Index i = 0; i < model.r; ++i) {
      Vector yp = y, ym = y;
      yp[i] += eps;
      ym[i] -= eps;
      const double fd = (model.h(x, yp, p) - model.h(x, ym, p)) / (2.0 * eps);
      worst = std::max(worst, std::abs(fd - ady[i]));
    }
    for (Index j = 0; j < model.r; ++j)
      for (Index i = 0; i < model.n; ++i) {
        Matrix pp = p, pm = p;
        pp(i, j) += eps;
        pm(i, j) -= eps;
        const double fd = (model.h(x, y, pp) - model.h(x, y, pm)) / (2.0 * eps);
        worst = std::max(worst, std::abs(fd - adp(i, j)));
      }
    for (Index i = 0; i < model.n; ++i) {
      Vector xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      const double fd = (model.h(xp, y, p) - model.h(xm, y, p)) / (2.0 * eps);
      worst = std::max(worst, std::abs(fd - adx[i]));
    }
  }
  return worst;
}

}  // namespace hjfield

#include "hjfield/boundary.hpp"

#include <Eigen/SVD>

#include "hjfield/errors.hpp"

namespace hjfield {

std::vector<Index> ZetaGrid::unflatten(Index flat) const {
  std::vector<Index> multi(axes.size());
  for (Index a = dim() - 1; a >= 0; --a) {
    multi[a] = flat % axes[a];
    flat /= axes[a];
  }
  return multi;
}

Index ZetaGrid::flatten(const std::vector<Index>& multi) const {
  Index flat = 0;
  for (Index a = 0; a < dim(); ++a) flat = flat * axes[a] + multi[a];
  return flat;
}

Vector ZetaGrid::node(Index flat) const {
  const auto multi = unflatten(flat);
  Vector zeta(dim());
  for (Index a = 0; a < dim(); ++a) zeta[a] = coord(a, multi[a]);
  return zeta;
}

std::vector<BoundarySample> sample_boundary(const BoundarySpec& spec,
                                            const std::vector<int>& grid) {
  const Index d = spec.n - 1;
  if (static_cast<Index>(grid.size()) != d)
    throw ConfigError("sample_boundary: grid must have n-1 axes");
  for (int g : grid)
    if (d > 0 && g < 3)
      throw ConfigError("sample_boundary: each grid axis needs >= 3 points");

  ZetaGrid zg{grid, spec.zeta_box};
  std::vector<BoundarySample> out;
  out.reserve(zg.count());

  for (Index k = 0; k < zg.count(); ++k) {
    BoundarySample s;
    s.zeta = zg.node(k);
    s.x0 = spec.surface(s.zeta);
    s.y0 = spec.field_data(s.zeta);
    s.ydot0 = spec.normal_data(s.zeta);
    s.tangent_basis = Matrix::Zero(d, spec.n);
    for (Index a = 0; a < d; ++a) {
      const double h = zg.spacing(a);
      Vector zp = s.zeta, zm = s.zeta;
      zp[a] += h;
      zm[a] -= h;
      s.tangent_basis.row(a) = ((spec.surface(zp) - spec.surface(zm)) / (2.0 * h)).transpose();
    }

    if (d > 0) {
      // Full-rank check on the surface Jacobian.
      Eigen::JacobiSVD<Matrix> svd(s.tangent_basis);
      const double smax = svd.singularValues()(0);
      const double smin = svd.singularValues()(d - 1);
      if (!(smin > 1e-10 * std::max(1.0, smax)))
        throw DegenerateSurface("sample_boundary",
                                "surface Jacobian rank-deficient at a grid node");

      // The transverse vector must leave the tangent span.
      Matrix frame(spec.n, spec.n);
      frame.row(0) = spec.transverse(s.zeta).transpose();
      frame.bottomRows(d) = s.tangent_basis;
      if (std::abs(frame.determinant()) <= 1e-12)
        throw DegenerateSurface("sample_boundary",
                                "transverse vector lies in the surface tangent span");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Vector initial_covelocity(const HamiltonianModel& model, const BoundarySample& sample,
                          const Vector& X0, const Vector& transverse,
                          double tol, int max_iter) {
  const Index r = model.r;
  auto residual = [&](const Vector& u) -> Vector {
    const Matrix p = momentum_from_covelocity(X0, u);
    return model.dh_dp(sample.x0, sample.y0, p).transpose() * transverse - sample.ydot0;
  };

  Vector u = Vector::Zero(r);
  Vector g = residual(u);
  double gnorm = g.cwiseAbs().maxCoeff();

  for (int iter = 0; iter < max_iter; ++iter) {
    if (gnorm <= tol) return u;

    // Jacobian by central differences in u.
    Matrix jac(r, r);
    for (Index j = 0; j < r; ++j) {
      const double e = 1e-6 * std::max(1.0, std::abs(u[j]));
      Vector up = u, um = u;
      up[j] += e;
      um[j] -= e;
      jac.col(j) = (residual(up) - residual(um)) / (2.0 * e);
    }
    Eigen::FullPivLU<Matrix> lu(jac);
    if (!lu.isInvertible())
      throw SingularJacobian("initial_covelocity",
                             "d2H/dp2 contracted with X and the transverse vector is singular");

    const Vector step = lu.solve(g);
    double scale = 1.0;
    for (int halving = 0; halving < 30; ++halving) {
      Vector u_try = u - scale * step;
      Vector g_try = residual(u_try);
      const double gnorm_try = g_try.cwiseAbs().maxCoeff();
      if (gnorm_try < gnorm || scale < 1e-8) {
        u = u_try;
        g = g_try;
        gnorm = gnorm_try;
        break;
      }
      scale *= 0.5;
    }
  }
  if (gnorm <= tol) return u;
  throw NoConvergence("initial_covelocity", "no convergence after " +
                                                std::to_string(max_iter) + " iterations");
}

}  // namespace hjfield

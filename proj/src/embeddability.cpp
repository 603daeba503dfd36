#include "hjfield/embeddability.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hjfield/errors.hpp"

namespace hjfield {

std::function<Vector(const Vector&)> x_field(const XAnsatz& ansatz, Index n) {
  if (ansatz.kind == XAnsatz::Kind::constant) {
    if (ansatz.const_A.size() != n)
      throw ConfigError("x_field: constant ansatz needs n components");
    Vector A = ansatz.const_A;
    return [A](const Vector&) { return A; };
  }

  if (ansatz.direction_params.size() != n - 1)
    throw ConfigError("x_field: scaled_direction ansatz needs n-1 direction parameters");
  if (!ansatz.alpha) throw ConfigError("x_field: scaled_direction ansatz needs alpha");

  Vector dir(n);
  dir[0] = 1.0;
  for (Index k = 1; k < n; ++k) dir[k] = std::exp(ansatz.direction_params[k - 1]);
  dir /= dir.norm();
  auto alpha = ansatz.alpha;
  return [dir, alpha](const Vector& zeta) { return Vector(alpha(zeta) * dir); };
}

Vector ansatz_params(const XAnsatz& ansatz) {
  return ansatz.kind == XAnsatz::Kind::constant ? ansatz.const_A
                                                : ansatz.direction_params;
}

XAnsatz ansatz_with_params(XAnsatz ansatz, const Vector& params) {
  if (ansatz.kind == XAnsatz::Kind::constant)
    ansatz.const_A = params;
  else
    ansatz.direction_params = params;
  return ansatz;
}

std::vector<std::string> ansatz_param_names(const XAnsatz& ansatz, Index n) {
  std::vector<std::string> names;
  if (ansatz.kind == XAnsatz::Kind::constant) {
    for (Index i = 0; i < n; ++i) names.push_back("A" + std::to_string(i + 1));
  } else if (n == 2) {
    names.push_back("c");
  } else {
    for (Index i = 0; i + 1 < n; ++i) names.push_back("c" + std::to_string(i + 1));
  }
  return names;
}

namespace {

std::vector<Index> grid_strides(const ZetaGrid& g) {
  std::vector<Index> s(g.axes.size());
  Index acc = 1;
  for (Index a = g.dim() - 1; a >= 0; --a) {
    s[a] = acc;
    acc *= g.axes[a];
  }
  return s;
}

// Flat indices of nodes interior on every zeta axis.
std::vector<Index> interior_nodes(const ZetaGrid& g) {
  std::vector<Index> out;
  if (g.dim() == 0) return out;
  for (Index k = 0; k < g.count(); ++k) {
    const auto multi = g.unflatten(k);
    bool interior = true;
    for (Index a = 0; a < g.dim(); ++a)
      if (multi[a] == 0 || multi[a] == g.axes[a] - 1) interior = false;
    if (interior) out.push_back(k);
  }
  return out;
}

}  // namespace

RegularityMatrix regularity_matrix(const CharacteristicFan& fan, Index zeta_flat,
                                   Index xi_index) {
  const ZetaGrid& g = fan.grid;
  const Index n = fan.trajectories[zeta_flat][xi_index].x.size();
  const double xi = fan.trajectories[zeta_flat][xi_index].xi;

  RegularityMatrix out;
  out.m = Matrix::Zero(n, n);
  out.m.row(0) = fan.trajectories[zeta_flat][xi_index].X.transpose();

  const auto multi = g.unflatten(zeta_flat);
  const auto strides = grid_strides(g);
  for (Index a = 0; a < g.dim(); ++a) {
    if (multi[a] == 0 || multi[a] == g.axes[a] - 1)
      throw ConfigError("regularity_matrix: zeta index must be interior");
    const Index plus = zeta_flat + strides[a];
    const Index minus = zeta_flat - strides[a];
    const double dz = 2.0 * g.spacing(a);
    const Vector dA = (fan.trajectories[plus][0].X - fan.trajectories[minus][0].X) / dz;
    const Vector dx0 = (fan.trajectories[plus][0].x - fan.trajectories[minus][0].x) / dz;
    out.m.row(a + 1) = (dA * xi + dx0).transpose();
  }
  out.det = out.m.determinant();
  return out;
}

double divergence_residual(const CharacteristicFan& fan) {
  const ZetaGrid& g = fan.grid;
  if (g.dim() == 0) return 0.0;  // constant-in-x transport field

  const Index n = fan.trajectories[0][0].x.size();
  const auto strides = grid_strides(g);
  const auto nodes = interior_nodes(g);
  const Index nxi = static_cast<Index>(fan.trajectories[0].size());

  double worst = 0.0;
  Matrix m(n, n), dX(n, g.dim());
  for (Index k : nodes) {
    const auto& center = fan.trajectories[k];
    for (Index a = 0; a < g.dim(); ++a) {
      const double dz = 2.0 * g.spacing(a);
      dX.col(a) =
          (fan.trajectories[k + strides[a]][0].X - fan.trajectories[k - strides[a]][0].X) / dz;
    }
    for (Index j = 0; j < nxi; ++j) {
      m.col(0) = center[j].X;
      for (Index a = 0; a < g.dim(); ++a) {
        const double dz = 2.0 * g.spacing(a);
        m.col(a + 1) =
            (fan.trajectories[k + strides[a]][j].x - fan.trajectories[k - strides[a]][j].x) / dz;
      }
      Eigen::FullPivLU<Matrix> lu(m);
      if (!lu.isInvertible())
        throw SingularChart("divergence_residual",
                            "chart matrix singular at an interior stencil point");
      const Matrix minv = lu.inverse();  // minv(a, mu) = d s^a / d x^mu
      double div = 0.0;
      for (Index mu = 0; mu < n; ++mu)
        for (Index a = 0; a < g.dim(); ++a) div += dX(mu, a) * minv(a + 1, mu);
      worst = std::max(worst, std::abs(div));
    }
  }
  return worst;
}

EmbeddabilityResidual embeddability_residual(const HamiltonianModel& model,
                                             const CharacteristicFan& fan) {
  const ZetaGrid& g = fan.grid;
  EmbeddabilityResidual out;

  const auto nodes = interior_nodes(g);
  if (nodes.empty()) {
    out.values.resize(0, 0);
    return out;
  }

  const auto strides = grid_strides(g);
  const Index nxi = static_cast<Index>(fan.trajectories[0].size());
  const Index d = g.dim();
  const Index r = model.r;

  out.values.resize(static_cast<Index>(nodes.size()) * nxi, r * d);
  out.zeta_nodes.reserve(out.values.rows());
  out.xi_indices.reserve(out.values.rows());

  Index row = 0;
  double sumsq = 0.0;
  for (Index k : nodes) {
    const auto& center = fan.trajectories[k];
    for (Index j = 0; j < nxi; ++j) {
      const CharacteristicState& s = center[j];
      const Matrix dhdp = model.dh_dp(s.x, s.y, momentum_from_covelocity(s.X, s.u_i));
      for (Index a = 0; a < d; ++a) {
        const double dz = 2.0 * g.spacing(a);
        const auto& plus = fan.trajectories[k + strides[a]][j];
        const auto& minus = fan.trajectories[k - strides[a]][j];
        const Vector dy = (plus.y - minus.y) / dz;
        const Vector dx = (plus.x - minus.x) / dz;
        for (Index i = 0; i < r; ++i) {
          const double res = dy[i] - dhdp.col(i).dot(dx);
          out.values(row, a + d * i) = res;
          sumsq += res * res;
          out.max_abs = std::max(out.max_abs, std::abs(res));
        }
      }
      out.zeta_nodes.push_back(k);
      out.xi_indices.push_back(j);
      ++row;
    }
  }
  out.rms = std::sqrt(sumsq / static_cast<double>(out.values.size()));
  return out;
}

void write_embeddability_csv(const EmbeddabilityResidual& res,
                             const CharacteristicFan& fan, std::ostream& os) {
  const Index d = fan.grid.dim();
  os << "zeta_index,xi";
  for (Index c = 0; c < res.values.cols(); ++c)
    os << ",r_i" << (c / d + 1) << "_A" << (c % d + 1);
  os << "\n";
  for (Index row = 0; row < res.values.rows(); ++row) {
    os << res.zeta_nodes[row] << ','
       << fmt17(fan.trajectories[res.zeta_nodes[row]][res.xi_indices[row]].xi);
    for (Index c = 0; c < res.values.cols(); ++c) os << ',' << fmt17(res.values(row, c));
    os << "\n";
  }
}

namespace {

struct FitEvaluation {
  Vector stacked;      // [embeddability residual entries..., data mismatch...]
  double embed_rms = 0.0;
  double embed_max = 0.0;
  double data_rms = 0.0;
};

struct FitProblem {
  const HamiltonianModel* model;
  const BoundaryFamily* family;
  const XAnsatz* ansatz0;
  const FitNumerics* numerics;
  Index n_ansatz_params = 0;
  std::vector<std::string> open_names;
  std::vector<BoundarySample> target;  // data at the configured constants

  std::map<std::string, double> constants_for(const Vector& theta) const {
    auto constants = family->params;
    for (size_t k = 0; k < open_names.size(); ++k)
      constants[open_names[k]] = theta[n_ansatz_params + static_cast<Index>(k)];
    return constants;
  }

  XAnsatz ansatz_for(const Vector& theta) const {
    return ansatz_with_params(*ansatz0, theta.head(n_ansatz_params));
  }

  FitEvaluation evaluate(const Vector& theta) const {
    const auto constants = constants_for(theta);
    const BoundarySpec spec = family->make_spec(constants);
    const ZetaGrid grid{numerics->zeta_grid, spec.zeta_box};
    const auto samples = sample_boundary(spec, numerics->zeta_grid);
    const XAnsatz ansatz = ansatz_for(theta);
    const CharacteristicFan fan =
        trace_fan(*model, samples, grid, x_field(ansatz, model->n), spec.transverse,
                  numerics->Xi, numerics->steps, numerics->covelocity_tol,
                  numerics->threads);
    const EmbeddabilityResidual emb = embeddability_residual(*model, fan);

    const Index ne = emb.values.size();
    const Index nd = open_names.empty()
                         ? 0
                         : static_cast<Index>(target.size()) * 2 * model->r;
    FitEvaluation ev;
    ev.stacked.resize(ne + nd);
    if (ne > 0)
      ev.stacked.head(ne) = Eigen::Map<const Vector>(emb.values.data(), ne);
    ev.embed_rms = emb.rms;
    ev.embed_max = emb.max_abs;

    if (nd > 0) {
      Index at = ne;
      double sumsq = 0.0;
      for (size_t k = 0; k < target.size(); ++k) {
        const Vector dpsi = samples[k].y0 - target[k].y0;
        const Vector dpsihat = samples[k].ydot0 - target[k].ydot0;
        for (Index i = 0; i < model->r; ++i) {
          ev.stacked[at++] = dpsi[i];
          ev.stacked[at++] = dpsihat[i];
          sumsq += dpsi[i] * dpsi[i] + dpsihat[i] * dpsihat[i];
        }
      }
      ev.data_rms = std::sqrt(sumsq / static_cast<double>(nd));
    }
    return ev;
  }
};

}  // namespace

EmbeddabilityFit fit_embeddability(const HamiltonianModel& model,
                                   const BoundaryFamily& family, const XAnsatz& ansatz0,
                                   const FitNumerics& numerics) {
  FitProblem prob;
  prob.model = &model;
  prob.family = &family;
  prob.ansatz0 = &ansatz0;
  prob.numerics = &numerics;
  prob.n_ansatz_params = ansatz_params(ansatz0).size();
  for (const auto& [name, init] : family.free_constants) {
    if (!family.params.count(name))
      throw ConfigError("fit_embeddability: unknown boundary-data constant '" + name + "'");
    prob.open_names.push_back(name);
  }
  prob.target = sample_boundary(family.make_spec(family.params), numerics.zeta_grid);

  // Tolerance scales with the magnitude of the configured data.
  double data_sumsq = 0.0;
  Index data_count = 0;
  for (const auto& s : prob.target) {
    data_sumsq += s.y0.squaredNorm() + s.ydot0.squaredNorm();
    data_count += 2 * model.r;
  }
  const double data_scale = data_count ? std::sqrt(data_sumsq / data_count) : 0.0;
  const double tol_eff = numerics.tol * std::max(1.0, data_scale);

  Vector theta(prob.n_ansatz_params + static_cast<Index>(prob.open_names.size()));
  theta.head(prob.n_ansatz_params) = ansatz_params(ansatz0);
  for (size_t k = 0; k < family.free_constants.size(); ++k)
    theta[prob.n_ansatz_params + static_cast<Index>(k)] = family.free_constants[k].second;

  FitEvaluation ev = prob.evaluate(theta);
  double cost = ev.stacked.squaredNorm();
  bool converged = theta.size() == 0;
  int iterations = 0;
  std::string message;

  for (int iter = 0; iter < numerics.max_iter && theta.size() > 0; ++iter) {
    iterations = iter + 1;
    if (std::sqrt(cost) <= 1e-14 * std::max<double>(1, ev.stacked.size())) {
      converged = true;
      break;
    }

    // Forward-difference Jacobian, relative step 1e-6.
    Matrix jac(ev.stacked.size(), theta.size());
    for (Index j = 0; j < theta.size(); ++j) {
      const double e = 1e-6 * std::max(1.0, std::abs(theta[j]));
      Vector tp = theta;
      tp[j] += e;
      jac.col(j) = (prob.evaluate(tp).stacked - ev.stacked) / e;
    }

    const Vector step = jac.colPivHouseholderQr().solve(-ev.stacked);
    if (!step.allFinite()) {
      message = "Gauss-Newton step not finite";
      break;
    }
    if (step.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + theta.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }

    // Halve the step until the cost decreases; trial points that blow up
    // numerically count as infinite cost.
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 12; ++halving) {
      const Vector theta_try = theta + scale * step;
      FitEvaluation ev_try;
      try {
        ev_try = prob.evaluate(theta_try);
      } catch (const NumericalError&) {
        scale *= 0.5;
        continue;
      }
      const double cost_try = ev_try.stacked.squaredNorm();
      if (cost_try < cost) {
        const double rel_drop = (cost - cost_try) / std::max(cost, 1e-300);
        theta = theta_try;
        ev = std::move(ev_try);
        cost = cost_try;
        improved = true;
        if (rel_drop < 1e-12) converged = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      converged = true;  // stationary within line-search resolution
      break;
    }
    if (converged) break;
  }

  EmbeddabilityFit fit;
  fit.ansatz = prob.ansatz_for(theta);
  fit.fitted_params = theta;
  fit.param_names = ansatz_param_names(ansatz0, model.n);
  for (const auto& name : prob.open_names) fit.param_names.push_back(name);
  fit.iterations = iterations;
  fit.converged = converged;
  fit.embed_rms = ev.embed_rms;
  fit.embed_max = ev.embed_max;
  fit.data_rms = ev.data_rms;
  fit.residual_norm = std::max(ev.embed_rms, ev.data_rms);
  fit.tol_effective = tol_eff;
  fit.compatible = converged && fit.residual_norm <= tol_eff;
  fit.data_constants = prob.constants_for(theta);
  if (!converged && message.empty())
    message = "no convergence after " + std::to_string(numerics.max_iter) + " iterations";
  fit.message = message;
  return fit;
}

nlohmann::ordered_json fit_report_json(const EmbeddabilityFit& fit,
                                       const std::string& residual_csv_path) {
  nlohmann::ordered_json j;
  j["ansatz_kind"] =
      fit.ansatz.kind == XAnsatz::Kind::constant ? "constant" : "scaled_direction";
  nlohmann::ordered_json params;
  for (Index k = 0; k < fit.fitted_params.size(); ++k)
    params[fit.param_names[k]] = fit.fitted_params[k];
  j["fitted_params"] = params;
  j["residual_rms"] = fit.residual_norm;
  j["embed_rms"] = fit.embed_rms;
  j["embed_max"] = fit.embed_max;
  j["data_rms"] = fit.data_rms;
  j["tolerance"] = fit.tol_effective;
  j["compatible"] = fit.compatible;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  nlohmann::ordered_json constants;
  for (const auto& [name, value] : fit.data_constants) constants[name] = value;
  j["data_constants"] = constants;
  j["residual_csv"] = residual_csv_path;
  if (!fit.message.empty()) j["message"] = fit.message;
  return j;
}

}  // namespace hjfield

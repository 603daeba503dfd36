#include "hjfield/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

#include "hjfield/errors.hpp"

namespace hjfield {

namespace {

// ---------------------------------------------------------------------------
// zeta interpolation: per-cell cubic Hermite with fourth-order differenced
// nodal slopes.  The interpolant is C1 across cells, which keeps nested
// finite differences of the reconstructed fields free of stencil-switch
// artifacts; grids of 3 points fall back to one global parabola, 2 to a line.

struct AxisStencil {
  Index i0 = 0;
  int m = 1;
  std::array<double, 6> w{};   // value weights
  std::array<double, 6> dw{};  // d/dzeta weights
};

namespace detail {

// Slope-estimate weights at node k in index units; span [i0, i0 + m).
struct SlopeStencil {
  Index i0 = 0;
  int m = 0;
  std::array<double, 5> w{};
};

SlopeStencil slope_stencil(Index npts, Index k) {
  SlopeStencil s;
  if (k >= 2 && k + 2 < npts) {
    s.i0 = k - 2;
    s.m = 5;
    s.w = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  } else if (k == 0) {
    s.i0 = 0;
    s.m = 4;
    s.w = {-11.0 / 6, 3.0, -1.5, 1.0 / 3, 0.0};
  } else if (k == 1) {
    s.i0 = 0;
    s.m = 4;
    s.w = {-1.0 / 3, -0.5, 1.0, -1.0 / 6, 0.0};
  } else if (k + 1 == npts) {
    s.i0 = npts - 4;
    s.m = 4;
    s.w = {-1.0 / 3, 1.5, -3.0, 11.0 / 6, 0.0};
  } else {  // k + 2 == npts
    s.i0 = npts - 4;
    s.m = 4;
    s.w = {1.0 / 6, -1.0, 0.5, 1.0 / 3, 0.0};
  }
  return s;
}

}  // namespace detail

AxisStencil axis_stencil(Index npts, double lo, double h, double t) {
  AxisStencil st;
  if (npts == 1) {
    st.w[0] = 1.0;
    return st;
  }
  const double u = (t - lo) / h;  // index coordinate

  if (npts <= 3) {  // single global polynomial through all nodes
    st.m = static_cast<int>(npts);
    for (int k = 0; k < st.m; ++k) {
      double w = 1.0;
      for (int j = 0; j < st.m; ++j) {
        if (j == k) continue;
        w *= (u - j) / (k - j);
      }
      st.w[k] = w;
      double dw = 0.0;
      for (int l = 0; l < st.m; ++l) {
        if (l == k) continue;
        double term = 1.0 / (k - l);
        for (int j = 0; j < st.m; ++j) {
          if (j == k || j == l) continue;
          term *= (u - j) / (k - j);
        }
        dw += term;
      }
      st.dw[k] = dw / h;
    }
    return st;
  }

  const Index cell = std::clamp<Index>(static_cast<Index>(std::floor(u)), 0, npts - 2);
  const double s = u - static_cast<double>(cell);
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double g00 = 6 * s2 - 6 * s, g10 = 3 * s2 - 4 * s + 1;
  const double g01 = -6 * s2 + 6 * s, g11 = 3 * s2 - 2 * s;

  const auto d0 = detail::slope_stencil(npts, cell);
  const auto d1 = detail::slope_stencil(npts, cell + 1);
  const Index i0 = std::min({cell, d0.i0, d1.i0});
  const Index iend = std::max({cell + 2, d0.i0 + d0.m, d1.i0 + d1.m});
  st.i0 = i0;
  st.m = static_cast<int>(iend - i0);

  auto acc = [&](Index node, double wval, double wder) {
    st.w[node - i0] += wval;
    st.dw[node - i0] += wder / h;
  };
  acc(cell, h00, g00);
  acc(cell + 1, h01, g01);
  for (int j = 0; j < d0.m; ++j)
    acc(d0.i0 + j, h10 * d0.w[j], g10 * d0.w[j]);
  for (int j = 0; j < d1.m; ++j)
    acc(d1.i0 + j, h11 * d1.w[j], g11 * d1.w[j]);
  return st;
}

struct ZetaBlend {
  std::vector<Index> traj;  // flat trajectory indices of the stencil nodes
  std::vector<double> w;    // value weight per node
  Matrix dw;                // (d x nodes) derivative weight per axis
};

ZetaBlend zeta_blend(const ZetaGrid& g, const Vector& zeta) {
  const Index d = g.dim();
  ZetaBlend b;
  if (d == 0) {
    b.traj = {0};
    b.w = {1.0};
    b.dw.resize(0, 1);
    return b;
  }

  std::vector<AxisStencil> st(d);
  Index combos = 1;
  for (Index a = 0; a < d; ++a) {
    st[a] = axis_stencil(g.axes[a], g.box[a][0], g.spacing(a), zeta[a]);
    combos *= st[a].m;
  }

  b.traj.resize(combos);
  b.w.resize(combos);
  b.dw.resize(d, combos);
  std::vector<Index> multi(d);
  for (Index c = 0; c < combos; ++c) {
    Index rem = c;
    double w = 1.0;
    for (Index a = d - 1; a >= 0; --a) {
      const Index k = rem % st[a].m;
      rem /= st[a].m;
      multi[a] = st[a].i0 + k;
      w *= st[a].w[k];
    }
    b.traj[c] = g.flatten(multi);
    b.w[c] = w;
    for (Index axis = 0; axis < d; ++axis) {
      Index rem2 = c;
      double dw = 1.0;
      for (Index a = d - 1; a >= 0; --a) {
        const Index k = rem2 % st[a].m;
        rem2 /= st[a].m;
        dw *= (a == axis) ? st[a].dw[k] : st[a].w[k];
      }
      b.dw(axis, c) = dw;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// xi interpolation: cubic Hermite between stored steps.

struct XiLocate {
  Index k = 0;
  double s = 0.0;
  double h = 0.0;
};

XiLocate locate_xi(const CharacteristicFan& fan, double xi) {
  XiLocate loc;
  loc.h = fan.xi_step();
  const double u = xi / loc.h;
  loc.k = std::clamp<Index>(static_cast<Index>(std::floor(u)), 0, fan.steps - 1);
  loc.s = u - static_cast<double>(loc.k);
  return loc;
}

struct HermiteBasis {
  double h00, h10, h01, h11;
};

HermiteBasis hermite(double s) {
  const double s2 = s * s, s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2};
}

double hermite_val(const HermiteBasis& b, double h, double f0, double m0, double f1,
                   double m1) {
  return b.h00 * f0 + b.h10 * h * m0 + b.h01 * f1 + b.h11 * h * m1;
}

}  // namespace

Vector forward_map(const FieldSolution& sol, double xi, const Vector& zeta) {
  const ZetaBlend b = zeta_blend(sol.fan.grid, zeta);
  const Index n = sol.model.n;
  Vector x0 = Vector::Zero(n), X = Vector::Zero(n);
  for (size_t c = 0; c < b.traj.size(); ++c) {
    const auto& t0 = sol.fan.trajectories[b.traj[c]][0];
    x0 += b.w[c] * t0.x;
    X += b.w[c] * t0.X;
  }
  return x0 + X * xi;
}

namespace {

// Newton inversion without the domain-box precondition (used internally while
// the box is being computed).
ChartPoint newton_invert(const FieldSolution& sol, const Vector& xq,
                         const ChartPoint& seed) {
  const ZetaGrid& g = sol.fan.grid;
  const Index n = sol.model.n;
  const Index d = g.dim();

  const double xi_lo = std::min(0.0, sol.fan.xi_max);
  const double xi_hi = std::max(0.0, sol.fan.xi_max);
  const double xi_slack = 2.0 * std::abs(sol.fan.xi_step());

  ChartPoint s = seed;
  Matrix jac(n, n);
  for (int iter = 0; iter < sol.chart.max_iter; ++iter) {
    const ZetaBlend b = zeta_blend(g, s.zeta);
    Vector x0 = Vector::Zero(n), X = Vector::Zero(n);
    Matrix dcols = Matrix::Zero(n, d);
    for (size_t c = 0; c < b.traj.size(); ++c) {
      const auto& t0 = sol.fan.trajectories[b.traj[c]][0];
      x0 += b.w[c] * t0.x;
      X += b.w[c] * t0.X;
      for (Index a = 0; a < d; ++a) dcols.col(a) += b.dw(a, c) * (t0.x + t0.X * s.xi);
    }
    jac.col(0) = X;
    if (d > 0) jac.rightCols(d) = dcols;
    const double det = jac.determinant();
    if (std::abs(det) < sol.chart.caustic_det_tol)
      throw CausticDetected("invert_chart",
                            "chart Jacobian determinant " + std::to_string(det) +
                                " below threshold");

    const Vector res = x0 + X * s.xi - xq;
    if (res.cwiseAbs().maxCoeff() <= sol.chart.tol) {
      if (s.xi < xi_lo - xi_slack || s.xi > xi_hi + xi_slack)
        throw OutOfDomain("invert_chart", "converged xi outside the fan span");
      for (Index a = 0; a < d; ++a) {
        const double slack = 1.5 * g.spacing(a);
        if (s.zeta[a] < g.box[a][0] - slack || s.zeta[a] > g.box[a][1] + slack)
          throw OutOfDomain("invert_chart", "converged zeta outside the fan box");
      }
      return s;
    }

    const Vector step = jac.partialPivLu().solve(res);
    s.xi -= step[0];
    for (Index a = 0; a < d; ++a) s.zeta[a] -= step[a + 1];

    // Divergence guard.
    const double xi_extent = xi_hi - xi_lo;
    if (s.xi < xi_lo - 0.5 * xi_extent - xi_slack || s.xi > xi_hi + 0.5 * xi_extent + xi_slack)
      throw OutOfDomain("invert_chart", "Newton iterate left the fan span");
    for (Index a = 0; a < d; ++a) {
      const double ext = g.box[a][1] - g.box[a][0];
      if (s.zeta[a] < g.box[a][0] - 0.5 * ext || s.zeta[a] > g.box[a][1] + 0.5 * ext)
        throw OutOfDomain("invert_chart", "Newton iterate left the fan box");
    }
  }
  throw NoConvergence("invert_chart", "no convergence after " +
                                          std::to_string(sol.chart.max_iter) +
                                          " iterations");
}

ChartPoint brute_force_seed(const FieldSolution& sol, const Vector& xq) {
  double best = std::numeric_limits<double>::infinity();
  ChartPoint seed;
  seed.zeta = Vector::Zero(sol.fan.grid.dim());
  for (size_t k = 0; k < sol.fan.trajectories.size(); ++k) {
    const Vector zeta = sol.fan.grid.node(static_cast<Index>(k));
    for (const auto& st : sol.fan.trajectories[k]) {
      const double dist = (st.x - xq).squaredNorm();
      if (dist < best) {
        best = dist;
        seed.xi = st.xi;
        seed.zeta = zeta;
      }
    }
  }
  return seed;
}

std::string cache_key(const Vector& xq) {
  std::string key(static_cast<size_t>(xq.size()) * sizeof(double), '\0');
  std::memcpy(key.data(), xq.data(), key.size());
  return key;
}

bool in_box(const std::vector<std::array<double, 2>>& box, const Vector& x) {
  for (Index i = 0; i < x.size(); ++i)
    if (x[i] < box[i][0] || x[i] > box[i][1]) return false;
  return true;
}

}  // namespace

// The domain box is the guaranteed-invertible region; queries outside it but
// inside the fan footprint still invert (the Newton range guards reject
// anything the chart does not cover).
ChartPoint invert_chart(const FieldSolution& sol, const Vector& x_query,
                        ChartScratch* scratch) {
  std::string key;
  if (scratch) {
    key = cache_key(x_query);
    auto hit = scratch->cache.find(key);
    if (hit != scratch->cache.end()) return hit->second;
    if (scratch->warm) {
      try {
        ChartPoint p = newton_invert(sol, x_query, *scratch->warm);
        scratch->warm = p;
        scratch->cache.emplace(std::move(key), p);
        return p;
      } catch (const NumericalError&) {
        // fall through to the brute-force seed
      }
    }
  }

  ChartPoint p = newton_invert(sol, x_query, brute_force_seed(sol, x_query));
  if (scratch) {
    scratch->warm = p;
    scratch->cache.emplace(cache_key(x_query), p);
  }
  return p;
}

namespace {

// Interpolated trajectory data at (xi, zeta): y, u_i and the corrected
// quadrature u_eff.
struct BlendedState {
  Vector y;
  Vector u_i;
  double ueff = 0.0;
  Vector X;
};

BlendedState blended_state(const FieldSolution& sol, const ChartPoint& s) {
  const ZetaBlend b = zeta_blend(sol.fan.grid, s.zeta);
  const XiLocate loc = locate_xi(sol.fan, s.xi);
  const HermiteBasis hb = hermite(loc.s);

  BlendedState out;
  out.y = Vector::Zero(sol.model.r);
  out.u_i = Vector::Zero(sol.model.r);
  out.X = Vector::Zero(sol.model.n);

  for (size_t c = 0; c < b.traj.size(); ++c) {
    const Index t = b.traj[c];
    const auto& traj = sol.fan.trajectories[t];
    const auto& nd = sol.nodes[t];
    const auto& s0 = traj[loc.k];
    const auto& s1 = traj[loc.k + 1];
    for (Index i = 0; i < sol.model.r; ++i) {
      out.y[i] += b.w[c] * hermite_val(hb, loc.h, s0.y[i], nd.dy[loc.k][i], s1.y[i],
                                       nd.dy[loc.k + 1][i]);
      out.u_i[i] += b.w[c] * hermite_val(hb, loc.h, s0.u_i[i], nd.du_i[loc.k][i],
                                         s1.u_i[i], nd.du_i[loc.k + 1][i]);
    }
    out.ueff += b.w[c] * hermite_val(hb, loc.h, nd.ueff[loc.k], nd.dueff[loc.k],
                                     nd.ueff[loc.k + 1], nd.dueff[loc.k + 1]);
    out.X += b.w[c] * traj[0].X;
  }
  return out;
}

std::vector<std::array<double, 2>> compute_domain_box(const FieldSolution& sol) {
  const ZetaGrid& g = sol.fan.grid;
  const Index n = sol.model.n;
  const Index d = g.dim();
  const double h = sol.fan.xi_step();

  // One-cell conservative restriction of the chart domain.
  const double xi_lo = std::min(0.0, sol.fan.xi_max) + std::abs(h);
  const double xi_hi = std::max(0.0, sol.fan.xi_max) - std::abs(h);
  std::vector<std::array<double, 2>> zbox(d);
  for (Index a = 0; a < d; ++a) {
    const double dz = g.spacing(a);
    zbox[a] = {g.box[a][0] + dz, g.box[a][1] - dz};
  }

  // Bounding box of the restricted fan nodes.
  std::vector<std::array<double, 2>> box(n);
  for (Index i = 0; i < n; ++i)
    box[i] = {std::numeric_limits<double>::infinity(),
              -std::numeric_limits<double>::infinity()};
  for (size_t k = 0; k < sol.fan.trajectories.size(); ++k) {
    const auto multi = g.unflatten(static_cast<Index>(k));
    bool ok = true;
    for (Index a = 0; a < d; ++a) {
      const double z = g.coord(a, multi[a]);
      if (z < zbox[a][0] - 1e-12 || z > zbox[a][1] + 1e-12) ok = false;
    }
    if (!ok) continue;
    for (const auto& st : sol.fan.trajectories[k]) {
      if (st.xi < xi_lo - 1e-12 || st.xi > xi_hi + 1e-12) continue;
      for (Index i = 0; i < n; ++i) {
        box[i][0] = std::min(box[i][0], st.x[i]);
        box[i][1] = std::max(box[i][1], st.x[i]);
      }
    }
  }

  // Shrink toward the center until a test lattice inverts everywhere inside
  // the restricted chart domain.
  const int K = 5;
  Index lattice = 1;
  for (Index i = 0; i < n; ++i) lattice *= K;

  auto acceptable = [&](const std::vector<std::array<double, 2>>& cand) {
    ChartScratch scratch;
    for (Index p = 0; p < lattice; ++p) {
      Vector x(n);
      Index rem = p;
      for (Index i = 0; i < n; ++i) {
        const Index j = rem % K;
        rem /= K;
        x[i] = cand[i][0] + (cand[i][1] - cand[i][0]) * j / (K - 1);
      }
      try {
        ChartPoint cp;
        bool done = false;
        if (scratch.warm) {
          try {
            cp = newton_invert(sol, x, *scratch.warm);
            done = true;
          } catch (const NumericalError&) {
          }
        }
        if (!done) cp = newton_invert(sol, x, brute_force_seed(sol, x));
        scratch.warm = cp;
        if (cp.xi < xi_lo || cp.xi > xi_hi) return false;
        for (Index a = 0; a < d; ++a)
          if (cp.zeta[a] < zbox[a][0] || cp.zeta[a] > zbox[a][1]) return false;
      } catch (const NumericalError&) {
        return false;
      }
    }
    return true;
  };

  std::vector<std::array<double, 2>> cand = box;
  for (int pass = 0; pass < 80; ++pass) {
    if (acceptable(cand)) return cand;
    for (Index i = 0; i < n; ++i) {
      const double c = 0.5 * (cand[i][0] + cand[i][1]);
      cand[i][0] = c + (cand[i][0] - c) * 0.93;
      cand[i][1] = c + (cand[i][1] - c) * 0.93;
    }
  }
  return cand;  // best effort; export flags any residual failures per point
}

}  // namespace

FieldSolution make_solution(const HamiltonianModel& model, CharacteristicFan fan,
                            const ChartOptions& chart, bool fd_u_rate) {
  FieldSolution sol;
  sol.model = model;
  sol.fan = std::move(fan);
  sol.chart = chart;

  sol.nodes.resize(sol.fan.trajectories.size());
  for (size_t t = 0; t < sol.fan.trajectories.size(); ++t) {
    const auto& traj = sol.fan.trajectories[t];
    auto& nd = sol.nodes[t];
    const Index N = static_cast<Index>(traj.size());
    nd.dy.resize(N);
    nd.du_i.resize(N);
    nd.ueff.resize(N);
    nd.dueff.resize(N);

    const auto& init = traj[0];
    nd.H0 = model.h(init.x, init.y, momentum_from_covelocity(init.X, init.u_i));

    for (Index k = 0; k < N; ++k) {
      const CharacteristicRates rate = char_rhs(model, traj[k]);
      nd.dy[k] = rate.dy;
      nd.du_i[k] = rate.du_i;
      nd.ueff[k] = traj[k].u - nd.H0 * traj[k].xi;
      nd.dueff[k] = rate.du - nd.H0;
    }

    if (fd_u_rate) {
      // Imported fans carry no u_mu; difference the stored quadrature instead.
      const double h = sol.fan.xi_step();
      for (Index k = 0; k < N; ++k) {
        if (k >= 2 && k + 2 < N) {
          nd.dueff[k] = (-nd.ueff[k + 2] + 8 * nd.ueff[k + 1] - 8 * nd.ueff[k - 1] +
                         nd.ueff[k - 2]) /
                        (12 * h);
        } else if (k >= 1 && k + 1 < N) {
          nd.dueff[k] = (nd.ueff[k + 1] - nd.ueff[k - 1]) / (2 * h);
        } else if (k == 0 && N > 2) {
          nd.dueff[k] = (-3 * nd.ueff[0] + 4 * nd.ueff[1] - nd.ueff[2]) / (2 * h);
        } else if (k + 1 == N && N > 2) {
          nd.dueff[k] = (3 * nd.ueff[k] - 4 * nd.ueff[k - 1] + nd.ueff[k - 2]) / (2 * h);
        }
      }
    }
  }

  sol.domain_box = compute_domain_box(sol);
  return sol;
}

FieldValue field_at(const FieldSolution& sol, const Vector& x_query,
                    ChartScratch* scratch) {
  const ChartPoint s = invert_chart(sol, x_query, scratch);
  const BlendedState b = blended_state(sol, s);
  return {b.y, momentum_from_covelocity(b.X, b.u_i)};
}

Vector s_at(const FieldSolution& sol, const Vector& x_query, ChartScratch* scratch) {
  const ChartPoint s = invert_chart(sol, x_query, scratch);
  const BlendedState b = blended_state(sol, s);
  return b.ueff * b.X;
}

void export_grid(const FieldSolution& sol, const std::vector<int>& resolution,
                 std::ostream& os) {
  const Index n = sol.model.n;
  const Index r = sol.model.r;
  if (static_cast<Index>(resolution.size()) != n)
    throw ConfigError("export_grid: resolution needs one entry per base axis");
  for (int res : resolution)
    if (res < 2) throw ConfigError("export_grid: resolution must be >= 2 per axis");

  for (Index i = 0; i < n; ++i) os << (i ? "," : "") << "x" << (i + 1);
  for (Index i = 0; i < r; ++i) os << ",y" << (i + 1);
  for (Index i = 0; i < r; ++i)
    for (Index mu = 0; mu < n; ++mu) os << ",p" << (mu + 1) << "_" << (i + 1);
  for (Index i = 0; i < n; ++i) os << ",S" << (i + 1);
  os << ",chart_ok\n";

  Index total = 1;
  for (int res : resolution) total *= res;

  ChartScratch scratch;
  for (Index flat = 0; flat < total; ++flat) {
    Vector x(n);
    Index rem = flat;
    for (Index i = n - 1; i >= 0; --i) {
      const Index j = rem % resolution[i];
      rem /= resolution[i];
      x[i] = sol.domain_box[i][0] +
             (sol.domain_box[i][1] - sol.domain_box[i][0]) * j / (resolution[i] - 1);
    }

    bool ok = true;
    Vector y, S;
    Matrix p;
    try {
      if (!in_box(sol.domain_box, x))
        throw OutOfDomain("export_grid", "grid point outside the domain box");
      const ChartPoint cp = invert_chart(sol, x, &scratch);
      const BlendedState b = blended_state(sol, cp);
      y = b.y;
      p = momentum_from_covelocity(b.X, b.u_i);
      S = b.ueff * b.X;
    } catch (const NumericalError&) {
      ok = false;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      y = Vector::Constant(r, nan);
      p = Matrix::Constant(n, r, nan);
      S = Vector::Constant(n, nan);
    }

    for (Index i = 0; i < n; ++i) os << (i ? "," : "") << fmt17(x[i]);
    for (Index i = 0; i < r; ++i) os << ',' << fmt17(y[i]);
    for (Index i = 0; i < r; ++i)
      for (Index mu = 0; mu < n; ++mu) os << ',' << fmt17(p(mu, i));
    for (Index i = 0; i < n; ++i) os << ',' << fmt17(S[i]);
    os << ',' << (ok ? 1 : 0) << "\n";
  }
}

nlohmann::ordered_json solution_sidecar(const FieldSolution& sol,
                                        const std::vector<int>& resolution) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json box = nlohmann::ordered_json::array();
  for (const auto& iv : sol.domain_box) box.push_back({iv[0], iv[1]});
  j["domain_box"] = box;
  j["grid_resolution"] = resolution;
  j["xi_span"] = {0.0, sol.fan.xi_max};
  j["xi_steps"] = sol.fan.steps;
  j["zeta_axes"] = sol.fan.grid.axes;
  nlohmann::ordered_json zbox = nlohmann::ordered_json::array();
  for (const auto& iv : sol.fan.grid.box) zbox.push_back({iv[0], iv[1]});
  j["zeta_box"] = zbox;
  j["conventions"]["u0"] = 0.0;
  j["conventions"]["u_mu0"] = 0.0;
  j["conventions"]["s_quadrature"] = "u - H0*xi";
  j["chart_tol"] = sol.chart.tol;
  return j;
}

}  // namespace hjfield

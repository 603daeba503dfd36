#include "hjfield/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hjfield/errors.hpp"

namespace hjfield {

namespace {

struct StatAccum {
  double max_abs = 0.0;
  double sumsq = 0.0;
  Index count = 0;

  void add(double v) {
    max_abs = std::max(max_abs, std::abs(v));
    sumsq += v * v;
    ++count;
  }
  ResidualStat stat() const {
    ResidualStat s;
    s.max_abs = max_abs;
    s.rms = count ? std::sqrt(sumsq / count) : 0.0;
    return s;
  }
};

}  // namespace

std::map<std::string, bool> ResidualReport::verdicts() const {
  std::map<std::string, bool> v;
  auto check = [&](const std::string& name, double value) {
    auto it = tolerances.find(name);
    if (it != tolerances.end()) v[name] = value <= it->second;
  };
  check("hj", hj.max_abs);
  check("hamilton_first", hamilton_first.max_abs);
  check("hamilton_second", hamilton_second.max_abs);
  if (euler_lagrange) check("euler_lagrange", euler_lagrange->max_abs);
  if (closed_form_max) check("closed_form", *closed_form_max);
  return v;
}

bool ResidualReport::pass() const {
  for (const auto& [name, ok] : verdicts())
    if (!ok) return false;
  return true;
}

std::vector<Vector> residual_grid(const FieldSolution& sol,
                                  const std::vector<int>& resolution, double margin) {
  const Index n = static_cast<Index>(sol.domain_box.size());
  if (static_cast<Index>(resolution.size()) != n)
    throw ConfigError("residual_grid: resolution needs one entry per base axis");

  Index total = 1;
  for (int res : resolution) {
    if (res < 2) throw ConfigError("residual_grid: resolution must be >= 2 per axis");
    total *= res;
  }

  std::vector<Vector> pts;
  pts.reserve(total);
  for (Index flat = 0; flat < total; ++flat) {
    Vector x(n);
    Index rem = flat;
    for (Index i = n - 1; i >= 0; --i) {
      const Index j = rem % resolution[i];
      rem /= resolution[i];
      const double lo = sol.domain_box[i][0] + margin;
      const double hi = sol.domain_box[i][1] - margin;
      if (hi <= lo) throw ConfigError("residual_grid: margin exceeds the domain box");
      x[i] = lo + (hi - lo) * j / (resolution[i] - 1);
    }
    pts.push_back(std::move(x));
  }
  return pts;
}

ResidualStat hj_residual(const HamiltonianModel& model, const FieldSolution& sol,
                         const std::vector<Vector>& grid, double fd_step,
                         std::ostream* per_point_csv) {
  const Index n = model.n;
  StatAccum acc;
  ChartScratch scratch;

  if (per_point_csv) {
    for (Index i = 0; i < n; ++i) *per_point_csv << (i ? "," : "") << "x" << (i + 1);
    *per_point_csv << ",hj_residual\n";
  }

  for (const Vector& x : grid) {
    const FieldValue center = field_at(sol, x, &scratch);
    double divergence = 0.0;  // d/dx^alpha of S^alpha along the graph
    double graph_term = 0.0;  // p^alpha_i dy^i/dx^alpha
    for (Index a = 0; a < n; ++a) {
      Vector xp = x, xm = x;
      xp[a] += fd_step;
      xm[a] -= fd_step;
      const Vector Sp = s_at(sol, xp, &scratch);
      const Vector Sm = s_at(sol, xm, &scratch);
      divergence += (Sp[a] - Sm[a]) / (2.0 * fd_step);
      const FieldValue fp = field_at(sol, xp, &scratch);
      const FieldValue fm = field_at(sol, xm, &scratch);
      for (Index i = 0; i < model.r; ++i)
        graph_term += center.p(a, i) * (fp.y[i] - fm.y[i]) / (2.0 * fd_step);
    }
    const double res =
        divergence - graph_term + model.h(x, center.y, center.p);
    acc.add(res);
    if (per_point_csv) {
      for (Index i = 0; i < n; ++i) *per_point_csv << (i ? "," : "") << fmt17(x[i]);
      *per_point_csv << ',' << fmt17(res) << "\n";
    }
  }
  return acc.stat();
}

std::pair<ResidualStat, ResidualStat> hamilton_residual(const HamiltonianModel& model,
                                                        const FieldSolution& sol,
                                                        const std::vector<Vector>& grid,
                                                        double fd_step,
                                                        std::ostream* per_point_csv) {
  const Index n = model.n;
  const Index r = model.r;
  StatAccum first, second;
  ChartScratch scratch;

  if (per_point_csv) {
    for (Index i = 0; i < n; ++i) *per_point_csv << (i ? "," : "") << "x" << (i + 1);
    *per_point_csv << ",hamilton_first_max,hamilton_second_max\n";
  }

  for (const Vector& x : grid) {
    const FieldValue center = field_at(sol, x, &scratch);
    const Matrix dhdp = model.dh_dp(x, center.y, center.p);
    const Vector dhdy = model.dh_dy(x, center.y, center.p);

    Vector divp = Vector::Zero(r);
    double first_max = 0.0;
    for (Index a = 0; a < n; ++a) {
      Vector xp = x, xm = x;
      xp[a] += fd_step;
      xm[a] -= fd_step;
      const FieldValue fp = field_at(sol, xp, &scratch);
      const FieldValue fm = field_at(sol, xm, &scratch);
      for (Index i = 0; i < r; ++i) {
        const double dy = (fp.y[i] - fm.y[i]) / (2.0 * fd_step);
        const double res = dy - dhdp(a, i);
        first.add(res);
        first_max = std::max(first_max, std::abs(res));
        divp[i] += (fp.p(a, i) - fm.p(a, i)) / (2.0 * fd_step);
      }
    }
    double second_max = 0.0;
    for (Index i = 0; i < r; ++i) {
      const double res = divp[i] + dhdy[i];
      second.add(res);
      second_max = std::max(second_max, std::abs(res));
    }
    if (per_point_csv) {
      for (Index i = 0; i < n; ++i) *per_point_csv << (i ? "," : "") << fmt17(x[i]);
      *per_point_csv << ',' << fmt17(first_max) << ',' << fmt17(second_max) << "\n";
    }
  }
  return {first.stat(), second.stat()};
}

ResidualStat euler_lagrange_residual(const LagrangianModel& lmodel,
                                     const FieldSolution& sol,
                                     const std::vector<Vector>& grid, double fd_step) {
  const Index n = lmodel.n;
  const Index r = lmodel.r;
  StatAccum acc;
  ChartScratch scratch;

  // Field gradient by central differences of the reconstructed y.
  auto gradient = [&](const Vector& at) {
    Matrix v(n, r);
    for (Index a = 0; a < n; ++a) {
      Vector xp = at, xm = at;
      xp[a] += fd_step;
      xm[a] -= fd_step;
      const Vector yp = field_at(sol, xp, &scratch).y;
      const Vector ym = field_at(sol, xm, &scratch).y;
      v.row(a) = ((yp - ym) / (2.0 * fd_step)).transpose();
    }
    return v;
  };

  for (const Vector& x : grid) {
    const Vector y = field_at(sol, x, &scratch).y;
    const Matrix v = gradient(x);
    const Vector dldy = lmodel.dl_dy(x, y, v);

    Vector divmom = Vector::Zero(r);  // d/dx^mu of dL/dv^i_mu along the solution
    for (Index a = 0; a < n; ++a) {
      Vector xp = x, xm = x;
      xp[a] += fd_step;
      xm[a] -= fd_step;
      const Matrix mp = lmodel.dl_dv(xp, field_at(sol, xp, &scratch).y, gradient(xp));
      const Matrix mm = lmodel.dl_dv(xm, field_at(sol, xm, &scratch).y, gradient(xm));
      divmom += ((mp.row(a) - mm.row(a)) / (2.0 * fd_step)).transpose();
    }
    for (Index i = 0; i < r; ++i) acc.add(divmom[i] - dldy[i]);
  }
  return acc.stat();
}

double closed_form_compare(const FieldSolution& sol, const ClosedFormParams& params) {
  const ZetaGrid& g = sol.fan.grid;
  if (g.dim() != 1 || sol.model.n != 2 || sol.model.r != 1)
    throw ConfigError("closed_form_compare: reference requires n = 2, r = 1");

  const double omega =
      params.mu * std::exp(params.c) / std::sqrt(1.0 + std::exp(2.0 * params.c));

  // Independent high-resolution RK4 of a' = w b, b' = -w a on the zeta box.
  const double zlo = g.box[0][0];
  const double zhi = g.box[0][1];
  const Index nfine = 10 * (g.axes[0] - 1);
  const double hz = (zhi - zlo) / nfine;
  std::vector<double> a(nfine + 1), b(nfine + 1);
  a[0] = params.A;
  b[0] = params.B;
  for (Index k = 0; k < nfine; ++k) {
    auto fa = [&](double bb) { return omega * bb; };
    auto fb = [&](double aa) { return -omega * aa; };
    const double k1a = fa(b[k]), k1b = fb(a[k]);
    const double k2a = fa(b[k] + 0.5 * hz * k1b), k2b = fb(a[k] + 0.5 * hz * k1a);
    const double k3a = fa(b[k] + 0.5 * hz * k2b), k3b = fb(a[k] + 0.5 * hz * k2a);
    const double k4a = fa(b[k] + hz * k3b), k4b = fb(a[k] + hz * k3a);
    a[k + 1] = a[k] + (hz / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a);
    b[k + 1] = b[k] + (hz / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b);
  }

  // Compare on oracle nodes crossed with xi samples one cell inside the span.
  const Index nxi = 25;
  const double xi0 = std::abs(sol.fan.xi_step());
  const double xi1 = std::abs(sol.fan.xi_max) - xi0;
  const Index zstride = std::max<Index>(1, nfine / 200);

  ChartScratch scratch;
  double worst = 0.0;
  Vector zeta(1);
  for (Index k = 0; k <= nfine; k += zstride) {
    const double z = zlo + k * hz;
    zeta[0] = z;
    const double alpha = params.alpha ? params.alpha(zeta) : 1.0;
    for (Index j = 0; j < nxi; ++j) {
      const double xi = (xi0 + (xi1 - xi0) * j / (nxi - 1)) *
                        (sol.fan.xi_max < 0 ? -1.0 : 1.0);
      const Vector x = forward_map(sol, xi, zeta);
      bool inside = true;
      for (Index i = 0; i < 2; ++i)
        if (x[i] < sol.domain_box[i][0] || x[i] > sol.domain_box[i][1]) inside = false;
      if (!inside) continue;

      const double phase = params.mu * alpha * xi;
      const double y_ref = a[k] * std::cos(phase) + b[k] * std::sin(phase);
      try {
        const FieldValue f = field_at(sol, x, &scratch);
        worst = std::max(worst, std::abs(f.y[0] - y_ref));
      } catch (const OutOfDomain&) {
        continue;
      }
    }
  }
  return worst;
}

nlohmann::ordered_json report_json(const ResidualReport& report) {
  nlohmann::ordered_json j;
  auto stat = [](const ResidualStat& s) {
    nlohmann::ordered_json o;
    o["max"] = s.max_abs;
    o["rms"] = s.rms;
    return o;
  };
  j["hj"] = stat(report.hj);
  j["hamilton_first"] = stat(report.hamilton_first);
  j["hamilton_second"] = stat(report.hamilton_second);
  if (report.euler_lagrange) j["euler_lagrange"] = stat(*report.euler_lagrange);
  if (report.closed_form_max) j["closed_form"]["max"] = *report.closed_form_max;
  j["grid"]["resolution"] = report.grid_resolution;
  j["grid"]["fd_step"] = report.fd_step;
  nlohmann::ordered_json tols;
  for (const auto& [name, tol] : report.tolerances) tols[name] = tol;
  j["tolerances"] = tols;
  nlohmann::ordered_json verdicts;
  for (const auto& [name, ok] : report.verdicts()) verdicts[name] = ok;
  j["verdicts"] = verdicts;
  j["pass"] = report.pass();
  return j;
}

}  // namespace hjfield

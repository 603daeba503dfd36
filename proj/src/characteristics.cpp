#include "hjfield/characteristics.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "hjfield/errors.hpp"

namespace hjfield {

CharacteristicRates char_rhs(const HamiltonianModel& model, const CharacteristicState& s) {
  const Matrix p = momentum_from_covelocity(s.X, s.u_i);
  CharacteristicRates d;
  d.dx = s.X;
  const Matrix dhdp = model.dh_dp(s.x, s.y, p);
  d.dy = dhdp.transpose() * s.X;
  d.du_i = -model.dh_dy(s.x, s.y, p);
  d.du_mu = -model.dh_dx(s.x, s.y, p);
  d.du = s.u_mu.dot(s.X) + s.u_i.dot(d.dy);
  return d;
}

namespace {

CharacteristicState axpy(const CharacteristicState& s, double a,
                         const CharacteristicRates& d) {
  CharacteristicState out = s;
  out.xi = s.xi + a;
  out.x = s.x + a * d.dx;
  out.y = s.y + a * d.dy;
  out.u_i = s.u_i + a * d.du_i;
  out.u_mu = s.u_mu + a * d.du_mu;
  out.u = s.u + a * d.du;
  return out;
}

bool state_finite(const CharacteristicState& s) {
  return std::isfinite(s.u) && all_finite(s.x) && all_finite(s.y) &&
         all_finite(s.u_i) && all_finite(s.u_mu);
}

}  // namespace

std::vector<CharacteristicState> trace_characteristic(const HamiltonianModel& model,
                                                      const CharacteristicState& init,
                                                      double Xi, int steps) {
  if (steps < 1) throw ConfigError("trace_characteristic: steps must be >= 1");
  const double h = Xi / steps;

  std::vector<CharacteristicState> out;
  out.reserve(steps + 1);
  out.push_back(init);
  out.front().xi = 0.0;

  CharacteristicState s = out.front();
  for (int k = 0; k < steps; ++k) {
    const CharacteristicRates k1 = char_rhs(model, s);
    const CharacteristicRates k2 = char_rhs(model, axpy(s, 0.5 * h, k1));
    const CharacteristicRates k3 = char_rhs(model, axpy(s, 0.5 * h, k2));
    const CharacteristicRates k4 = char_rhs(model, axpy(s, h, k3));

    CharacteristicState next = s;
    next.xi = (k + 1) * h;
    next.x = s.x + (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    next.y = s.y + (h / 6.0) * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
    next.u_i = s.u_i + (h / 6.0) * (k1.du_i + 2.0 * k2.du_i + 2.0 * k3.du_i + k4.du_i);
    next.u_mu = s.u_mu + (h / 6.0) * (k1.du_mu + 2.0 * k2.du_mu + 2.0 * k3.du_mu + k4.du_mu);
    next.u = s.u + (h / 6.0) * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);

    if (!state_finite(next))
      throw NonFinite("trace_characteristic",
                      "state became non-finite at xi = " + std::to_string(next.xi));
    out.push_back(next);
    s = std::move(next);
  }
  return out;
}

CharacteristicFan trace_fan(const HamiltonianModel& model,
                            const std::vector<BoundarySample>& samples,
                            const ZetaGrid& grid,
                            const std::function<Vector(const Vector&)>& X_of_zeta,
                            const std::function<Vector(const Vector&)>& transverse,
                            double Xi, int steps, double covelocity_tol, int threads) {
  CharacteristicFan fan;
  fan.samples = samples;
  fan.xi_max = Xi;
  fan.steps = steps;
  fan.grid = grid;
  fan.trajectories.resize(samples.size());

  auto trace_one = [&](size_t k) {
    const BoundarySample& s = samples[k];
    CharacteristicState init;
    init.xi = 0.0;
    init.x = s.x0;
    init.y = s.y0;
    init.X = X_of_zeta(s.zeta);

    if (s.tangent_basis.rows() > 0) {
      Matrix frame(model.n, model.n);
      frame.row(0) = init.X.transpose();
      frame.bottomRows(model.n - 1) = s.tangent_basis;
      if (std::abs(frame.determinant()) <= 1e-12)
        throw SingularChart("trace_fan",
                            "transport field tangent to the boundary surface at a sample");
    }

    init.u_i = initial_covelocity(model, s, init.X, transverse(s.zeta), covelocity_tol);
    init.u_mu = Vector::Zero(model.n);
    init.u = 0.0;
    fan.trajectories[k] = trace_characteristic(model, init, Xi, steps);
  };

  if (threads <= 1 || samples.size() < 2) {
    for (size_t k = 0; k < samples.size(); ++k) trace_one(k);
  } else {
    const size_t nw = std::min<size_t>(threads, samples.size());
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nw);
    for (size_t w = 0; w < nw; ++w)
      pool.emplace_back([&, w] {
        try {
          for (size_t k = w; k < samples.size(); k += nw) trace_one(k);
        } catch (...) {
          errs[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }
  return fan;
}

void write_fan_csv(const CharacteristicFan& fan, std::ostream& os) {
  const Index n = fan.trajectories.empty() ? 0 : fan.trajectories[0][0].x.size();
  const Index r = fan.trajectories.empty() ? 0 : fan.trajectories[0][0].y.size();

  os << "zeta_index,xi";
  for (Index i = 0; i < n; ++i) os << ",x" << (i + 1);
  for (Index i = 0; i < r; ++i) os << ",y" << (i + 1);
  for (Index i = 0; i < r; ++i) os << ",u_" << (i + 1);
  os << ",u";
  for (Index i = 0; i < n; ++i) os << ",X" << (i + 1);
  os << "\n";

  for (size_t k = 0; k < fan.trajectories.size(); ++k)
    for (const auto& s : fan.trajectories[k]) {
      os << k << ',' << fmt17(s.xi);
      for (Index i = 0; i < n; ++i) os << ',' << fmt17(s.x[i]);
      for (Index i = 0; i < r; ++i) os << ',' << fmt17(s.y[i]);
      for (Index i = 0; i < r; ++i) os << ',' << fmt17(s.u_i[i]);
      os << ',' << fmt17(s.u);
      for (Index i = 0; i < n; ++i) os << ',' << fmt17(s.X[i]);
      os << "\n";
    }
}

CharacteristicFan read_fan_csv(std::istream& is, const ZetaGrid& grid, Index n, Index r) {
  CharacteristicFan fan;
  fan.grid = grid;
  fan.trajectories.resize(grid.count());

  std::string line;
  if (!std::getline(is, line))
    throw MissingArtifact("read_fan_csv", "empty fan CSV");

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    auto next = [&]() -> double {
      if (!std::getline(ss, cell, ','))
        throw MissingArtifact("read_fan_csv", "truncated fan CSV row");
      return std::stod(cell);
    };
    const auto k = static_cast<size_t>(next());
    if (k >= fan.trajectories.size())
      throw MissingArtifact("read_fan_csv", "zeta index out of range in fan CSV");

    CharacteristicState s;
    s.xi = next();
    s.x.resize(n);
    for (Index i = 0; i < n; ++i) s.x[i] = next();
    s.y.resize(r);
    for (Index i = 0; i < r; ++i) s.y[i] = next();
    s.u_i.resize(r);
    for (Index i = 0; i < r; ++i) s.u_i[i] = next();
    s.u = next();
    s.X.resize(n);
    for (Index i = 0; i < n; ++i) s.X[i] = next();
    s.u_mu = Vector::Zero(n);
    fan.trajectories[k].push_back(std::move(s));
  }

  for (auto& traj : fan.trajectories)
    if (traj.empty())
      throw MissingArtifact("read_fan_csv", "fan CSV is missing trajectories");

  fan.steps = static_cast<int>(fan.trajectories[0].size()) - 1;
  fan.xi_max = fan.trajectories[0].back().xi;

  // Rebuild the boundary samples from the xi = 0 states (tangent basis by
  // differencing the stored x0 across trajectories where possible).
  fan.samples.resize(fan.trajectories.size());
  for (size_t k = 0; k < fan.trajectories.size(); ++k) {
    BoundarySample b;
    b.zeta = grid.node(static_cast<Index>(k));
    b.x0 = fan.trajectories[k][0].x;
    b.y0 = fan.trajectories[k][0].y;
    b.ydot0 = Vector::Zero(r);
    b.tangent_basis = Matrix::Zero(grid.dim(), n);
    fan.samples[k] = std::move(b);
  }
  return fan;
}

}  // namespace hjfield

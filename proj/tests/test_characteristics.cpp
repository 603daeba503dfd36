#include <doctest.h>

#include "hjfield/characteristics.hpp"
#include "hjfield/errors.hpp"
#include "oracles.hpp"

using namespace hjfield;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

CharacteristicState diagonal_init(double y0, double u0) {
  CharacteristicState s;
  s.x = Vector::Zero(2);
  s.y = Vector::Constant(1, y0);
  s.u_i = Vector::Constant(1, u0);
  s.u_mu = Vector::Zero(2);
  s.u = 0.0;
  s.X = Vector(2);
  s.X << kInvSqrt2, kInvSqrt2;
  return s;
}

// Fan over the example geometry with oracle-generated data.
CharacteristicFan example_fan(const HamiltonianModel& model, int zeta_samples,
                              int steps, double Xi,
                              std::function<Vector(const Vector&)> X_of_zeta) {
  auto family = oracle::paper_family_from_oracle(1.0, 0.0, 0.0, 1.0);
  const BoundarySpec spec = family.make_spec(family.params);
  const std::vector<int> grid_axes{zeta_samples};
  const ZetaGrid grid{grid_axes, spec.zeta_box};
  const auto samples = sample_boundary(spec, grid_axes);
  return trace_fan(model, samples, grid, X_of_zeta, spec.transverse, Xi, steps);
}

Vector diagonal_X(const Vector&) {
  Vector X(2);
  X << kInvSqrt2, kInvSqrt2;
  return X;
}

}  // namespace

TEST_CASE("characteristic RHS on the free scalar") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});

  CharacteristicState s = diagonal_init(1.0, 0.0);
  CharacteristicRates d = char_rhs(model, s);
  CHECK(d.dy[0] == doctest::Approx(0.0));
  CHECK(d.du_i[0] == doctest::Approx(-1.0));  // -mu^2 y
  CHECK(d.du_mu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.dx[0] == doctest::Approx(kInvSqrt2));

  // null characteristic: everything but dx vanishes
  s = diagonal_init(0.0, 0.0);
  d = char_rhs(model, s);
  CHECK(d.dy[0] == 0.0);
  CHECK(d.du_i[0] == 0.0);
  CHECK(d.du == 0.0);
  CHECK(d.dx == s.X);

  // dy/dxi = (X . X) u1 for the quadratic Hamiltonian
  s = diagonal_init(0.3, 0.8);
  d = char_rhs(model, s);
  CHECK(d.dy[0] == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("single characteristic against the closed form") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});

  SUBCASE("y(xi) = cos(xi) for unit-norm X, y0 = 1, u0 = 0") {
    const auto traj =
        trace_characteristic(model, diagonal_init(1.0, 0.0), M_PI, 10000);
    REQUIRE(traj.size() == 10001);
    CHECK(std::abs(traj.back().y[0] - (-1.0)) < 1e-8);
    for (size_t k = 0; k < traj.size(); k += 997) {
      const double xi = traj[k].xi;
      CHECK(std::abs(traj[k].y[0] - std::cos(xi)) < 1e-10);
      CHECK(std::abs(traj[k].u_i[0] - (-std::sin(xi))) < 1e-10);
    }
  }

  SUBCASE("x flow is exact") {
    auto init = diagonal_init(0.5, 0.2);
    const auto traj = trace_characteristic(model, init, std::sqrt(2.0), 1000);
    const Vector xend = traj.back().x;
    CHECK(std::abs(xend[0] - 1.0) < 1e-12);
    CHECK(std::abs(xend[1] - 1.0) < 1e-12);
    for (size_t k = 0; k < traj.size(); k += 137) {
      const Vector expected = init.x + traj[k].xi * init.X;
      CHECK((traj[k].x - expected).cwiseAbs().maxCoeff() < 1e-11);
      CHECK(traj[k].X == init.X);  // carried exactly
    }
  }

  SUBCASE("zero data stays zero") {
    const auto traj = trace_characteristic(model, diagonal_init(0.0, 0.0), 2.0, 100);
    for (const auto& s : traj) {
      CHECK(s.y[0] == 0.0);
      CHECK(s.u_i[0] == 0.0);
      CHECK(s.u == 0.0);
    }
  }

  SUBCASE("two-sided tracing with negative Xi") {
    const auto fwd = trace_characteristic(model, diagonal_init(1.0, 0.0), 1.0, 1000);
    const auto bwd = trace_characteristic(model, diagonal_init(1.0, 0.0), -1.0, 1000);
    CHECK(std::abs(fwd.back().y[0] - std::cos(1.0)) < 1e-10);
    CHECK(std::abs(bwd.back().y[0] - std::cos(-1.0)) < 1e-10);
    CHECK(std::abs(bwd.back().x[0] - (-kInvSqrt2)) < 1e-12);
  }

  SUBCASE("non-finite states are detected") {
    HamiltonianModel blowup = model;
    blowup.dh_dy = [](const Vector&, const Vector& y, const Matrix&) {
      return Vector(Vector::Constant(1, -1e308 * (1.0 + y.squaredNorm())));
    };
    CHECK_THROWS_AS(trace_characteristic(blowup, diagonal_init(1.0, 1.0), 10.0, 20),
                    NonFinite);
  }
}

TEST_CASE("fan tracing over the example boundary") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});
  const double Xi = M_PI;

  const auto fan = example_fan(model, 11, 10000, Xi, diagonal_X);
  REQUIRE(fan.trajectories.size() == 11);

  SUBCASE("cardinality and X constancy") {
    for (const auto& traj : fan.trajectories) {
      CHECK(traj.size() == 10001);
      for (size_t k = 0; k < traj.size(); k += 503)
        CHECK((traj[k].X - traj[0].X).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("Hamiltonian conservation along every trajectory") {
    double worst = 0.0;
    for (const auto& traj : fan.trajectories) {
      const auto& s0 = traj[0];
      const double H0 = model.h(s0.x, s0.y, momentum_from_covelocity(s0.X, s0.u_i));
      for (const auto& s : traj) {
        const double H = model.h(s.x, s.y, momentum_from_covelocity(s.X, s.u_i));
        worst = std::max(worst, std::abs(H - H0));
      }
    }
    CHECK(worst < 1e-8);
  }

  SUBCASE("u_mu stays exactly zero for x-independent Hamiltonians") {
    double worst = 0.0;
    for (const auto& traj : fan.trajectories)
      for (const auto& s : traj) worst = std::max(worst, s.u_mu.cwiseAbs().maxCoeff());
    CHECK(worst == 0.0);
    CHECK(worst < 1e-14);
  }

  SUBCASE("threaded tracing is bit-identical to sequential") {
    auto family = oracle::paper_family_from_oracle(1.0, 0.0, 0.0, 1.0);
    const BoundarySpec spec = family.make_spec(family.params);
    const std::vector<int> grid_axes{11};
    const ZetaGrid grid{grid_axes, spec.zeta_box};
    const auto samples = sample_boundary(spec, grid_axes);
    const auto fan2 = trace_fan(model, samples, grid, diagonal_X, spec.transverse, Xi,
                                10000, 1e-12, 2);
    for (size_t k = 0; k < fan.trajectories.size(); ++k)
      for (size_t j = 0; j < fan.trajectories[k].size(); j += 1009) {
        CHECK(fan.trajectories[k][j].y[0] == fan2.trajectories[k][j].y[0]);
        CHECK(fan.trajectories[k][j].u == fan2.trajectories[k][j].u);
      }
  }
}

TEST_CASE("transport fields tangent to the boundary surface are rejected") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});
  auto family = oracle::paper_family_from_oracle(1.0, 0.0, 0.0, 1.0);
  const BoundarySpec spec = family.make_spec(family.params);
  const std::vector<int> axes{5};
  const ZetaGrid grid{axes, spec.zeta_box};
  const auto samples = sample_boundary(spec, axes);
  auto tangent = [](const Vector&) {
    Vector X(2);
    X << 0.0, 1.0;  // lies in the surface tangent span
    return X;
  };
  CHECK_THROWS_AS(
      trace_fan(model, samples, grid, tangent, spec.transverse, 1.0, 50),
      SingularChart);
}

TEST_CASE("the xi-direction transport identity holds to integrator order") {
  // 5-point differences of the stored y along xi match X^mu dH/dp^mu_i.
  const HamiltonianModel model = make_free_scalar(2, {1.0});
  const auto fan = example_fan(model, 5, 2000, 2.2214414690791831, diagonal_X);
  const double h = fan.xi_step();
  double worst = 0.0;
  for (const auto& traj : fan.trajectories) {
    for (size_t k = 2; k + 2 < traj.size(); k += 61) {
      const double fd = (-traj[k + 2].y[0] + 8 * traj[k + 1].y[0] -
                         8 * traj[k - 1].y[0] + traj[k - 2].y[0]) /
                        (12 * h);
      const auto& s = traj[k];
      const double rhs = model.dh_dp(s.x, s.y, momentum_from_covelocity(s.X, s.u_i))
                             .col(0)
                             .dot(s.X);
      worst = std::max(worst, std::abs(fd - rhs));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("RK4 order: halving the step shrinks the closed-form error ~16x") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});
  const double Xi = 2.2214414690791831;

  auto max_err = [&](int steps) {
    const auto traj = trace_characteristic(model, diagonal_init(1.0, 0.0), Xi, steps);
    double worst = 0.0;
    for (const auto& s : traj)
      worst = std::max(worst, std::abs(s.y[0] - std::cos(s.xi)));
    return worst;
  };

  const double coarse = max_err(25);
  const double fine = max_err(50);
  const double ratio = coarse / fine;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("fan CSV roundtrip") {
  const HamiltonianModel model = make_free_scalar(2, {1.0});
  const auto fan = example_fan(model, 5, 50, 1.0, diagonal_X);

  std::stringstream ss;
  write_fan_csv(fan, ss);
  const auto back = read_fan_csv(ss, fan.grid, 2, 1);

  REQUIRE(back.trajectories.size() == fan.trajectories.size());
  CHECK(back.steps == fan.steps);
  CHECK(back.xi_max == doctest::Approx(fan.xi_max));
  for (size_t k = 0; k < fan.trajectories.size(); ++k)
    for (size_t j = 0; j < fan.trajectories[k].size(); ++j) {
      CHECK(back.trajectories[k][j].y[0] == fan.trajectories[k][j].y[0]);
      CHECK(back.trajectories[k][j].u == fan.trajectories[k][j].u);
      CHECK(back.trajectories[k][j].x[1] == fan.trajectories[k][j].x[1]);
    }
}

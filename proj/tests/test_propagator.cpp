#include "catch_amalgamated.hpp"

#include <cmath>

#include "deortho/efactor.hpp"
#include "deortho/propagator.hpp"

using namespace deortho;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const GridSpec small_grid{401, 0.05};

SpinorField single_site(cplx up, cplx down) {
  SpinorField f = SpinorField::zeros(GridSpec{1, 1.0});
  f.at(0, 0) = up;
  f.at(0, 1) = down;
  return f;
}

} // namespace

TEST_CASE("zero Hamiltonian is the identity", "[propagator]") {
  ModelParams p;
  p.g0 = 0.0;
  p.gx = 0.0;
  p.K = 0.0;
  p.JL = 0.0;
  const GridSpec g{21, 0.5};
  SpinorField f = SpinorField::zeros(g);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values[i] = cplx(std::cos(1.3 * i), std::sin(0.4 * i));
  const Hamiltonian h = assemble_hamiltonian(p, g);
  for (Scheme s : {Scheme::lanczos, Scheme::crank_nicolson}) {
    const SpinorField out = propagate(f, h, 3.7, s);
    CHECK((out.values - f.values).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("single site phase", "[propagator]") {
  ModelParams p;
  p.gx = 0.0;
  p.JL = 0.0;
  const Hamiltonian h = assemble_hamiltonian(p, GridSpec{1, 1.0});
  for (double t : {0.3, 2.0, 11.0}) {
    const SpinorField out = propagate(single_site(1.0, 0.0), h, t);
    CHECK(std::abs(out.at(0, 0) - std::exp(cplx(0.0, -0.5 * t))) <= 1e-10);
    CHECK(std::abs(out.at(0, 1)) <= 1e-14);
  }
}

TEST_CASE("two-level Rabi oscillation", "[propagator]") {
  ModelParams p;
  p.JL = 0.0;
  const Hamiltonian h = assemble_hamiltonian(p, GridSpec{1, 1.0});
  const double omega = std::sqrt(0.25 + 100.0);
  for (double t : {0.01, 0.1, 0.37, 1.0}) {
    const SpinorField out = propagate(single_site(1.0, 0.0), h, t);
    const double p1 = 100.0 / (omega * omega) * std::pow(std::sin(omega * t), 2);
    CHECK_THAT(std::norm(out.at(0, 1)), WithinAbs(p1, 1e-10));
  }
}

TEST_CASE("norm and energy are conserved", "[propagator]") {
  ModelParams p;
  const BOData bo = diagonalize_bo(p, small_grid);
  const double wb = omega_b(p, small_grid);
  const Schedule sched = Schedule::make({5.0, 10.0, 20.0}, wb);
  for (int k : {0, 1}) {
    const RunRecord rec = run_component(k, p, small_grid, bo, sched);
    for (std::size_t s = 0; s < rec.size(); ++s) {
      CHECK(std::abs(rec.norms[s] - 1.0) <= 1e-9);
      CHECK(std::abs(rec.energies[s] - rec.energies[0]) <= 1e-8 * wb);
    }
  }
}

TEST_CASE("uncoupled full dynamics matches the adiabatic channels", "[propagator]") {
  ModelParams p;
  p.gx = 0.0;
  const BOData bo = diagonalize_bo(p, small_grid);
  const Schedule sched = Schedule::make({5.0, 10.0, 20.0}, omega_b(p, small_grid));
  for (int k : {0, 1}) {
    const RunRecord full = run_component(k, p, small_grid, bo, sched);
    const RunRecord ad = run_adiabatic(k, p, small_grid, bo, sched);
    for (std::size_t s = 0; s < full.size(); ++s)
      CHECK((full.fields[s].values - ad.fields[s].values).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("propagation schemes agree", "[propagator]") {
  ModelParams p;
  const GridSpec g{201, 0.1};
  const BOData bo = diagonalize_bo(p, g);
  const double wb = omega_b(p, g);
  const Schedule sched = Schedule::make({1.0}, wb);
  PropagationOptions cn;
  cn.scheme = Scheme::crank_nicolson;
  cn.dt_omega = 1e-3;
  const RunRecord a = run_component(1, p, g, bo, sched);
  const RunRecord b = run_component(1, p, g, bo, sched, cn);
  CHECK((a.fields.back().values - b.fields.back().values).norm() * std::sqrt(g.dR) <= 1e-6);

  PropagationOptions cheb;
  cheb.scheme = Scheme::chebyshev;
  const RunRecord c = run_component(1, p, g, bo, Schedule::make({5.0}, wb), cheb);
  const RunRecord d = run_component(1, p, g, bo, Schedule::make({5.0}, wb));
  CHECK((c.fields.back().values - d.fields.back().values).norm() * std::sqrt(g.dR) <= 1e-9);
}

TEST_CASE("without hopping the marginal density is frozen", "[propagator]") {
  ModelParams p;
  p.JL = 0.0;
  const BOData bo = diagonalize_bo(p, small_grid);
  const RunRecord rec = run_component(0, p, small_grid, bo, Schedule::make({5.0, 20.0}, omega_b(p, small_grid)));
  const RealArray n0 = marginal_density(rec.fields.front());
  for (const auto& f : rec.fields) CHECK((marginal_density(f) - n0).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("superposition assembly", "[propagator]") {
  ModelParams p;
  const BOData bo = diagonalize_bo(p, small_grid);
  const double wb = omega_b(p, small_grid);
  const RunRecord r0 = run_component(0, p, small_grid, bo, Schedule::make({5.0}, wb));
  const RunRecord r1 = run_component(1, p, small_grid, bo, Schedule::make({5.0}, wb));

  const auto only0 = assemble_superposition(r0, r1, 1.0, 0.0);
  for (std::size_t s = 0; s < r0.size(); ++s) CHECK(only0[s].values == r0.fields[s].values);

  const RunRecord other = run_component(1, p, small_grid, bo, Schedule::make({10.0}, wb));
  CHECK_THROWS_AS(assemble_superposition(r0, other, 1.0, 0.0), ScheduleMismatch);
  const RunRecord shifted = run_component(1, p, small_grid, bo, Schedule::make({5.0}, 1.01 * wb));
  CHECK_THROWS_AS(assemble_superposition(r0, shifted, 1.0, 0.0), ScheduleMismatch);
}

TEST_CASE("schedule construction", "[propagator]") {
  const Schedule s = Schedule::make({20.0, 5.0, 5.0 + 1e-14, 10.0}, 2.0);
  REQUIRE(s.omega_t == std::vector<double>{0.0, 5.0, 10.0, 20.0});
  CHECK(s.time(3) == 10.0);
  CHECK_THROWS_AS(Schedule::make({-1.0}, 1.0), InvalidArgument);
  CHECK(Schedule::uniform(5.0, 4, 1.0).omega_t.size() == 5);
  CHECK(parse_scheme("cn") == Scheme::crank_nicolson);
  CHECK(parse_scheme(to_string(Scheme::chebyshev)) == Scheme::chebyshev);
}

TEST_CASE("initial wavepacket", "[propagator]") {
  ModelParams p;
  const RealArray chi = initial_nuclear_amplitude(p, small_grid);
  CHECK_THAT(chi.squaredNorm() * small_grid.dR, WithinAbs(1.0, 1e-14));
  CHECK_THROWS_AS(initial_nuclear_amplitude(p, GridSpec{41, 0.1}), LeakageError);

  const BOData bo = diagonalize_bo(p, small_grid);
  const SpinorField a = initial_component(0, p, small_grid, bo);
  const SpinorField b = initial_component(1, p, small_grid, bo);
  CHECK(std::abs(a.values.dot(b.values)) * small_grid.dR <= 1e-14);
}

#include "catch_amalgamated.hpp"

#include <cmath>

#include "deortho/interference.hpp"

using namespace deortho;
using Catch::Matchers::WithinAbs;

namespace {

const GridSpec grid{401, 0.05};

struct Runs {
  ModelParams p;
  BOData bo;
  RunRecord r0, r1;
};

Runs runs(double pop1, double phi) {
  ModelParams p;
  p.set_superposition(pop1, phi);
  const BOData bo = diagonalize_bo(p, grid);
  const Schedule s = Schedule::make({5.0, 10.0, 20.0}, omega_b(p, grid));
  return {p, bo, run_component(0, p, grid, bo, s), run_component(1, p, grid, bo, s)};
}

} // namespace

TEST_CASE("density decomposition adds up", "[interference]") {
  const Runs r = runs(0.3, 0.7);
  const auto psi = assemble_superposition(r.r0, r.r1, r.p.c0, r.p.c1);
  for (std::size_t s = 0; s < psi.size(); ++s) {
    const DensityDecomposition d = decompose(r.r0.fields[s], r.r1.fields[s], r.p.c0, r.p.c1);
    CHECK((d.n_total - marginal_density(psi[s])).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(d.n_total.sum() * grid.dR == Catch::Approx(1.0).margin(1e-9));
    CHECK(d.weight >= 0.0);
  }
  // orthogonal at t = 0: no cross density
  const DensityDecomposition d0 = decompose(r.r0.fields[0], r.r1.fields[0], r.p.c0, r.p.c1);
  CHECK(d0.n01.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("a relative phase of pi flips the interference term", "[interference]") {
  const Runs r = runs(0.5, 0.4);
  const cplx c1_flipped = std::polar(std::abs(r.p.c1), 0.4 + M_PI);
  for (std::size_t s = 1; s < r.r0.size(); ++s) {
    const auto a = decompose(r.r0.fields[s], r.r1.fields[s], r.p.c0, r.p.c1);
    const auto b = decompose(r.r0.fields[s], r.r1.fields[s], r.p.c0, c1_flipped);
    CHECK((a.cross + b.cross).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(a.cross.cwiseAbs().maxCoeff() > 1e-8);
  }
}

TEST_CASE("linearity: assembled and direct superpositions agree", "[interference]") {
  const Runs r = runs(0.5, 0.0);
  const Schedule s = Schedule::make({5.0, 10.0, 20.0}, r.r0.omega_B);
  const RunRecord direct = run_superposition(r.p, grid, r.bo, s);
  const auto assembled = assemble_superposition(r.r0, r.r1, r.p.c0, r.p.c1);
  for (std::size_t k = 0; k < direct.size(); ++k)
    CHECK((direct.fields[k].values - assembled[k].values).norm() * std::sqrt(grid.dR) <= 1e-9);
}

TEST_CASE("electronic reduced density matrix", "[interference]") {
  const Runs r = runs(0.2, 1.1);
  const auto psi = assemble_superposition(r.r0, r.r1, r.p.c0, r.p.c1);

  const ReducedDensityMatrix rho0 = reduced_density_matrix(psi[0], r.bo);
  const std::array<cplx, 2> c{r.p.c0, r.p.c1};
  for (int l = 0; l < 2; ++l)
    for (int m = 0; m < 2; ++m) CHECK(std::abs(rho0.rho(l, m) - c[l] * std::conj(c[m])) <= 1e-12);

  for (std::size_t s = 0; s < psi.size(); ++s) {
    const ReducedDensityMatrix rho = reduced_density_matrix(psi[s], r.bo);
    CHECK_THAT(rho.trace(), WithinAbs(1.0, 1e-9));
    CHECK(rho.hermiticity_defect() <= 1e-14);
    CHECK(rho.min_eigenvalue() >= -1e-12);

    const RhoDecomposition ef = ef_decompose_rho(r.r0.fields[s], r.r1.fields[s], r.bo, r.p.c0, r.p.c1);
    CHECK((ef.total - rho.rho).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(!ef.masked_warning());
    CHECK((ef.rho_01 - ef.rho_10.adjoint()).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("coefficient validation", "[interference]") {
  const Runs r = runs(0.5, 0.0);
  CHECK_THROWS_AS(decompose(r.r0.fields[1], r.r1.fields[1], 1.0, 1.0), CoefficientError);
  CHECK_THROWS_AS(ef_decompose_rho(r.r0.fields[1], r.r1.fields[1], r.bo, 0.5, 0.5), CoefficientError);
  ModelParams p;
  CHECK_THROWS_AS(p.set_superposition(1.5, 0.0), CoefficientError);
  CHECK_THROWS_AS(cross_density(r.r0.fields[0], r.r1.fields[1]), InvalidArgument);
}

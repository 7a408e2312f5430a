#include "catch_amalgamated.hpp"

#include <cmath>

#include "deortho/efactor.hpp"
#include "deortho/propagator.hpp"

using namespace deortho;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const GridSpec grid{401, 0.05};

struct Fixture {
  ModelParams p;
  BOData bo = diagonalize_bo(p, grid);
  SpinorField psi0 = initial_component(0, p, grid, bo);
  SpinorField psi1 = initial_component(1, p, grid, bo);
};

bool interior(const Mask& m, Eigen::Index i) {
  return i > 0 && i + 1 < static_cast<Eigen::Index>(m.size()) && m[i - 1] && m[i] && m[i + 1];
}

RunRecord evolved(const Fixture& fx, int k, double omega_t) {
  return run_component(k, fx.p, grid, fx.bo, Schedule::make({omega_t}, omega_b(fx.p, grid)));
}

} // namespace

TEST_CASE("factorisation reconstructs the state", "[efactor]") {
  Fixture fx;
  const RunRecord rec = evolved(fx, 1, 5.0);
  const SpinorField& psi = rec.fields.back();
  const FactorField f = extract_factors(psi);
  REQUIRE(count_valid(f.valid) > 100);
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    if (!f.valid[i]) continue;
    CHECK_THAT(f.phi.col(i).norm(), WithinAbs(1.0, 1e-14));
    CHECK((f.y[i] * f.phi.col(i) - psi.spinor(i)).norm() <= 1e-14 * f.y_abs[i]);
    const int lead = std::abs(f.phi(0, i)) >= std::abs(f.phi(1, i)) ? 0 : 1;
    CHECK(std::abs(f.phi(lead, i).imag()) <= 1e-15);
    CHECK(f.phi(lead, i).real() > 0.0);
  }
}

TEST_CASE("observables do not see a global phase", "[efactor]") {
  Fixture fx;
  const RunRecord r0 = evolved(fx, 0, 5.0), r1 = evolved(fx, 1, 5.0);
  SpinorField a = r0.fields.back(), b = r1.fields.back();
  const MaskedComplex ref = overlap_field(a, b);
  const MaskedReal a_ref = vector_potential(extract_factors(a));
  const MaskedComplex p_ref = momentum_function(a, extract_factors(a));

  a.values *= std::polar(1.0, 0.9);
  b.values *= std::polar(1.0, -2.1);
  const MaskedComplex ov = overlap_field(a, b);
  const MaskedReal a_new = vector_potential(extract_factors(a));
  const MaskedComplex p_new = momentum_function(a, extract_factors(a));
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    CHECK(ov.valid[i] == ref.valid[i]);
    if (!ov.valid[i]) continue;
    CHECK(std::abs(ov.values[i] - ref.values[i]) <= 1e-12);
    if (a_ref.valid[i]) CHECK(std::abs(a_new.values[i] - a_ref.values[i]) <= 1e-9);
    if (p_ref.valid[i]) CHECK(std::abs(p_new.values[i] - p_ref.values[i]) <= 1e-9 * (1.0 + std::abs(p_ref.values[i])));
  }
}

TEST_CASE("vector potential of a smooth spinor and its gauge shift", "[efactor]") {
  // phi = (cos th, sin th e^{i beta R}) has A = beta sin^2 th
  const double beta = 0.7, lambda = 0.2;
  FactorField f{grid, 0.0, RealArray::Ones(grid.n_points), ComplexArray::Ones(grid.n_points),
                Eigen::Matrix2Xcd(2, grid.n_points), Mask(grid.n_points, 1)};
  auto theta = [](double R) { return 0.3 + 0.2 * std::tanh(R); };
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    const double R = grid.position(i);
    f.phi.col(i) << std::cos(theta(R)), std::polar(std::sin(theta(R)), beta * R);
  }
  FactorField g = f;
  for (Eigen::Index i = 0; i < grid.n_points; ++i) g.phi.col(i) *= std::polar(1.0, lambda * grid.position(i));
  const MaskedReal a = vector_potential(f), b = vector_potential(g);
  for (Eigen::Index i = 1; i + 1 < grid.n_points; ++i) {
    CHECK_THAT(a.values[i], WithinAbs(beta * std::pow(std::sin(theta(grid.position(i))), 2), 1e-3));
    CHECK_THAT(b.values[i] - a.values[i], WithinAbs(lambda, 1e-4));
  }
}

TEST_CASE("initial factors", "[efactor]") {
  Fixture fx;
  const FactorField f = extract_factors(fx.psi1);
  const MaskedComplex p = momentum_function(fx.psi1, f);
  const MaskedReal a = vector_potential(f);
  const MaskedReal j = nuclear_current(fx.psi1, f.valid);
  const TdpesParts parts = tdpes_gi_part(f, fx.bo);
  const MaskedComplex ov = overlap_field(fx.psi0, fx.psi1);

  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    if (!f.valid[i]) continue;
    const double R = grid.position(i);
    CHECK(std::abs(ov.values[i]) <= 1e-12);
    CHECK(std::abs(j.values[i]) == 0.0);
    CHECK(p.values[i].real() == 0.0);
    CHECK(std::abs(a.values[i]) <= 1e-14);
    CHECK_THAT(parts.bo_expectation.values[i], WithinAbs(fx.bo.eps1[i], 1e-12));
    if (!interior(f.valid, i)) continue;
    CHECK_THAT(p.values[i].imag(), WithinAbs(R / (fx.p.sigma * fx.p.sigma), 1e-9));
  }
}

TEST_CASE("non-adiabatic energy of a BO state converges to c NAC^2", "[efactor]") {
  // real eigenvector: |(-i d_R - A) phi|^2 = |d_R e_1|^2 = d01^2
  ModelParams p;
  std::vector<double> dev;
  for (double dR : {0.025, 0.0125}) {
    const GridSpec g{static_cast<Eigen::Index>(std::lround(16.0 / dR)) + 1, dR};
    const BOData bo = diagonalize_bo(p, g);
    const FactorField f = extract_factors(initial_component(1, p, g, bo));
    const TdpesParts parts = tdpes_gi_part(f, bo);
    const double c = p.JL * dR * dR;
    const double scale = bo.nac.cwiseAbs2().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < g.n_points; ++i)
      if (interior(f.valid, i))
        worst = std::max(worst, std::abs(parts.eps_na.values[i] / c - bo.nac[i] * bo.nac[i]));
    dev.push_back(worst / scale);
  }
  CHECK(dev[1] < 0.02);
  const double order = std::log2(dev[0] / dev[1]);
  CHECK(order > 1.8);
  CHECK(order < 2.2);
}

TEST_CASE("non-adiabatic energy is non-negative", "[efactor]") {
  Fixture fx;
  const RunRecord rec = evolved(fx, 0, 10.0);
  const ComponentDiagnostics d = component_diagnostics(rec.fields.back(), fx.bo);
  for (Eigen::Index i = 0; i < grid.n_points; ++i)
    if (d.tdpes.eps_na.valid[i]) CHECK(d.tdpes.eps_na.values[i] >= 0.0);
}

TEST_CASE("gauge-free overlap magnitude", "[efactor]") {
  Fixture fx;
  const RunRecord r0 = evolved(fx, 0, 5.0), r1 = evolved(fx, 1, 5.0);
  const MaskedComplex ov = overlap_field(r0.fields.back(), r1.fields.back());
  const MaskedComplex bo = overlap_bo_gauge(r0.fields.back(), r1.fields.back(), fx.bo);
  const MaskedReal mag = overlap_magnitude(r0.fields.back(), r1.fields.back());
  double peak = 0.0;
  for (Eigen::Index i = 0; i < grid.n_points; ++i) {
    if (!ov.valid[i]) continue;
    REQUIRE(mag.valid[i]);
    CHECK(std::abs(std::abs(ov.values[i]) - mag.values[i]) <= 1e-12);
    if (bo.valid[i]) CHECK(std::abs(std::abs(bo.values[i]) - mag.values[i]) <= 1e-12);
    CHECK(mag.values[i] <= 1.0 + 1e-12);
    peak = std::max(peak, mag.values[i]);
  }
  CHECK(peak > 1e-6);
}

TEST_CASE("masking", "[efactor]") {
  const GridSpec g{11, 1.0};
  SpinorField psi = SpinorField::zeros(g);
  for (Eigen::Index i = 0; i < 6; ++i) psi.at(i, 0) = 1.0;
  psi.at(7, 1) = 1e-7;  // density 1e-14, below the floor
  const FactorField f = extract_factors(psi, 1e-12);
  CHECK(count_valid(f.valid) == 6);
  CHECK(f.y[7] == 0.0);
  CHECK_THROWS_AS(density_mask(marginal_density(psi), 0.0), InvalidArgument);

  // an isolated valid point has no derivative stencil
  SpinorField lone = SpinorField::zeros(g);
  lone.at(5, 1) = 1.0;
  const MaskedReal a = vector_potential(extract_factors(lone));
  CHECK(count_valid(a.valid) == 0);

  SpinorField other = SpinorField::zeros(g, 1.0);
  CHECK_THROWS_AS(overlap_field(psi, other), InvalidArgument);
}

TEST_CASE("gauge time term", "[efactor]") {
  const GridSpec g{3, 1.0};
  SpinorField a = SpinorField::zeros(g, 0.0), b = SpinorField::zeros(g, 0.5);
  for (Eigen::Index i = 0; i < 3; ++i) {
    a.at(i, 0) = 1.0;
    a.at(i, 1) = 0.5;
    b.at(i, 0) = 1.0;
    b.at(i, 1) = std::polar(0.5, 0.2);
  }
  const MaskedReal w = gauge_time_term(extract_factors(a), extract_factors(b));
  const double expect = -std::arg(1.0 + 0.25 * std::polar(1.0, 0.2)) / 0.5;
  for (Eigen::Index i = 0; i < 3; ++i) CHECK_THAT(w.values[i], WithinAbs(expect, 1e-14));
  CHECK_THROWS_AS(gauge_time_term(extract_factors(b), extract_factors(a)), InvalidArgument);
}

#include "catch_amalgamated.hpp"

#include <cmath>

#include "deortho/perturb.hpp"

using namespace deortho;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const GridSpec grid{401, 0.05};

struct Zeroth {
  ModelParams p;
  BOData bo;
  ZerothOrderFactors z0, z1;
};

Zeroth zeroth(ModelParams p, double end, int panels) {
  const BOData bo = diagonalize_bo(p, grid);
  const double w = omega_b(p, grid);
  const Schedule mesh = panels ? Schedule::uniform(end, panels, w) : Schedule::make({}, w);
  return {p, bo, zeroth_factors(0, bo, run_adiabatic(0, p, grid, bo, mesh)),
          zeroth_factors(1, bo, run_adiabatic(1, p, grid, bo, mesh))};
}

SeriesEntry synthetic(double JL, double power) {
  const GridSpec g{5, 1.0};
  SeriesEntry e;
  e.JL = JL;
  e.grid = g;
  e.weight = RealArray::Ones(5);
  e.predicted = ComplexArray::Constant(5, cplx(0.3, 0.1));
  e.exact = e.predicted;
  for (Eigen::Index i = 0; i < 5; ++i) e.exact[i] += std::pow(JL, power) * cplx(1.0 + i, -0.5);
  e.valid.assign(5, 1);
  return e;
}

} // namespace

TEST_CASE("zeroth-order factors are orthogonal", "[perturb]") {
  const Zeroth z = zeroth(ModelParams{}, 5.0, 20);
  for (std::size_t s = 0; s < z.z0.size(); ++s) CHECK(zeroth_overlap(z.z0, z.z1, s).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK_THROWS_AS(zeroth_factors(1, z.bo, run_adiabatic(0, z.p, grid, z.bo, Schedule::make({}, 1.0))),
                  InvalidArgument);
}

TEST_CASE("first-order overlap limits", "[perturb]") {
  SECTION("vanishing diabatic coupling") {
    ModelParams p;
    p.gx = 0.0;
    const Zeroth z = zeroth(p, 5.0, 20);
    CHECK(s1_overlap(z.z0, z.z1, 20).value.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("initial time") {
    const Zeroth z = zeroth(ModelParams{}, 0.0, 0);
    const S1Result r = s1_overlap(z.z0, z.z1, 0);
    CHECK(r.value.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("mesh checks") {
    const Zeroth z = zeroth(ModelParams{}, 5.0, 20);
    CHECK_THROWS_AS(s1_overlap(z.z0, z.z1, 40), InvalidArgument);
    CHECK_THROWS_AS(s1_overlap(z.z0, z.z0, 20), InvalidArgument);
    const Zeroth odd = zeroth(ModelParams{}, 5.0, 21);
    CHECK_THROWS_AS(s1_overlap(odd.z0, odd.z1, 21), InvalidArgument);
    CHECK_THROWS_AS(s1_overlap(z.z0, z.z1, 20, 1e-12, 1e-30), QuadratureError);
  }
}

TEST_CASE("first-order overlap tracks the exact one at small JL", "[perturb]") {
  ModelParams p;
  p.JL = 0.05;
  const SeriesEntry e = series_entry(p, grid, 5.0, 200);
  const double res = detail::weighted_l2(e.exact - e.predicted, e.weight, e.valid, grid.dR);
  const double ref = detail::weighted_l2(e.exact, e.weight, e.valid, grid.dR);
  REQUIRE(ref > 0.0);
  CHECK(res / ref <= 0.3);
}

TEST_CASE("ENC operator", "[perturb]") {
  ModelParams p;
  const BOData bo = diagonalize_bo(p, grid);
  const double w = omega_b(p, grid);
  const RunRecord rec = run_component(0, p, grid, bo, Schedule::make({5.0}, w));
  const FactorField f = extract_factors(rec.fields.back());
  const MaskedComplex pf = momentum_function(rec.fields.back(), f);
  const MaskedReal af = vector_potential(f);

  // keep the dense check small: restrict to a window around the packet
  FactorField fw = f;
  for (Eigen::Index i = 0; i < grid.n_points; ++i)
    if (std::abs(grid.position(i)) > 2.0) fw.valid[i] = 0;
  const EncOperator op = make_enc_operator(fw, pf, af, p.JL);
  CHECK(enc_nonhermiticity(op) > 1e-6);

  EncOperator flat = op;
  flat.p.setZero();
  flat.a.setZero();
  flat.shift.setZero();
  CHECK(enc_nonhermiticity(flat) <= 1e-14);

  // constant phi with A = 0 and p = 0 is annihilated
  FactorField constant = fw;
  for (Eigen::Index i = 0; i < grid.n_points; ++i) constant.phi.col(i) << cplx(0.6, 0.0), cplx(0.0, 0.8);
  MaskedComplex zero_p = pf;
  zero_p.values.setZero();
  MaskedReal zero_a = af;
  zero_a.values.setZero();
  const MaskedSpinor v0 = apply_enc(constant, zero_p, zero_a, p.JL);
  for (Eigen::Index i = 0; i < grid.n_points; ++i)
    if (v0.valid[i]) CHECK(v0.values.col(i).norm() <= 1e-15);

  // <phi|V phi> on zeroth-order fixtures
  const Zeroth z = zeroth(p, 5.0, 20);
  double worst = 0.0, shift_dev = 0.0;
  for (const ZerothOrderFactors* zk : {&z.z0, &z.z1})
    for (std::size_t s : {std::size_t{0}, std::size_t{10}, std::size_t{20}}) {
      const FactorField fz = zk->factors(s);
      const MaskedComplex pz = zk->momentum(s);
      const MaskedReal az = vector_potential(fz);
      const EncOperator oz = make_enc_operator(fz, pz, az, p.JL);
      const MaskedSpinor v = oz.apply(fz.phi);
      for (Eigen::Index i = 0; i < grid.n_points; ++i)
        if (v.valid[i]) {
          worst = std::max(worst, std::abs(fz.phi.col(i).dot(v.values.col(i))));
          shift_dev = std::max(shift_dev, std::abs(oz.shift[i].real() - oz.eps_na[i]));
        }
    }
  CHECK(worst <= 1e-8);
  CHECK(shift_dev <= 1e-3 * p.JL);

  Mask narrow(7, 0);
  narrow[2] = narrow[3] = 1;
  CHECK_THROWS_AS(detail::enc_interior(narrow), StencilError);
  narrow[4] = 1;
  CHECK(detail::enc_interior(narrow) == Mask{0, 0, 0, 1, 0, 0, 0});
}

TEST_CASE("least squares", "[perturb]") {
  const auto exact = detail::least_squares({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK_THAT(exact.slope, WithinAbs(2.0, 1e-15));
  CHECK_THAT(exact.intercept, WithinAbs(1.0, 1e-15));
  CHECK_THAT(exact.stderr_slope, WithinAbs(0.0, 1e-15));

  const auto noisy = detail::least_squares({0, 1, 2, 3}, {1, 3, 4, 8});
  CHECK_THAT(noisy.slope, WithinAbs(2.2, 1e-14));
  CHECK_THAT(noisy.intercept, WithinAbs(0.7, 1e-14));
  CHECK_THAT(noisy.stderr_slope, WithinAbs(std::sqrt(0.18), 1e-14));
}

TEST_CASE("order comparison", "[perturb]") {
  std::vector<SeriesEntry> series{synthetic(0.0, 2.0), synthetic(0.05, 2.0), synthetic(0.1, 2.0),
                                  synthetic(0.2, 2.0)};
  const OrdersReport rep = compare_orders(series);
  CHECK(rep.rows.size() == 4);
  CHECK_THAT(rep.slope, WithinAbs(2.0, 1e-12));
  CHECK(rep.band_lo <= 2.0);
  CHECK(rep.band_hi >= 2.0);
  REQUIRE(rep.slope_per_R.size() == 5);
  for (double s : rep.slope_per_R) CHECK_THAT(s, WithinAbs(2.0, 1e-12));

  series.pop_back();
  CHECK_THROWS_AS(compare_orders(series), InsufficientSeries);
}

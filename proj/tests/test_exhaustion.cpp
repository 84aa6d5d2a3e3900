#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nlpt/error.hpp"
#include "nlpt/exhaustion.hpp"

using namespace nlpt;
using std::numbers::pi;

namespace {

DiscretizedDomain grid_for(const ModelDomain& d, std::vector<std::size_t> res, double cut) {
  GridRequest rq;
  rq.resolution = std::move(res);
  rq.cut = cut;
  return build_grid(d, rq);
}

}  // namespace

TEST_CASE("catalog entries match their closed forms") {
  SUBCASE("plane cone: log |x|") {
    const auto h = make_special_exhaustion(ModelDomain::cone(2, AngularDomain::whole(), 1.0), 2.0);
    CHECK(h.family() == ExhaustionFamily::ConeLog);
    CHECK(std::isinf(h.h0()));
    for (double r : {1.5, 2.0, 7.0}) CHECK(h.value_at(r) == doctest::Approx(std::log(r)));
  }
  SUBCASE("cylinder n=3 k=2 p=3: d^(1/2)") {
    const auto h = make_special_exhaustion(ModelDomain::kcylinder(3, 2, CrossSection::box({1.0})), 3.0);
    CHECK(h.exponent() == doctest::Approx(0.5));
    CHECK(std::isinf(h.h0()));
    CHECK(h.value_at(4.0) == doctest::Approx(2.0));
  }
  SUBCASE("warped alpha=1 beta=r n=3 p=2: 1 - 1/r, h0 = 1") {
    const auto d = ModelDomain::warped(3, AngularDomain::whole(), RadialProfile::constant(1.0),
                                       RadialProfile::power(1.0, 1.0), 1.0);
    const auto h = make_special_exhaustion(d, 2.0);
    CHECK(h.family() == ExhaustionFamily::WarpedIntegral);
    CHECK(h.h0() == doctest::Approx(1.0).epsilon(1e-6));
    for (double r : {1.5, 2.0, 10.0}) CHECK(h.value_at(r) == doctest::Approx(1.0 - 1.0 / r).epsilon(1e-9));
  }
  SUBCASE("p <= 1 has no entry") {
    CHECK_THROWS_AS(make_special_exhaustion(ModelDomain::euclidean(2), 1.0), Error);
  }
}

TEST_CASE("p-Laplace residual") {
  SUBCASE("log r in the plane converges at second order") {
    const auto d = ModelDomain::euclidean(2, 1.0);
    const auto h = make_special_exhaustion(d, 2.0);
    double prev = 0.0;
    for (std::size_t n : {32u, 64u, 128u}) {
      const auto s = residual_summary(h, grid_for(d, {n, n}, std::exp(1.0)), 2.0);
      if (prev > 0.0) CHECK(prev / s.max_abs > 3.0);
      prev = s.max_abs;
    }
  }
  SUBCASE("|x1| on the strip is exact off the middle") {
    const auto d = ModelDomain::kcylinder(2, 1, CrossSection::box({pi}));
    const auto h = make_special_exhaustion(d, 2.0);
    const auto s = residual_summary(h, grid_for(d, {64, 32}, 3.0), 2.0);
    CHECK(s.max_abs < 1e-10);
  }
  SUBCASE("d^(1/2) on the cylinder n=3 k=2 p=3 decreases under refinement") {
    const auto d = ModelDomain::kcylinder(3, 2, CrossSection::box({1.0}));
    const auto h = make_special_exhaustion(d, 3.0);
    const double coarse = residual_summary(h, grid_for(d, {32, 32, 8}, std::exp(1.0)), 3.0).max_abs;
    const double fine = residual_summary(h, grid_for(d, {64, 64, 8}, std::exp(1.0)), 3.0).max_abs;
    CHECK(fine < coarse / 3.0);
  }
}

TEST_CASE("flux through h-spheres") {
  SUBCASE("annulus: 2 pi at every level") {
    const auto d = ModelDomain::euclidean(2, 1.0);
    const auto h = make_special_exhaustion(d, 2.0);
    const auto g = grid_for(d, {96, 128}, std::exp(2.0));
    for (double t : {0.5, 1.0, 1.5}) CHECK(flux_through_sphere(h, g, 2.0, t) == doctest::Approx(2.0 * pi).epsilon(0.01));
  }
  SUBCASE("strip: two segments of length pi") {
    const auto d = ModelDomain::kcylinder(2, 1, CrossSection::box({pi}));
    const auto h = make_special_exhaustion(d, 2.0);
    const auto g = grid_for(d, {129, 65}, 3.0);
    CHECK(flux_through_sphere(h, g, 2.0, 1.0) == doctest::Approx(2.0 * pi).epsilon(0.01));
    CHECK(boundary_normal_pairing(h, g, 2.0) == 0.0);
  }
}

TEST_CASE("boundary pairing vanishes for the cylinder and product lifts") {
  const auto cyl = ModelDomain::kcylinder(3, 2, CrossSection::box({1.0}));
  const auto hc = make_special_exhaustion(cyl, 3.0);
  CHECK(boundary_normal_pairing(hc, grid_for(cyl, {24, 24, 8}, std::exp(1.0)), 3.0) < 1e-10);

  const auto prod = ModelDomain::product(ModelDomain::euclidean(2, 1.0), CrossSection::box({1.0}));
  const auto hp = make_special_exhaustion(prod, 2.0);
  CHECK(hp.family() == ExhaustionFamily::ProductLift);
  const auto v = verify_exhaustion(hp, grid_for(prod, {32, 32, 8}, std::exp(1.0)), 2.0);
  CHECK(v.b2);
  CHECK(v.passed());
}

TEST_CASE("warped divergence test") {
  const auto one = RadialProfile::constant(1.0);
  const auto lin = RadialProfile::power(1.0, 1.0);
  CHECK(warped_parabolicity(one, lin, 2, 2.0, 1.0).verdict == TypeVerdict::Parabolic);
  const auto hyp = warped_parabolicity(one, lin, 3, 2.0, 2.0);
  CHECK(hyp.verdict == TypeVerdict::Hyperbolic);
  CHECK(hyp.h0 == doctest::Approx(0.5).epsilon(1e-6));
  for (int n : {2, 3, 5}) CHECK(warped_parabolicity(one, one, n, 2.5, 1.0).verdict == TypeVerdict::Parabolic);
  // Exponential growth of beta makes the integral converge for every p < infinity.
  CHECK(warped_parabolicity(one, RadialProfile::sinh(1.0, 1.0), 2, 2.0, 1.0).verdict == TypeVerdict::Hyperbolic);
}

TEST_CASE("warped integral matches a direct antiderivative") {
  // alpha = 1, beta = r^2, n = 2, p = 3: integrand r^{-1}, integral log r.
  const double v = warped_integral(RadialProfile::constant(1.0), RadialProfile::power(1.0, 2.0), 2, 3.0, 1.0, 5.0);
  CHECK(v == doctest::Approx(std::log(5.0)).epsilon(1e-10));
}

TEST_CASE("the derived cylinder exponent solves the equation and the ambient one does not") {
  // n = 3, k = 1, p = 2: derived d^1, ambient d^{-1}.
  const auto d = ModelDomain::kcylinder(3, 1, CrossSection::box({1.0, 1.0}));
  CHECK(radial_power_exponent(1, 2.0) == doctest::Approx(1.0));
  CHECK(ambient_slab_exponent(3, 2.0) == doctest::Approx(-1.0));
  const auto g = grid_for(d, {64, 8, 8}, 3.0);
  const auto derived = make_special_exhaustion(d, 2.0);
  const auto ambient = ExhaustionFunction::radial_power(d, 2.0, ambient_slab_exponent(3, 2.0));
  CHECK(residual_summary(derived, g, 2.0).max_abs < 1e-10);
  CHECK(residual_summary(ambient, g, 2.0).max_abs > 1e-2);
}

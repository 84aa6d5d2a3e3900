#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nlpt/energy.hpp"
#include "nlpt/error.hpp"

using namespace nlpt;
using std::numbers::pi;

namespace {

struct Strip {
  DiscretizedDomain grid;
  std::vector<double> h;
};

// R x (0, width) truncated at |x1| = cut, h = |x1|.
Strip strip(std::size_t nx, std::size_t ny, double width = pi, double cut = 3.5) {
  auto g = cartesian_grid({-cut, 0.0}, {cut, width}, {nx, ny},
                          {{Face{0, false}, NodeTag::Cut}, {Face{0, true}, NodeTag::Cut}});
  auto h = sample(g, [](const Point& x) { return std::abs(x[0]); });
  return {std::move(g), std::move(h)};
}

std::vector<double> mode(const DiscretizedDomain& g, double lambda) {
  return sample(g, [=](const Point& x) { return std::sinh(lambda * x[0]) * std::sin(lambda * x[1]); });
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidDomain;
}

const StructureField plap = StructureField::p_laplace(2.0);

}  // namespace

TEST_CASE("energy integral of the strip oracle") {
  const auto s = strip(257, 65);
  const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
  double prev = 0.0;
  for (double tau : {0.5, 1.0, 2.0, 3.0}) {
    const auto e = energy_integral_detail(pair, s.h, tau);
    CHECK(e.value == doctest::Approx(pi / 2.0 * std::sinh(2.0 * tau)).epsilon(0.02));
    CHECK(e.relative_gap < 0.02);
    CHECK(e.value >= prev);
    prev = e.value;
  }
  const auto flat = make_form_pair(s.grid, std::vector<double>(s.grid.size(), 4.0), plap);
  CHECK(energy_integral(flat, s.h, 1.0) == 0.0);
  CHECK(code_of([&] { energy_integral(pair, s.h, 5.0); }) == ErrorCode::LevelOutOfRange);
}

TEST_CASE("per-form epsilon on the strip") {
  const auto s = strip(257, 65);
  const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
  for (double tau : {0.5, 1.0, 2.0}) {
    const auto e = epsilon_for_form(pair, s.h, tau);
    CHECK(e.value == doctest::Approx(2.0 / std::tanh(2.0 * tau)).epsilon(0.02));
    CHECK(e.tag == EpsilonTag::PerForm);
  }
  CHECK(epsilon_for_form(pair, s.h, 3.0).value == doctest::Approx(2.0).epsilon(0.02));

  // f lives in |x1| < 0.5, so it vanishes on the shell |x1| = 1.
  const auto inner = make_form_pair(s.grid, sample(s.grid, [](const Point& x) {
    return std::abs(x[0]) < 0.5 ? std::pow(std::cos(pi * x[0]), 2) * std::sin(x[1]) : 0.0;
  }), plap);
  CHECK(code_of([&] { epsilon_for_form(inner, s.h, 1.0); }) == ErrorCode::ZeroDenominator);
}

TEST_CASE("family estimates") {
  const auto s = strip(257, 65);
  std::vector<TestField> family;
  for (double lambda : {3.0, 1.0, 2.0}) family.push_back({make_form_pair(s.grid, mode(s.grid, lambda), plap), {}});
  const auto est = epsilon_estimate(s.grid, s.h, 1.0, 2.0, BoundaryKind::Dirichlet, family);
  CHECK(est.argmin == 1);
  CHECK(est.tag == EpsilonTag::FamilyUpperBound);
  CHECK(est.value == doctest::Approx(2.0 / std::tanh(2.0)).epsilon(0.02));
  for (double m : est.members) CHECK(m >= est.value);

  const std::vector<TestField> single{family[1]};
  CHECK(epsilon_estimate(s.grid, s.h, 1.0, 2.0, BoundaryKind::Dirichlet, single).value ==
        epsilon_for_form(family[1].pair, s.h, 1.0).value);

  const std::vector<TestField> none;
  CHECK(code_of([&] { epsilon_estimate(s.grid, s.h, 1.0, 2.0, BoundaryKind::Dirichlet, none); }) ==
        ErrorCode::EmptyFamily);
  const std::vector<TestField> off_wall{{make_form_pair(s.grid, mode(s.grid, 1.5), plap), {}}};
  CHECK(code_of([&] { epsilon_estimate(s.grid, s.h, 1.0, 2.0, BoundaryKind::Dirichlet, off_wall); }) ==
        ErrorCode::BoundaryConditionViolated);
}

TEST_CASE("radial family on the annulus: ratio m, least at m = 1") {
  GridRequest rq;
  rq.resolution = {128, 64};
  rq.cut = std::exp(2.0);
  const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
  const auto h = sample(g, [](const Point& x) { return std::log(x[0]); });
  std::vector<TestField> family;
  for (double m : {2.0, 1.0, 3.0})
    family.push_back({make_form_pair(g, sample(g, [=](const Point& x) { return std::pow(x[0], m); }), plap), {}});
  const auto est = epsilon_estimate(g, h, 1.0, 2.0, BoundaryKind::Dirichlet, family);
  CHECK(est.argmin == 1);
  CHECK(est.members[0] == doctest::Approx(2.0).epsilon(0.02));
  CHECK(est.members[1] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(est.members[2] == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("growth verifier") {
  const auto s = strip(257, 65);
  std::vector<double> taus;
  for (int k = 0; k < 20; ++k) taus.push_back(0.5 + 2.5 * k / 19.0);

  SUBCASE("strip oracle: dI = eps I and a flat monotone quantity") {
    const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
    const auto r = growth_verifier(pair, s.h, 2.0, 1.0, taus);
    CHECK(r.passed());
    CHECK(std::abs(r.differential_margin) < 0.03);
    const auto& c = r.curve;
    for (std::size_t i = 0; i < c.tau.size(); ++i) {
      CHECK(c.dI[i] == doctest::Approx(c.eps[i] * c.I[i]).epsilon(0.03));
      CHECK(c.monotone[i] == doctest::Approx(c.monotone[0]).epsilon(0.03));
    }
  }
  SUBCASE("a constant form is the degenerate branch") {
    const auto flat = make_form_pair(s.grid, std::vector<double>(s.grid.size(), 0.0), plap);
    const auto r = growth_verifier(flat, s.h, 2.0, 1.0, taus);
    CHECK(r.degenerate);
    for (double v : r.curve.I) CHECK(v == 0.0);
  }
  SUBCASE("a nonzero trace is refused") {
    const auto bad = make_form_pair(
        s.grid, sample(s.grid, [](const Point& x) { return std::cosh(x[0]) * std::cos(x[1]); }), plap);
    CHECK(code_of([&] { growth_verifier(bad, s.h, 2.0, 1.0, taus); }) == ErrorCode::BoundaryConditionViolated);
  }
  SUBCASE("one level is not a window") {
    const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
    const std::vector<double> one{1.0};
    CHECK(code_of([&] { growth_verifier(pair, s.h, 2.0, 1.0, one); }) == ErrorCode::WindowTooShort);
  }
}

TEST_CASE("band bounds") {
  const auto s = strip(257, 65);
  const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
  for (auto [t1, t2] : {std::pair{1.0, 2.0}, std::pair{0.5, 3.0}}) {
    const auto r = annulus_bound_check(pair, s.h, 2.0, 1.0, 1.0, t1, t2);
    CHECK(r.flux_bound.holds);
    CHECK(r.trace_bound.holds);
    CHECK(r.flux_bound.slack >= 0.0);
    CHECK(r.trace_bound.slack >= 0.0);
  }
  const auto flat = make_form_pair(s.grid, std::vector<double>(s.grid.size(), 0.0), plap);
  const auto z = annulus_bound_check(flat, s.h, 2.0, 1.0, 1.0, 1.0, 2.0);
  CHECK(z.flux_bound.lhs == 0.0);
  CHECK(z.flux_bound.rhs == 0.0);

  SUBCASE("the optimal constant against a scan") {
    // Zero Neumann data on the walls and harmonic: constants are admissible.
    const auto f = sample(s.grid, [](const Point& x) { return 3.0 + std::cosh(x[0]) * std::cos(x[1]); });
    const auto neu = make_form_pair(s.grid, f, plap);
    const auto r = annulus_bound_check(neu, s.h, 2.0, 1.0, 1.0, 1.0, 2.0);
    CHECK(r.constants_admissible);
    CHECK(r.flux_bound.holds);
    CHECK(r.flux_bound.rhs < r.flux_bound.rhs_at_zero);
    // Scan of p/(t2-t1) int_band |grad h| |f - c| |A| over c.
    std::vector<double> dens(s.grid.size());
    double best = kInf;
    const double lo = *std::min_element(f.begin(), f.end()), hi = *std::max_element(f.begin(), f.end());
    for (int k = 0; k <= 400; ++k) {
      const double c = lo + (hi - lo) * k / 400.0;
      for (std::size_t i = 0; i < s.grid.size(); ++i)
        dens[i] = std::abs(f[i] - c) * std::hypot(neu.theta[i][0], neu.theta[i][1]);
      best = std::min(best, 2.0 * band_volume_integral(s.grid, s.h, dens, 1.0, 2.0));
    }
    CHECK(r.flux_bound.rhs == doctest::Approx(best).epsilon(0.01));
  }
}

TEST_CASE("Phragmen-Lindelof alternative") {
  const auto s = strip(257, 65);
  const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
  const auto r = pl_alternative_check(pair, s.h, 2.0, 1.0, 1.0, 0.5, 3.0, 12);
  CHECK(r.alternative == Alternative::GrowthA);
  CHECK(r.extrapolated);
  for (double v : r.proxy_a) CHECK(v == doctest::Approx(r.proxy_a.front()).epsilon(0.03));

  const auto flat = make_form_pair(s.grid, std::vector<double>(s.grid.size(), 0.0), plap);
  CHECK(pl_alternative_check(flat, s.h, 2.0, 1.0, 1.0, 0.5, 3.0).alternative == Alternative::TrivialForm);
  CHECK(code_of([&] { pl_alternative_check(pair, s.h, 2.0, 1.0, 1.0, 0.5, 3.0, 2); }) == ErrorCode::WindowTooShort);
}

TEST_CASE("N-means on annulus sectors") {
  GridRequest rq;
  rq.resolution = {64, 128};
  rq.cut = std::exp(3.0);
  const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
  const auto h = sample(g, [](const Point& x) { return std::log(x[0]); });
  const double t = 1.5;

  // A sector of opening phi carries r^lambda sin(lambda angle), lambda = pi/phi, ratio 2 lambda.
  std::vector<Partition> halves;
  for (std::size_t c = 16; c <= 112; c += 16) halves.push_back(sector_partition(g, plap, {0, c}));
  const auto e2 = n_mean(g, h, t, 2, halves, 2.0);
  CHECK(halves[e2.argmin].parts[0].mask.size() == g.size());
  CHECK(e2.argmin == 3);  // cut at node 64: the symmetric split
  CHECK(e2.value == doctest::Approx(2.0).epsilon(0.03));
  for (std::size_t k = 0; k < halves.size(); ++k) {
    const double phi = 2.0 * pi * (16.0 * (k + 1)) / 128.0;
    const double oracle = 0.5 * (2.0 * pi / phi + 2.0 * pi / (2.0 * pi - phi));
    CHECK(e2.means[k] == doctest::Approx(oracle).epsilon(0.06));
  }

  const std::vector<Partition> whole{sector_partition(g, plap, {0})};
  const auto e1 = n_mean(g, h, t, 1, whole, 2.0);
  const auto direct = epsilon_estimate(g, h, t, 2.0, BoundaryKind::Dirichlet, whole[0].parts[0].family,
                                       whole[0].parts[0].mask);
  CHECK(e1.value == direct.value);
  CHECK(e1.value == doctest::Approx(1.0).epsilon(0.03));

  // Leave-one-out collections never exceed the partitions they came from.
  const auto dropped = leave_one_out(halves);
  const auto e1_loo = n_mean(g, h, t, 1, dropped, 2.0);
  CHECK(e1_loo.value <= e2.value);

  const std::vector<Partition> empty;
  CHECK(code_of([&] { n_mean(g, h, t, 2, empty, 2.0); }) == ErrorCode::EmptyFamily);
  CHECK(code_of([&] { n_mean(g, h, t, 3, halves, 2.0); }) == ErrorCode::InvalidDomain);
}

TEST_CASE("epsilon is monotone under domain inclusion") {
  GridRequest rq;
  rq.resolution = {64, 128};
  rq.cut = std::exp(3.0);
  const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
  const auto h = sample(g, [](const Point& x) { return std::log(x[0]); });
  // D1 = angle nodes [0, 32), D2 = [0, 64): D1's forms extend by zero into D2.
  const auto d1 = sector_partition(g, plap, {0, 32, 64}).parts[0];
  const auto d2 = sector_partition(g, plap, {0, 64}).parts[0];
  std::vector<TestField> shared = d1.family;
  shared.insert(shared.end(), d2.family.begin(), d2.family.end());
  const double e1 = epsilon_estimate(g, h, 1.5, 2.0, BoundaryKind::Dirichlet, d1.family, d1.mask).value;
  const double e2 = epsilon_estimate(g, h, 1.5, 2.0, BoundaryKind::Dirichlet, shared, d2.mask).value;
  CHECK(e2 <= e1);
  CHECK(e1 == doctest::Approx(4.0).epsilon(0.05));
  CHECK(e2 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("Ahlfors counting on strips") {
  SUBCASE("two half-strips of a double strip") {
    const auto s = strip(256, 129, 2.0 * pi);
    const auto masks = column_masks(s.grid, 1, {1, 64});
    TractFamily tracts;
    for (int k = 0; k < 2; ++k) {
      NodeMask m = masks[k];
      std::vector<double> f(s.grid.size(), 0.0);
      for (std::size_t i = 0; i < s.grid.size(); ++i) {
        if (s.grid.tag(i) == NodeTag::ManifoldBoundary) m[i] = 0;
        if (m[i]) f[i] = std::sinh(s.grid.coordinates(i)[0]) * std::sin(s.grid.coordinates(i)[1] - k * pi);
      }
      tracts.members.push_back({m, make_form_pair(s.grid, f, plap)});
    }
    std::vector<Partition> slabs;
    for (std::size_t c : {56u, 64u, 72u}) slabs.push_back(slab_partition(s.grid, plap, 1, {0, c}));
    std::vector<double> window;
    for (int j = 1; j <= 8; ++j) window.push_back(0.5 + 0.3 * j);
    const auto r = ahlfors_count_bound(tracts, s.grid, s.h, 2.0, 1.0, 1.0, 2, 0.5, window, slabs);
    CHECK(r.L == 2);
    CHECK(r.chain_holds);
    CHECK(r.am_gm_holds);
    CHECK(r.divergence_trend);
    CHECK_FALSE(r.contradiction);
    CHECK(r.verdict == AhlforsVerdict::Inconclusive);
    for (std::size_t j = 0; j < r.tau.size(); ++j) {
      CHECK(r.am_gm_mean[j] >= r.am_gm_geometric[j]);
      CHECK(r.chain_witness[j] <= r.I[j] * (1.0 + r.tolerance));
    }
    // A width-pi slab has E close to 2 coth(2t).
    CHECK(r.E.back() == doctest::Approx(2.0 / std::tanh(2.0 * r.tau.back())).epsilon(0.03));
  }
  SUBCASE("overlapping tracts") {
    const auto s = strip(64, 33);
    TractFamily tracts;
    NodeMask m(s.grid.size(), 0);
    for (std::size_t i = 0; i < s.grid.size(); ++i) m[i] = s.grid.tag(i) == NodeTag::Interior;
    const auto pair = make_form_pair(s.grid, mode(s.grid, 1.0), plap);
    tracts.members = {{m, pair}, {m, pair}};
    CHECK(code_of([&] { tracts.validate(s.grid); }) == ErrorCode::DisjointnessViolated);
  }
}

TEST_CASE("level window ignores the inner Cut of an annulus") {
  GridRequest rq;
  rq.resolution = {32, 32};
  rq.cut = std::exp(2.0);
  const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
  const auto h = sample(g, [](const Point& x) { return std::log(x[0]); });
  CHECK(level_window(g, h) == doctest::Approx(2.0).epsilon(1e-12));
}

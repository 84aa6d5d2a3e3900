#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nlpt/error.hpp"
#include "nlpt/wtforms.hpp"

using namespace nlpt;
using std::numbers::pi;

namespace {

// Smooth bump supported in the disk of radius rad around (0.5, 0.5).
double bump(const Point& x, double rad = 0.3) {
  const double r2 = ((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5)) / (rad * rad);
  return r2 < 1.0 ? std::pow(1.0 - r2, 4) : 0.0;
}

}  // namespace

TEST_CASE("structure constants of the presets") {
  const auto plap = check_structure(StructureField::p_laplace(3.0), 2000);
  CHECK(plap.passed);
  CHECK(std::abs(plap.coercivity_margin) < 1e-12);
  CHECK(std::abs(plap.growth_margin) < 1e-12);

  const auto aniso = StructureField::anisotropic_diagonal(2.0, {1.0, 2.0});
  CHECK(aniso.nu1() == doctest::Approx(1.0));
  CHECK(aniso.nu2() == doctest::Approx(2.0));
  CHECK(check_structure(aniso, 2000).passed);
}

TEST_CASE("a custom flux breaking the growth bound is caught with its witness") {
  // |A| = 3 |xi| at node 7, |xi| elsewhere, claimed nu2 = 2.
  const auto field = StructureField::custom(2.0, 1.0, 2.0, [](std::size_t node, const Vec& xi) {
    const double s = node == 7 ? 3.0 : 1.0;
    return Vec{s * xi[0], s * xi[1], s * xi[2]};
  });
  const auto r = check_structure(field, 5000, 2, 16);
  CHECK_FALSE(r.passed);
  CHECK(r.witness_node == 7);
  CHECK(r.growth_margin < 0.0);
  CHECK_FALSE(field.has_potential());
}

TEST_CASE("WT1 and WT2 on explicit pairs") {
  const auto g = compact_box_grid({1.0, 1.0}, {17, 17});
  const auto field = StructureField::p_laplace(2.0);
  auto pair = make_form_pair(g, sample(g, [](const Point& x) { return x[0]; }), field);
  const auto w1 = check_wt1(pair, 1.0, 2.0);
  CHECK(w1.passed);
  CHECK(std::abs(w1.margin) < 1e-12);
  CHECK(check_wt2(pair, 1.0, 1.0, 2.0).passed);

  // Stored w is exactly the discrete gradient.
  const auto grad = gradient(g, pair.f);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(pair.w[i] == grad[i]);

  // Scaling theta by 10 breaks WT1 with the same constant: 100 > 10.
  for (auto& t : pair.theta)
    for (double& c : t) c *= 10.0;
  CHECK_FALSE(check_wt1(pair, 1.0, 2.0).passed);

  // A rotated theta is not of flux form and fails coercivity.
  auto rotated = make_form_pair(g, sample(g, [](const Point& x) { return x[0] + x[1]; }), field);
  rotated.theta[40] = {-rotated.w[40][1], rotated.w[40][0], 0.0};
  const auto bad = check_wt2(rotated, 1.0, 1.0, 2.0);
  CHECK_FALSE(bad.passed);
  CHECK(bad.witness_node == 40);
}

TEST_CASE("WT2 constants imply the WT1 constant") {
  CHECK(wt2_implies_wt1_constant(1.0, 2.0, 2.0) == doctest::Approx(0.25));
  CHECK(wt2_implies_wt1_constant(2.0, 2.0, 3.0) == doctest::Approx(2.0 * std::pow(2.0, -1.5)));
  for (double p : {1.5, 2.0, 4.0}) CHECK(wt2_implies_wt1_constant(1.0, 1.0, p) == doctest::Approx(1.0));

  // Brute force: nu0 |theta|^q <= <w, theta> on random pairs of the anisotropic preset.
  const auto g = compact_box_grid({1.0, 1.0}, {21, 21});
  for (double p : {2.0, 3.0}) {
    const auto field = StructureField::anisotropic_diagonal(p, {1.0, 2.0});
    const double nu0 = wt2_implies_wt1_constant(field.nu1(), field.nu2(), p);
    std::mt19937_64 rng(11);
    for (int k = 0; k < 10; ++k) {
      const auto pair = random_form_pair(g, field, rng);
      const double q = p / (p - 1.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec& w = pair.w[i];
        const Vec& t = pair.theta[i];
        const double pairing = w[0] * t[0] + w[1] * t[1];
        const double tn = std::hypot(t[0], t[1]);
        CHECK(nu0 * std::pow(tn, q) <= pairing * (1.0 + 1e-12) + 1e-300);
      }
    }
  }
}

TEST_CASE("discrete integration by parts") {
  SUBCASE("zero flux gives zero defect") {
    const auto g = compact_box_grid({1.0, 1.0}, {16, 16});
    const auto a = sample(g, [](const Point& x) { return x[0]; });
    const std::vector<Vec> zero(g.size(), Vec{});
    CHECK(discrete_stokes_check(g, a, zero) == 0.0);
  }
  SUBCASE("summation by parts is exact on a Cartesian grid") {
    const auto g = compact_box_grid({1.0, 1.0}, {65, 65});
    const auto a = sample(g, [](const Point& x) { return x[0] * x[0] + x[1]; });
    std::vector<Vec> b(g.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      b[i] = {bump(g.coordinates(i)), 0.5 * bump(g.coordinates(i)), 0.0};
      scale += g.volume_weight(i) * std::hypot(b[i][0], b[i][1]);
    }
    CHECK(discrete_stokes_check(g, a, b) < 1e-13 * scale);
  }
  SUBCASE("constant alpha leaves the divergence integral") {
    const auto g = compact_box_grid({1.0, 1.0}, {65, 65});
    const std::vector<double> a(g.size(), 2.0);
    std::vector<Vec> b(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) b[i] = {bump(g.coordinates(i)), 0.0, 0.0};
    const auto div = divergence(g, b);
    double direct = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) direct += g.volume_weight(i) * 2.0 * div[i];
    CHECK(discrete_stokes_check(g, a, b) == doctest::Approx(std::abs(direct)).epsilon(1e-12));
    CHECK(discrete_stokes_check(g, a, b) < 1e-12);
  }
  SUBCASE("on the hyperbolic plane the defect falls at second order") {
    const auto ring = [](double r) {
      const double u = (r - 2.0) / 0.6;
      return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    };
    double prev = 0.0;
    for (std::size_t n : {32u, 64u, 128u}) {
      GridRequest rq;
      rq.resolution = {n, 2 * n};
      rq.cut = 3.0;
      const auto g = build_grid(ModelDomain::warped(2, AngularDomain::whole(), RadialProfile::constant(1.0),
                                                    RadialProfile::sinh(1.0, 1.0), 1.0),
                                rq);
      std::vector<double> a(g.size());
      std::vector<Vec> b(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g.coordinates(i)[0], t = g.coordinates(i)[1], w = ring(r);
        a[i] = r * std::cos(t);
        b[i] = {w * (std::cos(t) + 0.5 * std::sin(t)), w * (0.5 * std::cos(t) - std::sin(t)), 0.0};
      }
      const double d = discrete_stokes_check(g, a, b);
      if (prev > 0.0) CHECK(prev / d > 3.0);
      prev = d;
    }
  }
  SUBCASE("flux reaching the wall is refused") {
    const auto g = compact_box_grid({1.0, 1.0}, {16, 16});
    const auto a = sample(g, [](const Point& x) { return x[0]; });
    const std::vector<Vec> b(g.size(), Vec{1.0, 0.0, 0.0});
    try {
      discrete_stokes_check(g, a, b);
      FAIL("expected SupportTouchesBoundary");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SupportTouchesBoundary);
    }
  }
}

TEST_CASE("boundary defects") {
  const auto g = compact_box_grid({pi, pi}, {33, 33});
  const auto field = StructureField::p_laplace(2.0);
  const auto dir = make_form_pair(g, sample(g, [](const Point& x) { return std::sin(x[0]) * std::sin(x[1]); }), field);
  CHECK(boundary_defect(dir, BoundaryKind::Dirichlet) < 1e-12);
  CHECK(boundary_defect(dir, BoundaryKind::Mixed) < 1e-12);
  CHECK(boundary_defect(dir, BoundaryKind::Neumann) > 0.1);
  const auto neu = make_form_pair(g, sample(g, [](const Point& x) { return std::cos(x[0]) * std::cos(x[1]); }), field);
  CHECK(boundary_defect(neu, BoundaryKind::Neumann) < 1e-2);
  CHECK(boundary_defect(neu, BoundaryKind::Dirichlet) > 0.5);
}

TEST_CASE("A-harmonic solves") {
  SUBCASE("linear data on the square stays linear") {
    const auto g = compact_box_grid({1.0, 1.0}, {17, 17});
    std::vector<std::optional<double>> bc(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.tag(i) == NodeTag::ManifoldBoundary) bc[i] = g.coordinates(i)[0];
    const auto s = solve_A_harmonic(g, StructureField::p_laplace(2.0), bc);
    CHECK(s.gauge == "dirichlet");
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(s.f[i] - g.coordinates(i)[0]) < 1e-6);
  }
  SUBCASE("annulus with 0 inside and 1 outside gives log r / log(r2/r1)") {
    GridRequest rq;
    rq.resolution = {48, 48};
    rq.cut = 3.0;
    const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
    std::vector<std::optional<double>> bc(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = g.coordinates(i)[0];
      if (std::abs(r - 1.0) < 1e-12) bc[i] = 0.0;
      if (std::abs(r - 3.0) < 1e-12) bc[i] = 1.0;
    }
    const auto s = solve_A_harmonic(g, StructureField::p_laplace(2.0), bc);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(std::abs(s.f[i] - std::log(g.coordinates(i)[0]) / std::log(3.0)) < 0.01);
  }
  SUBCASE("a custom field has no potential to minimize") {
    const auto g = compact_box_grid({1.0, 1.0}, {9, 9});
    const auto field = StructureField::custom(2.0, 1.0, 1.0, [](std::size_t, const Vec& xi) { return xi; });
    std::vector<std::optional<double>> bc(g.size());
    CHECK_THROWS_AS(solve_A_harmonic(g, field, bc), Error);
  }
}

TEST_CASE("maximum principle") {
  const auto square = compact_box_grid({1.0, 1.0}, {25, 25});
  SUBCASE("Neumann type on the square, p = 2 and 3") {
    for (double p : {2.0, 3.0}) {
      const auto v = maximum_principle_check(square, StructureField::p_laplace(p), MaximumPrincipleKind::NeumannType);
      CHECK(v.passed);
      CHECK(v.max_theta < 1e-6);
      CHECK(v.gauge == "zero-mean");
    }
  }
  SUBCASE("Dirichlet type on the square") {
    const auto v = maximum_principle_check(square, StructureField::p_laplace(2.0), MaximumPrincipleKind::DirichletType);
    CHECK(v.passed);
    CHECK(v.max_theta < 1e-6);
  }
  SUBCASE("Neumann type on the disk, p = 4") {
    const auto disk = compact_disk_grid(1.0, 16, 32);
    const auto v = maximum_principle_check(disk, StructureField::p_laplace(4.0), MaximumPrincipleKind::NeumannType);
    CHECK(v.passed);
    CHECK(v.max_theta < 1e-5);
    // The discrete energy pairing is nonnegative and tiny.
    CHECK(v.energy_pairing >= 0.0);
    CHECK(v.energy_pairing < 1e-8);
  }
  SUBCASE("grids with a Cut are not compact") {
    GridRequest rq;
    rq.resolution = {16, 16};
    rq.cut = 2.0;
    const auto g = build_grid(ModelDomain::euclidean(2, 1.0), rq);
    CHECK_THROWS_AS(maximum_principle_check(g, StructureField::p_laplace(2.0), MaximumPrincipleKind::NeumannType), Error);
  }
}

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nlpt/capacity.hpp"
#include "nlpt/error.hpp"

using namespace nlpt;
using std::numbers::pi;

namespace {

DiscretizedDomain plate_annulus(std::size_t n, double outer = std::exp(1.0)) {
  GridRequest rq;
  rq.resolution = {n, n};
  rq.cut = outer;
  rq.face_tags[{0, false}] = NodeTag::PlateA;
  rq.face_tags[{0, true}] = NodeTag::PlateB;
  return build_grid(ModelDomain::euclidean(2, 1.0), rq);
}

}  // namespace

TEST_CASE("annulus capacity is 2 pi for p = 2") {
  const auto g = plate_annulus(64);
  const auto cap = p_capacity(Condenser::from_tags(g), 2.0);
  CHECK(cap.converged);
  CHECK(cap.value == doctest::Approx(2.0 * pi).epsilon(0.03));
  // The minimizer is close to log r.
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(cap.minimizer[i] - std::log(g.coordinates(i)[0])));
  CHECK(worst < 1e-2);
  // Energy history of the descent never increases.
  for (std::size_t k = 1; k < cap.energy_history.size(); ++k)
    CHECK(cap.energy_history[k] <= cap.energy_history[k - 1] * (1.0 + 1e-12));
}

TEST_CASE("swapping the plates leaves the capacity unchanged") {
  const auto g = plate_annulus(48);
  const auto ab = Condenser::from_tags(g);
  Condenser ba = ab;
  std::swap(ba.plate_a, ba.plate_b);
  const double v1 = p_capacity(ab, 2.0).value, v2 = p_capacity(ba, 2.0).value;
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-6));
}

TEST_CASE("shrinking the plates cannot raise the capacity") {
  const auto g = plate_annulus(48);
  const auto full = Condenser::from_tags(g);
  // Keep half of each ring.
  const auto half = Condenser::from_predicates(
      g, [&](std::size_t i) { return g.tag(i) == NodeTag::PlateA && g.coordinates(i)[1] < pi; },
      [&](std::size_t i) { return g.tag(i) == NodeTag::PlateB && g.coordinates(i)[1] < pi; });
  CHECK(p_capacity(half, 2.0).value <= p_capacity(full, 2.0).value * (1.0 + 1e-9));
}

TEST_CASE("capacity through the exhaustion") {
  const auto d = ModelDomain::euclidean(2, 1.0);
  const auto h = make_special_exhaustion(d, 2.0);
  GridRequest rq;
  rq.resolution = {96, 96};
  rq.cut = std::exp(3.0);
  const auto g = build_grid(d, rq);
  CHECK(capacity_via_exhaustion(h, g, 2.0, 0.0, 1.0) == doctest::Approx(2.0 * pi).epsilon(0.01));
  // Only the difference of levels matters.
  CHECK(capacity_via_exhaustion(h, g, 2.0, 0.5, 2.0) ==
        doctest::Approx(capacity_via_exhaustion(h, g, 2.0, 1.0, 2.5)).epsilon(1e-9));
  CHECK_THROWS_AS(capacity_via_exhaustion(h, g, 2.0, 1.0, 0.5), Error);
}

TEST_CASE("classification") {
  for (int n : {2, 3, 4})
    for (double p : {1.5, 2.0, 3.0, 4.0}) {
      const auto c = classify_type(ModelDomain::euclidean(n), p);
      CHECK((c.verdict == TypeVerdict::Parabolic) == (p >= n));
    }
  const auto parabolic = classify_type(ModelDomain::euclidean(2), 2.0);
  // J / (t - t1)^{p-1} decreases to zero along a parabolic end.
  CHECK(parabolic.capacity_sequence.back().second < 1e-3 * parabolic.capacity_sequence.front().second);
  const auto hyper = classify_type(ModelDomain::euclidean(3), 2.0);
  CHECK(hyper.capacity_sequence.back().second > 0.5 * hyper.capacity_sequence.front().second);
}

TEST_CASE("condensers with touching plates are rejected") {
  const auto g = plate_annulus(16);
  const auto bad = Condenser::from_predicates(g, [](std::size_t i) { return i < 40; }, [](std::size_t i) { return i >= 20 && i < 60; });
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("dirichlet energy of a linear field") {
  const auto g = compact_box_grid({2.0, 1.0}, {17, 9});
  const auto f = sample(g, [](const Point& x) { return 3.0 * x[0]; });
  // |grad f|^2 = 9 over area 2.
  CHECK(dirichlet_energy(g, f, 2.0) == doctest::Approx(18.0).epsilon(1e-9));
}

TEST_CASE("minimizers from two starting fields agree") {
  const auto g = plate_annulus(32);
  const auto cond = Condenser::from_tags(g);
  SolverOptions a, b;
  b.initial.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point& x = g.coordinates(i);
    b.initial[i] = 0.5 + 0.4 * std::sin(3.0 * x[1]) * std::sin(pi * (x[0] - 1.0) / (std::exp(1.0) - 1.0));
  }
  const auto ra = p_capacity(cond, 3.0, a), rb = p_capacity(cond, 3.0, b);
  CHECK(ra.value == doctest::Approx(rb.value).epsilon(1e-6));
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(ra.minimizer[i] - rb.minimizer[i]));
  CHECK(worst < 1e-4);
}

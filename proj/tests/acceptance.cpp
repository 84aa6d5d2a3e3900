// One line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "nlpt/capacity.hpp"
#include "nlpt/energy.hpp"
#include "nlpt/error.hpp"
#include "nlpt/exhaustion.hpp"
#include "nlpt/wtforms.hpp"

using namespace nlpt;
using std::numbers::pi;

namespace {

int failures = 0;

void report(int n, const char* what, bool ok, const std::string& details) {
  std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", n, what, details.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const StructureField plap2 = StructureField::p_laplace(2.0);

// Annulus 1 < r < e with the plates on the two circles.
DiscretizedDomain annulus(std::size_t n) {
  GridRequest rq;
  rq.resolution = {n, n};
  rq.cut = std::exp(1.0);
  rq.face_tags[{0, false}] = NodeTag::PlateA;
  rq.face_tags[{0, true}] = NodeTag::PlateB;
  return build_grid(ModelDomain::euclidean(2, 1.0), rq);
}

void capacity_closed_form() {
  bool ok = true;
  std::string d;
  {
    Stopwatch sw;
    const auto g = annulus(256);
    const auto cap = p_capacity(Condenser::from_tags(g), 2.0);
    const double t = sw.seconds(), rel = cap.value / (2.0 * pi) - 1.0;
    ok = ok && cap.converged && std::abs(rel) <= 0.03 && t < 60.0;
    d += fmt("p=2 cap=%.6f vs 2pi rel %+.2e in %.1fs", cap.value, rel, t);
  }
  {
    const auto g = annulus(256);
    const auto cap = p_capacity(Condenser::from_tags(g), 3.0);
    const auto h = make_special_exhaustion(ModelDomain::euclidean(2, 1.0), 3.0);
    const auto ex = capacity_via_exhaustion_detail(h, g, 3.0, h.value_at(1.0), h.value_at(std::exp(1.0)));
    const double rel = cap.value / ex.value - 1.0;
    ok = ok && cap.converged && std::abs(rel) <= 0.03;
    d += fmt("; p=3 cap=%.6f vs J/(t2-t1)^2=%.6f rel %+.2e", cap.value, ex.value, rel);
  }
  report(1, "annulus capacity against its closed form", ok, d);
}

void classification() {
  int agree = 0, total = 0;
  for (int n : {2, 3, 4})
    for (double p : {1.5, 2.0, 3.0, 4.0}) {
      ++total;
      agree += (classify_type(ModelDomain::euclidean(n), p).verdict == TypeVerdict::Parabolic) == (p >= n);
      for (int k = 1; k < n; ++k) {
        ++total;
        const auto cyl = ModelDomain::kcylinder(n, k, CrossSection::box(std::vector<double>(n - k, 1.0)));
        agree += (classify_type(cyl, p).verdict == TypeVerdict::Parabolic) == (p >= k);
      }
    }
  report(2, "type classification of Euclidean spaces and k-cylinders", agree == total,
         fmt("%d/%d agree", agree, total));
}

void catalog_verification() {
  struct Entry {
    const char* name;
    ModelDomain domain;
    double p;
    double cut;
    std::vector<std::size_t> base;
  };
  const double e = std::exp(1.0);
  const std::vector<Entry> entries{
      {"R2 p=2", ModelDomain::euclidean(2, 1.0), 2.0, e, {32, 32}},
      {"R2 p=3", ModelDomain::euclidean(2, 1.0), 3.0, e, {32, 32}},
      {"R3 p=2", ModelDomain::euclidean(3, 1.0), 2.0, e, {32, 16, 32}},
      {"R3 p=3", ModelDomain::euclidean(3, 1.0), 3.0, e, {32, 16, 32}},
      {"2-cylinder n=3 p=2", ModelDomain::kcylinder(3, 2, CrossSection::box({1.0}), 1.0), 2.0, e, {32, 32, 8}},
      {"2-cylinder n=3 p=3", ModelDomain::kcylinder(3, 2, CrossSection::box({1.0}), 1.0), 3.0, e, {32, 32, 8}},
      {"1-cylinder n=2 p=3", ModelDomain::kcylinder(2, 1, CrossSection::box({1.0}), 1.0), 3.0, 3.0, {32, 8}},
      {"cone sector p=2", ModelDomain::cone(2, AngularDomain::sector(0.0, 2.0), 1.0), 2.0, e, {32, 32}},
      {"hyperbolic plane p=2",
       ModelDomain::warped(2, AngularDomain::whole(), RadialProfile::constant(1.0), RadialProfile::sinh(1.0, 1.0), 1.0),
       2.0, 3.0, {32, 32}},
      {"R2 x interval p=2", ModelDomain::product(ModelDomain::euclidean(2, 1.0), CrossSection::box({1.0})), 2.0, e,
       {32, 32, 8}},
  };
  bool ok = true;
  std::string d;
  for (const auto& entry : entries) {
    const auto h = make_special_exhaustion(entry.domain, entry.p);
    std::vector<double> res;
    double spread = 0.0, scale = 0.0;
    for (int level = 0; level < 3; ++level) {
      GridRequest rq;
      rq.cut = entry.cut;
      rq.resolution = entry.base;
      for (auto& r : rq.resolution) r <<= level;
      const auto g = build_grid(entry.domain, rq);
      res.push_back(residual_summary(h, g, entry.p).max_abs);
      if (level == 2) {
        spread = verify_exhaustion(h, g, entry.p).flux_relative_spread;
        scale = std::pow(std::abs(h.slope_at(entry.domain.r1)), entry.p - 1.0);
      }
    }
    // Entries the stencil reproduces exactly have nothing left to converge.
    const bool exact = res.back() < 1e-10 * std::max(1.0, scale);
    const double r1 = res[0] / res[1], r2 = res[1] / res[2];
    const bool good = (exact || (r1 >= 3.0 && r2 >= 3.0)) && spread < 0.01;
    ok = ok && good;
    if (!d.empty()) d += "; ";
    d += exact ? fmt("%s [%s] exact (%.1e) spread %.1e", entry.name, to_string(h.family()), res.back(), spread)
               : fmt("%s [%s] ratios %.2f %.2f spread %.1e", entry.name, to_string(h.family()), r1, r2, spread);
  }
  report(3, "special exhaustion residual order and flux spread", ok, d);
}

// R x (0, pi) truncated at |x1| = 3.5 with h = |x1| and f = sinh x1 sin x2.
struct Strip {
  DiscretizedDomain grid;
  std::vector<double> h;
  ScalarFormPair pair;
};

Strip strip_oracle() {
  auto g = cartesian_grid({-3.5, 0.0}, {3.5, pi}, {257, 65},
                          {{Face{0, false}, NodeTag::Cut}, {Face{0, true}, NodeTag::Cut}});
  auto h = sample(g, [](const Point& x) { return std::abs(x[0]); });
  auto f = sample(g, [](const Point& x) { return std::sinh(x[0]) * std::sin(x[1]); });
  Strip s{std::move(g), std::move(h), {}};
  s.pair = make_form_pair(s.grid, std::move(f), plap2);
  return s;
}

void strip_growth() {
  Stopwatch sw;
  const auto s = strip_oracle();
  std::vector<double> taus;
  for (int k = 0; k < 20; ++k) taus.push_back(0.5 + 2.5 * k / 19.0);
  const auto r = growth_verifier(s.pair, s.h, 2.0, 1.0, taus);
  const auto& c = r.curve;
  double worst_I = 0.0, worst_eps = 0.0, worst_id = 0.0, worst_dip = 0.0, worst_int = 0.0, top = 0.0;
  for (std::size_t i = 0; i < c.tau.size(); ++i) {
    worst_I = std::max(worst_I, std::abs(c.I[i] / (pi / 2.0 * std::sinh(2.0 * c.tau[i])) - 1.0));
    worst_eps = std::max(worst_eps, std::abs(c.eps[i] * std::tanh(2.0 * c.tau[i]) / 2.0 - 1.0));
    worst_id = std::max(worst_id, std::abs(c.dI[i] / (c.eps[i] * c.I[i]) - 1.0));
    top = std::max(top, c.monotone[i]);
    worst_dip = std::max(worst_dip, 1.0 - c.monotone[i] / top);
    for (std::size_t j = i + 1; j < c.tau.size(); ++j) {
      const double bound = c.I[j] * std::exp(-(c.eps_integral[j] - c.eps_integral[i]));
      worst_int = std::max(worst_int, c.I[i] / bound - 1.0);
    }
  }
  const double t = sw.seconds();
  const bool ok = worst_I <= 0.02 && worst_eps <= 0.02 && worst_id <= 0.03 && worst_dip <= 0.03 &&
                  worst_int <= 0.03 && r.passed() && t < 30.0;
  report(4, "strip growth oracle", ok,
         fmt("I %.2e, eps %.2e, dI=eps I %.2e, monotone dip %.2e, integrated excess %+.2e over %zu taus in %.1fs",
             worst_I, worst_eps, worst_id, worst_dip, worst_int, c.tau.size(), t));
}

void band_bounds() {
  const auto s = strip_oracle();
  bool ok = true;
  std::string d;
  for (auto [t1, t2] : {std::pair{1.0, 2.0}, std::pair{0.5, 3.0}}) {
    const auto r = annulus_bound_check(s.pair, s.h, 2.0, 1.0, 1.0, t1, t2);
    ok = ok && r.flux_bound.holds && r.trace_bound.holds && r.flux_bound.slack >= 0.0 && r.trace_bound.slack >= 0.0;
    if (!d.empty()) d += "; ";
    d += fmt("(%g,%g) c=%g%s flux slack %.3e trace slack %.3e", t1, t2, r.flux_bound.c,
             r.constants_admissible ? "" : " (constants inadmissible)", r.flux_bound.slack, r.trace_bound.slack);
  }
  report(5, "annulus-band bounds on the strip", ok, d);
}

void maximum_principle() {
  bool ok = true;
  std::string d;
  const auto square = compact_box_grid({1.0, 1.0}, {25, 25});
  const auto disk = compact_disk_grid(1.0, 16, 32);
  for (const auto& [name, grid] : {std::pair{"square", &square}, std::pair{"disk", &disk}})
    for (double p : {2.0, 3.0}) {
      const auto v = maximum_principle_check(*grid, StructureField::p_laplace(p), MaximumPrincipleKind::NeumannType);
      ok = ok && v.oscillation < 1e-6 && v.max_theta < 1e-5;
      if (!d.empty()) d += "; ";
      d += fmt("%s p=%g osc %.1e max|theta| %.1e", name, p, v.oscillation, v.max_theta);
    }
  report(6, "zero-Neumann A-harmonic fields are constant", ok, d);
}

void wt_chain() {
  const auto g = compact_box_grid({1.0, 1.0}, {33, 33});
  bool ok = true;
  std::string d;
  for (double p : {2.0, 3.0})
    for (const auto& field : {StructureField::p_laplace(p), StructureField::anisotropic_diagonal(p, {1.0, 2.0})}) {
      const double nu0 = wt2_implies_wt1_constant(field.nu1(), field.nu2(), p);
      std::mt19937_64 rng(20240 + static_cast<int>(p));
      int wt2 = 0, broken = 0;
      for (int k = 0; k < 100; ++k) {
        const auto pair = random_form_pair(g, field, rng);
        if (!check_wt2(pair, field.nu1(), field.nu2(), p).passed) continue;
        ++wt2;
        broken += !check_wt1(pair, nu0, p).passed;
      }
      ok = ok && broken == 0 && wt2 > 0;
      if (!d.empty()) d += "; ";
      d += fmt("%s p=%g: %d/100 in WT2, %d chain failures", to_string(field.preset()), p, wt2, broken);
    }
  report(7, "WT2 implies WT1 with nu0 = nu1 nu2^-q", ok, d);
}

void n_mean_calculus() {
  int instances = 0, broken = 0;
  auto check = [&](bool holds) {
    ++instances;
    broken += !holds;
  };

  // Annulus sectors with h = log r.
  GridRequest rq;
  rq.resolution = {64, 128};
  rq.cut = std::exp(3.0);
  const auto ann = build_grid(ModelDomain::euclidean(2, 1.0), rq);
  const auto log_r = sample(ann, [](const Point& x) { return std::log(x[0]); });
  std::vector<Partition> halves, thirds;
  for (std::size_t c = 16; c <= 112; c += 16) halves.push_back(sector_partition(ann, plap2, {0, c}));
  for (std::size_t c = 32; c <= 64; c += 16) thirds.push_back(sector_partition(ann, plap2, {0, c, c + 32}));
  for (double t : {1.0, 1.5, 2.0, 2.5}) {
    // Nested sectors: the smaller domain's forms extend by zero into the larger one.
    for (std::size_t inner : {16u, 32u, 48u}) {
      const auto d1 = sector_partition(ann, plap2, {0, inner, 64}).parts[0];
      const auto d2 = sector_partition(ann, plap2, {0, 64}).parts[0];
      auto shared = d1.family;
      shared.insert(shared.end(), d2.family.begin(), d2.family.end());
      const double e1 = epsilon_estimate(ann, log_r, t, 2.0, BoundaryKind::Dirichlet, d1.family, d1.mask).value;
      const double e2 = epsilon_estimate(ann, log_r, t, 2.0, BoundaryKind::Dirichlet, shared, d2.mask).value;
      check(e2 <= e1);
    }
    const double e3 = n_mean(ann, log_r, t, 3, thirds, 2.0).value;
    const double e2 = n_mean(ann, log_r, t, 2, halves, 2.0).value;
    check(n_mean(ann, log_r, t, 2, leave_one_out(thirds), 2.0).value <= e3);
    check(n_mean(ann, log_r, t, 1, leave_one_out(halves), 2.0).value <= e2);
  }

  // Slabs of a width-2pi strip with h = |x1|.
  const auto st = cartesian_grid({-3.5, 0.0}, {3.5, 2.0 * pi}, {128, 65},
                                 {{Face{0, false}, NodeTag::Cut}, {Face{0, true}, NodeTag::Cut}});
  const auto h = sample(st, [](const Point& x) { return std::abs(x[0]); });
  std::vector<Partition> slabs2, slabs3;
  for (std::size_t c : {24u, 32u, 40u}) slabs2.push_back(slab_partition(st, plap2, 1, {0, c}));
  for (std::size_t c : {16u, 21u}) slabs3.push_back(slab_partition(st, plap2, 1, {0, c, 2 * c}));
  for (double t : {1.0, 2.0, 3.0}) {
    for (std::size_t inner : {16u, 24u}) {
      const auto d1 = slab_partition(st, plap2, 1, {0, inner, 40}).parts[0];
      const auto d2 = slab_partition(st, plap2, 1, {0, 40}).parts[0];
      auto shared = d1.family;
      shared.insert(shared.end(), d2.family.begin(), d2.family.end());
      const double e1 = epsilon_estimate(st, h, t, 2.0, BoundaryKind::Dirichlet, d1.family, d1.mask).value;
      const double e2 = epsilon_estimate(st, h, t, 2.0, BoundaryKind::Dirichlet, shared, d2.mask).value;
      check(e2 <= e1);
    }
    check(n_mean(st, h, t, 2, leave_one_out(slabs3), 2.0).value <= n_mean(st, h, t, 3, slabs3, 2.0).value);
    check(n_mean(st, h, t, 1, leave_one_out(slabs2), 2.0).value <= n_mean(st, h, t, 2, slabs2, 2.0).value);
  }

  // Ahlfors runs: L half-strips of width pi in a strip of width L pi.
  int runs = 0, am_gm_broken = 0;
  for (int L : {2, 3}) {
    const double width = L * pi;
    const std::size_t ny = 64 * L + 1;
    const auto g = cartesian_grid({-3.5, 0.0}, {3.5, width}, {192, ny},
                                  {{Face{0, false}, NodeTag::Cut}, {Face{0, true}, NodeTag::Cut}});
    const auto hg = sample(g, [](const Point& x) { return std::abs(x[0]); });
    std::vector<std::size_t> cuts;
    for (int k = 0; k < L; ++k) cuts.push_back(1 + 64 * k);
    const auto masks = column_masks(g, 1, cuts);
    TractFamily tracts;
    for (int k = 0; k < L; ++k) {
      NodeMask m = masks[k];
      std::vector<double> f(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.tag(i) == NodeTag::ManifoldBoundary) m[i] = 0;
        if (m[i]) f[i] = std::sinh(g.coordinates(i)[0]) * std::sin(g.coordinates(i)[1] - k * pi);
      }
      tracts.members.push_back({m, make_form_pair(g, f, plap2)});
    }
    std::vector<Partition> parts;
    for (std::size_t shift : {0u, 8u}) {
      std::vector<std::size_t> c;
      for (int k = 0; k < L; ++k) c.push_back(64 * k + shift);
      parts.push_back(slab_partition(g, plap2, 1, c));
    }
    std::vector<double> window;
    for (int j = 1; j <= 8; ++j) window.push_back(0.5 + 0.3 * j);
    const auto r = ahlfors_count_bound(tracts, g, hg, 2.0, 1.0, 1.0, L, 0.5, window, parts);
    ++runs;
    bool holds = r.am_gm_holds;
    for (std::size_t j = 0; j < r.tau.size(); ++j) holds = holds && r.am_gm_mean[j] >= r.am_gm_geometric[j];
    am_gm_broken += !holds;
  }
  report(8, "N-mean monotonicity and the AM-GM chain", broken == 0 && instances >= 20 && am_gm_broken == 0,
         fmt("%d/%d monotonicity instances hold; AM-GM holds on %d/%d Ahlfors runs", instances - broken, instances,
             runs - am_gm_broken, runs));
}

void stokes_order() {
  const auto ring = [](double r) {
    const double u = (r - 2.0) / 0.6;
    return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
  };
  std::vector<double> defects;
  for (std::size_t n : {32u, 64u, 128u}) {
    GridRequest rq;
    rq.resolution = {n, 2 * n};
    rq.cut = 3.0;
    const auto g = build_grid(
        ModelDomain::warped(2, AngularDomain::whole(), RadialProfile::constant(1.0), RadialProfile::sinh(1.0, 1.0), 1.0),
        rq);
    std::vector<double> a(g.size());
    std::vector<Vec> b(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = g.coordinates(i)[0], t = g.coordinates(i)[1], w = ring(r);
      a[i] = r * std::cos(t);
      b[i] = {w * (std::cos(t) + 0.5 * std::sin(t)), w * (0.5 * std::cos(t) - std::sin(t)), 0.0};
    }
    defects.push_back(discrete_stokes_check(g, a, b));
  }
  const double o1 = std::log2(defects[0] / defects[1]), o2 = std::log2(defects[1] / defects[2]);
  // Second order: at least a factor 3 per doubling, as for the residuals.
  const bool ok = defects[0] / defects[1] >= 3.0 && defects[1] / defects[2] >= 3.0;
  report(9, "discrete Stokes defect on the hyperbolic plane", ok,
         fmt("defects %.2e %.2e %.2e, observed orders %.2f %.2f", defects[0], defects[1], defects[2], o1, o2));
}

}  // namespace

int main() {
  const std::vector<void (*)()> criteria{capacity_closed_form, classification, catalog_verification,
                                         strip_growth,        band_bounds,    maximum_principle,
                                         wt_chain,            n_mean_calculus, stokes_order};
  int n = 0;
  for (auto run : criteria) {
    ++n;
    try {
      run();
    } catch (const std::exception& e) {
      report(n, "criterion raised", false, e.what());
    }
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

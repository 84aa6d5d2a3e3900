#include "nlpt/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nlpt/error.hpp"

namespace nlpt {

const char* to_string(EpsilonTag tag) noexcept {
  return tag == EpsilonTag::PerForm ? "PerForm" : "FamilyUpperBound";
}

const char* to_string(Alternative a) noexcept {
  switch (a) {
    case Alternative::TrivialForm: return "TrivialForm";
    case Alternative::GrowthA: return "GrowthA";
    case Alternative::GrowthB: return "GrowthB";
    case Alternative::GrowthC: return "GrowthC";
    case Alternative::Undetermined: return "Undetermined";
  }
  return "?";
}

const char* to_string(AhlforsVerdict v) noexcept {
  return v == AhlforsVerdict::BoundAsserted ? "BoundAsserted" : "Inconclusive";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDecay = 1e-2;  // window proxy of "tends to zero"

double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void require_grid(const ScalarFormPair& pair, std::span<const double> h) {
  if (!pair.grid) throw Error(ErrorCode::InvalidDomain, "form pair has no grid");
  if (h.size() != pair.grid->size() || pair.f.size() != pair.grid->size())
    throw Error(ErrorCode::InvalidDomain, "fields do not match the grid");
}

double h_min(std::span<const double> h) { return *std::min_element(h.begin(), h.end()); }

void require_level(const DiscretizedDomain& grid, std::span<const double> h, double tau) {
  const double top = level_window(grid, h);
  if (!(tau > 0.0 && tau < top))
    throw Error(ErrorCode::LevelOutOfRange,
                "tau = " + std::to_string(tau) + " outside (0, " + std::to_string(top) + ")");
}

std::vector<double> power_of_gradient(const ScalarFormPair& pair) {
  std::vector<double> g(pair.w.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(norm(pair.w[i]), pair.p);
  return g;
}

std::vector<double> gradient_magnitude(const DiscretizedDomain& grid, std::span<const double> h) {
  const auto g = gradient(grid, h);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = norm(g[i]);
  return out;
}

// Per-node weight factor of a masked shell: 1 inside the mask, 1/2 on its rim
// (neighbors of the mask), 0 elsewhere.
std::vector<double> rim_factors(const DiscretizedDomain& grid, const NodeMask& mask) {
  std::vector<double> f(grid.size(), 1.0);
  if (mask.empty()) return f;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (mask[i]) continue;
    f[i] = 0.0;
    for (int a = 0; a < grid.dim() && f[i] == 0.0; ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid.neighbor(i, a, dir);
        if (j != kNoNode && mask[j]) {
          f[i] = 0.5;
          break;
        }
      }
  }
  return f;
}

struct ShellSums {
  double numerator = 0.0;
  double denominator = 0.0;
  double magnitude = 0.0;  // integral of |f||theta|, the scale of the denominator
};

ShellSums shell_sums(const ScalarFormPair& pair, std::span<const double> h, double tau, const NodeMask& mask) {
  const DiscretizedDomain& grid = *pair.grid;
  const auto shell = level_shell(grid, h, tau);
  const auto G = power_of_gradient(pair);
  const auto factor = rim_factors(grid, mask);
  ShellSums s;
  for (const auto& sp : shell.points) {
    const double fi = factor[sp.from], fj = factor[sp.to];
    if (fi == 0.0 || fj == 0.0) continue;
    const double mag = norm(sp.grad_h);
    if (mag == 0.0 || sp.weight == 0.0) continue;
    const double w = sp.weight * 0.5 * (fi + fj);
    const double f = shell.interpolate(pair.f, sp);
    Vec theta{};
    for (int a = 0; a < 3; ++a) theta[a] = pair.theta[sp.from][a] + sp.frac * (pair.theta[sp.to][a] - pair.theta[sp.from][a]);
    s.numerator += w * shell.interpolate(G, sp) / mag;
    s.denominator += w * f * dot(theta, sp.grad_h) / mag;
    s.magnitude += w * std::abs(f) * norm(theta);
  }
  return s;
}

bool is_subset(const NodeMask& inner, const NodeMask& outer) {
  if (outer.empty()) return true;
  if (inner.empty()) return false;
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i] && !outer[i]) return false;
  return true;
}

bool reaches_cut(const DiscretizedDomain& grid, const NodeMask& mask) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(mask.empty() || mask[i])) continue;
    if (grid.tag(i) == NodeTag::Cut) return true;
    for (int a = 0; a < grid.dim(); ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid.neighbor(i, a, dir);
        if (j != kNoNode && grid.tag(j) == NodeTag::Cut) return true;
      }
  }
  return false;
}

// Derivative of the Lagrange interpolant through up to five neighboring
// samples: central in the interior, one-sided at the ends.
std::vector<double> differentiate(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::size_t width = std::min<std::size_t>(5, n);
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = std::min(i >= width / 2 ? i - width / 2 : 0, n - width);
    double sum = 0.0;
    for (std::size_t j = lo; j < lo + width; ++j) {
      double weight;
      if (j == i) {
        weight = 0.0;
        for (std::size_t m = lo; m < lo + width; ++m)
          if (m != i) weight += 1.0 / (x[i] - x[m]);
      } else {
        double num = 1.0, den = 1.0;
        for (std::size_t m = lo; m < lo + width; ++m) {
          if (m != j) den *= x[j] - x[m];
          if (m != j && m != i) num *= x[i] - x[m];
        }
        weight = num / den;
      }
      sum += weight * y[j];
    }
    d[i] = sum;
  }
  return d;
}

// Cumulative Simpson integral from x[0] with a supplied midpoint value per interval.
std::vector<double> cumulative_simpson(std::span<const double> x, std::span<const double> y,
                                       std::span<const double> mid) {
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    out[i + 1] = out[i] + (x[i + 1] - x[i]) / 6.0 * (y[i] + 4.0 * mid[i] + y[i + 1]);
  return out;
}

std::vector<double> midpoints(std::span<const double> x) {
  std::vector<double> m;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) m.push_back(0.5 * (x[i] + x[i + 1]));
  return m;
}

void require_increasing(std::span<const double> taus) {
  for (std::size_t i = 0; i + 1 < taus.size(); ++i)
    if (!(taus[i + 1] > taus[i])) throw Error(ErrorCode::LevelOutOfRange, "tau samples must increase");
}

// Band integral of |grad h|^k |f - c|^e |theta|^t with the best admissible c.
struct ConstantSearch {
  double c = 0.0;
  double value = 0.0;
  double at_zero = 0.0;
};

template <class Fn>
ConstantSearch best_constant(double lo, double hi, bool admissible, Fn&& value_at) {
  ConstantSearch r;
  r.at_zero = value_at(0.0);
  r.value = r.at_zero;
  if (!admissible || !(hi > lo)) return r;
  // Golden-section search; the band integral is convex in c.
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = value_at(x1), f2 = value_at(x2);
  for (int it = 0; it < 80 && b - a > 1e-12 * std::max(1.0, std::abs(hi - lo)); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = value_at(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = value_at(x2);
    }
  }
  const double c = f1 <= f2 ? x1 : x2;
  const double v = std::min(f1, f2);
  if (v < r.value) {
    r.c = c;
    r.value = v;
  }
  return r;
}

// Relative defect of the Stokes formula for a constant form on B_h(tau2): it
// holds for every test function exactly when div theta = 0 inside and
// <theta, nu> = 0 on the manifold boundary there.
double constant_form_defect(const ScalarFormPair& pair, std::span<const double> h, double tau2) {
  const DiscretizedDomain& grid = *pair.grid;
  const auto div = divergence(grid, pair.theta);
  double interior = 0.0, wall = 0.0, wall_scale = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(h[i] < tau2)) continue;
    if (grid.tag(i) == NodeTag::ManifoldBoundary) {
      wall += grid.volume_weight(i) * boundary_normal_component(grid, i, pair.theta[i]);
      wall_scale += grid.volume_weight(i) * norm(pair.theta[i]);
    }
    if (!has_full_stencil(grid, i)) continue;
    double scale = 0.0;
    for (int a = 0; a < grid.dim(); ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid.neighbor(i, a, dir);
        scale += std::abs(pair.theta[j][a]) / (grid.axis(a).step() * grid.scales(i)[a]);
      }
    if (scale > 0.0) interior = std::max(interior, std::abs(div[i]) / scale);
  }
  return std::max(interior, wall_scale > 0.0 ? wall / wall_scale : 0.0);
}

double band_integral(const ScalarFormPair& pair, std::span<const double> h, std::span<const double> gh, double c,
                     bool trace, double t1, double t2) {
  const std::size_t n = pair.f.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(pair.f[i] - c);
    q[i] = trace ? std::pow(gh[i] * d, pair.p) : gh[i] * d * norm(pair.theta[i]);
  }
  return coarea_integral(*pair.grid, h, q, t1, t2);
}

std::pair<double, double> value_range(std::span<const double> v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

double level_window(const DiscretizedDomain& grid, std::span<const double> h) {
  // Cut nodes at the bottom of h bound the compact core, not the window.
  const double floor = h_min(h);
  const double slack = 1e-12 * (1.0 + std::abs(floor));
  double top = kInf;
  bool any_cut = false;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid.tag(i) == NodeTag::Cut && h[i] > floor + slack) {
      top = std::min(top, h[i]);
      any_cut = true;
    }
  if (!any_cut) top = *std::max_element(h.begin(), h.end());
  return top;
}

EnergyIntegral energy_integral_detail(const ScalarFormPair& pair, std::span<const double> h, double tau) {
  require_grid(pair, h);
  require_level(*pair.grid, h, tau);
  const auto G = power_of_gradient(pair);
  const double lo = h_min(h) - 1.0;
  EnergyIntegral r;
  r.value = coarea_integral(*pair.grid, h, G, lo, tau);
  r.volume_check = band_volume_integral(*pair.grid, h, G, lo, tau);
  const double scale = std::max(std::abs(r.value), std::abs(r.volume_check));
  r.relative_gap = scale > 0.0 ? std::abs(r.value - r.volume_check) / scale : 0.0;
  return r;
}

double energy_integral(const ScalarFormPair& pair, std::span<const double> h, double tau) {
  return energy_integral_detail(pair, h, tau).value;
}

EpsilonValue epsilon_for_form(const ScalarFormPair& pair, std::span<const double> h, double tau, const NodeMask& mask) {
  require_grid(pair, h);
  require_level(*pair.grid, h, tau);
  const auto s = shell_sums(pair, h, tau, mask);
  if (s.magnitude == 0.0 || std::abs(s.denominator) <= 1e-12 * s.magnitude)
    throw Error(ErrorCode::ZeroDenominator, "the shell pairing of f with the flux vanishes at tau = " + std::to_string(tau));
  EpsilonValue v;
  v.numerator = s.numerator;
  v.denominator = std::abs(s.denominator);
  v.value = v.numerator / v.denominator;
  return v;
}

double support_defect(const ScalarFormPair& pair, const NodeMask& support) {
  if (support.empty()) return 0.0;
  const DiscretizedDomain& grid = *pair.grid;
  double inside = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (support[i]) {
      inside = std::max(inside, std::abs(pair.f[i]));
    } else {
      outside = std::max(outside, std::abs(pair.f[i]));
    }
  }
  return inside > 0.0 ? outside / inside : 0.0;
}

EpsilonEstimate epsilon_estimate(const DiscretizedDomain& grid, std::span<const double> h, double tau, double p,
                                 BoundaryKind bc, std::span<const TestField> family, const NodeMask& domain,
                                 double boundary_tolerance) {
  if (family.empty()) throw Error(ErrorCode::EmptyFamily, "the test family is empty");
  EpsilonEstimate est;
  est.value = kInf;
  for (std::size_t k = 0; k < family.size(); ++k) {
    const TestField& m = family[k];
    if (m.pair.grid != &grid) throw Error(ErrorCode::InvalidDomain, "test form lives on another grid");
    if (m.pair.p != p) throw Error(ErrorCode::InvalidDomain, "test form has a different exponent");
    const NodeMask& support = m.support.empty() ? domain : m.support;
    if (!is_subset(support, domain))
      throw Error(ErrorCode::InvalidDomain, "test form " + std::to_string(k) + " is not supported in the subdomain");
    const double bd = boundary_defect(m.pair, bc);
    const double sd = support_defect(m.pair, support);
    if (bd > boundary_tolerance || sd > boundary_tolerance)
      throw Error(ErrorCode::BoundaryConditionViolated,
                  "test form " + std::to_string(k) + " violates the " + to_string(bc) + " condition (defect " +
                      std::to_string(std::max(bd, sd)) + ")");
    try {
      const double v = epsilon_for_form(m.pair, h, tau, support).value;
      est.members.push_back(v);
      if (v < est.value) {
        est.value = v;
        est.argmin = k;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroDenominator) throw;
      est.members.push_back(kNaN);
    }
  }
  if (!std::isfinite(est.value))
    throw Error(ErrorCode::AllDenominatorsZero, "every test form has a vanishing shell pairing");
  return est;
}

namespace {

struct Sampled {
  std::vector<double> I, eps, eps_mid, eps_integral;
};

Sampled sample_curve(const ScalarFormPair& pair, std::span<const double> h, std::span<const double> taus,
                     const NodeMask& mask = {}) {
  Sampled s;
  for (double t : taus) {
    s.I.push_back(energy_integral(pair, h, t));
    s.eps.push_back(epsilon_for_form(pair, h, t, mask).value);
  }
  for (double t : midpoints(taus)) s.eps_mid.push_back(epsilon_for_form(pair, h, t, mask).value);
  s.eps_integral = cumulative_simpson(taus, s.eps, s.eps_mid);
  return s;
}

double max_gradient(const ScalarFormPair& pair) {
  double m = 0.0;
  for (const Vec& v : pair.w) m = std::max(m, norm(v));
  return m;
}

}  // namespace

GrowthReport growth_verifier(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                             std::span<const double> taus, const GrowthOptions& options) {
  require_grid(pair, h);
  if (pair.p != p) throw Error(ErrorCode::InvalidDomain, "the pair was built for a different exponent");
  if (taus.size() < 2) throw Error(ErrorCode::WindowTooShort, "need at least two tau samples");
  require_increasing(taus);
  for (double t : taus) require_level(*pair.grid, h, t);

  GrowthReport r;
  r.p = p;
  r.nu1 = nu1;
  r.truncation = level_window(*pair.grid, h);
  r.boundary = options.boundary;
  r.tolerance = options.tolerance;
  r.boundary_defect = boundary_defect(pair, options.boundary);
  if (r.boundary_defect > options.boundary_tolerance)
    throw Error(ErrorCode::BoundaryConditionViolated,
                std::string(to_string(options.boundary)) + " defect " + std::to_string(r.boundary_defect) +
                    " exceeds " + std::to_string(options.boundary_tolerance));

  EnergyCurve& c = r.curve;
  c.tau.assign(taus.begin(), taus.end());
  if (max_gradient(pair) == 0.0) {
    r.degenerate = true;
    c.I.assign(taus.size(), 0.0);
    c.dI.assign(taus.size(), 0.0);
    c.eps.assign(taus.size(), kNaN);
    c.eps_tag.assign(taus.size(), EpsilonTag::PerForm);
    c.eps_integral.assign(taus.size(), kNaN);
    c.monotone.assign(taus.size(), 0.0);
    r.differential_ok = r.monotone_ok = r.integrated_ok = true;
    return r;
  }

  auto s = sample_curve(pair, h, taus);
  c.I = s.I;
  c.dI = differentiate(taus, c.I);
  c.eps = s.eps;
  c.eps_tag.assign(taus.size(), EpsilonTag::PerForm);
  c.eps_integral = s.eps_integral;
  for (std::size_t j = 0; j < taus.size(); ++j) c.monotone.push_back(c.I[j] * std::exp(-nu1 * c.eps_integral[j]));

  r.differential_margin = kInf;
  double running = 0.0;
  for (std::size_t j = 0; j < taus.size(); ++j) {
    const double rhs = nu1 * c.eps[j] * c.I[j];
    if (rhs > 0.0) r.differential_margin = std::min(r.differential_margin, (c.dI[j] - rhs) / rhs);
    running = std::max(running, c.monotone[j]);
    if (running > 0.0) r.monotone_dip = std::max(r.monotone_dip, (running - c.monotone[j]) / running);
    for (std::size_t k = j + 1; k < taus.size(); ++k) {
      const double bound = c.I[k] * std::exp(-nu1 * (c.eps_integral[k] - c.eps_integral[j]));
      if (bound > 0.0) r.integrated_excess = std::max(r.integrated_excess, c.I[j] / bound - 1.0);
    }
  }
  if (!std::isfinite(r.differential_margin)) r.differential_margin = 0.0;
  r.differential_ok = r.differential_margin >= -options.tolerance;
  r.monotone_ok = r.monotone_dip <= options.tolerance;
  r.integrated_ok = r.integrated_excess <= options.tolerance;
  return r;
}

AnnulusBoundReport annulus_bound_check(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                                       double nu2, double tau1, double tau2, double admissibility_tolerance) {
  require_grid(pair, h);
  if (!(tau1 < tau2)) throw Error(ErrorCode::LevelOutOfRange, "need tau1 < tau2");
  require_level(*pair.grid, h, tau1);
  require_level(*pair.grid, h, tau2);
  AnnulusBoundReport r;
  r.tau1 = tau1;
  r.tau2 = tau2;
  r.I1 = energy_integral(pair, h, tau1);
  r.constant_defect = constant_form_defect(pair, h, tau2);
  r.constants_admissible = r.constant_defect <= admissibility_tolerance;

  const auto gh = gradient_magnitude(*pair.grid, h);
  const auto [lo, hi] = value_range(pair.f);
  const double width = tau2 - tau1;

  const double k41 = p / width;
  auto flux = best_constant(lo, hi, r.constants_admissible,
                            [&](double c) { return k41 * band_integral(pair, h, gh, c, false, tau1, tau2); });
  r.flux_bound.c = flux.c;
  r.flux_bound.lhs = nu1 * r.I1;
  r.flux_bound.rhs = flux.value;
  r.flux_bound.rhs_at_zero = flux.at_zero;

  const double k43 = std::pow(p * nu2 / (width * nu1), p);
  auto trace = best_constant(lo, hi, r.constants_admissible,
                             [&](double c) { return k43 * band_integral(pair, h, gh, c, true, tau1, tau2); });
  r.trace_bound.c = trace.c;
  r.trace_bound.lhs = r.I1;
  r.trace_bound.rhs = trace.value;
  r.trace_bound.rhs_at_zero = trace.at_zero;

  for (BandBound* b : {&r.flux_bound, &r.trace_bound}) {
    b->slack = b->rhs - b->lhs;
    b->holds = b->slack >= 0.0;
  }
  return r;
}

AlternativeReport pl_alternative_check(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                                       double nu2, double tau0, double tau_max, std::size_t samples) {
  require_grid(pair, h);
  if (samples < 3 || !(tau_max > tau0))
    throw Error(ErrorCode::WindowTooShort, "the tau window needs at least three samples");
  AlternativeReport r;
  for (std::size_t j = 0; j < samples; ++j)
    r.tau.push_back(tau0 + (tau_max - tau0) * static_cast<double>(j) / static_cast<double>(samples - 1));
  for (double t : r.tau) require_level(*pair.grid, h, t);
  if (max_gradient(pair) == 0.0) {
    r.alternative = Alternative::TrivialForm;
    r.extrapolated = false;
    return r;
  }

  const auto s = sample_curve(pair, h, r.tau);
  const double tol = 0.03;
  const auto gh = gradient_magnitude(*pair.grid, h);
  const auto [lo, hi] = value_range(pair.f);
  r.bound_a = s.I.front();
  r.bound_b = nu1 * s.I.front() / p;
  r.bound_c = s.I.front() / std::pow(p * nu2 / nu1, p);
  for (std::size_t j = 0; j < r.tau.size(); ++j) {
    const double damp = std::exp(-nu1 * s.eps_integral[j]);
    r.proxy_a.push_back(s.I[j] * damp);
    const double t = r.tau[j];
    if (t + 1.0 > tau_max + 1e-12) continue;
    const bool admissible = constant_form_defect(pair, h, t + 1.0) <= 1e-2;
    const auto mu = best_constant(lo, hi, admissible, [&](double c) { return band_integral(pair, h, gh, c, false, t, t + 1.0); });
    const auto m = best_constant(lo, hi, admissible, [&](double c) { return band_integral(pair, h, gh, c, true, t, t + 1.0); });
    r.proxy_b.push_back(mu.value * damp);
    r.proxy_c.push_back(m.value * damp);
  }
  auto tail_min = [](const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    const std::size_t from = v.size() - std::max<std::size_t>(1, v.size() / 3);
    return *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(from), v.end());
  };
  r.liminf_a = tail_min(r.proxy_a);
  r.liminf_b = tail_min(r.proxy_b);
  r.liminf_c = tail_min(r.proxy_c);
  r.a = r.liminf_a >= r.bound_a * (1.0 - tol);
  r.b = std::isfinite(r.liminf_b) && r.liminf_b >= r.bound_b * (1.0 - tol);
  r.c = std::isfinite(r.liminf_c) && r.liminf_c >= r.bound_c * (1.0 - tol);
  r.alternative = r.a ? Alternative::GrowthA : r.b ? Alternative::GrowthB : r.c ? Alternative::GrowthC
                                                                                : Alternative::Undetermined;
  return r;
}

NMeanResult n_mean(const DiscretizedDomain& grid, std::span<const double> h, double t, std::size_t N,
                   std::span<const Partition> family, double p, BoundaryKind bc) {
  if (N < 1) throw Error(ErrorCode::InvalidDomain, "N must be at least 1");
  if (family.empty()) throw Error(ErrorCode::EmptyFamily, "no partitions to minimize over");
  NMeanResult r;
  r.value = kInf;
  for (std::size_t k = 0; k < family.size(); ++k) {
    const Partition& part = family[k];
    if (part.parts.size() != N)
      throw Error(ErrorCode::InvalidDomain, "partition " + part.label + " does not have N parts");
    std::vector<std::uint8_t> used(grid.size(), 0);
    for (const auto& d : part.parts) {
      if (d.mask.size() != grid.size()) throw Error(ErrorCode::InvalidDomain, "part mask does not match the grid");
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (d.mask[i]) {
          if (used[i]) throw Error(ErrorCode::InvalidDomain, "parts of " + part.label + " intersect");
          used[i] = 1;
        }
      if (!reaches_cut(grid, d.mask))
        throw Error(ErrorCode::InvalidDomain, "a part of " + part.label + " has compact closure");
    }
    std::vector<double> eps;
    double sum = 0.0;
    for (const auto& d : part.parts) {
      eps.push_back(epsilon_estimate(grid, h, t, p, bc, d.family, d.mask).value);
      sum += eps.back();
    }
    const double mean = sum / static_cast<double>(N);
    r.means.push_back(mean);
    r.part_eps.push_back(std::move(eps));
    if (mean < r.value) {
      r.value = mean;
      r.argmin = k;
    }
  }
  return r;
}

std::vector<Partition> leave_one_out(std::span<const Partition> family) {
  std::vector<Partition> out;
  for (const auto& part : family)
    for (std::size_t k = 0; k < part.parts.size(); ++k) {
      Partition q;
      q.label = part.label + "/drop" + std::to_string(k);
      q.parameter = part.parameter;
      for (std::size_t j = 0; j < part.parts.size(); ++j)
        if (j != k) q.parts.push_back(part.parts[j]);
      out.push_back(std::move(q));
    }
  return out;
}

std::vector<NodeMask> column_masks(const DiscretizedDomain& grid, int axis, const std::vector<std::size_t>& cuts) {
  if (axis < 0 || axis >= grid.dim()) throw Error(ErrorCode::InvalidDomain, "axis out of range");
  const Axis& ax = grid.axis(axis);
  if (cuts.empty()) throw Error(ErrorCode::InvalidDomain, "need at least one cut");
  for (std::size_t k = 0; k < cuts.size(); ++k)
    if (cuts[k] >= ax.count || (k && cuts[k] <= cuts[k - 1]))
      throw Error(ErrorCode::InvalidDomain, "cuts must increase within the axis");
  const bool periodic = ax.kind == AxisKind::Periodic;
  std::vector<NodeMask> masks(cuts.size(), NodeMask(grid.size(), 0));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::size_t col = grid.multi(i)[axis];
    for (std::size_t k = 0; k < cuts.size(); ++k) {
      const std::size_t lo = cuts[k];
      const bool last = k + 1 == cuts.size();
      bool in;
      if (!last) {
        in = col >= lo && col < cuts[k + 1];
      } else if (periodic) {
        in = col >= lo || col < cuts[0];
      } else {
        in = col >= lo;
      }
      if (in) masks[k][i] = 1;
    }
  }
  return masks;
}

namespace {

Partition column_partition(const DiscretizedDomain& grid, const StructureField& field, int axis,
                           const std::vector<std::size_t>& cuts, std::size_t modes, const char* label,
                           const std::function<double(const Point&, double lambda, double offset)>& shape) {
  const auto masks = column_masks(grid, axis, cuts);
  const Axis& ax = grid.axis(axis);
  const bool periodic = ax.kind == AxisKind::Periodic;
  Partition part;
  part.label = label;
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    const double a = ax.coordinate(cuts[k]);
    double width;
    if (k + 1 < cuts.size()) {
      width = ax.coordinate(cuts[k + 1]) - a;
    } else if (periodic) {
      width = ax.coordinate(cuts[0]) + (ax.hi - ax.lo) - a;
    } else {
      width = ax.coordinate(ax.count - 1) - a;
    }
    if (k == 0) part.parameter = width;
    Subdomain d;
    d.mask = masks[k];
    for (std::size_t m = 1; m <= modes; ++m) {
      const double lambda = static_cast<double>(m) * std::numbers::pi / width;
      std::vector<double> f(grid.size(), 0.0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!d.mask[i]) continue;
        Point x = grid.coordinates(i);
        double off = x[axis] - a;
        if (periodic && off < 0.0) off += ax.hi - ax.lo;
        f[i] = shape(x, lambda, off);
      }
      d.family.push_back(TestField{make_form_pair(grid, std::move(f), field), d.mask});
    }
    part.parts.push_back(std::move(d));
  }
  return part;
}

}  // namespace

Partition sector_partition(const DiscretizedDomain& grid, const StructureField& field,
                           const std::vector<std::size_t>& cuts, std::size_t modes) {
  if (grid.dim() != 2 || grid.axis(1).kind != AxisKind::Periodic)
    throw Error(ErrorCode::InvalidDomain, "sector partitions need a polar grid with a periodic angle");
  return column_partition(grid, field, 1, cuts, modes, "sector", [](const Point& x, double lambda, double off) {
    return std::pow(x[0], lambda) * std::sin(lambda * off);
  });
}

Partition slab_partition(const DiscretizedDomain& grid, const StructureField& field, int axis,
                         const std::vector<std::size_t>& cuts, std::size_t modes) {
  if (axis == 0) throw Error(ErrorCode::InvalidDomain, "axis 0 is the longitudinal direction");
  return column_partition(grid, field, axis, cuts, modes, "slab", [](const Point& x, double lambda, double off) {
    return std::sinh(lambda * x[0]) * std::sin(lambda * off);
  });
}

void TractFamily::validate(const DiscretizedDomain& grid, double boundary_tolerance) const {
  if (members.empty()) throw Error(ErrorCode::EmptyFamily, "no tracts");
  std::vector<std::uint8_t> used(grid.size(), 0);
  for (std::size_t k = 0; k < members.size(); ++k) {
    const Tract& t = members[k];
    if (t.pair.grid != &grid || t.mask.size() != grid.size())
      throw Error(ErrorCode::InvalidDomain, "tract " + std::to_string(k) + " does not match the grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!t.mask[i]) continue;
      if (used[i])
        throw Error(ErrorCode::DisjointnessViolated, "tract " + std::to_string(k) + " meets an earlier tract at node " +
                                                         std::to_string(i));
      used[i] = 1;
    }
  }
  for (std::size_t k = 0; k < members.size(); ++k) {
    const Tract& t = members[k];
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (t.mask[i] && grid.tag(i) == NodeTag::ManifoldBoundary)
        throw Error(ErrorCode::InvalidDomain, "tract " + std::to_string(k) + " meets the manifold boundary");
    if (!reaches_cut(grid, t.mask))
      throw Error(ErrorCode::InvalidDomain, "tract " + std::to_string(k) + " has compact closure");
    if (max_gradient(t.pair) == 0.0) throw Error(ErrorCode::InvalidDomain, "tract " + std::to_string(k) + " carries dZ = 0");
    const double sd = support_defect(t.pair, t.mask);
    if (sd > boundary_tolerance)
      throw Error(ErrorCode::BoundaryConditionViolated,
                  "tract " + std::to_string(k) + " form does not vanish off its tract (defect " + std::to_string(sd) + ")");
  }
}

AhlforsReport ahlfors_count_bound(const TractFamily& tracts, const DiscretizedDomain& grid, std::span<const double> h,
                                  double p, double nu1, double nu2, std::size_t N, double tau0,
                                  std::span<const double> window, std::span<const Partition> partitions) {
  (void)nu2;
  tracts.validate(grid);
  AhlforsReport r;
  r.L = tracts.count();
  r.N = N;
  r.tau0 = tau0;
  r.tau.push_back(tau0);
  for (double t : window)
    if (t > tau0) r.tau.push_back(t);
  if (r.tau.size() < 3) throw Error(ErrorCode::WindowTooShort, "the tau window needs at least three samples");
  require_increasing(r.tau);
  for (double t : r.tau) require_level(grid, h, t);
  const auto mids = midpoints(r.tau);
  const std::size_t S = r.tau.size();

  // Per-tract energies and per-form eps restricted to the tract.
  std::vector<std::vector<double>> Ik(r.L), Ak(r.L);
  for (std::size_t k = 0; k < r.L; ++k) {
    const auto& t = tracts.members[k];
    if (t.pair.p != p) throw Error(ErrorCode::InvalidDomain, "tract form has a different exponent");
    const auto s = sample_curve(t.pair, h, r.tau, t.mask);
    Ik[k] = s.I;
    for (double e : s.eps_integral) Ak[k].push_back(nu1 * e);
  }
  std::vector<double> Emid;
  for (double t : r.tau) r.E.push_back(n_mean(grid, h, t, N, partitions, p).value);
  for (double t : mids) Emid.push_back(n_mean(grid, h, t, N, partitions, p).value);
  r.E_integral = cumulative_simpson(r.tau, r.E, Emid);

  const double L = static_cast<double>(r.L);
  double Imin0 = kInf;
  for (std::size_t k = 0; k < r.L; ++k) Imin0 = std::min(Imin0, Ik[k][0]);
  r.chain_holds = r.am_gm_holds = true;
  for (std::size_t j = 0; j < S; ++j) {
    double I = 0.0, sum = 0.0, mean_exp = 0.0, mean_a = 0.0;
    for (std::size_t k = 0; k < r.L; ++k) {
      I += Ik[k][j];
      sum += Ik[k][0] * std::exp(Ak[k][j]);
      mean_exp += std::exp(Ak[k][j]) / L;
      mean_a += Ak[k][j] / L;
    }
    r.I.push_back(I);
    r.chain_sum.push_back(sum);
    r.chain_witness.push_back(Imin0 * L * std::exp(mean_a));
    r.am_gm_mean.push_back(mean_exp);
    r.am_gm_geometric.push_back(std::exp(mean_a));
    if (sum > I * (1.0 + r.tolerance) || r.chain_witness.back() > I * (1.0 + r.tolerance)) r.chain_holds = false;
    if (mean_exp < std::exp(mean_a) * (1.0 - 1e-12)) r.am_gm_holds = false;
  }

  r.divergence_trend = std::all_of(r.E.begin(), r.E.end(), [](double e) { return std::isfinite(e) && e > 0.0; });
  auto decays = [](const std::vector<double>& v) {
    if (v.size() < 3) return false;
    const double top = *std::max_element(v.begin(), v.end());
    if (!(top > 0.0) || v.back() > kDecay * top) return false;
    const std::size_t from = v.size() - std::max<std::size_t>(2, v.size() / 3);
    for (std::size_t j = from + 1; j < v.size(); ++j)
      if (v[j] > v[j - 1]) return false;
    return true;
  };
  std::vector<double> energy_proxy, flux_proxy, trace_proxy;
  const auto gh = gradient_magnitude(grid, h);
  for (std::size_t j = 0; j < S; ++j) {
    const double damp = std::exp(-nu1 * r.E_integral[j]);
    energy_proxy.push_back(r.I[j] * damp);
    const double t = r.tau[j];
    if (t + 1.0 > r.tau.back() + 1e-12) continue;
    double fl = 0.0, tr = 0.0;
    for (const auto& tract : tracts.members) {
      fl += band_integral(tract.pair, h, gh, 0.0, false, t, t + 1.0);
      tr += band_integral(tract.pair, h, gh, 0.0, true, t, t + 1.0);
    }
    flux_proxy.push_back(fl * damp);
    trace_proxy.push_back(tr * damp);
  }
  r.energy_decay = decays(energy_proxy);
  r.flux_decay = decays(flux_proxy);
  r.trace_decay = decays(trace_proxy);
  const bool hypotheses = r.divergence_trend && (r.energy_decay || r.flux_decay || r.trace_decay);
  r.verdict = hypotheses ? AhlforsVerdict::BoundAsserted : AhlforsVerdict::Inconclusive;
  r.contradiction = hypotheses && r.L >= N;
  return r;
}

}  // namespace nlpt

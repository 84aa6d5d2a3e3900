#include "nlpt/exhaustion.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <map>

#include "nlpt/error.hpp"

namespace nlpt {

const char* to_string(ExhaustionFamily family) noexcept {
  switch (family) {
    case ExhaustionFamily::LogDk: return "LogDk";
    case ExhaustionFamily::PowerDk: return "PowerDk";
    case ExhaustionFamily::CylinderPower: return "CylinderPower";
    case ExhaustionFamily::ConeLog: return "ConeLog";
    case ExhaustionFamily::WarpedIntegral: return "WarpedIntegral";
    case ExhaustionFamily::ProductLift: return "ProductLift";
  }
  return "Unknown";
}

const char* to_string(TypeVerdict verdict) noexcept {
  return verdict == TypeVerdict::Parabolic ? "Parabolic" : "Hyperbolic";
}

double radial_power_exponent(int k, double p) { return (p - k) / (p - 1.0); }
double ambient_slab_exponent(int n, double p) { return (p - n) / (p - 1.0); }

namespace {

bool same(double a, double b) { return std::abs(a - b) < 1e-12; }

// Exponent of |grad h| in the flux: alpha / beta^{(n-1)/(p-1)}.
std::function<double(double)> warped_density(const RadialProfile& alpha, const RadialProfile& beta, int n, double p) {
  const double e = (n - 1.0) / (p - 1.0);
  return [alpha, beta, e](double t) { return alpha(t) / std::pow(beta(t), e); };
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (b == a) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-13, &err);
}

}  // namespace

double warped_integral(const RadialProfile& alpha, const RadialProfile& beta, int n, double p, double r1, double r) {
  return integrate(warped_density(alpha, beta, n, p), r1, r);
}

WarpedTypeResult warped_parabolicity(const RadialProfile& alpha, const RadialProfile& beta, int n, double p, double r1,
                                     double r2) {
  if (!(p > 1.0)) throw Error(ErrorCode::InvalidDomain, "p must exceed 1");
  if (!(r2 > r1)) throw Error(ErrorCode::InvalidDomain, "r2 must exceed r1");
  const auto f = warped_density(alpha, beta, n, p);
  WarpedTypeResult out;

  // Upper limits: doubling toward infinity, or halving the gap to a finite r2.
  const bool open = !std::isfinite(r2);
  const double start = r1 > 0.0 ? r1 : 0.0;
  auto limit = [&](int k) {
    if (open) return (r1 > 0.0 ? r1 : 0.5) * std::ldexp(1.0, k);
    return r2 - (r2 - r1) * std::ldexp(1.0, -k);
  };

  constexpr int kBudget = 40;
  double sum = 0.0;
  double prev_limit = start;
  double prev_inc = 0.0, prev_ratio = -1.0;
  int stable = 0;
  for (int k = 1; k <= kBudget; ++k) {
    const double upper = limit(k);
    const double inc = integrate(f, prev_limit, upper);
    if (!std::isfinite(inc)) throw Error(ErrorCode::InvalidDomain, "warped integrand is not integrable");
    sum += inc;
    out.partial.emplace_back(upper, sum);
    prev_limit = upper;

    const double ratio = prev_inc > 0.0 ? inc / prev_inc : -1.0;
    if (prev_ratio >= 0.0 && ratio >= 0.0 && std::abs(ratio - prev_ratio) < 1e-3) {
      ++stable;
    } else {
      stable = 0;
    }
    out.last_increment_ratio = ratio;

    if (inc < 1e-10 * std::max(1.0, std::abs(sum))) {
      // Cauchy tail below tolerance; add the geometric remainder when the ratio is settled.
      const double tail = (ratio >= 0.0 && ratio < 1.0) ? inc * ratio / (1.0 - ratio) : 0.0;
      out.verdict = TypeVerdict::Hyperbolic;
      out.h0 = sum + tail;
      return out;
    }
    prev_ratio = ratio;
    prev_inc = inc;
  }

  const double growth = prev_inc / std::max(std::abs(sum), 1e-300);
  const double ratio = out.last_increment_ratio;
  if (growth > 0.01 && ratio >= 0.999) {
    out.verdict = TypeVerdict::Parabolic;
    out.h0 = kInf;
    return out;
  }
  if (ratio >= 0.0 && ratio <= 0.99 && stable >= 3) {
    out.verdict = TypeVerdict::Hyperbolic;
    out.h0 = sum + prev_inc * ratio / (1.0 - ratio);
    return out;
  }
  throw Error(ErrorCode::IndeterminateTail,
              "exhaustion integral neither diverges nor settles within 40 doublings (increment ratio " +
                  std::to_string(ratio) + ")");
}

// ---------------------------------------------------------------- ExhaustionFunction

const ModelDomain* ExhaustionFunction::radial_domain() const {
  const ModelDomain* d = &domain_;
  while (d->kind == DomainKind::ProductManifold) d = d->factor.get();
  return d;
}

bool ExhaustionFunction::parabolic_end() const { return !std::isfinite(h0_); }

std::vector<std::pair<std::string, double>> ExhaustionFunction::parameters() const {
  const ModelDomain* d = radial_domain();
  std::vector<std::pair<std::string, double>> out{
      {"n", static_cast<double>(domain_.n)}, {"k", static_cast<double>(d->k)}, {"p", p_}, {"r1", s_k_}};
  if (profile_ == Profile::Power) out.emplace_back("exponent", gamma_);
  out.emplace_back("h0", h0_);
  return out;
}

double ExhaustionFunction::value_at(double s) const {
  switch (profile_) {
    case Profile::Log: return std::log(s / s_k_);
    case Profile::Power:
      return gamma_ > 0.0 ? std::pow(s, gamma_) : std::pow(s_k_, gamma_) - std::pow(s, gamma_);
    case Profile::Integral: return integrate(integrand_, s_k_, s);
  }
  return 0.0;
}

double ExhaustionFunction::slope_at(double s) const {
  switch (profile_) {
    case Profile::Log: return 1.0 / s;
    case Profile::Power: return std::abs(gamma_) * std::pow(s, gamma_ - 1.0);
    case Profile::Integral: return integrand_(s);
  }
  return 0.0;
}

double ExhaustionFunction::sphere_area(double s) const {
  const ModelDomain* d = radial_domain();
  double area = 0.0;
  switch (d->kind) {
    case DomainKind::EuclideanSpace:
      area = AngularDomain::whole().measure(d->n) * std::pow(s, d->n - 1);
      break;
    case DomainKind::KCylinder:
      area = AngularDomain::whole().measure(d->k) * std::pow(s, d->k - 1) * d->base.measure();
      break;
    case DomainKind::Cone: area = d->angular.measure(d->n) * std::pow(s, d->n - 1); break;
    case DomainKind::WarpedProduct: area = d->angular.measure(d->n) * std::pow(d->beta(s), d->n - 1); break;
    case DomainKind::ProductManifold: break;
  }
  for (const ModelDomain* m = &domain_; m->kind == DomainKind::ProductManifold; m = m->factor.get())
    area *= m->base.measure();
  return area;
}

double ExhaustionFunction::flux_constant() const {
  const ModelDomain* d = radial_domain();
  const double s = std::max(2.0 * s_k_, s_k_ + 1.0);
  const double scale = d->kind == DomainKind::WarpedProduct ? d->alpha(s) : 1.0;
  return std::pow(slope_at(s) / scale, p_ - 1.0) * sphere_area(s);
}

double ExhaustionFunction::value(const DiscretizedDomain& grid, std::size_t node) const {
  return value_at(grid.radial(node));
}

Vec ExhaustionFunction::gradient(const DiscretizedDomain& grid, std::size_t node) const {
  Vec g{0.0, 0.0, 0.0};
  const int a = grid.radial_axis();
  const double s = grid.radial(node);
  if (s > 0.0) g[a] = grid.radial_sign(node) * slope_at(s) / grid.scales(node)[a];
  return g;
}

std::vector<double> ExhaustionFunction::evaluate(const DiscretizedDomain& grid) const {
  std::vector<double> out(grid.size());
  std::map<double, double> cache;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = grid.radial(i);
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, value_at(s)).first;
    out[i] = it->second;
  }
  return out;
}

std::vector<Vec> ExhaustionFunction::gradient_field(const DiscretizedDomain& grid) const {
  std::vector<Vec> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = gradient(grid, i);
  return out;
}

ExhaustionFunction ExhaustionFunction::radial_power(const ModelDomain& domain, double p, double gamma) {
  ExhaustionFunction h;
  h.domain_ = domain;
  h.p_ = p;
  h.profile_ = Profile::Power;
  h.gamma_ = gamma;
  h.s_k_ = domain.r1;
  h.family_ = ExhaustionFamily::PowerDk;
  if (gamma == 0.0) throw Error(ErrorCode::NoCatalogEntry, "power exhaustion needs a nonzero exponent");
  if (gamma < 0.0) {
    if (!(domain.r1 > 0.0)) throw Error(ErrorCode::InvalidDomain, "negative exponent needs r1 > 0");
    h.h0_ = std::pow(domain.r1, gamma);
  }
  return h;
}

ExhaustionFunction make_special_exhaustion(const ModelDomain& domain, double p) {
  domain.validate();
  if (!(p > 1.0)) throw Error(ErrorCode::NoCatalogEntry, "p must exceed 1");
  auto log_entry = [&](ExhaustionFamily family) {
    if (!(domain.r1 > 0.0)) throw Error(ErrorCode::InvalidDomain, "logarithmic exhaustion needs r1 > 0");
    ExhaustionFunction h;
    h.domain_ = domain;
    h.p_ = p;
    h.profile_ = ExhaustionFunction::Profile::Log;
    h.s_k_ = domain.r1;
    h.family_ = family;
    return h;
  };
  switch (domain.kind) {
    case DomainKind::EuclideanSpace: {
      if (same(p, domain.n)) return log_entry(ExhaustionFamily::ConeLog);
      return ExhaustionFunction::radial_power(domain, p, radial_power_exponent(domain.n, p));
    }
    case DomainKind::KCylinder: {
      if (same(p, domain.k)) return log_entry(ExhaustionFamily::LogDk);
      auto h = ExhaustionFunction::radial_power(domain, p, radial_power_exponent(domain.k, p));
      if (same(p, domain.n)) h.family_ = ExhaustionFamily::CylinderPower;
      return h;
    }
    case DomainKind::Cone: {
      if (same(p, domain.n)) return log_entry(ExhaustionFamily::ConeLog);
      throw Error(ErrorCode::NoCatalogEntry,
                  "cones are catalogued only for p = n; describe the cone as a warped product instead");
    }
    case DomainKind::WarpedProduct: {
      const auto type = warped_parabolicity(domain.alpha, domain.beta, domain.n, p, domain.r1, domain.r2);
      ExhaustionFunction h;
      h.domain_ = domain;
      h.p_ = p;
      h.profile_ = ExhaustionFunction::Profile::Integral;
      h.s_k_ = domain.r1;
      h.family_ = ExhaustionFamily::WarpedIntegral;
      h.h0_ = type.h0;
      h.integrand_ = warped_density(domain.alpha, domain.beta, domain.n, p);
      return h;
    }
    case DomainKind::ProductManifold: {
      ExhaustionFunction h = make_special_exhaustion(*domain.factor, p);
      h.domain_ = domain;
      h.family_ = ExhaustionFamily::ProductLift;
      return h;
    }
  }
  throw Error(ErrorCode::NoCatalogEntry, "unknown domain kind");
}

// ---------------------------------------------------------------- verification

namespace {

constexpr double kDelta = 1e-8;

bool near_k(const ExhaustionFunction& h, const DiscretizedDomain& grid, std::size_t node) {
  const double cell = grid.axis(grid.radial_axis()).step();
  return grid.radial(node) <= h.exceptional_radius() + cell * (1.0 + 1e-9);
}

double magnitude(const Vec& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

std::vector<double> p_laplace_residual(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p) {
  const auto values = h.evaluate(grid);
  auto res = p_laplacian(grid, values, p, kDelta);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const bool excluded = !has_full_stencil(grid, i) || near_k(h, grid, i);
    if (!excluded && magnitude(h.gradient(grid, i)) < kDelta)
      throw Error(ErrorCode::DegenerateGradient, "|grad h| below delta outside the exceptional set");
    if (excluded) res[i] = 0.0;
  }
  return res;
}

ResidualSummary residual_summary(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p) {
  const auto res = p_laplace_residual(h, grid, p);
  ResidualSummary s;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double g = magnitude(h.gradient(grid, i));
    if (!has_full_stencil(grid, i) || near_k(h, grid, i)) {
      ++s.excluded;
      if (g < kDelta) ++s.degenerate;
      continue;
    }
    ++s.counted;
    s.max_abs = std::max(s.max_abs, std::abs(res[i]));
    const double radius = std::max(grid.radial(i), grid.axis(grid.radial_axis()).step());
    s.max_relative = std::max(s.max_relative, std::abs(res[i]) * radius / std::pow(g, p - 1.0));
  }
  return s;
}

double flux_through_sphere(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p, double t) {
  const auto values = h.evaluate(grid);
  const LevelShell shell = level_shell(grid, values, t);
  double flux = 0.0;
  for (const auto& sp : shell.points) {
    const double g = magnitude(sp.grad_h);
    if (g < kDelta) throw Error(ErrorCode::DegenerateGradient, "level passes through a critical point of h");
    flux += sp.weight * std::pow(g, p - 1.0);
  }
  return flux;
}

double boundary_normal_pairing(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p) {
  const auto values = h.evaluate(grid);
  const auto g = gradient(grid, values);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.tag(i) != NodeTag::ManifoldBoundary) continue;
    const double mag = magnitude(g[i]);
    const double coef = mag > 0.0 ? std::pow(mag, p - 2.0) : 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
      for (bool upper : {false, true}) {
        if (!(grid.faces(i) & (1u << (2 * a + (upper ? 1 : 0))))) continue;
        if (grid.face_tag(a, upper) != NodeTag::ManifoldBoundary) continue;
        worst = std::max(worst, std::abs(coef * g[i][a]));
      }
    }
  }
  return worst;
}

std::vector<double> flux_levels(const ExhaustionFunction& h, const DiscretizedDomain& grid, std::size_t count) {
  const int ra = grid.radial_axis();
  const double cell = grid.axis(ra).step();
  double s_min = kInf, s_max = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s_min = std::min(s_min, grid.radial(i));
    s_max = std::max(s_max, grid.radial(i));
  }
  const double lo = std::max(s_min, h.exceptional_radius()) + 2.0 * cell;
  const double hi = s_max - 2.0 * cell;
  if (!(hi > lo)) throw Error(ErrorCode::LevelOutOfRange, "grid window too narrow for flux levels");
  const double t_lo = h.value_at(lo), t_hi = h.value_at(hi);

  // Levels closer than one cell of h-change to a critical node value are skipped.
  const auto values = h.evaluate(grid);
  std::vector<double> critical;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (magnitude(h.gradient(grid, i)) < kDelta) critical.push_back(values[i]);
  auto noncritical = [&](double t) {
    const double s = lo + (hi - lo) * (t - t_lo) / (t_hi - t_lo);
    const double band = h.slope_at(s) * cell;
    return std::none_of(critical.begin(), critical.end(), [&](double c) { return std::abs(c - t) < band; });
  };

  std::vector<double> levels;
  const double step = (t_hi - t_lo) / static_cast<double>(count > 1 ? count - 1 : 1);
  for (std::size_t j = 0; j < count; ++j) {
    double t = t_lo + step * static_cast<double>(j);
    for (int tries = 0; tries < 4 && !noncritical(t); ++tries) t += 0.25 * step;
    if (noncritical(t) && t <= t_hi) levels.push_back(t);
  }
  return levels;
}

ExhaustionVerdict verify_exhaustion(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p,
                                    const VerifyOptions& options) {
  ExhaustionVerdict v;
  v.options = options;
  const auto res = residual_summary(h, grid, p);
  v.pde_residual_max = res.max_abs;
  v.pde_residual_relative = res.max_relative;
  v.a1 = res.max_relative <= options.residual_tolerance;

  double lo = kInf, hi = -kInf, mean = 0.0;
  for (double t : flux_levels(h, grid, options.levels)) {
    const double f = flux_through_sphere(h, grid, p, t);
    v.flux.push_back({t, f});
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    mean += f;
  }
  mean /= static_cast<double>(v.flux.size());
  v.flux_relative_spread = v.flux.empty() ? kInf : (hi - lo) / std::abs(mean);
  v.a2 = v.flux_relative_spread <= options.flux_tolerance;

  v.boundary_pairing_max = boundary_normal_pairing(h, grid, p);
  const auto g = gradient(grid, h.evaluate(grid));
  double amax = 0.0;
  for (const Vec& x : g) amax = std::max(amax, std::pow(magnitude(x), p - 1.0));
  v.boundary_pairing_relative = amax > 0.0 ? v.boundary_pairing_max / amax : 0.0;
  v.b2 = v.boundary_pairing_relative <= options.pairing_tolerance;
  return v;
}

}  // namespace nlpt

#include "nlpt/wtforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nlpt/error.hpp"
#include "nlpt/variational.hpp"

namespace nlpt {

const char* to_string(StructurePreset preset) noexcept {
  switch (preset) {
    case StructurePreset::PLaplace: return "PLaplace";
    case StructurePreset::AnisotropicDiagonal: return "AnisotropicDiagonal";
    case StructurePreset::Custom: return "Custom";
  }
  return "?";
}

const char* to_string(BoundaryKind kind) noexcept {
  switch (kind) {
    case BoundaryKind::Dirichlet: return "Dirichlet";
    case BoundaryKind::CompactSupport: return "CompactSupport";
    case BoundaryKind::Neumann: return "Neumann";
    case BoundaryKind::Mixed: return "Mixed";
  }
  return "?";
}

namespace {

double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void require_p(double p) {
  if (!(p > 1.0)) throw Error(ErrorCode::InvalidDomain, "p must exceed 1");
}

}  // namespace

StructureField StructureField::p_laplace(double p) {
  require_p(p);
  StructureField s;
  s.p_ = p;
  s.preset_ = StructurePreset::PLaplace;
  return s;
}

StructureField StructureField::anisotropic_diagonal(double p, std::vector<double> weights) {
  require_p(p);
  if (weights.empty() || weights.size() > 3)
    throw Error(ErrorCode::InvalidDomain, "anisotropic weights need one to three entries");
  for (double w : weights)
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidDomain, "anisotropic weights must be positive");
  StructureField s;
  s.p_ = p;
  s.preset_ = StructurePreset::AnisotropicDiagonal;
  const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
  const double wmin = *lo, wmax = *hi;
  // <xi, A> = (xi^T W xi)^{p/2} >= wmin^{p/2} |xi|^p, and |A| <= (xi^T W xi)^{(p-2)/2} wmax |xi|
  // where the power is bounded through wmax for p >= 2 and through wmin below.
  s.nu1_ = std::pow(wmin, 0.5 * p);
  s.nu2_ = wmax * std::pow(p >= 2.0 ? wmax : wmin, 0.5 * (p - 2.0));
  s.weights_ = std::move(weights);
  return s;
}

StructureField StructureField::custom(double p, double nu1, double nu2, Rule rule) {
  require_p(p);
  if (!(nu1 > 0.0 && nu2 > 0.0)) throw Error(ErrorCode::InvalidDomain, "structure constants must be positive");
  if (!rule) throw Error(ErrorCode::InvalidDomain, "custom structure field needs a rule");
  StructureField s;
  s.p_ = p;
  s.nu1_ = nu1;
  s.nu2_ = nu2;
  s.preset_ = StructurePreset::Custom;
  s.rule_ = std::move(rule);
  return s;
}

double StructureField::nu0() const { return wt2_implies_wt1_constant(nu1_, nu2_, p_); }

std::string StructureField::describe() const {
  std::ostringstream os;
  os << to_string(preset_) << "(p=" << p_;
  if (!weights_.empty()) {
    os << ", weights=";
    for (std::size_t i = 0; i < weights_.size(); ++i) os << (i ? "/" : "") << weights_[i];
  }
  os << ", nu1=" << nu1_ << ", nu2=" << nu2_ << ")";
  return os.str();
}

Vec StructureField::operator()(std::size_t node, const Vec& xi) const {
  switch (preset_) {
    case StructurePreset::PLaplace: {
      const double m = norm(xi);
      const double s = m > 0.0 ? std::pow(m, p_ - 2.0) : 0.0;
      return {s * xi[0], s * xi[1], s * xi[2]};
    }
    case StructurePreset::AnisotropicDiagonal: {
      Vec wx{0.0, 0.0, 0.0};
      double q = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double w = a < weights_.size() ? weights_[a] : weights_.back();
        wx[a] = w * xi[a];
        q += xi[a] * wx[a];
      }
      const double s = q > 0.0 ? std::pow(q, 0.5 * (p_ - 2.0)) : 0.0;
      return {s * wx[0], s * wx[1], s * wx[2]};
    }
    case StructurePreset::Custom: return rule_(node, xi);
  }
  return {};
}

StructureReport check_structure(const StructureField& field, std::size_t samples, int dim, std::size_t nodes,
                                std::uint64_t seed) {
  if (samples == 0) throw Error(ErrorCode::InvalidDomain, "need at least one sample");
  if (dim < 1 || dim > 3) throw Error(ErrorCode::InvalidDomain, "sample dimension must be 1, 2 or 3");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> decade(-3.0, 3.0);
  std::uniform_int_distribution<std::size_t> pick(0, std::max<std::size_t>(nodes, 1) - 1);
  const double p = field.p();

  StructureReport r;
  r.samples = samples;
  r.coercivity_margin = kInf;
  r.growth_margin = kInf;
  r.constants_ordered = field.nu1() <= field.nu2();
  for (std::size_t s = 0; s < samples; ++s) {
    Vec xi{0.0, 0.0, 0.0};
    double len = 0.0;
    while (len == 0.0) {
      for (int a = 0; a < dim; ++a) xi[a] = gauss(rng);
      len = norm(xi);
    }
    const double mag = std::pow(10.0, decade(rng));
    for (int a = 0; a < dim; ++a) xi[a] *= mag / len;
    const std::size_t node = pick(rng);
    const Vec A = field(node, xi);
    const double coercive = (dot(xi, A) - field.nu1() * std::pow(mag, p)) / std::pow(mag, p);
    const double growth = (field.nu2() * std::pow(mag, p - 1.0) - norm(A)) / std::pow(mag, p - 1.0);
    if (std::min(coercive, growth) < std::min(r.coercivity_margin, r.growth_margin)) {
      r.witness_node = node;
      r.witness_xi = xi;
    }
    r.coercivity_margin = std::min(r.coercivity_margin, coercive);
    r.growth_margin = std::min(r.growth_margin, growth);
  }
  r.passed = r.constants_ordered && r.coercivity_margin >= -r.tolerance && r.growth_margin >= -r.tolerance;
  return r;
}

ScalarFormPair make_form_pair(const DiscretizedDomain& grid, std::vector<double> f, const StructureField& field) {
  if (f.size() != grid.size()) throw Error(ErrorCode::InvalidDomain, "field does not match the grid");
  ScalarFormPair pair;
  pair.grid = &grid;
  pair.p = field.p();
  pair.w = gradient(grid, f);
  pair.f = std::move(f);
  pair.theta.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) pair.theta[i] = field(i, pair.w[i]);
  return pair;
}

ScalarFormPair random_form_pair(const DiscretizedDomain& grid, const StructureField& field, std::mt19937_64& rng) {
  const int d = grid.dim();
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> freq(0, 3);
  struct Mode {
    double amp, ph;
    int k[3];
  };
  std::vector<Mode> modes(4);
  for (auto& m : modes) {
    m.amp = coef(rng);
    m.ph = phase(rng);
    for (int a = 0; a < 3; ++a) m.k[a] = a < d ? freq(rng) : 0;
  }
  double poly[3][2];
  for (auto& row : poly) {
    row[0] = coef(rng);
    row[1] = coef(rng);
  }
  const auto f = sample(grid, [&](const Point& x) {
    double u[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) {
      const Axis& ax = grid.axis(a);
      u[a] = (x[a] - ax.lo) / (ax.hi - ax.lo);
    }
    double v = 0.0;
    for (const auto& m : modes) {
      double arg = m.ph;
      for (int a = 0; a < d; ++a) arg += std::numbers::pi * m.k[a] * u[a];
      v += m.amp * std::cos(arg);
    }
    for (int a = 0; a < d; ++a) v += poly[a][0] * u[a] + poly[a][1] * u[a] * u[a];
    return v;
  });
  return make_form_pair(grid, f, field);
}

namespace {

// (lhs - rhs) / max(lhs, rhs) for nonnegative sides, 0 when both vanish.
double relative_margin(double lhs, double rhs) {
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  return scale > 0.0 ? (lhs - rhs) / scale : 0.0;
}

}  // namespace

WtReport check_wt1(const ScalarFormPair& pair, double nu0, double p) {
  require_p(p);
  const double q = p / (p - 1.0);
  WtReport r;
  r.margin = kInf;
  r.growth_margin = kInf;
  for (std::size_t i = 0; i < pair.w.size(); ++i) {
    const double m = relative_margin(dot(pair.w[i], pair.theta[i]), nu0 * std::pow(norm(pair.theta[i]), q));
    if (m < r.margin) {
      r.margin = m;
      r.witness_node = i;
    }
    ++r.checked;
  }
  r.passed = nu0 > 0.0 && r.margin >= -r.tolerance;
  return r;
}

WtReport check_wt2(const ScalarFormPair& pair, double nu1, double nu2, double p) {
  require_p(p);
  WtReport r;
  r.margin = kInf;
  r.growth_margin = kInf;
  double worst = kInf;
  for (std::size_t i = 0; i < pair.w.size(); ++i) {
    const double mw = norm(pair.w[i]);
    const double coercive = relative_margin(dot(pair.w[i], pair.theta[i]), nu1 * std::pow(mw, p));
    const double growth = relative_margin(nu2 * std::pow(mw, p - 1.0), norm(pair.theta[i]));
    r.margin = std::min(r.margin, coercive);
    r.growth_margin = std::min(r.growth_margin, growth);
    if (std::min(coercive, growth) < worst) {
      worst = std::min(coercive, growth);
      r.witness_node = i;
    }
    ++r.checked;
  }
  r.passed = nu1 > 0.0 && nu2 > 0.0 && r.margin >= -r.tolerance && r.growth_margin >= -r.tolerance;
  return r;
}

double wt2_implies_wt1_constant(double nu1, double nu2, double p) {
  require_p(p);
  if (!(nu1 > 0.0 && nu2 > 0.0)) throw Error(ErrorCode::InvalidDomain, "structure constants must be positive");
  return nu1 * std::pow(nu2, -p / (p - 1.0));
}

double discrete_stokes_check(const DiscretizedDomain& grid, std::span<const double> alpha, std::span<const Vec> beta) {
  if (alpha.size() != grid.size() || beta.size() != grid.size())
    throw Error(ErrorCode::InvalidDomain, "fields do not match the grid");
  auto near_edge = [&](std::size_t i) {
    if (grid.tag(i) == NodeTag::Cut || grid.tag(i) == NodeTag::ManifoldBoundary) return true;
    for (int a = 0; a < grid.dim(); ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid.neighbor(i, a, dir);
        if (j == kNoNode || grid.tag(j) == NodeTag::Cut || grid.tag(j) == NodeTag::ManifoldBoundary) return true;
      }
    return false;
  };
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (norm(beta[i]) > 0.0 && near_edge(i))
      throw Error(ErrorCode::SupportTouchesBoundary, "beta is nonzero next to the boundary at node " + std::to_string(i));

  const auto grad = gradient(grid, alpha);
  const auto div = divergence(grid, beta);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    sum += grid.volume_weight(i) * (dot(grad[i], beta[i]) + alpha[i] * div[i]);
  return std::abs(sum);
}

double boundary_normal_component(const DiscretizedDomain& grid, std::size_t i, const Vec& theta) {
  double worst = 0.0;
  for (int a = 0; a < grid.dim(); ++a)
    for (int upper = 0; upper < 2; ++upper) {
      if (!(grid.faces(i) & (1u << (2 * a + upper)))) continue;
      if (grid.face_tag(a, upper) != NodeTag::ManifoldBoundary) continue;
      worst = std::max(worst, std::abs(theta[a]));
    }
  return worst;
}

double boundary_defect(const ScalarFormPair& pair, BoundaryKind kind) {
  const DiscretizedDomain& grid = *pair.grid;
  double fmax = 0.0, tmax = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    fmax = std::max(fmax, std::abs(pair.f[i]));
    tmax = std::max(tmax, norm(pair.theta[i]));
  }
  double defect = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.tag(i) != NodeTag::ManifoldBoundary) continue;
    switch (kind) {
      case BoundaryKind::Dirichlet: defect = std::max(defect, std::abs(pair.f[i])); break;
      case BoundaryKind::CompactSupport:
        defect = std::max(defect, std::abs(pair.f[i]));
        for (int a = 0; a < grid.dim(); ++a)
          for (int dir : {-1, 1}) {
            const std::size_t j = grid.neighbor(i, a, dir);
            if (j != kNoNode) defect = std::max(defect, std::abs(pair.f[j]));
          }
        break;
      case BoundaryKind::Neumann: defect = std::max(defect, boundary_normal_component(grid, i, pair.theta[i])); break;
      case BoundaryKind::Mixed:
        defect = std::max(defect, std::abs(pair.f[i]) * boundary_normal_component(grid, i, pair.theta[i]));
        break;
    }
  }
  double scale = 1.0;
  switch (kind) {
    case BoundaryKind::Dirichlet:
    case BoundaryKind::CompactSupport: scale = fmax; break;
    case BoundaryKind::Neumann: scale = tmax; break;
    case BoundaryKind::Mixed: scale = fmax * tmax; break;
  }
  return scale > 0.0 ? defect / scale : 0.0;
}

HarmonicSolution solve_A_harmonic(const DiscretizedDomain& grid, const StructureField& field,
                                  const std::vector<std::optional<double>>& dirichlet,
                                  const HarmonicOptions& options) {
  if (!field.has_potential())
    throw Error(ErrorCode::NoPotential, "a custom flux has no energy to minimize; use a preset field");
  if (dirichlet.size() != grid.size()) throw Error(ErrorCode::InvalidDomain, "boundary data does not match the grid");

  std::vector<std::uint8_t> fixed(grid.size(), 0);
  std::vector<double> start(grid.size(), 0.0);
  double pinned_mean = 0.0;
  std::size_t pinned = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (dirichlet[i]) {
      fixed[i] = 1;
      pinned_mean += *dirichlet[i];
      ++pinned;
    }
  if (pinned) pinned_mean /= static_cast<double>(pinned);
  if (!options.initial.empty()) {
    if (options.initial.size() != grid.size()) throw Error(ErrorCode::InvalidDomain, "initial field does not match the grid");
    start = options.initial;
  } else {
    std::fill(start.begin(), start.end(), pinned_mean);
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (dirichlet[i]) start[i] = *dirichlet[i];

  EnergyDensity density{field.p(), options.regularization / grid.diameter(), 1.0 / field.p(), {}};
  if (field.preset() == StructurePreset::AnisotropicDiagonal) {
    density.weights.assign(grid.dim(), 1.0);
    for (int a = 0; a < grid.dim(); ++a)
      density.weights[a] = static_cast<std::size_t>(a) < field.weights().size() ? field.weights()[a] : field.weights().back();
  }
  CellEnergy energy(grid, density);
  MinimizeOptions mo;
  mo.tolerance = options.tolerance;
  mo.absolute_tolerance = options.absolute_tolerance;
  mo.max_iterations = options.max_iterations;
  mo.record_history = false;
  auto run = minimize(energy, std::move(start), fixed, mo);
  if (!run.converged)
    throw Error(ErrorCode::NonConvergence, "A-harmonic solve stopped after " + std::to_string(run.iterations) +
                                               " iterations with gradient " + std::to_string(run.gradient_norm));

  HarmonicSolution out;
  out.iterations = run.iterations;
  out.energy = run.energy;
  std::vector<double> g(grid.size()), diag;
  energy.evaluate(run.x, g, diag);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!fixed[i]) out.residual = std::max(out.residual, std::abs(g[i]) / grid.volume_weight(i));
  out.f = std::move(run.x);
  if (pinned) {
    out.gauge = "dirichlet";
  } else {
    out.gauge = "zero-mean";
    double mass = 0.0, vol = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      mass += grid.volume_weight(i) * out.f[i];
      vol += grid.volume_weight(i);
    }
    for (double& v : out.f) v -= mass / vol;
  }
  return out;
}

MaximumPrincipleVerdict maximum_principle_check(const DiscretizedDomain& grid, const StructureField& field,
                                                MaximumPrincipleKind kind) {
  if (!grid.nodes_with(NodeTag::Cut).empty())
    throw Error(ErrorCode::InvalidDomain, "the maximum principle needs a compact grid without Cut nodes");
  const bool dirichlet_type = kind == MaximumPrincipleKind::DirichletType;
  if (dirichlet_type && grid.nodes_with(NodeTag::ManifoldBoundary).empty())
    throw Error(ErrorCode::InvalidDomain, "Dirichlet-type data needs a nonempty boundary");

  std::vector<std::optional<double>> bc(grid.size());
  if (dirichlet_type)
    for (std::size_t i : grid.nodes_with(NodeTag::ManifoldBoundary)) bc[i] = 0.0;

  // A nonconstant start so the solve has something to remove.
  HarmonicOptions opts;
  opts.initial = sample(grid, [&](const Point& x) {
    double v = 1.0;
    for (int a = 0; a < grid.dim(); ++a) {
      const Axis& ax = grid.axis(a);
      const double u = (x[a] - ax.lo) / (ax.hi - ax.lo);
      v *= ax.kind == AxisKind::Periodic ? 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * u) : std::sin(std::numbers::pi * u) + u;
    }
    return v;
  });
  // The zero-data problem has the same minimizers for every regularization, so
  // a strongly regularized first pass (well conditioned even for p > 2) is
  // followed by a pass on the nearly unregularized energy from its result.
  opts.regularization = 1.0;
  opts.tolerance = 1e-13;
  auto first = solve_A_harmonic(grid, field, bc, opts);
  HarmonicOptions fine;
  fine.initial = first.f;
  fine.tolerance = 1e-10;
  fine.absolute_tolerance = 1e-14;
  auto sol = solve_A_harmonic(grid, field, bc, fine);

  MaximumPrincipleVerdict v;
  v.iterations = first.iterations + sol.iterations;
  v.gauge = sol.gauge;
  const auto pair = make_form_pair(grid, sol.f, field);
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    v.max_theta = std::max(v.max_theta, norm(pair.theta[i]));
    v.energy_pairing += grid.volume_weight(i) * dot(pair.w[i], pair.theta[i]);
    lo = std::min(lo, sol.f[i]);
    hi = std::max(hi, sol.f[i]);
  }
  v.oscillation = hi - lo;
  v.passed = v.max_theta < v.theta_tolerance && v.oscillation < v.oscillation_tolerance;
  return v;
}

}  // namespace nlpt

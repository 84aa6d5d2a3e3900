#include "nlpt/cli.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <random>
#include <sstream>
#include <string_view>

#include "nlpt/capacity.hpp"
#include "nlpt/error.hpp"
#include "nlpt/exhaustion.hpp"
#include "nlpt/parallel.hpp"
#include "nlpt/wtforms.hpp"

namespace nlpt::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr double pi = std::numbers::pi;

[[noreturn]] void invalid(const std::string& field, const std::string& reason) {
  throw Error(ErrorCode::ConfigInvalid, field + ": " + reason);
}

// A single factor: a number or one of pi, e, inf.
double parse_factor(const std::string& s, const std::string& field) {
  if (s == "pi") return pi;
  if (s == "e") return std::numbers::e;
  if (s == "inf" || s == "infinity") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    invalid(field, "not a number: '" + s + "'");
  }
  if (used != s.size()) invalid(field, "not a number: '" + s + "'");
  return v;
}

double parse_number(std::string s, const std::string& field) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  if (s.empty()) invalid(field, "empty number");
  double value = 1.0;
  char op = '*';
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && s[i] != '*' && s[i] != '/') continue;
    const double f = parse_factor(s.substr(start, i - start), field);
    value = op == '*' ? value * f : value / f;
    if (i < s.size()) op = s[i];
    start = i + 1;
  }
  return value;
}

double number(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) invalid(field, "expected a number");
  return parse_number(node.Scalar(), field);
}

double number_or(const YAML::Node& parent, const char* key, double fallback, const std::string& section) {
  const auto n = parent[key];
  return n ? number(n, section + "." + key) : fallback;
}

std::size_t count(const YAML::Node& node, const std::string& field) {
  const double v = number(node, field);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) invalid(field, "expected a nonnegative integer");
  return static_cast<std::size_t>(v);
}

std::string text(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) invalid(field, "expected a string");
  return node.Scalar();
}

std::vector<double> numbers(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) invalid(field, "expected a list");
  std::vector<double> out;
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(number(node[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

// Unknown keys are errors so that a misspelt option never falls back to its default.
void known_keys(const YAML::Node& node, const std::string& field, std::initializer_list<std::string_view> keys) {
  if (!node.IsMap()) return;
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      invalid(field.empty() ? key : field + "." + key, "unknown key");
  }
}

RadialProfile parse_profile(const YAML::Node& node, const std::string& field) {
  if (node.IsScalar()) return RadialProfile::constant(number(node, field));
  if (!node.IsMap()) invalid(field, "expected a profile map");
  known_keys(node, field, {"kind", "c", "a", "r", "values"});
  const std::string kind = node["kind"] ? text(node["kind"], field + ".kind") : "constant";
  const double c = number_or(node, "c", 1.0, field);
  const double a = number_or(node, "a", 1.0, field);
  if (kind == "constant") return RadialProfile::constant(c);
  if (kind == "power") return RadialProfile::power(c, a);
  if (kind == "exponential") return RadialProfile::exponential(c, a);
  if (kind == "sinh") return RadialProfile::sinh(c, a);
  if (kind == "tabulated")
    return RadialProfile::tabulated(numbers(node["r"], field + ".r"), numbers(node["values"], field + ".values"));
  invalid(field + ".kind", "unknown profile '" + kind + "'");
}

CrossSection parse_section(const YAML::Node& node, const std::string& field) {
  if (!node.IsMap()) invalid(field, "expected a map with shape and extents");
  known_keys(node, field, {"shape", "extents", "radius"});
  const std::string shape = node["shape"] ? text(node["shape"], field + ".shape") : "box";
  if (shape == "box") {
    if (!node["extents"]) invalid(field + ".extents", "missing");
    return CrossSection::box(numbers(node["extents"], field + ".extents"));
  }
  if (shape == "disk") return CrossSection::disk(number_or(node, "radius", 1.0, field));
  invalid(field + ".shape", "unknown shape '" + shape + "'");
}

ModelDomain parse_domain(const YAML::Node& node, const std::string& field) {
  if (!node.IsMap()) invalid(field, "expected a map");
  known_keys(node, field, {"kind", "n", "k", "r1", "r2", "angular", "base", "alpha", "beta", "factor"});
  const std::string kind = node["kind"] ? text(node["kind"], field + ".kind") : "euclidean";
  const int n = static_cast<int>(number_or(node, "n", 2, field));
  const int k = static_cast<int>(number_or(node, "k", 1, field));
  const double r1 = number_or(node, "r1", 1.0, field);
  const double r2 = number_or(node, "r2", kInf, field);
  AngularDomain angular = AngularDomain::whole();
  if (const auto a = node["angular"]) angular = AngularDomain::sector(number(a["lo"], field + ".angular.lo"),
                                                                       number(a["hi"], field + ".angular.hi"));
  if (kind == "euclidean") return ModelDomain::euclidean(n, r1);
  if (kind == "kcylinder") {
    if (!node["base"]) invalid(field + ".base", "a cylinder needs a cross-section");
    return ModelDomain::kcylinder(n, k, parse_section(node["base"], field + ".base"), r1);
  }
  if (kind == "cone") return ModelDomain::cone(n, angular, r1);
  if (kind == "warped") {
    const auto alpha = node["alpha"] ? parse_profile(node["alpha"], field + ".alpha") : RadialProfile::constant(1.0);
    const auto beta = node["beta"] ? parse_profile(node["beta"], field + ".beta") : RadialProfile::power(1.0, 1.0);
    return ModelDomain::warped(n, angular, alpha, beta, r1, r2);
  }
  if (kind == "product") {
    if (!node["factor"]) invalid(field + ".factor", "a product needs a noncompact factor");
    if (!node["base"]) invalid(field + ".base", "a product needs a compact factor");
    return ModelDomain::product(parse_domain(node["factor"], field + ".factor"),
                                parse_section(node["base"], field + ".base"));
  }
  invalid(field + ".kind", "unknown domain kind '" + kind + "'");
}

void parse_tau(const std::string& window, RunConfig& c, const std::string& field) {
  const auto first = window.find(':');
  const auto second = window.find(':', first == std::string::npos ? first : first + 1);
  if (first == std::string::npos || second == std::string::npos)
    invalid(field, "expected start:stop:step, got '" + window + "'");
  c.tau_start = parse_number(window.substr(0, first), field);
  c.tau_stop = parse_number(window.substr(first + 1, second - first - 1), field);
  c.tau_step = parse_number(window.substr(second + 1), field);
}

std::vector<TractConfig> parse_tract_list(const YAML::Node& node, const std::string& field) {
  const YAML::Node list = node.IsMap() && node["tracts"] ? node["tracts"] : node;
  if (!list.IsSequence()) invalid(field, "expected a list of tracts");
  std::vector<TractConfig> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string f = field + "[" + std::to_string(i) + "]";
    known_keys(list[i], f, {"lo", "hi", "lambda"});
    TractConfig t;
    t.lo = number(list[i]["lo"], f + ".lo");
    t.hi = number(list[i]["hi"], f + ".hi");
    t.lambda = number_or(list[i], "lambda", 0.0, f);
    out.push_back(t);
  }
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& name) {
  if (name.empty()) return name;
  const std::filesystem::path p(name);
  return p.is_absolute() ? name : (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string read_file(const std::string& path, const std::string& field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid(field, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kind_key(DomainKind kind) {
  switch (kind) {
    case DomainKind::EuclideanSpace: return "euclidean";
    case DomainKind::KCylinder: return "kcylinder";
    case DomainKind::Cone: return "cone";
    case DomainKind::WarpedProduct: return "warped";
    case DomainKind::ProductManifold: return "product";
  }
  return "?";
}

json number_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

json numbers_json(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(number_json(x));
  return a;
}

json profile_json(const RadialProfile& r) {
  json j;
  switch (r.kind()) {
    case RadialProfile::Kind::Constant: j["kind"] = "constant"; break;
    case RadialProfile::Kind::Power: j["kind"] = "power"; break;
    case RadialProfile::Kind::Exponential: j["kind"] = "exponential"; break;
    case RadialProfile::Kind::Sinh: j["kind"] = "sinh"; break;
    case RadialProfile::Kind::Tabulated:
      j["kind"] = "tabulated";
      j["r"] = numbers_json(r.table_r());
      j["values"] = numbers_json(r.table_v());
      return j;
  }
  j["c"] = number_json(r.coefficient());
  if (r.kind() != RadialProfile::Kind::Constant) j["a"] = number_json(r.exponent());
  return j;
}

json section_json(const CrossSection& s) {
  json j;
  j["shape"] = s.shape == CrossSection::Shape::Box ? "box" : "disk";
  if (s.shape == CrossSection::Shape::Box)
    j["extents"] = numbers_json(s.extents);
  else
    j["radius"] = s.extents.at(0);
  return j;
}

json domain_json(const ModelDomain& d) {
  json j;
  j["kind"] = kind_key(d.kind);
  j["n"] = d.n;
  if (d.kind == DomainKind::KCylinder) j["k"] = d.k;
  j["r1"] = number_json(d.r1);
  if (d.kind == DomainKind::WarpedProduct) j["r2"] = number_json(d.r2);
  if (!d.angular.full) j["angular"] = {{"lo", d.angular.lo}, {"hi", d.angular.hi}};
  if (d.kind == DomainKind::KCylinder || d.kind == DomainKind::ProductManifold) j["base"] = section_json(d.base);
  if (d.kind == DomainKind::WarpedProduct) {
    j["alpha"] = profile_json(d.alpha);
    j["beta"] = profile_json(d.beta);
  }
  if (d.kind == DomainKind::ProductManifold && d.factor) j["factor"] = domain_json(*d.factor);
  j["description"] = d.describe();
  return j;
}

BoundaryKind boundary_kind(const std::string& s) {
  if (s == "dirichlet") return BoundaryKind::Dirichlet;
  if (s == "compact") return BoundaryKind::CompactSupport;
  if (s == "neumann") return BoundaryKind::Neumann;
  if (s == "mixed") return BoundaryKind::Mixed;
  invalid("solver.boundary", "expected dirichlet, compact, neumann or mixed");
}

// ------------------------------------------------------------------ grids and forms

// The outer radial value of the task grid.
double grid_cut(const RunConfig& c) {
  if (c.cut > 0.0) return c.cut;
  const ModelDomain& base = c.domain.kind == DomainKind::ProductManifold ? *c.domain.factor : c.domain;
  if (std::isfinite(base.r2) && base.kind == DomainKind::WarpedProduct) return base.r2;
  return base.r1 * std::numbers::e;
}

std::size_t axis_count(const ModelDomain& d) {
  const auto section = [](const CrossSection& s) { return static_cast<std::size_t>(s.dim()); };
  switch (d.kind) {
    case DomainKind::KCylinder: return static_cast<std::size_t>(d.k) + section(d.base);
    case DomainKind::ProductManifold: return axis_count(*d.factor) + section(d.base);
    default: return static_cast<std::size_t>(d.n);
  }
}

DiscretizedDomain task_grid(const RunConfig& c, std::size_t fallback) {
  GridRequest rq;
  rq.cut = grid_cut(c);
  rq.resolution = c.resolution.empty() ? std::vector<std::size_t>(axis_count(c.domain), fallback) : c.resolution;
  return build_grid(c.domain, rq);
}

StructureField task_field(const RunConfig& c) {
  if (c.preset == "plap") return StructureField::p_laplace(c.p);
  if (c.preset == "aniso") return StructureField::anisotropic_diagonal(c.p, c.weights);
  invalid("wtcheck.preset", "expected plap or aniso");
}

std::vector<double> form_values(const RunConfig& c, const DiscretizedDomain& grid, std::span<const double> h) {
  const FormConfig& f = c.form;
  if (f.kind == "exhaustion") {
    std::vector<double> out(h.begin(), h.end());
    for (double& v : out) v *= f.amplitude;
    return out;
  }
  if (f.kind == "constant") return std::vector<double>(grid.size(), f.amplitude);
  if (f.kind == "linear") return sample(grid, [&](const Point& x) { return f.amplitude * x[0]; });
  if (f.kind == "separated") {
    if (grid.dim() < 2) invalid("form.kind", "separated forms need two axes");
    return sample(grid, [&](const Point& x) {
      return f.amplitude * std::sinh(f.lambda * x[0]) * std::sin(f.lambda * (x[1] - f.offset));
    });
  }
  if (f.kind == "polar") {
    if (grid.dim() < 2) invalid("form.kind", "polar forms need two axes");
    return sample(grid, [&](const Point& x) {
      return f.amplitude * std::pow(x[0], f.lambda) * std::sin(f.lambda * (x[1] - f.offset));
    });
  }
  invalid("form.kind", "unknown form '" + f.kind + "'");
}

json provenance(const RunConfig& c, const DiscretizedDomain* grid) {
  json j;
  j["tool"] = "nlpt";
  j["version"] = kToolVersion;
  j["seed"] = c.seed;
  if (grid) {
    json res = json::array();
    for (const auto& a : grid->axes()) res.push_back(a.count);
    j["resolution"] = res;
    j["nodes"] = grid->size();
    j["truncation"] = number_json(grid->has_radial() ? grid_cut(c) : kInf);
  }
  return j;
}

json verdict(const std::string& name, bool passed, double tolerance, const char* eps_tag = nullptr) {
  json j;
  j["name"] = name;
  j["passed"] = passed;
  j["tolerance"] = number_json(tolerance);
  if (eps_tag) j["eps_tag"] = eps_tag;
  return j;
}

// ------------------------------------------------------------------ tasks

json run_classify(const RunConfig& c) {
  const Classification cls = classify_type(c.domain, c.p);
  json r;
  r["verdict"] = to_string(cls.verdict);
  r["h0"] = number_json(cls.h0);
  r["family"] = cls.family;
  r["flux_constant"] = number_json(cls.flux_constant);
  r["t1"] = number_json(cls.t1);
  json seq = json::array();
  for (const auto& [t, v] : cls.capacity_sequence) seq.push_back({number_json(t), number_json(v)});
  r["capacity_sequence"] = seq;
  if (!cls.partial_integrals.empty()) {
    json parts = json::array();
    for (const auto& [t, v] : cls.partial_integrals) parts.push_back({number_json(t), number_json(v)});
    r["partial_integrals"] = parts;
  }
  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, nullptr);
  out["verdicts"] = json::array({verdict("type", true, 0.0)});
  out["verdicts"][0]["value"] = to_string(cls.verdict);
  return out;
}

json run_capacity(const RunConfig& c, std::vector<double>* field, const DiscretizedDomain** grid_out,
                  std::optional<DiscretizedDomain>& grid_store) {
  grid_store.emplace(task_grid(c, 128));
  const DiscretizedDomain& grid = *grid_store;
  *grid_out = &grid;
  if (!grid.has_radial()) invalid("domain", "capacity needs a radial coordinate");
  const ModelDomain& base = c.domain.kind == DomainKind::ProductManifold ? *c.domain.factor : c.domain;
  const double r1 = base.r1, r2 = grid_cut(c);
  const double tol = 1e-12 * (1.0 + r2);
  const auto cond = Condenser::from_predicates(
      grid, [&](std::size_t i) { return grid.radial(i) <= r1 + tol; },
      [&](std::size_t i) { return grid.radial(i) >= r2 - tol && grid.tag(i) == NodeTag::Cut; });
  SolverOptions so;
  so.tolerance = c.tolerance;
  so.max_iterations = c.max_iterations;
  so.record_history = false;
  const CapacityResult cap = p_capacity(cond, c.p, so);
  if (field) *field = cap.minimizer;

  json r;
  r["value"] = cap.value;
  r["regularized_value"] = cap.regularized_value;
  r["iterations"] = cap.iterations;
  r["converged"] = cap.converged;
  r["gradient_norm"] = number_json(cap.gradient_norm);
  r["plates"] = {{"inner_radius", r1}, {"outer_radius", r2}};
  json verdicts = json::array({verdict("converged", cap.converged, c.tolerance)});

  // Closed-form comparison through the special exhaustion when the catalog has one.
  try {
    const ExhaustionFunction h = make_special_exhaustion(c.domain, c.p);
    const double t1 = h.value_at(r1), t2 = h.value_at(r2);
    const ExhaustionCapacity ex = capacity_via_exhaustion_detail(h, grid, c.p, t1, t2);
    const double analytic = h.flux_constant() / std::pow(t2 - t1, c.p - 1.0);
    r["exhaustion"] = {{"family", to_string(h.family())},
                       {"t1", t1},
                       {"t2", t2},
                       {"shell_flux", ex.flux},
                       {"value", ex.value},
                       {"closed_form", analytic},
                       {"slack", (cap.value - analytic) / analytic},
                       {"slack_shell", (cap.value - ex.value) / ex.value}};
    verdicts.push_back(verdict("matches_exhaustion", std::abs(cap.value - ex.value) <= 0.03 * ex.value, 0.03));
  } catch (const Error& e) {
    r["exhaustion"] = {{"unavailable", e.what()}};
  }
  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, &grid);
  out["provenance"]["tolerance"] = c.tolerance;
  out["verdicts"] = verdicts;
  return out;
}

json run_verify(const RunConfig& c, std::vector<double>* field, const DiscretizedDomain** grid_out,
                std::optional<DiscretizedDomain>& grid_store) {
  const ExhaustionFunction h = make_special_exhaustion(c.domain, c.p);
  grid_store.emplace(task_grid(c, 128));
  const DiscretizedDomain& grid = *grid_store;
  *grid_out = &grid;
  if (field) *field = h.evaluate(grid);
  const ExhaustionVerdict v = verify_exhaustion(h, grid, c.p);
  json r;
  r["family"] = to_string(h.family());
  r["h0"] = number_json(h.h0());
  r["pde_residual_max"] = v.pde_residual_max;
  r["pde_residual_relative"] = v.pde_residual_relative;
  json flux = json::array();
  for (const auto& s : v.flux) flux.push_back({{"t", s.t}, {"flux", s.value}});
  r["flux"] = flux;
  r["flux_constant"] = number_json(h.flux_constant());
  r["flux_relative_spread"] = v.flux_relative_spread;
  r["boundary_pairing_max"] = v.boundary_pairing_max;
  r["boundary_pairing_relative"] = v.boundary_pairing_relative;
  // Cylinders with p != k: the ambient exponent uses n where the radial
  // equation gives k. Report the residual of both so the difference is visible.
  if (c.domain.kind == DomainKind::KCylinder && h.family() == ExhaustionFamily::PowerDk) {
    const double ambient = ambient_slab_exponent(c.domain.n, c.p);
    json cmp = {{"derived_exponent", h.exponent()},
                {"derived_residual_max", v.pde_residual_max},
                {"ambient_exponent", ambient}};
    if (std::abs(ambient) > 1e-12) {
      const auto alt = ExhaustionFunction::radial_power(c.domain, c.p, ambient);
      cmp["ambient_residual_max"] = residual_summary(alt, grid, c.p).max_abs;
    } else {
      cmp["ambient_residual_max"] = nullptr;  // exponent 0: h is constant, not an exhaustion
    }
    r["exponent_check"] = cmp;
  }
  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, &grid);
  out["verdicts"] = json::array({verdict("a1_residual", v.a1, v.options.residual_tolerance),
                                 verdict("a2_flux", v.a2, v.options.flux_tolerance),
                                 verdict("b2_boundary", v.b2, v.options.pairing_tolerance)});
  return out;
}

json band_json(const BandBound& b) {
  return {{"c", b.c},       {"lhs", b.lhs},     {"rhs", b.rhs},
          {"rhs_at_zero", b.rhs_at_zero}, {"slack", b.slack}, {"holds", b.holds}};
}

json run_growth(const RunConfig& c, std::optional<EnergyCurve>& curve, const DiscretizedDomain** grid_out,
                std::optional<DiscretizedDomain>& grid_store) {
  grid_store.emplace(task_grid(c, 128));
  const DiscretizedDomain& grid = *grid_store;
  *grid_out = &grid;
  const ExhaustionFunction ex = make_special_exhaustion(c.domain, c.p);
  const std::vector<double> h = ex.evaluate(grid);
  const StructureField field = task_field(c);
  const ScalarFormPair pair = make_form_pair(grid, form_values(c, grid, h), field);
  const auto taus = c.taus();

  GrowthOptions go;
  go.boundary = boundary_kind(c.boundary);
  const GrowthReport g = growth_verifier(pair, h, c.p, c.nu1, taus, go);
  curve = g.curve;

  json r;
  r["exhaustion"] = to_string(ex.family());
  r["structure"] = field.describe();
  r["form"] = c.form.kind;
  r["window"] = number_json(g.truncation);
  r["boundary"] = to_string(g.boundary);
  r["boundary_defect"] = g.boundary_defect;
  r["degenerate"] = g.degenerate;
  r["differential_margin"] = number_json(g.differential_margin);
  r["monotone_dip"] = number_json(g.monotone_dip);
  r["integrated_excess"] = number_json(g.integrated_excess);
  json cj;
  cj["tau"] = numbers_json(g.curve.tau);
  cj["I"] = numbers_json(g.curve.I);
  cj["dI"] = numbers_json(g.curve.dI);
  cj["eps"] = numbers_json(g.curve.eps);
  json tags = json::array();
  for (auto t : g.curve.eps_tag) tags.push_back(to_string(t));
  cj["eps_tag"] = tags;
  cj["monotone_q"] = numbers_json(g.curve.monotone);
  r["curve"] = cj;

  json verdicts = json::array({verdict("differential", g.differential_ok, g.tolerance, "PerForm"),
                               verdict("monotone", g.monotone_ok, g.tolerance, "PerForm"),
                               verdict("integrated", g.integrated_ok, g.tolerance, "PerForm")});

  json bands = json::array();
  for (const auto& [t1, t2] : c.bands) {
    const AnnulusBoundReport b = annulus_bound_check(pair, h, c.p, c.nu1, c.nu2, t1, t2);
    bands.push_back({{"tau1", t1},
                     {"tau2", t2},
                     {"I1", b.I1},
                     {"constant_defect", b.constant_defect},
                     {"constants_admissible", b.constants_admissible},
                     {"flux_bound", band_json(b.flux_bound)},
                     {"trace_bound", band_json(b.trace_bound)}});
    char tag[64];
    std::snprintf(tag, sizeof tag, "(%g,%g)", t1, t2);
    verdicts.push_back(verdict(std::string("flux_bound") + tag, b.flux_bound.holds, 0.0));
    verdicts.push_back(verdict(std::string("trace_bound") + tag, b.trace_bound.holds, 0.0));
  }
  if (!bands.empty()) r["bands"] = bands;

  if (taus.size() >= 3 && !g.degenerate) {
    const AlternativeReport a = pl_alternative_check(pair, h, c.p, c.nu1, c.nu2, taus.front(), taus.back(), taus.size());
    r["alternative"] = {{"verdict", to_string(a.alternative)},
                        {"liminf_a", number_json(a.liminf_a)},
                        {"liminf_b", number_json(a.liminf_b)},
                        {"liminf_c", number_json(a.liminf_c)},
                        {"bound_a", number_json(a.bound_a)},
                        {"bound_b", number_json(a.bound_b)},
                        {"bound_c", number_json(a.bound_c)},
                        {"extrapolated", a.extrapolated},
                        {"eps_tag", to_string(a.eps_tag)}};
  } else if (g.degenerate) {
    r["alternative"] = {{"verdict", to_string(Alternative::TrivialForm)}};
  }

  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, &grid);
  out["provenance"]["tolerance"] = g.tolerance;
  out["verdicts"] = verdicts;
  return out;
}

json run_wtcheck(const RunConfig& c) {
  const StructureField field = task_field(c);
  const std::vector<std::size_t> res = c.resolution.empty() ? std::vector<std::size_t>{33, 33} : c.resolution;
  const auto grid = compact_box_grid(std::vector<double>(res.size(), 1.0), res);
  const double nu1 = field.nu1(), nu2 = field.nu2();
  const double nu0 = wt2_implies_wt1_constant(nu1, nu2, c.p);

  std::mt19937_64 rng(c.seed);
  std::size_t wt2_pass = 0, wt1_pass = 0, chain_fail = 0;
  double worst_wt1 = kInf, worst_wt2 = kInf, worst_growth = kInf;
  json failures = json::array();
  for (std::size_t k = 0; k < c.pairs; ++k) {
    const ScalarFormPair pair = random_form_pair(grid, field, rng);
    const WtReport w2 = check_wt2(pair, nu1, nu2, c.p);
    const WtReport w1 = check_wt1(pair, nu0, c.p);
    worst_wt2 = std::min(worst_wt2, w2.margin);
    worst_growth = std::min(worst_growth, w2.growth_margin);
    worst_wt1 = std::min(worst_wt1, w1.margin);
    if (w2.passed) ++wt2_pass;
    if (w1.passed) ++wt1_pass;
    if (w2.passed && !w1.passed) {
      ++chain_fail;
      failures.push_back({{"pair", k}, {"node", w1.witness_node}, {"margin", w1.margin}});
    }
  }
  const StructureReport sr = check_structure(field, 4096, grid.dim(), grid.size(), c.seed);

  json r;
  r["structure"] = field.describe();
  r["preset"] = to_string(field.preset());
  r["nu0"] = nu0;
  r["nu1"] = nu1;
  r["nu2"] = nu2;
  r["pairs"] = c.pairs;
  r["wt2_passed"] = wt2_pass;
  r["wt1_passed"] = wt1_pass;
  r["chain_failures"] = chain_fail;
  r["failures"] = failures;
  r["worst_margins"] = {{"wt1", number_json(worst_wt1)},
                        {"wt2_coercivity", number_json(worst_wt2)},
                        {"wt2_growth", number_json(worst_growth)}};
  r["structure_check"] = {{"samples", sr.samples},
                          {"coercivity_margin", sr.coercivity_margin},
                          {"growth_margin", sr.growth_margin},
                          {"passed", sr.passed}};
  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, &grid);
  out["verdicts"] = json::array({verdict("wt_chain", chain_fail == 0, 1e-12),
                                 verdict("structure_constants", sr.passed, sr.tolerance)});
  return out;
}

std::vector<Partition> slab_partitions(const DiscretizedDomain& grid, const StructureField& field, std::size_t N,
                                       std::size_t shifts) {
  const std::size_t n = grid.axis(1).count;
  std::vector<Partition> out;
  const std::size_t step = std::max<std::size_t>(1, n / (4 * N * (shifts + 1)));
  for (long s = -static_cast<long>(shifts); s <= static_cast<long>(shifts); ++s) {
    if (N == 1 && s != 0) continue;
    std::vector<std::size_t> cuts{0};
    bool ok = true;
    for (std::size_t k = 1; k < N; ++k) {
      const long pos = static_cast<long>(k * (n - 1) / N) + s * static_cast<long>(step);
      if (pos <= static_cast<long>(cuts.back()) + 2 || pos >= static_cast<long>(n) - 2) ok = false;
      cuts.push_back(static_cast<std::size_t>(std::max(pos, 0L)));
    }
    if (ok) out.push_back(slab_partition(grid, field, 1, cuts));
  }
  return out;
}

json run_ahlfors(const RunConfig& c) {
  const auto grid = task_grid(c, 128);
  if (grid.dim() != 2 || grid.axis(0).kind != AxisKind::Regular || grid.axis(1).kind != AxisKind::Regular)
    invalid("domain", "tract runs need a two-dimensional strip (a 2-cylinder over an interval)");
  const ExhaustionFunction ex = make_special_exhaustion(c.domain, c.p);
  const std::vector<double> h = ex.evaluate(grid);
  const StructureField field = task_field(c);

  TractFamily tracts;
  const double dy = grid.axis(1).step();
  for (std::size_t k = 0; k < c.tracts.size(); ++k) {
    const TractConfig& t = c.tracts[k];
    const double width = t.hi - t.lo;
    const double lambda = t.lambda > 0.0 ? t.lambda : pi / width;
    NodeMask mask(grid.size(), 0);
    std::vector<double> f(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Point& x = grid.coordinates(i);
      if (grid.tag(i) == NodeTag::ManifoldBoundary) continue;
      if (x[1] > t.lo + 1e-9 * dy && x[1] < t.hi - 1e-9 * dy) {
        mask[i] = 1;
        f[i] = std::sinh(lambda * x[0]) * std::sin(pi * (x[1] - t.lo) / width);
      }
    }
    tracts.members.push_back({std::move(mask), make_form_pair(grid, std::move(f), field)});
  }
  const auto partitions = slab_partitions(grid, field, c.N, c.partition_shifts);
  if (partitions.empty()) invalid("ahlfors.N", "no slab partition with this many parts fits the grid");
  const auto taus = c.taus();
  if (taus.size() < 2) invalid("solver.tau", "the window needs a base level and at least one more");
  const std::vector<double> window(taus.begin() + 1, taus.end());
  const AhlforsReport a = ahlfors_count_bound(tracts, grid, h, c.p, c.nu1, c.nu2, c.N, taus.front(), window, partitions);

  json r;
  r["verdict"] = to_string(a.verdict);
  r["L"] = a.L;
  r["N"] = a.N;
  r["tau0"] = a.tau0;
  r["tau"] = numbers_json(a.tau);
  r["E"] = numbers_json(a.E);
  r["E_integral"] = numbers_json(a.E_integral);
  r["I"] = numbers_json(a.I);
  r["chain_sum"] = numbers_json(a.chain_sum);
  r["chain_witness"] = numbers_json(a.chain_witness);
  r["am_gm_mean"] = numbers_json(a.am_gm_mean);
  r["am_gm_geometric"] = numbers_json(a.am_gm_geometric);
  r["divergence_trend"] = a.divergence_trend;
  r["energy_decay"] = a.energy_decay;
  r["flux_decay"] = a.flux_decay;
  r["trace_decay"] = a.trace_decay;
  r["contradiction"] = a.contradiction;
  r["partitions"] = partitions.size();
  json out;
  out["results"] = r;
  out["provenance"] = provenance(c, &grid);
  out["provenance"]["tolerance"] = a.tolerance;
  const char* tag = to_string(a.eps_tag);
  out["verdicts"] = json::array({verdict("chain", a.chain_holds, a.tolerance, tag),
                                 verdict("am_gm", a.am_gm_holds, 1e-12, tag),
                                 verdict("count_bound", a.verdict == AhlforsVerdict::BoundAsserted, a.tolerance, tag)});
  return out;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ------------------------------------------------------------------ public

const char* to_string(Task task) noexcept {
  switch (task) {
    case Task::Classify: return "classify";
    case Task::Capacity: return "capacity";
    case Task::VerifyExhaustion: return "verify-exhaustion";
    case Task::Growth: return "growth";
    case Task::WtCheck: return "wtcheck";
    case Task::Ahlfors: return "ahlfors";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::Classify, Task::Capacity, Task::VerifyExhaustion, Task::Growth, Task::WtCheck, Task::Ahlfors})
    if (name == to_string(t)) return t;
  invalid("task", "unknown task '" + std::string(name) + "'");
}

std::vector<double> RunConfig::taus() const {
  std::vector<double> out;
  if (!(tau_step > 0.0) || tau_stop < tau_start) return out;
  const auto n = static_cast<std::size_t>(std::floor((tau_stop - tau_start) / tau_step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(tau_start + static_cast<double>(i) * tau_step);
  return out;
}

RunConfig default_config(Task task) {
  RunConfig c;
  c.task = task;
  switch (task) {
    case Task::Classify:
    case Task::VerifyExhaustion: break;
    case Task::Capacity: c.cut = std::numbers::e; break;
    case Task::Growth:
      c.domain = ModelDomain::kcylinder(2, 1, CrossSection::box({pi}), 1.0);
      c.resolution = {256, 64};
      c.cut = 3.5;
      c.bands = {{1.0, 2.0}, {0.5, 3.0}};
      break;
    case Task::WtCheck: break;
    case Task::Ahlfors:
      c.domain = ModelDomain::kcylinder(2, 1, CrossSection::box({2.0 * pi}), 1.0);
      c.resolution = {256, 129};
      c.cut = 3.5;
      c.N = 2;
      c.tracts = {{0.0, pi, 0.0}, {pi, 2.0 * pi, 0.0}};
      c.tau_start = 0.5;
      c.tau_stop = 3.0;
      c.tau_step = 0.25;
      break;
  }
  return c;
}

RunConfig parse_config(std::string_view text_in, const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text_in));
  } catch (const YAML::Exception& e) {
    invalid("config", std::string("malformed YAML: ") + e.what());
  }
  if (!root.IsMap()) invalid("config", "expected a map at the top level");
  if (!root["task"]) invalid("task", "missing");
  known_keys(root, "", {"task", "seed", "threads", "domain", "solver", "form", "wtcheck", "ahlfors", "output"});
  RunConfig c = default_config(parse_task(text(root["task"], "task")));
  if (const auto n = root["seed"]) c.seed = count(n, "seed");
  if (const auto n = root["threads"]) c.threads = static_cast<unsigned>(count(n, "threads"));
  if (const auto d = root["domain"]) {
    c.domain = parse_domain(d, "domain");
    c.domain_given = true;
  }
  if (const auto s = root["solver"]) {
    if (!s.IsMap()) invalid("solver", "expected a map");
    known_keys(s, "solver", {"p", "nu1", "nu2", "resolution", "cut", "tolerance", "max_iterations", "tau", "boundary",
                             "bands"});
    c.p = number_or(s, "p", c.p, "solver");
    c.nu1 = number_or(s, "nu1", c.nu1, "solver");
    c.nu2 = number_or(s, "nu2", c.nu2, "solver");
    if (const auto r = s["resolution"]) {
      c.resolution.clear();
      if (!r.IsSequence()) invalid("solver.resolution", "expected a list");
      for (std::size_t i = 0; i < r.size(); ++i) c.resolution.push_back(count(r[i], "solver.resolution"));
    }
    c.cut = number_or(s, "cut", c.cut, "solver");
    c.tolerance = number_or(s, "tolerance", c.tolerance, "solver");
    if (const auto n = s["max_iterations"]) c.max_iterations = count(n, "solver.max_iterations");
    if (const auto t = s["tau"]) parse_tau(text(t, "solver.tau"), c, "solver.tau");
    if (const auto b = s["boundary"]) c.boundary = text(b, "solver.boundary");
    if (const auto b = s["bands"]) {
      if (!b.IsSequence()) invalid("solver.bands", "expected a list of [tau1, tau2]");
      c.bands.clear();
      for (std::size_t i = 0; i < b.size(); ++i) {
        const auto v = numbers(b[i], "solver.bands[" + std::to_string(i) + "]");
        if (v.size() != 2) invalid("solver.bands", "each band is [tau1, tau2]");
        c.bands.emplace_back(v[0], v[1]);
      }
    }
  }
  if (const auto f = root["form"]) {
    known_keys(f, "form", {"kind", "lambda", "amplitude", "offset"});
    if (const auto k = f["kind"]) c.form.kind = text(k, "form.kind");
    c.form.lambda = number_or(f, "lambda", c.form.lambda, "form");
    c.form.amplitude = number_or(f, "amplitude", c.form.amplitude, "form");
    c.form.offset = number_or(f, "offset", c.form.offset, "form");
  }
  if (const auto w = root["wtcheck"]) {
    known_keys(w, "wtcheck", {"pairs", "preset", "weights"});
    if (const auto n = w["pairs"]) c.pairs = count(n, "wtcheck.pairs");
    if (const auto n = w["preset"]) c.preset = text(n, "wtcheck.preset");
    if (const auto n = w["weights"]) c.weights = numbers(n, "wtcheck.weights");
  }
  if (const auto a = root["ahlfors"]) {
    known_keys(a, "ahlfors", {"N", "shifts", "tracts"});
    if (const auto n = a["N"]) c.N = count(n, "ahlfors.N");
    if (const auto n = a["shifts"]) c.partition_shifts = count(n, "ahlfors.shifts");
    if (const auto n = a["tracts"]) {
      if (n.IsScalar()) {
        c.tracts_file = resolve(base_dir, n.Scalar());
        c.tracts = load_tracts(c.tracts_file);
      } else {
        c.tracts = parse_tract_list(n, "ahlfors.tracts");
      }
    }
  }
  if (const auto o = root["output"]) {
    known_keys(o, "output", {"path", "grid", "format"});
    if (const auto n = o["path"]) c.out = resolve(base_dir, text(n, "output.path"));
    if (const auto n = o["grid"]) c.grid_out = resolve(base_dir, text(n, "output.grid"));
    if (const auto n = o["format"]) {
      const std::string f = text(n, "output.format");
      if (f == "json")
        c.format = OutputFormat::Json;
      else if (f == "csv")
        c.format = OutputFormat::Csv;
      else
        invalid("output.format", "expected json or csv");
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  const std::string body = read_file(path, "--config");
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(body, dir.empty() ? "." : dir.string());
}

std::vector<TractConfig> load_tracts(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::Load(read_file(path, "ahlfors.tracts"));
  } catch (const YAML::Exception& e) {
    invalid("ahlfors.tracts", std::string("malformed YAML: ") + e.what());
  }
  return parse_tract_list(root, "ahlfors.tracts");
}

void validate(const RunConfig& c) {
  if (!(c.p > 1.0) || !std::isfinite(c.p)) invalid("solver.p", "must exceed 1, got " + format_number(c.p));
  if (!(c.nu1 > 0.0)) invalid("solver.nu1", "must be positive");
  if (!(c.nu2 >= c.nu1)) invalid("solver.nu2", "must be at least nu1");
  for (std::size_t r : c.resolution)
    if (r < 8) invalid("solver.resolution", "every axis needs at least 8 nodes");
  if (c.cut < 0.0) invalid("solver.cut", "must be positive");
  if (!(c.tolerance > 0.0)) invalid("solver.tolerance", "must be positive");
  if (c.max_iterations == 0) invalid("solver.max_iterations", "must be positive");
  try {
    c.domain.validate();
  } catch (const Error& e) {
    invalid("domain", e.what());
  }
  if (c.task == Task::Growth || c.task == Task::Ahlfors) {
    if (!(c.tau_step > 0.0)) invalid("solver.tau", "step must be positive");
    if (c.taus().empty()) invalid("solver.tau", "the window is empty");
    if (!(c.tau_start > 0.0)) invalid("solver.tau", "levels must be positive");
    boundary_kind(c.boundary);
    for (const auto& [a, b] : c.bands)
      if (!(0.0 < a && a < b)) invalid("solver.bands", "need 0 < tau1 < tau2");
  }
  if (c.task == Task::WtCheck || c.task == Task::Growth || c.task == Task::Ahlfors) {
    if (c.preset != "plap" && c.preset != "aniso") invalid("wtcheck.preset", "expected plap or aniso");
    if (c.preset == "aniso") {
      if (c.weights.empty()) invalid("wtcheck.weights", "empty");
      for (double w : c.weights)
        if (!(w > 0.0)) invalid("wtcheck.weights", "weights must be positive");
    }
  }
  if (c.task == Task::WtCheck && c.pairs == 0) invalid("wtcheck.pairs", "must be positive");
  if (c.task == Task::Ahlfors) {
    if (c.N == 0) invalid("ahlfors.N", "must be at least 1");
    if (c.tracts.empty()) invalid("ahlfors.tracts", "no tracts given");
    for (const auto& t : c.tracts)
      if (!(t.hi > t.lo)) invalid("ahlfors.tracts", "each tract needs lo < hi");
  }
}

json config_to_json(const RunConfig& c) {
  json j;
  j["task"] = to_string(c.task);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["domain"] = domain_json(c.domain);
  json s;
  s["p"] = c.p;
  s["nu1"] = c.nu1;
  s["nu2"] = c.nu2;
  s["resolution"] = c.resolution;
  s["cut"] = c.cut;
  s["tolerance"] = c.tolerance;
  s["max_iterations"] = c.max_iterations;
  s["tau"] = {{"start", c.tau_start}, {"stop", c.tau_stop}, {"step", c.tau_step}};
  s["boundary"] = c.boundary;
  json bands = json::array();
  for (const auto& [a, b] : c.bands) bands.push_back({a, b});
  s["bands"] = bands;
  j["solver"] = s;
  j["form"] = {{"kind", c.form.kind}, {"lambda", c.form.lambda}, {"amplitude", c.form.amplitude},
               {"offset", c.form.offset}};
  j["wtcheck"] = {{"pairs", c.pairs}, {"preset", c.preset}, {"weights", c.weights}};
  json tracts = json::array();
  for (const auto& t : c.tracts) tracts.push_back({{"lo", t.lo}, {"hi", t.hi}, {"lambda", t.lambda}});
  j["ahlfors"] = {{"N", c.N}, {"tracts", tracts}, {"shifts", c.partition_shifts}};
  j["output"] = {{"format", c.format == OutputFormat::Json ? "json" : "csv"}};
  return j;
}

Report run(const RunConfig& c) {
  validate(c);
  if (c.threads) set_thread_count(c.threads);
  Report report;
  std::optional<DiscretizedDomain> grid_store;
  const DiscretizedDomain* grid = nullptr;
  std::vector<double> field;
  json body;
  try {
    switch (c.task) {
      case Task::Classify: body = run_classify(c); break;
      case Task::Capacity: body = run_capacity(c, &field, &grid, grid_store); break;
      case Task::VerifyExhaustion: body = run_verify(c, &field, &grid, grid_store); break;
      case Task::Growth: body = run_growth(c, report.curve, &grid, grid_store); break;
      case Task::WtCheck: body = run_wtcheck(c); break;
      case Task::Ahlfors: body = run_ahlfors(c); break;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    throw Error(e.code(), std::string(to_string(c.task)) + " task: " + e.what());
  }
  report.json["task"] = to_string(c.task);
  report.json["config"] = config_to_json(c);
  report.json["results"] = std::move(body["results"]);
  report.json["provenance"] = std::move(body["provenance"]);
  report.json["verdicts"] = std::move(body["verdicts"]);

  if (!c.grid_out.empty() && grid && !field.empty()) {
    std::ofstream out(c.grid_out, std::ios::binary);
    if (!out) invalid("output.grid", "cannot write '" + c.grid_out + "'");
    out << export_grid_text(*grid, {{"field", std::span<const double>(field)}});
  }
  return report;
}

std::string emit_curve(const EnergyCurve& curve) {
  if (curve.tau.empty()) throw Error(ErrorCode::NoCurvePayload, "the curve has no samples");
  std::string out = "tau,I,dI,eps,eps_tag,monotone_q\n";
  for (std::size_t i = 0; i < curve.tau.size(); ++i) {
    out += format_number(curve.tau[i]) + ',' + format_number(curve.I[i]) + ',' + format_number(curve.dI[i]) + ',' +
           format_number(curve.eps[i]) + ',' + to_string(curve.eps_tag[i]) + ',' + format_number(curve.monotone[i]) +
           '\n';
  }
  return out;
}

std::string emit_curve(const Report& report) {
  if (!report.curve) throw Error(ErrorCode::NoCurvePayload, "the report carries no energy curve");
  return emit_curve(*report.curve);
}

EnergyCurve parse_curve(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "tau,I,dI,eps,eps_tag,monotone_q")
    invalid("curve", "missing or unexpected header");
  EnergyCurve c;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) invalid("curve", "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells");
    auto num = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) invalid("curve", "row " + std::to_string(row) + ": bad number '" + s + "'");
      return v;
    };
    c.tau.push_back(num(cells[0]));
    c.I.push_back(num(cells[1]));
    c.dI.push_back(num(cells[2]));
    c.eps.push_back(num(cells[3]));
    if (cells[4] == to_string(EpsilonTag::PerForm))
      c.eps_tag.push_back(EpsilonTag::PerForm);
    else if (cells[4] == to_string(EpsilonTag::FamilyUpperBound))
      c.eps_tag.push_back(EpsilonTag::FamilyUpperBound);
    else
      invalid("curve", "row " + std::to_string(row) + ": unknown eps tag '" + cells[4] + "'");
    c.monotone.push_back(num(cells[5]));
  }
  return c;
}

std::string render(const Report& report, OutputFormat format) {
  if (format == OutputFormat::Csv) return emit_curve(report);
  return report.json.dump(2) + "\n";
}

}  // namespace nlpt::cli

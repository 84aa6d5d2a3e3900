#include "nlpt/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "nlpt/error.hpp"
#include "nlpt/variational.hpp"

namespace nlpt {

Condenser Condenser::from_tags(const DiscretizedDomain& grid) {
  Condenser c;
  c.grid = &grid;
  c.plate_a = grid.nodes_with(NodeTag::PlateA);
  c.plate_b = grid.nodes_with(NodeTag::PlateB);
  return c;
}

Condenser Condenser::from_predicates(const DiscretizedDomain& grid, const std::function<bool(std::size_t)>& in_a,
                                     const std::function<bool(std::size_t)>& in_b) {
  Condenser c;
  c.grid = &grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (in_a(i)) c.plate_a.push_back(i);
    if (in_b(i)) c.plate_b.push_back(i);
  }
  return c;
}

void Condenser::validate() const {
  if (!grid) throw Error(ErrorCode::InvalidDomain, "condenser has no grid");
  if (plate_a.empty() || plate_b.empty()) throw Error(ErrorCode::InvalidDomain, "both plates must be nonempty");
  std::vector<std::uint8_t> mark(grid->size(), 0);
  for (std::size_t i : plate_a) mark[i] = 1;
  for (std::size_t i : plate_b) {
    if (mark[i] == 1) throw Error(ErrorCode::InvalidDomain, "plates overlap");
    mark[i] = 2;
  }
  for (std::size_t i : plate_a) {
    for (int a = 0; a < grid->dim(); ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid->neighbor(i, a, dir);
        if (j != kNoNode && mark[j] == 2) throw Error(ErrorCode::InvalidDomain, "plate closures touch");
      }
  }
  if (!active.empty()) {
    if (active.size() != grid->size()) throw Error(ErrorCode::InvalidDomain, "active mask does not match the grid");
    for (std::size_t i : plate_a)
      if (!active[i]) throw Error(ErrorCode::InvalidDomain, "plate A leaves the domain D");
    for (std::size_t i : plate_b)
      if (!active[i]) throw Error(ErrorCode::InvalidDomain, "plate B leaves the domain D");
  }
}

double dirichlet_energy(const DiscretizedDomain& grid, std::span<const double> phi, double p,
                        std::span<const std::uint8_t> active) {
  CellEnergy e(grid, EnergyDensity{p, 0.0, 1.0, {}}, std::vector<std::uint8_t>(active.begin(), active.end()));
  return e.value(phi);
}

namespace {

// Dijkstra distances (metric edge lengths) from a node set, restricted to D.
std::vector<double> distance_from(const DiscretizedDomain& grid, const std::vector<std::size_t>& seeds,
                                  const std::vector<std::uint8_t>& active) {
  std::vector<double> dist(grid.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (std::size_t s : seeds) {
    dist[s] = 0.0;
    queue.emplace(0.0, s);
  }
  while (!queue.empty()) {
    auto [d, i] = queue.top();
    queue.pop();
    if (d > dist[i]) continue;
    for (int a = 0; a < grid.dim(); ++a)
      for (int dir : {-1, 1}) {
        const std::size_t j = grid.neighbor(i, a, dir);
        if (j == kNoNode || (!active.empty() && !active[j])) continue;
        const double len = grid.axis(a).step() * 0.5 * (grid.scales(i)[a] + grid.scales(j)[a]);
        if (d + len < dist[j]) {
          dist[j] = d + len;
          queue.emplace(dist[j], j);
        }
      }
  }
  return dist;
}

std::vector<double> blended_guess(const Condenser& c) {
  const auto da = distance_from(*c.grid, c.plate_a, c.active);
  const auto db = distance_from(*c.grid, c.plate_b, c.active);
  std::vector<double> phi(c.grid->size(), 0.5);
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (std::isfinite(da[i]) && std::isfinite(db[i]) && da[i] + db[i] > 0.0) phi[i] = da[i] / (da[i] + db[i]);
  return phi;
}

}  // namespace

CapacityResult p_capacity(const Condenser& condenser, double p, const SolverOptions& options) {
  if (!(p > 1.0)) throw Error(ErrorCode::InvalidDomain, "p must exceed 1");
  condenser.validate();
  const DiscretizedDomain& grid = *condenser.grid;

  std::vector<double> start;
  if (!options.initial.empty()) {
    if (options.initial.size() != grid.size())
      throw Error(ErrorCode::InvalidDomain, "initial field does not match the grid");
    start = options.initial;
  } else if (p != 2.0) {
    SolverOptions linear = options;
    linear.tolerance = std::max(options.tolerance, 1e-6);
    linear.record_history = false;
    start = p_capacity(condenser, 2.0, linear).minimizer;
  } else {
    start = blended_guess(condenser);
  }

  std::vector<std::uint8_t> fixed(grid.size(), 0);
  for (std::size_t i : condenser.plate_a) {
    fixed[i] = 1;
    start[i] = 0.0;
  }
  for (std::size_t i : condenser.plate_b) {
    fixed[i] = 1;
    start[i] = 1.0;
  }
  if (!condenser.active.empty())
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (!condenser.active[i]) fixed[i] = 1;

  const double delta = options.regularization / grid.diameter();
  CellEnergy energy(grid, EnergyDensity{p, delta, 1.0, {}}, condenser.active);
  MinimizeOptions mo;
  mo.tolerance = options.tolerance;
  mo.max_iterations = options.max_iterations;
  mo.record_history = options.record_history;
  auto run = minimize(energy, std::move(start), fixed, mo);

  CapacityResult out;
  out.regularized_value = run.energy;
  out.iterations = run.iterations;
  out.converged = run.converged;
  out.gradient_norm = run.gradient_norm;
  out.initial_gradient_norm = run.initial_gradient_norm;
  out.energy_history = std::move(run.history);
  out.minimizer = std::move(run.x);
  for (double& v : out.minimizer) v = std::clamp(v, 0.0, 1.0);
  out.value = dirichlet_energy(grid, out.minimizer, p, condenser.active);
  return out;
}

ExhaustionCapacity capacity_via_exhaustion_detail(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p,
                                                  double t1, double t2) {
  const double floor = h.value_at(std::max(h.exceptional_radius(), 1e-300));
  if (!(t1 >= floor && t2 > t1 && t2 < h.h0()))
    throw Error(ErrorCode::LevelOutOfRange, "levels must satisfy h(K) <= t1 < t2 < h0");
  ExhaustionCapacity out;
  out.verdict = verify_exhaustion(h, grid, p);
  if (!out.verdict.passed())
    throw Error(ErrorCode::UnverifiedExhaustion,
                std::string("exhaustion fails") + (out.verdict.a1 ? "" : " a1") + (out.verdict.a2 ? "" : " a2") +
                    (out.verdict.b2 ? "" : " b2") + " on this grid; the formula would only bound the capacity");
  double sum = 0.0;
  for (const auto& f : out.verdict.flux) sum += f.value;
  out.flux = sum / static_cast<double>(out.verdict.flux.size());
  out.value = out.flux / std::pow(t2 - t1, p - 1.0);
  return out;
}

double capacity_via_exhaustion(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p, double t1,
                               double t2) {
  return capacity_via_exhaustion_detail(h, grid, p, t1, t2).value;
}

std::vector<double> extremal_field(const ExhaustionFunction& h, const DiscretizedDomain& grid, double t1, double t2) {
  auto v = h.evaluate(grid);
  for (double& x : v) x = std::clamp((x - t1) / (t2 - t1), 0.0, 1.0);
  return v;
}

Classification classify_type(const ModelDomain& domain, double p) {
  const ExhaustionFunction h = make_special_exhaustion(domain, p);
  Classification c;
  c.h0 = h.h0();
  c.verdict = std::isfinite(c.h0) ? TypeVerdict::Hyperbolic : TypeVerdict::Parabolic;
  c.family = to_string(h.family());
  c.flux_constant = h.flux_constant();
  const double s_ref = std::max(2.0 * h.exceptional_radius(), h.exceptional_radius() + 1.0);
  c.t1 = h.value_at(s_ref);
  for (int k = 0; k < 16; ++k) {
    const double tk = std::isfinite(c.h0) ? c.h0 - (c.h0 - c.t1) * std::ldexp(1.0, -k - 1) : c.t1 + std::ldexp(1.0, k);
    c.capacity_sequence.emplace_back(tk, c.flux_constant / std::pow(tk - c.t1, p - 1.0));
  }
  if (domain.kind == DomainKind::WarpedProduct)
    c.partial_integrals = warped_parabolicity(domain.alpha, domain.beta, domain.n, p, domain.r1, domain.r2).partial;
  return c;
}

}  // namespace nlpt

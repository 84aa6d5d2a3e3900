#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nlpt/domains.hpp"
#include "nlpt/exhaustion.hpp"

namespace nlpt {

// Plates A and B inside the node set D (active mask; empty means the whole grid).
struct Condenser {
  const DiscretizedDomain* grid = nullptr;
  std::vector<std::size_t> plate_a;
  std::vector<std::size_t> plate_b;
  std::vector<std::uint8_t> active;

  // Plates from the PlateA / PlateB node tags.
  static Condenser from_tags(const DiscretizedDomain& grid);
  static Condenser from_predicates(const DiscretizedDomain& grid, const std::function<bool(std::size_t)>& in_a,
                                   const std::function<bool(std::size_t)>& in_b);

  // Throws InvalidDomain for empty, overlapping or touching plates.
  void validate() const;
};

struct SolverOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 100000;
  double regularization = 1e-6;  // delta = regularization / diameter
  std::vector<double> initial;  // optional starting field
  bool record_history = true;
};

struct CapacityResult {
  double value = 0.0;  // unregularized energy of the clamped minimizer
  double regularized_value = 0.0;
  std::vector<double> minimizer;
  std::size_t iterations = 0;
  std::vector<double> energy_history;
  bool converged = false;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
};

// Discrete p-Dirichlet energy of a nodal field (the quadrature p_capacity minimizes).
double dirichlet_energy(const DiscretizedDomain& grid, std::span<const double> phi, double p,
                        std::span<const std::uint8_t> active = {});

// Minimizes the p-Dirichlet energy with phi = 0 on A and 1 on B. A result that
// runs out of iterations is returned with converged = false.
CapacityResult p_capacity(const Condenser& condenser, double p, const SolverOptions& options = {});

struct ExhaustionCapacity {
  double value = 0.0;
  double flux = 0.0;  // J, mean of the sampled sphere fluxes
  ExhaustionVerdict verdict;
};

// J / (t2 - t1)^{p-1}. Throws UnverifiedExhaustion if h fails its verification
// on the grid and LevelOutOfRange unless h(K) < t1 < t2 < h0.
double capacity_via_exhaustion(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p, double t1,
                               double t2);
ExhaustionCapacity capacity_via_exhaustion_detail(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p,
                                                  double t1, double t2);

// Extremal field (h - t1)/(t2 - t1) clamped to [0, 1].
std::vector<double> extremal_field(const ExhaustionFunction& h, const DiscretizedDomain& grid, double t1, double t2);

struct Classification {
  TypeVerdict verdict = TypeVerdict::Parabolic;
  double h0 = kInf;
  std::string family;
  double flux_constant = 0.0;
  double t1 = 0.0;
  // (t_k, J / (t_k - t1)^{p-1}) for t_k increasing toward h0.
  std::vector<std::pair<double, double>> capacity_sequence;
  std::vector<std::pair<double, double>> partial_integrals;  // warped products only
};

// Throws NoCatalogEntry.
Classification classify_type(const ModelDomain& domain, double p);

}  // namespace nlpt

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nlpt/domains.hpp"

namespace nlpt {

// Integrand scale * (xi^T W xi + delta^2)^{p/2} with W = diag(weights).
struct EnergyDensity {
  double p = 2.0;
  double delta = 0.0;
  double scale = 1.0;
  std::vector<double> weights;  // empty means the identity
};

// Discrete convex energy sum over grid cells and their corners: each corner
// contributes J * cell volume / 2^d times the density of the cell gradient
// taken from the cell edges through that corner.
class CellEnergy {
 public:
  // Cells are kept when every corner is active (empty mask keeps all).
  CellEnergy(const DiscretizedDomain& grid, EnergyDensity density, std::vector<std::uint8_t> active = {});

  const DiscretizedDomain& grid() const { return *grid_; }
  const EnergyDensity& density() const { return density_; }
  std::size_t cell_count() const { return cells_.size(); }

  double value(std::span<const double> phi) const;
  // Returns the value; fills grad and a Jacobi diagonal when non-empty.
  double evaluate(std::span<const double> phi, std::span<double> grad, std::span<double> diag) const;

 private:
  const DiscretizedDomain* grid_;
  EnergyDensity density_;
  int corners_ = 1;
  std::vector<std::uint32_t> cells_;  // corner node ids, corners_ per cell
  std::vector<double> corner_weight_;  // per node: J * prod(step) / 2^d
  std::vector<Vec> inv_step_;  // per node: 1 / (scale_a * step_a)
  std::vector<std::uint32_t> incidence_start_, incidence_;  // node -> cell*corners_ + corner
};

struct MinimizeOptions {
  double tolerance = 1e-8;  // projected-gradient sup-norm relative to the start
  double absolute_tolerance = 0.0;
  std::size_t max_iterations = 100000;
  bool record_history = true;
};

struct MinimizeResult {
  std::vector<double> x;
  double energy = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  std::vector<double> history;
};

// Preconditioned nonlinear conjugate gradients (Polak-Ribiere+, Jacobi) with a
// secant step and Armijo backtracking. Nodes with fixed[i] != 0 keep their values.
MinimizeResult minimize(const CellEnergy& energy, std::vector<double> x0, std::span<const std::uint8_t> fixed,
                        const MinimizeOptions& options);

}  // namespace nlpt

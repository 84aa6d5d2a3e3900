#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nlpt/domains.hpp"

namespace nlpt {

enum class StructurePreset { PLaplace, AnisotropicDiagonal, Custom };
const char* to_string(StructurePreset preset) noexcept;

// Flux map A(m, xi) of a quasilinear equation div A(m, grad f) = 0 together with
// its structure constants nu1 |xi|^p <= <xi, A> and |A| <= nu2 |xi|^{p-1}.
class StructureField {
 public:
  using Rule = std::function<Vec(std::size_t node, const Vec& xi)>;

  // |xi|^{p-2} xi.
  static StructureField p_laplace(double p);
  // (xi^T W xi)^{(p-2)/2} W xi with W = diag(weights).
  static StructureField anisotropic_diagonal(double p, std::vector<double> weights);
  // A caller flux with claimed constants. It has no known potential, so it
  // can be checked but not solved for.
  static StructureField custom(double p, double nu1, double nu2, Rule rule);

  double p() const { return p_; }
  double q() const { return p_ / (p_ - 1.0); }
  double nu0() const;
  double nu1() const { return nu1_; }
  double nu2() const { return nu2_; }
  StructurePreset preset() const { return preset_; }
  const std::vector<double>& weights() const { return weights_; }
  bool has_potential() const { return preset_ != StructurePreset::Custom; }
  std::string describe() const;

  Vec operator()(std::size_t node, const Vec& xi) const;

 private:
  double p_ = 2.0;
  double nu1_ = 1.0;
  double nu2_ = 1.0;
  StructurePreset preset_ = StructurePreset::PLaplace;
  std::vector<double> weights_;
  Rule rule_;
};

struct StructureReport {
  std::size_t samples = 0;
  // Worst values of (<xi,A> - nu1|xi|^p)/|xi|^p and (nu2|xi|^{p-1} - |A|)/|xi|^{p-1}.
  double coercivity_margin = 0.0;
  double growth_margin = 0.0;
  std::size_t witness_node = 0;
  Vec witness_xi{};
  bool constants_ordered = true;  // nu1 <= nu2
  double tolerance = 1e-12;
  bool passed = false;
};

// Draws (node, xi) with node uniform in [0, nodes) and xi isotropic with
// |xi| log-uniform on [1e-3, 1e3].
StructureReport check_structure(const StructureField& field, std::size_t samples, int dim = 2,
                                std::size_t nodes = 1024, std::uint64_t seed = 1);

// Scalar realization of a closed form pair: Z = f, w = df, theta = A(m, grad f).
struct ScalarFormPair {
  const DiscretizedDomain* grid = nullptr;
  double p = 2.0;
  std::vector<double> f;
  std::vector<Vec> w;
  std::vector<Vec> theta;
};

ScalarFormPair make_form_pair(const DiscretizedDomain& grid, std::vector<double> f, const StructureField& field);

// Random f from low-order trigonometric and polynomial modes in the grid
// coordinates, paired with the field's flux.
ScalarFormPair random_form_pair(const DiscretizedDomain& grid, const StructureField& field, std::mt19937_64& rng);

struct WtReport {
  std::size_t checked = 0;
  // Per-node margins relative to the larger side of each inequality.
  double margin = 0.0;  // WT1, or the coercivity inequality for WT2
  double growth_margin = 0.0;  // WT2 only
  std::size_t witness_node = 0;
  double tolerance = 1e-12;
  bool passed = false;
};

// nu0 |theta|^q <= <w, theta> at every node.
WtReport check_wt1(const ScalarFormPair& pair, double nu0, double p);
// nu1 |w|^p <= <w, theta> and |theta| <= nu2 |w|^{p-1} at every node.
WtReport check_wt2(const ScalarFormPair& pair, double nu1, double nu2, double p);
// nu1 * nu2^{-q}.
double wt2_implies_wt1_constant(double nu1, double nu2, double p);

// |sum <grad alpha, beta> dV + sum alpha div beta dV|. Throws
// SupportTouchesBoundary if beta is nonzero on or next to a Cut or
// ManifoldBoundary node.
double discrete_stokes_check(const DiscretizedDomain& grid, std::span<const double> alpha, std::span<const Vec> beta);

enum class BoundaryKind { Dirichlet, CompactSupport, Neumann, Mixed };
const char* to_string(BoundaryKind kind) noexcept;

// Largest |theta_a| over the ManifoldBoundary faces of a node (zero elsewhere).
double boundary_normal_component(const DiscretizedDomain& grid, std::size_t node, const Vec& theta);

// Largest boundary violation on ManifoldBoundary nodes, relative to the field
// scale: |f| (Dirichlet), |f| on and next to the boundary (CompactSupport),
// |<theta, nu>| (Neumann) and |f <theta, nu>| (Mixed).
double boundary_defect(const ScalarFormPair& pair, BoundaryKind kind);

struct HarmonicOptions {
  double tolerance = 1e-10;
  double absolute_tolerance = 0.0;
  std::size_t max_iterations = 200000;
  double regularization = 1e-9;  // delta = regularization / diameter
  std::vector<double> initial;
};

struct HarmonicSolution {
  std::vector<double> f;
  std::string gauge;  // "dirichlet" or "zero-mean"
  std::size_t iterations = 0;
  double residual = 0.0;  // max |dE/df_i| / volume weight over free nodes
  double energy = 0.0;
};

// Minimizes (1/p) sum W-weighted |grad f|^p with f fixed where dirichlet[i]
// holds a value; other boundary nodes carry the natural zero-flux condition.
// Throws NoPotential for a custom field and NonConvergence.
HarmonicSolution solve_A_harmonic(const DiscretizedDomain& grid, const StructureField& field,
                                  const std::vector<std::optional<double>>& dirichlet,
                                  const HarmonicOptions& options = {});

enum class MaximumPrincipleKind { DirichletType, NeumannType };

struct MaximumPrincipleVerdict {
  double max_theta = 0.0;
  double oscillation = 0.0;
  double energy_pairing = 0.0;  // sum <grad f, A(grad f)> dV
  double theta_tolerance = 1e-5;
  double oscillation_tolerance = 1e-6;
  std::size_t iterations = 0;
  std::string gauge;
  bool passed = false;
};

// Solves from a nonconstant start with zero Dirichlet data or zero Neumann
// data on the ManifoldBoundary nodes. Throws InvalidDomain if the grid has Cut
// nodes.
MaximumPrincipleVerdict maximum_principle_check(const DiscretizedDomain& grid, const StructureField& field,
                                                MaximumPrincipleKind kind);

}  // namespace nlpt

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlpt/domains.hpp"
#include "nlpt/wtforms.hpp"

namespace nlpt {

// Every epsilon value says whether it belongs to one form (an upper bound for
// the infimum over the admissible class) or is the least value over a finite
// test family (also an upper bound).
enum class EpsilonTag { PerForm, FamilyUpperBound };
const char* to_string(EpsilonTag tag) noexcept;

// Node subset of the grid; empty means every node.
using NodeMask = std::vector<std::uint8_t>;

struct EnergyIntegral {
  double value = 0.0;  // coarea assembly over {h < tau}
  double volume_check = 0.0;  // nodal quadrature with fractional membership
  double relative_gap = 0.0;
};

// Integral of |grad f|^p over {h < tau}. Throws LevelOutOfRange unless
// 0 < tau <= the smallest h on the Cut nodes (the truncation window).
double energy_integral(const ScalarFormPair& pair, std::span<const double> h, double tau);
EnergyIntegral energy_integral_detail(const ScalarFormPair& pair, std::span<const double> h, double tau);

struct EpsilonValue {
  double value = 0.0;
  double numerator = 0.0;  // shell integral of |grad f|^p / |grad h|
  double denominator = 0.0;  // |shell integral of f <A(grad f), nu>|
  EpsilonTag tag = EpsilonTag::PerForm;
};

// Per-form ratio at level tau. With a mask the shell is restricted to the
// closure of the masked nodes (trapezoid weights halved on the rim).
// Throws ZeroDenominator.
EpsilonValue epsilon_for_form(const ScalarFormPair& pair, std::span<const double> h, double tau,
                              const NodeMask& mask = {});

// A test form and the node set it lives on (f vanishes off the set).
struct TestField {
  ScalarFormPair pair;
  NodeMask support;
};

struct EpsilonEstimate {
  double value = 0.0;
  std::size_t argmin = 0;
  std::vector<double> members;  // NaN where the denominator vanished
  EpsilonTag tag = EpsilonTag::FamilyUpperBound;
};

// Largest support defect: |f| on the rim of the support and off it, relative to max |f|.
double support_defect(const ScalarFormPair& pair, const NodeMask& support);

// Least per-form ratio over the family on the subdomain D. Members must be
// supported in D, satisfy the boundary condition within boundary_tolerance
// and vanish on the rim of their support. Throws EmptyFamily,
// BoundaryConditionViolated, AllDenominatorsZero.
EpsilonEstimate epsilon_estimate(const DiscretizedDomain& grid, std::span<const double> h, double tau, double p,
                                 BoundaryKind bc, std::span<const TestField> family, const NodeMask& domain = {},
                                 double boundary_tolerance = 1e-3);

struct EnergyCurve {
  std::vector<double> tau;
  std::vector<double> I;
  std::vector<double> dI;
  std::vector<double> eps;
  std::vector<EpsilonTag> eps_tag;
  std::vector<double> eps_integral;  // integral of eps from tau.front()
  std::vector<double> monotone;  // I exp(-nu1 * eps_integral)
};

struct GrowthOptions {
  BoundaryKind boundary = BoundaryKind::Dirichlet;
  double boundary_tolerance = 1e-3;
  double tolerance = 0.03;
};

struct GrowthReport {
  EnergyCurve curve;
  double p = 2.0;
  double nu1 = 1.0;
  double truncation = kInf;
  BoundaryKind boundary = BoundaryKind::Dirichlet;
  double boundary_defect = 0.0;
  double tolerance = 0.03;
  bool degenerate = false;  // dZ = 0: I vanishes identically
  // Worst relative values: (dI - nu1 eps I)/(nu1 eps I), the largest dip of the
  // monotone quantity below its running maximum, and the largest excess of
  // I(t1) over I(t2) exp(-nu1 int eps).
  double differential_margin = 0.0;
  double monotone_dip = 0.0;
  double integrated_excess = 0.0;
  bool differential_ok = false;
  bool monotone_ok = false;
  bool integrated_ok = false;
  bool passed() const { return differential_ok && monotone_ok && integrated_ok; }
};

// Samples I, dI/dtau (central differences on the tau grid, one-sided at the
// ends) and the per-form eps at each tau. The eps integral uses Simpson's rule
// with one extra eps sample per interval. Throws BoundaryConditionViolated.
GrowthReport growth_verifier(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                             std::span<const double> taus, const GrowthOptions& options = {});

struct BandBound {
  double c = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double rhs_at_zero = 0.0;  // the same right side with c = 0
  double slack = 0.0;  // rhs - lhs
  bool holds = false;
};

struct AnnulusBoundReport {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double I1 = 0.0;
  // Relative defect of the constant test form in the Stokes formula on B_h(tau2);
  // nonzero constants are used only when it is below the tolerance.
  double constant_defect = 0.0;
  bool constants_admissible = false;
  BandBound flux_bound;  // nu1 I(t1) <= p/(t2-t1) int |grad h||f-c||A|
  BandBound trace_bound;  // I(t1) <= (p nu2/((t2-t1) nu1))^p int |grad h|^p |f-c|^p
};

AnnulusBoundReport annulus_bound_check(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                                       double nu2, double tau1, double tau2, double admissibility_tolerance = 1e-2);

enum class Alternative { TrivialForm, GrowthA, GrowthB, GrowthC, Undetermined };
const char* to_string(Alternative a) noexcept;

struct AlternativeReport {
  Alternative alternative = Alternative::Undetermined;
  std::vector<double> tau;
  std::vector<double> proxy_a, proxy_b, proxy_c;  // b, c only where tau + 1 fits the window
  double bound_a = 0.0, bound_b = 0.0, bound_c = 0.0;  // lower bounds from I(tau0)
  double liminf_a = 0.0, liminf_b = 0.0, liminf_c = 0.0;  // minima over the last third
  bool a = false, b = false, c = false;
  bool extrapolated = true;  // liminf read off a finite window
  EpsilonTag eps_tag = EpsilonTag::PerForm;
};

// Window proxies of the three growth alternatives with the per-form eps and
// the constant Z0 infimum for mu and m. Throws WindowTooShort for fewer than
// three samples.
AlternativeReport pl_alternative_check(const ScalarFormPair& pair, std::span<const double> h, double p, double nu1,
                                       double nu2, double tau0, double tau_max, std::size_t samples = 16);

// One part of a partition with its test family.
struct Subdomain {
  NodeMask mask;
  std::vector<TestField> family;
};

struct Partition {
  std::string label;
  double parameter = 0.0;
  std::vector<Subdomain> parts;
};

struct NMeanResult {
  double value = 0.0;
  std::size_t argmin = 0;
  std::vector<double> means;  // per partition
  std::vector<std::vector<double>> part_eps;
  EpsilonTag tag = EpsilonTag::FamilyUpperBound;
};

// Least mean of the part estimates over partitions with N disjoint parts, each
// reaching the Cut. Throws EmptyFamily.
NMeanResult n_mean(const DiscretizedDomain& grid, std::span<const double> h, double t, std::size_t N,
                   std::span<const Partition> family, double p, BoundaryKind bc = BoundaryKind::Dirichlet);

// The N-part collections obtained by dropping one part of each (N+1)-partition.
std::vector<Partition> leave_one_out(std::span<const Partition> family);

// Node columns [cuts[k], cuts[k+1]) along an axis; cyclic on a periodic axis,
// the last part running to the end of the axis otherwise.
std::vector<NodeMask> column_masks(const DiscretizedDomain& grid, int axis, const std::vector<std::size_t>& cuts);

// Polar sectors of a plane grid (radius axis 0, angle axis 1) with test forms
// r^lambda sin(lambda (angle - a)), lambda = m pi / width, m = 1..modes.
Partition sector_partition(const DiscretizedDomain& grid, const StructureField& field,
                           const std::vector<std::size_t>& cuts, std::size_t modes = 3);

// Slabs of the cross-section axis of a strip-like grid (axis 0 longitudinal)
// with test forms sinh(lambda x) sin(lambda (y - a)).
Partition slab_partition(const DiscretizedDomain& grid, const StructureField& field, int axis,
                         const std::vector<std::size_t>& cuts, std::size_t modes = 3);

struct Tract {
  NodeMask mask;
  ScalarFormPair pair;
};

struct TractFamily {
  std::vector<Tract> members;
  std::size_t count() const { return members.size(); }
  // Throws DisjointnessViolated, InvalidDomain and BoundaryConditionViolated.
  void validate(const DiscretizedDomain& grid, double boundary_tolerance = 1e-3) const;
};

enum class AhlforsVerdict { BoundAsserted, Inconclusive };
const char* to_string(AhlforsVerdict v) noexcept;

struct AhlforsReport {
  AhlforsVerdict verdict = AhlforsVerdict::Inconclusive;
  std::size_t L = 0;
  std::size_t N = 0;
  double tau0 = 0.0;
  std::vector<double> tau;
  std::vector<double> E;  // n_mean upper bound of E(t;N)
  std::vector<double> E_integral;
  std::vector<double> I;  // total energy of the tract forms
  // Proof chain at each tau': sum_k I_k(tau0) exp(nu1 int eps_k) <= I(tau'),
  // min_k I_k(tau0) L exp(nu1 int mean eps_k) <= I(tau').
  std::vector<double> chain_sum;
  std::vector<double> chain_witness;
  std::vector<double> am_gm_mean;  // (1/L) sum exp(a_k)
  std::vector<double> am_gm_geometric;  // exp((1/L) sum a_k)
  bool chain_holds = false;
  bool am_gm_holds = false;
  bool divergence_trend = false;  // E stays positive on the window
  bool energy_decay = false;  // window proxies of the three decay hypotheses
  bool flux_decay = false;
  bool trace_decay = false;
  bool contradiction = false;  // hypotheses hold yet L >= N
  double tolerance = 0.03;
  EpsilonTag eps_tag = EpsilonTag::FamilyUpperBound;
};

AhlforsReport ahlfors_count_bound(const TractFamily& tracts, const DiscretizedDomain& grid, std::span<const double> h,
                                  double p, double nu1, double nu2, std::size_t N, double tau0,
                                  std::span<const double> window, std::span<const Partition> partitions);

// Largest h value the truncated grid still resolves: the least h on the outer
// Cut nodes (those above min h), or max h without a Cut.
double level_window(const DiscretizedDomain& grid, std::span<const double> h);

}  // namespace nlpt

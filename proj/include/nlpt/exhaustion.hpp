#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nlpt/domains.hpp"

namespace nlpt {

enum class ExhaustionFamily { LogDk, PowerDk, CylinderPower, ConeLog, WarpedIntegral, ProductLift };

const char* to_string(ExhaustionFamily family) noexcept;

enum class TypeVerdict { Parabolic, Hyperbolic };

const char* to_string(TypeVerdict verdict) noexcept;

// Radial exhaustion h = phi(s), where s is the adapted radial coordinate of the
// domain (d_k for cylinders, |x| or r otherwise). The exceptional compact set
// is K = {s <= exceptional_radius()}.
class ExhaustionFunction {
 public:
  enum class Profile { Log, Power, Integral };

  ExhaustionFamily family() const { return family_; }
  const ModelDomain& domain() const { return domain_; }
  double p() const { return p_; }
  double h0() const { return h0_; }
  bool parabolic_end() const;
  double exceptional_radius() const { return s_k_; }
  Profile profile() const { return profile_; }
  double exponent() const { return gamma_; }
  std::vector<std::pair<std::string, double>> parameters() const;

  double value_at(double s) const;
  double slope_at(double s) const;  // d phi / ds
  // Analytic |grad h|^{p-1} times the area of the h-sphere through s.
  double flux_constant() const;
  // Area of {s = const}.
  double sphere_area(double s) const;

  double value(const DiscretizedDomain& grid, std::size_t node) const;
  Vec gradient(const DiscretizedDomain& grid, std::size_t node) const;
  std::vector<double> evaluate(const DiscretizedDomain& grid) const;
  std::vector<Vec> gradient_field(const DiscretizedDomain& grid) const;

  // h = s^gamma (or s1^gamma - s^gamma when gamma < 0) with an explicit exponent;
  // the catalog entries use the exponent solving the radial p-Laplace equation.
  static ExhaustionFunction radial_power(const ModelDomain& domain, double p, double gamma);

 private:
  friend ExhaustionFunction make_special_exhaustion(const ModelDomain&, double);

  ExhaustionFamily family_ = ExhaustionFamily::LogDk;
  ModelDomain domain_;
  const ModelDomain* radial_domain() const;
  double p_ = 2.0;
  Profile profile_ = Profile::Log;
  double gamma_ = 0.0;
  double s_k_ = 1.0;  // K = {s <= s_k}
  double h0_ = kInf;
  std::function<double(double)> integrand_;  // Integral profile: phi'(s)
};

// Catalog of special exhaustion functions. Throws NoCatalogEntry.
ExhaustionFunction make_special_exhaustion(const ModelDomain& domain, double p);

// Exponent of the radial p-harmonic power of the distance d_k (s^gamma).
double radial_power_exponent(int k, double p);
// (p - n)/(p - 1): the power of d_k that would be p-harmonic if d_k were the
// distance in all n directions. Kept to compare against the k-direction exponent.
double ambient_slab_exponent(int n, double p);

struct ResidualSummary {
  double max_abs = 0.0;
  double max_relative = 0.0;  // |residual| * s / |grad h|^{p-1}
  std::size_t counted = 0;
  std::size_t excluded = 0;  // nodes within one cell of K or without a full stencil
  std::size_t degenerate = 0;  // excluded nodes where |grad h| < delta
};

// Discrete div(|grad h|^{p-2} grad h) at interior nodes; zero at excluded nodes.
// Throws DegenerateGradient when |grad h| < delta outside the exceptional set.
std::vector<double> p_laplace_residual(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p);
ResidualSummary residual_summary(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p);

// Shell quadrature of |grad h|^{p-1} over {h = t}, using the discrete gradient.
double flux_through_sphere(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p, double t);

// Max over ManifoldBoundary nodes of |<A(grad h), nu>| with one-sided differences.
double boundary_normal_pairing(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p);

struct FluxSample {
  double t = 0.0;
  double value = 0.0;
};

struct VerifyOptions {
  std::size_t levels = 10;
  double residual_tolerance = 1e-2;  // on ResidualSummary::max_relative
  double flux_tolerance = 1e-2;  // on the relative spread
  double pairing_tolerance = 1e-6;  // relative to max |A(grad h)|
};

struct ExhaustionVerdict {
  double pde_residual_max = 0.0;
  double pde_residual_relative = 0.0;
  std::vector<FluxSample> flux;
  double flux_relative_spread = 0.0;
  double boundary_pairing_max = 0.0;
  double boundary_pairing_relative = 0.0;
  bool a1 = false;
  bool a2 = false;
  bool b2 = false;
  VerifyOptions options;

  bool passed() const { return a1 && a2 && b2; }
};

// Levels inside the grid window avoiding one cell around K, the window ends and
// near-critical values.
std::vector<double> flux_levels(const ExhaustionFunction& h, const DiscretizedDomain& grid, std::size_t count);

ExhaustionVerdict verify_exhaustion(const ExhaustionFunction& h, const DiscretizedDomain& grid, double p,
                                    const VerifyOptions& options = {});

struct WarpedTypeResult {
  TypeVerdict verdict = TypeVerdict::Parabolic;
  double h0 = kInf;
  // Partial integrals (upper limit, value) produced by the divergence test.
  std::vector<std::pair<double, double>> partial;
  double last_increment_ratio = 0.0;
};

// Integral of alpha / beta^{(n-1)/(p-1)} from r1 to r (the warped exhaustion).
double warped_integral(const RadialProfile& alpha, const RadialProfile& beta, int n, double p, double r1, double r);

// Divergence test on the warped exhaustion integral. Throws IndeterminateTail.
WarpedTypeResult warped_parabolicity(const RadialProfile& alpha, const RadialProfile& beta, int n, double p,
                                     double r1, double r2 = kInf);

}  // namespace nlpt

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nlpt {

using Vec = std::array<double, 3>;
using Point = std::array<double, 3>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class DomainKind { EuclideanSpace, KCylinder, Cone, WarpedProduct, ProductManifold };

const char* to_string(DomainKind kind) noexcept;

// Bounded cross-section of a cylinder, or the compact factor of a product.
struct CrossSection {
  enum class Shape { Box, Disk };
  Shape shape = Shape::Box;
  std::vector<double> extents;  // box side lengths, or {radius} for a disk

  static CrossSection box(std::vector<double> sides);
  static CrossSection disk(double radius);

  int dim() const;
  double measure() const;
};

// Subset of the unit sphere S^{m-1}. In the plane an arc [lo, hi] of polar
// angle; in space a colatitude band [lo, hi] with full longitude (lo = 0 is a cap).
struct AngularDomain {
  bool full = true;
  double lo = 0.0;
  double hi = 0.0;

  static AngularDomain whole() { return {}; }
  static AngularDomain sector(double lo, double hi) { return {false, lo, hi}; }

  // Measure as a subset of S^{m-1}.
  double measure(int m) const;
};

// Positive coefficient function of the radius used by warped metrics.
class RadialProfile {
 public:
  enum class Kind { Constant, Power, Exponential, Sinh, Tabulated };

  static RadialProfile constant(double c);
  static RadialProfile power(double c, double exponent);  // c r^a
  static RadialProfile exponential(double c, double rate);  // c e^{a r}
  static RadialProfile sinh(double c, double rate);  // c sinh(a r)
  // Piecewise linear through (r, value); held constant outside the table.
  static RadialProfile tabulated(std::vector<double> r, std::vector<double> values);

  double operator()(double r) const;
  Kind kind() const { return kind_; }
  double coefficient() const { return c_; }
  double exponent() const { return a_; }
  const std::vector<double>& table_r() const { return table_r_; }
  const std::vector<double>& table_v() const { return table_v_; }
  std::string describe() const;

 private:
  Kind kind_ = Kind::Constant;
  double c_ = 1.0;
  double a_ = 0.0;
  std::vector<double> table_r_, table_v_;
};

struct ModelDomain {
  DomainKind kind = DomainKind::EuclideanSpace;
  int n = 2;
  int k = 1;
  CrossSection base = CrossSection::box({1.0});
  AngularDomain angular;
  double r1 = 1.0;
  double r2 = kInf;
  RadialProfile alpha = RadialProfile::constant(1.0);
  RadialProfile beta = RadialProfile::power(1.0, 1.0);
  // ProductManifold only: the noncompact factor D of D x B; base holds B.
  std::shared_ptr<const ModelDomain> factor;

  static ModelDomain euclidean(int n, double r1 = 1.0);
  static ModelDomain kcylinder(int n, int k, CrossSection base, double r1 = 1.0);
  static ModelDomain cone(int n, AngularDomain angular, double r1 = 1.0);
  static ModelDomain warped(int n, AngularDomain angular, RadialProfile alpha, RadialProfile beta,
                            double r1 = 1.0, double r2 = kInf);
  static ModelDomain product(ModelDomain factor, CrossSection compact);

  // Throws InvalidDomain.
  void validate() const;
  std::string describe() const;
};

enum class NodeTag : std::uint8_t { Interior, ManifoldBoundary, PlateA, PlateB, Cut };

const char* to_string(NodeTag tag) noexcept;

enum class AxisKind : std::uint8_t { Regular, Periodic, PoleLow, PoleBoth };

// One adapted coordinate. Pole axes (a polar radius or a colatitude) keep their
// nodes half a step away from the pole; the partner axis is the periodic
// coordinate used to step across it.
struct Axis {
  std::string name;
  AxisKind kind = AxisKind::Regular;
  double lo = 0.0;
  double hi = 1.0;
  std::size_t count = 8;
  int partner = -1;

  double step() const;
  double coordinate(std::size_t i) const;
  double weight(std::size_t i) const;
};

struct Face {
  int axis = 0;
  bool upper = false;
  auto operator<=>(const Face&) const = default;
};

struct GridRequest {
  std::vector<std::size_t> resolution;
  double cut = 0.0;  // outer value of the radial coordinate; 0 means r2
  double inner = -1.0;  // inner radial value; negative means r1
  std::map<Face, NodeTag> face_tags;  // overrides the default tag of a face
};

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

class DiscretizedDomain {
 public:
  // Coordinate block of a chart; the scale factors of a block depend only on
  // its own coordinates.
  struct Block {
    enum class Kind { Line, Polar, Spherical, Box, Disk };
    Kind kind = Kind::Box;
    int first = 0;
    int dims = 1;
    RadialProfile alpha = RadialProfile::constant(1.0);
    RadialProfile beta = RadialProfile::power(1.0, 1.0);
  };

  DiscretizedDomain(std::vector<Axis> axes, std::vector<Block> blocks,
                    std::map<Face, NodeTag> face_tags, int radial_axis, bool radial_abs);

  int dim() const { return static_cast<int>(axes_.size()); }
  std::size_t size() const { return nodes_.size(); }
  const Axis& axis(int a) const { return axes_[a]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::vector<double> spacing() const;

  std::size_t index(const std::array<std::size_t, 3>& multi) const;
  std::array<std::size_t, 3> multi(std::size_t node) const;

  const Point& coordinates(std::size_t node) const { return nodes_[node]; }
  const Vec& scales(std::size_t node) const { return scales_[node]; }
  double jacobian(std::size_t node) const { return jacobian_[node]; }
  double metric_weight(std::size_t node) const { return metric_weight_[node]; }
  // Quadrature weight of the node: jacobian times the coordinate cell measure.
  double volume_weight(std::size_t node) const { return volume_weight_[node]; }
  // Coordinate cell measure without the jacobian.
  double cell_weight(std::size_t node) const;
  NodeTag tag(std::size_t node) const { return tags_[node]; }
  // Bit 2a marks the lower face of axis a, bit 2a+1 the upper face.
  std::uint8_t faces(std::size_t node) const { return faces_[node]; }
  const std::vector<NodeTag>& tags() const { return tags_; }
  void set_tag(std::size_t node, NodeTag tag) { tags_[node] = tag; }

  // Neighbor one step along an axis (dir = +1 or -1). Steps across a pole land
  // on the reflected node; kNoNode beyond a regular end.
  std::size_t neighbor(std::size_t node, int axis, int dir) const;
  bool crosses_pole(std::size_t node, int axis, int dir) const;

  Vec scales_at(const Point& x) const;
  double jacobian_at(const Point& x) const;

  bool has_radial() const { return radial_axis_ >= 0; }
  int radial_axis() const { return radial_axis_; }
  double radial(std::size_t node) const;
  double radial_at(const Point& x) const;
  // +1, or the sign of the coordinate when the radial value is |x|.
  double radial_sign(std::size_t node) const;
  double truncation() const { return truncation_; }
  void set_truncation(double cut) { truncation_ = cut; }
  double diameter() const;

  std::vector<std::size_t> nodes_with(NodeTag tag) const;
  // Tag assigned to a face of the coordinate box.
  NodeTag face_tag(int axis, bool upper) const;

 private:
  std::map<Face, NodeTag> face_tags_;
  std::vector<Axis> axes_;
  std::vector<Block> blocks_;
  std::array<std::size_t, 3> stride_{};
  std::vector<Point> nodes_;
  std::vector<Vec> scales_;
  std::vector<double> jacobian_, metric_weight_, volume_weight_;
  std::vector<NodeTag> tags_;
  std::vector<std::uint8_t> faces_;
  int radial_axis_ = -1;
  bool radial_abs_ = false;
  double truncation_ = kInf;
};

// Throws InvalidDomain or ResolutionTooCoarse.
DiscretizedDomain build_grid(const ModelDomain& domain, const GridRequest& request);

// Compact Cartesian box [0, L_a] with every face tagged ManifoldBoundary.
DiscretizedDomain compact_box_grid(std::vector<double> extents, std::vector<std::size_t> resolution);
// Compact disk of the given radius in polar coordinates, rim tagged ManifoldBoundary.
DiscretizedDomain compact_disk_grid(double radius, std::size_t radial, std::size_t angular);
// Cartesian box [lo_a, hi_a] with caller face tags (default ManifoldBoundary).
DiscretizedDomain cartesian_grid(std::vector<double> lo, std::vector<double> hi,
                                 std::vector<std::size_t> resolution,
                                 std::map<Face, NodeTag> face_tags = {});

std::vector<double> sample(const DiscretizedDomain& grid, const std::function<double(const Point&)>& fn);

// Central differences, second-order one-sided at regular ends; components in an
// orthonormal frame (coordinate derivative divided by the scale factor).
std::vector<Vec> gradient(const DiscretizedDomain& grid, std::span<const double> field);

// Flux-form divergence of a vector field given in the orthonormal frame. Only
// nodes whose stencil is complete get a value; the others are zero.
std::vector<double> divergence(const DiscretizedDomain& grid, std::span<const Vec> field);
bool has_full_stencil(const DiscretizedDomain& grid, std::size_t node);

// Flux-form div(|grad h|^{p-2} grad h) with |grad h| regularized by delta.
std::vector<double> p_laplacian(const DiscretizedDomain& grid, std::span<const double> h, double p,
                                double delta = 1e-8);
// Sum over the same faces of |flux| / J: the scale against which a residual is small.
std::vector<double> p_laplacian_scale(const DiscretizedDomain& grid, std::span<const double> h, double p,
                                      double delta = 1e-8);

double volume_integral(const DiscretizedDomain& grid, std::span<const double> integrand);

struct ShellPoint {
  std::size_t from = 0;  // node with h < t or h >= t on the edge
  std::size_t to = 0;
  int axis = 0;
  double frac = 0.0;  // crossing position along the edge from `from`
  Point position{};
  Vec grad_h{};  // gradient of h at the crossing, orthonormal frame
  double weight = 0.0;  // surface quadrature weight
};

struct LevelShell {
  double t = 0.0;
  std::vector<ShellPoint> points;

  std::vector<std::size_t> nodes() const;
  double total_weight() const;
  // Surface integral of the linear interpolant of a nodal field.
  double integrate(std::span<const double> nodal) const;
  double integrate(const std::function<double(const ShellPoint&)>& fn) const;
  double interpolate(std::span<const double> nodal, const ShellPoint& sp) const;
};

// Throws LevelOutOfRange unless min h < t < max h.
LevelShell level_shell(const DiscretizedDomain& grid, std::span<const double> h, double t);

// Band integral of the integrand over {t_lo < h <= t_hi} assembled edge by edge
// from level-set geometry; equals the volume integral when the band covers h.
// Throws DegenerateGradient when |grad h| vanishes on a sizable part of the band.
double coarea_integral(const DiscretizedDomain& grid, std::span<const double> h,
                       std::span<const double> integrand, double t_lo, double t_hi);

// Direct nodal quadrature over the band with fractional membership of nodes
// whose cell straddles a level; the cross-check for coarea_integral.
double band_volume_integral(const DiscretizedDomain& grid, std::span<const double> h,
                            std::span<const double> integrand, double t_lo, double t_hi);

// Node table: one line per node with index, coordinates, tag and volume weight,
// followed by the named fields.
std::string export_grid_text(const DiscretizedDomain& grid,
                             const std::vector<std::pair<std::string, std::span<const double>>>& fields = {});

}  // namespace nlpt

#include "nlpt/domains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "nlpt/error.hpp"
#include "nlpt/parallel.hpp"

namespace nlpt {

using std::numbers::pi;

const char* to_string(DomainKind kind) noexcept {
  switch (kind) {
    case DomainKind::EuclideanSpace: return "EuclideanSpace";
    case DomainKind::KCylinder: return "KCylinder";
    case DomainKind::Cone: return "Cone";
    case DomainKind::WarpedProduct: return "WarpedProduct";
    case DomainKind::ProductManifold: return "ProductManifold";
  }
  return "Unknown";
}

const char* to_string(NodeTag tag) noexcept {
  switch (tag) {
    case NodeTag::Interior: return "Interior";
    case NodeTag::ManifoldBoundary: return "ManifoldBoundary";
    case NodeTag::PlateA: return "PlateA";
    case NodeTag::PlateB: return "PlateB";
    case NodeTag::Cut: return "Cut";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- shapes

CrossSection CrossSection::box(std::vector<double> sides) { return {Shape::Box, std::move(sides)}; }
CrossSection CrossSection::disk(double radius) { return {Shape::Disk, {radius}}; }

int CrossSection::dim() const {
  return shape == Shape::Disk ? 2 : static_cast<int>(extents.size());
}

double CrossSection::measure() const {
  if (shape == Shape::Disk) return pi * extents.at(0) * extents.at(0);
  double m = 1.0;
  for (double e : extents) m *= e;
  return m;
}

double AngularDomain::measure(int m) const {
  switch (m) {
    case 1: return 2.0;  // S^0
    case 2: return full ? 2.0 * pi : hi - lo;
    case 3: return full ? 4.0 * pi : 2.0 * pi * (std::cos(lo) - std::cos(hi));
    default: break;
  }
  // Full unit sphere S^{m-1}: 2 pi^{m/2} / Gamma(m/2).
  return 2.0 * std::pow(pi, 0.5 * m) / std::tgamma(0.5 * m);
}

RadialProfile RadialProfile::constant(double c) {
  RadialProfile r;
  r.kind_ = Kind::Constant;
  r.c_ = c;
  return r;
}

RadialProfile RadialProfile::power(double c, double exponent) {
  RadialProfile r;
  r.kind_ = Kind::Power;
  r.c_ = c;
  r.a_ = exponent;
  return r;
}

RadialProfile RadialProfile::exponential(double c, double rate) {
  RadialProfile r;
  r.kind_ = Kind::Exponential;
  r.c_ = c;
  r.a_ = rate;
  return r;
}

RadialProfile RadialProfile::sinh(double c, double rate) {
  RadialProfile r;
  r.kind_ = Kind::Sinh;
  r.c_ = c;
  r.a_ = rate;
  return r;
}

RadialProfile RadialProfile::tabulated(std::vector<double> r, std::vector<double> values) {
  if (r.size() != values.size() || r.size() < 2)
    throw Error(ErrorCode::InvalidDomain, "tabulated profile needs at least two (r, value) pairs");
  for (std::size_t i = 1; i < r.size(); ++i)
    if (!(r[i] > r[i - 1])) throw Error(ErrorCode::InvalidDomain, "tabulated profile radii must increase");
  RadialProfile p;
  p.kind_ = Kind::Tabulated;
  p.table_r_ = std::move(r);
  p.table_v_ = std::move(values);
  return p;
}

double RadialProfile::operator()(double r) const {
  switch (kind_) {
    case Kind::Constant: return c_;
    case Kind::Power: return c_ * std::pow(r, a_);
    case Kind::Exponential: return c_ * std::exp(a_ * r);
    case Kind::Sinh: return c_ * std::sinh(a_ * r);
    case Kind::Tabulated: {
      if (r <= table_r_.front()) return table_v_.front();
      if (r >= table_r_.back()) return table_v_.back();
      auto it = std::upper_bound(table_r_.begin(), table_r_.end(), r);
      std::size_t j = static_cast<std::size_t>(it - table_r_.begin());
      double s = (r - table_r_[j - 1]) / (table_r_[j] - table_r_[j - 1]);
      return table_v_[j - 1] + s * (table_v_[j] - table_v_[j - 1]);
    }
  }
  return 0.0;
}

std::string RadialProfile::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Constant: os << c_; break;
    case Kind::Power: os << c_ << "*r^" << a_; break;
    case Kind::Exponential: os << c_ << "*exp(" << a_ << "*r)"; break;
    case Kind::Sinh: os << c_ << "*sinh(" << a_ << "*r)"; break;
    case Kind::Tabulated: os << "table[" << table_r_.size() << "]"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------- ModelDomain

ModelDomain ModelDomain::euclidean(int n, double r1) {
  ModelDomain d;
  d.kind = DomainKind::EuclideanSpace;
  d.n = n;
  d.k = n;
  d.r1 = r1;
  return d;
}

ModelDomain ModelDomain::kcylinder(int n, int k, CrossSection base, double r1) {
  ModelDomain d;
  d.kind = DomainKind::KCylinder;
  d.n = n;
  d.k = k;
  d.base = std::move(base);
  d.r1 = r1;
  return d;
}

ModelDomain ModelDomain::cone(int n, AngularDomain angular, double r1) {
  ModelDomain d;
  d.kind = DomainKind::Cone;
  d.n = n;
  d.k = n;
  d.angular = angular;
  d.r1 = r1;
  return d;
}

ModelDomain ModelDomain::warped(int n, AngularDomain angular, RadialProfile alpha, RadialProfile beta,
                                double r1, double r2) {
  ModelDomain d;
  d.kind = DomainKind::WarpedProduct;
  d.n = n;
  d.k = n;
  d.angular = angular;
  d.alpha = std::move(alpha);
  d.beta = std::move(beta);
  d.r1 = r1;
  d.r2 = r2;
  return d;
}

ModelDomain ModelDomain::product(ModelDomain factor, CrossSection compact) {
  ModelDomain d;
  d.kind = DomainKind::ProductManifold;
  d.n = factor.n + compact.dim();
  d.k = factor.k;
  d.r1 = factor.r1;
  d.r2 = factor.r2;
  d.base = std::move(compact);
  d.factor = std::make_shared<const ModelDomain>(std::move(factor));
  return d;
}

namespace {
void fail(const std::string& why) { throw Error(ErrorCode::InvalidDomain, why); }

void check_section(const CrossSection& s) {
  if (s.extents.empty()) fail("cross-section has no extents");
  if (s.shape == CrossSection::Shape::Disk && s.extents.size() != 1) fail("disk cross-section takes one radius");
  for (double e : s.extents)
    if (!(e > 0.0) || !std::isfinite(e)) fail("cross-section must be bounded and nondegenerate");
}

void check_angular(const AngularDomain& u, int n) {
  if (u.full) return;
  if (n == 2 && !(u.hi > u.lo && u.hi - u.lo <= 2.0 * pi)) fail("arc must satisfy lo < hi <= lo + 2pi");
  if (n == 3 && !(u.lo >= 0.0 && u.hi > u.lo && u.hi <= pi)) fail("colatitude band must lie in [0, pi]");
  if (n > 3) fail("angular subsets are supported in dimensions 2 and 3");
}
}  // namespace

void ModelDomain::validate() const {
  if (n < 2) fail("dimension n must be at least 2");
  if (!(r1 >= 0.0)) fail("r1 must be nonnegative");
  if (!(r2 > r1)) fail("r2 must exceed r1");
  switch (kind) {
    case DomainKind::EuclideanSpace: break;
    case DomainKind::KCylinder:
      if (k < 1 || k >= n) fail("k-cylinder needs 1 <= k < n");
      check_section(base);
      if (base.dim() != n - k) fail("cross-section dimension must equal n - k");
      break;
    case DomainKind::Cone: check_angular(angular, n); break;
    case DomainKind::WarpedProduct: {
      check_angular(angular, n);
      // Sample the coefficients on [r1, r2).
      double top = std::isfinite(r2) ? r2 : r1 + 1e3 * std::max(1.0, r1);
      for (int i = 0; i < 257; ++i) {
        double r = r1 + (top - r1) * i / 257.0;
        if (r == 0.0) r = 1e-12;
        if (!(alpha(r) > 0.0) || !(beta(r) > 0.0)) fail("alpha and beta must be positive on [r1, r2)");
      }
      break;
    }
    case DomainKind::ProductManifold:
      if (!factor) fail("product manifold needs a noncompact factor");
      factor->validate();
      check_section(base);
      if (factor->n + base.dim() != n) fail("product dimension mismatch");
      break;
  }
}

std::string ModelDomain::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(n=" << n;
  if (kind == DomainKind::KCylinder) os << ", k=" << k;
  if (kind == DomainKind::WarpedProduct) os << ", alpha=" << alpha.describe() << ", beta=" << beta.describe();
  if (kind == DomainKind::ProductManifold && factor) os << ", factor=" << factor->describe();
  os << ", r1=" << r1 << ")";
  return os.str();
}

// ---------------------------------------------------------------- Axis

double Axis::step() const {
  switch (kind) {
    case AxisKind::Regular: return (hi - lo) / static_cast<double>(count - 1);
    case AxisKind::Periodic: return (hi - lo) / static_cast<double>(count);
    case AxisKind::PoleLow: return (hi - lo) / (static_cast<double>(count) - 0.5);
    case AxisKind::PoleBoth: return (hi - lo) / static_cast<double>(count);
  }
  return 0.0;
}

double Axis::coordinate(std::size_t i) const {
  const double d = step();
  switch (kind) {
    case AxisKind::Regular:
      return i + 1 == count ? hi : lo + d * static_cast<double>(i);
    case AxisKind::Periodic: return lo + d * static_cast<double>(i);
    case AxisKind::PoleLow:
      return i + 1 == count ? hi : lo + d * (static_cast<double>(i) + 0.5);
    case AxisKind::PoleBoth: return lo + d * (static_cast<double>(i) + 0.5);
  }
  return 0.0;
}

double Axis::weight(std::size_t i) const {
  const double d = step();
  switch (kind) {
    case AxisKind::Regular: return (i == 0 || i + 1 == count) ? 0.5 * d : d;
    case AxisKind::Periodic: return d;
    case AxisKind::PoleLow: return i + 1 == count ? 0.5 * d : d;
    case AxisKind::PoleBoth: return d;
  }
  return 0.0;
}

// ---------------------------------------------------------------- grid

namespace {
int tag_rank(NodeTag t) {
  switch (t) {
    case NodeTag::PlateA:
    case NodeTag::PlateB: return 3;
    case NodeTag::ManifoldBoundary: return 2;
    case NodeTag::Cut: return 1;
    case NodeTag::Interior: return 0;
  }
  return 0;
}

bool has_lower_face(const Axis& a) { return a.kind == AxisKind::Regular; }
bool has_upper_face(const Axis& a) { return a.kind == AxisKind::Regular || a.kind == AxisKind::PoleLow; }

Vec block_scales(const DiscretizedDomain::Block& b, const Point& x, Vec s) {
  const int f = b.first;
  switch (b.kind) {
    case DiscretizedDomain::Block::Kind::Line: s[f] = 1.0; break;
    case DiscretizedDomain::Block::Kind::Polar:
      s[f] = b.alpha(x[f]);
      s[f + 1] = b.beta(x[f]);
      break;
    case DiscretizedDomain::Block::Kind::Spherical:
      s[f] = b.alpha(x[f]);
      s[f + 1] = b.beta(x[f]);
      s[f + 2] = b.beta(x[f]) * std::sin(x[f + 1]);
      break;
    case DiscretizedDomain::Block::Kind::Box:
      for (int a = 0; a < b.dims; ++a) s[f + a] = 1.0;
      break;
    case DiscretizedDomain::Block::Kind::Disk:
      s[f] = 1.0;
      s[f + 1] = x[f];
      break;
  }
  return s;
}
}  // namespace

DiscretizedDomain::DiscretizedDomain(std::vector<Axis> axes, std::vector<Block> blocks,
                                     std::map<Face, NodeTag> face_tags, int radial_axis, bool radial_abs)
    : face_tags_(face_tags),
      axes_(std::move(axes)),
      blocks_(std::move(blocks)),
      radial_axis_(radial_axis),
      radial_abs_(radial_abs) {
  const int d = dim();
  if (d < 1 || d > 3) throw Error(ErrorCode::InvalidDomain, "grids support one to three axes");
  for (const Axis& a : axes_) {
    if (a.count < 8) throw Error(ErrorCode::ResolutionTooCoarse, "axis '" + a.name + "' has fewer than 8 nodes");
    if (!(a.hi > a.lo)) throw Error(ErrorCode::InvalidDomain, "axis '" + a.name + "' is empty");
    if (a.kind == AxisKind::PoleLow || a.kind == AxisKind::PoleBoth) {
      if (a.partner < 0 || a.partner >= d || axes_[a.partner].kind != AxisKind::Periodic)
        throw Error(ErrorCode::InvalidDomain, "pole axis needs a periodic partner");
      if (axes_[a.partner].count % 2 != 0)
        throw Error(ErrorCode::InvalidDomain, "periodic partner of a pole axis needs an even node count");
    }
  }
  std::size_t total = 1;
  for (int a = d - 1; a >= 0; --a) {
    stride_[a] = total;
    total *= axes_[a].count;
  }
  nodes_.resize(total);
  scales_.resize(total);
  jacobian_.resize(total);
  metric_weight_.resize(total);
  volume_weight_.resize(total);
  tags_.assign(total, NodeTag::Interior);
  faces_.assign(total, 0);
  for (std::size_t node = 0; node < total; ++node) {
    const auto m = multi(node);
    Point x{};
    double cell = 1.0;
    std::uint8_t mask = 0;
    NodeTag tag = NodeTag::Interior;
    for (int a = 0; a < d; ++a) {
      const Axis& ax = axes_[a];
      x[a] = ax.coordinate(m[a]);
      cell *= ax.weight(m[a]);
      auto apply = [&](Face f) {
        mask |= static_cast<std::uint8_t>(1u << (2 * f.axis + (f.upper ? 1 : 0)));
        auto it = face_tags.find(f);
        NodeTag t = it == face_tags.end() ? NodeTag::ManifoldBoundary : it->second;
        if (tag_rank(t) > tag_rank(tag)) tag = t;
      };
      if (m[a] == 0 && has_lower_face(ax)) apply({a, false});
      if (m[a] + 1 == ax.count && has_upper_face(ax)) apply({a, true});
    }
    nodes_[node] = x;
    scales_[node] = scales_at(x);
    double jac = 1.0;
    double angular = 1.0;
    for (int a = 0; a < d; ++a) jac *= scales_[node][a];
    for (const Block& b : blocks_)
      if (b.kind == Block::Kind::Spherical) angular *= std::sin(x[b.first + 1]);
    jacobian_[node] = jac;
    metric_weight_[node] = jac / angular;
    volume_weight_[node] = jac * cell;
    tags_[node] = tag;
    faces_[node] = mask;
    if (!(jac > 0.0)) throw Error(ErrorCode::InvalidDomain, "metric degenerates at a grid node");
  }
}

std::vector<double> DiscretizedDomain::spacing() const {
  std::vector<double> s;
  for (const Axis& a : axes_) s.push_back(a.step());
  return s;
}

std::size_t DiscretizedDomain::index(const std::array<std::size_t, 3>& m) const {
  std::size_t idx = 0;
  for (int a = 0; a < dim(); ++a) idx += m[a] * stride_[a];
  return idx;
}

std::array<std::size_t, 3> DiscretizedDomain::multi(std::size_t node) const {
  std::array<std::size_t, 3> m{};
  for (int a = 0; a < dim(); ++a) {
    m[a] = node / stride_[a];
    node -= m[a] * stride_[a];
  }
  return m;
}

double DiscretizedDomain::cell_weight(std::size_t node) const {
  const auto m = multi(node);
  double w = 1.0;
  for (int a = 0; a < dim(); ++a) w *= axes_[a].weight(m[a]);
  return w;
}

bool DiscretizedDomain::crosses_pole(std::size_t node, int a, int dir) const {
  const Axis& ax = axes_[a];
  const std::size_t i = (node / stride_[a]) % ax.count;
  if (ax.kind == AxisKind::PoleLow) return dir < 0 && i == 0;
  if (ax.kind == AxisKind::PoleBoth) return (dir < 0 && i == 0) || (dir > 0 && i + 1 == ax.count);
  return false;
}

std::size_t DiscretizedDomain::neighbor(std::size_t node, int a, int dir) const {
  const Axis& ax = axes_[a];
  const std::size_t i = (node / stride_[a]) % ax.count;
  if (crosses_pole(node, a, dir)) {
    const Axis& pa = axes_[ax.partner];
    const std::size_t j = (node / stride_[ax.partner]) % pa.count;
    const std::size_t jr = (j + pa.count / 2) % pa.count;
    return node + (jr - j) * stride_[ax.partner];
  }
  if (ax.kind == AxisKind::Periodic) {
    const std::size_t ir = (i + ax.count + static_cast<std::size_t>(dir + 2) - 2) % ax.count;
    return node - i * stride_[a] + ir * stride_[a];
  }
  if (dir > 0) return i + 1 < ax.count ? node + stride_[a] : kNoNode;
  return i > 0 ? node - stride_[a] : kNoNode;
}

Vec DiscretizedDomain::scales_at(const Point& x) const {
  Vec s{1.0, 1.0, 1.0};
  for (const Block& b : blocks_) s = block_scales(b, x, s);
  return s;
}

double DiscretizedDomain::jacobian_at(const Point& x) const {
  const Vec s = scales_at(x);
  double j = 1.0;
  for (int a = 0; a < dim(); ++a) j *= s[a];
  return j;
}

double DiscretizedDomain::radial(std::size_t node) const { return radial_at(nodes_[node]); }

double DiscretizedDomain::radial_at(const Point& x) const {
  if (radial_axis_ < 0) throw Error(ErrorCode::InvalidDomain, "grid has no radial coordinate");
  const double r = x[radial_axis_];
  return radial_abs_ ? std::abs(r) : r;
}

double DiscretizedDomain::radial_sign(std::size_t node) const {
  if (!radial_abs_) return 1.0;
  const double r = nodes_[node][radial_axis_];
  return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
}

double DiscretizedDomain::diameter() const {
  double sq = 0.0;
  for (int a = 0; a < dim(); ++a) {
    double smax = 0.0;
    for (std::size_t i = 0; i < size(); ++i) smax = std::max(smax, scales_[i][a]);
    const double len = (axes_[a].hi - axes_[a].lo) * smax;
    sq += len * len;
  }
  return std::sqrt(sq);
}

NodeTag DiscretizedDomain::face_tag(int axis, bool upper) const {
  auto it = face_tags_.find(Face{axis, upper});
  return it == face_tags_.end() ? NodeTag::ManifoldBoundary : it->second;
}

std::vector<std::size_t> DiscretizedDomain::nodes_with(NodeTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (tags_[i] == tag) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------- builders

namespace {

struct ChartBuilder {
  std::vector<Axis> axes;
  std::vector<DiscretizedDomain::Block> blocks;
  std::map<Face, NodeTag> faces;
  int radial_axis = -1;
  bool radial_abs = false;

  int next() const { return static_cast<int>(axes.size()); }

  void radial(int m, const AngularDomain& u, const RadialProfile& alpha, const RadialProfile& beta,
              double inner, double outer) {
    DiscretizedDomain::Block b;
    b.first = next();
    b.dims = m;
    b.alpha = alpha;
    b.beta = beta;
    radial_axis = b.first;
    if (m == 1) {
      b.kind = DiscretizedDomain::Block::Kind::Line;
      axes.push_back({"x1", AxisKind::Regular, -outer, outer});
      radial_abs = true;
      faces[{b.first, false}] = NodeTag::Cut;
      faces[{b.first, true}] = NodeTag::Cut;
    } else {
      if (!(inner > 0.0)) fail("gridded radial domains need a positive inner radius");
      axes.push_back({"r", AxisKind::Regular, inner, outer});
      faces[{b.first, false}] = NodeTag::Cut;
      faces[{b.first, true}] = NodeTag::Cut;
      if (m == 2) {
        b.kind = DiscretizedDomain::Block::Kind::Polar;
        if (u.full) {
          axes.push_back({"theta", AxisKind::Periodic, 0.0, 2.0 * pi});
        } else {
          axes.push_back({"theta", AxisKind::Regular, u.lo, u.hi});
          faces[{b.first + 1, false}] = NodeTag::ManifoldBoundary;
          faces[{b.first + 1, true}] = NodeTag::ManifoldBoundary;
        }
      } else if (m == 3) {
        b.kind = DiscretizedDomain::Block::Kind::Spherical;
        const int phi = b.first + 2;
        if (u.full) {
          axes.push_back({"theta", AxisKind::PoleBoth, 0.0, pi, 8, phi});
        } else if (u.lo == 0.0) {
          axes.push_back({"theta", AxisKind::PoleLow, 0.0, u.hi, 8, phi});
          faces[{b.first + 1, true}] = NodeTag::ManifoldBoundary;
        } else {
          axes.push_back({"theta", AxisKind::Regular, u.lo, u.hi});
          faces[{b.first + 1, false}] = NodeTag::ManifoldBoundary;
          faces[{b.first + 1, true}] = NodeTag::ManifoldBoundary;
        }
        axes.push_back({"phi", AxisKind::Periodic, 0.0, 2.0 * pi});
      } else {
        fail("grids support radial blocks of dimension at most 3");
      }
    }
    blocks.push_back(b);
  }

  void compact(const CrossSection& s) {
    DiscretizedDomain::Block b;
    b.first = next();
    if (s.shape == CrossSection::Shape::Box) {
      b.kind = DiscretizedDomain::Block::Kind::Box;
      b.dims = static_cast<int>(s.extents.size());
      for (std::size_t i = 0; i < s.extents.size(); ++i) {
        const int a = next();
        axes.push_back({"y" + std::to_string(i + 1), AxisKind::Regular, 0.0, s.extents[i]});
        faces[{a, false}] = NodeTag::ManifoldBoundary;
        faces[{a, true}] = NodeTag::ManifoldBoundary;
      }
    } else {
      b.kind = DiscretizedDomain::Block::Kind::Disk;
      b.dims = 2;
      const int a = next();
      axes.push_back({"rho", AxisKind::PoleLow, 0.0, s.extents[0], 8, a + 1});
      axes.push_back({"psi", AxisKind::Periodic, 0.0, 2.0 * pi});
      faces[{a, true}] = NodeTag::ManifoldBoundary;
    }
    blocks.push_back(b);
  }

  void domain(const ModelDomain& d, double inner, double outer) {
    const auto one = RadialProfile::constant(1.0);
    const auto lin = RadialProfile::power(1.0, 1.0);
    switch (d.kind) {
      case DomainKind::EuclideanSpace: radial(d.n, AngularDomain::whole(), one, lin, inner, outer); break;
      case DomainKind::KCylinder:
        radial(d.k, AngularDomain::whole(), one, lin, inner, outer);
        compact(d.base);
        break;
      case DomainKind::Cone: radial(d.n, d.angular, one, lin, inner, outer); break;
      case DomainKind::WarpedProduct: radial(d.n, d.angular, d.alpha, d.beta, inner, outer); break;
      case DomainKind::ProductManifold:
        domain(*d.factor, inner, outer);
        compact(d.base);
        break;
    }
  }

  DiscretizedDomain finish(const std::vector<std::size_t>& resolution, const std::map<Face, NodeTag>& overrides) {
    if (resolution.size() != axes.size())
      fail("resolution lists " + std::to_string(resolution.size()) + " axes, grid has " +
           std::to_string(axes.size()));
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (resolution[a] < 8) throw Error(ErrorCode::ResolutionTooCoarse, "resolution below 8 on axis " + axes[a].name);
      axes[a].count = resolution[a];
    }
    for (const auto& [f, t] : overrides) faces[f] = t;
    return DiscretizedDomain(axes, blocks, faces, radial_axis, radial_abs);
  }
};

}  // namespace

DiscretizedDomain build_grid(const ModelDomain& domain, const GridRequest& request) {
  domain.validate();
  const double inner = request.inner >= 0.0 ? request.inner : domain.r1;
  const double outer = request.cut > 0.0 ? request.cut : domain.r2;
  if (!std::isfinite(outer)) fail("unbounded domain needs a finite radial cut");
  if (!(outer > inner)) fail("radial cut must exceed the inner radius");
  if (domain.kind == DomainKind::WarpedProduct && outer > domain.r2) fail("radial cut beyond r2");
  ChartBuilder cb;
  cb.domain(domain, inner, outer);
  if (cb.axes.size() > 3) fail("grids are limited to three axes (n <= 3)");
  DiscretizedDomain grid = cb.finish(request.resolution, request.face_tags);
  grid.set_truncation(outer);
  return grid;
}

DiscretizedDomain compact_box_grid(std::vector<double> extents, std::vector<std::size_t> resolution) {
  ChartBuilder cb;
  cb.compact(CrossSection::box(std::move(extents)));
  return cb.finish(resolution, {});
}

DiscretizedDomain compact_disk_grid(double radius, std::size_t radial, std::size_t angular) {
  ChartBuilder cb;
  cb.compact(CrossSection::disk(radius));
  return cb.finish({radial, angular}, {});
}

DiscretizedDomain cartesian_grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> resolution,
                                 std::map<Face, NodeTag> face_tags) {
  if (lo.size() != hi.size()) fail("cartesian grid bounds differ in length");
  ChartBuilder cb;
  DiscretizedDomain::Block b;
  b.kind = DiscretizedDomain::Block::Kind::Box;
  b.dims = static_cast<int>(lo.size());
  for (std::size_t a = 0; a < lo.size(); ++a)
    cb.axes.push_back({"x" + std::to_string(a + 1), AxisKind::Regular, lo[a], hi[a]});
  cb.blocks.push_back(b);
  return cb.finish(resolution, face_tags);
}

// ---------------------------------------------------------------- operators

std::vector<double> sample(const DiscretizedDomain& grid, const std::function<double(const Point&)>& fn) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = fn(grid.coordinates(i));
  return out;
}

namespace {
double coordinate_derivative(const DiscretizedDomain& g, std::span<const double> f, std::size_t i, int a) {
  const double d = g.axis(a).step();
  const std::size_t up = g.neighbor(i, a, +1);
  const std::size_t dn = g.neighbor(i, a, -1);
  if (up != kNoNode && dn != kNoNode) return (f[up] - f[dn]) / (2.0 * d);
  if (up != kNoNode) {
    const std::size_t up2 = g.neighbor(up, a, +1);
    return (-3.0 * f[i] + 4.0 * f[up] - f[up2]) / (2.0 * d);
  }
  const std::size_t dn2 = g.neighbor(dn, a, -1);
  return (3.0 * f[i] - 4.0 * f[dn] + f[dn2]) / (2.0 * d);
}

Point shifted(Point x, int a, double by) {
  x[a] += by;
  return x;
}

double norm(const Vec& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
}  // namespace

std::vector<Vec> gradient(const DiscretizedDomain& grid, std::span<const double> field) {
  std::vector<Vec> g(grid.size(), Vec{0.0, 0.0, 0.0});
  parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      for (int a = 0; a < grid.dim(); ++a) g[i][a] = coordinate_derivative(grid, field, i, a) / grid.scales(i)[a];
  });
  return g;
}

bool has_full_stencil(const DiscretizedDomain& grid, std::size_t node) {
  for (int a = 0; a < grid.dim(); ++a)
    if (grid.neighbor(node, a, +1) == kNoNode || grid.neighbor(node, a, -1) == kNoNode) return false;
  return true;
}

std::vector<double> divergence(const DiscretizedDomain& grid, std::span<const Vec> field) {
  std::vector<double> out(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!has_full_stencil(grid, i)) continue;
      double acc = 0.0;
      for (int a = 0; a < grid.dim(); ++a) {
        const double d = grid.axis(a).step();
        for (int dir : {+1, -1}) {
          if (grid.crosses_pole(i, a, dir)) continue;
          const std::size_t j = grid.neighbor(i, a, dir);
          const Point mid = shifted(grid.coordinates(i), a, 0.5 * dir * d);
          const Vec s = grid.scales_at(mid);
          const double area = grid.jacobian_at(mid) / s[a];
          acc += dir * area * 0.5 * (field[i][a] + field[j][a]) / d;
        }
      }
      out[i] = acc / grid.jacobian(i);
    }
  });
  return out;
}

namespace {
// Outward face flux |grad h|^{p-2} dh/dn times the face area factor J/s_a.
double face_flux(const DiscretizedDomain& grid, std::span<const double> h, const std::vector<Vec>& g,
                 std::size_t i, std::size_t j, int a, int dir, double p, double delta) {
  const double d = grid.axis(a).step();
  const Point mid = shifted(grid.coordinates(i), a, 0.5 * dir * d);
  const Vec s = grid.scales_at(mid);
  const double area = grid.jacobian_at(mid) / s[a];
  const double normal = (h[j] - h[i]) / (d * s[a]);  // outward derivative
  double sq = normal * normal + delta * delta;
  for (int b = 0; b < grid.dim(); ++b) {
    if (b == a) continue;
    const double t = 0.5 * (g[i][b] + g[j][b]);
    sq += t * t;
  }
  return area * std::pow(sq, 0.5 * (p - 2.0)) * normal;
}
}  // namespace

std::vector<double> p_laplacian(const DiscretizedDomain& grid, std::span<const double> h, double p, double delta) {
  const auto g = gradient(grid, h);
  std::vector<double> out(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!has_full_stencil(grid, i)) continue;
      double acc = 0.0;
      for (int a = 0; a < grid.dim(); ++a) {
        for (int dir : {+1, -1}) {
          if (grid.crosses_pole(i, a, dir)) continue;
          acc += face_flux(grid, h, g, i, grid.neighbor(i, a, dir), a, dir, p, delta) / grid.axis(a).step();
        }
      }
      out[i] = acc / grid.jacobian(i);
    }
  });
  return out;
}

std::vector<double> p_laplacian_scale(const DiscretizedDomain& grid, std::span<const double> h, double p,
                                      double delta) {
  const auto g = gradient(grid, h);
  std::vector<double> out(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!has_full_stencil(grid, i)) continue;
      double acc = 0.0;
      for (int a = 0; a < grid.dim(); ++a) {
        for (int dir : {+1, -1}) {
          if (grid.crosses_pole(i, a, dir)) continue;
          acc += std::abs(face_flux(grid, h, g, i, grid.neighbor(i, a, dir), a, dir, p, delta)) /
                 grid.axis(a).step();
        }
      }
      out[i] = acc / grid.jacobian(i);
    }
  });
  return out;
}

double volume_integral(const DiscretizedDomain& grid, std::span<const double> integrand) {
  return chunk_sum(grid.size(), [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += integrand[i] * grid.volume_weight(i);
    return s;
  });
}

// ---------------------------------------------------------------- level sets

std::vector<std::size_t> LevelShell::nodes() const {
  std::set<std::size_t> s;
  for (const auto& p : points) {
    s.insert(p.from);
    s.insert(p.to);
  }
  return {s.begin(), s.end()};
}

double LevelShell::total_weight() const {
  double w = 0.0;
  for (const auto& p : points) w += p.weight;
  return w;
}

double LevelShell::interpolate(std::span<const double> nodal, const ShellPoint& sp) const {
  return nodal[sp.from] + sp.frac * (nodal[sp.to] - nodal[sp.from]);
}

double LevelShell::integrate(std::span<const double> nodal) const {
  double s = 0.0;
  for (const auto& p : points) s += p.weight * interpolate(nodal, p);
  return s;
}

double LevelShell::integrate(const std::function<double(const ShellPoint&)>& fn) const {
  double s = 0.0;
  for (const auto& p : points) s += p.weight * fn(p);
  return s;
}

namespace {
double transverse_weight(const DiscretizedDomain& grid, std::size_t node, int a) {
  const auto m = grid.multi(node);
  double w = 1.0;
  for (int b = 0; b < grid.dim(); ++b)
    if (b != a) w *= grid.axis(b).weight(m[b]);
  return w;
}

std::pair<double, double> range_of(std::span<const double> h) {
  auto [lo, hi] = std::minmax_element(h.begin(), h.end());
  return {*lo, *hi};
}
}  // namespace

LevelShell level_shell(const DiscretizedDomain& grid, std::span<const double> h, double t) {
  const auto [hmin, hmax] = range_of(h);
  if (!(t > hmin && t < hmax)) throw Error(ErrorCode::LevelOutOfRange, "level outside (min h, max h)");
  const auto g = gradient(grid, h);
  LevelShell shell;
  shell.t = t;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int a = 0; a < grid.dim(); ++a) {
      if (grid.crosses_pole(i, a, +1)) continue;
      const std::size_t j = grid.neighbor(i, a, +1);
      if (j == kNoNode) continue;
      if ((h[i] < t) == (h[j] < t)) continue;
      const double d = grid.axis(a).step();
      ShellPoint sp;
      sp.from = i;
      sp.to = j;
      sp.axis = a;
      sp.frac = (t - h[i]) / (h[j] - h[i]);
      sp.position = shifted(grid.coordinates(i), a, sp.frac * d);
      const Vec s = grid.scales_at(sp.position);
      // Interpolated nodal gradient: second order at the crossing, unlike the
      // edge difference which is centred at the edge midpoint.
      for (int b = 0; b < grid.dim(); ++b) sp.grad_h[b] = g[i][b] + sp.frac * (g[j][b] - g[i][b]);
      const double mag = norm(sp.grad_h);
      const double na = mag > 0.0 ? std::abs(sp.grad_h[a]) / mag : 0.0;
      sp.weight = grid.jacobian_at(sp.position) / s[a] * transverse_weight(grid, i, a) * na;
      shell.points.push_back(sp);
    }
  }
  return shell;
}

namespace {
// Integral over s in [0,1] of the linear q(s) restricted to where the linear
// h(s) lies in (lo, hi].
double clipped_segment(double h0, double h1, double q0, double q1, double lo, double hi) {
  if (h0 == h1) return (h0 > lo && h0 <= hi) ? 0.5 * (q0 + q1) : 0.0;
  double s0 = (lo - h0) / (h1 - h0);
  double s1 = (hi - h0) / (h1 - h0);
  if (s0 > s1) std::swap(s0, s1);
  s0 = std::clamp(s0, 0.0, 1.0);
  s1 = std::clamp(s1, 0.0, 1.0);
  if (s1 <= s0) return 0.0;
  return q0 * (s1 - s0) + 0.5 * (q1 - q0) * (s1 * s1 - s0 * s0);
}
}  // namespace

double coarea_integral(const DiscretizedDomain& grid, std::span<const double> h, std::span<const double> integrand,
                       double t_lo, double t_hi) {
  if (!(t_hi > t_lo)) return 0.0;
  const auto g = gradient(grid, h);
  const int d = grid.dim();
  double gmax = 0.0;
  for (const Vec& v : g) gmax = std::max(gmax, norm(v));
  const double floor = 1e-10 * gmax;

  // Squared unit-normal components per node and axis.
  std::vector<Vec> n2(grid.size(), Vec{0.0, 0.0, 0.0});
  double degenerate = 0.0, band = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double mag = norm(g[i]);
    const bool in_band = h[i] > t_lo && h[i] <= t_hi;
    if (in_band) band += grid.volume_weight(i);
    if (mag <= floor || mag == 0.0) {
      for (int a = 0; a < d; ++a) n2[i][a] = 1.0 / d;
      if (in_band) degenerate += grid.volume_weight(i);
    } else {
      for (int a = 0; a < d; ++a) n2[i][a] = g[i][a] * g[i][a] / (mag * mag);
    }
  }
  if (band > 0.0 && degenerate > 0.1 * band)
    throw Error(ErrorCode::DegenerateGradient, "|grad h| vanishes on more than 10% of the band");

  return chunk_sum(grid.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      for (int a = 0; a < d; ++a) {
        const double step = grid.axis(a).step();
        const double tw = transverse_weight(grid, i, a);
        const double qi = integrand[i] * grid.jacobian(i) * n2[i][a] * tw;
        if (grid.crosses_pole(i, a, -1) && h[i] > t_lo && h[i] <= t_hi) acc += 0.5 * step * qi;
        if (grid.crosses_pole(i, a, +1)) {
          if (h[i] > t_lo && h[i] <= t_hi) acc += 0.5 * step * qi;
          continue;
        }
        const std::size_t j = grid.neighbor(i, a, +1);
        if (j == kNoNode) continue;
        const double qj = integrand[j] * grid.jacobian(j) * n2[j][a] * tw;
        acc += step * clipped_segment(h[i], h[j], qi, qj, t_lo, t_hi);
      }
    }
    return acc;
  });
}

double band_volume_integral(const DiscretizedDomain& grid, std::span<const double> h,
                            std::span<const double> integrand, double t_lo, double t_hi) {
  const auto g = gradient(grid, h);
  return chunk_sum(grid.size(), [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      double spread = 0.0;
      for (int a = 0; a < grid.dim(); ++a) {
        const double c = g[i][a] * grid.scales(i)[a] * grid.axis(a).step();
        spread += c * c;
      }
      spread = std::sqrt(spread);
      auto below = [&](double t) {
        if (spread == 0.0) return h[i] <= t ? 1.0 : 0.0;
        return std::clamp((t - h[i]) / spread + 0.5, 0.0, 1.0);
      };
      acc += integrand[i] * grid.volume_weight(i) * (below(t_hi) - below(t_lo));
    }
    return acc;
  });
}

std::string export_grid_text(const DiscretizedDomain& grid,
                             const std::vector<std::pair<std::string, std::span<const double>>>& fields) {
  std::string out = "# nlpt grid\n# dim " + std::to_string(grid.dim()) + "\n";
  char buf[64];
  for (int a = 0; a < grid.dim(); ++a) {
    const Axis& ax = grid.axis(a);
    static const char* kinds[] = {"regular", "periodic", "pole_low", "pole_both"};
    std::snprintf(buf, sizeof buf, "%.17g %.17g ", ax.lo, ax.hi);
    out += "# axis " + std::to_string(a) + " " + ax.name + " " + kinds[static_cast<int>(ax.kind)] + " " + buf +
           std::to_string(ax.count) + "\n";
  }
  out += "# columns index";
  for (int a = 0; a < grid.dim(); ++a) out += " " + grid.axis(a).name;
  out += " tag weight";
  for (const auto& f : fields) out += " " + f.first;
  out += "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out += std::to_string(i);
    for (int a = 0; a < grid.dim(); ++a) {
      std::snprintf(buf, sizeof buf, " %.17g", grid.coordinates(i)[a]);
      out += buf;
    }
    out += " ";
    out += to_string(grid.tag(i));
    std::snprintf(buf, sizeof buf, " %.17g", grid.volume_weight(i));
    out += buf;
    for (const auto& f : fields) {
      std::snprintf(buf, sizeof buf, " %.17g", f.second[i]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace nlpt

#include "nlpt/variational.hpp"

#include <algorithm>
#include <cmath>

#include "nlpt/error.hpp"
#include "nlpt/parallel.hpp"

namespace nlpt {

CellEnergy::CellEnergy(const DiscretizedDomain& grid, EnergyDensity density, std::vector<std::uint8_t> active)
    : grid_(&grid), density_(std::move(density)) {
  const int d = grid.dim();
  corners_ = 1 << d;
  if (density_.weights.empty()) density_.weights.assign(d, 1.0);
  if (static_cast<int>(density_.weights.size()) != d)
    throw Error(ErrorCode::InvalidDomain, "density weights do not match the grid dimension");
  if (!active.empty() && active.size() != grid.size())
    throw Error(ErrorCode::InvalidDomain, "active mask does not match the grid");

  const std::size_t n = grid.size();
  corner_weight_.resize(n);
  inv_step_.resize(n);
  double cell = 1.0;
  for (int a = 0; a < d; ++a) cell *= grid.axis(a).step();
  for (std::size_t i = 0; i < n; ++i) {
    corner_weight_[i] = grid.jacobian(i) * cell / corners_;
    Vec inv{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) inv[a] = 1.0 / (grid.scales(i)[a] * grid.axis(a).step());
    inv_step_[i] = inv;
  }

  std::vector<std::uint32_t> corner(corners_);
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (int a = 0; a < d && ok; ++a)
      ok = grid.neighbor(i, a, +1) != kNoNode && !grid.crosses_pole(i, a, +1);
    if (!ok) continue;
    for (int e = 0; e < corners_; ++e) {
      std::size_t node = i;
      for (int a = 0; a < d; ++a)
        if (e & (1 << a)) node = grid.neighbor(node, a, +1);
      corner[e] = static_cast<std::uint32_t>(node);
      if (!active.empty() && !active[node]) ok = false;
    }
    if (ok) cells_.insert(cells_.end(), corner.begin(), corner.end());
  }

  // Node -> (cell, corner) incidence for the gather step.
  incidence_start_.assign(n + 1, 0);
  for (std::uint32_t node : cells_) ++incidence_start_[node + 1];
  for (std::size_t i = 0; i < n; ++i) incidence_start_[i + 1] += incidence_start_[i];
  incidence_.resize(cells_.size());
  std::vector<std::uint32_t> fill(incidence_start_.begin(), incidence_start_.end() - 1);
  for (std::size_t slot = 0; slot < cells_.size(); ++slot) incidence_[fill[cells_[slot]]++] = static_cast<std::uint32_t>(slot);
}

double CellEnergy::value(std::span<const double> phi) const { return evaluate(phi, {}, {}); }

double CellEnergy::evaluate(std::span<const double> phi, std::span<double> grad, std::span<double> diag) const {
  const int d = grid_->dim();
  const double p = density_.p;
  const double delta2 = density_.delta * density_.delta;
  const double scale = density_.scale;
  const double curvature = std::max(1.0, p - 1.0);
  const bool quadratic = p == 2.0;
  const std::size_t ncells = cells_.size() / corners_;
  const bool want_grad = !grad.empty();
  const bool want_diag = !diag.empty();
  std::vector<double> gbuf(want_grad ? cells_.size() : 0, 0.0);
  std::vector<double> dbuf(want_diag ? cells_.size() : 0, 0.0);
  const auto& w = density_.weights;

  const double total = chunk_sum(ncells, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t c = b; c < e; ++c) {
      const std::uint32_t* node = &cells_[c * corners_];
      for (int k = 0; k < corners_; ++k) {
        const std::uint32_t at = node[k];
        const Vec& inv = inv_step_[at];
        double g[3] = {0.0, 0.0, 0.0};
        double q = delta2;
        for (int a = 0; a < d; ++a) {
          const int lo = k & ~(1 << a), hi = k | (1 << a);
          g[a] = (phi[node[hi]] - phi[node[lo]]) * inv[a];
          q += w[a] * g[a] * g[a];
        }
        const double pw = quadratic ? 1.0 : std::pow(q, 0.5 * (p - 2.0));
        const double omega = corner_weight_[at];
        acc += omega * scale * pw * q;
        if (!want_grad && !want_diag) continue;
        const double coef = omega * scale * p * pw;
        for (int a = 0; a < d; ++a) {
          const int lo = k & ~(1 << a), hi = k | (1 << a);
          if (want_grad) {
            const double t = coef * w[a] * g[a] * inv[a];
            gbuf[c * corners_ + hi] += t;
            gbuf[c * corners_ + lo] -= t;
          }
          if (want_diag) {
            const double t = coef * curvature * w[a] * inv[a] * inv[a];
            dbuf[c * corners_ + hi] += t;
            dbuf[c * corners_ + lo] += t;
          }
        }
      }
    }
    return acc;
  });

  if (want_grad || want_diag) {
    parallel_for(grid_->size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        double gs = 0.0, ds = 0.0;
        for (std::uint32_t s = incidence_start_[i]; s < incidence_start_[i + 1]; ++s) {
          if (want_grad) gs += gbuf[incidence_[s]];
          if (want_diag) ds += dbuf[incidence_[s]];
        }
        if (want_grad) grad[i] = gs;
        if (want_diag) diag[i] = ds;
      }
    });
  }
  return total;
}

namespace {
double dot(std::span<const double> a, std::span<const double> b) {
  return chunk_sum(a.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    return s;
  });
}

double sup_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}
}  // namespace

MinimizeResult minimize(const CellEnergy& energy, std::vector<double> x0, std::span<const std::uint8_t> fixed,
                        const MinimizeOptions& options) {
  const std::size_t n = energy.grid().size();
  if (x0.size() != n) throw Error(ErrorCode::InvalidDomain, "initial field does not match the grid");
  MinimizeResult out;
  std::vector<double>& x = x0;
  std::vector<double> g(n), diag(n), z(n), dir(n), xt(n), gt(n), dt(n);

  auto eval = [&](const std::vector<double>& at, std::vector<double>& grad, std::vector<double>& dg) {
    const double e = energy.evaluate(at, grad, dg);
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed.empty() && fixed[i]) grad[i] = 0.0;
    return e;
  };
  auto precondition = [&](const std::vector<double>& grad, const std::vector<double>& dg, std::vector<double>& out_z) {
    double dmax = 0.0;
    for (double v : dg) dmax = std::max(dmax, v);
    const double floor = std::max(dmax * 1e-12, 1e-300);
    for (std::size_t i = 0; i < n; ++i) out_z[i] = grad[i] / std::max(dg[i], floor);
  };

  double e = eval(x, g, diag);
  out.initial_gradient_norm = sup_norm(g);
  if (options.record_history) out.history.push_back(e);
  precondition(g, diag, z);
  for (std::size_t i = 0; i < n; ++i) dir[i] = -z[i];
  double alpha = 1.0;
  double zg = dot(z, g);

  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    const double gn = sup_norm(g);
    out.gradient_norm = gn;
    if (gn == 0.0 || gn <= options.tolerance * out.initial_gradient_norm || gn <= options.absolute_tolerance) {
      out.converged = true;
      break;
    }
    double gd = dot(g, dir);
    if (!(gd < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) dir[i] = -z[i];
      gd = dot(g, dir);
    }

    auto trial = [&](double a) {
      for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + a * dir[i];
      return eval(xt, gt, dt);
    };
    auto acceptable = [&](double a, double et) {
      if (et <= e + 1e-4 * a * gd) return true;
      // Energy differences at roundoff: fall back to the directional derivative.
      return std::abs(et - e) <= 1e-13 * std::abs(e) && std::abs(dot(gt, dir)) < std::abs(gd);
    };

    double et = trial(alpha);
    const double slope = dot(gt, dir);
    const double curv = (slope - gd) / alpha;
    double step = alpha;
    if (curv > 0.0) {
      const double secant = -gd / curv;
      const bool close = std::abs(secant - alpha) <= 0.05 * alpha;
      if (!(close && acceptable(alpha, et))) {
        step = secant;
        et = trial(step);
      }
    } else if (acceptable(alpha, et)) {
      alpha *= 2.0;
    }
    int halvings = 0;
    while (!acceptable(step, et) && halvings < 60) {
      step *= 0.5;
      et = trial(step);
      ++halvings;
    }
    if (!acceptable(step, et)) break;  // no descent possible at this precision
    alpha = step;

    x.swap(xt);
    e = et;
    if (options.record_history) out.history.push_back(e);
    std::vector<double> g_old = g;
    g.swap(gt);
    diag.swap(dt);
    precondition(g, diag, z);
    double num = 0.0;
    for (std::size_t i = 0; i < n; ++i) num += z[i] * (g[i] - g_old[i]);
    const double beta = zg > 0.0 ? std::max(0.0, num / zg) : 0.0;
    zg = dot(z, g);
    for (std::size_t i = 0; i < n; ++i) dir[i] = -z[i] + beta * dir[i];
  }
  if (!out.converged) {
    const double gn = sup_norm(g);
    out.gradient_norm = gn;
    out.converged = gn <= options.tolerance * out.initial_gradient_norm || gn <= options.absolute_tolerance;
  }
  out.iterations = it;
  out.energy = e;
  out.x = std::move(x);
  return out;
}

}  // namespace nlpt

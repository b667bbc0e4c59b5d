#pragma once

// Continuum references for the lattice solves: covariance estimates, closed
// form caloric functions, the discrete-vs-continuum sup error, Brownian exit
// probabilities on the unit cylinder and a Harnack-constant estimator.
//
// The continuum solver works on the unit disk (d = 2) with Shortley-Weller
// differences at the curved boundary and backward Euler in time. Time runs
// backward from the top face t = 1 down to t = 0.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/caloric.hpp"
#include "rwre/environment.hpp"
#include "rwre/lattice.hpp"
#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre {

using Matrix = std::vector<std::vector<double>>;

struct CovarianceEstimate {
  Matrix matrix;
  Matrix standard_errors;
  std::int64_t n0 = 0;
  bool exact = false;
  std::int64_t samples = 0;

  double trace() const {
    double s = 0;
    for (std::size_t i = 0; i < matrix.size(); ++i) s += matrix[i][i];
    return s;
  }
};

/// (1/n0) E^x[(X_n0 - x)(X_n0 - x)^T]. Exact over the position law when
/// n0 <= 6, d <= 2 and `exact_if_small`; Monte Carlo otherwise.
inline CovarianceEstimate estimate_covariance(const Environment& env, const Site& x, std::int64_t n0,
                                              bool exact_if_small = true, std::int64_t samples = 20000,
                                              std::uint64_t seed = 1, int workers = 1) {
  require(n0 >= 1, "horizon n0 must be at least 1");
  const int d = env.dim();
  require(x.dim() == d, "start dimension differs from the environment");
  CovarianceEstimate est;
  est.n0 = n0;
  est.matrix.assign(d, std::vector<double>(d, 0.0));
  est.standard_errors.assign(d, std::vector<double>(d, 0.0));
  if (exact_if_small && n0 <= 6 && d <= 2) {
    std::map<Site, double> law{{x, 1.0}};
    for (std::int64_t n = 0; n < n0; ++n) {
      std::map<Site, double> next;
      for (const auto& [y, m] : law) {
        const SiteKernel k = env.kernel(y);
        for (int i = 0; i < 2 * d; ++i)
          if (k[i] > 0) next[y.step(i)] += m * k[i];
      }
      law = std::move(next);
    }
    for (const auto& [y, m] : law)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          est.matrix[i][j] += m * static_cast<double>(y[i] - x[i]) * static_cast<double>(y[j] - x[j]);
    for (auto& row : est.matrix)
      for (double& v : row) v /= static_cast<double>(n0);
    est.exact = true;
    return est;
  }
  require(samples >= 2, "Monte Carlo covariance needs at least 2 samples");
  struct Acc {
    std::array<Moments, kMaxDim * kMaxDim> m{};
    Acc& operator+=(const Acc& o) {
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += o.m[i];
      return *this;
    }
  };
  const Stepper stepper(env);
  const Acc acc = blocked_sum<Acc>(samples, workers, [&](std::int64_t s) {
    CounterRng rng(stream_key(seed, static_cast<std::uint64_t>(s)));
    Site y = x;
    for (std::int64_t n = 0; n < n0; ++n) y = y.step(stepper.direction(y, rng));
    Acc a;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        a.m[i * d + j].add(static_cast<double>(y[i] - x[i]) * static_cast<double>(y[j] - x[j]) /
                           static_cast<double>(n0));
    return a;
  });
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      est.matrix[i][j] = acc.m[i * d + j].mean();
      est.standard_errors[i][j] = acc.m[i * d + j].std_error();
    }
  est.samples = samples;
  return est;
}

enum class FieldKind { exponential, quadratic, coordinate, constant, custom };

/// A function F(x, t) on the closed unit cylinder solving
/// dF/dt + 1/2 sum a_ii d^2F/dx_i^2 = 0. Closed forms carry their derivatives.
struct ContinuumField {
  FieldKind kind = FieldKind::constant;
  std::string name;
  std::vector<double> diffusivity;  // diagonal of the covariance matrix
  std::function<double(std::span<const double>, double)> value;
  std::function<double(std::span<const double>, double)> time_derivative;
  std::function<double(std::span<const double>, double, int)> second_derivative;

  double operator()(std::span<const double> x, double t) const { return value(x, t); }

  /// Residual of the backward heat equation from the stored derivatives.
  double residual(std::span<const double> x, double t) const {
    require(static_cast<bool>(time_derivative) && static_cast<bool>(second_derivative),
            "field '" + name + "' has no closed-form derivatives");
    double r = time_derivative(x, t);
    for (std::size_t i = 0; i < diffusivity.size(); ++i)
      r += 0.5 * diffusivity[i] * second_derivative(x, t, static_cast<int>(i));
    return r;
  }

  /// F_R(x, t) = F(x / R, t / R^2) at a lattice point.
  double rescaled(const SpaceTimePoint& p, double radius) const {
    std::array<double, kMaxDim> z{};
    const int d = p.site.dim();
    for (int i = 0; i < d; ++i) z[i] = static_cast<double>(p.site[i]) / radius;
    return value(std::span<const double>(z.data(), d), static_cast<double>(p.time) / radius_sq(radius));
  }
};

/// Closed-form caloric function. `params` is lambda for exponential, {i} for
/// quadratic and coordinate (0-based axis), {c} for constant.
inline ContinuumField reference_caloric(FieldKind kind, const std::vector<double>& diffusivity,
                                        const std::vector<double>& params = {}) {
  require(!diffusivity.empty(), "covariance diagonal must be non-empty");
  for (double a : diffusivity) require(a > 0, "covariance diagonal must be positive");
  const int d = static_cast<int>(diffusivity.size());
  ContinuumField f;
  f.kind = kind;
  f.diffusivity = diffusivity;
  auto axis_param = [&]() {
    require(params.size() == 1, "field needs exactly one axis parameter");
    const int i = static_cast<int>(params[0]);
    require(i >= 0 && i < d && static_cast<double>(i) == params[0], "axis parameter out of range");
    return i;
  };
  switch (kind) {
    case FieldKind::exponential: {
      require(static_cast<int>(params.size()) == d, "exponential field needs lambda of length d");
      double rate = 0;
      for (int i = 0; i < d; ++i) rate += diffusivity[i] * params[i] * params[i];
      rate *= 0.5;
      const std::vector<double> lambda = params;
      auto v = [lambda, rate](std::span<const double> x, double t) {
        double s = 0;
        for (std::size_t i = 0; i < lambda.size(); ++i) s += lambda[i] * x[i];
        return std::exp(s - rate * t);
      };
      f.name = "exponential";
      f.value = v;
      f.time_derivative = [v, rate](std::span<const double> x, double t) { return -rate * v(x, t); };
      f.second_derivative = [v, lambda](std::span<const double> x, double t, int i) {
        return lambda[i] * lambda[i] * v(x, t);
      };
      break;
    }
    case FieldKind::quadratic: {
      const int i = axis_param();
      const double a = diffusivity[i];
      f.name = "quadratic";
      f.value = [i, a](std::span<const double> x, double t) { return x[i] * x[i] - a * t; };
      f.time_derivative = [a](std::span<const double>, double) { return -a; };
      f.second_derivative = [i](std::span<const double>, double, int j) { return j == i ? 2.0 : 0.0; };
      break;
    }
    case FieldKind::coordinate: {
      const int i = axis_param();
      f.name = "coordinate";
      f.value = [i](std::span<const double> x, double) { return x[i]; };
      f.time_derivative = [](std::span<const double>, double) { return 0.0; };
      f.second_derivative = [](std::span<const double>, double, int) { return 0.0; };
      break;
    }
    case FieldKind::constant: {
      const double c = params.empty() ? 1.0 : params[0];
      f.name = "constant";
      f.value = [c](std::span<const double>, double) { return c; };
      f.time_derivative = [](std::span<const double>, double) { return 0.0; };
      f.second_derivative = [](std::span<const double>, double, int) { return 0.0; };
      break;
    }
    case FieldKind::custom:
      throw InvalidArgument("custom fields are built directly, not by reference_caloric");
  }
  return f;
}

inline const char* field_kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::exponential: return "exponential";
    case FieldKind::quadratic: return "quadratic";
    case FieldKind::coordinate: return "coordinate";
    case FieldKind::constant: return "constant";
    case FieldKind::custom: return "custom";
  }
  return "unknown";
}

inline FieldKind parse_field_kind(const std::string& s) {
  if (s == "exponential") return FieldKind::exponential;
  if (s == "quadratic") return FieldKind::quadratic;
  if (s == "coordinate") return FieldKind::coordinate;
  if (s == "constant") return FieldKind::constant;
  throw InvalidArgument("unknown field kind '" + s + "'");
}

struct HomogenizationError {
  double sup_error = 0;
  SpaceTimePoint argmax;
  double radius = 0;
  std::int64_t points = 0;
};

/// Solves L G = 0 on Q_R with G = F_R on the parabolic boundary and returns
/// sup over Q_R of |F_R - G|.
inline HomogenizationError homogenization_error(const Environment& env, double radius, const ContinuumField& f) {
  require(radius >= 2, "homogenization error needs R >= 2");
  require(static_cast<int>(f.diffusivity.size()) == env.dim(), "field and environment dimensions differ");
  const Cylinder c(SpaceTimePoint{Site::zero(env.dim()), 0}, radius);
  const auto dom = ParabolicDomain::q_domain(c);
  const auto bv = dom.boundary_values([&](const SpaceTimePoint& p) { return f.rescaled(p, radius); });
  HomogenizationError out;
  out.radius = radius;
  out.argmax = SpaceTimePoint{Site::zero(env.dim()), 0};
  double worst = -1;
  sweep_backward(env, dom, bv, [&](std::int64_t t, std::span<const double> slice) {
    if (t >= dom.top()) return;
    for (std::int64_t i = 0; i < dom.interior_count(); ++i) {
      const SpaceTimePoint p{dom.site(i), t};
      const double e = std::abs(f.rescaled(p, radius) - slice[i]);
      ++out.points;
      if (e > worst) {
        worst = e;
        out.argmax = p;
      }
    }
  });
  out.sup_error = std::max(0.0, worst);
  return out;
}

// ---------------------------------------------------------------------------
// Exit cells on the parabolic boundary of the unit cylinder (d = 2).

/// Angles live in [-pi, pi). A lateral cell is an angular sector times a time
/// interval [t_lo, t_hi) (closed at 1). A top cell is a sector times a radius
/// interval on the face t = 1. A sector with lo > hi wraps through -pi.
struct ExitCell {
  std::string label;
  bool top = false;
  double angle_lo = -std::numbers::pi;
  double angle_hi = std::numbers::pi;
  double t_lo = 0;
  double t_hi = 1;
  double r_lo = 0;
  double r_hi = 1;
  bool whole = false;  // the entire parabolic boundary

  static double normalize_angle(double a) {
    while (a >= std::numbers::pi) a -= 2 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
    return a;
  }
  bool angle_in(double a) const {
    if (angle_lo < angle_hi) return a >= angle_lo && a < angle_hi;
    return a >= angle_lo || a < angle_hi;
  }
  bool contains_lateral(double angle, double t) const {
    if (top) return false;
    return angle_in(normalize_angle(angle)) && t >= t_lo && (t < t_hi || (t_hi >= 1 && t <= 1));
  }
  bool contains_top(double x, double y) const {
    if (whole) return true;
    if (!top) return false;
    const double r = std::hypot(x, y);
    const double a = (x == 0 && y == 0) ? 0.0 : normalize_angle(std::atan2(y, x));
    return angle_in(a) && r >= r_lo && (r < r_hi || r_hi >= 1);
  }
  /// Share of the arc [angle - width/2, angle + width/2] inside the sector.
  double angle_fraction(double angle, double width) const {
    const double pi = std::numbers::pi;
    const double lo = angle - width / 2, hi = angle + width / 2;
    const double s_lo = angle_lo, s_hi = angle_lo < angle_hi ? angle_hi : angle_hi + 2 * pi;
    double in = 0;
    for (int k = -2; k <= 2; ++k)
      in += std::max(0.0, std::min(hi, s_hi + 2 * pi * k) - std::max(lo, s_lo + 2 * pi * k));
    return std::min(1.0, in / width);
  }
  /// Length of [t0, t1] inside the time interval (lateral cells).
  double time_overlap(double t0, double t1) const {
    return std::max(0.0, std::min(t1, t_hi) - std::max(t0, t_lo));
  }
};

using ExitPartition = std::vector<ExitCell>;

inline ExitCell whole_lateral_cell(std::string label = "lateral") {
  ExitCell c;
  c.label = std::move(label);
  return c;
}
inline ExitCell whole_boundary_cell(std::string label = "all") {
  ExitCell c;
  c.label = std::move(label);
  c.whole = true;
  return c;
}
inline ExitCell whole_top_cell(std::string label = "top") {
  ExitCell c;
  c.label = std::move(label);
  c.top = true;
  return c;
}

/// `sectors` equal angular sectors starting at -pi, each split into
/// `time_cells` equal time intervals, plus the whole top face.
inline ExitPartition sector_partition(int sectors, int time_cells = 1, bool with_top = true) {
  require(sectors >= 1 && time_cells >= 1, "partition needs at least one sector and one time cell");
  ExitPartition out;
  const double pi = std::numbers::pi;
  for (int s = 0; s < sectors; ++s)
    for (int k = 0; k < time_cells; ++k) {
      ExitCell c;
      c.label = "sector" + std::to_string(s) + "_t" + std::to_string(k);
      c.angle_lo = -pi + 2 * pi * s / sectors;
      c.angle_hi = s + 1 == sectors ? pi : -pi + 2 * pi * (s + 1) / sectors;
      c.t_lo = static_cast<double>(k) / time_cells;
      c.t_hi = k + 1 == time_cells ? 1.0 : static_cast<double>(k + 1) / time_cells;
      out.push_back(c);
    }
  if (with_top) out.push_back(whole_top_cell());
  return out;
}

/// Four quadrant sectors with boundaries on the axes plus the top face.
inline ExitPartition quadrant_partition() { return sector_partition(4, 1, true); }

/// Boundary mesh for the Harnack search: sectors x time cells on the side,
/// sectors x rings on the top face.
inline ExitPartition boundary_mesh(int sectors, int time_cells, int rings) {
  require(rings >= 1, "mesh needs at least one ring");
  ExitPartition out = sector_partition(sectors, time_cells, false);
  const double pi = std::numbers::pi;
  for (int s = 0; s < sectors; ++s)
    for (int r = 0; r < rings; ++r) {
      ExitCell c;
      c.label = "top_s" + std::to_string(s) + "_r" + std::to_string(r);
      c.top = true;
      c.angle_lo = -pi + 2 * pi * s / sectors;
      c.angle_hi = s + 1 == sectors ? pi : -pi + 2 * pi * (s + 1) / sectors;
      c.r_lo = static_cast<double>(r) / rings;
      c.r_hi = r + 1 == rings ? 1.0 : static_cast<double>(r + 1) / rings;
      out.push_back(c);
    }
  return out;
}

struct ContinuumPoint {
  double x = 0;
  double y = 0;
  double t = 0;
};

// ---------------------------------------------------------------------------
// Grid solver on the unit disk.

namespace detail {

struct BoundaryLink {
  std::int32_t node;
  double weight;  // coefficient of the boundary value in (A u)
  double angle;
};

class DiskGrid {
 public:
  DiskGrid(int grid_n, const std::vector<double>& diffusivity) : n_(grid_n), h_(2.0 / grid_n) {
    require(grid_n >= 8 && grid_n % 2 == 0, "grid size must be even and at least 8");
    require(diffusivity.size() == 2, "the continuum solver is two-dimensional");
    for (double a : diffusivity) require(a > 0, "covariance diagonal must be positive");
    index_.assign(static_cast<std::size_t>((n_ + 1) * (n_ + 1)), -1);
    for (int i = 0; i <= n_; ++i)
      for (int j = 0; j <= n_; ++j) {
        const double x = coord(i), y = coord(j);
        if (x * x + y * y < 1.0 - 1e-12) {
          index_[i * (n_ + 1) + j] = static_cast<std::int32_t>(nodes_.size());
          nodes_.push_back({i, j});
        }
      }
    const auto m = static_cast<int>(nodes_.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < m; ++k) {
      const auto [i, j] = nodes_[k];
      const double pos[2] = {coord(i), coord(j)};
      double diag = 0;
      for (int axis = 0; axis < 2; ++axis) {
        const double c = 0.5 * diffusivity[axis];
        double dist[2];
        std::int32_t nb[2];
        double ang[2];
        for (int side = 0; side < 2; ++side) {
          const int sigma = side == 0 ? -1 : 1;
          const int ni = axis == 0 ? i + sigma : i;
          const int nj = axis == 1 ? j + sigma : j;
          nb[side] = node(ni, nj);
          if (nb[side] >= 0) {
            dist[side] = h_;
            ang[side] = 0;
          } else {
            const double other = pos[1 - axis];
            const double s = std::sqrt(std::max(0.0, 1.0 - other * other)) - sigma * pos[axis];
            dist[side] = std::clamp(s, 1e-3 * h_, h_);
            double bp[2] = {pos[0], pos[1]};
            bp[axis] += sigma * dist[side];
            ang[side] = ExitCell::normalize_angle(std::atan2(bp[1], bp[0]));
          }
        }
        const double sum = dist[0] + dist[1];
        for (int side = 0; side < 2; ++side) {
          const double w = c * 2.0 / (dist[side] * sum);
          diag -= w;
          if (nb[side] >= 0)
            trip.emplace_back(k, nb[side], w);
          else
            links_.push_back({k, w, ang[side]});
        }
      }
      trip.emplace_back(k, k, diag);
    }
    generator_.resize(m, m);
    generator_.setFromTriplets(trip.begin(), trip.end());
  }

  int n() const { return n_; }
  double h() const { return h_; }
  double coord(int i) const { return static_cast<double>(i - n_ / 2) * h_; }
  std::int32_t node(int i, int j) const {
    if (i < 0 || j < 0 || i > n_ || j > n_) return -1;
    return index_[i * (n_ + 1) + j];
  }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<std::pair<int, int>>& nodes() const { return nodes_; }
  const std::vector<BoundaryLink>& links() const { return links_; }
  const Eigen::SparseMatrix<double>& generator() const { return generator_; }

 private:
  int n_;
  double h_;
  std::vector<std::int32_t> index_;
  std::vector<std::pair<int, int>> nodes_;
  std::vector<BoundaryLink> links_;
  Eigen::SparseMatrix<double> generator_;
};

/// Backward-Euler march from t = 1 to t = 0 with one column per cell. The
/// visitor sees (level n, t_n, dt, values) after every level, n = 0 first.
template <class Visit>
void march_exit_fields(const DiskGrid& g, const ExitPartition& cells, int steps, Visit&& visit) {
  require(steps >= 1, "time steps must be positive");
  const int m = g.size();
  const int nc = static_cast<int>(cells.size());
  require(nc >= 1, "partition needs at least one cell");
  const double dt = 1.0 / steps;
  Eigen::SparseMatrix<double> sys(m, m);
  sys.setIdentity();
  sys -= dt * g.generator();
  sys.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(sys);
  if (lu.info() != Eigen::Success) throw Error("continuum solver factorization failed");

  // per cell: links weighted by the share of one grid arc inside the sector,
  // which keeps sector edges from snapping to grid lines
  std::vector<std::vector<std::pair<std::int32_t, double>>> cell_links(nc);
  for (int c = 0; c < nc; ++c) {
    if (cells[c].top) continue;
    for (const auto& l : g.links()) {
      const double share = cells[c].angle_fraction(l.angle, g.h());
      if (share > 0) cell_links[c].push_back({l.node, l.weight * share});
    }
  }

  Eigen::MatrixXd u(m, nc);
  for (int k = 0; k < m; ++k) {
    const auto [i, j] = g.nodes()[k];
    for (int c = 0; c < nc; ++c) u(k, c) = cells[c].contains_top(g.coord(i), g.coord(j)) ? 1.0 : 0.0;
  }
  visit(0, 1.0, dt, u);
  for (int n = 1; n <= steps; ++n) {
    const double t_new = 1.0 - n * dt;
    const double t_old = 1.0 - (n - 1) * dt;
    Eigen::MatrixXd rhs = u;
    for (int c = 0; c < nc; ++c) {
      if (cells[c].top) continue;
      const double frac = cells[c].time_overlap(std::max(0.0, t_new), t_old) / dt;
      if (frac == 0) continue;
      for (const auto& [node, w] : cell_links[c]) rhs(node, c) += dt * w * frac;
    }
    u = lu.solve(rhs);
    visit(n, std::max(0.0, t_new), dt, u);
  }
}

/// Boundary value of a cell at an angle for the step ending at t (the
/// step-averaged lateral indicator; the top level uses t = 1 values).
inline double lateral_value(const ExitCell& c, double angle, double t, double dt, int level, double width) {
  if (c.top) return 0.0;
  const double share = c.angle_fraction(ExitCell::normalize_angle(angle), width);
  if (level == 0) return c.t_hi >= 1 ? share : 0.0;
  return share * c.time_overlap(t, std::min(1.0, t + dt)) / dt;
}

/// Values of every cell's exit field at the probes, probe-major. Probes are
/// interpolated bilinearly in space and linearly between time levels.
inline std::vector<double> probe_values(const DiskGrid& g, const ExitPartition& cells, int steps,
                                        const std::vector<ContinuumPoint>& probes) {
  for (const auto& p : probes)
    require(p.t >= 0 && p.t <= 1 && p.x * p.x + p.y * p.y <= 1 + 1e-12, "probe lies outside the closed cylinder");
  const int nc = static_cast<int>(cells.size());
  std::vector<double> out(probes.size() * cells.size(), 0.0);
  std::vector<bool> done(probes.size(), false);

  // probes on the lateral surface take the boundary datum directly
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto& q = probes[p];
    if (q.x * q.x + q.y * q.y < 1.0 - 1e-12) continue;
    const double a = std::atan2(q.y, q.x);
    for (int c = 0; c < nc; ++c) out[p * nc + c] = cells[c].contains_lateral(a, q.t) ? 1.0 : 0.0;
    done[p] = true;
  }

  const double h = g.h();
  auto bilinear = [&](const Eigen::MatrixXd& u, const ContinuumPoint& q, int c, double t, double dt, int level) {
    const double fx = q.x / h + g.n() / 2.0, fy = q.y / h + g.n() / 2.0;
    const int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, g.n() - 1);
    const int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, g.n() - 1);
    const double ax = fx - i0, ay = fy - j0;
    double v = 0;
    for (int di = 0; di <= 1; ++di)
      for (int dj = 0; dj <= 1; ++dj) {
        const double w = (di ? ax : 1 - ax) * (dj ? ay : 1 - ay);
        if (w == 0) continue;
        const auto k = g.node(i0 + di, j0 + dj);
        const double val = k >= 0 ? u(k, c)
                                  : lateral_value(cells[c], std::atan2(g.coord(j0 + dj), g.coord(i0 + di)), t, dt,
                                                  level, h);
        v += w * val;
      }
    return v;
  };

  Eigen::MatrixXd prev;
  double t_prev = 1.0;
  march_exit_fields(g, cells, steps, [&](int level, double t, double dt, const Eigen::MatrixXd& u) {
    for (std::size_t p = 0; p < probes.size(); ++p) {
      if (done[p]) continue;
      const auto& q = probes[p];
      if (level == 0) {
        if (q.t < 1.0) continue;
        for (int c = 0; c < nc; ++c) out[p * nc + c] = bilinear(u, q, c, t, dt, 0);
        done[p] = true;
        continue;
      }
      if (q.t < t && level < steps) continue;
      const double lam = (t_prev - q.t) / (t_prev - t);
      for (int c = 0; c < nc; ++c) {
        const double hi = bilinear(prev, q, c, t_prev, dt, level - 1);
        const double lo = bilinear(u, q, c, t, dt, level);
        out[p * nc + c] = std::clamp((1 - lam) * hi + lam * lo, 0.0, 1.0);
      }
      done[p] = true;
    }
    prev = u;
    t_prev = t;
  });
  return out;
}

}  // namespace detail

/// chi_c(probe) for every probe and cell.
struct BmExitField {
  int grid_n = 0;
  int steps = 0;
  ExitPartition cells;
  std::vector<ContinuumPoint> probes;
  std::vector<double> values;  // probe-major

  double at(std::size_t probe, std::size_t cell) const { return values[probe * cells.size() + cell]; }
  double probe_sum(std::size_t probe) const {
    double s = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) s += at(probe, c);
    return s;
  }
};

inline int default_time_steps(int grid_n) { return std::max(64, grid_n * grid_n / 16); }

/// Brownian exit probabilities chi(x, s) = P^x(exit point of the unit cylinder
/// started at time s lies in cell c), covariance diag(diffusivity), at the
/// probe points. steps <= 0 picks default_time_steps(grid_n).
inline BmExitField bm_exit_probability(const std::vector<double>& diffusivity, const ExitPartition& cells, int grid_n,
                                       const std::vector<ContinuumPoint>& probes, int steps = 0) {
  require(grid_n >= 32, "grid size must be at least 32");
  if (steps <= 0) steps = default_time_steps(grid_n);
  const detail::DiskGrid g(grid_n, diffusivity);
  BmExitField out;
  out.grid_n = grid_n;
  out.steps = steps;
  out.cells = cells;
  out.probes = probes;
  out.values = detail::probe_values(g, cells, steps, probes);
  return out;
}

struct ExitCompareRow {
  SpaceTimePoint probe;
  std::size_t cell = 0;
  double phi = 0;
  double chi = 0;
  double gap() const { return std::abs(phi - chi); }
};

struct ExitComparison {
  double radius = 0;
  double theta = 0;
  int grid_n = 0;
  std::vector<std::string> labels;
  std::vector<double> cell_sup;
  double sup = 0;
  SpaceTimePoint argmax;
  std::vector<ExitCompareRow> rows;
};

/// Boundary cells of K_R(0) induced by the continuum cells: lateral (y, s)
/// maps to (angle of y, s / ceil(R^2)), top (y, top) to y / R.
inline std::vector<BoundaryCell> lattice_cells(const ExitPartition& cells, double radius, int d = 2) {
  require(d == 2, "exit cells are two-dimensional");
  const double height = static_cast<double>(ceil_radius_sq(radius));
  const Site origin = Site::zero(2);
  std::vector<BoundaryCell> out;
  for (const auto& cell : cells) {
    out.push_back({cell.label, [cell, radius, height, origin](const SpaceTimePoint& p) {
                     const double x = static_cast<double>(p.site[0]), y = static_cast<double>(p.site[1]);
                     if (in_ball(p.site, origin, radius)) return cell.contains_top(x / radius, y / radius);
                     return cell.contains_lateral(std::atan2(y, x), static_cast<double>(p.time) / height);
                   }});
  }
  return out;
}

/// sup over K_{theta R} of |Phi_R - chi_R| per cell, with Phi exact.
inline ExitComparison exit_compare(const Environment& env, double radius, double theta, const ExitPartition& cells,
                                   const std::vector<double>& diffusivity, int grid_n = 64, int steps = 0) {
  require(env.dim() == 2, "exit comparison is two-dimensional");
  require(theta > 0 && theta < 1, "theta must lie in (0, 1)");
  require(radius >= 2, "exit comparison needs R >= 2");
  const Cylinder outer(SpaceTimePoint{Site::zero(2), 0}, radius);
  const auto dom = ParabolicDomain::cylinder(outer);
  const auto phi = exit_probability_fields(env, dom, lattice_cells(cells, radius));

  const Cylinder inner(SpaceTimePoint{Site::zero(2), 0}, theta * radius);
  std::vector<SpaceTimePoint> lattice_probes;
  for (const auto& x : inner.ball())
    for (std::int64_t t = 0; t < inner.height(); ++t) lattice_probes.push_back({x, t});
  std::sort(lattice_probes.begin(), lattice_probes.end());
  std::vector<ContinuumPoint> probes;
  const double rsq = radius_sq(radius);
  for (const auto& p : lattice_probes)
    probes.push_back({static_cast<double>(p.site[0]) / radius, static_cast<double>(p.site[1]) / radius,
                      std::min(1.0, static_cast<double>(p.time) / rsq)});
  const auto chi = bm_exit_probability(diffusivity, cells, grid_n, probes, steps);

  ExitComparison out;
  out.radius = radius;
  out.theta = theta;
  out.grid_n = grid_n;
  out.cell_sup.assign(cells.size(), 0.0);
  out.argmax = lattice_probes.front();
  for (const auto& c : cells) out.labels.push_back(c.label);
  for (std::size_t p = 0; p < lattice_probes.size(); ++p)
    for (std::size_t c = 0; c < cells.size(); ++c) {
      ExitCompareRow row{lattice_probes[p], c, phi[c](lattice_probes[p]), chi.at(p, c)};
      out.cell_sup[c] = std::max(out.cell_sup[c], row.gap());
      if (row.gap() > out.sup) {
        out.sup = row.gap();
        out.argmax = row.probe;
      }
      out.rows.push_back(row);
    }
  return out;
}

inline void write_exit_compare_csv(std::ostream& os, const ExitComparison& cmp) {
  os << "x1,x2,t,cell,phi,chi,abs_diff\n";
  for (const auto& r : cmp.rows)
    os << r.probe.site[0] << ',' << r.probe.site[1] << ',' << r.probe.time << ',' << cmp.labels[r.cell] << ','
       << format_value(r.phi) << ',' << format_value(r.chi) << ',' << format_value(r.gap()) << '\n';
}

inline void write_bm_exit_csv(std::ostream& os, const BmExitField& f) {
  os << "x,y,t,cell,chi\n";
  for (std::size_t p = 0; p < f.probes.size(); ++p)
    for (std::size_t c = 0; c < f.cells.size(); ++c)
      os << format_value(f.probes[p].x) << ',' << format_value(f.probes[p].y) << ',' << format_value(f.probes[p].t)
         << ',' << f.cells[c].label << ',' << format_value(f.at(p, c)) << '\n';
}

// ---------------------------------------------------------------------------
// Harnack constant of the continuum operator.

namespace detail {

struct HarnackWindows {
  std::vector<ContinuumPoint> probes;
  std::vector<bool> late;
};

/// Fixed probe sets on the closures of the two windows, scaled to the unit
/// cylinder: the ball of radius 1/a over times [2/a^2, 3/a^2] and [0, 1/a^2].
inline HarnackWindows harnack_windows(double a, int rings = 8, int angles = 64, int times = 16) {
  HarnackWindows w;
  const double inner = 1.0 / a, pi = std::numbers::pi;
  const double late_lo = 2.0 / (a * a), late_hi = 3.0 / (a * a), early_hi = 1.0 / (a * a);
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 0; i <= times; ++i) {
      const double t = pass == 0 ? late_lo + (late_hi - late_lo) * i / times : early_hi * i / times;
      w.probes.push_back({0, 0, t});
      w.late.push_back(pass == 0);
      for (int r = 1; r <= rings; ++r)
        for (int k = 0; k < angles; ++k) {
          const double rad = inner * r / rings, th = 2 * pi * k / angles;
          w.probes.push_back({rad * std::cos(th), rad * std::sin(th), t});
          w.late.push_back(pass == 0);
        }
    }
  return w;
}

}  // namespace detail

struct HarnackEstimate {
  double a = 0;
  int grid_n = 0;
  int steps = 0;
  std::vector<int> mesh_cells;     // cells searched at each level
  std::vector<double> level_ratio;  // max ratio at each level
  double estimate = 0;              // finest level
  double refinement_delta = 0;      // finest minus the previous level
  std::string argmax_cell;
};

/// Lower-bound estimate of H_a: the largest sup/inf ratio over indicator data
/// on nested boundary meshes, sup over B_R x (2R^2, 3R^2), inf over
/// B_R x (0, R^2), for solutions in K_{aR}. Level m uses 8 * 2^m sectors,
/// 4 * 2^m time cells and 2^m top rings; coarser indicators are sums of finer
/// ones, so the level ratios never decrease.
inline HarnackEstimate bm_harnack_constant(const std::vector<double>& diffusivity, double a, int grid_n,
                                           int levels = 2, int steps = 0) {
  require(a > std::sqrt(3.0) && a <= 2.0, "a must lie in (sqrt 3, 2]");
  require(grid_n >= 32, "grid size must be at least 32");
  require(levels >= 1 && levels <= 4, "mesh levels must lie in [1, 4]");
  if (steps <= 0) steps = default_time_steps(grid_n);
  const detail::DiskGrid g(grid_n, diffusivity);
  const int fine = 1 << (levels - 1);
  const int sectors = 8 * fine, times = 4 * fine, rings = fine;
  const ExitPartition mesh = boundary_mesh(sectors, times, rings);
  const int nc = static_cast<int>(mesh.size());

  // fine cell -> coarse cell id per level
  std::vector<std::vector<int>> group(levels, std::vector<int>(nc));
  std::vector<int> group_count(levels);
  for (int lv = 0; lv < levels; ++lv) {
    const int f = fine >> lv;  // fine cells per coarse cell along each direction
    const int cs = sectors / f, ct = times / f, cr = rings / f;
    for (int c = 0; c < nc; ++c) {
      if (c < sectors * times) {
        const int s = c / times, k = c % times;
        group[lv][c] = (s / f) * ct + k / f;
      } else {
        const int q = c - sectors * times;
        const int s = q / rings, r = q % rings;
        group[lv][c] = cs * ct + (s / f) * cr + r / f;
      }
    }
    group_count[lv] = cs * ct + cs * cr;
  }

  const auto windows = detail::harnack_windows(a);
  const auto values = detail::probe_values(g, mesh, steps, windows.probes);

  std::vector<std::vector<double>> sup(levels), inf(levels);
  for (int lv = 0; lv < levels; ++lv) {
    sup[lv].assign(group_count[lv], 0.0);
    inf[lv].assign(group_count[lv], std::numeric_limits<double>::infinity());
  }
  std::vector<double> sums;
  for (std::size_t p = 0; p < windows.probes.size(); ++p)
    for (int lv = 0; lv < levels; ++lv) {
      sums.assign(group_count[lv], 0.0);
      for (int c = 0; c < nc; ++c) sums[group[lv][c]] += values[p * nc + c];
      for (int q = 0; q < group_count[lv]; ++q) {
        if (windows.late[p])
          sup[lv][q] = std::max(sup[lv][q], sums[q]);
        else
          inf[lv][q] = std::min(inf[lv][q], sums[q]);
      }
    }

  HarnackEstimate out;
  out.a = a;
  out.grid_n = grid_n;
  out.steps = steps;
  // level 0 is the coarsest mesh
  for (int lv = 0; lv < levels; ++lv) {
    double best = 0;
    int arg = -1;
    for (int q = 0; q < group_count[lv]; ++q) {
      if (sup[lv][q] <= 0) continue;
      const double r = inf[lv][q] > 0 ? sup[lv][q] / inf[lv][q] : std::numeric_limits<double>::infinity();
      if (r > best) {
        best = r;
        arg = q;
      }
    }
    out.mesh_cells.push_back(group_count[lv]);
    out.level_ratio.push_back(best);
    if (lv == levels - 1 && arg >= 0) out.argmax_cell = mesh[arg].label;
  }
  out.estimate = out.level_ratio.back();
  const auto n = out.level_ratio.size();
  out.refinement_delta = n >= 2 ? out.level_ratio[n - 1] - out.level_ratio[n - 2] : 0.0;
  return out;
}

/// Ratio for constant boundary data (the solution is identically 1).
inline double constant_data_ratio(const std::vector<double>& diffusivity, double a, int grid_n, int steps = 0) {
  require(a > std::sqrt(3.0) && a <= 2.0, "a must lie in (sqrt 3, 2]");
  const detail::DiskGrid g(grid_n, diffusivity);
  if (steps <= 0) steps = default_time_steps(grid_n);
  const auto windows = detail::harnack_windows(a);
  const auto values = detail::probe_values(g, {whole_boundary_cell()}, steps, windows.probes);
  double sup = 0, inf = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (windows.late[p])
      sup = std::max(sup, values[p]);
    else
      inf = std::min(inf, values[p]);
  }
  return sup / inf;
}

inline nlohmann::json harnack_json(const HarnackEstimate& h) {
  return {{"a", h.a},
          {"grid_n", h.grid_n},
          {"steps", h.steps},
          {"mesh_cells", h.mesh_cells},
          {"level_ratio", h.level_ratio},
          {"estimate", h.estimate},
          {"refinement_delta", h.refinement_delta},
          {"argmax_cell", h.argmax_cell},
          {"kind", "lower-bound estimate"}};
}

}  // namespace rwre

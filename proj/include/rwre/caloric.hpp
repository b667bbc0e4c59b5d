#pragma once

// Discrete caloric functions: backward solves on parabolic domains, the
// generator, exact exit distributions, Harnack ratios, oscillation and the
// growth condition.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/environment.hpp"
#include "rwre/lattice.hpp"

namespace rwre {

/// Space-time domain S x {t0, ..., t0 + N - 1} with parabolic boundary
/// (dS x {t0, ..., t0 + N}) u (S x {t0 + N}); dS is the l-infinity boundary.
///
/// Closure sites are indexed densely: interior sites first (sorted), then
/// boundary sites (sorted). Boundary points are numbered by "slots": lateral
/// site j at offset tau has slot (j - |S|) (N + 1) + tau, and the top point of
/// interior site i has slot L (N + 1) + i, where L = |dS|.
class ParabolicDomain {
 public:
  ParabolicDomain(std::vector<Site> interior, std::int64_t t0, std::int64_t horizon, Site origin)
      : t0_(t0), horizon_(horizon), origin_(origin) {
    require(!interior.empty(), "parabolic domain needs a non-empty interior");
    require(horizon >= 0, "horizon must be non-negative");
    detail::sort_unique(interior);
    interior_count_ = static_cast<std::int64_t>(interior.size());
    sites_ = std::move(interior);
    const auto rim = discrete_boundary(sites_);
    sites_.insert(sites_.end(), rim.begin(), rim.end());
    d_ = sites_.front().dim();
    frame_ = Box::bounding(sites_);
    lookup_.assign(static_cast<std::size_t>(frame_.volume()), -1);
    for (std::size_t j = 0; j < sites_.size(); ++j) lookup_[frame_.linear_index(sites_[j])] = static_cast<std::int32_t>(j);
    neighbors_.resize(static_cast<std::size_t>(interior_count_ * 2 * d_));
    for (std::int64_t i = 0; i < interior_count_; ++i)
      for (int k = 0; k < 2 * d_; ++k) neighbors_[i * 2 * d_ + k] = index(sites_[i].step(k));
  }

  /// K_R(c): B_R x [ceil(R^2)].
  static ParabolicDomain cylinder(const Cylinder& c) {
    return ParabolicDomain(c.ball(), c.t0(), c.height(), c.center().site);
  }
  /// Q_R(c): O_R x [floor(R^2) - 1] with boundary at floor(R^2).
  static ParabolicDomain q_domain(const Cylinder& c) {
    return ParabolicDomain(interior_points(c.radius(), c.center().site), c.t0(), floor_radius_sq(c.radius()),
                           c.center().site);
  }

  int dim() const { return d_; }
  std::int64_t t0() const { return t0_; }
  std::int64_t horizon() const { return horizon_; }
  std::int64_t top() const { return t0_ + horizon_; }
  const Site& origin() const { return origin_; }
  std::int64_t interior_count() const { return interior_count_; }
  std::int64_t closure_count() const { return static_cast<std::int64_t>(sites_.size()); }
  std::int64_t lateral_count() const { return closure_count() - interior_count_; }
  const std::vector<Site>& closure_sites() const { return sites_; }
  const Site& site(std::int64_t j) const { return sites_[static_cast<std::size_t>(j)]; }
  /// Closure index of x, or -1.
  std::int32_t index(const Site& x) const {
    if (!frame_.contains(x)) return -1;
    return lookup_[frame_.linear_index(x)];
  }
  std::int32_t neighbor(std::int64_t i, int k) const { return neighbors_[i * 2 * d_ + k]; }

  bool in_interior(const SpaceTimePoint& p) const {
    const auto j = index(p.site);
    return j >= 0 && j < interior_count_ && p.time >= t0_ && p.time < top();
  }
  bool on_boundary(const SpaceTimePoint& p) const {
    const auto j = index(p.site);
    if (j < 0 || p.time < t0_ || p.time > top()) return false;
    return j >= interior_count_ || p.time == top();
  }
  bool in_closure(const SpaceTimePoint& p) const {
    const auto j = index(p.site);
    return j >= 0 && p.time >= t0_ && p.time <= top();
  }

  std::int64_t boundary_slot_count() const { return lateral_count() * (horizon_ + 1) + interior_count_; }
  std::int64_t lateral_slot(std::int64_t j, std::int64_t tau) const {
    return (j - interior_count_) * (horizon_ + 1) + tau;
  }
  std::int64_t top_slot(std::int64_t i) const { return lateral_count() * (horizon_ + 1) + i; }
  std::int64_t slot_of(const SpaceTimePoint& p) const {
    const auto j = index(p.site);
    require(on_boundary(p), "point " + p.str() + " is not on the parabolic boundary");
    return j >= interior_count_ ? lateral_slot(j, p.time - t0_) : top_slot(j);
  }
  SpaceTimePoint slot_point(std::int64_t slot) const {
    const std::int64_t lateral_total = lateral_count() * (horizon_ + 1);
    if (slot < lateral_total) return {site(interior_count_ + slot / (horizon_ + 1)), t0_ + slot % (horizon_ + 1)};
    return {site(slot - lateral_total), top()};
  }

  /// Boundary data evaluated at every slot.
  template <class G>
  std::vector<double> boundary_values(G&& g) const {
    std::vector<double> out(static_cast<std::size_t>(boundary_slot_count()));
    for (std::int64_t s = 0; s < boundary_slot_count(); ++s) out[s] = g(slot_point(s));
    return out;
  }

 private:
  std::vector<Site> sites_;
  std::int64_t interior_count_ = 0;
  std::int64_t t0_;
  std::int64_t horizon_;
  Site origin_;
  int d_ = 0;
  Box frame_;
  std::vector<std::int32_t> lookup_;
  std::vector<std::int32_t> neighbors_;
};

/// Kernels of the interior sites, 2d entries each.
inline std::vector<double> domain_kernels(const Environment& env, const ParabolicDomain& dom) {
  require(env.dim() == dom.dim(), "environment and domain dimensions differ");
  const int d = dom.dim();
  std::vector<double> out(static_cast<std::size_t>(dom.interior_count() * 2 * d));
  for (std::int64_t i = 0; i < dom.interior_count(); ++i) {
    const Site& x = dom.site(i);
    if (!env.contains(x)) throw BoxExhausted("domain site " + x.str() + " has no kernel in the environment box");
    const SiteKernel k = env.kernel(x);
    std::copy(k.probs().begin(), k.probs().end(), out.begin() + i * 2 * d);
  }
  return out;
}

/// Backward recursion keeping two time slices. visit(t, slice) is called for
/// t = top down to t0 with the values over all closure sites at time t.
template <class Visit>
void sweep_backward(const Environment& env, const ParabolicDomain& dom, std::span<const double> boundary,
                    Visit&& visit) {
  require(static_cast<std::int64_t>(boundary.size()) == dom.boundary_slot_count(),
          "boundary data must cover every boundary slot");
  const int d = dom.dim();
  const int dirs = 2 * d;
  const auto kern = domain_kernels(env, dom);
  const std::int64_t n_int = dom.interior_count();
  const std::int64_t n_all = dom.closure_count();
  const std::int64_t h = dom.horizon();
  std::vector<double> next(static_cast<std::size_t>(n_all)), cur(static_cast<std::size_t>(n_all));
  for (std::int64_t i = 0; i < n_int; ++i) next[i] = boundary[dom.top_slot(i)];
  for (std::int64_t j = n_int; j < n_all; ++j) next[j] = boundary[dom.lateral_slot(j, h)];
  visit(dom.top(), std::span<const double>(next));
  for (std::int64_t tau = h - 1; tau >= 0; --tau) {
    for (std::int64_t j = n_int; j < n_all; ++j) cur[j] = boundary[dom.lateral_slot(j, tau)];
    for (std::int64_t i = 0; i < n_int; ++i) {
      const double* p = kern.data() + i * dirs;
      double acc = 0;
      for (int k = 0; k < dirs; ++k)
        if (p[k] != 0) acc += p[k] * next[dom.neighbor(i, k)];
      cur[i] = acc;
    }
    visit(dom.t0() + tau, std::span<const double>(cur));
    std::swap(cur, next);
  }
}

/// A field on the closure of a parabolic domain.
class CaloricField {
 public:
  CaloricField(std::shared_ptr<const ParabolicDomain> dom, std::string env_id)
      : dom_(std::move(dom)), env_id_(std::move(env_id)) {
    values_.assign(static_cast<std::size_t>(dom_->closure_count() * (dom_->horizon() + 1)), 0.0);
  }

  const ParabolicDomain& domain() const { return *dom_; }
  std::shared_ptr<const ParabolicDomain> domain_ptr() const { return dom_; }
  const std::string& env_id() const { return env_id_; }

  bool has(const SpaceTimePoint& p) const { return dom_->in_closure(p); }
  double operator()(const SpaceTimePoint& p) const {
    const auto j = dom_->index(p.site);
    if (j < 0 || p.time < dom_->t0() || p.time > dom_->top())
      throw MissingValue("field is not defined at " + p.str());
    return values_[(p.time - dom_->t0()) * dom_->closure_count() + j];
  }
  double at(std::int64_t j, std::int64_t t) const { return values_[(t - dom_->t0()) * dom_->closure_count() + j]; }
  double& at(std::int64_t j, std::int64_t t) { return values_[(t - dom_->t0()) * dom_->closure_count() + j]; }

  /// fn(point, value) over the closure, time-major then by closure index.
  template <class Fn>
  void for_each(Fn&& fn) const {
    const auto n = dom_->closure_count();
    for (std::int64_t t = dom_->t0(); t <= dom_->top(); ++t)
      for (std::int64_t j = 0; j < n; ++j) {
        const SpaceTimePoint p{dom_->site(j), t};
        if (dom_->in_interior(p) || dom_->on_boundary(p)) fn(p, at(j, t));
      }
  }

  /// Points of the closure in lexicographic order with their values.
  std::vector<std::pair<SpaceTimePoint, double>> points() const {
    std::vector<std::pair<SpaceTimePoint, double>> out;
    for_each([&](const SpaceTimePoint& p, double v) { out.emplace_back(p, v); });
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

 private:
  std::shared_ptr<const ParabolicDomain> dom_;
  std::string env_id_;
  std::vector<double> values_;
};

inline constexpr std::int64_t kMaxFieldValues = 60'000'000;

inline CaloricField solve_backward(const Environment& env, std::shared_ptr<const ParabolicDomain> dom,
                                   std::span<const double> boundary) {
  require(dom->closure_count() * (dom->horizon() + 1) <= kMaxFieldValues,
          "domain too large for a stored field; use sweep_backward");
  CaloricField u(dom, env.law_id() + "#" + std::to_string(env.seed()));
  sweep_backward(env, *dom, boundary, [&](std::int64_t t, std::span<const double> slice) {
    for (std::int64_t j = 0; j < dom->closure_count(); ++j) u.at(j, t) = slice[j];
  });
  return u;
}

/// Solve with boundary data given as a function of the space-time point.
template <class G>
CaloricField solve_backward(const Environment& env, const ParabolicDomain& dom, G&& g) {
  auto shared = std::make_shared<const ParabolicDomain>(dom);
  const auto bv = shared->boundary_values(std::forward<G>(g));
  return solve_backward(env, shared, bv);
}

/// (L_omega u)(y, s) = sum_i omega(y, e_i) u(y + e_i, s + 1) - u(y, s).
template <class U>
double apply_generator(const Environment& env, U&& u, const SpaceTimePoint& p) {
  const SiteKernel k = env.kernel(p.site);
  double acc = 0;
  for (int i = 0; i < k.size(); ++i)
    if (k[i] != 0) acc += k[i] * u(SpaceTimePoint{p.site.step(i), p.time + 1});
  return acc - u(p);
}

/// Largest relative violation of the caloric identity over the interior.
inline double max_caloric_residual(const Environment& env, const CaloricField& u) {
  const auto& dom = u.domain();
  double worst = 0;
  for (std::int64_t t = dom.t0(); t < dom.top(); ++t)
    for (std::int64_t i = 0; i < dom.interior_count(); ++i) {
      const SpaceTimePoint p{dom.site(i), t};
      const double r = apply_generator(env, u, p);
      worst = std::max(worst, std::abs(r) / std::max(1.0, std::abs(u(p))));
    }
  return worst;
}

/// A labeled subset of the parabolic boundary.
struct BoundaryCell {
  std::string label;
  std::function<bool(const SpaceTimePoint&)> contains;
};

/// Cell index of every boundary slot; throws when the cells do not cover the
/// boundary disjointly.
inline std::vector<int> classify_boundary(const ParabolicDomain& dom, const std::vector<BoundaryCell>& cells) {
  require(!cells.empty(), "partition needs at least one cell");
  std::vector<int> cell_of(static_cast<std::size_t>(dom.boundary_slot_count()), -1);
  for (std::int64_t s = 0; s < dom.boundary_slot_count(); ++s) {
    const SpaceTimePoint p = dom.slot_point(s);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!cells[c].contains(p)) continue;
      if (cell_of[s] >= 0)
        throw InvalidArgument("partition cells '" + cells[cell_of[s]].label + "' and '" + cells[c].label +
                              "' overlap at " + p.str());
      cell_of[s] = static_cast<int>(c);
    }
    if (cell_of[s] < 0) throw InvalidArgument("partition does not cover boundary point " + p.str());
  }
  return cell_of;
}

struct ExitMeasure {
  std::vector<std::string> labels;
  std::vector<double> masses;

  double total() const {
    double s = 0;
    for (double m : masses) s += m;
    return s;
  }
};

/// Exit probability field of every cell (one backward solve per cell).
inline std::vector<CaloricField> exit_probability_fields(const Environment& env, const ParabolicDomain& dom,
                                                         const std::vector<BoundaryCell>& cells) {
  auto shared = std::make_shared<const ParabolicDomain>(dom);
  const auto cell_of = classify_boundary(*shared, cells);
  std::vector<CaloricField> out;
  std::vector<double> indicator(cell_of.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < cell_of.size(); ++s) indicator[s] = cell_of[s] == static_cast<int>(c) ? 1.0 : 0.0;
    out.push_back(solve_backward(env, shared, indicator));
  }
  return out;
}

/// Exact law of the exit cell from K_R(c) for the walk started at `start`.
inline ExitMeasure exit_distribution_exact(const Environment& env, const SpaceTimePoint& start, const Cylinder& c,
                                           const std::vector<BoundaryCell>& cells) {
  const auto dom = ParabolicDomain::cylinder(c);
  require(dom.in_closure(start), "start must lie in the closed cylinder");
  const auto fields = exit_probability_fields(env, dom, cells);
  ExitMeasure m;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    m.labels.push_back(cells[i].label);
    m.masses.push_back(fields[i](start));
  }
  return m;
}

/// Exact distribution of the exit point itself, by forward propagation of
/// mass. Returned sorted by point; zero-mass points are omitted.
inline std::vector<std::pair<SpaceTimePoint, double>> exit_point_distribution(const Environment& env,
                                                                             const ParabolicDomain& dom,
                                                                             const SpaceTimePoint& start) {
  require(dom.in_closure(start), "start must lie in the closed domain");
  std::vector<double> exit_mass(static_cast<std::size_t>(dom.boundary_slot_count()), 0.0);
  if (dom.on_boundary(start)) {
    return {{start, 1.0}};
  }
  const int d = dom.dim();
  const auto kern = domain_kernels(env, dom);
  const std::int64_t n_int = dom.interior_count();
  std::vector<double> mass(static_cast<std::size_t>(n_int), 0.0), next(static_cast<std::size_t>(n_int));
  mass[dom.index(start.site)] = 1.0;
  for (std::int64_t t = start.time; t < dom.top(); ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    const std::int64_t tau_next = t + 1 - dom.t0();
    for (std::int64_t i = 0; i < n_int; ++i) {
      if (mass[i] == 0) continue;
      for (int k = 0; k < 2 * d; ++k) {
        const double p = kern[i * 2 * d + k];
        if (p == 0) continue;
        const auto j = dom.neighbor(i, k);
        if (j >= n_int) {
          exit_mass[dom.lateral_slot(j, tau_next)] += mass[i] * p;
        } else {
          next[j] += mass[i] * p;
        }
      }
    }
    std::swap(mass, next);
  }
  for (std::int64_t i = 0; i < n_int; ++i) exit_mass[dom.top_slot(i)] += mass[i];
  std::vector<std::pair<SpaceTimePoint, double>> out;
  for (std::int64_t s = 0; s < dom.boundary_slot_count(); ++s)
    if (exit_mass[s] > 0) out.emplace_back(dom.slot_point(s), exit_mass[s]);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

struct HarnackRatio {
  double max_upper = 0;  // max over the parity slice of K^+_R
  double min_lower = 0;  // min over the parity slice of K^-_R
  double ratio = 0;      // +inf when min_lower == 0 < max_upper
  SpaceTimePoint argmax, argmin;
};

/// Harnack ratio of a field on the closed cylinder of radius 2R about the
/// domain origin. K^+_R = B_R x (2R^2, 3R^2), K^-_R = B_R x (0, R^2), relative
/// to the domain's initial time.
inline HarnackRatio harnack_ratio(const CaloricField& u, double radius, Parity parity) {
  const auto& dom = u.domain();
  const Cylinder inner({dom.origin(), dom.t0()}, radius);
  HarnackRatio h;
  h.max_upper = -std::numeric_limits<double>::infinity();
  h.min_lower = std::numeric_limits<double>::infinity();
  bool any_upper = false, any_lower = false;
  const auto ball = inner.ball();
  const auto t_end = dom.t0() + static_cast<std::int64_t>(std::ceil(3 * radius_sq(radius)));
  for (const Site& x : ball) {
    for (std::int64_t t = dom.t0() + 1; t <= t_end; ++t) {
      const SpaceTimePoint p{x, t};
      if (parity_of(p) != parity) continue;
      if (inner.in_upper_window(t)) {
        const double v = u(p);
        any_upper = true;
        if (v > h.max_upper) {
          h.max_upper = v;
          h.argmax = p;
        }
      }
      if (inner.in_lower_window(t)) {
        const double v = u(p);
        any_lower = true;
        if (v < h.min_lower) {
          h.min_lower = v;
          h.argmin = p;
        }
      }
    }
  }
  if (!any_upper) throw InvalidArgument(std::string("the ") + parity_name(parity) + " slice of K+_R is empty");
  if (!any_lower) throw InvalidArgument(std::string("the ") + parity_name(parity) + " slice of K-_R is empty");
  if (h.min_lower == 0) {
    h.ratio = h.max_upper > 0 ? std::numeric_limits<double>::infinity() : 1.0;
  } else {
    h.ratio = h.max_upper / h.min_lower;
  }
  return h;
}

/// max_G u - min_G u.
template <class U>
double oscillation(U&& u, const std::vector<SpaceTimePoint>& g) {
  require(!g.empty(), "oscillation over an empty set");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : g) {
    const double v = u(p);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

/// Points of the closed cylinder of radius `radius` about the domain origin.
inline std::vector<SpaceTimePoint> closed_cylinder_points(const ParabolicDomain& dom, double radius) {
  const auto s = cylinder_sets(Cylinder({dom.origin(), dom.t0()}, radius));
  std::vector<SpaceTimePoint> all = s.interior;
  all.insert(all.end(), s.parabolic_boundary.begin(), s.parabolic_boundary.end());
  std::sort(all.begin(), all.end());
  return all;
}

/// max over the parity slice of the closed cylinder of radius 2R versus
/// w^(R^(2 - xi)) times the min; non-strict.
inline bool growth_condition_check(const CaloricField& u, double radius, double w, double xi, Parity parity) {
  require(w > 1, "growth base must exceed 1");
  require(xi > 0 && xi < 0.2, "xi must lie in (0, 1/5)");
  const auto pts = parity_filter(closed_cylinder_points(u.domain(), 2 * radius), parity);
  require(!pts.empty(), "empty parity slice of the closed cylinder");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : pts) {
    const double v = u(p);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == 0) return hi <= 0;
  return hi <= std::pow(w, std::pow(radius, 2 - xi)) * lo;
}

// ---- field files -----------------------------------------------------------

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header x1,...,xd,t,value; rows in lexicographic point order.
inline void write_field_csv(std::ostream& os, const CaloricField& u) {
  const int d = u.domain().dim();
  for (int i = 0; i < d; ++i) os << "x" << (i + 1) << ",";
  os << "t,value\n";
  for (const auto& [p, v] : u.points()) {
    for (int i = 0; i < d; ++i) os << p.site[i] << ",";
    os << p.time << "," << format_value(v) << "\n";
  }
}

/// Point values keyed by space-time point; used for boundary-data import.
using PointTable = std::map<SpaceTimePoint, double>;

inline PointTable read_point_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty CSV");
  int cols = 1;
  for (char ch : line) cols += ch == ',';
  const int d = cols - 2;
  if (d < 1 || d > kMaxDim || line.rfind("x1,", 0) != 0) throw FormatError("CSV header must be x1,...,xd,t,value");
  PointTable out;
  std::int64_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != cols) throw FormatError("CSV row " + std::to_string(row) + " has the wrong width");
    try {
      Site x(d);
      for (int i = 0; i < d; ++i) x[i] = std::stoll(cells[i]);
      out[{x, std::stoll(cells[d])}] = std::stod(cells[d + 1]);
    } catch (const std::logic_error&) {
      throw FormatError("CSV row " + std::to_string(row) + " is not numeric");
    }
  }
  return out;
}

/// Boundary data backed by a table; missing points raise MissingValue.
inline std::function<double(const SpaceTimePoint&)> table_boundary(PointTable table) {
  return [t = std::move(table)](const SpaceTimePoint& p) {
    const auto it = t.find(p);
    if (it == t.end()) throw MissingValue("boundary data has no value at " + p.str());
    return it->second;
  };
}

/// Binary twin of the CSV: "RWCF", u16 version, u8 d, u64 count, then per
/// point d + 1 little-endian i64 and one f64.
inline void write_field_binary(std::ostream& os, const CaloricField& u) {
  const auto pts = u.points();
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) os.put(static_cast<char>(v >> (8 * i)));
  };
  os.write("RWCF", 4);
  put(1, 2);
  put(static_cast<std::uint64_t>(u.domain().dim()), 1);
  put(pts.size(), 8);
  for (const auto& [p, v] : pts) {
    for (int i = 0; i < p.site.dim(); ++i) put(static_cast<std::uint64_t>(p.site[i]), 8);
    put(static_cast<std::uint64_t>(p.time), 8);
    put(std::bit_cast<std::uint64_t>(v), 8);
  }
}

inline PointTable read_field_binary(std::istream& is) {
  auto get = [&](int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const int c = is.get();
      if (c == EOF) throw FormatError("field file truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  };
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "RWCF") throw FormatError("bad magic: not a field file");
  if (get(2) != 1) throw FormatError("unsupported field file version");
  const int d = static_cast<int>(get(1));
  if (d < 1 || d > kMaxDim) throw FormatError("field file dimension out of range");
  const auto n = get(8);
  PointTable out;
  for (std::uint64_t r = 0; r < n; ++r) {
    Site x(d);
    for (int i = 0; i < d; ++i) x[i] = static_cast<std::int64_t>(get(8));
    const auto t = static_cast<std::int64_t>(get(8));
    out[{x, t}] = std::bit_cast<double>(get(8));
  }
  return out;
}

}  // namespace rwre

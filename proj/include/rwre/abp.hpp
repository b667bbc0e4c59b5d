#pragma once

// Geometry of the parabolic maximum principle on Q^k_R: slope polytopes
// I_u(y, s), the upper contact set, the cone volume that bounds sup u, and
// exact checks of the two inequalities that connect them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "rwre/caloric.hpp"
#include "rwre/environment.hpp"
#include "rwre/lattice.hpp"
#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"

namespace rwre {

inline constexpr double kAbpSlack = 1e-9;

/// Q^k_R as a dense product: every site of O_R and of its k-thick boundary,
/// at times 0 .. layers + k. Interior points are O_R x [0, layers).
class AbpDomain {
 public:
  AbpDomain(std::vector<Site> inner, std::vector<Site> outer, std::int64_t layers, int k, double radius)
      : inner_count_(static_cast<std::int64_t>(inner.size())), layers_(layers), k_(k), radius_(radius) {
    require(!inner.empty(), "ABP domain needs interior sites");
    require(layers >= 1 && k >= 1, "ABP domain needs at least one layer and k >= 1");
    detail::sort_unique(inner);
    detail::sort_unique(outer);
    sites_ = std::move(inner);
    sites_.insert(sites_.end(), outer.begin(), outer.end());
    for (std::size_t j = 0; j < sites_.size(); ++j) {
      require(sites_[j].dim() == sites_.front().dim(), "ABP domain sites must share a dimension");
      const bool fresh = lookup_.emplace(sites_[j], static_cast<std::int64_t>(j)).second;
      require(fresh, "interior and boundary sites overlap");
    }
  }

  /// O_R x [0, floor(R^2)) with the k-thick extension.
  static AbpDomain q(double radius, int k, int d) {
    require(k >= 1 && static_cast<double>(k) < radius, "ABP domain needs 0 < k < R");
    auto inner = interior_points(radius, d);
    auto outer = thick_boundary(inner, k);
    return AbpDomain(std::move(inner), std::move(outer), floor_radius_sq(radius), k, radius);
  }

  int dim() const { return sites_.front().dim(); }
  double radius() const { return radius_; }
  int k() const { return k_; }
  std::int64_t layers() const { return layers_; }
  std::int64_t times() const { return layers_ + k_ + 1; }
  std::int64_t inner_count() const { return inner_count_; }
  std::int64_t site_count() const { return static_cast<std::int64_t>(sites_.size()); }
  std::int64_t value_count() const { return site_count() * times(); }
  const std::vector<Site>& sites() const { return sites_; }
  const Site& site(std::int64_t j) const { return sites_[static_cast<std::size_t>(j)]; }

  std::optional<std::int64_t> index(const Site& x) const {
    const auto it = lookup_.find(x);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }
  bool interior(std::int64_t j, std::int64_t t) const { return j < inner_count_ && t >= 0 && t < layers_; }
  std::int64_t slot(std::int64_t j, std::int64_t t) const { return j * times() + t; }

 private:
  std::vector<Site> sites_;
  std::unordered_map<Site, std::int64_t> lookup_;
  std::int64_t inner_count_;
  std::int64_t layers_;
  int k_;
  double radius_;
};

struct AbpField {
  std::shared_ptr<const AbpDomain> domain;
  std::vector<double> values;  // slot(j, t)

  double at(std::int64_t j, std::int64_t t) const { return values[static_cast<std::size_t>(domain->slot(j, t))]; }
  double& at(std::int64_t j, std::int64_t t) { return values[static_cast<std::size_t>(domain->slot(j, t))]; }
  double operator()(const SpaceTimePoint& p) const {
    const auto j = domain->index(p.site);
    if (!j || p.time < 0 || p.time >= domain->times()) throw MissingValue("no value at " + p.str());
    return at(*j, p.time);
  }
};

template <class Fn>
AbpField make_abp_field(std::shared_ptr<const AbpDomain> dom, Fn&& fn) {
  AbpField u{dom, std::vector<double>(static_cast<std::size_t>(dom->value_count()))};
  for (std::int64_t j = 0; j < dom->site_count(); ++j)
    for (std::int64_t t = 0; t < dom->times(); ++t) u.at(j, t) = fn(SpaceTimePoint{dom->site(j), t});
  return u;
}

/// Zero on the extended boundary; inside, a parabolic bump of random height
/// and centre plus uniform noise, so the field may dip below zero.
inline AbpField random_admissible_field(std::shared_ptr<const AbpDomain> dom, std::uint64_t seed) {
  CounterRng rng(seed);
  const double amplitude = 0.5 + 1.5 * rng.uniform();
  const double noise = 0.5 * amplitude * rng.uniform();
  const int d = dom->dim();
  std::array<double, kMaxDim> centre{};
  for (int i = 0; i < d; ++i) centre[i] = (rng.uniform() - 0.5) * dom->radius() * 0.5;
  const double r2 = dom->radius() * dom->radius();
  const auto layers = static_cast<double>(dom->layers());
  AbpField u{dom, std::vector<double>(static_cast<std::size_t>(dom->value_count()), 0.0)};
  for (std::int64_t j = 0; j < dom->inner_count(); ++j)
    for (std::int64_t t = 0; t < dom->layers(); ++t) {
      double q = 0;
      for (int i = 0; i < d; ++i) q += (double(dom->site(j)[i]) - centre[i]) * (double(dom->site(j)[i]) - centre[i]);
      const double bump = std::max(0.0, 1 - q / r2) * (1 - double(t) / layers);
      u.at(j, t) = amplitude * bump + noise * (rng.uniform() - 0.5);
    }
  return u;
}

// ---- slope polytopes ---------------------------------------------------------

/// {p : <normal, p> <= offset}
struct HalfSpace {
  std::array<double, kMaxDim> normal{};
  double offset = 0;
};

namespace detail {

struct Line2 {
  double a0, a1, b;
};

/// Seidel's randomized incremental LP in the plane: minimizes <c, p> subject
/// to a.p <= b + eps and |p_i| <= box. Constraints are processed in a fixed
/// pseudo-random order, so the result is deterministic.
inline std::optional<std::array<double, 2>> seidel_lp(std::vector<Line2> cons, std::array<double, 2> c, double box,
                                                      double eps, std::uint64_t seed) {
  CounterRng rng(seed);
  for (std::size_t i = cons.size(); i > 1; --i) std::swap(cons[i - 1], cons[rng.next_u64() % i]);
  std::vector<Line2> all = {{1, 0, box}, {-1, 0, box}, {0, 1, box}, {0, -1, box}};
  all.insert(all.end(), cons.begin(), cons.end());
  std::array<double, 2> p = {c[0] > 0 ? -box : box, c[1] > 0 ? -box : box};
  for (std::size_t i = 4; i < all.size(); ++i) {
    const Line2& h = all[i];
    if (h.a0 * p[0] + h.a1 * p[1] <= h.b + eps) continue;
    // new optimum lies on the line a.p = b
    const double n2 = h.a0 * h.a0 + h.a1 * h.a1;
    const double nn = std::sqrt(n2);
    const std::array<double, 2> x0 = {h.a0 * h.b / n2, h.a1 * h.b / n2};
    const std::array<double, 2> dir = {-h.a1 / nn, h.a0 / nn};
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < i; ++j) {
      const Line2& g = all[j];
      const double den = g.a0 * dir[0] + g.a1 * dir[1];
      const double num = g.b + eps - (g.a0 * x0[0] + g.a1 * x0[1]);
      if (std::abs(den) < 1e-14) {
        if (num < 0) return std::nullopt;
      } else if (den > 0) {
        hi = std::min(hi, num / den);
      } else {
        lo = std::max(lo, num / den);
      }
    }
    if (lo > hi) return std::nullopt;
    const double slope = c[0] * dir[0] + c[1] * dir[1];
    const double t = slope > 0 ? lo : (slope < 0 ? hi : (std::isfinite(lo) ? lo : hi));
    p = {x0[0] + t * dir[0], x0[1] + t * dir[1]};
  }
  return p;
}

/// A nonempty intersection is bounded iff the constraint normals leave no
/// angular gap of pi or more.
inline bool normals_surround(const std::vector<Line2>& cons) {
  if (cons.size() < 3) return false;
  std::vector<double> ang;
  ang.reserve(cons.size());
  for (const auto& h : cons) ang.push_back(std::atan2(h.a1, h.a0));
  std::sort(ang.begin(), ang.end());
  double gap = ang.front() + 2 * std::numbers::pi - ang.back();
  for (std::size_t i = 1; i < ang.size(); ++i) gap = std::max(gap, ang[i] - ang[i - 1]);
  return gap < std::numbers::pi - 1e-12;
}

using Polygon = std::vector<std::array<double, 2>>;

/// Sutherland-Hodgman clip of a convex polygon by a.p <= b.
inline Polygon clip(const Polygon& poly, const Line2& h) {
  Polygon out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    const double fp = h.a0 * p[0] + h.a1 * p[1] - h.b;
    const double fq = h.a0 * q[0] + h.a1 * q[1] - h.b;
    if (fp <= 0) out.push_back(p);
    if ((fp < 0 && fq > 0) || (fp > 0 && fq < 0)) {
      const double s = fp / (fp - fq);
      out.push_back({p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])});
    }
  }
  return out;
}

inline double shoelace(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return std::abs(a) / 2;
}

}  // namespace detail

struct SlopePolytope {
  bool feasible = false;
  bool bounded = false;
  double volume = 0;  // +inf when unbounded, 0 when empty or degenerate
  std::array<double, kMaxDim> witness{};
};

/// Feasibility, boundedness and area of {p : <n_i, p> <= b_i} in the plane.
/// Feasibility allows kAbpSlack of violation, so degenerate polytopes count as
/// feasible with area 0.
inline SlopePolytope slope_polytope_2d(const std::vector<HalfSpace>& hs, std::uint64_t seed = 1) {
  SlopePolytope out;
  std::vector<detail::Line2> cons;
  cons.reserve(hs.size());
  for (const auto& h : hs) {
    const double nn = std::hypot(h.normal[0], h.normal[1]);
    if (nn == 0) {
      if (h.offset < -kAbpSlack) return out;
      continue;
    }
    cons.push_back({h.normal[0] / nn, h.normal[1] / nn, h.offset / nn});
  }
  constexpr double box = 1e6;
  const auto lo0 = detail::seidel_lp(cons, {1, 0}, box, kAbpSlack, seed);
  if (!lo0) return out;
  out.feasible = true;
  out.witness[0] = (*lo0)[0];
  out.witness[1] = (*lo0)[1];
  out.bounded = detail::normals_surround(cons);
  if (!out.bounded) {
    out.volume = std::numeric_limits<double>::infinity();
    return out;
  }
  const auto hi0 = detail::seidel_lp(cons, {-1, 0}, box, kAbpSlack, seed);
  const auto lo1 = detail::seidel_lp(cons, {0, 1}, box, kAbpSlack, seed);
  const auto hi1 = detail::seidel_lp(cons, {0, -1}, box, kAbpSlack, seed);
  const double x0 = (*lo0)[0] - 1, x1 = (*hi0)[0] + 1, y0 = (*lo1)[1] - 1, y1 = (*hi1)[1] + 1;
  detail::Polygon poly = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  for (const auto& h : cons) {
    poly = detail::clip(poly, h);
    if (poly.size() < 3) return out;
  }
  out.volume = detail::shoelace(poly);
  return out;
}

/// Same for d = 1: an interval.
inline SlopePolytope slope_polytope_1d(const std::vector<HalfSpace>& hs) {
  SlopePolytope out;
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (const auto& h : hs) {
    const double a = h.normal[0];
    if (a == 0) {
      if (h.offset < -kAbpSlack) return out;
    } else if (a > 0) {
      hi = std::min(hi, h.offset / a);
    } else {
      lo = std::max(lo, h.offset / a);
    }
  }
  if (lo > hi + kAbpSlack) return out;
  out.feasible = true;
  out.bounded = std::isfinite(lo) && std::isfinite(hi);
  out.volume = out.bounded ? std::max(0.0, hi - lo) : std::numeric_limits<double>::infinity();
  out.witness[0] = std::isfinite(lo) ? std::min(lo, hi) : (std::isfinite(hi) ? hi : 0.0);
  return out;
}

inline SlopePolytope slope_polytope(const std::vector<HalfSpace>& hs, int d, std::uint64_t seed = 1) {
  if (d == 1) return slope_polytope_1d(hs);
  require(d == 2, "slope polytopes are supported in d = 1 and d = 2");
  return slope_polytope_2d(hs, seed);
}

struct ContactPoint {
  SpaceTimePoint point;
  bool feasible = false;
  bool bounded = false;
  double volume = 0;
  std::array<double, kMaxDim> witness{};
  std::vector<HalfSpace> halfspaces;  // kept for feasible points only
};

inline double slope_polytope_volume(const ContactPoint& cp) {
  return slope_polytope(cp.halfspaces, cp.point.site.dim()).volume;
}

/// Constraints of I_u(y, s): one per site x, against the largest later value
/// max_{t > s} u(x, t).
inline std::vector<HalfSpace> contact_constraints(const AbpField& u, std::int64_t j, std::int64_t s,
                                                  const std::vector<double>& later_max) {
  const AbpDomain& dom = *u.domain;
  const int d = dom.dim();
  const Site& y = dom.site(j);
  const double uy = u.at(j, s);
  std::vector<HalfSpace> hs;
  hs.reserve(static_cast<std::size_t>(dom.site_count()));
  for (std::int64_t m = 0; m < dom.site_count(); ++m) {
    HalfSpace h;
    const Site& x = dom.site(m);
    for (int i = 0; i < d; ++i) h.normal[i] = double(y[i] - x[i]);
    h.offset = uy - later_max[static_cast<std::size_t>(dom.slot(m, s))];
    hs.push_back(h);
  }
  return hs;
}

/// later_max at slot(m, s) is max_{t > s} u(m, t).
inline std::vector<double> later_maxima(const AbpField& u) {
  const AbpDomain& dom = *u.domain;
  std::vector<double> out(u.values.size(), -std::numeric_limits<double>::infinity());
  for (std::int64_t m = 0; m < dom.site_count(); ++m)
    for (std::int64_t t = dom.times() - 2; t >= 0; --t)
      out[static_cast<std::size_t>(dom.slot(m, t))] =
          std::max(out[static_cast<std::size_t>(dom.slot(m, t + 1))], u.at(m, t + 1));
  return out;
}

/// Every interior point with its feasibility verdict and polytope area, in
/// lexicographic point order.
inline std::vector<ContactPoint> upper_contact_set(const AbpField& u, int workers = 1) {
  const AbpDomain& dom = *u.domain;
  const int d = dom.dim();
  require(d <= 2, "upper contact sets are supported in d <= 2");
  const auto later = later_maxima(u);
  const std::int64_t n = dom.inner_count() * dom.layers();
  std::vector<ContactPoint> out(static_cast<std::size_t>(n));
  parallel_for(n, workers, [&](std::int64_t i) {
    const std::int64_t j = i / dom.layers(), s = i % dom.layers();
    auto hs = contact_constraints(u, j, s, later);
    const auto poly = slope_polytope(hs, d, stream_key(0x5eed, static_cast<std::uint64_t>(i)));
    ContactPoint& cp = out[static_cast<std::size_t>(i)];
    cp.point = {dom.site(j), s};
    cp.feasible = poly.feasible;
    cp.bounded = poly.bounded;
    cp.volume = poly.volume;
    cp.witness = poly.witness;
    if (cp.feasible) cp.halfspaces = std::move(hs);
  });
  std::sort(out.begin(), out.end(), [](const ContactPoint& a, const ContactPoint& b) { return a.point < b.point; });
  return out;
}

/// Volume of {(y, s) : (2 + sqrt d) R |y| < s < M/2}.
inline double theta_volume(double sup_u, double radius, int d) {
  require(radius > 0 && d >= 1, "theta_volume needs R > 0 and d >= 1");
  if (sup_u <= 0) return 0;
  const double ball = std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1);
  const double slope = (2 + std::sqrt(double(d))) * radius;
  return ball * std::pow(sup_u / 2, d + 1) / ((d + 1) * std::pow(slope, d));
}

// ---- the stopped walk X_{T^(k)} ---------------------------------------------

struct CoverExit {
  Site site;
  std::int64_t steps = 0;
  double prob = 0;
};

/// Law of (X_{T^(k)}, T^(k)) from y, where T is the first time every
/// coordinate has moved. Exact dynamic programming over (site, axes seen).
inline std::vector<CoverExit> cover_exit_distribution(const Environment& env, const Site& y, int k) {
  require(k >= 1, "cover exit needs k >= 1");
  const int d = env.dim();
  const unsigned full = (1u << d) - 1;
  std::map<std::pair<Site, unsigned>, double> cur{{{y, 0u}, 1.0}};
  std::map<std::pair<Site, std::int64_t>, double> done;
  for (std::int64_t n = 1; n <= k; ++n) {
    std::map<std::pair<Site, unsigned>, double> next;
    for (const auto& [state, mass] : cur) {
      const auto& [x, seen] = state;
      const SiteKernel kern = env.kernel(x);
      for (int dir = 0; dir < 2 * d; ++dir) {
        if (!(kern[dir] > 0)) continue;
        const unsigned s2 = seen | (1u << direction_axis(dir, d));
        const Site z = x.step(dir);
        if (s2 == full || n == k)
          done[{z, n}] += mass * kern[dir];
        else
          next[{z, s2}] += mass * kern[dir];
      }
    }
    cur = std::move(next);
  }
  std::vector<CoverExit> out;
  for (const auto& [key, p] : done) out.push_back({key.first, key.second, p});
  return out;
}

/// E^y[u(X_{T^(k)}, s + 1 + T^(k))].
inline double expected_at_cover(const AbpField& u, const std::vector<CoverExit>& law, std::int64_t s) {
  double acc = 0;
  for (const auto& e : law) acc += e.prob * u({e.site, s + 1 + e.steps});
  return acc;
}

/// The vectors E[X_{T^(k)} | B_i^+] - y, where B_i^+ is "the first move along
/// axis i is positive, or axis i never moved and a fair coin says +".
inline std::vector<std::array<double, kMaxDim>> axis_offsets(const Environment& env, const Site& y, int k) {
  const int d = env.dim();
  // state: site and, per axis, 0 = unseen, 1 = first move +, 2 = first move -
  std::map<std::pair<Site, int>, double> cur{{{y, 0}, 1.0}};
  std::vector<std::array<double, kMaxDim>> acc(static_cast<std::size_t>(d));
  auto sign_of = [&](int code, int axis) {
    for (int i = 0; i < axis; ++i) code /= 3;
    return code % 3;
  };
  auto settle = [&](const Site& z, int code, double mass) {
    for (int i = 0; i < d; ++i) {
      const int sg = sign_of(code, i);
      const double w = sg == 1 ? 2.0 : (sg == 0 ? 1.0 : 0.0);
      for (int c = 0; c < d; ++c) acc[i][c] += w * mass * double(z[c] - y[c]);
    }
  };
  for (int n = 1; n <= k; ++n) {
    std::map<std::pair<Site, int>, double> next;
    for (const auto& [state, mass] : cur) {
      const auto& [x, code] = state;
      const SiteKernel kern = env.kernel(x);
      for (int dir = 0; dir < 2 * d; ++dir) {
        if (!(kern[dir] > 0)) continue;
        const int axis = direction_axis(dir, d);
        int code2 = code;
        if (sign_of(code, axis) == 0) {
          int pw = 1;
          for (int i = 0; i < axis; ++i) pw *= 3;
          code2 += pw * (dir < d ? 1 : 2);
        }
        bool all = true;
        for (int i = 0; i < d; ++i) all = all && sign_of(code2, i) != 0;
        if (all || n == k)
          settle(x.step(dir), code2, mass * kern[dir]);
        else
          next[{x.step(dir), code2}] += mass * kern[dir];
      }
    }
    cur = std::move(next);
  }
  return acc;
}

inline double offsets_determinant(const std::vector<std::array<double, kMaxDim>>& o) {
  if (o.size() == 1) return o[0][0];
  require(o.size() == 2, "determinant is implemented for d <= 2");
  return o[0][0] * o[1][1] - o[0][1] * o[1][0];
}

// ---- the verification chain --------------------------------------------------

/// Per contact point: lambda(I) against 4^d (u(y,s) - E[u(X_{T^(k)}, s+1+T^(k))])_+^d,
/// and the same with the bracket reversed as a diagnostic.
struct VolumeBoundCheck {
  SpaceTimePoint point;
  double volume = 0;
  double expectation = 0;  // E^y[u(X_{T^(k)}, s + 1 + T^(k))]
  double bound = 0;
  double slack = 0;
  double reversed_bound = 0;
  double parallelepiped_bound = 0;  // (2L)^d / |det|
  bool pass = false;
  bool reversed_pass = false;
};

struct AbpReport {
  double sup_u = 0;
  double theta_volume = 0;
  std::vector<ContactPoint> contact_points;
  std::size_t contact_count = 0;
  std::size_t unbounded_count = 0;
  double rhs_sum = 0;  // sum over the contact set of |E - u(y, s+1)|^{d+1}
  double abp_ratio = 0;  // sup u / (R^{d/(d+1)} rhs_sum^{1/(d+1)}); logged only
  double cone_lhs = 0;
  double cone_rhs = 0;
  double cone_slack = 0;
  bool cone_pass = false;
  std::vector<VolumeBoundCheck> volume_checks;
  double min_volume_slack = std::numeric_limits<double>::infinity();
  bool volume_pass = true;
  std::size_t reversed_failures = 0;
  double min_abs_determinant = std::numeric_limits<double>::infinity();
};

/// Both inequalities for u <= 0 on the extended boundary, with exact polygon
/// areas and exact expectations.
inline AbpReport verify_abp_chain(const Environment& env, const AbpField& u, int workers = 1) {
  const AbpDomain& dom = *u.domain;
  const int d = dom.dim();
  require(d == 2, "the ABP chain is verified in d = 2");
  require(static_cast<double>(dom.k()) < dom.radius(), "the ABP chain needs k < R");
  for (std::int64_t j = 0; j < dom.site_count(); ++j)
    for (std::int64_t t = 0; t < dom.times(); ++t)
      if (!dom.interior(j, t) && u.at(j, t) > 0)
        throw InvalidArgument("u must be <= 0 on the extended boundary; violated at " +
                              SpaceTimePoint{dom.site(j), t}.str());

  AbpReport rep;
  rep.sup_u = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j < dom.inner_count(); ++j)
    for (std::int64_t t = 0; t < dom.layers(); ++t) rep.sup_u = std::max(rep.sup_u, u.at(j, t));
  rep.theta_volume = theta_volume(rep.sup_u, dom.radius(), d);
  rep.contact_points = upper_contact_set(u, workers);

  std::vector<std::vector<CoverExit>> laws(static_cast<std::size_t>(dom.inner_count()));
  std::vector<double> dets(static_cast<std::size_t>(dom.inner_count()));
  parallel_for(dom.inner_count(), workers, [&](std::int64_t j) {
    laws[j] = cover_exit_distribution(env, dom.site(j), dom.k());
    dets[j] = offsets_determinant(axis_offsets(env, dom.site(j), dom.k()));
  });

  const double four_d = std::pow(4.0, d);
  bool infinite_rhs = false;
  for (const auto& cp : rep.contact_points) {
    if (!cp.feasible) continue;
    ++rep.contact_count;
    const std::int64_t j = *dom.index(cp.point.site), s = cp.point.time;
    const double drop = u.at(j, s) - u.at(j, s + 1);
    if (!cp.bounded) {
      ++rep.unbounded_count;
      if (drop > 0) infinite_rhs = true;
    } else {
      rep.cone_rhs += drop * cp.volume;
    }
    VolumeBoundCheck c;
    c.point = cp.point;
    c.volume = cp.volume;
    c.expectation = expected_at_cover(u, laws[j], s);
    const double gap = u.at(j, s) - c.expectation;
    c.bound = four_d * std::pow(std::max(0.0, gap), d);
    c.reversed_bound = four_d * std::pow(std::max(0.0, -gap), d);
    const double det = std::abs(dets[j]);
    rep.min_abs_determinant = std::min(rep.min_abs_determinant, det);
    c.parallelepiped_bound =
        det > 0 ? std::pow(2 * std::max(0.0, gap), d) / det : std::numeric_limits<double>::infinity();
    c.slack = c.bound - c.volume;
    c.pass = c.slack >= -kAbpSlack;
    c.reversed_pass = c.reversed_bound - c.volume >= -kAbpSlack;
    rep.reversed_failures += !c.reversed_pass;
    rep.min_volume_slack = std::min(rep.min_volume_slack, c.slack);
    rep.volume_pass = rep.volume_pass && c.pass;
    rep.rhs_sum += std::pow(std::abs(c.expectation - u.at(j, s + 1)), d + 1);
    rep.volume_checks.push_back(c);
  }
  if (infinite_rhs) rep.cone_rhs = std::numeric_limits<double>::infinity();
  rep.cone_lhs = rep.theta_volume;
  rep.cone_slack = rep.cone_rhs - rep.cone_lhs;
  rep.cone_pass = rep.cone_slack >= -kAbpSlack;
  const double scale = std::pow(dom.radius(), double(d) / (d + 1)) * std::pow(rep.rhs_sum, 1.0 / (d + 1));
  rep.abp_ratio = scale > 0 ? std::max(0.0, rep.sup_u) / scale : 0.0;
  return rep;
}

inline nlohmann::json abp_report_json(const AbpReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
  };
  nlohmann::json j;
  j["sup_u"] = num(r.sup_u);
  j["theta_volume"] = num(r.theta_volume);
  j["interior_points"] = r.contact_points.size();
  j["contact_points"] = r.contact_count;
  j["unbounded_polytopes"] = r.unbounded_count;
  j["rhs_sum"] = num(r.rhs_sum);
  j["abp_ratio"] = num(r.abp_ratio);
  j["cone_inequality"] = {{"lhs", num(r.cone_lhs)}, {"rhs", num(r.cone_rhs)}, {"slack", num(r.cone_slack)},
                          {"pass", r.cone_pass}};
  j["volume_inequality"] = {{"checks", r.volume_checks.size()},
                            {"min_slack", num(r.min_volume_slack)},
                            {"pass", r.volume_pass},
                            {"reversed_bracket_failures", r.reversed_failures},
                            {"min_abs_determinant", num(r.min_abs_determinant)}};
  return j;
}

/// CSV with header x1,...,xd,t,feasible,volume.
inline void write_contact_csv(std::ostream& os, const std::vector<ContactPoint>& pts) {
  if (pts.empty()) return;
  const int d = pts.front().point.site.dim();
  for (int i = 1; i <= d; ++i) os << 'x' << i << ',';
  os << "t,feasible,volume\n";
  for (const auto& cp : pts) {
    for (int i = 0; i < d; ++i) os << cp.point.site[i] << ',';
    os << cp.point.time << ',' << (cp.feasible ? 1 : 0) << ',' << (cp.feasible ? format_value(cp.volume) : "0")
       << '\n';
  }
}

}  // namespace rwre

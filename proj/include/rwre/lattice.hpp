#pragma once

// Lattice and space-time geometry: balls, discrete boundaries, parabolic
// cylinders and parity classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "rwre/error.hpp"

namespace rwre {

inline constexpr int kMaxDim = 4;

/// A point of Z^d, 1 <= d <= kMaxDim. Unused trailing coordinates are zero.
class Site {
 public:
  Site() = default;
  explicit Site(int dim) : dim_(dim) {
    require(dim >= 1 && dim <= kMaxDim, "dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  }
  Site(std::initializer_list<std::int64_t> coords) : Site(static_cast<int>(coords.size())) {
    std::copy(coords.begin(), coords.end(), c_.begin());
  }
  static Site zero(int dim) { return Site(dim); }
  static Site unit(int dim, int axis, std::int64_t sign = 1) {
    Site s(dim);
    s.c_[axis] = sign;
    return s;
  }

  int dim() const { return dim_; }
  std::int64_t operator[](int i) const { return c_[i]; }
  std::int64_t& operator[](int i) { return c_[i]; }

  std::int64_t l1() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim_; ++i) s += std::llabs(c_[i]);
    return s;
  }
  std::int64_t l2_sq() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim_; ++i) s += c_[i] * c_[i];
    return s;
  }
  double l2() const { return std::sqrt(static_cast<double>(l2_sq())); }
  std::int64_t linf() const {
    std::int64_t s = 0;
    for (int i = 0; i < dim_; ++i) s = std::max<std::int64_t>(s, std::llabs(c_[i]));
    return s;
  }

  Site& operator+=(const Site& o) {
    for (int i = 0; i < dim_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Site& operator-=(const Site& o) {
    for (int i = 0; i < dim_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  friend Site operator+(Site a, const Site& b) { return a += b; }
  friend Site operator-(Site a, const Site& b) { return a -= b; }

  /// Neighbor in direction k, where k < d is +e_k and k >= d is -e_{k-d}.
  Site step(int k) const {
    Site s = *this;
    if (k < dim_) {
      ++s.c_[k];
    } else {
      --s.c_[k - dim_];
    }
    return s;
  }

  friend auto operator<=>(const Site&, const Site&) = default;
  friend bool operator==(const Site&, const Site&) = default;

  std::string str() const {
    std::string out = "(";
    for (int i = 0; i < dim_; ++i) {
      if (i) out += ",";
      out += std::to_string(c_[i]);
    }
    return out + ")";
  }

 private:
  std::array<std::int64_t, kMaxDim> c_{};
  int dim_ = 0;
};

/// Axis of direction index k (0-based) in dimension d.
inline int direction_axis(int k, int d) { return k < d ? k : k - d; }
/// Index of the opposite direction.
inline int opposite_direction(int k, int d) { return k < d ? k + d : k - d; }

struct SpaceTimePoint {
  Site site;
  std::int64_t time = 0;

  friend auto operator<=>(const SpaceTimePoint&, const SpaceTimePoint&) = default;
  friend bool operator==(const SpaceTimePoint&, const SpaceTimePoint&) = default;

  std::string str() const { return "[" + site.str() + ", t=" + std::to_string(time) + "]"; }
};

enum class Parity { odd, even };

inline Parity parity_of(const SpaceTimePoint& p) {
  return ((p.site.l1() + p.time) % 2 != 0) ? Parity::odd : Parity::even;
}

inline const char* parity_name(Parity p) { return p == Parity::odd ? "odd" : "even"; }

/// R^2 snapped to the nearest integer when it is within 1e-9 of one, so that
/// radii such as sqrt(2) do not pick up an extra time layer from rounding.
inline double radius_sq(double radius) {
  const double r2 = radius * radius;
  const double nearest = std::round(r2);
  return std::abs(r2 - nearest) <= 1e-9 * std::max(1.0, r2) ? nearest : r2;
}
inline std::int64_t ceil_radius_sq(double radius) {
  return static_cast<std::int64_t>(std::ceil(radius_sq(radius)));
}
inline std::int64_t floor_radius_sq(double radius) {
  return static_cast<std::int64_t>(std::floor(radius_sq(radius)));
}

/// Strict Euclidean membership ||x - center||_2 < R.
inline bool in_ball(const Site& x, const Site& center, double radius) {
  return static_cast<double>((x - center).l2_sq()) < radius_sq(radius);
}

namespace detail {

template <class Fn>
void for_each_in_cube(const Site& lo, const Site& hi, Fn&& fn) {
  const int d = lo.dim();
  Site x = lo;
  while (true) {
    fn(x);
    int i = d - 1;
    while (i >= 0) {
      if (x[i] < hi[i]) {
        ++x[i];
        break;
      }
      x[i] = lo[i];
      --i;
    }
    if (i < 0) return;
  }
}

inline void sort_unique(std::vector<Site>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

/// B_R(center): lattice points at Euclidean distance strictly less than R.
inline std::vector<Site> ball_points(double radius, const Site& center) {
  require(radius > 0, "ball radius must be positive");
  const int d = center.dim();
  const auto span = static_cast<std::int64_t>(std::ceil(radius));
  Site lo = center, hi = center;
  for (int i = 0; i < d; ++i) {
    lo[i] -= span;
    hi[i] += span;
  }
  std::vector<Site> out;
  detail::for_each_in_cube(lo, hi, [&](const Site& x) {
    if (in_ball(x, center, radius)) out.push_back(x);
  });
  return out;  // lexicographic by construction
}

inline std::vector<Site> ball_points(double radius, int dim) { return ball_points(radius, Site::zero(dim)); }

/// Discrete boundary: points outside G at l-infinity distance exactly 1 from G.
inline std::vector<Site> discrete_boundary(const std::vector<Site>& g) {
  std::vector<Site> sorted = g;
  detail::sort_unique(sorted);
  std::vector<Site> out;
  if (sorted.empty()) return out;
  const int d = sorted.front().dim();
  Site lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = -1;
    hi[i] = 1;
  }
  for (const Site& y : sorted) {
    detail::for_each_in_cube(lo, hi, [&](const Site& off) {
      const Site x = y + off;
      if (!std::binary_search(sorted.begin(), sorted.end(), x)) out.push_back(x);
    });
  }
  detail::sort_unique(out);
  return out;
}

/// Points outside G within l-infinity distance k of G.
inline std::vector<Site> thick_boundary(const std::vector<Site>& g, int k) {
  std::vector<Site> sorted = g;
  detail::sort_unique(sorted);
  std::vector<Site> out;
  if (sorted.empty() || k <= 0) return out;
  const int d = sorted.front().dim();
  Site lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = -k;
    hi[i] = k;
  }
  for (const Site& y : sorted) {
    detail::for_each_in_cube(lo, hi, [&](const Site& off) {
      const Site x = y + off;
      if (!std::binary_search(sorted.begin(), sorted.end(), x)) out.push_back(x);
    });
  }
  detail::sort_unique(out);
  return out;
}

/// O_R(center): points of B_R all of whose l-infinity neighbors lie in B_R.
inline std::vector<Site> interior_points(double radius, const Site& center) {
  require(radius > 1, "interior_points requires R > 1");
  const int d = center.dim();
  Site lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = -1;
    hi[i] = 1;
  }
  std::vector<Site> out;
  for (const Site& x : ball_points(radius, center)) {
    bool inside = true;
    detail::for_each_in_cube(lo, hi, [&](const Site& off) {
      if (inside && !in_ball(x + off, center, radius)) inside = false;
    });
    if (inside) out.push_back(x);
  }
  return out;
}

inline std::vector<Site> interior_points(double radius, int dim) { return interior_points(radius, Site::zero(dim)); }

/// Discrete parabolic cylinder K_R(center) with its derived sets. Membership
/// predicates are lazy; the materializing accessors enumerate point sets.
class Cylinder {
 public:
  Cylinder(SpaceTimePoint center, double radius) : center_(std::move(center)), radius_(radius) {
    require(radius > 0, "cylinder radius must be positive");
    require(center_.time >= 0, "cylinder center time must be non-negative");
  }

  const SpaceTimePoint& center() const { return center_; }
  double radius() const { return radius_; }
  int dim() const { return center_.site.dim(); }
  /// Number of interior time layers, ceil(R^2); the terminal layer sits at t0 + height().
  std::int64_t height() const { return ceil_radius_sq(radius_); }
  std::int64_t t0() const { return center_.time; }
  std::int64_t top_time() const { return center_.time + height(); }

  bool in_spatial_ball(const Site& x) const { return in_ball(x, center_.site, radius_); }
  bool in_spatial_boundary(const Site& x) const {
    if (in_spatial_ball(x)) return false;
    const int d = dim();
    for (int i = 0; i < d; ++i) {
      // cheap reject: l-infinity neighbor of the ball needs |x_i - c_i| <= ceil(R)
      if (std::llabs(x[i] - center_.site[i]) > static_cast<std::int64_t>(std::ceil(radius_)) + 1) return false;
    }
    Site lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
      lo[i] = -1;
      hi[i] = 1;
    }
    bool adjacent = false;
    detail::for_each_in_cube(lo, hi, [&](const Site& off) {
      if (!adjacent && in_spatial_ball(x + off)) adjacent = true;
    });
    return adjacent;
  }

  /// (x, t) in K_R: x in B_R and t0 <= t < t0 + ceil(R^2).
  bool in_interior(const SpaceTimePoint& p) const {
    return p.time >= t0() && p.time < top_time() && in_spatial_ball(p.site);
  }
  /// (x, t) in the parabolic boundary: lateral part or terminal slice.
  bool on_parabolic_boundary(const SpaceTimePoint& p) const {
    if (p.time < t0() || p.time > top_time()) return false;
    if (in_spatial_boundary(p.site)) return true;
    return p.time == top_time() && in_spatial_ball(p.site);
  }
  bool in_closure(const SpaceTimePoint& p) const { return in_interior(p) || on_parabolic_boundary(p); }

  /// Offsets tau = t - t0 in the open window (2R^2, 3R^2).
  bool in_upper_window(std::int64_t t) const {
    const double tau = static_cast<double>(t - t0());
    const double r2 = radius_sq(radius_);
    return tau > 2 * r2 && tau < 3 * r2;
  }
  /// Offsets tau = t - t0 in the open window (0, R^2).
  bool in_lower_window(std::int64_t t) const {
    const double tau = static_cast<double>(t - t0());
    return tau > 0 && tau < radius_sq(radius_);
  }
  bool in_upper(const SpaceTimePoint& p) const { return in_upper_window(p.time) && in_spatial_ball(p.site); }
  bool in_lower(const SpaceTimePoint& p) const { return in_lower_window(p.time) && in_spatial_ball(p.site); }

  std::vector<Site> ball() const { return ball_points(radius_, center_.site); }
  std::vector<Site> lateral_sites() const { return discrete_boundary(ball()); }

 private:
  SpaceTimePoint center_;
  double radius_;
};

struct CylinderSets {
  std::vector<SpaceTimePoint> interior;            // K_R
  std::vector<SpaceTimePoint> parabolic_boundary;  // d^p K_R
  std::vector<SpaceTimePoint> q_interior;          // Q_R
  std::vector<SpaceTimePoint> q_boundary;          // d^p Q_R
  std::vector<SpaceTimePoint> upper;               // K^+_R
  std::vector<SpaceTimePoint> lower;               // K^-_R
};

inline constexpr std::size_t kMaxMaterializedPoints = 50'000'000;

/// Materializes the six point sets of a cylinder, sorted lexicographically.
inline CylinderSets cylinder_sets(const Cylinder& c) {
  const Site& x0 = c.center().site;
  const std::int64_t t0 = c.t0();
  const auto ball = c.ball();
  const auto lateral = discrete_boundary(ball);
  const std::int64_t h = c.height();
  if (static_cast<double>(ball.size() + lateral.size()) * static_cast<double>(h + 1) >
      static_cast<double>(kMaxMaterializedPoints)) {
    throw InvalidArgument("cylinder too large to materialize; use the membership predicates");
  }

  CylinderSets s;
  for (const Site& x : ball)
    for (std::int64_t t = t0; t < t0 + h; ++t) s.interior.push_back({x, t});
  for (const Site& x : lateral)
    for (std::int64_t t = t0; t <= t0 + h; ++t) s.parabolic_boundary.push_back({x, t});
  for (const Site& x : ball) s.parabolic_boundary.push_back({x, t0 + h});

  const std::int64_t hq = floor_radius_sq(c.radius());
  if (c.radius() > 1) {
    const auto o = interior_points(c.radius(), x0);
    const auto od = discrete_boundary(o);
    for (const Site& x : o)
      for (std::int64_t t = t0; t < t0 + hq; ++t) s.q_interior.push_back({x, t});
    for (const Site& x : od)
      for (std::int64_t t = t0; t <= t0 + hq; ++t) s.q_boundary.push_back({x, t});
    for (const Site& x : o) s.q_boundary.push_back({x, t0 + hq});
  }

  const auto upper_end = t0 + static_cast<std::int64_t>(std::ceil(3 * radius_sq(c.radius())));
  for (const Site& x : ball) {
    for (std::int64_t t = t0 + 1; t <= upper_end; ++t) {
      if (c.in_upper_window(t)) s.upper.push_back({x, t});
      if (c.in_lower_window(t)) s.lower.push_back({x, t});
    }
  }
  for (auto* v : {&s.interior, &s.parabolic_boundary, &s.q_interior, &s.q_boundary, &s.upper, &s.lower})
    std::sort(v->begin(), v->end());
  return s;
}

/// Theta^p(G): the points of G whose ||x||_1 + t has the given parity.
inline std::vector<SpaceTimePoint> parity_filter(const std::vector<SpaceTimePoint>& g, Parity p) {
  std::vector<SpaceTimePoint> out;
  for (const auto& pt : g)
    if (parity_of(pt) == p) out.push_back(pt);
  return out;
}

}  // namespace rwre

template <>
struct std::hash<rwre::Site> {
  std::size_t operator()(const rwre::Site& s) const noexcept {
    std::uint64_t h = 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(s.dim());
    for (int i = 0; i < s.dim(); ++i) {
      h ^= static_cast<std::uint64_t>(s[i]) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

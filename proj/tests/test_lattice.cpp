#include <gtest/gtest.h>

#include <set>

#include "rwre/lattice.hpp"
#include "rwre/rng.hpp"

using namespace rwre;

namespace {

// brute force: every integer point of the cube [-s, s]^d around c with |x - c|^2 < R^2
std::vector<Site> brute_ball(double r, const Site& c) {
  std::vector<Site> out;
  const int d = c.dim();
  const auto s = static_cast<std::int64_t>(r) + 2;
  Site lo = c, hi = c;
  for (int i = 0; i < d; ++i) {
    lo[i] -= s;
    hi[i] += s;
  }
  detail::for_each_in_cube(lo, hi, [&](const Site& x) {
    double n = 0;
    for (int i = 0; i < d; ++i) n += double(x[i] - c[i]) * double(x[i] - c[i]);
    if (n < r * r) out.push_back(x);
  });
  return out;
}

std::set<Site> as_set(const std::vector<Site>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Ball, OriginOnlyAtRadiusOne) {
  EXPECT_EQ(ball_points(1.0, 2), std::vector<Site>{Site({0, 0})});
  EXPECT_EQ(ball_points(1.0, Site{5, 5}), std::vector<Site>{Site({5, 5})});
}

TEST(Ball, NinePointsAtOneAndAHalf) {
  const auto b = ball_points(1.5, 2);
  EXPECT_EQ(b.size(), 9u);
  EXPECT_EQ(as_set(b), as_set(brute_ball(1.5, Site{0, 0})));
}

TEST(Ball, MatchesEnumerationAndTranslates) {
  for (int d = 1; d <= 3; ++d)
    for (double r : {0.5, 1.0, 1.7, 2.0, 3.3, 5.0}) {
      const auto b = ball_points(r, d);
      EXPECT_EQ(as_set(b), as_set(brute_ball(r, Site::zero(d))));
      Site c(d);
      for (int i = 0; i < d; ++i) c[i] = 3 - 2 * i;
      std::set<Site> shifted;
      for (const auto& x : b) shifted.insert(x + c);
      EXPECT_EQ(as_set(ball_points(r, c)), shifted);
    }
}

TEST(Interior, SmallRadii) {
  EXPECT_EQ(interior_points(2.0, 2), std::vector<Site>{Site({0, 0})});
  EXPECT_TRUE(interior_points(1.2, 2).empty());
  EXPECT_THROW(interior_points(1.0, 2), InvalidArgument);
}

// The closure identity holds everywhere in range except two d = 3 radii where
// no subset of the ball has the ball as its closure.
TEST(Interior, ClosureIdentity) {
  for (int d = 1; d <= 3; ++d)
    for (int r = 2; r <= 12; ++r) {
      const auto b = ball_points(r, d);
      const auto o = interior_points(r, d);
      auto closure = o;
      const auto rim = discrete_boundary(o);
      closure.insert(closure.end(), rim.begin(), rim.end());
      const auto cs = as_set(closure), bs = as_set(b);
      std::size_t missing = 0;
      for (const auto& x : bs) missing += cs.count(x) == 0;
      for (const auto& x : cs) EXPECT_TRUE(bs.count(x)) << "closure leaves the ball";
      if (d == 3 && r == 3) {
        EXPECT_EQ(missing, 12u);
      } else if (d == 3 && r == 9) {
        EXPECT_EQ(missing, 24u);
      } else {
        EXPECT_EQ(missing, 0u) << "d=" << d << " R=" << r;
      }
    }
}

TEST(Interior, NoLargerSetWorksForRadiusThreeInThreeD) {
  // (2,2,0) lies in B_3 but every site within l-infinity distance 1 of it has a
  // neighbor outside B_3, so no admissible set has it in its closure
  const Site x{2, 2, 0};
  EXPECT_TRUE(in_ball(x, Site::zero(3), 3));
  Site lo{-1, -1, -1}, hi{1, 1, 1};
  detail::for_each_in_cube(lo, hi, [&](const Site& off) {
    const Site y = x + off;
    if (!in_ball(y, Site::zero(3), 3)) return;
    bool all_in = true;
    detail::for_each_in_cube(lo, hi, [&](const Site& o2) { all_in = all_in && in_ball(y + o2, Site::zero(3), 3); });
    EXPECT_FALSE(all_in) << y.str();
  });
}

TEST(Cylinder, BoundaryStructureRadiusTwo) {
  const Cylinder c({Site{0, 0}, 0}, 2.0);
  EXPECT_EQ(c.height(), 4);
  const auto s = cylinder_sets(c);
  const auto ball = as_set(ball_points(2.0, 2));
  for (const auto& p : s.parabolic_boundary) {
    const bool lateral = !ball.count(p.site) && p.time >= 0 && p.time <= 4;
    EXPECT_TRUE(p.time == 4 || lateral) << p.str();
    if (p.time != 4) EXPECT_TRUE(c.in_spatial_boundary(p.site));
  }
  std::set<SpaceTimePoint> k(s.interior.begin(), s.interior.end());
  for (const auto& p : s.parabolic_boundary) EXPECT_EQ(k.count(p), 0u);
}

TEST(Cylinder, InteriorCountRadiusThree) {
  const Cylinder c({Site{0, 0}, 0}, 3.0);
  std::size_t n = 0;
  for (std::int64_t x = -4; x <= 4; ++x)
    for (std::int64_t y = -4; y <= 4; ++y)
      for (std::int64_t t = -2; t <= 12; ++t)
        if (x * x + y * y < 9 && t >= 0 && t < 9) ++n;
  EXPECT_EQ(cylinder_sets(c).interior.size(), n);
}

TEST(Cylinder, ClosureIsDisjointUnion) {
  for (double r : {1.0, 1.5, 2.0, 2.5, 3.0}) {
    const Cylinder c({Site{1, -2}, 3}, r);
    const auto s = cylinder_sets(c);
    std::set<SpaceTimePoint> k(s.interior.begin(), s.interior.end());
    std::set<SpaceTimePoint> b(s.parabolic_boundary.begin(), s.parabolic_boundary.end());
    EXPECT_EQ(b.size(), s.parabolic_boundary.size());
    for (const auto& p : b) EXPECT_FALSE(k.count(p));
    // predicates agree with the materialized sets over a neighborhood
    for (std::int64_t x = -4; x <= 6; ++x)
      for (std::int64_t y = -7; y <= 3; ++y)
        for (std::int64_t t = 0; t <= 14; ++t) {
          const SpaceTimePoint p{Site{x, y}, t};
          EXPECT_EQ(c.in_interior(p), k.count(p) == 1);
          EXPECT_EQ(c.on_parabolic_boundary(p), b.count(p) == 1);
        }
  }
}

TEST(Cylinder, UpperAndLowerWindows) {
  const Cylinder c({Site{0, 0}, 0}, 2.0);
  const auto s = cylinder_sets(c);
  std::set<std::int64_t> up, low;
  for (const auto& p : s.upper) up.insert(p.time);
  for (const auto& p : s.lower) low.insert(p.time);
  EXPECT_EQ(up, (std::set<std::int64_t>{9, 10, 11}));
  EXPECT_EQ(low, (std::set<std::int64_t>{1, 2, 3}));
}

TEST(Cylinder, QDomainSets) {
  const Cylinder c({Site{0, 0}, 0}, 3.0);
  const auto s = cylinder_sets(c);
  const auto o = interior_points(3.0, 2);
  EXPECT_EQ(s.q_interior.size(), o.size() * 9);  // times 0..8
  EXPECT_EQ(s.q_boundary.size(), discrete_boundary(o).size() * 10 + o.size());
}

TEST(Parity, Examples) {
  EXPECT_EQ(parity_of({Site{1, 0}, 2}), Parity::odd);
  EXPECT_EQ(parity_of({Site{0, 0}, 0}), Parity::even);
  EXPECT_EQ(parity_of({Site{-3, 0}, 0}), Parity::odd);
}

TEST(Parity, PartitionsRandomSets) {
  CounterRng rng(99);
  std::vector<SpaceTimePoint> g;
  for (int i = 0; i < 50; ++i)
    g.push_back({Site{static_cast<std::int64_t>(rng.next_u64() % 21) - 10,
                      static_cast<std::int64_t>(rng.next_u64() % 21) - 10},
                 static_cast<std::int64_t>(rng.next_u64() % 30)});
  const auto o = parity_filter(g, Parity::odd), e = parity_filter(g, Parity::even);
  EXPECT_EQ(o.size() + e.size(), g.size());
  for (const auto& p : o) EXPECT_EQ(parity_of(p), Parity::odd);
  for (const auto& p : e) EXPECT_EQ(parity_of(p), Parity::even);
}

TEST(Radius, SnapsSquaredRadius) {
  EXPECT_EQ(ceil_radius_sq(std::sqrt(2.0)), 2);
  EXPECT_EQ(floor_radius_sq(std::sqrt(3.0)), 3);
  EXPECT_EQ(ceil_radius_sq(2.5), 7);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "rwre/abp.hpp"

using namespace rwre;

namespace {

std::shared_ptr<const AbpDomain> grid_domain() {
  // 7x7 sites, the central 5x5 interior, interior times 0..4, k = 1
  std::vector<Site> inner, outer;
  for (std::int64_t a = -3; a <= 3; ++a)
    for (std::int64_t b = -3; b <= 3; ++b)
      (std::max(std::llabs(a), std::llabs(b)) <= 2 ? inner : outer).push_back(Site{a, b});
  return std::make_shared<const AbpDomain>(inner, outer, 5, 1, 3.0);
}

HalfSpace hs(double a, double b, double c) {
  HalfSpace h;
  h.normal[0] = a;
  h.normal[1] = b;
  h.offset = c;
  return h;
}

bool satisfies(const std::vector<HalfSpace>& h, double p0, double p1, double tol = 0) {
  for (const auto& c : h)
    if (c.normal[0] * p0 + c.normal[1] * p1 > c.offset + tol) return false;
  return true;
}

// rejection sampling over the square of half-width w about (c0, c1)
double mc_area(const std::vector<HalfSpace>& h, double c0, double c1, double w, std::int64_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::int64_t in = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double a = c0 + w * (2 * rng.uniform() - 1), b = c1 + w * (2 * rng.uniform() - 1);
    in += satisfies(h, a, b);
  }
  return 4 * w * w * double(in) / double(n);
}

// Grid search at spacing 1/64 over [-8, 8]^2: for each row, intersect the
// constraints' intervals in p_0 and look for a grid column inside.
bool grid_finds(const std::vector<HalfSpace>& h) {
  for (int r = -512; r <= 512; ++r) {
    const double p1 = r / 64.0;
    double lo = -8, hi = 8;
    bool ok = true;
    for (const auto& c : h) {
      const double rhs = c.offset - c.normal[1] * p1;
      if (c.normal[0] == 0) {
        ok = ok && rhs >= 0;
      } else if (c.normal[0] > 0) {
        hi = std::min(hi, rhs / c.normal[0]);
      } else {
        lo = std::max(lo, rhs / c.normal[0]);
      }
    }
    if (ok && std::floor(hi * 64) >= std::ceil(lo * 64) && lo <= hi) return true;
  }
  return false;
}

Environment srw2(std::int64_t half) { return sample_iid(SiteLaw::simple_random_walk(2), Box::centered(2, half), 0); }

}  // namespace

TEST(SlopePolytope, TriangleArea) {
  const std::vector<HalfSpace> tri = {hs(-1, 0, 0), hs(0, -1, 0), hs(1, 1, 1)};
  const auto p = slope_polytope_2d(tri);
  EXPECT_TRUE(p.feasible);
  EXPECT_TRUE(p.bounded);
  EXPECT_NEAR(p.volume, 0.5, 1e-12);
  const std::vector<HalfSpace> tri2 = {hs(-1, 0, -1), hs(0, -1, 2), hs(2, 1, 5)};  // (1,-2), (3.5,-2), (1,3)
  EXPECT_NEAR(slope_polytope_2d(tri2).volume, 0.5 * 2.5 * 5, 1e-9);
}

TEST(SlopePolytope, InfeasibleAndUnbounded) {
  EXPECT_FALSE(slope_polytope_2d({hs(1, 0, -1), hs(-1, 0, -1)}).feasible);
  const auto strip = slope_polytope_2d({hs(1, 0, 1), hs(-1, 0, 1)});
  EXPECT_TRUE(strip.feasible);
  EXPECT_FALSE(strip.bounded);
  EXPECT_TRUE(std::isinf(strip.volume));
  // a point: p = (2, -1) exactly
  const auto pt = slope_polytope_2d({hs(1, 0, 2), hs(-1, 0, -2), hs(0, 1, -1), hs(0, -1, 1)});
  EXPECT_TRUE(pt.feasible);
  EXPECT_EQ(pt.volume, 0.0);
  EXPECT_NEAR(pt.witness[0], 2, 1e-8);
  EXPECT_NEAR(pt.witness[1], -1, 1e-8);
}

TEST(SlopePolytope, AreaGrowsWhenAConstraintIsDropped) {
  CounterRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<HalfSpace> h;
    for (int i = 0; i < 8; ++i) {
      const double ang = 2 * std::numbers::pi * (i + rng.uniform()) / 8;
      h.push_back(hs(std::cos(ang), std::sin(ang), 0.5 + rng.uniform()));
    }
    const double full = slope_polytope_2d(h).volume;
    ASSERT_TRUE(std::isfinite(full));
    EXPECT_GE(full, 0.0);
    for (std::size_t drop = 0; drop < h.size(); ++drop) {
      auto less = h;
      less.erase(less.begin() + static_cast<std::ptrdiff_t>(drop));
      EXPECT_GE(slope_polytope_2d(less).volume, full - 1e-12);
    }
    EXPECT_NEAR(full, mc_area(h, 0, 0, 2, 200000, trial), 0.05);
  }
}

TEST(SlopePolytope, OneDimensional) {
  const auto p = slope_polytope_1d({hs(1, 0, 3), hs(-2, 0, 2)});  // -1 <= p <= 3
  EXPECT_TRUE(p.feasible);
  EXPECT_EQ(p.volume, 4.0);
  EXPECT_FALSE(slope_polytope_1d({hs(1, 0, -1), hs(-1, 0, -1)}).feasible);
}

TEST(Theta, Volume) {
  EXPECT_EQ(theta_volume(0, 1, 2), 0.0);
  const double expect = std::numbers::pi / (3 * (2 + std::sqrt(2.0)) * (2 + std::sqrt(2.0)));
  EXPECT_NEAR(theta_volume(2, 1, 2), expect, 1e-12);
  // midpoint quadrature of the cross-sections
  const int n = 200000;
  double q = 0;
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) / n;
    const double r = s / (2 + std::sqrt(2.0));
    q += std::numbers::pi * r * r / n;
  }
  EXPECT_NEAR(theta_volume(2, 1, 2), q, 1e-10);
  for (int d = 1; d <= 3; ++d) {
    EXPECT_NEAR(theta_volume(6, 2, d) / theta_volume(3, 2, d), std::pow(2.0, d + 1), 1e-9);
    EXPECT_NEAR(theta_volume(3, 6, d) / theta_volume(3, 2, d), std::pow(3.0, -d), 1e-12);
  }
}

TEST(Domain, QShape) {
  const auto dom = AbpDomain::q(6, 2, 2);
  EXPECT_EQ(dom.layers(), 36);
  EXPECT_EQ(dom.times(), 39);
  EXPECT_EQ(dom.inner_count(), static_cast<std::int64_t>(interior_points(6, 2).size()));
  EXPECT_EQ(dom.site_count() - dom.inner_count(),
            static_cast<std::int64_t>(thick_boundary(interior_points(6, 2), 2).size()));
  EXPECT_THROW(AbpDomain::q(2, 2, 2), InvalidArgument);
}

TEST(ContactSet, ConstantFieldTouchesEverywhere) {
  const auto dom = grid_domain();
  const auto u = make_abp_field(dom, [](const SpaceTimePoint&) { return 1.5; });
  for (const auto& cp : upper_contact_set(u)) {
    EXPECT_TRUE(cp.feasible) << cp.point.str();
    EXPECT_TRUE(satisfies(cp.halfspaces, 0, 0));
    EXPECT_EQ(cp.volume, 0.0);
    EXPECT_EQ(slope_polytope_volume(cp), 0.0);
  }
}

TEST(ContactSet, StrictMaximumIsAContactPoint) {
  const auto dom = grid_domain();
  CounterRng rng(5);
  std::vector<double> noise(static_cast<std::size_t>(dom->value_count()));
  for (auto& v : noise) v = rng.uniform();
  const Site y0{1, -1};
  const std::int64_t s0 = 0;
  const auto u = make_abp_field(dom, [&](const SpaceTimePoint& p) {
    if (p.site == y0 && p.time == s0) return 5.0;
    return noise[static_cast<std::size_t>(dom->slot(*dom->index(p.site), p.time))];
  });
  bool found = false;
  for (const auto& cp : upper_contact_set(u))
    if (cp.point == SpaceTimePoint{y0, s0}) {
      found = true;
      EXPECT_TRUE(cp.feasible);
      EXPECT_TRUE(satisfies(cp.halfspaces, 0, 0));
    }
  EXPECT_TRUE(found);
}

TEST(ContactSet, LinearFieldCollapsesThePolytope) {
  const auto dom = grid_domain();
  const auto u = make_abp_field(dom, [](const SpaceTimePoint& p) { return 0.75 * double(p.site[0]) - 0.5 * double(p.site[1]); });
  for (const auto& cp : upper_contact_set(u)) {
    ASSERT_TRUE(cp.feasible);
    EXPECT_EQ(cp.volume, 0.0);
    EXPECT_NEAR(cp.witness[0], 0.75, 1e-6);
    EXPECT_NEAR(cp.witness[1], -0.5, 1e-6);
  }
}

TEST(ContactSet, ConcaveFieldAreaMatchesMonteCarlo) {
  const auto dom = grid_domain();
  // strictly concave in space and decreasing in time: every polytope is a
  // small polygon around the gradient
  const auto u = make_abp_field(dom, [](const SpaceTimePoint& p) {
    return -0.3 * double(p.site.l2_sq()) - 0.1 * double(p.time);
  });
  int checked = 0;
  for (const auto& cp : upper_contact_set(u)) {
    ASSERT_TRUE(cp.feasible);
    ASSERT_TRUE(cp.bounded);
    EXPECT_GT(cp.volume, 0.0);
    if (cp.point.time != 2 || cp.point.site[1] != 0) continue;
    // the polytope sits within 1.5 of the gradient -0.6 y
    const double c0 = -0.6 * double(cp.point.site[0]);
    // nothing is lost outside the small window
    EXPECT_NEAR(mc_area(cp.halfspaces, c0, 0, 3, 400000, 7), cp.volume, 0.05);
    const double mc = mc_area(cp.halfspaces, c0, 0, 1.5, 4'000'000, ++checked);
    EXPECT_NEAR(cp.volume, mc, 0.01 * cp.volume) << cp.point.str();
  }
  EXPECT_EQ(checked, 5);
}

TEST(ContactSet, AgreesWithSlopeGrid) {
  const auto dom = grid_domain();
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    CounterRng rng(seed);
    std::vector<double> vals(static_cast<std::size_t>(dom->value_count()));
    for (auto& v : vals) v = rng.uniform();
    const AbpField u{dom, vals};
    const auto later = later_maxima(u);
    std::size_t feasible = 0;
    for (const auto& cp : upper_contact_set(u)) {
      const auto j = *dom->index(cp.point.site);
      const auto h = contact_constraints(u, j, cp.point.time, later);
      const bool grid = grid_finds(h);
      if (grid) {
        EXPECT_TRUE(cp.feasible) << cp.point.str();
      }
      // a ball of radius 1/64 inside the polytope must contain a grid point
      auto shrunk = h;
      for (auto& c : shrunk) c.offset -= std::hypot(c.normal[0], c.normal[1]) / 64;
      const auto inner = slope_polytope_2d(shrunk);
      if (inner.feasible && std::abs(inner.witness[0]) < 7.9 && std::abs(inner.witness[1]) < 7.9) {
        EXPECT_TRUE(grid) << cp.point.str();
      }
      if (cp.feasible) {
        EXPECT_TRUE(satisfies(cp.halfspaces, cp.witness[0], cp.witness[1], 1e-8));
        ++feasible;
      }
    }
    EXPECT_GT(feasible, 0u);
  }
}

TEST(ContactSet, WorkerCountDoesNotMatter) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(4, 1, 2));
  const auto u = random_admissible_field(dom, 9);
  const auto a = upper_contact_set(u, 1), b = upper_contact_set(u, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].point, b[i].point);
    EXPECT_EQ(a[i].feasible, b[i].feasible);
    EXPECT_EQ(a[i].volume, b[i].volume);
  }
}

TEST(CoverExit, LawIsAMartingaleStop) {
  const auto env = sample_iid(SiteLaw::uniform_axis(2), Box::centered(2, 8), 2);
  for (int k : {1, 2, 4}) {
    const auto law = cover_exit_distribution(env, Site{1, 1}, k);
    double mass = 0, m0 = 0, m1 = 0;
    for (const auto& e : law) {
      mass += e.prob;
      m0 += e.prob * double(e.site[0]);
      m1 += e.prob * double(e.site[1]);
      EXPECT_LE(e.steps, k);
      EXPECT_GE(e.steps, 1);
    }
    EXPECT_NEAR(mass, 1, 1e-14);
    EXPECT_NEAR(m0, 1, 1e-14);
    EXPECT_NEAR(m1, 1, 1e-14);
  }
  // SRW, k = 2: T = 2 with probability 1/2 and the walk stops at step 2 anyway
  const auto law = cover_exit_distribution(srw2(4), Site{0, 0}, 2);
  for (const auto& e : law) EXPECT_EQ(e.steps, 2);
}

TEST(CoverExit, AxisOffsetsMatchPathEnumeration) {
  const auto env = sample_iid(SiteLaw::elliptic_mixture(2, 0.1), Box::centered(2, 6), 4);
  const Site y{0, 1};
  for (int k : {1, 2, 3}) {
    // enumerate all 4^k direction sequences, stopping at T
    std::array<std::array<double, 2>, 2> acc{};
    std::vector<int> dirs(static_cast<std::size_t>(k));
    for (int code = 0; code < (1 << (2 * k)); ++code) {
      for (int i = 0; i < k; ++i) dirs[i] = (code >> (2 * i)) & 3;
      double prob = 1;
      Site x = y;
      int first[2] = {0, 0};
      int n = 0;
      for (; n < k; ++n) {
        prob *= env.prob(x, dirs[n]);
        const int axis = direction_axis(dirs[n], 2);
        if (first[axis] == 0) first[axis] = dirs[n] < 2 ? 1 : -1;
        x = x.step(dirs[n]);
        if (first[0] != 0 && first[1] != 0) break;
      }
      // sequences that stopped early are counted once, through their prefix
      bool canonical = true;
      for (int i = n + 1; i < k; ++i) canonical = canonical && dirs[i] == 0;
      if (!canonical || prob == 0) continue;
      for (int i = 0; i < 2; ++i) {
        const double w = first[i] == 1 ? 2.0 : (first[i] == 0 ? 1.0 : 0.0);
        for (int c = 0; c < 2; ++c) acc[i][c] += w * prob * double(x[c] - y[c]);
      }
    }
    const auto o = axis_offsets(env, y, k);
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(o[i][c], acc[i][c], 1e-14) << "k=" << k;
  }
}

TEST(CoverExit, SimpleRandomWalkDeterminant) {
  // k = 2: O_1 = (3/4, 0), O_2 = (0, 3/4)
  const auto o = axis_offsets(srw2(4), Site{0, 0}, 2);
  EXPECT_NEAR(o[0][0], 0.75, 1e-15);
  EXPECT_NEAR(o[0][1], 0.0, 1e-15);
  EXPECT_NEAR(offsets_determinant(o), 0.5625, 1e-15);
}

TEST(AbpChain, NonPositiveFieldIsVacuous) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(4, 2, 2));
  const auto u = make_abp_field(dom, [](const SpaceTimePoint& p) { return -1.0 - double(p.time); });
  const auto r = verify_abp_chain(srw2(10), u);
  EXPECT_LE(r.sup_u, 0);
  EXPECT_EQ(r.cone_lhs, 0.0);
  EXPECT_TRUE(r.cone_pass);
  EXPECT_TRUE(r.volume_pass);
}

TEST(AbpChain, RejectsPositiveBoundary) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(4, 2, 2));
  const auto u = make_abp_field(dom, [](const SpaceTimePoint&) { return 0.1; });
  EXPECT_THROW(verify_abp_chain(srw2(10), u), InvalidArgument);
}

TEST(AbpChain, RandomFieldsSimpleRandomWalk) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(6, 2, 2));
  const auto env = srw2(12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = verify_abp_chain(env, random_admissible_field(dom, seed));
    EXPECT_GT(r.sup_u, 0);
    EXPECT_GT(r.contact_count, 0u);
    EXPECT_EQ(r.unbounded_count, 0u);
    EXPECT_TRUE(r.cone_pass) << r.cone_lhs << " vs " << r.cone_rhs;
    EXPECT_TRUE(r.volume_pass) << r.min_volume_slack;
    for (const auto& c : r.volume_checks) EXPECT_LE(c.volume, c.parallelepiped_bound + 1e-9);
    EXPECT_TRUE(std::isfinite(r.abp_ratio));
  }
}

TEST(AbpChain, UniformAxisStillSatisfiesTheParallelepipedBound) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(6, 2, 2));
  const auto env = sample_iid(SiteLaw::uniform_axis(2), Box::centered(2, 12), 3);
  const auto r = verify_abp_chain(env, random_admissible_field(dom, 1));
  EXPECT_TRUE(r.cone_pass);
  for (const auto& c : r.volume_checks) EXPECT_LE(c.volume, c.parallelepiped_bound + 1e-9);
  const auto j = abp_report_json(r);
  EXPECT_TRUE(j.contains("volume_inequality"));
}

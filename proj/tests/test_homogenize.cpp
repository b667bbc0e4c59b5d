#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "rwre/homogenize.hpp"

using namespace rwre;

namespace {

Environment srw_env(int d, int half) {
  const Box box = Box::centered(d, half);
  return sample_iid(SiteLaw::simple_random_walk(d), box, 1);
}

Environment axis_env(int half, std::uint64_t seed) {
  return sample_iid(SiteLaw::uniform_axis(2), Box::centered(2, half), seed);
}

// Brute force over all (2d)^n paths.
Matrix path_enumeration_covariance(const Environment& env, const Site& x, int n) {
  const int d = env.dim();
  Matrix m(d, std::vector<double>(d, 0.0));
  long total = 1;
  for (int i = 0; i < n; ++i) total *= 2 * d;
  for (long code = 0; code < total; ++code) {
    long c = code;
    Site y = x;
    double w = 1;
    for (int s = 0; s < n; ++s) {
      const int k = static_cast<int>(c % (2 * d));
      c /= 2 * d;
      w *= env.kernel(y)[k];
      y = y.step(k);
    }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m[i][j] += w * static_cast<double>(y[i] - x[i]) * static_cast<double>(y[j] - x[j]);
  }
  for (auto& row : m)
    for (double& v : row) v /= n;
  return m;
}

}  // namespace

TEST(Covariance, SrwIsHalfIdentity) {
  const auto env = srw_env(2, 8);
  for (int n0 = 1; n0 <= 4; ++n0) {
    const auto c = estimate_covariance(env, Site::zero(2), n0);
    EXPECT_TRUE(c.exact);
    EXPECT_DOUBLE_EQ(c.matrix[0][0], 0.5);
    EXPECT_DOUBLE_EQ(c.matrix[1][1], 0.5);
    EXPECT_DOUBLE_EQ(c.matrix[0][1], 0.0);
  }
}

TEST(Covariance, OneDimensionalSrw) {
  const auto env = srw_env(1, 10);
  const auto c = estimate_covariance(env, Site::zero(1), 5);
  ASSERT_EQ(c.matrix.size(), 1u);
  EXPECT_DOUBLE_EQ(c.matrix[0][0], 1.0);
}

TEST(Covariance, UniformAxisTraceAndEnumeration) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const auto env = axis_env(8, seed);
    for (int n0 : {1, 3, 5}) {
      const auto c = estimate_covariance(env, Site::zero(2), n0);
      EXPECT_NEAR(c.trace(), 1.0, 1e-14);
      EXPECT_NEAR(c.matrix[0][1], c.matrix[1][0], 1e-15);
      const auto brute = path_enumeration_covariance(env, Site::zero(2), n0);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(c.matrix[i][j], brute[i][j], 1e-14);
    }
  }
}

TEST(Covariance, MonteCarloAgreesWithinErrors) {
  const auto env = srw_env(2, 40);
  const auto c = estimate_covariance(env, Site::zero(2), 20, true, 40000, 9);
  EXPECT_FALSE(c.exact);
  EXPECT_NEAR(c.trace(), 1.0, 5 * (c.standard_errors[0][0] + c.standard_errors[1][1]));
  EXPECT_NEAR(c.matrix[0][0], 0.5, 5 * c.standard_errors[0][0]);
  EXPECT_NEAR(c.matrix[0][1], 0.0, 5 * c.standard_errors[0][1]);
  const auto w4 = estimate_covariance(env, Site::zero(2), 20, true, 40000, 9, 4);
  EXPECT_EQ(w4.matrix, c.matrix);
}

TEST(Covariance, BoxExhausted) {
  const auto env = srw_env(2, 2);
  EXPECT_THROW(estimate_covariance(env, Site::zero(2), 4), BoxExhausted);
  EXPECT_THROW(estimate_covariance(env, Site::zero(2), 0), InvalidArgument);
}

TEST(ReferenceCaloric, QuadraticIdentity) {
  const auto f = reference_caloric(FieldKind::quadratic, {0.5, 0.5}, {0});
  const double x[2] = {0.3, -0.7};
  EXPECT_DOUBLE_EQ(f(x, 0.25), 0.09 - 0.125);
  EXPECT_EQ(f.residual(x, 0.25), 0.0);
}

TEST(ReferenceCaloric, ZeroRateExponentialIsOne) {
  const auto f = reference_caloric(FieldKind::exponential, {0.5, 0.5}, {0, 0});
  const double x[2] = {0.4, 0.9};
  EXPECT_EQ(f(x, 0.7), 1.0);
}

TEST(ReferenceCaloric, ExponentialResidualAndDerivatives) {
  const auto f = reference_caloric(FieldKind::exponential, {0.5, 0.5}, {1, 0});
  CounterRng rng(77);
  for (int n = 0; n < 100; ++n) {
    const double x[2] = {2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    const double t = rng.uniform();
    EXPECT_LT(std::abs(f.residual(x, t)), 1e-12);
    // the stored derivatives agree with central differences
    const double h = 1e-4;
    const double dt = (f(x, t + h) - f(x, t - h)) / (2 * h);
    EXPECT_NEAR(f.time_derivative(x, t), dt, 1e-6);
    for (int i = 0; i < 2; ++i) {
      double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
      xp[i] += h;
      xm[i] -= h;
      const double dxx = (f(xp, t) - 2 * f(x, t) + f(xm, t)) / (h * h);
      EXPECT_NEAR(f.second_derivative(x, t, i), dxx, 1e-5);
    }
  }
}

TEST(ReferenceCaloric, RejectsNonPositiveCovariance) {
  EXPECT_THROW(reference_caloric(FieldKind::quadratic, {0.5, 0.0}, {0}), InvalidArgument);
  EXPECT_THROW(reference_caloric(FieldKind::quadratic, {0.5, 0.5}, {2}), InvalidArgument);
}

TEST(HomogenizationError, SharpZeroForSrwQuadratic) {
  for (double r : {8.0, 16.0}) {
    const auto env = srw_env(2, static_cast<int>(r) + 2);
    for (int axis : {0, 1}) {
      const auto f = reference_caloric(FieldKind::quadratic, {0.5, 0.5}, {static_cast<double>(axis)});
      const auto e = homogenization_error(env, r, f);
      EXPECT_LE(e.sup_error, 1e-12);
      EXPECT_GT(e.points, 0);
    }
    const auto lin = reference_caloric(FieldKind::coordinate, {0.5, 0.5}, {1});
    EXPECT_LE(homogenization_error(env, r, lin).sup_error, 1e-12);
  }
}

TEST(HomogenizationError, ConstantIsZeroOnAnyEnvironment) {
  const auto env = axis_env(10, 12);
  const auto f = reference_caloric(FieldKind::constant, {0.5, 0.5}, {3.5});
  EXPECT_LE(homogenization_error(env, 8, f).sup_error, 1e-12);
}

TEST(HomogenizationError, ExponentialIsPositiveOnRandomAxes) {
  const auto env = axis_env(10, 12);
  const auto f = reference_caloric(FieldKind::exponential, {0.5, 0.5}, {1, 0});
  const auto e = homogenization_error(env, 8, f);
  EXPECT_GT(e.sup_error, 1e-6);
  EXPECT_LT(e.sup_error, 1.0);
  EXPECT_THROW(homogenization_error(env, 1.5, f), InvalidArgument);
}

TEST(ExitCells, QuadrantsCoverAndRotate) {
  const auto part = quadrant_partition();
  ASSERT_EQ(part.size(), 5u);
  const double pi = std::numbers::pi;
  for (double a : {-pi, -pi / 2, 0.0, pi / 2, pi, 0.3, -2.0}) {
    int hits = 0;
    for (const auto& c : part) hits += c.contains_lateral(a, 0.5);
    EXPECT_EQ(hits, 1) << a;
  }
  EXPECT_TRUE(part[3].contains_lateral(pi / 2, 1.0));
  EXPECT_TRUE(part[0].contains_lateral(pi, 0.0));
  EXPECT_TRUE(part[4].contains_top(0.0, 0.0));
  EXPECT_FALSE(part[4].contains_lateral(0.0, 1.0));
}

TEST(BmExit, FullBoundaryIsOne) {
  const ExitPartition all{whole_lateral_cell(), whole_top_cell()};
  const std::vector<ContinuumPoint> probes{{0, 0, 0}, {0.5, 0.2, 0.3}, {-0.9, 0.1, 0.9}, {0.2, 0.2, 1.0}};
  const auto f = bm_exit_probability({0.5, 0.5}, all, 32, probes);
  for (std::size_t p = 0; p < probes.size(); ++p) EXPECT_NEAR(f.probe_sum(p), 1.0, 1e-12);
  const auto one = bm_exit_probability({0.5, 0.5}, {whole_boundary_cell()}, 32, probes);
  for (std::size_t p = 0; p < probes.size(); ++p) EXPECT_NEAR(one.at(p, 0), 1.0, 1e-12);
}

TEST(BmExit, MirroredHalvesAreEqual) {
  const double pi = std::numbers::pi;
  ExitCell right{"right", false, -pi / 2, pi / 2, 0, 1, 0, 1};
  ExitCell left{"left", false, pi / 2, -pi / 2, 0, 1, 0, 1};
  const ExitPartition part{right, left, whole_top_cell()};
  std::vector<ContinuumPoint> probes;
  for (double s : {0.0, 0.25, 0.5, 0.75, 0.9}) probes.push_back({0, 0, s});
  probes.push_back({0, 0.3, 0.4});
  const auto f = bm_exit_probability({0.5, 0.5}, part, 64, probes);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    EXPECT_NEAR(f.at(p, 0), f.at(p, 1), 1e-10);
    EXPECT_NEAR(f.at(p, 0) + f.at(p, 1), 1.0 - f.at(p, 2), 1e-10);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_GE(f.at(p, c), 0.0);
      EXPECT_LE(f.at(p, c), 1.0);
    }
  }
  // starting later leaves less time to reach the side
  EXPECT_GT(f.at(0, 0), f.at(3, 0));
}

TEST(BmExit, TopExitMatchesOneDimensionalSeries) {
  // P(no lateral exit before time 1) for BM with covariance I/2 in the unit
  // disk: sum_k 2/(j_k J_1(j_k)) exp(-j_k^2 / 4) over zeros j_k of J_0.
  const double zeros[] = {2.404825557695773, 5.520078110286311, 8.653727912911013, 11.79153443901428};
  const double j1[] = {0.5191474972894669, -0.3402648065731722, 0.2714522999283819, -0.2324598310079220};
  double series = 0;
  for (int k = 0; k < 4; ++k) series += 2.0 / (zeros[k] * j1[k]) * std::exp(-zeros[k] * zeros[k] / 4);
  const ExitPartition part{whole_lateral_cell(), whole_top_cell()};
  const auto f = bm_exit_probability({0.5, 0.5}, part, 128, {{0, 0, 0}});
  EXPECT_NEAR(f.at(0, 1), series, 5e-3);
}

TEST(BmExit, SelfConvergence) {
  const auto part = quadrant_partition();
  const std::vector<ContinuumPoint> probes{{0, 0, 0}, {0.3, -0.2, 0.1}, {-0.4, 0.4, 0.5}, {0.1, 0.6, 0.7}};
  const auto coarse = bm_exit_probability({0.5, 0.5}, part, 64, probes);
  const auto fine = bm_exit_probability({0.5, 0.5}, part, 128, probes);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    EXPECT_NEAR(coarse.probe_sum(p), 1.0, 1e-2);
    for (std::size_t c = 0; c < part.size(); ++c) EXPECT_LT(std::abs(coarse.at(p, c) - fine.at(p, c)), 5e-3);
  }
}

TEST(ExitCompare, SingleCellHasNoDiscrepancy) {
  const auto env = srw_env(2, 8);
  const auto cmp = exit_compare(env, 6, 0.5, {whole_boundary_cell()}, {0.5, 0.5}, 32);
  EXPECT_LE(cmp.sup, 1e-12);
  for (const auto& r : cmp.rows) EXPECT_NEAR(r.phi, 1.0, 1e-12);
  // a side-only cell misses the top face and does not cover the boundary
  const ExitPartition side_only{whole_lateral_cell()};
  EXPECT_THROW(exit_compare(env, 6, 0.5, side_only, {0.5, 0.5}, 32), InvalidArgument);
}

TEST(ExitCompare, RotatedQuadrantsHaveEqualMass) {
  const auto env = srw_env(2, 12);
  const Cylinder c(SpaceTimePoint{Site::zero(2), 0}, 8);
  const auto cells = lattice_cells(quadrant_partition(), 8);
  const auto m = exit_distribution_exact(env, SpaceTimePoint{Site::zero(2), 0}, c, cells);
  for (int q = 1; q < 4; ++q) EXPECT_NEAR(m.masses[q], m.masses[0], 1e-14);
  EXPECT_NEAR(m.total(), 1.0, 1e-12);
  // rotation by a quarter turn moves the start and the cell index together
  const auto a = exit_distribution_exact(env, SpaceTimePoint{Site{2, 1}, 3}, c, cells);
  const auto b = exit_distribution_exact(env, SpaceTimePoint{Site{-1, 2}, 3}, c, cells);
  for (int q = 0; q < 4; ++q) EXPECT_NEAR(a.masses[q], b.masses[(q + 1) % 4], 1e-14);
  EXPECT_NEAR(a.masses[4], b.masses[4], 1e-14);
}

TEST(ExitCompare, DiscrepancyShrinksWithRadius) {
  const auto part = quadrant_partition();
  const auto small = exit_compare(srw_env(2, 10), 8, 0.5, part, {0.5, 0.5}, 64);
  const auto large = exit_compare(srw_env(2, 18), 16, 0.5, part, {0.5, 0.5}, 64);
  EXPECT_LT(large.sup, small.sup);
  // compare probe points common to both scales: (x, t) at R = 8 against (2x, 4t) at R = 16
  std::map<std::pair<SpaceTimePoint, std::size_t>, double> large_gap;
  for (const auto& r : large.rows) large_gap[{r.probe, r.cell}] = r.gap();
  int better = 0, total = 0;
  for (const auto& r : small.rows) {
    const SpaceTimePoint q{Site{2 * r.probe.site[0], 2 * r.probe.site[1]}, 4 * r.probe.time};
    const auto it = large_gap.find({q, r.cell});
    if (it == large_gap.end()) continue;
    ++total;
    better += it->second < r.gap();
  }
  ASSERT_GT(total, 0);
  EXPECT_GT(2 * better, total);
  std::ostringstream os;
  write_exit_compare_csv(os, small);
  EXPECT_EQ(os.str().substr(0, 30), "x1,x2,t,cell,phi,chi,abs_diff\n");
}

TEST(Harnack, ConstantDataRatioIsOne) {
  EXPECT_NEAR(constant_data_ratio({0.5, 0.5}, 2.0, 32), 1.0, 1e-12);
  EXPECT_NEAR(constant_data_ratio({0.3, 0.7}, 1.9, 32), 1.0, 1e-12);
  EXPECT_THROW(constant_data_ratio({0.5, 0.5}, 1.7, 32), InvalidArgument);
}

TEST(Harnack, MonotoneUnderMeshRefinement) {
  const auto h = bm_harnack_constant({0.5, 0.5}, 2.0, 32, 3, 128);
  ASSERT_EQ(h.level_ratio.size(), 3u);
  EXPECT_GE(h.level_ratio[0], 1.0);
  for (std::size_t i = 1; i < h.level_ratio.size(); ++i)
    EXPECT_GE(h.level_ratio[i], h.level_ratio[i - 1] * (1 - 1e-12));
  EXPECT_EQ(h.mesh_cells[0], 8 * 4 + 8);
  EXPECT_DOUBLE_EQ(h.estimate, h.level_ratio.back());
  EXPECT_FALSE(h.argmax_cell.empty());
  EXPECT_EQ(harnack_json(h)["kind"], "lower-bound estimate");
}

TEST(Harnack, GridSelfConvergence) {
  const auto coarse = bm_harnack_constant({0.5, 0.5}, 2.0, 64, 1, 256);
  const auto fine = bm_harnack_constant({0.5, 0.5}, 2.0, 128, 1, 512);
  EXPECT_LT(std::abs(coarse.estimate - fine.estimate), 0.1 * fine.estimate);
}

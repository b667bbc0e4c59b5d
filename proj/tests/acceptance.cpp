// Acceptance run: criteria 1-10 once with one worker, then again with 4 and 8
// workers to compare the CSV each criterion emits (criterion 11).
// Prints one PASS/FAIL line per criterion; exit status 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/abp.hpp"
#include "rwre/caloric.hpp"
#include "rwre/environment.hpp"
#include "rwre/experiments.hpp"
#include "rwre/homogenize.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  std::string csv;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1. Parity datum on d = 1: the solution reproduces the datum exactly.
Outcome parity_fixture(int) {
  const auto env = sample_iid(SiteLaw::simple_random_walk(1), Box::centered(1, 8), 1);
  const Cylinder c(SpaceTimePoint{Site::zero(1), 0}, 6);
  auto f = [](const SpaceTimePoint& p) { return parity_of(p) == Parity::odd ? 1.0 : 0.0; };
  const auto u = solve_backward(env, ParabolicDomain::cylinder(c), f);
  std::int64_t mismatches = 0, points = 0;
  std::ostringstream csv;
  write_field_csv(csv, u);
  const auto s = cylinder_sets(c);
  for (const auto* set : {&s.interior, &s.parabolic_boundary})
    for (const auto& p : *set) {
      ++points;
      mismatches += u(p) != f(p);
    }
  return {mismatches == 0, std::to_string(points) + " points, " + std::to_string(mismatches) + " mismatches",
          csv.str()};
}

// 2. Optional stopping: Monte Carlo mean of the datum at exit against u(start).
Outcome optional_stopping(int workers) {
  const double radius = 8;
  const std::int64_t samples = 100000;
  const std::vector<int> data_ids = {1, 5, 9, 12, 16};
  const auto fam = standard_data_family(2, radius);
  const Cylinder c(SpaceTimePoint{Site::zero(2), 0}, radius);
  const SpaceTimePoint start{Site::zero(2), 0};
  double worst = 0;
  std::ostringstream csv;
  csv << "seed,datum_id,exact,mc_mean,std_error,z\n";
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto env = sample_iid(SiteLaw::uniform_axis(2), experiment_box(2, radius), seed);
    const auto exits = exit_samples(env, start, c, samples, seed, workers);
    for (int id : data_ids) {
      const double exact = solve_on_cylinder(env, radius, fam[id])(start);
      Moments m;
      for (const auto& p : exits) m.add(fam[id].g(p));
      const double z = std::abs(m.mean() - exact) / m.std_error();
      worst = std::max(worst, z);
      csv << seed << ',' << id << ',' << format_value(exact) << ',' << format_value(m.mean()) << ','
          << format_value(m.std_error()) << ',' << format_value(z) << '\n';
    }
  }
  return {worst <= 4, fmt("50 checks, max |mean - u(start)| = %.3f standard errors (limit 4)", worst), csv.str()};
}

// 3. Exact exit law against 10^6 walks on the five-cell partition.
Outcome exit_measures(int workers) {
  const double radius = 8;
  const std::int64_t samples = 1000000;
  const Cylinder c(SpaceTimePoint{Site::zero(2), 0}, radius);
  const auto cells = lattice_cells(quadrant_partition(), radius);
  const SpaceTimePoint start{Site::zero(2), 0};
  double worst = 0;
  std::ostringstream csv;
  csv << "seed,cell,exact,monte_carlo\n";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto env = sample_iid(SiteLaw::uniform_axis(2), experiment_box(2, radius), seed);
    const auto exact = exit_distribution_exact(env, start, c, cells);
    const auto pts = exit_samples(env, start, c, samples, seed, workers);
    std::vector<double> mc(cells.size(), 0.0);
    for (const auto& p : pts)
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].contains(p)) {
          mc[i] += 1;
          break;
        }
    double tv = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      mc[i] /= static_cast<double>(samples);
      tv += 0.5 * std::abs(mc[i] - exact.masses[i]);
      csv << seed << ',' << exact.labels[i] << ',' << format_value(exact.masses[i]) << ',' << format_value(mc[i])
          << '\n';
    }
    worst = std::max(worst, tv);
  }
  return {worst <= 0.01, fmt("5 seeds, max TV = %.5f (limit 0.01)", worst), csv.str()};
}

// 4. Quadratic data on the simple random walk is reproduced exactly.
Outcome homogenization_sharp_zero(int) {
  const std::vector<double> a = {0.5, 0.5};
  double worst = 0;
  std::ostringstream csv;
  csv << "R,axis,sup_error\n";
  for (double radius : {8.0, 16.0, 32.0}) {
    const auto env = sample_iid(SiteLaw::simple_random_walk(2), experiment_box(2, radius), 1);
    for (int axis : {0, 1}) {
      const auto f = reference_caloric(FieldKind::quadratic, a, {static_cast<double>(axis)});
      const double e = homogenization_error(env, radius, f).sup_error;
      worst = std::max(worst, e);
      csv << format_value(radius) << ',' << axis << ',' << format_value(e) << '\n';
    }
  }
  return {worst <= 1e-12, fmt("max sup error %.3g over R = 8, 16, 32 (limit 1e-12)", worst), csv.str()};
}

// 5. Median homogenization error decreases from R = 8 to R = 32.
Outcome homogenization_decay(int workers) {
  const auto f = reference_caloric(FieldKind::exponential, {0.5, 0.5}, {1.0, 0.0});
  const int seeds = 50;
  std::vector<double> e8(seeds), e32(seeds);
  parallel_for(seeds, workers, [&](std::int64_t i) {
    const auto env = sample_iid(SiteLaw::uniform_axis(2), experiment_box(2, 32), static_cast<std::uint64_t>(i + 1));
    e8[i] = homogenization_error(env, 8, f).sup_error;
    e32[i] = homogenization_error(env, 32, f).sup_error;
  });
  std::ostringstream csv;
  csv << "R,seed,sup_error\n";
  for (int i = 0; i < seeds; ++i) csv << "8," << i + 1 << ',' << format_value(e8[i]) << '\n';
  for (int i = 0; i < seeds; ++i) csv << "32," << i + 1 << ',' << format_value(e32[i]) << '\n';
  const double m8 = median(e8), m32 = median(e32);
  return {m32 < m8, fmt("median sup error R=8: %.5f, R=32: %.5f", m8, m32), csv.str()};
}

// 6. Both geometric inequalities on 100 random admissible fields.
Outcome abp_inequalities(int workers) {
  const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(6, 2, 2));
  const auto env = sample_iid(SiteLaw::simple_random_walk(2), Box::centered(2, 14), 1);
  double worst = std::numeric_limits<double>::infinity();
  std::ostringstream csv;
  csv << "field,cone_slack,min_volume_slack,contact_points\n";
  for (std::uint64_t f = 0; f < 100; ++f) {
    const auto r = verify_abp_chain(env, random_admissible_field(dom, stream_key(6, f)), workers);
    worst = std::min({worst, r.cone_slack, r.min_volume_slack});
    csv << f << ',' << format_value(r.cone_slack) << ',' << format_value(r.min_volume_slack) << ','
        << r.contact_count << '\n';
  }
  return {worst >= -kAbpSlack, fmt("100 fields, min slack %.4g (limit -1e-9)", worst), csv.str()};
}

// 7. Counterexample blow-up against the filtered ensemble.
Outcome counterexample(int workers) {
  const auto ce = counterexample_experiment(3, 2.0, 0.1);
  ExperimentConfig cfg;
  cfg.law = "uniform-axis";
  cfg.radii = {3};
  cfg.seed = 1;
  cfg.seed_count = 50;
  cfg.workers = workers;
  const auto rep = phi_experiment(cfg);
  const double ratio = ce.ratio();
  const bool growth = ce.growth_even || ce.growth_odd;
  const bool ok = ratio >= 512 && !growth && ce.sink_all_one && rep.all_filtered_finite &&
                  rep.filtered_count > 0 && 10 * rep.max_filtered_ratio <= ratio;
  std::ostringstream csv;
  write_phi_csv(csv, rep);
  csv << "counterexample," << format_value(ce.even.ratio) << ',' << format_value(ce.odd.ratio) << '\n';
  return {ok,
          fmt("counterexample ratio %.4g (>= 512), ensemble max filtered ratio %.4g, factor %.4g (>= 10)", ratio,
              rep.max_filtered_ratio, ratio / rep.max_filtered_ratio) +
              (growth ? ", growth condition HOLDS" : ", growth condition fails") +
              (ce.sink_all_one ? ", sink == 1" : ", sink != 1"),
          csv.str()};
}

// 8. Oscillation contraction over the 50 x 20 ensemble.
Outcome oscillation_contraction(int workers) {
  ExperimentConfig cfg;
  cfg.law = "uniform-axis";
  cfg.radii = {8};
  cfg.zeta = 2;
  cfg.seed = 1;
  cfg.seed_count = 50;
  cfg.workers = workers;
  const auto rep = oscillation_experiment(cfg);
  std::ostringstream csv;
  write_osc_csv(csv, rep);
  return {rep.max_ratio < 1,
          fmt("max osc ratio %.4f (limit < 1), p90 %.4f, %.0f rows excluded", rep.max_ratio, rep.p90,
              static_cast<double>(rep.excluded)),
          csv.str()};
}

// 9. Exact TV against exhaustive path enumeration on d = 1.
void enumerate(const Cylinder& c, SpaceTimePoint p, double w, std::map<SpaceTimePoint, double>& out) {
  if (!c.in_interior(p)) {
    out[p] += w;
    return;
  }
  for (int k : {0, 1}) enumerate(c, SpaceTimePoint{p.site.step(k), p.time + 1}, 0.5 * w, out);
}

Outcome coupling_tv(int) {
  const auto env = sample_iid(SiteLaw::simple_random_walk(1), Box::centered(1, 8), 1);
  CounterRng rng(stream_key(9, 0));
  double worst = 0;
  std::ostringstream csv;
  csv << "R,x,y,t,tv_exact,tv_paths\n";
  const double radii[] = {2.0, 2.5, 3.0, 3.4};  // heights 4, 7, 9, 12
  for (int i = 0; i < 20; ++i) {
    const double radius = radii[i % 4];
    const Cylinder c(SpaceTimePoint{Site::zero(1), 0}, radius);
    const auto ball = c.ball();
    const auto pick = [&] { return ball[static_cast<std::size_t>(rng.next_u64() % ball.size())][0]; };
    std::int64_t x = pick(), y = pick();
    while ((x - y) % 2 != 0) y = pick();
    const std::int64_t t = static_cast<std::int64_t>(rng.next_u64() % 2);
    const SpaceTimePoint px{Site{x}, t}, py{Site{y}, t};
    std::map<SpaceTimePoint, double> ex, ey;
    enumerate(c, px, 1.0, ex);
    enumerate(c, py, 1.0, ey);
    const double brute = total_variation(ex, ey);
    const double exact = coupling_success(env, px, py, c).tv;
    worst = std::max(worst, std::abs(brute - exact));
    csv << format_value(radius) << ',' << x << ',' << y << ',' << t << ',' << format_value(exact) << ','
        << format_value(brute) << '\n';
  }
  return {worst <= 1e-12, fmt("20 instances, max |TV_dp - TV_paths| = %.3g (limit 1e-12)", worst), csv.str()};
}

// 10. Visit counts: saturation in d = 3, growth in d = 2, oracle agreement.
Outcome transience(int workers) {
  const std::int64_t samples = 10000;
  const auto r3 = transience_experiment("simple-random-walk", 3, {100000, 1000000}, samples, 10, workers);
  const auto r2 = transience_experiment("simple-random-walk", 2, {100000, 1000000}, samples, 20, workers);
  const auto& c3 = r3.checkpoints[1];
  const auto& c2 = r2.checkpoints[1];
  const double oracle = srw3_expected_visits(1e6);
  const double z = std::abs(c3.mean - oracle) / c3.std_error;
  std::ostringstream csv;
  write_transience_csv(csv, r3);
  write_transience_csv(csv, r2);
  const bool ok = c3.delta < 0.01 && c2.delta > 0.05 && z <= 3;
  return {ok,
          fmt("d=3 delta %.5f (< 0.01), d=2 delta %.4f (> 0.05), ", c3.delta, c2.delta) +
              fmt("d=3 mean %.5f vs oracle %.5f: %.2f standard errors (limit 3)", c3.mean, oracle, z),
          csv.str()};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome(int)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "parity fixture", 1, parity_fixture},
      {2, "optional stopping", 120, optional_stopping},
      {3, "exact vs Monte Carlo exit law", 300, exit_measures},
      {4, "homogenization sharp zero", 30, homogenization_sharp_zero},
      {5, "homogenization decay", 600, homogenization_decay},
      {6, "geometric inequalities", 300, abp_inequalities},
      {7, "counterexample blow-up", 120, counterexample},
      {8, "oscillation contraction", 600, oscillation_contraction},
      {9, "coupling TV vs path enumeration", 60, coupling_tv},
      {10, "transience signature", 900, transience},
  };
  bool all = true;
  std::vector<std::string> reference;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(1);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what(), ""};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all = all && pass;
    reference.push_back(o.csv);
    std::printf("%s criterion %d (%s): %s; %.1f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }

  std::vector<std::string> diffs;
  for (int workers : {4, 8})
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      std::string csv;
      try {
        csv = criteria[i].run(workers).csv;
      } catch (const std::exception& e) {
        csv = std::string("threw: ") + e.what();
      }
      if (csv != reference[i] || csv.empty())
        diffs.push_back("criterion " + std::to_string(criteria[i].id) + " @ " + std::to_string(workers) + " workers");
    }
  std::string detail = "CSV outputs of criteria 1-10 byte-identical across 1, 4 and 8 workers";
  if (!diffs.empty()) {
    detail = "differences:";
    for (const auto& d : diffs) detail += " [" + d + "]";
  }
  std::printf("%s criterion 11 (determinism): %s\n", diffs.empty() ? "PASS" : "FAIL", detail.c_str());
  all = all && diffs.empty();
  return all ? 0 : 1;
}

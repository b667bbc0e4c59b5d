#pragma once

// Ensemble studies built on the solvers: Harnack ratios under the growth
// filter, oscillation contraction, exact coupling success, the sink
// counterexample and visit counts for transience.
//
// Every row depends only on (config, seed); seeds fan out over workers into
// fixed slots and rows are assembled in (seed, R, datum, parity) order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/caloric.hpp"
#include "rwre/environment.hpp"
#include "rwre/homogenize.hpp"
#include "rwre/lattice.hpp"
#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre {

inline constexpr int kReportVersion = 1;

inline SiteLaw parse_law(const std::string& name, int d, double eta = 0.1) {
  if (name == "uniform-axis") return SiteLaw::uniform_axis(d);
  if (name == "simple-random-walk" || name == "srw") return SiteLaw::simple_random_walk(d);
  if (name == "elliptic-mixture") return SiteLaw::elliptic_mixture(d, eta);
  throw InvalidArgument("unknown law '" + name + "'");
}

struct ExperimentConfig {
  std::string law = "uniform-axis";
  int d = 2;
  double eta = 0.1;  // elliptic-mixture only
  std::vector<double> radii{8};
  std::uint64_t seed = 1;
  int seed_count = 1;
  double epsilon = 0.1;
  double xi = 0.1;
  double w = 2.0;
  double zeta = 2.0;
  int data_count = 20;
  int harnack_grid = 0;  // > 0 adds the continuum Harnack bound to PHI reports
  int workers = 1;

  void validate() const {
    require(d >= 1 && d <= kMaxDim, "dimension out of range");
    parse_law(law, d, eta).validate();
    require(!radii.empty(), "at least one radius is required");
    for (double r : radii) require(r >= 2, "radii must be at least 2");
    require(seed_count >= 1, "seed_count must be positive");
    require(epsilon > 0 && epsilon < 2 - std::sqrt(3.0), "epsilon must lie in (0, 2 - sqrt 3)");
    require(xi > 0 && xi < 0.2, "xi must lie in (0, 1/5)");
    require(w > 1, "w must exceed 1");
    require(zeta > 1, "zeta must exceed 1");
    require(data_count >= 1 && data_count <= 20, "data_count must lie in [1, 20]");
    require(harnack_grid == 0 || harnack_grid >= 32, "harnack_grid must be 0 or at least 32");
    require(workers >= 1, "workers must be positive");
  }
  SiteLaw site_law() const { return parse_law(law, d, eta); }
  std::uint64_t seed_at(int i) const { return seed + static_cast<std::uint64_t>(i); }
  double max_radius() const { return *std::max_element(radii.begin(), radii.end()); }
};

inline nlohmann::json config_json(const ExperimentConfig& c) {
  return {{"law", c.law},         {"d", c.d},           {"eta", c.eta},     {"radii", c.radii},
          {"seed", c.seed},       {"seed_count", c.seed_count}, {"epsilon", c.epsilon}, {"xi", c.xi},
          {"w", c.w},             {"zeta", c.zeta},     {"data_count", c.data_count},
          {"harnack_grid", c.harnack_grid}};
}

/// Reads the fields present in `j` over the defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  require(j.is_object(), "experiment config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "law") c.law = v.get<std::string>();
    else if (key == "d") c.d = v.get<int>();
    else if (key == "eta") c.eta = v.get<double>();
    else if (key == "radii") c.radii = v.get<std::vector<double>>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "seed_count") c.seed_count = v.get<int>();
    else if (key == "epsilon") c.epsilon = v.get<double>();
    else if (key == "xi") c.xi = v.get<double>();
    else if (key == "w") c.w = v.get<double>();
    else if (key == "zeta") c.zeta = v.get<double>();
    else if (key == "data_count") c.data_count = v.get<int>();
    else if (key == "harnack_grid") c.harnack_grid = v.get<int>();
    else if (key == "workers") c.workers = v.get<int>();
    else throw InvalidArgument("unknown experiment key '" + key + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Boundary data family.

/// Non-negative boundary datum on the parabolic boundary of a cylinder of
/// radius `outer` about the origin, in coordinates relative to its origin.
struct Datum {
  int id = 0;
  std::string name;
  std::function<double(const SpaceTimePoint&)> g;
};

/// Twenty data: the constant, eight boundary-cell indicators, six products of
/// coordinate bumps and five exponentials.
inline std::vector<Datum> standard_data_family(int d, double outer) {
  const std::int64_t height = ceil_radius_sq(outer);
  const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, outer);
  auto lateral = [c](const SpaceTimePoint& p) { return !c.in_spatial_ball(p.site); };
  const int a1 = 1 % d;
  std::vector<Datum> out;
  auto add = [&](std::string name, std::function<double(const SpaceTimePoint&)> g) {
    out.push_back({static_cast<int>(out.size()), std::move(name), std::move(g)});
  };
  add("constant", [](const SpaceTimePoint&) { return 1.0; });
  add("side_x0_pos", [=](const SpaceTimePoint& p) { return lateral(p) && p.site[0] > 0 ? 1.0 : 0.0; });
  add("side_x0_neg", [=](const SpaceTimePoint& p) { return lateral(p) && p.site[0] < 0 ? 1.0 : 0.0; });
  add("side_x1_pos", [=](const SpaceTimePoint& p) { return lateral(p) && p.site[a1] > 0 ? 1.0 : 0.0; });
  add("side_x1_neg", [=](const SpaceTimePoint& p) { return lateral(p) && p.site[a1] < 0 ? 1.0 : 0.0; });
  add("top", [=](const SpaceTimePoint& p) { return lateral(p) ? 0.0 : 1.0; });
  add("top_x0_pos", [=](const SpaceTimePoint& p) { return !lateral(p) && p.site[0] > 0 ? 1.0 : 0.0; });
  add("side_early", [=](const SpaceTimePoint& p) { return lateral(p) && 2 * p.time < height ? 1.0 : 0.0; });
  add("side_late", [=](const SpaceTimePoint& p) { return lateral(p) && 2 * p.time >= height ? 1.0 : 0.0; });
  for (int k = 0; k < 6; ++k) {
    std::vector<double> centre(d);
    for (int i = 0; i < d; ++i) centre[i] = 0.5 * std::cos(2 * std::numbers::pi * k / 6 + i);
    add("bump" + std::to_string(k), [=](const SpaceTimePoint& p) {
      double v = 1;
      for (int i = 0; i < d; ++i)
        v *= 1.25 + std::cos(std::numbers::pi * (static_cast<double>(p.site[i]) / outer - centre[i]));
      return v;
    });
  }
  for (int k = 0; k < 5; ++k) {
    std::vector<double> lambda(d);
    for (int i = 0; i < d; ++i) lambda[i] = (1.0 + 0.5 * k) * std::cos(2 * std::numbers::pi * k / 5 + i * 1.3);
    add("exp" + std::to_string(k), [=](const SpaceTimePoint& p) {
      double s = 0;
      for (int i = 0; i < d; ++i) s += lambda[i] * static_cast<double>(p.site[i]) / outer;
      return std::exp(s);
    });
  }
  return out;
}

/// Solves the datum on the closed cylinder of radius `outer` about (0, 0).
inline CaloricField solve_on_cylinder(const Environment& env, double outer, const Datum& datum) {
  const Cylinder c(SpaceTimePoint{Site::zero(env.dim()), 0}, outer);
  return solve_backward(env, ParabolicDomain::cylinder(c), datum.g);
}

/// Environment box holding every cylinder of radius up to `outer` about 0.
inline Box experiment_box(int d, double outer) {
  return Box::centered(d, static_cast<std::int64_t>(std::ceil(outer)) + 1);
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

// ---------------------------------------------------------------------------
// Harnack ratios under the growth filter.

struct PhiRow {
  double radius = 0;
  std::uint64_t seed = 0;
  int datum_id = 0;
  std::string datum;
  Parity parity = Parity::even;
  double max_upper = 0;
  double min_lower = 0;
  double ratio = 0;
  bool filtered = false;  // passes the growth condition
};

struct PhiReport {
  ExperimentConfig config;
  std::vector<PhiRow> rows;
  std::int64_t filtered_count = 0;
  std::int64_t rejected_count = 0;
  double max_filtered_ratio = 0;
  bool all_filtered_finite = true;
  std::optional<HarnackEstimate> harnack;
  std::optional<double> bound;  // (1 + 3 eps) H_{2 - eps} / (1 - eps)^2
};

/// Ratio and filter verdict of one solved field for one parity.
inline PhiRow phi_row(const CaloricField& u, double radius, double w, double xi, Parity parity) {
  PhiRow row;
  row.radius = radius;
  row.parity = parity;
  const auto h = harnack_ratio(u, radius, parity);
  row.max_upper = h.max_upper;
  row.min_lower = h.min_lower;
  row.ratio = h.ratio;
  row.filtered = growth_condition_check(u, radius, w, xi, parity);
  return row;
}

inline void finish_phi(PhiReport& rep) {
  for (const auto& r : rep.rows) {
    if (!r.filtered) {
      ++rep.rejected_count;
      continue;
    }
    ++rep.filtered_count;
    if (!std::isfinite(r.ratio)) rep.all_filtered_finite = false;
    rep.max_filtered_ratio = std::max(rep.max_filtered_ratio, r.ratio);
  }
}

inline PhiReport phi_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const SiteLaw law = cfg.site_law();
  const Box box = experiment_box(cfg.d, 2 * cfg.max_radius());
  std::vector<std::vector<PhiRow>> slots(cfg.seed_count);
  parallel_for(cfg.seed_count, cfg.workers, [&](std::int64_t s) {
    const std::uint64_t seed = cfg.seed_at(static_cast<int>(s));
    const Environment env = sample_iid(law, box, seed);
    for (double r : cfg.radii) {
      const auto data = standard_data_family(cfg.d, 2 * r);
      for (int k = 0; k < cfg.data_count; ++k) {
        const auto u = solve_on_cylinder(env, 2 * r, data[k]);
        for (Parity p : {Parity::even, Parity::odd}) {
          PhiRow row = phi_row(u, r, cfg.w, cfg.xi, p);
          row.seed = seed;
          row.datum_id = data[k].id;
          row.datum = data[k].name;
          slots[s].push_back(row);
        }
      }
    }
  });
  PhiReport rep;
  rep.config = cfg;
  for (auto& s : slots) rep.rows.insert(rep.rows.end(), s.begin(), s.end());
  finish_phi(rep);
  if (cfg.harnack_grid > 0) {
    const std::vector<double> diag(cfg.d, 1.0 / cfg.d);
    rep.harnack = bm_harnack_constant(diag, 2 - cfg.epsilon, cfg.harnack_grid, 1);
    const double e = cfg.epsilon;
    rep.bound = (1 + 3 * e) * rep.harnack->estimate / ((1 - e) * (1 - e));
  }
  return rep;
}

inline void write_phi_csv(std::ostream& os, const PhiReport& rep) {
  os << "R,seed,datum_id,parity,ratio,filtered\n";
  for (const auto& r : rep.rows)
    os << format_value(r.radius) << ',' << r.seed << ',' << r.datum_id << ',' << parity_name(r.parity) << ','
       << format_value(r.ratio) << ',' << (r.filtered ? 1 : 0) << '\n';
}

inline nlohmann::json phi_summary_json(const PhiReport& rep) {
  std::vector<double> ratios;
  for (const auto& r : rep.rows)
    if (r.filtered) ratios.push_back(r.ratio);
  nlohmann::json j = {{"version", kReportVersion},
                      {"experiment", "phi"},
                      {"config", config_json(rep.config)},
                      {"rows", rep.rows.size()},
                      {"filtered", rep.filtered_count},
                      {"rejected", rep.rejected_count},
                      {"all_filtered_finite", rep.all_filtered_finite},
                      {"max_filtered_ratio", rep.max_filtered_ratio},
                      {"median_filtered_ratio", ratios.empty() ? 0.0 : median(ratios)}};
  if (rep.bound) {
    j["harnack"] = harnack_json(*rep.harnack);
    j["bound"] = *rep.bound;
    j["bound_note"] = "reported only; the continuum constant is a lower-bound estimate";
  }
  return j;
}

// ---------------------------------------------------------------------------
// Oscillation contraction.

struct OscRow {
  double radius = 0;
  std::uint64_t seed = 0;
  int datum_id = 0;
  Parity parity = Parity::even;
  double inner = 0;  // osc over Theta^p(K_R)
  double outer = 0;  // osc over Theta^p(K_{zeta R})
  double ratio = 0;
  bool excluded = false;  // zero denominator
};

struct OscReport {
  ExperimentConfig config;
  std::vector<OscRow> rows;
  std::int64_t excluded = 0;
  double max_ratio = 0;
  double p50 = 0, p90 = 0, p99 = 0;
};

/// Interior points of K_rho(0) with the given parity.
inline std::vector<SpaceTimePoint> parity_interior(int d, double rho, Parity p) {
  const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, rho);
  std::vector<SpaceTimePoint> out;
  for (const Site& x : c.ball())
    for (std::int64_t t = 0; t < c.height(); ++t) {
      const SpaceTimePoint q{x, t};
      if (parity_of(q) == p) out.push_back(q);
    }
  return out;
}

/// osc over Theta^p(K_R) against osc over Theta^p(K_{zeta R}) for a field
/// solved on the closed cylinder of radius zeta R.
inline OscRow oscillation_row(const CaloricField& u, double radius, double zeta, Parity parity) {
  const int d = u.domain().dim();
  OscRow row;
  row.radius = radius;
  row.parity = parity;
  row.inner = oscillation(u, parity_interior(d, radius, parity));
  row.outer = oscillation(u, parity_interior(d, zeta * radius, parity));
  row.excluded = row.outer == 0;
  row.ratio = row.excluded ? 0.0 : row.inner / row.outer;
  return row;
}

inline OscReport oscillation_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const SiteLaw law = cfg.site_law();
  const Box box = experiment_box(cfg.d, cfg.zeta * cfg.max_radius());
  std::vector<std::vector<OscRow>> slots(cfg.seed_count);
  parallel_for(cfg.seed_count, cfg.workers, [&](std::int64_t s) {
    const std::uint64_t seed = cfg.seed_at(static_cast<int>(s));
    const Environment env = sample_iid(law, box, seed);
    for (double r : cfg.radii) {
      const auto data = standard_data_family(cfg.d, cfg.zeta * r);
      for (int k = 0; k < cfg.data_count; ++k) {
        const auto u = solve_on_cylinder(env, cfg.zeta * r, data[k]);
        for (Parity p : {Parity::even, Parity::odd}) {
          OscRow row = oscillation_row(u, r, cfg.zeta, p);
          row.seed = seed;
          row.datum_id = data[k].id;
          slots[s].push_back(row);
        }
      }
    }
  });
  OscReport rep;
  rep.config = cfg;
  std::vector<double> ratios;
  for (auto& s : slots)
    for (const auto& r : s) {
      rep.rows.push_back(r);
      if (r.excluded) {
        ++rep.excluded;
      } else {
        ratios.push_back(r.ratio);
        rep.max_ratio = std::max(rep.max_ratio, r.ratio);
      }
    }
  if (!ratios.empty()) {
    rep.p50 = percentile(ratios, 0.5);
    rep.p90 = percentile(ratios, 0.9);
    rep.p99 = percentile(ratios, 0.99);
  }
  return rep;
}

inline void write_osc_csv(std::ostream& os, const OscReport& rep) {
  os << "R,seed,datum_id,parity,osc_inner,osc_outer,ratio,excluded\n";
  for (const auto& r : rep.rows)
    os << format_value(r.radius) << ',' << r.seed << ',' << r.datum_id << ',' << parity_name(r.parity) << ','
       << format_value(r.inner) << ',' << format_value(r.outer) << ',' << format_value(r.ratio) << ','
       << (r.excluded ? 1 : 0) << '\n';
}

inline nlohmann::json osc_summary_json(const OscReport& rep) {
  return {{"version", kReportVersion}, {"experiment", "osc"},     {"config", config_json(rep.config)},
          {"rows", rep.rows.size()},   {"excluded", rep.excluded}, {"max_ratio", rep.max_ratio},
          {"p50", rep.p50},            {"p90", rep.p90},           {"p99", rep.p99}};
}

// ---------------------------------------------------------------------------
// Coupling success from exact exit measures.

struct CouplingResult {
  double tv = 0;
  double success = 1;
};

inline double total_variation(const std::map<SpaceTimePoint, double>& a, const std::map<SpaceTimePoint, double>& b) {
  double s = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      s += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      s += std::abs(ib->second);
      ++ib;
    } else {
      s += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 0.5 * s;
}

/// TV distance between the exit laws from K_R(c) of walks started at x and y
/// (same parity), over exit points or, when given, over partition cells.
inline CouplingResult coupling_success(const Environment& env, const SpaceTimePoint& x, const SpaceTimePoint& y,
                                       const Cylinder& c, const std::vector<BoundaryCell>& partition = {}) {
  require(parity_of(x) == parity_of(y), "coupled starts must have the same parity");
  require(c.in_closure(x) && c.in_closure(y), "starts must lie in the closed cylinder");
  CouplingResult out;
  if (partition.empty()) {
    const auto dom = ParabolicDomain::cylinder(c);
    std::map<SpaceTimePoint, double> a, b;
    for (const auto& [p, m] : exit_point_distribution(env, dom, x)) a[p] += m;
    for (const auto& [p, m] : exit_point_distribution(env, dom, y)) b[p] += m;
    out.tv = total_variation(a, b);
  } else {
    const auto ma = exit_distribution_exact(env, x, c, partition);
    const auto mb = exit_distribution_exact(env, y, c, partition);
    double s = 0;
    for (std::size_t i = 0; i < ma.masses.size(); ++i) s += std::abs(ma.masses[i] - mb.masses[i]);
    out.tv = 0.5 * s;
  }
  out.tv = std::clamp(out.tv, 0.0, 1.0);
  out.success = 1 - out.tv;
  return out;
}

// ---------------------------------------------------------------------------
// Sink counterexample.

struct CounterexampleReport {
  int radius = 0;
  double peak = 0;  // boundary value at the probes
  HarnackRatio even, odd;
  bool growth_even = true, growth_odd = true;
  std::int64_t sink_points = 0;
  bool sink_all_one = false;
  double sink_min = 0, sink_max = 0;

  double ratio() const { return std::min(even.ratio, odd.ratio); }
};

/// Boundary data on the cylinder of radius 2R: 2^{3R^2} at the two probe
/// sites on the top face, 1 elsewhere (in particular on the sink).
inline std::function<double(const SpaceTimePoint&)> counterexample_data(const CounterexampleEnvironment& ce) {
  const int r = ce.radius;
  const Cylinder c(SpaceTimePoint{Site::zero(2), 0}, 2.0 * r);
  const double peak = std::ldexp(1.0, 3 * r * r);
  const std::int64_t top = c.top_time();
  const Site p1 = ce.probe1, p2 = ce.probe2;
  return [=](const SpaceTimePoint& p) { return p.time == top && (p.site == p1 || p.site == p2) ? peak : 1.0; };
}

inline CaloricField counterexample_field(const CounterexampleEnvironment& ce) {
  const Cylinder c(SpaceTimePoint{Site::zero(2), 0}, 2.0 * ce.radius);
  return solve_backward(ce.env, ParabolicDomain::cylinder(c), counterexample_data(ce));
}

inline CounterexampleReport counterexample_experiment(int radius, double w = 2.0, double xi = 0.1) {
  require(radius >= 2 && radius <= 4, "the counterexample is exact only for 2 <= R <= 4");
  const auto ce = sink_env_counterexample(radius);
  const auto u = counterexample_field(ce);
  CounterexampleReport rep;
  rep.radius = radius;
  rep.peak = std::ldexp(1.0, 3 * radius * radius);
  rep.even = harnack_ratio(u, radius, Parity::even);
  rep.odd = harnack_ratio(u, radius, Parity::odd);
  rep.growth_even = growth_condition_check(u, radius, w, xi, Parity::even);
  rep.growth_odd = growth_condition_check(u, radius, w, xi, Parity::odd);
  const auto& dom = u.domain();
  rep.sink_min = std::numeric_limits<double>::infinity();
  rep.sink_max = -rep.sink_min;
  for (std::int64_t i = 0; i < dom.interior_count(); ++i) {
    if (dom.site(i)[1] != ce.sink_row) continue;
    for (std::int64_t t = dom.t0(); t < dom.top(); ++t) {
      const double v = u.at(i, t);
      rep.sink_min = std::min(rep.sink_min, v);
      rep.sink_max = std::max(rep.sink_max, v);
      ++rep.sink_points;
    }
  }
  rep.sink_all_one = rep.sink_points > 0 && rep.sink_min == 1.0 && rep.sink_max == 1.0;
  return rep;
}

inline nlohmann::json counterexample_json(const CounterexampleReport& r) {
  auto side = [](const HarnackRatio& h) {
    return nlohmann::json{{"max_upper", h.max_upper},
                          {"min_lower", h.min_lower},
                          {"ratio", h.ratio},
                          {"argmax", h.argmax.str()},
                          {"argmin", h.argmin.str()}};
  };
  return {{"version", kReportVersion},
          {"experiment", "counter"},
          {"R", r.radius},
          {"peak", r.peak},
          {"threshold", std::ldexp(1.0, r.radius * r.radius)},
          {"ratio", r.ratio()},
          {"even", side(r.even)},
          {"odd", side(r.odd)},
          {"growth_even", r.growth_even},
          {"growth_odd", r.growth_odd},
          {"sink_points", r.sink_points},
          {"sink_all_one", r.sink_all_one},
          {"sink_min", r.sink_min},
          {"sink_max", r.sink_max}};
}

// ---------------------------------------------------------------------------
// Transience: visits to the start.

struct VisitCheckpoint {
  std::int64_t horizon = 0;
  double mean = 0;
  double std_error = 0;
  double delta = 0;           // mean minus the previous checkpoint's mean
  double delta_std_error = 0; // paired over the same walks
};

struct TransienceReport {
  std::string law;
  int d = 0;
  std::int64_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<VisitCheckpoint> checkpoints;
};

namespace detail {

/// Homogeneous simple random walk with several directions per random word.
class FastSrw {
 public:
  explicit FastSrw(int d, std::uint64_t key) : d_(d), rng_(key) {}
  int next() {
    const int n = 2 * d_;
    if (n == 2 || n == 4) {
      if (bits_ < 2) refill();
      const int k = static_cast<int>(word_ & (n == 2 ? 1u : 3u));
      word_ >>= n == 2 ? 1 : 2;
      bits_ -= n == 2 ? 1 : 2;
      return k;
    }
    while (true) {  // n = 6: 3-bit draws, rejecting 6 and 7
      if (bits_ < 3) refill();
      const int k = static_cast<int>(word_ & 7u);
      word_ >>= 3;
      bits_ -= 3;
      if (k < n) return k;
    }
  }

 private:
  void refill() {
    word_ = rng_.next_u64();
    bits_ = 63;
  }
  int d_;
  CounterRng rng_;
  std::uint64_t word_ = 0;
  int bits_ = 0;
};

}  // namespace detail

/// Visits to the start within [0, horizon] (time 0 counts), reported at every
/// checkpoint. The environment box is sized 4 sqrt(horizon) + 1 per axis and a
/// walk leaving it raises BoxExhausted.
inline TransienceReport transience_experiment(const std::string& law_name, int d,
                                              std::vector<std::int64_t> checkpoints, std::int64_t samples,
                                              std::uint64_t seed, int workers = 1) {
  require(d == 2 || d == 3, "transience runs in d = 2 or 3");
  require(!checkpoints.empty(), "at least one horizon is required");
  std::sort(checkpoints.begin(), checkpoints.end());
  require(checkpoints.front() >= 1, "horizons must be positive");
  require(samples >= 2, "at least two samples are required");
  const std::int64_t horizon = checkpoints.back();
  const SiteLaw law = parse_law(law_name, d);
  const auto half = static_cast<std::int64_t>(4 * std::sqrt(static_cast<double>(horizon))) + 1;
  const Box box = Box::centered(d, half);
  const Environment env = Environment::procedural(law, box, seed);
  const std::size_t nc = checkpoints.size();

  struct Acc {
    std::vector<Moments> level, step;
    Acc& operator+=(const Acc& o) {
      if (level.empty()) {
        level = o.level;
        step = o.step;
        return *this;
      }
      for (std::size_t i = 0; i < level.size(); ++i) {
        level[i] += o.level[i];
        step[i] += o.step[i];
      }
      return *this;
    }
  };
  const bool homogeneous = env.homogeneous_kernel().has_value();
  const Acc acc = blocked_sum<Acc>(samples, workers, [&](std::int64_t s) {
    const std::uint64_t key = stream_key(seed, static_cast<std::uint64_t>(s));
    std::vector<std::int64_t> counts(nc, 0);
    std::int64_t pos[kMaxDim] = {0, 0, 0, 0};
    std::int64_t visits = 1;
    std::size_t next_cp = 0;
    auto record = [&](std::int64_t n) {
      while (next_cp < nc && checkpoints[next_cp] == n) counts[next_cp++] = visits;
    };
    record(0);
    if (homogeneous) {
      detail::FastSrw walk(d, key);
      std::int64_t n = 0;
      for (std::size_t c = next_cp; c < nc; ++c) {
        for (; n < checkpoints[c]; ++n) {
          const int k = walk.next();
          const int axis = k < d ? k : k - d;
          pos[axis] += k < d ? 1 : -1;
          if (std::llabs(pos[axis]) > half) throw BoxExhausted("walk left the transience box");
          visits += (pos[0] | pos[1] | pos[2]) == 0;
        }
        counts[c] = visits;
      }
    } else {
      const Stepper stepper(env);
      CounterRng rng(key);
      Site x = Site::zero(d);
      for (std::int64_t n = 1; n <= horizon; ++n) {
        x = x.step(stepper.direction(x, rng));
        bool origin = true;
        for (int i = 0; i < d; ++i) origin = origin && x[i] == 0;
        if (origin) ++visits;
        record(n);
      }
    }
    Acc a;
    a.level.resize(nc);
    a.step.resize(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      a.level[i].add(static_cast<double>(counts[i]));
      a.step[i].add(static_cast<double>(i ? counts[i] - counts[i - 1] : 0));
    }
    return a;
  });
  TransienceReport rep;
  rep.law = law.id();
  rep.d = d;
  rep.samples = samples;
  rep.seed = seed;
  for (std::size_t i = 0; i < nc; ++i)
    rep.checkpoints.push_back({checkpoints[i], acc.level[i].mean(), acc.level[i].std_error(),
                               i ? acc.step[i].mean() : 0.0, i ? acc.step[i].std_error() : 0.0});
  return rep;
}

inline void write_transience_csv(std::ostream& os, const TransienceReport& rep) {
  os << "d,horizon,mean_visits,std_error,delta,delta_std_error\n";
  for (const auto& c : rep.checkpoints)
    os << rep.d << ',' << c.horizon << ',' << format_value(c.mean) << ',' << format_value(c.std_error) << ','
       << format_value(c.delta) << ',' << format_value(c.delta_std_error) << '\n';
}

/// Expected visits to the origin of the 3D simple random walk within
/// [0, horizon]: the Green's function at 0, int_0^inf e^{-t} I_0(t/3)^3 dt,
/// less the local-limit tail sum_{n > horizon} p_n(0) = 2 (3/(2 pi))^{3/2} / sqrt(horizon).
inline double srw3_expected_visits(double horizon = std::numeric_limits<double>::infinity()) {
  auto f = [](double t) {
    const double x = t / 3;
    const double s = std::cyl_bessel_i(0.0, x) * std::exp(-x);
    return s * s * s;
  };
  // composite Gauss-Legendre on [0, T] with panels growing geometrically
  const double nodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  const double weights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                             0.2369268850561891};
  const double cut = 1500;
  double integral = 0, a = 0, width = 0.05;
  while (a < cut) {
    const double b = std::min(cut, a + width);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < 5; ++i) integral += weights[i] * half * f(mid + half * nodes[i]);
    a = b;
    width *= 1.05;
  }
  // tail from the expansion e^{-x} I_0(x) = (2 pi x)^{-1/2} (1 + 1/(8x) + 9/(128x^2) + ...)
  const double c = std::pow(3 / (2 * std::numbers::pi), 1.5);
  integral += c * (2 / std::sqrt(cut) + (9.0 / 8) * (2.0 / 3) * std::pow(cut, -1.5));
  if (std::isfinite(horizon)) integral -= 2 * c / std::sqrt(horizon);
  return integral;
}

inline nlohmann::json transience_json(const TransienceReport& rep) {
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& c : rep.checkpoints)
    cps.push_back({{"horizon", c.horizon},
                   {"mean", c.mean},
                   {"std_error", c.std_error},
                   {"delta", c.delta},
                   {"delta_std_error", c.delta_std_error}});
  nlohmann::json j = {{"version", kReportVersion}, {"experiment", "trans"}, {"law", rep.law},
                      {"d", rep.d},                {"samples", rep.samples}, {"seed", rep.seed},
                      {"checkpoints", cps}};
  if (rep.d == 3 && rep.law == "simple-random-walk")
    j["oracle_mean_at_horizon"] = srw3_expected_visits(static_cast<double>(rep.checkpoints.back().horizon));
  return j;
}

}  // namespace rwre

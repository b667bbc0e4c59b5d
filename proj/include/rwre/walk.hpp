#pragma once

// Quenched walks: path sampling under stop rules, cylinder exits and cover
// times. Sample i of a batch always uses the stream stream_key(seed, i).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_set>
#include <variant>
#include <vector>

#include "rwre/environment.hpp"
#include "rwre/lattice.hpp"
#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

namespace rwre {

/// Inverse-CDF draw over the 2d directions in fixed order; a zero-probability
/// direction is never returned.
inline int sample_direction(std::span<const double> p, double u) {
  double acc = 0;
  const int n = static_cast<int>(p.size());
  for (int k = 0; k < n; ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  for (int k = n - 1; k >= 0; --k)
    if (p[k] > 0) return k;
  return n - 1;
}

/// Kernel lookups for a walk, bypassing the generic accessor when the
/// environment is stored densely or homogeneous.
class Stepper {
 public:
  explicit Stepper(const Environment& env) : env_(env), d_(env.dim()), dense_(env.dense_probs()) {
    if (env.homogeneous_kernel()) hom_ = *env.homogeneous_kernel();
  }

  int dim() const { return d_; }

  /// Samples a direction at x; throws BoxExhausted outside the box.
  int direction(const Site& x, CounterRng& rng) const {
    const Box& box = env_.box();
    if (!box.contains(x)) throw BoxExhausted("walk left the environment box at " + x.str());
    const double u = rng.uniform();
    if (hom_) return sample_direction(hom_->probs(), u);
    const std::int64_t idx = box.linear_index(x);
    if (!dense_.empty()) return sample_direction(dense_.subspan(static_cast<std::size_t>(idx * 2 * d_), 2 * d_), u);
    const SiteKernel k = env_.kernel_at(idx);
    return sample_direction(k.probs(), u);
  }

 private:
  const Environment& env_;
  int d_;
  std::span<const double> dense_;
  std::optional<SiteKernel> hom_;
};

/// A first-of combination of stop clauses, evaluated after every step
/// (and at the start, before any step is taken).
class StopRule {
 public:
  struct ExitCylinder {
    Cylinder cylinder;
  };
  struct ExitBall {
    Site center;
    double radius;
  };
  struct HitSet {
    std::unordered_set<Site> sites;
  };
  struct CoverAll {};
  struct StepCap {
    std::int64_t steps;
  };
  using Clause = std::variant<ExitCylinder, ExitBall, HitSet, CoverAll, StepCap>;

  static StopRule exit_cylinder(const Cylinder& c) { return StopRule(ExitCylinder{c}); }
  static StopRule exit_ball(const Site& center, double radius) {
    require(radius > 0, "exit-ball radius must be positive");
    return StopRule(ExitBall{center, radius});
  }
  static StopRule hit_set(const std::vector<Site>& sites) {
    return StopRule(HitSet{std::unordered_set<Site>(sites.begin(), sites.end())});
  }
  static StopRule cover_all() { return StopRule(CoverAll{}); }
  static StopRule step_cap(std::int64_t n) {
    require(n >= 0, "step cap must be non-negative");
    return StopRule(StepCap{n});
  }

  /// Stops at whichever rule triggers first.
  friend StopRule operator|(StopRule a, const StopRule& b) {
    a.clauses_.insert(a.clauses_.end(), b.clauses_.begin(), b.clauses_.end());
    return a;
  }

  const std::vector<Clause>& clauses() const { return clauses_; }

  /// `axes_seen` is the bitmask of coordinates changed so far.
  bool stops(const SpaceTimePoint& p, std::int64_t steps, unsigned axes_seen, int d) const {
    for (const auto& c : clauses_) {
      const bool hit = std::visit(
          [&](const auto& r) -> bool {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, ExitCylinder>) return !r.cylinder.in_interior(p);
            if constexpr (std::is_same_v<T, ExitBall>) return !in_ball(p.site, r.center, r.radius);
            if constexpr (std::is_same_v<T, HitSet>) return r.sites.count(p.site) > 0;
            if constexpr (std::is_same_v<T, CoverAll>) return axes_seen == (1u << d) - 1;
            if constexpr (std::is_same_v<T, StepCap>) return steps >= r.steps;
          },
          c);
      if (hit) return true;
    }
    return false;
  }

  /// Safety cap: 64 R^2 for ball exits, the horizon for cylinders, 10^8 otherwise.
  std::int64_t default_guard() const {
    std::int64_t guard = std::numeric_limits<std::int64_t>::max();
    bool bounded = false;
    for (const auto& c : clauses_) {
      if (const auto* s = std::get_if<StepCap>(&c)) {
        guard = std::min(guard, s->steps + 1);
        bounded = true;
      } else if (const auto* cy = std::get_if<ExitCylinder>(&c)) {
        guard = std::min(guard, cy->cylinder.height() + 1);
        bounded = true;
      } else if (const auto* b = std::get_if<ExitBall>(&c)) {
        guard = std::min(guard, 64 * ceil_radius_sq(b->radius) + 64);
        bounded = true;
      }
    }
    return bounded ? guard : 100'000'000;
  }

 private:
  explicit StopRule(Clause c) { clauses_.push_back(std::move(c)); }
  std::vector<Clause> clauses_;
};

struct WalkPath {
  SpaceTimePoint start;
  std::vector<std::uint8_t> steps;  // direction indices

  std::int64_t length() const { return static_cast<std::int64_t>(steps.size()); }
  std::vector<Site> sites() const {
    std::vector<Site> out{start.site};
    for (auto k : steps) out.push_back(out.back().step(k));
    return out;
  }
  SpaceTimePoint end() const {
    Site x = start.site;
    for (auto k : steps) x = x.step(k);
    return {x, start.time + length()};
  }
};

/// Samples a path from P^x_omega until the rule triggers. Reaching `guard`
/// steps (default: rule.default_guard()) without triggering throws StepCapHit.
inline WalkPath run(const Environment& env, const SpaceTimePoint& start, const StopRule& rule, std::uint64_t seed,
                    std::int64_t guard = 0) {
  require(start.site.dim() == env.dim(), "start dimension differs from the environment");
  if (!env.contains(start.site)) throw BoxExhausted("start site " + start.site.str() + " is outside the box");
  if (guard <= 0) guard = rule.default_guard();
  const int d = env.dim();
  const Stepper stepper(env);
  CounterRng rng(seed);
  WalkPath path{start, {}};
  SpaceTimePoint p = start;
  unsigned seen = 0;
  while (!rule.stops(p, path.length(), seen, d)) {
    if (path.length() >= guard) throw StepCapHit("walk reached the guard cap of " + std::to_string(guard) + " steps");
    const int k = stepper.direction(p.site, rng);
    path.steps.push_back(static_cast<std::uint8_t>(k));
    p.site = p.site.step(k);
    ++p.time;
    seen |= 1u << direction_axis(k, d);
  }
  return path;
}

struct CoverTime {
  std::int64_t steps = 0;  // T wedge k
  bool capped = false;     // true when T > k
};

/// T^(k): first time every coordinate has changed, capped at k.
inline CoverTime cover_time(const Environment& env, const Site& start, std::int64_t k, std::uint64_t seed) {
  require(k >= 1, "cover-time cap must be at least 1");
  const int d = env.dim();
  const unsigned full = (1u << d) - 1;
  const Stepper stepper(env);
  CounterRng rng(seed);
  Site x = start;
  unsigned seen = 0;
  for (std::int64_t n = 1; n <= k; ++n) {
    const int dir = stepper.direction(x, rng);
    x = x.step(dir);
    seen |= 1u << direction_axis(dir, d);
    if (seen == full) return {n, false};
  }
  return {k, true};
}

struct CoverTimeStats {
  double mean_power = 0;            // (1/|box|) sum_x E^x[T]^(d+2); +inf if any walk hit the guard
  double max_tail = 0;              // max_x P^x(T > k)
  Site argmax_tail;
  std::vector<double> mean_cover;   // per site E^x[T], row-major over the box
  std::vector<double> cover_se;     // standard errors
  std::vector<double> tail;         // per site P^x(T > k)
};

/// Monte Carlo estimates over every site of `box`. Walks that have not covered
/// all coordinates within `guard` steps make that site's E[T] infinite.
inline CoverTimeStats cover_time_statistics(const Environment& env, const Box& box, std::int64_t k,
                                            std::int64_t samples, std::uint64_t seed, int workers = 1,
                                            std::int64_t guard = 100'000) {
  require(samples >= 1000, "cover-time statistics need at least 10^3 samples");
  require(env.box().contains(box), "statistics box must lie inside the environment box");
  const int d = env.dim();
  CoverTimeStats out;
  const auto n = static_cast<std::size_t>(box.volume());
  out.mean_cover.assign(n, 0);
  out.cover_se.assign(n, 0);
  out.tail.assign(n, 0);
  parallel_for(box.volume(), workers, [&](std::int64_t i) {
    const Site x = box.site_at(i);
    const std::uint64_t site_key = stream_key(seed, static_cast<std::uint64_t>(env.box().linear_index(x)));
    Moments m;
    std::int64_t over = 0;
    bool infinite = false;
    for (std::int64_t s = 0; s < samples; ++s) {
      const CoverTime ct = cover_time(env, x, guard, stream_key(site_key, static_cast<std::uint64_t>(s)));
      if (ct.capped) infinite = true;
      if (ct.capped || ct.steps > k) ++over;
      m.add(static_cast<double>(ct.steps));
    }
    out.mean_cover[i] = infinite ? std::numeric_limits<double>::infinity() : m.mean();
    out.cover_se[i] = m.std_error();
    out.tail[i] = static_cast<double>(over) / static_cast<double>(samples);
  });
  double acc = 0;
  out.max_tail = -1;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::pow(out.mean_cover[i], d + 2);
    if (out.tail[i] > out.max_tail) {
      out.max_tail = out.tail[i];
      out.argmax_tail = box.site_at(static_cast<std::int64_t>(i));
    }
  }
  out.mean_power = acc / static_cast<double>(n);
  return out;
}

/// Exit point (X_rho, s + rho) of the walk started at (x, s) from K_R(c).
inline SpaceTimePoint exit_sample(const Environment& env, const SpaceTimePoint& start, const Cylinder& c,
                                  std::uint64_t seed) {
  require(c.in_closure(start), "exit_sample start must lie in the closed cylinder");
  const Stepper stepper(env);
  CounterRng rng(seed);
  SpaceTimePoint p = start;
  while (c.in_interior(p)) {
    p.site = p.site.step(stepper.direction(p.site, rng));
    ++p.time;
  }
  return p;
}

/// Exit points of `samples` walks from the same start; sample i uses stream_key(seed, i).
inline std::vector<SpaceTimePoint> exit_samples(const Environment& env, const SpaceTimePoint& start,
                                                const Cylinder& c, std::int64_t samples, std::uint64_t seed,
                                                int workers = 1) {
  std::vector<SpaceTimePoint> out(static_cast<std::size_t>(samples));
  const std::int64_t blocks = (samples + kReductionBlock - 1) / kReductionBlock;
  parallel_for(blocks, workers, [&](std::int64_t b) {
    const std::int64_t end = std::min(samples, (b + 1) * kReductionBlock);
    for (std::int64_t i = b * kReductionBlock; i < end; ++i)
      out[static_cast<std::size_t>(i)] = exit_sample(env, start, c, stream_key(seed, static_cast<std::uint64_t>(i)));
  });
  return out;
}

}  // namespace rwre

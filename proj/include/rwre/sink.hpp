#pragma once

// Directed reachability on a box: x -> x + e whenever the kernel puts positive
// mass on e. Strongly connected components, sinks, omega-distances and the
// small-scale events used to control the walk near a sink.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rwre/environment.hpp"
#include "rwre/lattice.hpp"
#include "rwre/parallel.hpp"

namespace rwre {

/// Adjacency in CSR form over the sites of `box` (row-major indices). A site
/// with a positive move leaving the box is flagged as escaping.
struct ReachGraph {
  Box box;
  std::vector<std::int64_t> offsets;  // size n + 1
  std::vector<std::int64_t> targets;
  std::vector<std::uint8_t> escapes;

  std::int64_t size() const { return box.volume(); }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(targets.size()); }
  std::span<const std::int64_t> out(std::int64_t v) const {
    return {targets.data() + offsets[v], static_cast<std::size_t>(offsets[v + 1] - offsets[v])};
  }
};

inline ReachGraph build_reach_graph(const Environment& env, const Box& box, int workers = 1) {
  require(box.dim() == env.dim(), "box dimension differs from the environment");
  require(env.box().contains(box), "reach-graph box must lie inside the environment box");
  const int d = env.dim();
  const std::int64_t n = box.volume();
  // per-site bitmask of positive directions, then a serial prefix sum
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n));
  ReachGraph g;
  g.box = box;
  g.escapes.assign(static_cast<std::size_t>(n), 0);
  parallel_for(n, workers, [&](std::int64_t v) {
    const Site x = box.site_at(v);
    const SiteKernel k = env.kernel(x);
    std::uint8_t m = 0;
    for (int dir = 0; dir < 2 * d; ++dir) {
      if (!(k[dir] > 0)) continue;
      if (box.contains(x.step(dir)))
        m |= static_cast<std::uint8_t>(1u << dir);
      else
        g.escapes[v] = 1;
    }
    mask[v] = m;
  });
  g.offsets.assign(static_cast<std::size_t>(n + 1), 0);
  for (std::int64_t v = 0; v < n; ++v) g.offsets[v + 1] = g.offsets[v] + std::popcount(mask[v]);
  g.targets.resize(static_cast<std::size_t>(g.offsets[n]));
  parallel_for(n, workers, [&](std::int64_t v) {
    const Site x = box.site_at(v);
    std::int64_t e = g.offsets[v];
    for (int dir = 0; dir < 2 * d; ++dir)
      if (mask[v] >> dir & 1) g.targets[e++] = box.linear_index(x.step(dir));
  });
  return g;
}

enum class SinkVerdict { sink, not_sink, inconclusive };

inline const char* verdict_name(SinkVerdict v) {
  switch (v) {
    case SinkVerdict::sink: return "sink";
    case SinkVerdict::not_sink: return "not_sink";
    default: return "inconclusive";
  }
}

/// Components are numbered in the order Tarjan's algorithm closes them, which
/// is a reverse topological order of the condensation.
///
/// Verdicts: a terminal component with no move out of the box is a sink. A
/// component that reaches some other sink cannot lie in a sink itself (that
/// sink would have to reach it back). Everything else depends on the
/// environment outside the box.
struct SinkDecomposition {
  std::vector<std::int32_t> component;  // per node
  std::vector<std::vector<std::int64_t>> members;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> boundary_touching;
  std::vector<SinkVerdict> verdict;
  std::vector<std::int32_t> reached_sink;  // for not_sink: a sink it reaches, else -1

  std::size_t count() const { return members.size(); }
  std::vector<std::int32_t> certified_sinks() const {
    std::vector<std::int32_t> out;
    for (std::size_t c = 0; c < count(); ++c)
      if (verdict[c] == SinkVerdict::sink) out.push_back(static_cast<std::int32_t>(c));
    return out;
  }
};

inline SinkDecomposition find_sinks(const ReachGraph& g) {
  const std::int64_t n = g.size();
  SinkDecomposition out;
  out.component.assign(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> on_stack(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> stack;
  std::vector<std::pair<std::int64_t, std::int64_t>> call;  // (node, next edge)
  std::int64_t counter = 0;
  for (std::int64_t root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.emplace_back(root, g.offsets[root]);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e < g.offsets[v + 1]) {
        const std::int64_t w = g.targets[e++];
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.emplace_back(w, g.offsets[w]);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      const std::int64_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
      if (low[done] != index[done]) continue;
      const auto id = static_cast<std::int32_t>(out.members.size());
      std::vector<std::int64_t> comp;
      std::int64_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        out.component[w] = id;
        comp.push_back(w);
      } while (w != done);
      std::sort(comp.begin(), comp.end());
      out.members.push_back(std::move(comp));
    }
  }

  const std::size_t m = out.members.size();
  out.terminal.assign(m, 1);
  out.boundary_touching.assign(m, 0);
  out.verdict.assign(m, SinkVerdict::inconclusive);
  out.reached_sink.assign(m, -1);
  for (std::int64_t v = 0; v < n; ++v) {
    const auto c = out.component[v];
    if (g.escapes[v]) out.boundary_touching[c] = 1;
    for (auto w : g.out(v))
      if (out.component[w] != c) out.terminal[c] = 0;
  }
  for (std::size_t c = 0; c < m; ++c)
    if (out.terminal[c] && !out.boundary_touching[c]) out.verdict[c] = SinkVerdict::sink;
  // successors close before their predecessors, so one pass in id order suffices
  for (std::size_t c = 0; c < m; ++c) {
    for (auto v : out.members[c])
      for (auto w : g.out(v)) {
        const auto s = out.component[w];
        if (s == static_cast<std::int32_t>(c) || out.reached_sink[c] >= 0) continue;
        if (out.verdict[s] == SinkVerdict::sink) out.reached_sink[c] = s;
        else if (out.reached_sink[s] >= 0) out.reached_sink[c] = out.reached_sink[s];
      }
    if (out.reached_sink[c] >= 0) out.verdict[c] = SinkVerdict::not_sink;
  }
  return out;
}

inline SinkDecomposition find_sinks(const Environment& env, const Box& box, int workers = 1) {
  return find_sinks(build_reach_graph(env, box, workers));
}

/// Kahn's algorithm on the condensation; false if it has a cycle.
inline bool condensation_is_acyclic(const ReachGraph& g, const SinkDecomposition& s) {
  const std::size_t m = s.count();
  std::vector<std::vector<std::int32_t>> succ(m);
  std::vector<std::int64_t> indeg(m, 0);
  for (std::int64_t v = 0; v < g.size(); ++v)
    for (auto w : g.out(v)) {
      const auto a = s.component[v], b = s.component[w];
      if (a != b) {
        succ[a].push_back(b);
        ++indeg[b];
      }
    }
  std::vector<std::int32_t> ready;
  for (std::size_t c = 0; c < m; ++c)
    if (indeg[c] == 0) ready.push_back(static_cast<std::int32_t>(c));
  std::size_t seen = 0;
  while (!ready.empty()) {
    const auto c = ready.back();
    ready.pop_back();
    ++seen;
    for (auto b : succ[c])
      if (--indeg[b] == 0) ready.push_back(b);
  }
  return seen == m;
}

/// BFS distances from `from` inside the graph; -1 when unreachable.
inline std::vector<std::int64_t> bfs_distances(const ReachGraph& g, std::int64_t from) {
  std::vector<std::int64_t> dist(static_cast<std::size_t>(g.size()), -1);
  std::deque<std::int64_t> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    for (auto w : g.out(v))
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
  }
  return dist;
}

/// Directed distance from x to y through moves inside the box.
inline std::optional<std::int64_t> omega_distance(const ReachGraph& g, const Site& x, const Site& y) {
  require(g.box.contains(x) && g.box.contains(y), "omega_distance endpoints must lie in the box");
  const auto dist = bfs_distances(g, g.box.linear_index(x));
  const auto d = dist[g.box.linear_index(y)];
  if (d < 0) return std::nullopt;
  return d;
}

inline std::optional<std::int64_t> omega_distance(const Environment& env, const Site& x, const Site& y,
                                                  const Box& box) {
  return omega_distance(build_reach_graph(env, box), x, y);
}

enum class EventVerdict { holds, fails, inconclusive };

inline const char* event_name(EventVerdict v) {
  switch (v) {
    case EventVerdict::holds: return "holds";
    case EventVerdict::fails: return "fails";
    default: return "inconclusive";
  }
}

struct SmallScaleParams {
  double radius = 0;           // R
  double xi = 0;               // ellipticity threshold
  double c = 1;                // distance constant
  std::int64_t hole_radius = 0;  // l-infinity reach tested for holes; floor(R) by default
  Site center;                 // defaults to the origin
  std::optional<std::vector<Site>> known_sink;  // the sink, when known by construction
};

struct SmallScaleEvents {
  EventVerdict elliptic = EventVerdict::inconclusive;  // no entry in (0, xi) on B_{(c+3)R}
  EventVerdict hole = EventVerdict::inconclusive;      // no short escape from B_R avoiding the sink
  EventVerdict distance = EventVerdict::inconclusive;  // sink points of B_{2R} are within cR of each other
  std::optional<Site> elliptic_witness;
  std::optional<std::pair<Site, Site>> hole_witness;      // (z, x) with z -> x, x off the sink
  std::optional<std::pair<Site, Site>> distance_witness;  // (x, y) too far apart
  std::string sink_source;  // "given", "certified" or "unknown"
};

/// Evaluates the three events on a box. The sink is the caller's, or the
/// unique certified sink of the box; when neither exists the sink-dependent
/// events are inconclusive.
inline SmallScaleEvents check_small_scale_events(const Environment& env, SmallScaleParams p) {
  require(p.radius > 0 && p.xi > 0 && p.c > 0, "small-scale event parameters must be positive");
  const int d = env.dim();
  if (p.center.dim() == 0) p.center = Site::zero(d);
  if (p.hole_radius <= 0) p.hole_radius = static_cast<std::int64_t>(std::floor(p.radius + 1e-9));
  const Box& box = env.box();
  SmallScaleEvents out;

  // ellipticity on the large ball; the part outside the box is unknown
  out.elliptic = EventVerdict::holds;
  for (const Site& z : ball_points((p.c + 3) * p.radius, p.center)) {
    if (!box.contains(z)) {
      out.elliptic = EventVerdict::inconclusive;
      continue;
    }
    const SiteKernel k = env.kernel(z);
    bool bad = false;
    for (int dir = 0; dir < 2 * d; ++dir) bad = bad || (k[dir] > 0 && k[dir] < p.xi);
    if (bad) {
      out.elliptic = EventVerdict::fails;
      out.elliptic_witness = z;
      break;
    }
  }

  const ReachGraph g = build_reach_graph(env, box);
  std::vector<std::uint8_t> in_sink(static_cast<std::size_t>(g.size()), 0);
  if (p.known_sink) {
    out.sink_source = "given";
    for (const Site& x : *p.known_sink)
      if (box.contains(x)) in_sink[box.linear_index(x)] = 1;
  } else {
    const auto dec = find_sinks(g);
    const auto certified = dec.certified_sinks();
    if (certified.size() != 1) {
      out.sink_source = "unknown";
      return out;
    }
    out.sink_source = "certified";
    for (auto v : dec.members[certified.front()]) in_sink[v] = 1;
  }

  // holes: a witness is certain; absence is only certain when the search never
  // touched a site with a move out of the box
  bool uncertain = false;
  out.hole = EventVerdict::holds;
  for (const Site& z : ball_points(p.radius, p.center)) {
    if (!box.contains(z)) throw BoxExhausted("hole ball leaves the environment box at " + z.str());
    const auto zi = box.linear_index(z);
    if (in_sink[zi]) continue;  // the sink is closed
    const auto dist = bfs_distances(g, zi);
    for (std::int64_t v = 0; v < g.size(); ++v) {
      if (dist[v] < 0) continue;
      const Site x = box.site_at(v);
      if (!in_sink[v] && (x - z).linf() == p.hole_radius) {
        out.hole = EventVerdict::fails;
        out.hole_witness = std::make_pair(z, x);
        break;
      }
      if (g.escapes[v]) uncertain = true;
    }
    if (out.hole == EventVerdict::fails) break;
  }
  if (out.hole == EventVerdict::holds && uncertain) out.hole = EventVerdict::inconclusive;

  // distances inside the sink: a path of length <= cR stays within that
  // l-infinity reach of its start, so a box holding B_{2R} plus that margin
  // settles every pair
  const double limit = p.c * p.radius;
  bool exact = true;
  {
    const auto margin = static_cast<std::int64_t>(std::ceil(2 * p.radius + limit)) + 1;
    for (int i = 0; i < d; ++i)
      exact = exact && box.lo()[i] <= p.center[i] - margin && box.hi()[i] >= p.center[i] + margin;
  }
  std::vector<std::int64_t> sink_sites;
  for (const Site& x : ball_points(2 * p.radius, p.center))
    if (box.contains(x) && in_sink[box.linear_index(x)]) sink_sites.push_back(box.linear_index(x));
  out.distance = EventVerdict::holds;
  for (auto a : sink_sites) {
    const auto dist = bfs_distances(g, a);
    for (auto b : sink_sites) {
      if (dist[b] >= 0 && static_cast<double>(dist[b]) <= limit) continue;
      out.distance = exact ? EventVerdict::fails : EventVerdict::inconclusive;
      out.distance_witness = std::make_pair(box.site_at(a), box.site_at(b));
      break;
    }
    if (out.distance_witness) break;
  }
  return out;
}

inline nlohmann::json site_json(const Site& x) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < x.dim(); ++i) j.push_back(x[i]);
  return j;
}

/// Component sizes, flags, verdicts and one representative site each.
inline nlohmann::json sink_report_json(const ReachGraph& g, const SinkDecomposition& s) {
  nlohmann::json comps = nlohmann::json::array();
  std::size_t certified = 0, inconclusive = 0;
  for (std::size_t c = 0; c < s.count(); ++c) {
    nlohmann::json j;
    j["id"] = c;
    j["size"] = s.members[c].size();
    j["terminal"] = bool(s.terminal[c]);
    j["boundary_touching"] = bool(s.boundary_touching[c]);
    j["verdict"] = verdict_name(s.verdict[c]);
    j["representative"] = site_json(g.box.site_at(s.members[c].front()));
    if (s.reached_sink[c] >= 0) {
      j["reaches_sink"] = s.reached_sink[c];
      j["witness"] = site_json(g.box.site_at(s.members[s.reached_sink[c]].front()));
    }
    certified += s.verdict[c] == SinkVerdict::sink;
    inconclusive += s.verdict[c] == SinkVerdict::inconclusive;
    comps.push_back(std::move(j));
  }
  nlohmann::json out;
  out["box"] = {{"min", site_json(g.box.lo())}, {"max", site_json(g.box.hi())}};
  out["nodes"] = g.size();
  out["edges"] = g.edge_count();
  out["components"] = std::move(comps);
  out["certified_sinks"] = certified;
  out["inconclusive"] = inconclusive;
  return out;
}

inline nlohmann::json events_json(const SmallScaleEvents& e) {
  nlohmann::json j;
  j["sink_source"] = e.sink_source;
  j["elliptic"] = event_name(e.elliptic);
  j["hole"] = event_name(e.hole);
  j["distance"] = event_name(e.distance);
  if (e.elliptic_witness) j["elliptic_witness"] = site_json(*e.elliptic_witness);
  if (e.hole_witness) j["hole_witness"] = {site_json(e.hole_witness->first), site_json(e.hole_witness->second)};
  if (e.distance_witness)
    j["distance_witness"] = {site_json(e.distance_witness->first), site_json(e.distance_witness->second)};
  return j;
}

}  // namespace rwre

#pragma once

// Environments: finite boxes of nearest-neighbor transition kernels, the
// i.i.d. site laws that generate them, and transformations on them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rwre/error.hpp"
#include "rwre/lattice.hpp"
#include "rwre/rng.hpp"

namespace rwre {

inline constexpr double kKernelTolerance = 1e-12;

/// Axis-aligned lattice box with inclusive corners. Linear indices are
/// row-major: axis 0 varies slowest.
class Box {
 public:
  Box() = default;
  Box(Site lo, Site hi) : lo_(lo), hi_(hi) {
    require(lo.dim() == hi.dim() && lo.dim() >= 1, "box corners must share a dimension");
    for (int i = 0; i < lo.dim(); ++i) require(lo[i] <= hi[i], "box must be non-empty on every axis");
    std::int64_t stride = 1;
    for (int i = lo.dim() - 1; i >= 0; --i) {
      stride_[i] = stride;
      stride *= extent(i);
    }
    volume_ = stride;
  }
  /// The cube [-half, half]^d.
  static Box centered(int dim, std::int64_t half) {
    Site lo(dim), hi(dim);
    for (int i = 0; i < dim; ++i) {
      lo[i] = -half;
      hi[i] = half;
    }
    return Box(lo, hi);
  }
  /// Smallest box containing every site in `sites`.
  static Box bounding(const std::vector<Site>& sites) {
    require(!sites.empty(), "bounding box of an empty set");
    Site lo = sites.front(), hi = sites.front();
    for (const Site& s : sites)
      for (int i = 0; i < s.dim(); ++i) {
        lo[i] = std::min(lo[i], s[i]);
        hi[i] = std::max(hi[i], s[i]);
      }
    return Box(lo, hi);
  }

  int dim() const { return lo_.dim(); }
  const Site& lo() const { return lo_; }
  const Site& hi() const { return hi_; }
  std::int64_t extent(int axis) const { return hi_[axis] - lo_[axis] + 1; }
  std::int64_t stride(int axis) const { return stride_[axis]; }
  std::int64_t volume() const { return volume_; }

  bool contains(const Site& x) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo_[i] || x[i] > hi_[i]) return false;
    return true;
  }
  bool contains(const Box& b) const { return contains(b.lo()) && contains(b.hi()); }
  /// True when x lies on the outer layer of the box.
  bool on_frontier(const Site& x) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] == lo_[i] || x[i] == hi_[i]) return true;
    return false;
  }
  std::int64_t linear_index(const Site& x) const {
    std::int64_t idx = 0;
    for (int i = 0; i < dim(); ++i) idx += (x[i] - lo_[i]) * stride_[i];
    return idx;
  }
  Site site_at(std::int64_t idx) const {
    Site x(dim());
    for (int i = 0; i < dim(); ++i) {
      x[i] = lo_[i] + idx / stride_[i];
      idx %= stride_[i];
    }
    return x;
  }

  friend bool operator==(const Box& a, const Box& b) { return a.lo_ == b.lo_ && a.hi_ == b.hi_; }

 private:
  Site lo_, hi_;
  std::array<std::int64_t, kMaxDim> stride_{};
  std::int64_t volume_ = 0;
};

/// Transition probabilities of one site over the 2d directions
/// e_1..e_d, -e_1..-e_d.
class SiteKernel {
 public:
  SiteKernel() = default;
  explicit SiteKernel(int dim) : dim_(dim) {
    require(dim >= 1 && dim <= kMaxDim, "kernel dimension out of range");
  }
  SiteKernel(int dim, std::span<const double> probs) : SiteKernel(dim) {
    require(static_cast<int>(probs.size()) == 2 * dim, "kernel needs 2d entries");
    std::copy(probs.begin(), probs.end(), p_.begin());
  }
  SiteKernel(std::initializer_list<double> probs)
      : SiteKernel(static_cast<int>(probs.size()) / 2, std::span<const double>(probs.begin(), probs.size())) {}

  /// Simple random walk kernel 1/(2d).
  static SiteKernel uniform(int dim) {
    SiteKernel k(dim);
    for (int i = 0; i < 2 * dim; ++i) k.p_[i] = 1.0 / (2 * dim);
    return k;
  }
  /// Moves +-e_axis with probability 1/2 each.
  static SiteKernel axis(int dim, int axis) {
    SiteKernel k(dim);
    k.p_[axis] = 0.5;
    k.p_[axis + dim] = 0.5;
    return k;
  }

  int dim() const { return dim_; }
  int size() const { return 2 * dim_; }
  double operator[](int k) const { return p_[k]; }
  double& operator[](int k) { return p_[k]; }
  std::span<const double> probs() const& { return {p_.data(), static_cast<std::size_t>(2 * dim_)}; }
  std::span<const double> probs() const&& = delete;  // would dangle

  double sum() const {
    double s = 0;
    for (int k = 0; k < size(); ++k) s += p_[k];
    return s;
  }
  bool valid(double tol = kKernelTolerance) const {
    for (int k = 0; k < size(); ++k)
      if (!(p_[k] >= 0) || !std::isfinite(p_[k])) return false;
    return std::abs(sum() - 1.0) <= tol;
  }
  bool balanced(double tol = kKernelTolerance) const {
    for (int i = 0; i < dim_; ++i)
      if (std::abs(p_[i] - p_[i + dim_]) > tol) return false;
    return true;
  }

  friend bool operator==(const SiteKernel& a, const SiteKernel& b) { return a.dim_ == b.dim_ && a.p_ == b.p_; }

 private:
  std::array<double, 2 * kMaxDim> p_{};
  int dim_ = 0;
};

enum class LawKind { uniform_axis, simple_random_walk, elliptic_mixture, custom_table };

/// An i.i.d. site law.
///
/// - uniform_axis: picks one axis uniformly and moves +-e_i with probability 1/2.
/// - simple_random_walk: every site uses 1/(2d).
/// - elliptic_mixture: axis weights w_i = eta + (1 - d*eta) D_i with D uniform on
///   the simplex; the kernel puts w_i/2 on each of +-e_i. Balanced and elliptic.
/// - custom_table: finitely many atoms drawn with the given weights.
struct SiteLaw {
  LawKind kind = LawKind::simple_random_walk;
  int dim = 2;
  double ellipticity = 0.0;
  std::vector<SiteKernel> atoms;
  std::vector<double> weights;

  static SiteLaw uniform_axis(int d) { return {LawKind::uniform_axis, d, 0.0, {}, {}}; }
  static SiteLaw simple_random_walk(int d) { return {LawKind::simple_random_walk, d, 0.0, {}, {}}; }
  static SiteLaw elliptic_mixture(int d, double eta) { return {LawKind::elliptic_mixture, d, eta, {}, {}}; }
  static SiteLaw custom_table(std::vector<SiteKernel> atoms, std::vector<double> weights) {
    const int d = atoms.empty() ? 0 : atoms.front().dim();
    return {LawKind::custom_table, d, 0.0, std::move(atoms), std::move(weights)};
  }

  void validate() const {
    require(dim >= 1 && dim <= kMaxDim, "law dimension out of range");
    switch (kind) {
      case LawKind::uniform_axis:
      case LawKind::simple_random_walk:
        break;
      case LawKind::elliptic_mixture:
        require(ellipticity > 0 && ellipticity <= 1.0 / dim, "elliptic-mixture needs eta in (0, 1/d]");
        break;
      case LawKind::custom_table: {
        require(!atoms.empty() && atoms.size() == weights.size(), "custom table needs matching atoms and weights");
        double s = 0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
          require(atoms[i].dim() == dim, "custom atom dimension mismatch");
          require(atoms[i].valid(), "custom atom " + std::to_string(i) + " is not a probability vector");
          require(weights[i] >= 0, "custom weights must be non-negative");
          s += weights[i];
        }
        require(std::abs(s - 1.0) <= 1e-12, "custom weights must sum to 1");
        break;
      }
    }
  }

  /// True when every site receives the same kernel.
  bool deterministic() const { return kind == LawKind::simple_random_walk; }

  std::string id() const {
    switch (kind) {
      case LawKind::uniform_axis: return "uniform-axis";
      case LawKind::simple_random_walk: return "simple-random-walk";
      case LawKind::elliptic_mixture: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "elliptic-mixture:%.17g", ellipticity);
        return buf;
      }
      case LawKind::custom_table: return "custom-table:" + std::to_string(atoms.size());
    }
    return "unknown";
  }

  SiteKernel draw(CounterRng& rng) const {
    switch (kind) {
      case LawKind::uniform_axis: {
        const auto axis = static_cast<int>(rng.uniform() * dim);
        return SiteKernel::axis(dim, std::min(axis, dim - 1));
      }
      case LawKind::simple_random_walk: return SiteKernel::uniform(dim);
      case LawKind::elliptic_mixture: {
        // uniform point on the simplex via sorted spacings
        std::array<double, kMaxDim + 1> cuts{};
        for (int i = 0; i < dim - 1; ++i) cuts[i] = rng.uniform();
        std::sort(cuts.begin(), cuts.begin() + dim - 1);
        SiteKernel k(dim);
        double prev = 0;
        for (int i = 0; i < dim; ++i) {
          const double cut = (i < dim - 1) ? cuts[i] : 1.0;
          const double w = ellipticity + (1.0 - dim * ellipticity) * (cut - prev);
          prev = cut;
          k[i] = 0.5 * w;
          k[i + dim] = 0.5 * w;
        }
        return k;
      }
      case LawKind::custom_table: {
        const double u = rng.uniform();
        double acc = 0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
          acc += weights[i];
          if (u < acc) return atoms[i];
        }
        for (std::size_t i = atoms.size(); i-- > 0;)
          if (weights[i] > 0) return atoms[i];
        return atoms.back();
      }
    }
    return SiteKernel::uniform(dim);
  }
};

/// An environment on a finite box. Kernels are either stored densely or
/// regenerated on demand from (law, seed); both routes give identical values
/// because each site draws from its own counter-based stream.
class Environment {
 public:
  Environment() = default;

  /// Dense environment from a row-major array of 2d probabilities per site.
  static Environment from_kernels(Box box, std::string law_id, std::uint64_t seed, std::vector<double> probs) {
    const int d = box.dim();
    if (static_cast<std::int64_t>(probs.size()) != box.volume() * 2 * d)
      throw InvalidArgument("kernel array size does not match the box");
    Environment env;
    env.box_ = box;
    env.law_id_ = std::move(law_id);
    env.seed_ = seed;
    env.probs_ = std::move(probs);
    bool same = true;
    const SiteKernel first(d, std::span<const double>(env.probs_.data(), 2 * d));
    for (std::int64_t i = 0; i < box.volume(); ++i) {
      SiteKernel k(d, std::span<const double>(env.probs_.data() + i * 2 * d, 2 * d));
      if (!k.valid()) throw InvalidArgument("invalid kernel at site " + box.site_at(i).str());
      same = same && k == first;
    }
    if (same) env.homogeneous_ = first;
    return env;
  }

  /// Lazy environment; kernels are regenerated from the law on every lookup.
  static Environment procedural(const SiteLaw& law, Box box, std::uint64_t seed) {
    law.validate();
    require(law.dim == box.dim(), "law and box dimensions differ");
    Environment env;
    env.box_ = box;
    env.law_id_ = law.id();
    env.seed_ = seed;
    env.law_ = law;
    if (law.deterministic()) env.homogeneous_ = SiteKernel::uniform(law.dim);
    return env;
  }

  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  const std::string& law_id() const { return law_id_; }
  std::uint64_t seed() const { return seed_; }
  bool materialized() const { return !law_.has_value(); }
  bool contains(const Site& x) const { return box_.contains(x); }

  /// Kernel at the site with the given linear index (no bounds check on the box).
  SiteKernel kernel_at(std::int64_t linear) const {
    const int d = dim();
    if (law_) {
      CounterRng rng(stream_key(seed_, static_cast<std::uint64_t>(linear)));
      return law_->draw(rng);
    }
    return SiteKernel(d, std::span<const double>(probs_.data() + linear * 2 * d, 2 * d));
  }
  SiteKernel kernel(const Site& x) const {
    if (!box_.contains(x)) throw BoxExhausted("site " + x.str() + " lies outside the environment box");
    return kernel_at(box_.linear_index(x));
  }
  double prob(const Site& x, int k) const { return kernel(x)[k]; }

  /// Kernel shared by every site, when the environment is homogeneous by law.
  const std::optional<SiteKernel>& homogeneous_kernel() const { return homogeneous_; }
  /// Raw dense storage; empty for procedural environments.
  std::span<const double> dense_probs() const { return probs_; }

  /// Dense copy (procedural environments are materialized).
  Environment materialize() const {
    if (materialized()) return *this;
    const int d = dim();
    std::vector<double> probs(static_cast<std::size_t>(box_.volume() * 2 * d));
    for (std::int64_t i = 0; i < box_.volume(); ++i) {
      const SiteKernel k = kernel_at(i);
      std::copy(k.probs().begin(), k.probs().end(), probs.begin() + i * 2 * d);
    }
    return from_kernels(box_, law_id_, seed_, std::move(probs));
  }

  friend bool operator==(const Environment& a, const Environment& b) {
    if (!(a.box_ == b.box_) || a.law_id_ != b.law_id_ || a.seed_ != b.seed_) return false;
    for (std::int64_t i = 0; i < a.box_.volume(); ++i)
      if (!(a.kernel_at(i) == b.kernel_at(i))) return false;
    return true;
  }

 private:
  Box box_;
  std::string law_id_;
  std::uint64_t seed_ = 0;
  std::vector<double> probs_;
  std::optional<SiteLaw> law_;
  std::optional<SiteKernel> homogeneous_;
};

/// Boxes up to this many sites are stored densely by sample_iid.
inline constexpr std::int64_t kDenseSiteLimit = std::int64_t{1} << 22;

/// Draws every site of the box independently from the law. Site i uses the
/// stream keyed by (seed, i), so the result is reproducible bit for bit.
inline Environment sample_iid(const SiteLaw& law, const Box& box, std::uint64_t seed) {
  Environment lazy = Environment::procedural(law, box, seed);
  if (box.volume() > kDenseSiteLimit) return lazy;
  return lazy.materialize();
}

struct BalanceReport {
  bool balanced = true;
  std::optional<Site> violating_site;
};

inline BalanceReport is_balanced(const Environment& env) {
  const Box& box = env.box();
  for (std::int64_t i = 0; i < box.volume(); ++i) {
    if (!env.kernel_at(i).balanced()) return {false, box.site_at(i)};
  }
  return {};
}

/// Every one of the 2d directions has positive probability at some site.
inline bool is_genuinely_d_dimensional(const Environment& env) {
  const int d = env.dim();
  std::array<bool, 2 * kMaxDim> seen{};
  int missing = 2 * d;
  for (std::int64_t i = 0; i < env.box().volume() && missing > 0; ++i) {
    const SiteKernel k = env.kernel_at(i);
    for (int j = 0; j < 2 * d; ++j) {
      if (!seen[j] && k[j] > 0) {
        seen[j] = true;
        --missing;
      }
    }
  }
  return missing == 0;
}

/// Zeroes kernel entries below kappa and spreads the removed mass evenly over
/// the surviving entries.
inline SiteKernel truncate_kernel(const SiteKernel& k, double kappa) {
  SiteKernel out(k.dim());
  double removed = 0;
  int survivors = 0;
  for (int j = 0; j < k.size(); ++j) {
    if (k[j] < kappa) {
      removed += k[j];
    } else {
      ++survivors;
    }
  }
  if (survivors == 0) throw Error("truncation removed every direction; kappa must be below 1/(2d)");
  const double share = removed / survivors;
  for (int j = 0; j < k.size(); ++j) out[j] = k[j] < kappa ? 0.0 : k[j] + share;
  return out;
}

inline Environment truncate_renormalize(const Environment& env, double kappa) {
  const int d = env.dim();
  require(kappa > 0 && kappa < 1.0 / (2 * d), "kappa must lie in (0, 1/(2d))");
  const Box& box = env.box();
  std::vector<double> probs(static_cast<std::size_t>(box.volume() * 2 * d));
  for (std::int64_t i = 0; i < box.volume(); ++i) {
    const SiteKernel k = truncate_kernel(env.kernel_at(i), kappa);
    std::copy(k.probs().begin(), k.probs().end(), probs.begin() + i * 2 * d);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "|truncated:%.17g", kappa);
  return Environment::from_kernels(box, env.law_id() + buf, env.seed(), std::move(probs));
}

/// Environment exhibiting an absorbing region far from two high-value probe
/// sites, used to show that the Harnack inequality needs a growth condition.
struct CounterexampleEnvironment {
  Environment env;
  int radius = 0;                // R; the experiment cylinder has radius 2R
  std::int64_t sink_row = 0;     // x_2 coordinate of the absorbing row
  std::vector<Site> sink;        // absorbing sites inside the box
  Site probe1, probe2;           // adjacent sites of opposite parity on the probe row
};

/// Layout (d = 2, cylinder of radius 2R about the origin):
/// - the row x_2 = -1 moves only along axis 1, so it is closed under the walk;
/// - the probe row x_2 = R, |x_1| <= R - 1 also moves along axis 1, which lets
///   the walk linger near the probes (0, R) and (1, R);
/// - every other site moves along axis 2.
/// All kernels are uniform-axis atoms, hence balanced. A balanced environment
/// has no finite closed set, so the absorbing row necessarily spans the box.
inline CounterexampleEnvironment sink_env_counterexample(int radius) {
  require(radius >= 2, "the counterexample needs R >= 2");
  const int d = 2;
  const std::int64_t half = 2 * static_cast<std::int64_t>(radius);
  const Box box = Box::centered(d, half);
  CounterexampleEnvironment out;
  out.radius = radius;
  out.sink_row = -1;
  out.probe1 = Site{0, radius};
  out.probe2 = Site{1, radius};
  std::vector<double> probs(static_cast<std::size_t>(box.volume() * 2 * d));
  for (std::int64_t i = 0; i < box.volume(); ++i) {
    const Site x = box.site_at(i);
    int axis = 1;
    if (x[1] == out.sink_row) {
      axis = 0;
      out.sink.push_back(x);
    } else if (x[1] == radius && std::llabs(x[0]) <= radius - 1) {
      axis = 0;
    }
    const SiteKernel k = SiteKernel::axis(d, axis);
    std::copy(k.probs().begin(), k.probs().end(), probs.begin() + i * 2 * d);
  }
  out.env = Environment::from_kernels(box, "counterexample-R" + std::to_string(radius), 0, std::move(probs));
  return out;
}

}  // namespace rwre

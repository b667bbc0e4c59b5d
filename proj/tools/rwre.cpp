// Batch driver: one subcommand per run, outputs written as <name>.partial and
// renamed on success. Exit codes: 0 ok, 1 bad command line or config (nothing
// written), 2 runtime failure (partial files left in place).

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rwre/abp.hpp"
#include "rwre/caloric.hpp"
#include "rwre/environment.hpp"
#include "rwre/environment_io.hpp"
#include "rwre/experiments.hpp"
#include "rwre/homogenize.hpp"
#include "rwre/sink.hpp"
#include "rwre/walk.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rwre;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// Planned output files. Nothing touches the disk until open().
class Outputs {
 public:
  void set_force(bool f) { force_ = f; }
  void add_input(const std::string& p) {
    if (!p.empty()) inputs_.push_back(fs::absolute(p).lexically_normal());
  }
  void plan(const fs::path& p) {
    const auto abs = fs::absolute(p).lexically_normal();
    for (const auto& in : inputs_) check(abs != in, "output " + p.string() + " would overwrite an input");
    check(force_ || !fs::exists(abs), "output " + p.string() + " exists; pass --force to replace it");
    paths_.push_back(p);
  }
  std::ofstream& open(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    auto& s = streams_[p.string()];
    s.open(partial(p), std::ios::binary | std::ios::trunc);
    if (!s) throw Error("cannot write " + partial(p).string());
    return s;
  }
  void commit() {
    for (auto& [_, s] : streams_) s.close();
    for (const auto& p : paths_)
      if (fs::exists(partial(p))) fs::rename(partial(p), p);
  }
  void close_all() {
    for (auto& [_, s] : streams_) s.close();
  }

 private:
  static fs::path partial(const fs::path& p) { return fs::path(p.string() + ".partial"); }
  bool force_ = false;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> paths_;
  std::map<std::string, std::ofstream> streams_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Applies config keys to options not given on the command line.
void apply_config(CLI::App* sub, const json& cfg) {
  check(cfg.is_object(), "config must be a JSON object");
  check(cfg.contains("version") && cfg["version"].is_number_integer() && cfg["version"].get<int>() == kReportVersion,
        "config needs \"version\": " + std::to_string(kReportVersion));
  for (const auto& [key, value] : cfg.items()) {
    if (key == "version") continue;
    if (key == "command") {
      check(value.is_string() && value.get<std::string>() == sub->get_name(),
            "config is for command '" + value.dump() + "', not '" + sub->get_name() + "'");
      continue;
    }
    check(key != "config", "config files cannot nest");
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    check(opt != nullptr, "unknown config key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;  // command line wins
    auto scalar = [](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      check(v.is_number(), "config values must be strings, numbers, booleans or arrays of those");
      return v.dump();
    };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(scalar(v));
    } else {
      opt->add_result(scalar(value));
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

std::vector<std::int64_t> parse_ints(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    check(!tok.empty(), "empty entry in '" + s + "'");
    std::size_t used = 0;
    out.push_back(std::stoll(tok, &used));
    check(used == tok.size(), "bad integer '" + tok + "'");
  }
  return out;
}

struct EnvSource {
  std::string file;
  std::string law = "uniform-axis";
  int d = 2;
  double eta = 0.1;

  void add_to(CLI::App* sub) {
    sub->add_option("--env", file, "environment file (.rwre binary or .json); sampled from --law otherwise");
    sub->add_option("--law", law, "uniform-axis | simple-random-walk | elliptic-mixture");
    sub->add_option("--d", d, "dimension")->check(CLI::Range(1, kMaxDim));
    sub->add_option("--eta", eta, "ellipticity of elliptic-mixture");
  }
  void validate() const {
    if (file.empty()) parse_law(law, d, eta).validate();
    else check(fs::exists(file), "environment file " + file + " not found");
  }
  Environment load(std::int64_t half, std::uint64_t seed) const {
    if (file.empty()) return sample_iid(parse_law(law, d, eta), Box::centered(d, half), seed);
    const std::string bytes = read_file(file);
    if (file.size() > 5 && file.substr(file.size() - 5) == ".json") return environment_from_json(json::parse(bytes));
    return deserialize(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
  }
};

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  int workers = 1;
  bool force = false;
  bool seed_from_cli = false;

  void add_to(CLI::App* sub, const std::string& out_help) {
    sub->add_option("--config", config, "JSON config (keys are the long option names, plus \"version\")");
    sub->add_option("--out", out, out_help);
    sub->add_option("--seed", seed, "base seed (RWRE_SEED overrides the config, --seed overrides both)");
    sub->add_option("--workers", workers, "worker threads (default RWRE_WORKERS or 1)")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "replace existing outputs");
  }
};

struct EnvCmd {
  std::int64_t box = 16;
};
struct SolveCmd {
  double radius = 8;
  std::string datum = "0";
};
struct ExitCmd {
  double radius = 8;
  std::string start;
  std::int64_t samples = 100000;
  std::string partition = "quadrants";
};
struct SinkCmd {
  std::int64_t box = 8;
  double radius = 0;
  double xi = 0.05;
  double c = 1;
};
struct AbpCmd {
  double radius = 6;
  int k = 2;
  int fields = 10;
};
struct HomogCmd {
  std::vector<double> radii{8, 16};
  int seeds = 5;
  std::string field = "exponential";
  std::vector<double> params{1, 0};
  std::vector<double> diffusivity;
};
struct CoupleCmd {
  double radius = 6;
  int seeds = 5;
  std::string partition = "points";
};
struct CounterCmd {
  int radius = 3;
  double w = 2;
  double xi = 0.1;
};
struct TransCmd {
  std::vector<std::int64_t> horizons{10000, 100000};
  std::int64_t samples = 1000;
};

void add_experiment_options(CLI::App* sub, ExperimentConfig& c) {
  sub->add_option("--law", c.law, "site law");
  sub->add_option("--d", c.d, "dimension")->check(CLI::Range(1, kMaxDim));
  sub->add_option("--eta", c.eta, "ellipticity of elliptic-mixture");
  sub->add_option("--radii", c.radii, "radii R")->delimiter(',');
  sub->add_option("--seeds", c.seed_count, "number of seeds (seed, seed+1, ...)");
  sub->add_option("--epsilon", c.epsilon, "epsilon in (0, 2 - sqrt 3)");
  sub->add_option("--xi", c.xi, "growth exponent xi in (0, 1/5)");
  sub->add_option("--w", c.w, "growth base w > 1");
  sub->add_option("--zeta", c.zeta, "outer scale zeta > 1");
  sub->add_option("--data", c.data_count, "boundary data per field family (1..20)");
  sub->add_option("--harnack-grid", c.harnack_grid, "continuum grid for the Harnack constant (0 = skip)");
}

// The partition cells for exit and couple.
std::vector<BoundaryCell> named_partition(const std::string& name, double radius, int d) {
  if (name == "quadrants") {
    check(d == 2, "the quadrant partition is two-dimensional");
    return lattice_cells(quadrant_partition(), radius);
  }
  if (name == "sides") {
    const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, radius);
    return {{"lateral", [c](const SpaceTimePoint& p) { return !c.in_spatial_ball(p.site); }},
            {"top", [c](const SpaceTimePoint& p) { return c.in_spatial_ball(p.site); }}};
  }
  throw ConfigError("unknown partition '" + name + "'");
}

int cell_index(const std::vector<BoundaryCell>& cells, const SpaceTimePoint& p) {
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].contains(p)) return static_cast<int>(i);
  throw Error("exit point " + p.str() + " lies in no cell");
}

fs::path in_dir(const std::string& dir, const std::string& name) { return fs::path(dir) / name; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks in balanced random environments: solvers and experiments"};
  app.require_subcommand(1, 1);
  Common common;
  common.workers = default_workers();
  EnvSource src;
  EnvCmd envc;
  SolveCmd solve;
  ExitCmd exitc;
  SinkCmd sinkc;
  AbpCmd abpc;
  HomogCmd homog;
  ExperimentConfig expc;
  CoupleCmd couple;
  CounterCmd counter;
  TransCmd trans;
  std::string trans_law = "simple-random-walk";
  int trans_d = 3;

  auto* env_cmd = app.add_subcommand("env", "sample an environment and write it");
  common.add_to(env_cmd, "output file (.rwre binary, or .json)");
  src.add_to(env_cmd);
  env_cmd->add_option("--box", envc.box, "box half-width")->check(CLI::PositiveNumber);

  auto* solve_cmd = app.add_subcommand("solve", "solve a boundary value problem on K_R");
  common.add_to(solve_cmd, "output directory");
  src.add_to(solve_cmd);
  solve_cmd->add_option("--R", solve.radius, "cylinder radius");
  solve_cmd->add_option("--datum", solve.datum, "datum id 0..19 of the standard family, or 'parity'");

  auto* exit_cmd = app.add_subcommand("exit", "exact exit law against Monte Carlo");
  common.add_to(exit_cmd, "output directory");
  src.add_to(exit_cmd);
  exit_cmd->add_option("--R", exitc.radius, "cylinder radius");
  exit_cmd->add_option("--start", exitc.start, "start x1,...,xd,t (default origin, t = 0)");
  exit_cmd->add_option("--samples", exitc.samples, "Monte Carlo walks")->check(CLI::PositiveNumber);
  exit_cmd->add_option("--partition", exitc.partition, "quadrants (d = 2) | sides");

  auto* sink_cmd = app.add_subcommand("sink", "sink decomposition and small-scale events");
  common.add_to(sink_cmd, "output directory");
  src.add_to(sink_cmd);
  sink_cmd->add_option("--box", sinkc.box, "box half-width when sampling")->check(CLI::PositiveNumber);
  sink_cmd->add_option("--R", sinkc.radius, "radius for the small-scale events (0 = skip)");
  sink_cmd->add_option("--xi", sinkc.xi, "ellipticity threshold");
  sink_cmd->add_option("--c", sinkc.c, "distance constant");

  auto* abp_cmd = app.add_subcommand("abp", "geometric inequalities on random admissible fields");
  common.add_to(abp_cmd, "output directory");
  src.add_to(abp_cmd);
  abp_cmd->add_option("--R", abpc.radius, "radius");
  abp_cmd->add_option("--k", abpc.k, "cover parameter k")->check(CLI::PositiveNumber);
  abp_cmd->add_option("--fields", abpc.fields, "number of fields")->check(CLI::PositiveNumber);

  auto* homog_cmd = app.add_subcommand("homog", "discrete versus continuum caloric functions");
  common.add_to(homog_cmd, "output directory");
  src.add_to(homog_cmd);
  homog_cmd->add_option("--radii", homog.radii, "radii R")->delimiter(',');
  homog_cmd->add_option("--seeds", homog.seeds, "number of seeds")->check(CLI::PositiveNumber);
  homog_cmd->add_option("--field", homog.field, "exponential | quadratic | coordinate | constant");
  homog_cmd->add_option("--params", homog.params, "lambda, axis index or constant")->delimiter(',');
  homog_cmd->add_option("--diffusivity", homog.diffusivity, "diagonal of the effective covariance (default 1/d)")->delimiter(',');

  auto* phi_cmd = app.add_subcommand("phi", "Harnack ratios under the growth filter");
  common.add_to(phi_cmd, "output directory");
  add_experiment_options(phi_cmd, expc);

  auto* osc_cmd = app.add_subcommand("osc", "oscillation contraction ratios");
  common.add_to(osc_cmd, "output directory");
  add_experiment_options(osc_cmd, expc);

  auto* couple_cmd = app.add_subcommand("couple", "coupling success against start distance");
  common.add_to(couple_cmd, "output directory");
  src.add_to(couple_cmd);
  couple_cmd->add_option("--R", couple.radius, "cylinder radius");
  couple_cmd->add_option("--seeds", couple.seeds, "number of seeds")->check(CLI::PositiveNumber);
  couple_cmd->add_option("--partition", couple.partition, "points | quadrants (d = 2) | sides");

  auto* counter_cmd = app.add_subcommand("counter", "the sink counterexample");
  common.add_to(counter_cmd, "output directory");
  counter_cmd->add_option("--R", counter.radius, "R in 2..4");
  counter_cmd->add_option("--w", counter.w, "growth base");
  counter_cmd->add_option("--xi", counter.xi, "growth exponent");

  auto* trans_cmd = app.add_subcommand("trans", "visits to the start over growing horizons");
  common.add_to(trans_cmd, "output directory");
  trans_cmd->add_option("--law", trans_law, "site law");
  trans_cmd->add_option("--d", trans_d, "dimension (2 or 3)");
  trans_cmd->add_option("--horizons", trans.horizons, "checkpoint horizons")->delimiter(',');
  trans_cmd->add_option("--samples", trans.samples, "walks")->check(CLI::PositiveNumber);

  Outputs outs;
  CLI::App* sub = nullptr;
  // ---- configuration phase: any failure exits 1 with nothing written
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? 0 : 1;
    }
    sub = app.get_subcommands().front();
    common.seed_from_cli = sub->get_option("--seed")->count() > 0;
    if (!common.config.empty()) {
      json cfg;
      try {
        cfg = json::parse(read_file(common.config));
      } catch (const json::exception& e) {
        throw ConfigError("malformed config " + common.config + ": " + e.what());
      }
      apply_config(sub, cfg);
    }
    if (!common.seed_from_cli)
      if (const char* s = std::getenv("RWRE_SEED")) {
        try {
          std::size_t used = 0;
          common.seed = std::stoull(s, &used);
          check(used == std::string(s).size(), "");
        } catch (...) {
          throw ConfigError(std::string("RWRE_SEED is not an unsigned integer: ") + s);
        }
      }
    check(!common.out.empty(), "--out is required");
    outs.set_force(common.force);
    outs.add_input(common.config);
    outs.add_input(src.file);

    const std::string name = sub->get_name();
    const std::string& dir = common.out;
    if (name == "env") {
      src.file.clear();
      src.validate();
      outs.plan(dir);
    } else if (name == "solve") {
      src.validate();
      check(solve.radius >= 1, "--R must be at least 1");
      if (solve.datum != "parity") {
        check(solve.datum.find_first_not_of("0123456789") == std::string::npos && !solve.datum.empty(),
              "--datum must be 0..19 or 'parity'");
        check(std::stoi(solve.datum) < 20, "--datum must be 0..19 or 'parity'");
      }
      outs.plan(in_dir(dir, "field.csv"));
      outs.plan(in_dir(dir, "solve.json"));
    } else if (name == "exit") {
      src.validate();
      check(exitc.radius >= 1, "--R must be at least 1");
      named_partition(exitc.partition, exitc.radius, src.file.empty() ? src.d : 2);
      if (!exitc.start.empty()) parse_ints(exitc.start);
      outs.plan(in_dir(dir, "exit.csv"));
      outs.plan(in_dir(dir, "exit.json"));
    } else if (name == "sink") {
      src.validate();
      check(sinkc.radius >= 0 && sinkc.xi > 0 && sinkc.c > 0, "--R >= 0, --xi > 0 and --c > 0 are required");
      outs.plan(in_dir(dir, "sinks.json"));
      if (sinkc.radius > 0) outs.plan(in_dir(dir, "events.json"));
    } else if (name == "abp") {
      if (sub->get_option("--law")->count() == 0) src.law = "simple-random-walk";
      src.validate();
      check(src.file.empty() ? src.d == 2 : true, "the geometric inequalities are checked in d = 2");
      check(abpc.k < abpc.radius, "--k must be below --R");
      outs.plan(in_dir(dir, "abp.csv"));
      outs.plan(in_dir(dir, "abp.json"));
    } else if (name == "homog") {
      src.validate();
      check(!homog.radii.empty(), "--radii must not be empty");
      for (double r : homog.radii) check(r >= 2, "radii must be at least 2");
      const int d = src.d;
      if (homog.diffusivity.empty()) homog.diffusivity.assign(d, 1.0 / d);
      check(static_cast<int>(homog.diffusivity.size()) == d, "--diffusivity needs d entries");
      (void)reference_caloric(parse_field_kind(homog.field), homog.diffusivity, homog.params);
      outs.plan(in_dir(dir, "homog.csv"));
      outs.plan(in_dir(dir, "homog.json"));
    } else if (name == "phi" || name == "osc") {
      expc.seed = common.seed;
      expc.workers = common.workers;
      expc.validate();
      outs.plan(in_dir(dir, name + ".csv"));
      outs.plan(in_dir(dir, name + ".json"));
    } else if (name == "couple") {
      src.validate();
      check(couple.radius >= 2, "--R must be at least 2");
      if (couple.partition != "points") named_partition(couple.partition, couple.radius, src.d);
      outs.plan(in_dir(dir, "couple.csv"));
      outs.plan(in_dir(dir, "couple.json"));
    } else if (name == "counter") {
      check(counter.radius >= 2 && counter.radius <= 4, "--R must lie in 2..4");
      check(counter.w > 1 && counter.xi > 0 && counter.xi < 0.2, "--w > 1 and --xi in (0, 1/5) are required");
      outs.plan(in_dir(dir, "counter.json"));
    } else if (name == "trans") {
      check(trans_d == 2 || trans_d == 3, "--d must be 2 or 3");
      parse_law(trans_law, trans_d).validate();
      check(!trans.horizons.empty(), "--horizons must not be empty");
      for (auto h : trans.horizons) check(h >= 1, "horizons must be positive");
      check(trans.samples >= 2, "--samples must be at least 2");
      outs.plan(in_dir(dir, "trans.csv"));
      outs.plan(in_dir(dir, "trans.json"));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  // ---- run phase: failures exit 2 and leave .partial files
  const std::string name = sub->get_name();
  const std::string& dir = common.out;
  const std::uint64_t seed = common.seed;
  const int workers = common.workers;
  try {
    if (name == "env") {
      const Environment env = src.load(envc.box, seed);
      auto& os = outs.open(dir);
      if (dir.size() > 5 && dir.substr(dir.size() - 5) == ".json") {
        os << dump(to_json(env));
      } else {
        const auto bytes = serialize(env);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
    } else if (name == "solve") {
      const std::int64_t half = static_cast<std::int64_t>(std::ceil(solve.radius)) + 1;
      const Environment env = src.load(half, seed);
      const int d = env.dim();
      const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, solve.radius);
      const auto dom = ParabolicDomain::cylinder(c);
      CaloricField u = solve.datum == "parity"
                           ? solve_backward(env, dom,
                                            [](const SpaceTimePoint& p) {
                                              return parity_of(p) == Parity::odd ? 1.0 : 0.0;
                                            })
                           : solve_on_cylinder(env, solve.radius, standard_data_family(d, solve.radius)[std::stoi(solve.datum)]);
      write_field_csv(outs.open(in_dir(dir, "field.csv")), u);
      outs.open(in_dir(dir, "solve.json")) << dump({{"version", kReportVersion},
                                                    {"command", "solve"},
                                                    {"env", env.law_id()},
                                                    {"seed", env.seed()},
                                                    {"R", solve.radius},
                                                    {"datum", solve.datum},
                                                    {"value_at_origin", u(SpaceTimePoint{Site::zero(d), 0})},
                                                    {"max_caloric_residual", max_caloric_residual(env, u)}});
    } else if (name == "exit") {
      const std::int64_t half = static_cast<std::int64_t>(std::ceil(exitc.radius)) + 1;
      const Environment env = src.load(half, seed);
      const int d = env.dim();
      SpaceTimePoint start{Site::zero(d), 0};
      if (!exitc.start.empty()) {
        const auto v = parse_ints(exitc.start);
        require(static_cast<int>(v.size()) == d + 1, "--start needs d + 1 integers");
        for (int i = 0; i < d; ++i) start.site[i] = v[i];
        start.time = v[d];
      }
      const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, exitc.radius);
      const auto cells = named_partition(exitc.partition, exitc.radius, d);
      const auto exact = exit_distribution_exact(env, start, c, cells);
      const auto pts = exit_samples(env, start, c, exitc.samples, seed, workers);
      std::vector<double> mc(cells.size(), 0.0);
      for (const auto& p : pts) mc[cell_index(cells, p)] += 1;
      double tv = 0;
      auto& csv = outs.open(in_dir(dir, "exit.csv"));
      csv << "cell,exact,monte_carlo\n";
      for (std::size_t i = 0; i < cells.size(); ++i) {
        mc[i] /= static_cast<double>(exitc.samples);
        tv += 0.5 * std::abs(mc[i] - exact.masses[i]);
        csv << exact.labels[i] << ',' << format_value(exact.masses[i]) << ',' << format_value(mc[i]) << '\n';
      }
      outs.open(in_dir(dir, "exit.json")) << dump({{"version", kReportVersion},
                                                   {"command", "exit"},
                                                   {"R", exitc.radius},
                                                   {"start", start.str()},
                                                   {"samples", exitc.samples},
                                                   {"exact_total", exact.total()},
                                                   {"tv", tv}});
    } else if (name == "sink") {
      const Environment env = src.load(sinkc.box, seed);
      const auto g = build_reach_graph(env, env.box(), workers);
      const auto s = find_sinks(g);
      outs.open(in_dir(dir, "sinks.json")) << dump(sink_report_json(g, s));
      if (sinkc.radius > 0) {
        SmallScaleParams p;
        p.radius = sinkc.radius;
        p.xi = sinkc.xi;
        p.c = sinkc.c;
        outs.open(in_dir(dir, "events.json")) << dump(events_json(check_small_scale_events(env, p)));
      }
    } else if (name == "abp") {
      const auto dom = std::make_shared<const AbpDomain>(AbpDomain::q(abpc.radius, abpc.k, 2));
      const std::int64_t half = static_cast<std::int64_t>(std::ceil(abpc.radius)) + 3 * abpc.k + 2;
      auto& csv = outs.open(in_dir(dir, "abp.csv"));
      csv << "field,seed,sup_u,contact_points,cone_slack,min_volume_slack,pass\n";
      bool all = true;
      double worst = std::numeric_limits<double>::infinity();
      for (int f = 0; f < abpc.fields; ++f) {
        const std::uint64_t s = stream_key(seed, static_cast<std::uint64_t>(f));
        const Environment env = src.load(half, s);
        const auto u = random_admissible_field(dom, s);
        const auto r = verify_abp_chain(env, u, workers);
        const bool pass = r.cone_pass && r.volume_pass;
        all = all && pass;
        worst = std::min({worst, r.cone_slack, r.min_volume_slack});
        csv << f << ',' << s << ',' << format_value(r.sup_u) << ',' << r.contact_count << ','
            << format_value(r.cone_slack) << ',' << format_value(r.min_volume_slack) << ',' << (pass ? 1 : 0) << '\n';
      }
      outs.open(in_dir(dir, "abp.json")) << dump({{"version", kReportVersion},
                                                  {"command", "abp"},
                                                  {"R", abpc.radius},
                                                  {"k", abpc.k},
                                                  {"fields", abpc.fields},
                                                  {"all_pass", all},
                                                  {"min_slack", worst}});
    } else if (name == "homog") {
      const auto field = reference_caloric(parse_field_kind(homog.field), homog.diffusivity, homog.params);
      std::map<double, std::vector<double>> by_radius;
      auto& csv = outs.open(in_dir(dir, "homog.csv"));
      csv << "R,seed,sup_error\n";
      const double rmax = *std::max_element(homog.radii.begin(), homog.radii.end());
      const std::int64_t half = static_cast<std::int64_t>(std::ceil(rmax)) + 1;
      std::vector<std::vector<double>> errs(homog.seeds, std::vector<double>(homog.radii.size()));
      parallel_for(homog.seeds, workers, [&](std::int64_t i) {
        const Environment env = src.load(half, seed + static_cast<std::uint64_t>(i));
        for (std::size_t k = 0; k < homog.radii.size(); ++k)
          errs[i][k] = homogenization_error(env, homog.radii[k], field).sup_error;
      });
      for (int i = 0; i < homog.seeds; ++i)
        for (std::size_t k = 0; k < homog.radii.size(); ++k) {
          csv << format_value(homog.radii[k]) << ',' << seed + static_cast<std::uint64_t>(i) << ','
              << format_value(errs[i][k]) << '\n';
          by_radius[homog.radii[k]].push_back(errs[i][k]);
        }
      json med = json::array();
      for (const auto& [r, v] : by_radius) med.push_back({{"R", r}, {"median_sup_error", median(v)}});
      outs.open(in_dir(dir, "homog.json")) << dump({{"version", kReportVersion},
                                                    {"command", "homog"},
                                                    {"field", field.name},
                                                    {"seeds", homog.seeds},
                                                    {"medians", med}});
    } else if (name == "phi") {
      const auto rep = phi_experiment(expc);
      write_phi_csv(outs.open(in_dir(dir, "phi.csv")), rep);
      outs.open(in_dir(dir, "phi.json")) << dump(phi_summary_json(rep));
    } else if (name == "osc") {
      const auto rep = oscillation_experiment(expc);
      write_osc_csv(outs.open(in_dir(dir, "osc.csv")), rep);
      outs.open(in_dir(dir, "osc.json")) << dump(osc_summary_json(rep));
    } else if (name == "couple") {
      const std::int64_t half = static_cast<std::int64_t>(std::ceil(couple.radius)) + 1;
      auto& csv = outs.open(in_dir(dir, "couple.csv"));
      csv << "seed,offset,distance,tv,success\n";
      std::vector<std::vector<std::pair<std::int64_t, CouplingResult>>> rows(couple.seeds);
      const std::vector<BoundaryCell> cells =
          couple.partition == "points" ? std::vector<BoundaryCell>{} : named_partition(couple.partition, couple.radius, src.d);
      parallel_for(couple.seeds, workers, [&](std::int64_t i) {
        const Environment env = src.load(half, seed + static_cast<std::uint64_t>(i));
        const int d = env.dim();
        const Cylinder c(SpaceTimePoint{Site::zero(d), 0}, couple.radius);
        const SpaceTimePoint x{Site::zero(d), 0};
        for (std::int64_t k = 2; static_cast<double>(k) < couple.radius; k += 2) {
          SpaceTimePoint y = x;
          y.site[0] = k;
          rows[i].push_back({k, coupling_success(env, x, y, c, cells)});
        }
      });
      json summary = json::array();
      for (int i = 0; i < couple.seeds; ++i)
        for (const auto& [k, r] : rows[i]) {
          csv << seed + static_cast<std::uint64_t>(i) << ',' << k << ',' << format_value(static_cast<double>(k) / couple.radius)
              << ',' << format_value(r.tv) << ',' << format_value(r.success) << '\n';
          summary.push_back({{"seed", seed + static_cast<std::uint64_t>(i)}, {"offset", k}, {"tv", r.tv}});
        }
      outs.open(in_dir(dir, "couple.json")) << dump({{"version", kReportVersion},
                                                     {"command", "couple"},
                                                     {"R", couple.radius},
                                                     {"partition", couple.partition},
                                                     {"pairs", summary}});
    } else if (name == "counter") {
      const auto rep = counterexample_experiment(counter.radius, counter.w, counter.xi);
      outs.open(in_dir(dir, "counter.json")) << dump(counterexample_json(rep));
      std::cout << "ratio " << format_value(rep.ratio()) << "  threshold "
                << format_value(std::ldexp(1.0, counter.radius * counter.radius)) << "  growth condition "
                << (rep.growth_even || rep.growth_odd ? "holds" : "fails") << "\n";
    } else if (name == "trans") {
      const auto rep = transience_experiment(trans_law, trans_d, trans.horizons, trans.samples, seed, workers);
      write_transience_csv(outs.open(in_dir(dir, "trans.csv")), rep);
      outs.open(in_dir(dir, "trans.json")) << dump(transience_json(rep));
    }
  } catch (const std::exception& e) {
    outs.close_all();
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  outs.commit();
  return 0;
}

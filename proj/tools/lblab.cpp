// lblab: batch front-end for the kinetic-limit laboratory.  Every subcommand
// reads a JSON config, writes CSV/JSON artifacts atomically, and drops a
// manifest (config hash, seed, versions, wall time, data hashes) next to them.
// Exit codes: 0 ok, 2 config/schema violation, 3 numerical abort, 4 I/O failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lblab/dispersion.hpp"
#include "lblab/ensemble.hpp"
#include "lblab/hierarchy.hpp"
#include "lblab/io.hpp"
#include "lblab/kinetic_ops.hpp"
#include "lblab/nbody.hpp"
#include "lblab/potential.hpp"
#include "lblab/vgrid.hpp"
#include "lblab/walks.hpp"

namespace {

using nlohmann::json;
using namespace lblab;

constexpr long long kSeedUnset = std::numeric_limits<long long>::min();

struct CommonFlags {
  std::string config;
  long long seed = kSeedUnset;
  std::string out;
  int threads = 0;
};

// Per-run bookkeeping: where outputs go and what was written.
struct Ctx {
  std::string command;
  std::string name;
  std::string outdir;
  json config;
  long long seed = 0;
  int threads = 1;
  std::chrono::steady_clock::time_point t0;
  std::vector<std::pair<std::string, std::string>> outputs;  // (file, hash)
};

std::string default_outdir(const CommonFlags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("LBLAB_OUT_DIR"); env && *env) return env;
  return ".";
}

json load_config(const std::string& path) {
  json cfg = json::parse(io::read_file(path));
  require(cfg.is_object(), "config: top level must be a JSON object");
  if (cfg.contains("schema_version"))
    require(cfg.at("schema_version").get<std::string>() == "1",
            "config: unsupported schema_version (expected \"1\")");
  return cfg;
}

Ctx make_ctx(const std::string& command, const CommonFlags& f, bool needs_config,
             bool needs_seed) {
  Ctx ctx;
  ctx.command = command;
  ctx.t0 = std::chrono::steady_clock::now();
  ctx.outdir = default_outdir(f);
  if (needs_config || !f.config.empty()) ctx.config = load_config(f.config);
  else ctx.config = json::object();
  ctx.name = ctx.config.value("name", command);
  if (f.seed != kSeedUnset)
    ctx.seed = f.seed;
  else if (ctx.config.contains("seed"))
    ctx.seed = ctx.config.at("seed").get<long long>();
  else if (needs_seed)
    throw std::invalid_argument(command + ": a seed is required (config \"seed\" or --seed)");
  ctx.threads = (f.threads > 0) ? f.threads : ctx.config.value("threads", 1);
  require(ctx.threads >= 1, "threads must be >= 1");
  return ctx;
}

std::string out_path(const Ctx& ctx, const std::string& fname) {
  return (std::filesystem::path(ctx.outdir) / fname).string();
}

void ctx_write(Ctx& ctx, const std::string& fname, const std::string& bytes) {
  io::atomic_write(out_path(ctx, fname), bytes);
  ctx.outputs.emplace_back(fname, io::hash_hex(bytes));
}

void ctx_write_csv(Ctx& ctx, const std::string& fname,
                   const std::vector<io::Column>& cols) {
  ctx_write(ctx, fname, io::csv_text(cols));
}

void ctx_finish(Ctx& ctx) {
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.t0).count();
  json manifest = io::make_manifest(ctx.command, ctx.config, ctx.seed, wall, ctx.outputs);
  io::atomic_write(out_path(ctx, ctx.name + ".manifest.json"), manifest.dump(2) + "\n");
  std::cerr << ctx.command << ": wrote " << ctx.outputs.size() << " artifact(s) to "
            << ctx.outdir << " (" << io::fmt_g17(wall) << " s)\n";
}

// --------------------------------------------------------------------------
// Config fragments shared by several commands.

FourierPotential pot_from_config(const json& cfg) {
  require(cfg.contains("potential"), "config: missing \"potential\"");
  return io::potential_from_json(cfg.at("potential"));
}

VGrid grid_from_json(const json& j, double beta, int dim_default) {
  require(j.is_object(), "grid: expected an object");
  int dim = j.value("dim", dim_default);
  int n = j.at("n").get<int>();
  if (j.contains("vmax")) return VGrid(dim, n, j.at("vmax").get<double>());
  double widths = j.value("widths", 6.0);
  return VGrid::for_beta(dim, n, beta, widths);
}

// Velocity profile 1 + c He_m(sqrt(beta) v) exp(-a v^2) used for initial
// laws and hierarchy inputs; derivative is analytic.
struct HermiteProfile {
  double beta = 1.0;
  int m = 2;
  double c = 0.0;
  double a = 0.25;

  double value(double v) const {
    return 1.0 + c * hermite_he(m, std::sqrt(beta) * v) * std::exp(-a * v * v);
  }
  double deriv(double v) const {
    double y = std::sqrt(beta) * v;
    double he = hermite_he(m, y);
    double dhe = (m > 0) ? m * hermite_he(m - 1, y) * std::sqrt(beta) : 0.0;
    return c * (dhe - 2.0 * a * v * he) * std::exp(-a * v * v);
  }
};

HermiteProfile profile_from_json(const json& j, double beta) {
  HermiteProfile p;
  p.beta = beta;
  p.m = j.value("m", 2);
  p.c = j.value("c", 0.0);
  p.a = j.value("a", beta / 4.0);
  require(p.m >= 0 && p.m <= 12, "profile: Hermite index must lie in [0, 12]");
  require(p.a > 0.0, "profile: Gaussian factor must decay (a > 0)");
  return p;
}

GZero g0_from_json(const VGrid& grid, double beta, const json& j) {
  if (j.is_null() || (j.is_object() && j.value("type", "uniform") == std::string("uniform")))
    return GZero::uniform(grid);
  std::string type = j.at("type").get<std::string>();
  if (type == "hermite") {
    HermiteProfile p = profile_from_json(j, beta);
    return GZero::from_callable(grid, [p](double v) { return p.value(v); },
                                [p](double v) { return p.deriv(v); });
  }
  throw std::invalid_argument("g0: unknown type '" + type + "'");
}

// Tagged-particle initial law from config; returns the rejection law plus a
// normalized density ratio for predictions (the sampler only sees shapes).
struct TaggedLawSpec {
  TaggedInitLaw law;
  std::function<double(double)> g0_normalized;
};

TaggedLawSpec tagged_law_from_json(const json& j, double beta) {
  TaggedLawSpec out;
  if (j.is_null() || (j.is_object() && j.value("type", "maxwellian") == std::string("maxwellian"))) {
    out.law = TaggedInitLaw::maxwellian();
    out.g0_normalized = [](double) { return 1.0; };
    return out;
  }
  std::string type = j.at("type").get<std::string>();
  require(type == "hermite", "init law: unknown type '" + type + "'");
  HermiteProfile p = profile_from_json(j, beta);
  // Scan the profile: rejection needs 0 <= g0 <= bound.
  double hi = 0.0, lo = std::numeric_limits<double>::infinity();
  double vmax = 12.0 / std::sqrt(beta);
  for (int i = 0; i <= 4000; ++i) {
    double v = -vmax + 2.0 * vmax * i / 4000.0;
    double g = p.value(v);
    hi = std::max(hi, g);
    lo = std::min(lo, g);
  }
  require(lo >= 0.0, "init law: profile must be nonnegative for rejection sampling");
  out.law.g0 = [p](const std::array<double, 3>& v) { return p.value(v[0]); };
  out.law.g0_bound = hi * 1.02 + 1e-12;
  double z = maxwell_average([p](double v) { return p.value(v); }, beta);
  require(z > 1e-12, "init law: profile has vanishing mass");
  out.g0_normalized = [p, z](double v) { return p.value(v) / z; };
  return out;
}

// --------------------------------------------------------------------------
// CSV <-> grid functions.

struct ParsedCsv {
  std::vector<std::string> names, units;
  std::vector<std::vector<double>> cols;
};

ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv out;
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  require(lines.size() >= 2, "csv: need a name row and a unit row");
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string f;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(f);
        f.clear();
      } else {
        f += ch;
      }
    }
    fields.push_back(f);
    return fields;
  };
  out.names = split(lines[0]);
  out.units = split(lines[1]);
  require(out.units.size() == out.names.size(), "csv: unit row width mismatch");
  out.cols.assign(out.names.size(), {});
  for (std::size_t r = 2; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    auto fields = split(lines[r]);
    require(fields.size() == out.names.size(), "csv: ragged data row");
    for (std::size_t c = 0; c < fields.size(); ++c)
      out.cols[c].push_back(std::stod(fields[c]));
  }
  return out;
}

GridFn<double> gridfn_from_csv(const VGrid& grid, FnKind kind, const ParsedCsv& csv) {
  std::size_t want = grid.size();
  require(csv.cols.size() == std::size_t(grid.dim) + 1,
          "grid csv: expected coordinate column(s) plus one value column");
  require(csv.cols[0].size() == want, "grid csv: row count does not match the grid");
  GridFn<double> f(grid, kind);
  double tol = 1e-9 * std::max(1.0, grid.vmax);
  if (grid.dim == 1) {
    for (int i = 0; i < grid.n; ++i) {
      require(std::abs(csv.cols[0][i] - grid.coord(i)) <= tol,
              "grid csv: node coordinates do not match the configured grid");
      f[i] = csv.cols[1][i];
    }
  } else {
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j) {
        std::size_t r = grid.idx(i, j);
        require(std::abs(csv.cols[0][r] - grid.coord(i)) <= tol &&
                    std::abs(csv.cols[1][r] - grid.coord(j)) <= tol,
                "grid csv: node coordinates do not match the configured grid");
        f.values[r] = csv.cols[2][r];
      }
  }
  return f;
}

std::vector<io::Column> coord_columns(const VGrid& grid) {
  std::vector<io::Column> cols;
  if (grid.dim == 1) {
    io::Column v{"v", "velocity", {}};
    for (int i = 0; i < grid.n; ++i) v.values.push_back(grid.coord(i));
    cols.push_back(std::move(v));
  } else {
    io::Column vx{"vx", "velocity", {}}, vy{"vy", "velocity", {}};
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j) {
        vx.values.push_back(grid.coord(i));
        vy.values.push_back(grid.coord(j));
      }
    cols.push_back(std::move(vx));
    cols.push_back(std::move(vy));
  }
  return cols;
}

io::Column value_column(const std::string& name, const std::string& unit,
                        const std::vector<double>& values) {
  return io::Column{name, unit, values};
}

// --------------------------------------------------------------------------
// Subcommand runners.

void run_dispersion_scan(const CommonFlags& flags) {
  Ctx ctx = make_ctx("dispersion-scan", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  double bath_factor = cfg.value("bath_factor", 1.0);
  DispersionParams params(beta, pot, bath_factor);

  std::vector<std::array<int, 3>> modes;
  for (const auto& jm : cfg.at("modes")) {
    std::array<int, 3> m{0, 0, 0};
    if (jm.is_number_integer()) {
      m[0] = jm.get<int>();
    } else {
      require(jm.is_array() && jm.size() <= 3, "dispersion-scan: bad mode entry");
      for (std::size_t a = 0; a < jm.size(); ++a) m[a] = jm[a].get<int>();
    }
    modes.push_back(m);
  }
  const json& re = cfg.at("re_omega");
  double re_min = re.at("min").get<double>(), re_max = re.at("max").get<double>();
  int re_count = re.at("count").get<int>();
  std::vector<double> im_values = cfg.at("im_omega").get<std::vector<double>>();
  double threshold = cfg.value("threshold", 1e-6);

  PenroseScan scan = penrose_scan(params, modes, re_min, re_max, re_count,
                                  im_values, threshold);

  std::vector<io::Column> cols{
      {"k_index", "1", {}},    {"re_omega", "1/time", {}}, {"im_omega", "1/time", {}},
      {"re_eps", "1", {}},     {"im_eps", "1", {}},        {"abs_eps", "1", {}}};
  std::size_t per_mode = im_values.size() * std::size_t(re_count);
  for (std::size_t r = 0; r < scan.rows.size(); ++r) {
    const PenroseRow& row = scan.rows[r];
    cols[0].values.push_back(double(r / per_mode));
    cols[1].values.push_back(row.re_omega);
    cols[2].values.push_back(row.im_omega);
    cols[3].values.push_back(row.eps.real());
    cols[4].values.push_back(row.eps.imag());
    cols[5].values.push_back(std::abs(row.eps));
  }
  ctx_write_csv(ctx, ctx.name + ".csv", cols);

  json summary{{"min_abs_eps", scan.min_abs_eps},
               {"num_below_threshold", scan.num_below_threshold},
               {"threshold", scan.threshold},
               {"beta_sup_v", beta * pot.sup_norm_bound()}};
  ctx_write(ctx, ctx.name + ".summary.json", summary.dump(2) + "\n");
  ctx_finish(ctx);
}

void run_fp_apply(const CommonFlags& flags) {
  Ctx ctx = make_ctx("fp-apply", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  VGrid grid = grid_from_json(cfg.at("grid"), beta, pot.empty() ? 1 : pot.dim());

  GridFn<double> f(grid, FnKind::density);
  if (cfg.contains("input_csv")) {
    ParsedCsv csv = parse_csv(io::read_file(cfg.at("input_csv").get<std::string>()));
    f = gridfn_from_csv(grid, FnKind::density, csv);
  } else {
    f = maxwellian(grid, beta);
  }
  DiffusionField D = diffusion_tensor(beta, pot, grid);
  GridFn<double> out = fp_apply(beta, D, f);

  std::vector<io::Column> cols = coord_columns(grid);
  std::string den_unit = grid.dim == 1 ? "1/velocity" : "1/velocity^2";
  cols.push_back(value_column("f", den_unit, f.values));
  cols.push_back(value_column("Lf", den_unit + "/time", out.values));
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_fp_evolve(const CommonFlags& flags) {
  Ctx ctx = make_ctx("fp-evolve", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  VGrid grid = grid_from_json(cfg.at("grid"), beta, 1);
  require(grid.dim == 1, "fp-evolve: one-dimensional grids only");
  double T = cfg.at("T").get<double>(), dt = cfg.at("dt").get<double>();
  FpScheme scheme = FpScheme::implicit_euler;
  if (cfg.value("scheme", "implicit_euler") == std::string("explicit_euler"))
    scheme = FpScheme::explicit_euler;

  GridFn<double> f0 = maxwellian(grid, beta);
  if (cfg.contains("initial")) {
    const json& init = cfg.at("initial");
    std::string type = init.value("type", "maxwellian");
    if (type == "cosine") {
      double eps = init.value("eps", 0.25), freq = init.value("freq", 1.0);
      require(std::abs(eps) < 1.0, "fp-evolve: cosine amplitude must stay below 1");
      for (int i = 0; i < grid.n; ++i)
        f0[i] *= 1.0 + eps * std::cos(freq * grid.coord(i));
    } else if (type == "hermite") {
      HermiteProfile p = profile_from_json(init, beta);
      for (int i = 0; i < grid.n; ++i) f0[i] *= p.value(grid.coord(i));
    } else {
      require(type == "maxwellian", "fp-evolve: unknown initial type");
    }
  }

  DiffusionField D = diffusion_tensor(beta, pot, grid);
  FpTrajectory traj = fp_evolve(beta, D, f0, T, dt, scheme);

  std::vector<io::Column> series{
      {"t", "time", traj.times},
      {"mass", "1", traj.mass_history},
      {"h_functional", "1", traj.h_history}};
  ctx_write_csv(ctx, ctx.name + ".csv", series);

  std::vector<io::Column> final_cols = coord_columns(grid);
  final_cols.push_back(value_column("f", "1/velocity", traj.final.values));
  ctx_write_csv(ctx, ctx.name + "_final.csv", final_cols);
  ctx_finish(ctx);
}

void run_llb_apply(const CommonFlags& flags) {
  Ctx ctx = make_ctx("llb-apply", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  VGrid grid = grid_from_json(cfg.at("grid"), beta, pot.empty() ? 2 : pot.dim());
  FnKind kind = cfg.value("kind", "density") == std::string("ratio") ? FnKind::ratio
                                                                     : FnKind::density;
  GridFn<double> h(grid, kind);
  if (cfg.contains("input_csv")) {
    ParsedCsv csv = parse_csv(io::read_file(cfg.at("input_csv").get<std::string>()));
    h = gridfn_from_csv(grid, kind, csv);
  } else {
    // Default probe: an anisotropic quadratic mode, a natural non-equilibrium
    // direction for the collision operator.
    require(grid.dim == 2, "llb-apply: default input needs a 2-d grid");
    GridFn<double> M = maxwellian(grid, beta);
    for (int i = 0; i < grid.n; ++i)
      for (int j = 0; j < grid.n; ++j) {
        double v1 = grid.coord(i), v2 = grid.coord(j);
        double gi = 0.5 * beta * (v1 * v1 - v2 * v2);
        h.values[grid.idx(i, j)] =
            (kind == FnKind::density) ? M.values[grid.idx(i, j)] * gi : gi;
      }
  }
  GridFn<double> out = llb_apply(beta, pot, h);

  std::vector<io::Column> cols = coord_columns(grid);
  std::string unit = (kind == FnKind::density)
                         ? (grid.dim == 1 ? "1/velocity" : "1/velocity^2")
                         : "1";
  cols.push_back(value_column("h", unit, h.values));
  cols.push_back(value_column("Lh", unit + "/time", out.values));
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_gibbs_sample(const CommonFlags& flags) {
  Ctx ctx = make_ctx("gibbs-sample", flags, true, true);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  int N = cfg.at("N").get<int>();
  int samples = cfg.value("samples", 1);
  require(N >= 1 && samples >= 1, "gibbs-sample: N and samples must be >= 1");
  GibbsSamplerCfg gcfg;
  gcfg.burn_in_sweeps = cfg.value("burn_in_sweeps", gcfg.burn_in_sweeps);
  gcfg.step = cfg.value("step", gcfg.step);
  TaggedLawSpec law = tagged_law_from_json(cfg.value("init", json()), beta);

  int dim = pot.empty() ? cfg.value("dim", 1) : pot.dim();
  std::vector<io::Column> cols{{"sample", "1", {}}, {"particle", "1", {}}};
  for (int a = 0; a < dim; ++a)
    cols.push_back({std::string("x") + (dim == 1 ? "" : (a == 0 ? "1" : "2")), "torus", {}});
  for (int a = 0; a < dim; ++a)
    cols.push_back({std::string("v") + (dim == 1 ? "" : (a == 0 ? "1" : "2")), "velocity", {}});
  io::Column energy{"energy", "energy", {}};

  for (int s = 0; s < samples; ++s) {
    Rng rng(derive_seed(std::uint64_t(ctx.seed), std::uint64_t(s)));
    SimState st = sample_gibbs(pot, beta, N, gcfg, law.law, rng);
    double E = total_energy(pot, st);
    for (int j = 0; j <= st.N; ++j) {
      cols[0].values.push_back(s);
      cols[1].values.push_back(j);
      for (int a = 0; a < dim; ++a) cols[2 + a].values.push_back(st.xp(j)[a]);
      for (int a = 0; a < dim; ++a) cols[2 + dim + a].values.push_back(st.vp(j)[a]);
      energy.values.push_back(E);
    }
  }
  cols.push_back(std::move(energy));
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_nbody_run(const CommonFlags& flags) {
  Ctx ctx = make_ctx("nbody-run", flags, true, true);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  int N = cfg.at("N").get<int>();
  double T = cfg.at("T").get<double>(), dt = cfg.at("dt").get<double>();
  long every = cfg.value("observe_every", 1);
  require(N >= 1 && T > 0.0 && dt > 0.0 && every >= 1, "nbody-run: bad N/T/dt/stride");
  GibbsSamplerCfg gcfg;
  gcfg.burn_in_sweeps = cfg.value("burn_in_sweeps", gcfg.burn_in_sweeps);
  gcfg.step = cfg.value("step", gcfg.step);
  TaggedLawSpec law = tagged_law_from_json(cfg.value("init", json()), beta);

  Rng rng(std::uint64_t(ctx.seed));
  SimState st = sample_gibbs(pot, beta, N, gcfg, law.law, rng);
  const int dim = st.dim;

  long steps = std::lround(T / dt);
  double T_used = steps * dt;
  std::vector<long> observe;
  for (long s = 0; s <= steps; s += every) observe.push_back(s);
  if (observe.back() != steps) observe.push_back(steps);

  std::vector<io::Column> cols{{"t", "time", {}}};
  for (int a = 0; a < dim; ++a)
    cols.push_back({std::string("v0") + (dim == 1 ? "" : (a == 0 ? "x" : "y")),
                    "velocity", {}});
  cols.push_back({"E", "energy", {}});
  for (int a = 0; a < dim; ++a)
    cols.push_back({std::string("P") + (dim == 1 ? "" : (a == 0 ? "x" : "y")),
                    "velocity", {}});

  run_trajectory(pot, st, T_used, dt, observe, [&](const SimState& s, long step) {
    cols[0].values.push_back(step * dt);
    for (int a = 0; a < dim; ++a) cols[1 + a].values.push_back(s.vp(0)[a]);
    cols[1 + dim].values.push_back(total_energy(pot, s));
    for (int a = 0; a < dim; ++a) {
      NeumaierSum p;
      for (int j = 0; j <= s.N; ++j) p.add(s.vp(j)[a]);
      cols[2 + dim + a].values.push_back(p.value());
    }
  });
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_ensemble_drift(const CommonFlags& flags) {
  Ctx ctx = make_ctx("ensemble-drift", flags, true, true);
  const json& cfg = ctx.config;

  EnsembleSpec spec;
  spec.beta = cfg.at("beta").get<double>();
  spec.pot = pot_from_config(cfg);
  spec.N = cfg.at("N").get<int>();
  spec.dt = cfg.value("dt", 2e-3);
  spec.runs = cfg.at("runs").get<long>();
  spec.seed = std::uint64_t(ctx.seed);
  spec.threads = ctx.threads;
  spec.gibbs.burn_in_sweeps = cfg.value("burn_in_sweeps", spec.gibbs.burn_in_sweeps);
  spec.gibbs.step = cfg.value("step", spec.gibbs.step);
  require(spec.runs >= 100, "ensemble-drift: need at least 100 runs for a standard error");

  double r = cfg.at("r").get<double>();
  require(r > 0.0 && r < 1.0 / 18.0, "ensemble-drift: exponent must satisfy 0 < r < 1/18");
  std::vector<double> taus = cfg.at("tau_list").get<std::vector<double>>();
  require(!taus.empty(), "ensemble-drift: tau_list is empty");
  double delta_req = cfg.value("delta", 0.5);
  double z_pass = cfg.value("z_pass", 2.0);
  double min_pass_fraction = cfg.value("min_pass_fraction", 0.9);
  bool audit = cfg.value("audit_csv", false);

  TaggedLawSpec law = tagged_law_from_json(cfg.value("init", json()), spec.beta);
  spec.law = law.law;

  std::vector<HermiteGaussian> obs;
  for (const auto& jo : cfg.at("observables")) {
    HermiteGaussian hg;
    hg.m = jo.at("m").get<int>();
    hg.a = jo.value("a", 0.5);
    hg.beta = spec.beta;
    hg.name = jo.value("name", "He" + std::to_string(hg.m));
    obs.push_back(hg);
  }
  require(!obs.empty(), "ensemble-drift: no observables");
  std::vector<std::function<double(double)>> fns;
  for (const auto& o : obs) fns.push_back([o](double v) { return o(v); });

  DriftPrediction pred = drift_prediction(spec.pot, spec.beta, spec.N, law.g0_normalized);

  long delta_steps = std::max<long>(1, std::lround(delta_req / spec.dt));
  double delta = delta_steps * spec.dt;

  json cells = json::array();
  double max_abs_z = 0.0;
  int passed = 0, total = 0;
  std::vector<io::Column> audit_cols;
  if (audit) {
    audit_cols.push_back({"run", "1", {}});
    for (long rr = 0; rr < spec.runs; ++rr) audit_cols[0].values.push_back(double(rr));
  }

  for (double tau : taus) {
    double tc_raw = tau * std::pow(double(spec.N), r);
    long tc_steps = std::max(delta_steps + 1, std::lround(tc_raw / spec.dt));
    double tc = tc_steps * spec.dt;
    std::vector<std::vector<double>> per_run;
    DriftResult d = estimate_drift(spec, fns, tc, delta, audit ? &per_run : nullptr);
    for (std::size_t p = 0; p < obs.size(); ++p) {
      double prediction = pred.pair(fns[p]);
      double se = std::max(d.per_observable[p].std_error, 1e-300);
      double z = (d.per_observable[p].value - prediction) / se;
      max_abs_z = std::max(max_abs_z, std::abs(z));
      if (std::abs(z) <= z_pass) ++passed;
      ++total;
      cells.push_back(json{{"observable", obs[p].name},
                           {"tau", tau},
                           {"t_center", tc},
                           {"delta", delta},
                           {"drift", d.per_observable[p].value},
                           {"stderr", d.per_observable[p].std_error},
                           {"prediction", prediction},
                           {"z", z}});
      if (audit) {
        char title[64];
        std::snprintf(title, sizeof title, "%s_tau%s", obs[p].name.c_str(),
                      io::fmt_g17(tau).c_str());
        audit_cols.push_back({title, "1/time", per_run[p]});
      }
    }
  }

  double pass_fraction = double(passed) / double(total);
  json out{{"schema_version", "1"},
           {"command", "ensemble-drift"},
           {"beta", spec.beta},
           {"N", spec.N},
           {"r", r},
           {"runs", spec.runs},
           {"dt", spec.dt},
           {"delta", delta},
           {"z_pass", z_pass},
           {"cells", std::move(cells)},
           {"max_abs_z", max_abs_z},
           {"pass_fraction", pass_fraction},
           {"pass", pass_fraction >= min_pass_fraction}};
  ctx_write(ctx, ctx.name + ".json", out.dump(2) + "\n");
  if (audit) ctx_write_csv(ctx, ctx.name + "_audit.csv", audit_cols);
  ctx_finish(ctx);
}

void run_hierarchy_markov(const CommonFlags& flags) {
  Ctx ctx = make_ctx("hierarchy-markov", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  require(pot.dim() == 1 || pot.empty(), "hierarchy-markov: one-dimensional potentials only");
  VGrid grid = grid_from_json(cfg.at("grid"), beta, 1);
  GZero gz = g0_from_json(grid, beta, cfg.value("g0", json()));
  long N = cfg.value("N", 0);

  Markov2Result pair = markov_limit_2corr(beta, pot, grid, gz);
  Markov3Result triple = markov_limit_3corr(beta, pot, grid, gz, N);

  std::vector<io::Column> cols = coord_columns(grid);
  cols.push_back(value_column("g0", "1", gz.g.values));
  cols.push_back(value_column("pair_term1", "1/time", pair.term1.values));
  cols.push_back(value_column("pair_term2", "1/time", pair.term2.values));
  cols.push_back(value_column("pair_total", "1/time", pair.total.values));
  cols.push_back(value_column("triple_total", "1/time", triple.total.values));
  std::vector<double> total(grid.size());
  for (std::size_t i = 0; i < total.size(); ++i)
    total[i] = pair.total.values[i] + triple.total.values[i];
  cols.push_back(value_column("total", "1/time", total));
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_hierarchy_duhamel(const CommonFlags& flags) {
  Ctx ctx = make_ctx("hierarchy-duhamel", flags, true, false);
  const json& cfg = ctx.config;
  double beta = cfg.at("beta").get<double>();
  FourierPotential pot = pot_from_config(cfg);
  VGrid grid = grid_from_json(cfg.at("grid"), beta, 1);
  GZero gz = g0_from_json(grid, beta, cfg.value("g0", json()));
  std::vector<double> Ts = cfg.at("T_list").get<std::vector<double>>();
  double dt = cfg.at("dt").get<double>();
  double mu = cfg.value("mu", -1.0);
  bool include_triple = cfg.value("include_triple", false);
  long N = cfg.value("N", 0);
  if (include_triple) require(N >= 2, "hierarchy-duhamel: triple stage needs finite N >= 2");

  Markov2Result pair = markov_limit_2corr(beta, pot, grid, gz);
  GridFn<double> ref(grid, FnKind::ratio);
  for (int i = 0; i < grid.n; ++i) ref[i] = pair.total_center[i].real();
  if (include_triple) {
    Markov3Result triple = markov_limit_3corr(beta, pot, grid, gz, N);
    for (int i = 0; i < grid.n; ++i) ref[i] += triple.total_center[i].real();
  }
  double ref_norm = l2_beta_norm(ref, beta);

  std::vector<io::Column> cols{{"T", "time", {}},
                               {"mu", "1/time", {}},
                               {"distance", "1/time", {}},
                               {"relative_distance", "1", {}}};
  for (double T : Ts) {
    DuhamelResult res = duhamel_2corr(beta, pot, grid, gz, T, dt, mu);
    GridFn<double> diff(grid, FnKind::ratio);
    for (int i = 0; i < grid.n; ++i) diff[i] = res.projected[i];
    if (include_triple) {
      DuhamelResult res3 = duhamel_3corr(beta, pot, grid, gz, N, T, dt, mu);
      for (int i = 0; i < grid.n; ++i) diff[i] += res3.projected[i];
    }
    for (int i = 0; i < grid.n; ++i) diff[i] -= ref[i];
    double dist = l2_beta_norm(diff, beta);
    cols[0].values.push_back(T);
    cols[1].values.push_back(res.mu);
    cols[2].values.push_back(dist);
    cols[3].values.push_back(ref_norm > 0.0 ? dist / ref_norm : dist);
  }
  ctx_write_csv(ctx, ctx.name + ".csv", cols);
  ctx_finish(ctx);
}

void run_walks(const CommonFlags& flags, const std::string& order_arg) {
  Ctx ctx = make_ctx("walks", flags, false, false);
  int n = ctx.config.value("n", 0);
  if (!order_arg.empty()) {
    std::string s = order_arg;
    if (s.rfind("n=", 0) == 0) s = s.substr(2);
    n = std::stoi(s);
  }
  require(n >= 1, "walks: give the order as a positional n=<order> or config \"n\"");
  ctx.config["n"] = n;
  int lmin = ctx.config.value("lmin", -1), lmax = ctx.config.value("lmax", -1);

  WalkSets sets = enumerate_walks(n, lmin, lmax);
  auto dump_walks = [](const std::vector<WalkIndex>& ws) {
    json arr = json::array();
    for (const auto& w : ws)
      arr.push_back(json{{"sigma", w.sigma},
                         {"n", w.n},
                         {"ell", w.ell},
                         {"gamma", w.gamma},
                         {"levels", w.levels},
                         {"word", operator_word(w)}});
    return arr;
  };
  json out{{"schema_version", "1"},
           {"n", n},
           {"lmin", lmin < 0 ? n + 1 : lmin},
           {"lmax", lmax < 0 ? 3 * n : lmax},
           {"returning", dump_walks(sets.returning)},
           {"escaping", dump_walks(sets.escaping)},
           {"counts", json{{"returning", sets.returning.size()},
                           {"escaping", sets.escaping.size()}}}};
  ctx_write(ctx, ctx.name + ".json", out.dump(2) + "\n");
  ctx_finish(ctx);
}

void run_report(const CommonFlags& flags, const std::vector<std::string>& inputs) {
  Ctx ctx = make_ctx("report", flags, false, false);
  require(!inputs.empty(), "report: give at least one manifest path");

  json artifacts = json::array();
  std::vector<double> betas;
  bool all_pass = true;
  for (const std::string& path : inputs) {
    json manifest = json::parse(io::read_file(path));
    require(manifest.value("schema_version", "") == std::string("1"),
            "report: manifest schema_version mismatch in " + path);
    std::filesystem::path base = std::filesystem::path(path).parent_path();

    json entry{{"manifest", path},
               {"command", manifest.value("command", "?")},
               {"config_hash", manifest.value("config_hash", "")},
               {"seed", manifest.value("seed", 0LL)}};
    if (manifest.contains("config") && manifest.at("config").contains("beta")) {
      double b = manifest.at("config").at("beta").get<double>();
      entry["beta"] = b;
      betas.push_back(b);
    }

    json outs = json::array();
    for (const auto& jo : manifest.value("outputs", json::array())) {
      std::string file = jo.at("file").get<std::string>();
      std::string want = jo.at("data_hash").get<std::string>();
      std::string bytes = io::read_file((base / file).string());
      std::string got = io::hash_hex(bytes);
      if (got != want)
        throw std::invalid_argument("report: manifest mismatch for " + file +
                                    " (expected " + want + ", got " + got + ")");
      json oj{{"file", file}, {"data_hash", got}};
      if (file.size() > 5 && file.substr(file.size() - 5) == ".json") {
        json content = json::parse(bytes);
        for (const char* key : {"max_abs_z", "pass_fraction", "pass", "min_abs_eps",
                                "num_below_threshold", "counts"})
          if (content.contains(key)) oj["summary"][key] = content.at(key);
        if (content.contains("pass") && !content.at("pass").get<bool>())
          all_pass = false;
      } else {
        std::size_t rows = 0;
        for (char c : bytes) rows += (c == '\n');
        oj["rows"] = rows >= 2 ? rows - 2 : 0;
      }
      outs.push_back(std::move(oj));
    }
    entry["outputs"] = std::move(outs);
    entry["verified"] = true;
    artifacts.push_back(std::move(entry));
  }

  bool beta_consistent = true;
  for (double b : betas)
    if (b != betas.front()) beta_consistent = false;
  std::string status = (all_pass && beta_consistent) ? "pass" : "flagged";

  json out{{"schema_version", "1"},
           {"status", status},
           {"beta_consistent", beta_consistent},
           {"beta_values", betas},
           {"artifacts", std::move(artifacts)}};
  ctx_write(ctx, ctx.name + ".json", out.dump(2) + "\n");

  std::string md = "# lblab report\n\nstatus: **" + status + "**\n\n";
  if (!beta_consistent) md += "warning: inputs disagree on beta\n\n";
  md += "| manifest | command | beta | seed | outputs |\n";
  md += "|---|---|---|---|---|\n";
  for (const auto& a : out.at("artifacts")) {
    md += "| " + a.at("manifest").get<std::string>() + " | " +
          a.at("command").get<std::string>() + " | " +
          (a.contains("beta") ? io::fmt_g17(a.at("beta").get<double>()) : "-") + " | " +
          std::to_string(a.at("seed").get<long long>()) + " | " +
          std::to_string(a.at("outputs").size()) + " |\n";
  }
  ctx_write(ctx, ctx.name + ".md", md);
  ctx_finish(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lblab: a numerical laboratory for mean-field particle kinetics on the torus"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lblab::io::tool_version);

  CommonFlags f_disp, f_fpa, f_fpe, f_llb, f_gibbs, f_nbody, f_drift, f_markov,
      f_duh, f_walks, f_report;
  std::string walks_order;
  std::vector<std::string> report_inputs;

  auto add_common = [](CLI::App* sc, CommonFlags& f, bool config_required) {
    auto* opt = sc->add_option("--config", f.config, "JSON experiment configuration");
    if (config_required) opt->required();
    sc->add_option("--seed", f.seed, "override the config seed");
    sc->add_option("--out", f.out, "output directory (default $LBLAB_OUT_DIR, then .)");
    sc->add_option("--threads", f.threads, "worker thread count");
    return sc;
  };

  add_common(app.add_subcommand("dispersion-scan",
                                "tabulate the dielectric function over a frequency grid"),
             f_disp, true)
      ->callback([&] { run_dispersion_scan(f_disp); });
  add_common(app.add_subcommand("fp-apply", "apply the screened diffusion operator to a field"),
             f_fpa, true)
      ->callback([&] { run_fp_apply(f_fpa); });
  add_common(app.add_subcommand("fp-evolve", "evolve a density under the screened diffusion flow"),
             f_fpe, true)
      ->callback([&] { run_fp_evolve(f_fpe); });
  add_common(app.add_subcommand("llb-apply", "apply the frozen-background collision operator"),
             f_llb, true)
      ->callback([&] { run_llb_apply(f_llb); });
  add_common(app.add_subcommand("gibbs-sample", "draw equilibrium particle configurations"),
             f_gibbs, true)
      ->callback([&] { run_gibbs_sample(f_gibbs); });
  add_common(app.add_subcommand("nbody-run", "integrate one mean-field trajectory"),
             f_nbody, true)
      ->callback([&] { run_nbody_run(f_nbody); });
  add_common(app.add_subcommand("ensemble-drift",
                                "measure tagged-particle drift against the kinetic prediction"),
             f_drift, true)
      ->callback([&] { run_ensemble_drift(f_drift); });
  add_common(app.add_subcommand("hierarchy-markov",
                                "evaluate the Markovian limit generator on a velocity profile"),
             f_markov, true)
      ->callback([&] { run_hierarchy_markov(f_markov); });
  add_common(app.add_subcommand("hierarchy-duhamel",
                                "time-integrated correlation feedback vs the Markovian limit"),
             f_duh, true)
      ->callback([&] { run_hierarchy_duhamel(f_duh); });

  CLI::App* sc_walks = app.add_subcommand("walks", "enumerate admissible correlation walks");
  sc_walks->add_option("order", walks_order, "walk order, e.g. n=2 or 2");
  add_common(sc_walks, f_walks, false)->callback([&] { run_walks(f_walks, walks_order); });

  CLI::App* sc_report = app.add_subcommand("report", "verify manifests and consolidate results");
  sc_report->add_option("inputs", report_inputs, "manifest paths")->required();
  add_common(sc_report, f_report, false)->callback([&] { run_report(f_report, report_inputs); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lblab::io::io_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const lblab::numerical_error& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

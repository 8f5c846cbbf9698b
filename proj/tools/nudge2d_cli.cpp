// Command-line driver: spinup, run, sweep, spectrum, inspect-checkpoint.
// Every config key is also a flag (--grid.n 64, --assimilation.mu 0.5,1).
// Failures print one JSON object on stderr and exit nonzero.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "nudge2d/nudge2d.hpp"

namespace {

using json = nlohmann::json;
using namespace nudge2d;

struct ConfigSource {
  std::string path;
  std::map<std::string, std::string> overrides;
  bool allow_mismatch = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "configuration file");
    for (const auto& key : config_keys()) app->add_option("--" + key.name, overrides[key.name], key.help);
  }

  RunConfig load() const {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& key : config_keys()) {
      const auto it = overrides.find(key.name);
      if (it != overrides.end() && !it->second.empty()) set_config_value(cfg, key.name, it->second);
    }
    cfg.validate();
    return cfg;
  }
};

void log_line(const std::string& msg) { std::fprintf(stderr, "[nudge2d] %s\n", msg.c_str()); }

std::string output_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.dir);
  return (std::filesystem::path(cfg.dir) / name).string();
}

json number(double v) { return std::isfinite(v) ? json(v) : json(format_value(v)); }

json row_json(const SweepRow& r) {
  json j{{"mu", r.mu},           {"K", r.K},
         {"eta", r.eta},         {"T_min", number(r.T_min)},
         {"T_max", number(r.T_max)}, {"eps_avg", number(r.eps_avg)},
         {"wall_s", r.wall_s},   {"cfl_max", r.cfl_max}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

std::string suffix_for(const SweepRow& r) {
  return "_mu" + format_value(r.mu) + "_K" + std::to_string(r.K) + "_eta" + format_value(r.eta);
}

int cmd_spinup(const ConfigSource& src, const std::string& out) {
  RunConfig cfg = src.load();
  if (!out.empty()) cfg.spinup_checkpoint = out;
  if (cfg.spinup_checkpoint.empty()) throw std::invalid_argument("spinup needs --out or spinup.checkpoint");
  Experiment ex(cfg);
  const StreamField u0 = prepare_initial_state(ex, log_line);
  const auto u = velocity_from_stream(u0);
  std::cout << json{{"checkpoint", cfg.spinup_checkpoint},
                    {"t", cfg.spinup_duration},
                    {"norm_V", std::sqrt(v_alpha_norm_sq(u, 1.0))},
                    {"energy", v_alpha_norm_sq(u, 0.0)},
                    {"cfl", cfl_number(u0, cfg.dt, cfg.n)},
                    {"grashof", grashof_of(ex.forcing.f, cfg.nu, cfg.length)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_run(const ConfigSource& src, const std::string& resume) {
  const RunConfig cfg = src.load();
  if (cfg.mu.size() != 1 || cfg.K.size() != 1 || cfg.eta.size() != 1)
    throw std::invalid_argument("run takes a single mu, K and eta; use sweep for lists");
  Experiment ex(cfg);
  RunOptions opt;
  opt.checkpoint_path = cfg.checkpoint_interval > 0 ? output_path(cfg, "run.ckpt") : "";
  StreamField u0(ex.grid);
  if (!resume.empty()) {
    Checkpoint c = read_checkpoint(resume, ex.grid);
    check_checkpoint(c, cfg, src.allow_mismatch, log_line);
    opt.resume = std::move(c);
    log_line("resuming at step " + std::to_string(opt.resume->step));
  } else {
    u0 = prepare_initial_state(ex, log_line);
  }
  const ObservationSpec obs = cfg.kind == ObservationKind::modal ? cfg.observation(0, 0.0)
                                                                 : cfg.observation(cfg.K[0], cfg.eta[0]);
  const PairResult r = run_pair(ex, u0, cfg.mu[0], obs, opt);
  const std::string series_path = output_path(cfg, cfg.series);
  std::ofstream series(series_path);
  write_series_csv(series, r.rows);
  json j = row_json(r.summary);
  j["series"] = series_path;
  std::cout << j.dump() << '\n';
  return r.summary.error.empty() ? 0 : 3;
}

int cmd_sweep(const ConfigSource& src, bool write_series) {
  const RunConfig cfg = src.load();
  Experiment ex(cfg);
  const StreamField u0 = prepare_initial_state(ex, log_line);
  std::vector<PairResult> details;
  const auto rows = sweep(ex, u0, log_line, &details);
  const std::string path = output_path(cfg, cfg.sweep);
  std::ofstream out(path);
  write_sweep_csv(out, rows);
  if (write_series) {
    const auto stem = std::filesystem::path(cfg.series).stem().string();
    for (const auto& d : details) {
      std::ofstream s(output_path(cfg, stem + suffix_for(d.summary) + ".csv"));
      write_series_csv(s, d.rows);
    }
  }
  json j = json::array();
  for (const auto& r : rows) j.push_back(row_json(r));
  std::cout << json{{"sweep", path}, {"rows", j}}.dump() << '\n';
  return 0;
}

int cmd_spectrum(const ConfigSource& src) {
  const RunConfig cfg = src.load();
  Experiment ex(cfg);
  const StreamField u0 = prepare_initial_state(ex, log_line);
  const auto E = reference_spectrum(ex, u0);
  const std::string path = output_path(cfg, "spectrum.csv");
  std::ofstream out(path);
  write_spectrum_csv(out, E);
  const double tau = eddy_turnover(E, ex.grid->kmax());
  std::cout << json{{"spectrum", path}, {"tau", tau}, {"turnovers", ex.window() / tau}}.dump() << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  const Checkpoint c = read_checkpoint(path);
  json j{{"version", checkpoint_version}, {"n", c.n},          {"length", c.length},
         {"nu", c.nu},                    {"t", c.t},          {"dt", c.dt},
         {"step", c.step},                {"seed", c.seed},    {"band", {c.band_lo, c.band_hi}},
         {"grashof", c.grashof},          {"config_hash", c.config_hash},
         {"has_phi", c.phi.has_value()},
         {"norm_V_psi", std::sqrt(v_alpha_norm_sq(velocity_from_stream(*c.psi), 1.0))}};
  if (c.phi) j["error_V"] = error_V(*c.psi, *c.phi);
  std::cout << j.dump() << '\n';
  return 0;
}

void fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D Navier-Stokes nudging experiments"};
  app.require_subcommand(1);

  ConfigSource spin_src, run_src, sweep_src, spec_src;
  std::string spin_out, resume, inspect_path;
  bool write_series = false;

  auto* spin = app.add_subcommand("spinup", "integrate from rest and cache the initial state");
  spin_src.attach(spin);
  spin->add_option("-o,--out", spin_out, "checkpoint to write (default spinup.checkpoint)");

  auto* run = app.add_subcommand("run", "one coupled reference/assimilated run");
  run_src.attach(run);
  run->add_option("--resume", resume, "continue from a run checkpoint");
  run->add_flag("--allow-mismatch", run_src.allow_mismatch, "accept a checkpoint from a different configuration");

  auto* sw = app.add_subcommand("sweep", "runs over the mu x K x eta product");
  sweep_src.attach(sw);
  sw->add_flag("--series", write_series, "also write one error series per row");

  auto* spec = app.add_subcommand("spectrum", "time-averaged energy spectrum and eddy turnover time");
  spec_src.attach(spec);

  auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint header");
  inspect->add_option("path", inspect_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*spin) return cmd_spinup(spin_src, spin_out);
    if (*run) return cmd_run(run_src, resume);
    if (*sw) return cmd_sweep(sweep_src, write_series);
    if (*spec) return cmd_spectrum(spec_src);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    fail("config", e.what());
  } catch (const CheckpointError& e) {
    fail("checkpoint", e.what());
  } catch (const RunError& e) {
    fail("run", e.what());
  } catch (const std::exception& e) {
    fail("runtime", e.what());
  }
  return 1;
}

#pragma once

/// Experiment orchestration: spin-up with an on-disk cache, coupled
/// reference/assimilated runs, (mu, K, eta) sweeps and their CSV output.
///
/// Runs that share a reference trajectory advance in lockstep: the reference
/// is stepped once, observed once per distinct observation spec, and each
/// assimilated solution is advanced from those observations alone.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "nudge2d/checkpoint.hpp"
#include "nudge2d/config.hpp"
#include "nudge2d/diagnostics.hpp"
#include "nudge2d/dynamics.hpp"
#include "nudge2d/forcing.hpp"
#include "nudge2d/observables.hpp"
#include "nudge2d/spectral.hpp"

namespace nudge2d {

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Logger = std::function<void(const std::string&)>;

struct SeriesRow {
  double t = 0.0;
  double err_V = 0.0;
  double energy_u = 0.0;
  double energy_v = 0.0;
  double cfl = 0.0;
};

struct SweepRow {
  double mu = 0.0;
  int K = 0;
  double eta = 0.0;
  double T_min = 0.0;
  double T_max = 0.0;
  double eps_avg = 0.0;
  double wall_s = 0.0;
  double cfl_max = 0.0;
  std::string error;  ///< nonempty when the run failed
};

struct PairResult {
  ErrorSeries series;
  std::vector<SeriesRow> rows;
  SweepRow summary;
};

/// Everything a run needs besides the per-job parameters.
struct Experiment {
  RunConfig cfg;
  GridPtr grid;
  Forcing forcing;

  explicit Experiment(RunConfig c)
      : cfg((c.validate(), std::move(c))),
        grid(make_grid(cfg.n, cfg.length)),
        forcing(make_forcing(cfg.forcing_spec(), grid)) {}

  long long steps() const { return std::llround(cfg.T / cfg.dt); }
  double window() const { return static_cast<double>(steps()) * cfg.dt; }
};

/// The spun-up reference state u0. When spinup.checkpoint names a file
/// written for the same configuration and duration it is loaded instead.
inline StreamField prepare_initial_state(const Experiment& ex, const Logger& log = {}) {
  const RunConfig& cfg = ex.cfg;
  const std::string& cache = cfg.spinup_checkpoint;
  if (!cache.empty() && std::filesystem::exists(cache)) {
    Checkpoint c = read_checkpoint(cache, ex.grid);
    if (c.config_hash == cfg.hash() && c.t == cfg.spinup_duration && !c.phi) {
      if (log) log("loaded spun-up state from " + cache);
      return std::move(*c.psi);
    }
    if (log) log("ignoring stale spin-up cache " + cache);
  }
  auto progress = [&](long long step, double t, double cfl) {
    if (log && step % (1 << 16) == 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "spin-up t=%.3f cfl=%.4f", t, cfl);
      log(buf);
    }
  };
  SpinUpResult r = spin_up(ex.forcing, cfg.nu, ex.grid, cfg.dt, cfg.spinup_duration, 64, progress);
  if (!cache.empty()) {
    write_checkpoint(make_checkpoint(cfg, cfg.spinup_duration, r.steps, r.psi), cache);
    if (log) log("wrote spun-up state to " + cache);
  }
  return std::move(r.psi);
}

struct Job {
  double mu = 0.0;
  ObservationSpec obs;
  int K_label = 0;
  double eta_label = 0.0;
};

struct RunOptions {
  /// Resume point for a single job: reference and assimilated fields at `step`.
  std::optional<Checkpoint> resume;
  /// Path for periodic checkpoints of a single job (output.checkpoint_interval).
  std::string checkpoint_path;
  /// Called with every recorded series row of job j.
  std::function<void(std::size_t, const SeriesRow&)> on_sample;
};

namespace detail {

inline double safe_cfl(const StreamField& f, double dt, int n) {
  const double c = cfl_number(f, dt, n);
  return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

struct Lane {
  Job job;
  std::size_t obs_slot = 0;
  Stepper stepper;
  StreamField phi;
  PairResult result;
  double seconds = 0.0;
  bool failed = false;
};

}  // namespace detail

/// Advances one reference from u0 together with one assimilated solution per
/// job, each started from v0 = 0. Assimilated solutions receive only the
/// reference's observations.
inline std::vector<PairResult> run_lockstep(const Experiment& ex, const StreamField& u0,
                                            const std::vector<Job>& jobs, const RunOptions& opt = {}) {
  const RunConfig& cfg = ex.cfg;
  const GridPtr& grid = ex.grid;
  const long long total = ex.steps();
  if (total < 1) throw RunError("assimilation window shorter than one step");
  if (opt.resume && jobs.size() != 1) throw RunError("resuming is supported for single runs only");

  Stepper reference(grid, cfg.nu, cfg.dt, ex.forcing.curl);
  std::vector<Observer> observers;
  std::vector<detail::Lane> lanes;
  lanes.reserve(jobs.size());
  for (const Job& job : jobs) {
    std::size_t slot = observers.size();
    for (std::size_t s = 0; s < observers.size(); ++s) {
      const auto& o = observers[s].spec();
      if (o.kind == job.obs.kind && o.K == job.obs.K && o.eta == job.obs.eta &&
          o.modal_radius == job.obs.modal_radius)
        slot = s;
    }
    if (slot == observers.size()) observers.emplace_back(grid, job.obs);
    lanes.push_back({job, slot, reference.sibling(job.mu, job.obs), StreamField(grid), {}, 0.0, false});
  }

  StreamField psi = u0;
  long long start = 0;
  if (opt.resume) {
    if (!opt.resume->phi) throw RunError("resume checkpoint lacks the assimilated field");
    psi = *opt.resume->psi;
    lanes[0].phi = *opt.resume->phi;
    start = opt.resume->step;
    if (start < 0 || start > total) throw RunError("resume step outside the assimilation window");
  }

  auto record = [&](long long step) {
    const double t = static_cast<double>(step) * cfg.dt;
    const double energy_u = v_alpha_norm_sq(velocity_from_stream(psi), 0.0);
    const double cfl_u = detail::safe_cfl(psi, cfg.dt, cfg.n);
    if (!(cfl_u <= 1.0) || !std::isfinite(energy_u)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "reference CFL %.4g at t=%.6g", cfl_u, t);
      throw RunError(buf);
    }
    for (std::size_t j = 0; j < lanes.size(); ++j) {
      auto& lane = lanes[j];
      if (lane.failed) continue;
      SeriesRow row{t, error_V(psi, lane.phi), energy_u, v_alpha_norm_sq(velocity_from_stream(lane.phi), 0.0),
                    std::max(cfl_u, detail::safe_cfl(lane.phi, cfg.dt, cfg.n))};
      lane.result.summary.cfl_max = std::max(lane.result.summary.cfl_max, row.cfl);
      if (!(row.cfl <= 1.0) || !std::isfinite(row.err_V) || !std::isfinite(row.energy_v)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "assimilated run unstable (CFL %.4g) at t=%.6g", row.cfl, t);
        lane.failed = true;
        lane.result.summary.error = buf;
        continue;
      }
      lane.result.series.push(t, row.err_V);
      lane.result.rows.push_back(row);
      if (opt.on_sample) opt.on_sample(j, row);
    }
  };

  using clock = std::chrono::steady_clock;
  if (start == 0) record(0);
  std::vector<Observation> seen(observers.size());
  for (long long step = start; step < total; ++step) {
    for (std::size_t s = 0; s < observers.size(); ++s) seen[s] = observers[s].observe(psi);
    reference.step_reference(psi);
    for (auto& lane : lanes) {
      if (lane.failed) continue;
      const auto t0 = clock::now();
      lane.stepper.step_assimilated(lane.phi, seen[lane.obs_slot]);
      lane.seconds += std::chrono::duration<double>(clock::now() - t0).count();
    }
    const long long done = step + 1;
    if (done % cfg.sample_stride == 0 || done == total) record(done);
    if (cfg.checkpoint_interval > 0 && !opt.checkpoint_path.empty() && done % cfg.checkpoint_interval == 0 &&
        lanes.size() == 1 && !lanes[0].failed)
      write_checkpoint(make_checkpoint(cfg, static_cast<double>(done) * cfg.dt, done, psi, &lanes[0].phi),
                       opt.checkpoint_path);
  }

  std::vector<PairResult> out;
  out.reserve(lanes.size());
  for (auto& lane : lanes) {
    SweepRow& row = lane.result.summary;
    row.mu = lane.job.mu;
    row.K = lane.job.K_label;
    row.eta = lane.job.eta_label;
    row.wall_s = cfg.record_wall_time ? lane.seconds : 0.0;
    if (!lane.failed) {
      const CrossingStats st = crossing_stats(lane.result.series, cfg.eps, ex.window(), cfg.T0_effective());
      row.T_min = st.T_min;
      row.T_max = st.T_max;
      row.eps_avg = st.eps_avg;
    }
    out.push_back(std::move(lane.result));
  }
  return out;
}

inline PairResult run_pair(const Experiment& ex, const StreamField& u0, double mu, const ObservationSpec& obs,
                           const RunOptions& opt = {}) {
  Job job{mu, obs, obs.kind == ObservationKind::modal ? obs.modal_radius : obs.K, obs.eta};
  return std::move(run_lockstep(ex, u0, {job}, opt).front());
}

/// Jobs of the configured cartesian product, sorted by (K, eta, mu).
inline std::vector<Job> sweep_jobs(const RunConfig& cfg) {
  std::vector<Job> jobs;
  if (cfg.kind == ObservationKind::modal) {
    for (double mu : cfg.mu) jobs.push_back({mu, cfg.observation(0, 0.0), cfg.modal_radius, 0.0});
  } else {
    for (int K : cfg.K)
      for (double eta : cfg.eta)
        for (double mu : cfg.mu) jobs.push_back({mu, cfg.observation(K, eta), K, eta});
  }
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return std::tie(a.K_label, a.eta_label, a.mu) < std::tie(b.K_label, b.eta_label, b.mu);
  });
  return jobs;
}

/// Runs every job of the sweep. Jobs are dealt round-robin to the workers;
/// each worker advances its own copy of the reference in lockstep with its
/// jobs. A failed job yields a row with `error` set; the others continue.
inline std::vector<SweepRow> sweep(const Experiment& ex, const StreamField& u0, const Logger& log = {},
                                   std::vector<PairResult>* details = nullptr) {
  const std::vector<Job> jobs = sweep_jobs(ex.cfg);
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(ex.cfg.workers), jobs.size());
  std::vector<std::vector<std::size_t>> assignment(workers);
  for (std::size_t j = 0; j < jobs.size(); ++j) assignment[j % workers].push_back(j);

  std::vector<PairResult> results(jobs.size());
  auto run_worker = [&](std::size_t w) {
    std::vector<Job> mine;
    for (std::size_t j : assignment[w]) mine.push_back(jobs[j]);
    std::vector<PairResult> part;
    try {
      part = run_lockstep(ex, u0, mine);
    } catch (const std::exception& e) {
      part.assign(mine.size(), PairResult{});
      for (std::size_t i = 0; i < mine.size(); ++i) {
        part[i].summary.mu = mine[i].mu;
        part[i].summary.K = mine[i].K_label;
        part[i].summary.eta = mine[i].eta_label;
        part[i].summary.error = e.what();
      }
    }
    for (std::size_t i = 0; i < mine.size(); ++i) results[assignment[w][i]] = std::move(part[i]);
  };
  if (log) log("sweep: " + std::to_string(jobs.size()) + " runs on " + std::to_string(workers) + " worker(s)");
  if (workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
    for (auto& th : pool) th.join();
  }

  std::vector<SweepRow> rows;
  for (const auto& r : results) rows.push_back(r.summary);
  if (details) *details = std::move(results);
  return rows;
}

inline std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "mu,K,eta,T_min,T_max,eps_avg,wall_s,cfl_max\n";
  for (const auto& r : rows) {
    out << format_value(r.mu) << ',' << r.K << ',' << format_value(r.eta) << ',';
    if (r.error.empty())
      out << format_value(r.T_min) << ',' << format_value(r.T_max) << ',' << format_value(r.eps_avg);
    else
      out << "error,error,error";
    out << ',' << format_value(r.wall_s) << ',' << format_value(r.cfl_max) << '\n';
  }
}

inline void write_series_csv(std::ostream& out, const std::vector<SeriesRow>& rows) {
  out << "t,err_V,energy_u,energy_v,cfl\n";
  for (const auto& r : rows)
    out << format_value(r.t) << ',' << format_value(r.err_V) << ',' << format_value(r.energy_u) << ','
        << format_value(r.energy_v) << ',' << format_value(r.cfl) << '\n';
}

inline void write_spectrum_csv(std::ostream& out, const std::vector<double>& E) {
  out << "r,E\n";
  for (std::size_t r = 1; r < E.size(); ++r) out << r << ',' << format_value(E[r]) << '\n';
}

/// Time-averaged spectrum of the reference over [0, T] from u0.
inline std::vector<double> reference_spectrum(const Experiment& ex, const StreamField& u0) {
  Stepper reference(ex.grid, ex.cfg.nu, ex.cfg.dt, ex.forcing.curl);
  StreamField psi = u0;
  SpectrumAccumulator acc(ex.grid->kmax());
  acc.accumulate(0.0, velocity_from_stream(psi));
  const long long total = ex.steps();
  for (long long step = 1; step <= total; ++step) {
    reference.step_reference(psi);
    if (step % ex.cfg.sample_stride == 0 || step == total) {
      const double cfl = detail::safe_cfl(psi, ex.cfg.dt, ex.cfg.n);
      if (!(cfl <= 1.0)) throw RunError("reference CFL exceeds 1 during spectrum run");
      acc.accumulate(static_cast<double>(step) * ex.cfg.dt, velocity_from_stream(psi));
    }
  }
  return acc.finalize();
}

}  // namespace nudge2d

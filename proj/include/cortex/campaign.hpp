#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cortex/environment.hpp"
#include "cortex/execution.hpp"
#include "cortex/refgen.hpp"
#include "cortex/tracking.hpp"
#include "cortex/types.hpp"

namespace cortex {

/// Everything one Monte-Carlo campaign needs, loadable from a single JSON
/// document (schema "cortex-scenario/1"). Human-authored angle fields are in
/// degrees in the JSON; they are stored in radians here.
struct ScenarioConfig {
  // Client orbit (classical elements) and epoch.
  double sma_m = 6878.1e3;
  double ecc = 0.001;
  double inc_rad = 98.0 * kDeg2Rad;
  double raan_rad = 0.1 * kDeg2Rad;
  double argp_rad = 0.1 * kDeg2Rad;
  double true_anom_rad = 0.1 * kDeg2Rad;
  std::string epoch_utc = "2022-05-01T00:00:00Z";
  double mass_kg = 500.0;

  RefGenParams ref;        // constraint geometry, margins, boundary states
  GuidanceConfig guidance; // tracking-loop settings (geometry slaved to ref)
  TruthModelConfig truth;

  std::string error_level = "low";  // "none" | "low" | "high" | "custom"
  ErrorModel custom_error;          // used when error_level == "custom"

  std::vector<double> abort_schedule_s;  // commanded-abort times, usually empty
  int max_recomputes = 5;                // per-trial budget before abort
  int trials = 100;
  std::uint64_t master_seed = 0;
  int workers = 1;
  double eclipse_horizon_s = 45000.0;  // profile span, ~8 orbits
  int pso_particles = 24;              // reference-search budget
  int pso_iterations = 20;
  bool emit_step_files = true;  // steps/trial_NNN.csv on emission

  ErrorModel resolve_error_model() const;  // applies r_as from ref
  double mean_motion() const;              // circular-orbit approximation
  void validate() const;                   // throws std::invalid_argument

  /// Close-range baseline: 500 km-class SSO client, approach from 37.5 m
  /// behind along-track, in-plane -45 degree docking axis, low error level.
  static ScenarioConfig baseline();

  /// Parses a scenario document; unspecified fields keep baseline values.
  /// Throws std::runtime_error on schema mismatch or malformed fields.
  static ScenarioConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Population statistics of one metric: mean, population standard deviation,
/// linearly interpolated quartiles, and the 99th percentile.
struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double p99 = 0.0;
  int count = 0;
};

/// Aggregates a sample; throws std::invalid_argument on an empty vector.
MetricStats aggregate(const std::vector<double>& values);

/// Linear-interpolation quantile of a sample (q in [0,1]); used by
/// aggregate() and exposed for tests.
double quantile(std::vector<double> values, double q);

/// One row of trials.csv: the deterministic per-trial summary (no wall-clock
/// content; solve times live in report.json only).
struct TrialSummary {
  int index = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  bool aborted = false;
  bool fault = false;
  int recomputes = 0;
  int aborts = 0;
  int infeasible_steps = 0;
  int steps = 0;
  double tof_s = 0.0;
  double dv_total_mps = 0.0;
  double dv_nullified_mps = 0.0;
  double terminal_pos_m = 0.0;
  double terminal_vel_mps = 0.0;
  std::string fault_reason;
};

/// Statistics of the four reported metrics over one subset of trials.
struct CampaignView {
  std::string name;  // "all", "completed", "aborted"
  int count = 0;
  MetricStats tof_s;
  MetricStats dv_mps;
  MetricStats terminal_pos_m;
  MetricStats terminal_vel_mps;
};

/// Builds the named view from the matching subset of rows; empty subsets
/// yield count == 0 and untouched statistics.
CampaignView make_view(const std::string& name, const std::vector<TrialSummary>& rows);

struct CampaignReport {
  bool ok = false;                 // false = campaign-level fault
  std::string failure_reason;
  ScenarioConfig config;
  // Reference actually tracked by the trials, plus its generation record.
  ReferenceTrajectory reference;
  double reference_dv_mps = 0.0;
  double reference_tof_s = 0.0;    // transfer time (fly-around + approach)
  double reference_gen_time_s = 0.0;
  int reference_np_evaluations = 0;
  // Per-trial outputs, indexed by trial.
  std::vector<TrialSummary> trials;
  std::vector<MissionResult> missions;  // full logs (empty after JSON reload)
  // Aggregates: completed and aborted trials are summarized separately, plus
  // the pooled view; terminal errors of aborted trials are measured against
  // the retreat target.
  CampaignView view_all;
  CampaignView view_completed;
  CampaignView view_aborted;
  int trials_completed = 0;
  int trials_aborted = 0;
  int trials_fault = 0;
  int total_recomputes = 0;
  int total_aborts = 0;
  // Guidance solve-time statistics pooled over every executed step (ms).
  MetricStats cpg_solve_ms;
  double wall_time_s = 0.0;
};

/// Runs the campaign: builds the client state and eclipse profile from the
/// scenario, generates the reference once (a single docking axis has a
/// single reference; per-trial seeds never touch generation), then executes
/// `trials` independent closed-loop runs with seeds mixed from the master
/// seed by trial index. Individual trial failures (including propagation
/// faults) are recorded on their rows and never abort the campaign; only a
/// failure to produce the shared reference yields ok == false.
CampaignReport run_campaign(const ScenarioConfig& cfg);

/// Serializes the report (schema "cortex-campaign/1"). Full per-trial rows
/// and aggregates are included; step logs are not (they go to steps/*.csv).
std::string report_to_json(const CampaignReport& report);

/// Reloads a report document: config, trial rows, and reference summary.
/// Aggregates are recomputed from the rows (they are recomputable by
/// construction); mission step logs are not recoverable from JSON.
CampaignReport report_from_json(const std::string& text);

/// Deterministic per-trial table (see TrialSummary).
std::string trials_csv(const CampaignReport& report);

/// Table-shaped statistics: one row per (view, metric) with the four-entry
/// quantile vector, covering the four mission metrics.
std::string summary_csv(const CampaignReport& report);

/// Writes report.json, trials.csv, summary.csv, and (when step logs are
/// present and cfg.emit_step_files) steps/trial_NNN.csv under out_dir,
/// creating directories as needed. Throws std::runtime_error with the
/// offending path on I/O failure; an empty report (no trials) is rejected
/// with std::invalid_argument before anything is written.
void emit_report(const CampaignReport& report, const std::string& out_dir);

}  // namespace cortex

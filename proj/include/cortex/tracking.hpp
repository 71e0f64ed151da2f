#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cortex/conic.hpp"
#include "cortex/constants.hpp"
#include "cortex/environment.hpp"
#include "cortex/execution.hpp"
#include "cortex/refgen.hpp"
#include "cortex/types.hpp"

namespace cortex {

/// Mission phase in its fixed order. Hold phases station-keep at a reference
/// node; the two transfer phases track the moving reference.
enum class Phase { kHold1 = 0, kFlyAround = 1, kHold2 = 2, kFinalApproach = 3 };

const char* phase_name(Phase phase);

/// Closed-loop guidance configuration: the per-step convex program's grid and
/// terminal penalty, the per-phase deviation thresholds, and both constraint
/// sets used by the trigger logic (the true set arms aborts, the buffered set
/// arms recomputes).
struct GuidanceConfig {
  double dt_g = 30.0;   // s, guidance period
  int n_sub = 15;       // substeps per guidance period (substep = dt_g/n_sub)
  double eps_p = 10.0;  // weight on the terminal-deviation slack

  // Maximum tracked position deviation per phase, indexed by Phase:
  // [hold 1, fly-around, hold 2, final approach].
  std::array<double, 4> eps_r = {30.0, 30.0, 15.0, 5.0};

  // True constraint set (abort conditions; also the guidance program's own
  // corridor and impulse bounds).
  double a_max = 2.4e-3;                           // m/s^2
  double rho_kos = 15.0;                           // m
  double alpha_p = 20.0 * kDeg2Rad;                // rad
  double alpha_c = 10.0 * kDeg2Rad;                // rad
  Vec3 e_hat = Vec3(-kInvSqrt2, -kInvSqrt2, 0.0);  // docking axis, unit norm

  // Buffered constraint set (recompute conditions), mirroring the margins
  // used while shaping the reference.
  double buffered_rho_kos = 18.0;
  double buffered_alpha_p = 24.0 * kDeg2Rad;
  double buffered_alpha_c = 5.0 * kDeg2Rad;

  // Trigger guards. The reference rides exactly on its buffered bounds
  // (fly-around nodes sit on the buffered keep-out sphere, approach nodes on
  // the buffered corridor cone, braking impulses on the buffered plume
  // cone), so the recompute triggers fire a small step past those bounds
  // rather than exactly at them; otherwise round-off and benign jitter on a
  // perfectly tracked reference would toggle them.
  double kos_trigger_guard_m = 0.5;
  double plume_trigger_guard_rad = 3.0 * kDeg2Rad;
  double cone_trigger_guard_rad = 1.0 * kDeg2Rad;
  // Plume direction is meaningless for vanishing thrust; steps whose sampled
  // boundary impulse is below this floor skip the plume checks.
  double plume_dv_floor_mps = 0.005;

  SolveSettings solver;  // per-step conic solve tolerances

  /// Copies the true and buffered constraint sets from reference-generation
  /// parameters so both layers agree on what they protect.
  static GuidanceConfig from_params(const RefGenParams& p);

  void validate() const;  // throws std::invalid_argument on inconsistency
};

enum class StepAction { kOk = 0, kRecompute = 1, kAbort = 2 };

/// Which condition fired. The first three arm aborts, the next four arm
/// recomputes, the rest label events raised by the mission loop itself.
enum class TriggerTag {
  kNone = 0,
  kKeepOut,             // inside the true keep-out sphere (holds / fly-around)
  kPlume,               // thrust within the true plume cone (final approach)
  kCone,                // outside the true approach corridor (final approach)
  kTrackingDeviation,   // position deviation above the phase threshold
  kBufferedKeepOut,     // inside the buffered keep-out sphere
  kBufferedCone,        // outside the buffered approach corridor
  kBufferedPlume,       // thrust within the buffered plume cone
  kCommanded,           // scheduled abort command
  kRecomputeLimit,      // recompute budget exhausted
  kRecoveryFailed,      // reference regeneration failed
};

const char* trigger_name(TriggerTag tag);
const char* action_name(StepAction action);

/// Verdict for one guidance step; abort conditions dominate recomputes.
struct StepOutcome {
  StepAction action = StepAction::kOk;
  TriggerTag tag = TriggerTag::kNone;
};

/// Solution of one per-step guidance program.
struct CpgSolution {
  std::vector<Vec3> impulses;  // n_sub impulses at the substep nodes
  double eps_xf = 0.0;         // terminal-deviation slack (m / m/s mixed norm)
  double objective = 0.0;      // sum of impulse slacks + eps_p * eps_xf
  double solve_time_s = 0.0;
  bool feasible = false;  // false = zero-impulse fallback (coast this step)
  SolveStatus status = SolveStatus::kMaxIterations;
};

/// One-step convex guidance: minimum-fuel impulse sequence over n_sub
/// substeps steering x_k toward x_target, the terminal state enforced softly
/// through a penalized deviation slack. Each impulse is bounded by
/// a_max * dt_g (the full guidance period, matching the program's printed
/// form even on a truncated final step). In the final-approach phase the
/// approach corridor is enforced at every substep node after the first
/// (the first node is the fixed current state). Single solve, no outer
/// iteration; an unsolved program yields the zero-impulse fallback with
/// eps_xf set to the coasting terminal deviation.
///
/// dt_s is the actual step duration; pass <= 0 to use g.dt_g. Truncated
/// steps at phase boundaries keep n_sub substeps of proportionally shorter
/// length.
CpgSolution solve_cpg(const RelativeState& x_k, const RelativeState& x_target, Phase phase,
                      const GuidanceConfig& g, double n, double dt_s = 0.0);

/// Trigger evaluation for the state reached at the end of a step. Abort
/// conditions are checked first (true keep-out in holds and fly-around; true
/// plume and true corridor in final approach), then recompute conditions
/// (tracking deviation, buffered keep-out, buffered corridor, buffered
/// plume). Both the state and the acceleration are sampled at the step
/// boundary: accel is the commanded thrust acceleration in effect as the
/// vehicle arrives at x_next, i.e. the final substep impulse divided by the
/// substep length. (A step-averaged direction would be meaningless for
/// impingement: the guidance program legitimately splits a braking arc into
/// burns whose individual directions clear the plume cone while their vector
/// sum does not.)
StepOutcome check_triggers(const RelativeState& x_next, const RelativeState& ref_point,
                           const Vec3& accel, Phase phase, const GuidanceConfig& g);

/// Componentwise linear interpolation of the reference at mission time t;
/// out-of-span times clamp to the first/last node.
RelativeState interp_reference(const ReferenceTrajectory& ref, double t);

enum class EventType { kStep, kImpulse, kRecompute, kAbort, kFault, kInjection };

const char* event_name(EventType type);

/// One entry of the mission event log. value carries the step duration for
/// step events and the executed impulse magnitude for impulse events, so the
/// mission totals are recoverable as sums over the log.
struct MissionEvent {
  EventType type = EventType::kStep;
  double t_s = 0.0;  // mission time at the event
  Phase phase = Phase::kHold1;
  TriggerTag tag = TriggerTag::kNone;
  double value = 0.0;
  std::string detail;
};

/// Flat per-step record for plotting and post-hoc safety checks.
struct StepRecord {
  double t_s = 0.0;   // step start, mission time
  double dt_s = 0.0;  // step duration
  Phase phase = Phase::kHold1;
  bool abort_mode = false;  // step tracked the retreat reference
  RelativeState x_start;
  RelativeState x_end;
  RelativeState target;           // state the guidance step aimed for
  double dv_commanded_mps = 0.0;  // sum of commanded impulse magnitudes
  double dv_executed_mps = 0.0;   // sum of executed impulse magnitudes
  bool missed_thrust = false;
  double eps_xf_m = 0.0;  // guidance terminal slack
  StepAction action = StepAction::kOk;
  TriggerTag tag = TriggerTag::kNone;
};

/// Test/demo hook: an additive state displacement applied at the first step
/// boundary at or after t_s, before triggers are evaluated there.
struct StateInjection {
  double t_s = 0.0;
  Vec3 dr = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
};

/// Everything a closed-loop run needs besides the reference itself: the
/// client orbit and truth-model configuration, and the handles used when a
/// trigger forces the reference to be rebuilt mid-mission (eclipse profile,
/// generation parameters, and a reduced-budget swarm for the repair search).
struct TrackingEnvironment {
  TargetOrbit orbit;
  InertialState client0;  // client inertial state at the reference epoch
  TruthModelConfig truth;
  EclipseProfile profile;  // sunlight schedule for regeneration holds
  RefGenParams params;     // constraint set for regeneration / retreat
  PsoSettings regen_pso = regen_pso_defaults();
  SolveSettings abort_solver;
  int max_recomputes = 5;  // budget before escalating to an abort

  /// Reduced swarm budget for mid-mission repairs: the repair only needs a
  /// feasible plan quickly, not a polished optimum.
  static PsoSettings regen_pso_defaults();
};

/// Outcome of one closed-loop mission.
struct MissionResult {
  bool completed = false;  // reached the end of the (possibly regenerated) nominal reference
  bool aborted = false;    // switched to the retreat reference
  bool fault = false;      // terminal fault: no retreat reference available
  std::string fault_reason;
  RelativeState x_final;
  RelativeState x_goal;  // terminal state of the last active reference
  double terminal_pos_error_m = 0.0;
  double terminal_vel_error_mps = 0.0;
  double dv_total_mps = 0.0;      // executed + nullification impulses
  double dv_nullified_mps = 0.0;  // nullification impulses alone
  double tof_s = 0.0;
  int recompute_count = 0;
  int abort_count = 0;
  int infeasible_cpg_count = 0;
  std::vector<double> solve_times_s;  // one entry per executed guidance step
  std::vector<MissionEvent> events;
  std::vector<StepRecord> steps;
};

/// Closed-loop adaptive tracking of a reference trajectory. Iterates the
/// phases in order; per step: pick the target (moving reference point in
/// transfer phases, the phase-start node in holds), solve the guidance
/// program, forward-propagate through the execution model, then evaluate the
/// triggers. A recompute nullifies the relative velocity (charged as an
/// ideal impulse), rebuilds the reference from the deviated state at the
/// current time, and resumes; an abort (triggered, scheduled, recompute
/// budget exhausted, or regeneration failure) nullifies and retreats along a
/// freshly generated abort reference with triggers disarmed. Failure to
/// build the retreat reference is recorded as a terminal fault.
MissionResult run_tracking(const ReferenceTrajectory& ref, const RelativeState& x0,
                           const TrackingEnvironment& env, const ErrorModel& err,
                           const GuidanceConfig& g, const std::vector<double>& abort_schedule,
                           std::uint64_t seed,
                           const std::vector<StateInjection>& injections = {});

/// JSON document with the mission summary and the typed event log.
std::string mission_to_json(const MissionResult& m);

/// Flat CSV of per-step states (one row per guidance step). Deterministic
/// content only: solve times are reported in the JSON document, not here.
std::string mission_steps_csv(const MissionResult& m);

}  // namespace cortex

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cortex/conic.hpp"
#include "cortex/constants.hpp"
#include "cortex/environment.hpp"
#include "cortex/types.hpp"

namespace cortex {

/// Parameters of hierarchical reference generation: true constraint bounds,
/// the conservatism margins applied when shaping the reference, node
/// spacings, phase-duration bounds, and the boundary states of the fly-around
/// and final-approach transfers.
struct RefGenParams {
  double a_max = 2.4e-3;             // m/s^2, true thrust-acceleration bound
  double rho_kos = 15.0;             // m, true keep-out-sphere radius
  double alpha_p = 20.0 * kDeg2Rad;  // rad, plume half-angle
  double alpha_c = 10.0 * kDeg2Rad;  // rad, approach-corridor half-angle
  Vec3 e_hat = Vec3(-kInvSqrt2, -kInvSqrt2, 0.0);  // docking axis, unit norm
  double tau_lb = 300.0;             // s, minimum phase duration
  double tau_ub = 3600.0;            // s, maximum phase duration
  double dt_cp1 = 30.0;              // s, fly-around node spacing
  double dt_cp2 = 10.0;              // s, final-approach node spacing
  double eps_c = 100.0;              // s, penalty per non-converged subproblem

  // Margins that tighten the true bounds while shaping the reference, so the
  // closed-loop trajectory keeps slack against the true constraints.
  double thrust_margin = 0.8;
  double kos_margin = 1.2;
  double plume_margin = 1.2;
  double corridor_margin = 0.5;

  double r_as = 75.0;      // m, safe-orbit shell radius
  double r_rs = 10000.0;   // m, rendezvous-start shell radius (context only)

  RelativeState x_i1;      // fly-around initial state
  RelativeState x_f1;      // fly-around terminal state (corridor entry)
  RelativeState x_f2;      // final-approach terminal state (docking point)

  double buffered_a_max() const { return thrust_margin * a_max; }
  double buffered_rho_kos() const { return kos_margin * rho_kos; }
  double buffered_alpha_p() const { return plume_margin * alpha_p; }
  double buffered_alpha_c() const { return corridor_margin * alpha_c; }

  /// Points the docking axis at e (normalized) and moves the transfer
  /// boundary states onto it: x_f1 at the buffered keep-out radius, x_f2 at
  /// 1 m from the client, both with zero relative velocity.
  void set_axis(const Vec3& e);

  /// Baseline close-range scenario: 500 km-class circular orbit client,
  /// approach from 37.5 m behind on the along-track axis.
  static RefGenParams defaults();

  void validate() const;  // throws std::invalid_argument on inconsistency
};

/// Result of one convex transfer subproblem. Node states are re-propagated
/// through the impulsive dynamics from the initial state, so consecutive
/// nodes satisfy the dynamics to machine precision; the terminal boundary is
/// met to solver tolerance (recorded in terminal_residual_*).
struct TransferSolution {
  bool converged = false;
  std::string failure_reason;
  std::vector<double> t;              // node times, s from transfer start
  std::vector<RelativeState> states;  // pre-impulse state at each node
  std::vector<Vec3> impulses;         // impulse at each node (terminal = 0)
  double dv_total_mps = 0.0;          // sum of impulse norms
  double objective_mps = 0.0;         // solver objective (sum of slacks)
  int sc_passes = 0;                  // successive-convexification passes
  int conic_solves = 0;
  double terminal_residual_m = 0.0;
  double terminal_residual_mps = 0.0;
};

/// One evaluation of the outer (duration-selection) objective.
struct NpEvaluation {
  double tau1_s = 0.0;
  double tau2_s = 0.0;
  double tau_h1_s = 0.0;
  double tau_h2_s = 0.0;
  double j_s = 0.0;  // tau1 + tau_h1 + tau2 + tau_h2 + penalty terms
  bool cp1_converged = false;
  bool cp2_converged = false;
  TransferSolution cp1;
  TransferSolution cp2;

  bool feasible() const { return cp1_converged && cp2_converged; }
};

/// Particle-swarm settings for the duration search. With a fixed seed the
/// search is fully deterministic for any worker count: random draws happen
/// only on the coordinator, and the reduction is index-ordered.
/// Stopping tolerances for the successive linearization in solve_cp2: the
/// loop ends once the true plume violation and the relative objective change
/// both fall below these bounds in the same pass.
struct ScSettings {
  double max_violation = 1e-6;
  double rel_objective = 1e-6;
  int max_passes = 15;  // non-convergence within the cap is priced, not fatal
};

struct PsoSettings {
  int particles = 24;
  int iterations = 20;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  std::uint64_t seed = 0;
  int workers = 1;  // particle evaluations run concurrently
  // Search-phase evaluations only rank candidates, so they run at reduced
  // fidelity; the returned result is always re-solved at full fidelity.
  SolveSettings search_solver{1e-6, 1e-6, 60};
  ScSettings search_sc{1e-5, 1e-4, 10};
  SolveSettings final_solver;
  ScSettings final_sc;
};

/// Four-phase reference: hold 1, fly-around transfer, hold 2, final
/// approach. Hold phases are represented by a pair of nodes with identical
/// states (the closed-loop controller station-keeps there); within each
/// transfer segment consecutive nodes satisfy the impulsive linear dynamics.
struct ReferenceTrajectory {
  std::string kind = "nominal";       // "nominal" or "abort"
  double t_epoch_s = 0.0;             // mission time of the first node
  std::vector<double> t;              // node times, mission seconds
  std::vector<RelativeState> states;  // pre-impulse state at each node
  std::vector<Vec3> impulses;
  double tau_h1_s = 0.0;
  double tau_1_s = 0.0;
  double tau_h2_s = 0.0;
  double tau_2_s = 0.0;
  int fly_begin = 0;  // node range [fly_begin, fly_end] is the fly-around
  int fly_end = 0;
  int app_begin = 0;  // node range [app_begin, app_end] is the approach
  int app_end = 0;

  int node_count() const { return static_cast<int>(t.size()); }
  double total_duration_s() const { return tau_h1_s + tau_1_s + tau_h2_s + tau_2_s; }
  double t_end_s() const { return t.empty() ? t_epoch_s : t.back(); }
  double dv_total_mps() const;
  RelativeState terminal_state() const;
};

/// Outcome of reference generation. When ok is false the trajectory is not
/// usable and failure_reason explains why (the caller decides whether that
/// escalates to an abort).
struct GenerationResult {
  bool ok = false;
  std::string failure_reason;
  ReferenceTrajectory ref;
  NpEvaluation best;
  double generation_time_s = 0.0;
  int np_evaluations = 0;
};

/// Post-hoc consistency report for a reference trajectory.
struct ReferenceCheck {
  bool ok = false;
  double max_dynamics_residual_m = 0.0;
  double max_dynamics_residual_mps = 0.0;
  double min_fly_radius_m = 0.0;
  double max_corridor_violation_m = 0.0;
  double max_impulse_cap_violation_mps = 0.0;
  std::string detail;
};

/// Transfer node times [0 : dt : tau, tau]. The terminal time is appended
/// explicitly, so the final interval is generally shorter than dt; when the
/// remainder is below 1% of dt it is merged into the last regular interval
/// instead, which keeps every interval long enough for a well-conditioned
/// transcription. Requires tau >= 3 dt.
std::vector<double> node_grid(double tau, double dt);

/// Fly-around transfer: minimum-fuel impulsive trajectory from x_i to x_f in
/// exactly tau1 seconds, with per-node impulse caps at the buffered
/// acceleration and keep-out protection enforced by iteratively attached
/// separating planes (at nodes found in violation, anchored at the most
/// recent violating iterate, never removed).
TransferSolution solve_cp1(const RelativeState& x_i, const RelativeState& x_f,
                           double tau1, const RefGenParams& p, double n,
                           const SolveSettings& settings = {});

/// Final-approach transfer: as solve_cp1 but constrained to the buffered
/// approach corridor at every node (exact second-order-cone form) and to the
/// buffered plume-impingement bound at every impulse (successively
/// linearized around the previous iterate, starting from the corridor-only
/// solution).
TransferSolution solve_cp2(const RelativeState& x_i, const RelativeState& x_f,
                           double tau2, const RefGenParams& p, double n,
                           const SolveSettings& settings = {},
                           const ScSettings& sc = {});

/// Outer objective for one (tau1, tau2) candidate: sunlight holds before
/// each transfer, both transfer subproblems, and the total
/// J = tau1 + tau_h1 + tau2 + tau_h2 + eps_c per non-converged subproblem
/// (seconds). Throws EclipseHorizonFault when the profile is too short.
NpEvaluation np_objective(double tau1, double tau2, const EclipseProfile& profile,
                          double t, const RefGenParams& p, double n,
                          const SolveSettings& settings = {},
                          const ScSettings& sc = {});

/// Full reference generation from x_start at mission time t: particle-swarm
/// search over the two transfer durations minimizing np_objective, then
/// assembly of the four-phase reference. Candidates that fail either
/// subproblem are ranked strictly below feasible ones regardless of J.
GenerationResult generate_reference(const RelativeState& x_start, const RefGenParams& p,
                                    const EclipseProfile& profile, double t, double n,
                                    const PsoSettings& pso);

/// Abort retreat reference: a single transfer from x_start to the safe
/// circumnavigating orbit, choosing the shortest feasible duration from a
/// fixed 24-value scan of [tau_lb, tau_ub]. No keep-out planes, corridor,
/// plume, or sunlight holds: an abort leaves promptly on the buffered
/// impulse budget alone.
GenerationResult generate_abort_reference(const RelativeState& x_start,
                                          const RefGenParams& p, double t, double n,
                                          const SolveSettings& settings = {});

/// Entry state of the safe circumnavigating relative orbit: a 2:1 ellipse
/// centered on the client with along-track extent r_as/2.
RelativeState abort_target(double r_as, double n);

/// N near-uniform unit vectors from the offset golden-angle lattice.
/// N == 1 returns the single pole vector.
std::vector<Vec3> fibonacci_axes(int n_axes);

/// Machine check of the trajectory invariants: dynamics consistency inside
/// transfer segments, buffered keep-out radius at fly-around nodes, buffered
/// corridor at approach nodes, per-node impulse caps, and equal states across
/// hold intervals. Abort references check dynamics and caps only.
ReferenceCheck validate_reference(const ReferenceTrajectory& ref, const RefGenParams& p,
                                  double n);

/// Versioned JSON round-trip so tracking runs can be replayed from file.
std::string reference_to_json(const ReferenceTrajectory& ref, const RefGenParams& p,
                              double n);

struct ReferenceDocument {
  ReferenceTrajectory ref;
  RefGenParams params;
  double mean_motion_rad_s = 0.0;
};

/// Parses a document produced by reference_to_json; throws std::runtime_error
/// on schema mismatch or malformed input.
ReferenceDocument reference_from_json(const std::string& text);

}  // namespace cortex

#include "cortex/tracking.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "cortex/relmotion.hpp"
#include "cortex/rng.hpp"

namespace cortex {

namespace {

using json = nlohmann::json;

constexpr double kTimeEps = 1e-9;  // s, slop for phase-boundary comparisons

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kHold1: return "hold1";
    case Phase::kFlyAround: return "fly_around";
    case Phase::kHold2: return "hold2";
    case Phase::kFinalApproach: return "final_approach";
  }
  return "unknown";
}

const char* trigger_name(TriggerTag tag) {
  switch (tag) {
    case TriggerTag::kNone: return "none";
    case TriggerTag::kKeepOut: return "keep_out";
    case TriggerTag::kPlume: return "plume";
    case TriggerTag::kCone: return "cone";
    case TriggerTag::kTrackingDeviation: return "tracking_deviation";
    case TriggerTag::kBufferedKeepOut: return "buffered_keep_out";
    case TriggerTag::kBufferedCone: return "buffered_cone";
    case TriggerTag::kBufferedPlume: return "buffered_plume";
    case TriggerTag::kCommanded: return "commanded";
    case TriggerTag::kRecomputeLimit: return "recompute_limit";
    case TriggerTag::kRecoveryFailed: return "recovery_failed";
  }
  return "unknown";
}

const char* action_name(StepAction action) {
  switch (action) {
    case StepAction::kOk: return "ok";
    case StepAction::kRecompute: return "recompute";
    case StepAction::kAbort: return "abort";
  }
  return "unknown";
}

const char* event_name(EventType type) {
  switch (type) {
    case EventType::kStep: return "step";
    case EventType::kImpulse: return "impulse";
    case EventType::kRecompute: return "recompute";
    case EventType::kAbort: return "abort";
    case EventType::kFault: return "fault";
    case EventType::kInjection: return "injection";
  }
  return "unknown";
}

GuidanceConfig GuidanceConfig::from_params(const RefGenParams& p) {
  GuidanceConfig g;
  g.a_max = p.a_max;
  g.rho_kos = p.rho_kos;
  g.alpha_p = p.alpha_p;
  g.alpha_c = p.alpha_c;
  g.e_hat = p.e_hat;
  g.buffered_rho_kos = p.buffered_rho_kos();
  g.buffered_alpha_p = p.buffered_alpha_p();
  g.buffered_alpha_c = p.buffered_alpha_c();
  return g;
}

void GuidanceConfig::validate() const {
  if (!(dt_g > 0)) throw std::invalid_argument("guidance period must be positive");
  if (n_sub < 1) throw std::invalid_argument("guidance needs at least one substep");
  if (!(eps_p > 0)) throw std::invalid_argument("terminal penalty weight must be positive");
  for (double e : eps_r)
    if (!(e > 0)) throw std::invalid_argument("deviation thresholds must be positive");
  if (!(a_max > 0) || !(rho_kos > 0))
    throw std::invalid_argument("true constraint bounds must be positive");
  if (!(alpha_p > 0) || !(alpha_c > 0) || !(buffered_alpha_p > 0) || !(buffered_alpha_c > 0))
    throw std::invalid_argument("cone half-angles must be positive");
  if (!(buffered_rho_kos >= rho_kos))
    throw std::invalid_argument("buffered keep-out radius must not be inside the true one");
  if (std::abs(e_hat.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("docking axis must be a unit vector");
  if (!(kos_trigger_guard_m >= 0) || !(plume_trigger_guard_rad >= 0) ||
      !(cone_trigger_guard_rad >= 0) || !(plume_dv_floor_mps >= 0))
    throw std::invalid_argument("trigger guards must be non-negative");
}

CpgSolution solve_cpg(const RelativeState& x_k, const RelativeState& x_target, Phase phase,
                      const GuidanceConfig& g, double n, double dt_s) {
  const auto wall0 = std::chrono::steady_clock::now();
  g.validate();
  if (!(n > 0)) throw std::invalid_argument("mean motion must be positive");
  if (!x_k.vec().allFinite() || !x_target.vec().allFinite())
    throw std::invalid_argument("guidance states must be finite");
  const double dt = dt_s > 0 ? dt_s : g.dt_g;
  const int N = g.n_sub;
  const double sub = dt / N;

  // Direct shooting on the impulsive linear dynamics: with Phi the substep
  // transition matrix and B the velocity-channel injection, the pre-impulse
  // state at node k (1-based) is
  //   x_k = Phi^{k-1} x_1 + sum_{i<k} Phi^{k-i} B dv_i,
  // so every constraint is affine in the impulse sequence and no state
  // variables are needed.
  std::vector<Mat6> phi_pow(N + 1);
  phi_pow[0] = Mat6::Identity();
  const Mat6 phi = cw_stm(sub, n);
  for (int m = 1; m <= N; ++m) phi_pow[m] = phi * phi_pow[m - 1];

  const int nv = 4 * N + 1;  // impulses, slacks, terminal deviation
  const auto idx_dv = [](int j) { return 3 * (j - 1); };         // j = 1..N
  const auto idx_s = [N](int j) { return 3 * N + (j - 1); };     // j = 1..N
  const int idx_eps = 4 * N;

  ConicProgram prog;
  prog.num_vars = nv;
  prog.cost = Eigen::VectorXd::Zero(nv);
  for (int j = 1; j <= N; ++j) prog.cost[idx_s(j)] = 1.0;
  prog.cost[idx_eps] = g.eps_p;
  prog.eq.resize(0, nv);
  prog.eq_rhs.resize(0);

  const double cap = g.a_max * g.dt_g;
  for (int j = 1; j <= N; ++j) {
    SocConstraint norm_slack;
    norm_slack.C.resize(3, nv);
    std::vector<Eigen::Triplet<double>> trips;
    for (int a = 0; a < 3; ++a) trips.emplace_back(a, idx_dv(j) + a, 1.0);
    norm_slack.C.setFromTriplets(trips.begin(), trips.end());
    norm_slack.d = Eigen::VectorXd::Zero(3);
    norm_slack.p = Eigen::VectorXd::Zero(nv);
    norm_slack.p[idx_s(j)] = 1.0;
    norm_slack.q = 0.0;

    SocConstraint bound = norm_slack;
    bound.p = Eigen::VectorXd::Zero(nv);
    bound.q = cap;

    prog.cones.push_back(std::move(norm_slack));
    prog.cones.push_back(std::move(bound));
  }

  const Vec6 drift_end = phi_pow[N] * x_k.vec();
  {
    SocConstraint terminal;
    terminal.C.resize(6, nv);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 1; i <= N; ++i) {
      const Eigen::Matrix<double, 6, 3> blk = phi_pow[N + 1 - i].block<6, 3>(0, 3);
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 3; ++b) trips.emplace_back(a, idx_dv(i) + b, blk(a, b));
    }
    terminal.C.setFromTriplets(trips.begin(), trips.end());
    terminal.d = drift_end - x_target.vec();
    terminal.p = Eigen::VectorXd::Zero(nv);
    terminal.p[idx_eps] = 1.0;
    terminal.q = 0.0;
    prog.cones.push_back(std::move(terminal));
  }

  if (phase == Phase::kFinalApproach) {
    // Approach corridor ||r_k|| cos(alpha_c) <= e'r_k at every node the
    // impulses can influence (node 1 is the fixed current state).
    const double cos_ac = std::cos(g.alpha_c);
    for (int k = 2; k <= N + 1; ++k) {
      SocConstraint cone;
      cone.C.resize(3, nv);
      std::vector<Eigen::Triplet<double>> trips;
      cone.p = Eigen::VectorXd::Zero(nv);
      for (int i = 1; i < k; ++i) {
        const Eigen::Matrix<double, 3, 3> blk = phi_pow[k - i].block<3, 3>(0, 3);
        const Vec3 pe = blk.transpose() * g.e_hat;
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) trips.emplace_back(a, idx_dv(i) + b, cos_ac * blk(a, b));
          cone.p[idx_dv(i) + a] = pe[a];
        }
      }
      cone.C.setFromTriplets(trips.begin(), trips.end());
      const Vec3 r_drift = (phi_pow[k - 1] * x_k.vec()).head<3>();
      cone.d = cos_ac * r_drift;
      cone.q = g.e_hat.dot(r_drift);
      prog.cones.push_back(std::move(cone));
    }
  }

  ConicSolution sol = solve(prog, g.solver);
  if (sol.status == SolveStatus::kMaxIterations) {
    // One retry at relaxed tolerances before conceding the step; the program
    // is tiny and occasionally stalls a hair short of the strict gap.
    SolveSettings loose = g.solver;
    loose.feas_tol *= 10.0;
    loose.gap_tol *= 10.0;
    sol = solve(prog, loose);
  }

  CpgSolution out;
  out.status = sol.status;
  if (sol.status == SolveStatus::kOptimal) {
    out.feasible = true;
    out.impulses.reserve(N);
    for (int j = 1; j <= N; ++j) out.impulses.push_back(sol.primal.segment<3>(idx_dv(j)));
    out.eps_xf = std::max(0.0, sol.primal[idx_eps]);
    out.objective = sol.objective;
  } else {
    out.feasible = false;
    out.impulses.assign(N, Vec3::Zero());
    out.eps_xf = (drift_end - x_target.vec()).norm();
    out.objective = g.eps_p * out.eps_xf;
  }
  out.solve_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

StepOutcome check_triggers(const RelativeState& x_next, const RelativeState& ref_point,
                           const Vec3& accel, Phase phase, const GuidanceConfig& g) {
  const Vec3 r = x_next.r;
  const double rnorm = r.norm();
  const bool kos_phase = phase != Phase::kFinalApproach;
  const bool approach = phase == Phase::kFinalApproach;
  const double anorm = accel.norm();
  // accel is the boundary-sample commanded thrust: the final substep impulse
  // over the substep length. Direction is meaningless for tiny burns, so
  // samples whose impulse falls below the floor skip the plume checks.
  const double accel_floor = g.plume_dv_floor_mps * g.n_sub / g.dt_g;
  const bool thrusting = anorm >= accel_floor;

  // Abort conditions: violations of the true constraint set.
  if (kos_phase && rnorm < g.rho_kos) return {StepAction::kAbort, TriggerTag::kKeepOut};
  if (approach && thrusting && accel.dot(r) > anorm * rnorm * std::cos(g.alpha_p))
    return {StepAction::kAbort, TriggerTag::kPlume};
  if (approach && g.e_hat.dot(r) < rnorm * std::cos(g.alpha_c))
    return {StepAction::kAbort, TriggerTag::kCone};

  // Recompute conditions: tracking deviation, then the buffered set.
  // The buffered thresholds carry small guards because the reference itself
  // rides exactly on the buffered bounds.
  if ((x_next.r - ref_point.r).norm() > g.eps_r[static_cast<int>(phase)])
    return {StepAction::kRecompute, TriggerTag::kTrackingDeviation};
  if (kos_phase && rnorm < g.buffered_rho_kos - g.kos_trigger_guard_m)
    return {StepAction::kRecompute, TriggerTag::kBufferedKeepOut};
  if (approach &&
      g.e_hat.dot(r) < rnorm * std::cos(g.buffered_alpha_c + g.cone_trigger_guard_rad))
    return {StepAction::kRecompute, TriggerTag::kBufferedCone};
  if (approach && thrusting &&
      accel.dot(r) > anorm * rnorm * std::cos(g.buffered_alpha_p - g.plume_trigger_guard_rad))
    return {StepAction::kRecompute, TriggerTag::kBufferedPlume};

  return {StepAction::kOk, TriggerTag::kNone};
}

RelativeState interp_reference(const ReferenceTrajectory& ref, double t) {
  if (ref.t.empty()) throw std::invalid_argument("cannot interpolate an empty reference");
  if (t <= ref.t.front()) return ref.states.front();
  if (t >= ref.t.back()) return ref.states.back();
  const auto hi = std::upper_bound(ref.t.begin(), ref.t.end(), t);
  const std::size_t k = static_cast<std::size_t>(hi - ref.t.begin());
  const double t0 = ref.t[k - 1], t1 = ref.t[k];
  if (t1 - t0 < 1e-12) return ref.states[k];
  const double w = (t - t0) / (t1 - t0);
  RelativeState out;
  out.r = (1.0 - w) * ref.states[k - 1].r + w * ref.states[k].r;
  out.v = (1.0 - w) * ref.states[k - 1].v + w * ref.states[k].v;
  return out;
}

PsoSettings TrackingEnvironment::regen_pso_defaults() {
  PsoSettings s;
  s.particles = 8;
  s.iterations = 5;
  return s;
}

namespace {

struct PhaseWindow {
  Phase phase = Phase::kHold1;
  double t_begin = 0.0;
  double t_end = 0.0;
  bool hold = false;
};

std::vector<PhaseWindow> phase_windows(const ReferenceTrajectory& ref) {
  std::vector<PhaseWindow> out;
  double t = ref.t_epoch_s;
  const std::array<std::pair<Phase, double>, 4> spans = {{
      {Phase::kHold1, ref.tau_h1_s},
      {Phase::kFlyAround, ref.tau_1_s},
      {Phase::kHold2, ref.tau_h2_s},
      {Phase::kFinalApproach, ref.tau_2_s},
  }};
  for (const auto& [phase, tau] : spans) {
    if (tau > 0) {
      PhaseWindow w;
      w.phase = phase;
      w.t_begin = t;
      w.t_end = t + tau;
      w.hold = phase == Phase::kHold1 || phase == Phase::kHold2;
      out.push_back(w);
      t = w.t_end;
    }
  }
  return out;
}

}  // namespace

MissionResult run_tracking(const ReferenceTrajectory& ref, const RelativeState& x0,
                           const TrackingEnvironment& env, const ErrorModel& err,
                           const GuidanceConfig& g, const std::vector<double>& abort_schedule,
                           std::uint64_t seed, const std::vector<StateInjection>& injections) {
  g.validate();
  err.validate();
  env.truth.validate();
  env.params.validate();
  env.orbit.validate();
  if (ref.node_count() < 2) throw std::invalid_argument("reference has too few nodes");
  if (env.max_recomputes < 0) throw std::invalid_argument("recompute budget must be >= 0");
  const double n = env.orbit.mean_motion_rad_s;

  MissionResult m;
  RelativeState x = x0;
  InertialState client = env.client0;
  const double t0 = ref.t_epoch_s;
  double t = t0;
  Rng rng(mix_seed(seed, 0));

  std::vector<double> schedule = abort_schedule;
  std::sort(schedule.begin(), schedule.end());
  std::size_t sched_i = 0;
  std::vector<StateInjection> inject = injections;
  std::sort(inject.begin(), inject.end(),
            [](const StateInjection& a, const StateInjection& b) { return a.t_s < b.t_s; });
  std::size_t inj_i = 0;

  ReferenceTrajectory active = ref;
  bool abort_mode = false;

  const auto log_event = [&m](EventType type, double at, Phase phase, TriggerTag tag,
                              double value, std::string detail) {
    m.events.push_back({type, at, phase, tag, value, std::move(detail)});
  };

  const auto nullify_velocity = [&](Phase phase) {
    const double dv = x.v.norm();
    x.v = Vec3::Zero();
    m.dv_total_mps += dv;
    m.dv_nullified_mps += dv;
    log_event(EventType::kImpulse, t, phase, TriggerTag::kNone, dv, "velocity nullification");
  };

  // Switch to the retreat reference; returns false on a terminal fault.
  const auto enter_abort = [&](Phase phase, TriggerTag tag, const std::string& why) {
    m.aborted = true;
    m.abort_count = 1;
    log_event(EventType::kAbort, t, phase, tag, 0.0, why);
    nullify_velocity(phase);
    GenerationResult ga = generate_abort_reference(x, env.params, t, n, env.abort_solver);
    if (!ga.ok) {
      m.fault = true;
      m.fault_reason = "retreat reference generation failed: " + ga.failure_reason;
      log_event(EventType::kFault, t, phase, tag, 0.0, m.fault_reason);
      return false;
    }
    active = std::move(ga.ref);
    abort_mode = true;
    return true;
  };

  // Rebuild the nominal reference from the deviated state; escalates to the
  // abort path on budget exhaustion or regeneration failure. Returns false
  // on a terminal fault.
  const auto handle_recompute = [&](Phase phase, TriggerTag tag) {
    ++m.recompute_count;
    log_event(EventType::kRecompute, t, phase, tag, 0.0, trigger_name(tag));
    nullify_velocity(phase);
    if (m.recompute_count > env.max_recomputes)
      return enter_abort(phase, TriggerTag::kRecomputeLimit, "recompute budget exhausted");
    // A compliant plan must pull its first free node out to the buffered
    // keep-out radius within one node spacing; from deeper inside that is
    // kinematically impossible under the impulse caps, so retreat instead of
    // burning the budget on plans that cannot exist.
    const double climb = env.params.buffered_a_max() * env.params.dt_cp1 * env.params.dt_cp1;
    if (x.r.norm() < env.params.buffered_rho_kos() - climb)
      return enter_abort(phase, TriggerTag::kRecoveryFailed,
                         "deviated state too deep inside the buffered keep-out sphere");
    PsoSettings pso = env.regen_pso;
    pso.seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(m.recompute_count));
    GenerationResult gr;
    try {
      gr = generate_reference(x, env.params, env.profile, t, n, pso);
    } catch (const EclipseHorizonFault& e) {
      gr.ok = false;
      gr.failure_reason = e.what();
    }
    if (!gr.ok) {
      log_event(EventType::kFault, t, phase, tag, 0.0,
                "reference regeneration failed: " + gr.failure_reason);
      return enter_abort(phase, TriggerTag::kRecoveryFailed, gr.failure_reason);
    }
    active = std::move(gr.ref);
    return true;
  };

  bool done = false;
  while (!done && !m.fault) {
    const std::vector<PhaseWindow> windows = phase_windows(active);
    bool replanned = false;
    for (const PhaseWindow& w : windows) {
      if (w.t_end <= t + kTimeEps) continue;
      const RelativeState station = interp_reference(active, w.t_begin);
      while (w.t_end - t > kTimeEps) {
        if (!abort_mode && sched_i < schedule.size() && t >= schedule[sched_i] - kTimeEps) {
          ++sched_i;
          if (!enter_abort(w.phase, TriggerTag::kCommanded, "commanded abort")) break;
          replanned = true;
          break;
        }
        const double dt = std::min(g.dt_g, w.t_end - t);
        const RelativeState target =
            w.hold ? station : interp_reference(active, t + dt);
        const CpgSolution cpg = solve_cpg(x, target, w.phase, g, n, dt);
        m.solve_times_s.push_back(cpg.solve_time_s);
        if (!cpg.feasible) {
          ++m.infeasible_cpg_count;
          log_event(EventType::kFault, t, w.phase, TriggerTag::kNone, 0.0,
                    "guidance program unsolved; coasting this step");
        }

        double dv_commanded = 0.0;
        for (const Vec3& dv : cpg.impulses) dv_commanded += dv.norm();
        // Thrust in effect as the vehicle arrives at the step boundary, where
        // the triggers sample it.
        const Vec3 accel_boundary = cpg.impulses.empty()
                                        ? Vec3(Vec3::Zero())
                                        : Vec3(cpg.impulses.back() * g.n_sub / dt);

        std::vector<double> grid(static_cast<std::size_t>(g.n_sub) + 1);
        for (int j = 0; j <= g.n_sub; ++j) grid[j] = t + dt * j / g.n_sub;
        grid.back() = t + dt;
        const SegmentResult seg =
            propagate_segment(x, cpg.impulses, grid, client, err, env.truth, rng);

        StepRecord rec;
        rec.t_s = t;
        rec.dt_s = dt;
        rec.phase = w.phase;
        rec.abort_mode = abort_mode;
        rec.x_start = x;
        rec.target = target;
        rec.dv_commanded_mps = dv_commanded;
        rec.dv_executed_mps = seg.dv_executed_mps;
        rec.missed_thrust = seg.missed_thrust;
        rec.eps_xf_m = cpg.eps_xf;

        x = seg.x_end;
        client = seg.cso_end;
        t += dt;
        m.dv_total_mps += seg.dv_executed_mps;
        log_event(EventType::kStep, rec.t_s, w.phase, TriggerTag::kNone, dt, "");
        log_event(EventType::kImpulse, rec.t_s, w.phase, TriggerTag::kNone, seg.dv_executed_mps,
                  seg.missed_thrust ? "missed thrust" : "");

        while (inj_i < inject.size() && inject[inj_i].t_s <= t + kTimeEps) {
          x.r += inject[inj_i].dr;
          x.v += inject[inj_i].dv;
          log_event(EventType::kInjection, t, w.phase, TriggerTag::kNone,
                    inject[inj_i].dr.norm(), "state injection");
          ++inj_i;
        }

        StepOutcome outcome;
        if (!abort_mode) {
          const RelativeState ref_point = w.hold ? station : interp_reference(active, t);
          outcome = check_triggers(x, ref_point, accel_boundary, w.phase, g);
        }
        rec.x_end = x;
        rec.action = outcome.action;
        rec.tag = outcome.tag;
        m.steps.push_back(rec);

        if (outcome.action == StepAction::kAbort) {
          enter_abort(w.phase, outcome.tag, trigger_name(outcome.tag));
          replanned = true;
          break;
        }
        if (outcome.action == StepAction::kRecompute) {
          handle_recompute(w.phase, outcome.tag);
          replanned = true;
          break;
        }
      }
      if (replanned || m.fault) break;
    }
    if (!replanned && !m.fault) done = true;
  }

  m.x_final = x;
  m.x_goal = m.fault ? abort_target(env.params.r_as, n) : active.terminal_state();
  m.terminal_pos_error_m = (x.r - m.x_goal.r).norm();
  m.terminal_vel_error_mps = (x.v - m.x_goal.v).norm();
  m.tof_s = t - t0;
  m.completed = !m.aborted && !m.fault;
  return m;
}

std::string mission_to_json(const MissionResult& m) {
  json doc;
  doc["schema"] = "cortex-mission/1";
  doc["completed"] = m.completed;
  doc["aborted"] = m.aborted;
  doc["fault"] = m.fault;
  doc["fault_reason"] = m.fault_reason;
  doc["terminal_pos_error_m"] = m.terminal_pos_error_m;
  doc["terminal_vel_error_mps"] = m.terminal_vel_error_mps;
  doc["dv_total_mps"] = m.dv_total_mps;
  doc["dv_nullified_mps"] = m.dv_nullified_mps;
  doc["tof_s"] = m.tof_s;
  doc["recompute_count"] = m.recompute_count;
  doc["abort_count"] = m.abort_count;
  doc["infeasible_cpg_count"] = m.infeasible_cpg_count;
  const auto state_json = [](const RelativeState& s) {
    return json{{"r", {s.r.x(), s.r.y(), s.r.z()}}, {"v", {s.v.x(), s.v.y(), s.v.z()}}};
  };
  doc["x_final"] = state_json(m.x_final);
  doc["x_goal"] = state_json(m.x_goal);
  doc["solve_times_s"] = m.solve_times_s;
  json events = json::array();
  for (const MissionEvent& e : m.events) {
    events.push_back({{"type", event_name(e.type)},
                      {"t_s", e.t_s},
                      {"phase", phase_name(e.phase)},
                      {"tag", trigger_name(e.tag)},
                      {"value", e.value},
                      {"detail", e.detail}});
  }
  doc["events"] = std::move(events);
  return doc.dump(2);
}

std::string mission_steps_csv(const MissionResult& m) {
  std::ostringstream os;
  os << "t_s,dt_s,phase,abort_mode,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,range_m,"
        "tgt_x_m,tgt_y_m,tgt_z_m,dv_commanded_mps,dv_executed_mps,missed_thrust,"
        "eps_xf,action,tag\n";
  for (const StepRecord& s : m.steps) {
    os << fmt_double(s.t_s) << ',' << fmt_double(s.dt_s) << ',' << phase_name(s.phase) << ','
       << (s.abort_mode ? 1 : 0) << ',' << fmt_double(s.x_end.r.x()) << ','
       << fmt_double(s.x_end.r.y()) << ',' << fmt_double(s.x_end.r.z()) << ','
       << fmt_double(s.x_end.v.x()) << ',' << fmt_double(s.x_end.v.y()) << ','
       << fmt_double(s.x_end.v.z()) << ',' << fmt_double(s.x_end.r.norm()) << ','
       << fmt_double(s.target.r.x()) << ',' << fmt_double(s.target.r.y()) << ','
       << fmt_double(s.target.r.z()) << ',' << fmt_double(s.dv_commanded_mps) << ','
       << fmt_double(s.dv_executed_mps) << ',' << (s.missed_thrust ? 1 : 0) << ','
       << fmt_double(s.eps_xf_m) << ',' << action_name(s.action) << ',' << trigger_name(s.tag)
       << '\n';
  }
  return os.str();
}

}  // namespace cortex

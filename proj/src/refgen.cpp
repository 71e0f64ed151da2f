#include "cortex/refgen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "cortex/parallel.hpp"
#include "cortex/relmotion.hpp"
#include "cortex/rng.hpp"

namespace cortex {

namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Position-node transcription.
//
// A fixed-duration impulsive transfer is parameterized by the node positions
// alone. With both boundary states pinned, the velocity after each impulse is
// determined by the coast that must reach the next node position, so every
// impulse is an affine function of (at most) three consecutive node
// positions. Compared to carrying full states as variables, this roughly
// halves the conic-program size, which matters because the duration search
// solves thousands of these programs per reference.
//
// Node bookkeeping for N intervals (N impulses, nodes 0..N):
//   - node 0 position is the initial boundary,
//   - node N position is the terminal boundary,
//   - node N-1 and the post-impulse velocity there follow from coasting the
//     terminal state backwards over the last interval (no impulse exists at
//     node N, so that leg is a pure coast),
//   - nodes 1..N-2 are free decision variables.
// ---------------------------------------------------------------------------

struct IntervalStm {
  Mat3 rr, rv, vr, vv, rv_inv;
  double dt = 0.0;
};

std::vector<IntervalStm> interval_stms(const std::vector<double>& t, double n) {
  std::vector<IntervalStm> out(t.size() - 1);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double dt = t[k + 1] - t[k];
    const Mat6 phi = cw_stm(dt, n);
    IntervalStm& s = out[k];
    s.dt = dt;
    s.rr = phi.topLeftCorner<3, 3>();
    s.rv = phi.topRightCorner<3, 3>();
    s.vr = phi.bottomLeftCorner<3, 3>();
    s.vv = phi.bottomRightCorner<3, 3>();
    s.rv_inv = s.rv.inverse();
    if (!s.rv_inv.allFinite() || ((s.rv * s.rv_inv) - Mat3::Identity()).norm() > 1e-6)
      throw std::invalid_argument("transfer grid produced a singular coast interval");
  }
  return out;
}

/// dv_k = sum_j terms[j].second * r_node(terms[j].first) + c, over free nodes.
struct AffineImpulse {
  std::vector<std::pair<int, Mat3>> terms;
  Vec3 c = Vec3::Zero();
};

struct Transcription {
  std::vector<double> tgrid;
  std::vector<IntervalStm> stm;
  int n_imp = 0;   // N = number of intervals = number of impulses
  int n_free = 0;  // free position nodes 1..N-2
  Vec3 r_node0 = Vec3::Zero();
  Vec3 r_node_nm1 = Vec3::Zero();
  Vec3 r_node_n = Vec3::Zero();
  Vec3 v0_minus = Vec3::Zero();    // incoming velocity at node 0
  Vec3 v_nm1_plus = Vec3::Zero();  // post-impulse velocity at node N-1
  std::vector<AffineImpulse> imp;

  bool is_free(int node) const { return node >= 1 && node <= n_imp - 2; }
  int pos_base(int node) const { return 3 * (node - 1); }
  int s_index(int k) const { return 3 * n_free + k; }
  int num_vars() const { return 3 * n_free + n_imp; }

  Vec3 fixed_r(int node) const {
    if (node == 0) return r_node0;
    if (node == n_imp - 1) return r_node_nm1;
    if (node == n_imp) return r_node_n;
    throw std::logic_error("fixed_r queried for a free node");
  }
};

void accumulate_term(AffineImpulse& ai, const Transcription& tr, int node, const Mat3& m) {
  if (!tr.is_free(node)) {
    ai.c += m * tr.fixed_r(node);
    return;
  }
  for (auto& [existing, coeff] : ai.terms) {
    if (existing == node) {
      coeff += m;
      return;
    }
  }
  ai.terms.emplace_back(node, m);
}

Transcription build_transcription(const RelativeState& x_i, const RelativeState& x_f,
                                  const std::vector<double>& grid, double n) {
  Transcription tr;
  tr.tgrid = grid;
  tr.stm = interval_stms(grid, n);
  const int N = static_cast<int>(grid.size()) - 1;
  if (N < 3) throw std::invalid_argument("transfer grid needs at least 3 intervals");
  tr.n_imp = N;
  tr.n_free = N - 2;
  tr.r_node0 = x_i.r;
  tr.v0_minus = x_i.v;
  tr.r_node_n = x_f.r;
  // The leg from node N-1 to node N is a pure coast into the terminal state.
  const Vec6 xm = cw_stm(-tr.stm[N - 1].dt, n) * x_f.vec();
  tr.r_node_nm1 = xm.head<3>();
  tr.v_nm1_plus = xm.tail<3>();

  tr.imp.resize(N);
  for (int k = 0; k < N; ++k) {
    AffineImpulse& ai = tr.imp[k];
    // Post-impulse velocity: the coast that reaches the next node position.
    if (k <= N - 2) {
      const Mat3& a = tr.stm[k].rv_inv;
      accumulate_term(ai, tr, k + 1, a);
      accumulate_term(ai, tr, k, -(a * tr.stm[k].rr));
    } else {
      ai.c += tr.v_nm1_plus;
    }
    // Incoming velocity: propagate the previous node's post-impulse state.
    if (k == 0) {
      ai.c -= tr.v0_minus;
    } else {
      const IntervalStm& s = tr.stm[k - 1];
      accumulate_term(ai, tr, k - 1, -(s.vr - s.vv * s.rv_inv * s.rr));
      accumulate_term(ai, tr, k, -(s.vv * s.rv_inv));
    }
  }
  return tr;
}

std::vector<Vec3> node_positions(const Transcription& tr, const Eigen::VectorXd& z) {
  std::vector<Vec3> pos(tr.n_imp + 1);
  for (int node = 0; node <= tr.n_imp; ++node)
    pos[node] = tr.is_free(node) ? Vec3(z.segment<3>(tr.pos_base(node))) : tr.fixed_r(node);
  return pos;
}

std::vector<Vec3> node_impulses(const Transcription& tr, const Eigen::VectorXd& z) {
  std::vector<Vec3> dv(tr.n_imp);
  for (int k = 0; k < tr.n_imp; ++k) {
    Vec3 v = tr.imp[k].c;
    for (const auto& [node, m] : tr.imp[k].terms) v += m * z.segment<3>(tr.pos_base(node));
    dv[k] = v;
  }
  return dv;
}

ConicProgram base_program(const Transcription& tr, double s_cap) {
  ConicProgram prog;
  const int nv = tr.num_vars();
  prog.num_vars = nv;
  prog.cost = Eigen::VectorXd::Zero(nv);
  prog.lower = Eigen::VectorXd::Constant(nv, -kInf);
  prog.upper = Eigen::VectorXd::Constant(nv, kInf);
  prog.eq.resize(0, nv);
  for (int k = 0; k < tr.n_imp; ++k) {
    const int si = tr.s_index(k);
    prog.cost[si] = 1.0;
    prog.lower[si] = 0.0;
    prog.upper[si] = s_cap;
    SocConstraint cone;
    cone.C.resize(3, nv);
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& [node, m] : tr.imp[k].terms)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trip.emplace_back(r, tr.pos_base(node) + c, m(r, c));
    cone.C.setFromTriplets(trip.begin(), trip.end());
    cone.d = tr.imp[k].c;
    cone.p = Eigen::VectorXd::Zero(nv);
    cone.p[si] = 1.0;
    cone.q = 0.0;
    prog.cones.push_back(std::move(cone));
  }
  return prog;
}

/// Keep-out protection at one node: the position must stay on the far side
/// of the plane through the sphere whose outward normal is l (unit).
void add_separating_plane(ConicProgram& prog, const Transcription& tr, int node,
                          const Vec3& l, double rho) {
  SocConstraint cone;
  cone.C.resize(0, prog.num_vars);
  cone.d.resize(0);
  cone.p = Eigen::VectorXd::Zero(prog.num_vars);
  cone.p.segment<3>(tr.pos_base(node)) = l;
  cone.q = -rho;
  prog.cones.push_back(std::move(cone));
}

/// Approach-corridor membership at one node: ||r|| cos(alpha) <= e.r.
void add_corridor_cone(ConicProgram& prog, const Transcription& tr, int node,
                       double cos_alpha, const Vec3& e) {
  SocConstraint cone;
  cone.C.resize(3, prog.num_vars);
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < 3; ++r) trip.emplace_back(r, tr.pos_base(node) + r, cos_alpha);
  cone.C.setFromTriplets(trip.begin(), trip.end());
  cone.d = Eigen::VectorXd::Zero(3);
  cone.p = Eigen::VectorXd::Zero(prog.num_vars);
  cone.p.segment<3>(tr.pos_base(node)) = e;
  cone.q = 0.0;
  prog.cones.push_back(std::move(cone));
}

double plume_margin_value(const Vec3& r, const Vec3& w, double cos_alpha) {
  return w.dot(r) - cos_alpha * w.norm() * r.norm();
}

/// Impulses below this are actuator noise: they carry no meaningful plume
/// load, and the direction of a near-zero iterate impulse is meaningless, so
/// neither cuts nor violation checks should be driven by them.
constexpr double kPlumeImpulseFloor = 1e-6;  // m/s

/// Plume-impingement bound at impulse k, linearized around iterate
/// (r_m, w_m): thrusting within alpha of the client direction is forbidden.
void add_plume_row(ConicProgram& prog, const Transcription& tr, int k, const Vec3& r_m,
                   const Vec3& w_m, double cos_alpha) {
  const double wn = w_m.norm();
  const double rn = r_m.norm();
  if (wn < kPlumeImpulseFloor || rn < 1e-9) return;  // negligible / degenerate at the iterate
  const Vec3 g_r = w_m - cos_alpha * wn * (r_m / rn);
  const Vec3 g_w = r_m - cos_alpha * rn * (w_m / wn);
  const double h_m = plume_margin_value(r_m, w_m, cos_alpha);

  // h_m + g_r.(r_k - r_m) + g_w.(dv_k - w_m) <= 0, with dv_k affine in the
  // free node positions; collect the variable part and move the rest right.
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(prog.num_vars);
  double rhs = -h_m + g_r.dot(r_m) + g_w.dot(w_m) - g_w.dot(tr.imp[k].c);
  for (const auto& [node, m] : tr.imp[k].terms)
    coef.segment<3>(tr.pos_base(node)) += m.transpose() * g_w;
  if (tr.is_free(k))
    coef.segment<3>(tr.pos_base(k)) += g_r;
  else
    rhs -= g_r.dot(tr.fixed_r(k));

  SocConstraint cone;
  cone.C.resize(0, prog.num_vars);
  cone.d.resize(0);
  cone.p = -coef;
  cone.q = rhs;
  prog.cones.push_back(std::move(cone));
}

TransferSolution finalize_transfer(const Transcription& tr, const RelativeState& x_i,
                                   const RelativeState& x_f, const Eigen::VectorXd& z,
                                   double n, double objective) {
  TransferSolution out;
  out.converged = true;
  out.t = tr.tgrid;
  out.objective_mps = objective;
  out.impulses = node_impulses(tr, z);
  out.impulses.push_back(Vec3::Zero());  // terminal node carries no impulse
  // Re-propagate so consecutive stored nodes satisfy the impulsive dynamics
  // exactly; the boundary states are met by construction of the impulse maps.
  out.states.resize(tr.n_imp + 1);
  out.states[0] = x_i;
  Vec6 cur = x_i.vec();
  for (int k = 0; k < tr.n_imp; ++k) {
    cur = cw_step(cur, out.impulses[k], tr.stm[k].dt, n);
    out.states[k + 1] = RelativeState::from_vec(cur);
    out.dv_total_mps += out.impulses[k].norm();
  }
  out.terminal_residual_m = (out.states.back().r - x_f.r).norm();
  out.terminal_residual_mps = (out.states.back().v - x_f.v).norm();
  return out;
}

constexpr int kMaxScPasses = 15;

bool refgen_trace_enabled() {
  static const bool on = std::getenv("CORTEX_REFGEN_TRACE") != nullptr;
  return on;
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    default: return "iteration limit";
  }
}

}  // namespace

void RefGenParams::set_axis(const Vec3& e) {
  const double en = e.norm();
  if (!(en > 1e-12)) throw std::invalid_argument("docking axis must be nonzero");
  e_hat = e / en;
  x_f1 = RelativeState{buffered_rho_kos() * e_hat, Vec3::Zero()};
  x_f2 = RelativeState{1.0 * e_hat, Vec3::Zero()};
}

RefGenParams RefGenParams::defaults() {
  RefGenParams p;
  p.x_i1 = RelativeState{Vec3(0.0, -37.5, 0.0), Vec3::Zero()};
  p.set_axis(p.e_hat);
  return p;
}

void RefGenParams::validate() const {
  if (!(a_max > 0)) throw std::invalid_argument("a_max must be positive");
  if (!(rho_kos > 0)) throw std::invalid_argument("rho_kos must be positive");
  if (!(alpha_c > 0 && alpha_c < alpha_p && alpha_p < kPi / 2))
    throw std::invalid_argument("need 0 < alpha_c < alpha_p < pi/2");
  if (std::abs(e_hat.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("e_hat must be a unit vector");
  if (!(tau_lb > 0 && tau_lb < tau_ub))
    throw std::invalid_argument("need 0 < tau_lb < tau_ub");
  if (!(dt_cp1 > 0 && dt_cp2 > 0)) throw std::invalid_argument("node spacings must be positive");
  if (!(tau_lb >= 3 * dt_cp1 && tau_lb >= 3 * dt_cp2))
    throw std::invalid_argument("tau_lb must cover at least three node intervals");
  if (!(eps_c >= 0)) throw std::invalid_argument("eps_c must be non-negative");
  if (!(thrust_margin > 0 && thrust_margin <= 1))
    throw std::invalid_argument("thrust margin must lie in (0, 1]");
  if (!(kos_margin >= 1)) throw std::invalid_argument("keep-out margin must be >= 1");
  if (!(plume_margin >= 1)) throw std::invalid_argument("plume margin must be >= 1");
  if (!(corridor_margin > 0 && corridor_margin <= 1))
    throw std::invalid_argument("corridor margin must lie in (0, 1]");
  if (!(buffered_alpha_p() < kPi / 2))
    throw std::invalid_argument("buffered plume half-angle must stay below pi/2");
  if (!(r_as > 0)) throw std::invalid_argument("r_as must be positive");
}

std::vector<double> node_grid(double tau, double dt) {
  if (!(dt > 0) || !(tau >= 3 * dt))
    throw std::invalid_argument("node_grid: need dt > 0 and tau >= 3 dt");
  const int m = static_cast<int>(std::floor(tau / dt + 1e-12));
  const double rem = tau - m * dt;
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(m) + 2);
  for (int i = 0; i <= m; ++i) t.push_back(i * dt);
  // Append the terminal time; a sub-1% sliver is merged into the last regular
  // interval instead, which keeps the transcription well conditioned.
  if (rem > 0.01 * dt)
    t.push_back(tau);
  else
    t.back() = tau;
  return t;
}

TransferSolution solve_cp1(const RelativeState& x_i, const RelativeState& x_f, double tau1,
                           const RefGenParams& p, double n, const SolveSettings& settings) {
  const std::vector<double> grid = node_grid(tau1, p.dt_cp1);
  const Transcription tr = build_transcription(x_i, x_f, grid, n);
  const double rho = p.buffered_rho_kos();
  const double s_cap = p.buffered_a_max() * p.dt_cp1;

  TransferSolution out;
  out.t = grid;
  // The two terminal-side node positions are fixed by the boundary state; a
  // separating plane could never move them, so check them up front. Ties at
  // exactly rho are acceptable (the corridor-entry point sits on the sphere).
  if (tr.r_node_nm1.norm() < rho - 1e-9 || tr.r_node_n.norm() < rho - 1e-9) {
    out.failure_reason = "terminal boundary inside the buffered keep-out sphere";
    return out;
  }

  std::map<int, Vec3> planes;  // node -> outward normal; entries never removed
  for (int pass = 1; pass <= kMaxScPasses; ++pass) {
    ConicProgram prog = base_program(tr, s_cap);
    for (const auto& [node, l] : planes) add_separating_plane(prog, tr, node, l, rho);
    const ConicSolution sol = solve(prog, settings);
    ++out.conic_solves;
    out.sc_passes = pass;
    if (sol.status != SolveStatus::kOptimal) {
      out.failure_reason = std::string(planes.empty() ? "transfer conic program not solved ("
                                                       : "keep-out plane pass not solved (") +
                           status_name(sol.status) + ")";
      return out;
    }
    const std::vector<Vec3> pos = node_positions(tr, sol.primal);
    bool violated = false;
    for (int node = 1; node <= tr.n_imp - 2; ++node) {
      const double r = pos[node].norm();
      if (r < rho - 1e-9) {
        violated = true;
        planes[node] = r > 1e-12 ? Vec3(pos[node] / r) : Vec3(tr.r_node_n.normalized());
      }
    }
    if (!violated) {
      const int passes = out.sc_passes;
      const int solves = out.conic_solves;
      out = finalize_transfer(tr, x_i, x_f, sol.primal, n, sol.objective);
      out.sc_passes = passes;
      out.conic_solves = solves;
      return out;
    }
  }
  out.failure_reason = "keep-out plane iteration did not converge";
  return out;
}

TransferSolution solve_cp2(const RelativeState& x_i, const RelativeState& x_f, double tau2,
                           const RefGenParams& p, double n, const SolveSettings& settings,
                           const ScSettings& sc) {
  const std::vector<double> grid = node_grid(tau2, p.dt_cp2);
  const Transcription tr = build_transcription(x_i, x_f, grid, n);
  const double cos_ac = std::cos(p.buffered_alpha_c());
  const double cos_ap = std::cos(p.buffered_alpha_p());
  const double s_cap = p.buffered_a_max() * p.dt_cp2;

  TransferSolution out;
  out.t = grid;
  for (const int node : {0, tr.n_imp - 1, tr.n_imp}) {
    const Vec3 r = tr.fixed_r(node);
    if (r.norm() * cos_ac - p.e_hat.dot(r) > 1e-9) {
      out.failure_reason = "boundary node outside the buffered approach corridor";
      return out;
    }
  }

  // node -> (position, impulse) the plume cut for that node is linearized at.
  // A node enters the anchor map the first time it carries a meaningful
  // impulse and is never removed; anchors are damped toward the latest
  // iterate. Both properties are needed for convergence: removal lets the
  // optimizer shuttle a violating impulse between nodes whose cuts have
  // lapsed, and undamped anchors chatter because the braking impulses sit on
  // the plume cone, whose exterior is nonconvex.
  std::map<int, std::pair<Vec3, Vec3>> anchors;
  const auto build = [&](bool with_plume) {
    ConicProgram prog = base_program(tr, s_cap);
    for (int node = 1; node <= tr.n_imp - 2; ++node)
      add_corridor_cone(prog, tr, node, cos_ac, p.e_hat);
    if (with_plume)
      for (const auto& [k, anchor] : anchors)
        add_plume_row(prog, tr, k, anchor.first, anchor.second, cos_ap);
    return prog;
  };
  const auto update_anchors = [&](const std::vector<Vec3>& pos, const std::vector<Vec3>& dv) {
    for (int k = 0; k < tr.n_imp; ++k) {
      if (dv[k].norm() < kPlumeImpulseFloor) continue;
      const auto it = anchors.find(k);
      if (it == anchors.end())
        anchors[k] = {pos[k], dv[k]};
      else
        it->second = {0.5 * (it->second.first + pos[k]), 0.5 * (it->second.second + dv[k])};
    }
  };
  // The interior-point solve occasionally stalls just short of its iteration
  // cap on nearly-converged cut geometry; one retry at 10x looser tolerances
  // recovers it, and the result is still held to the true violation check.
  const auto robust_solve = [&](const ConicProgram& prog) {
    ConicSolution s = solve(prog, settings);
    ++out.conic_solves;
    if (s.status == SolveStatus::kMaxIterations) {
      SolveSettings loose = settings;
      loose.feas_tol *= 10.0;
      loose.gap_tol *= 10.0;
      s = solve(prog, loose);
      ++out.conic_solves;
    }
    return s;
  };
  const auto max_violation = [&](const std::vector<Vec3>& pos, const std::vector<Vec3>& dv) {
    double worst = -kInf;
    for (int k = 0; k < tr.n_imp; ++k) {
      if (dv[k].norm() < kPlumeImpulseFloor) continue;
      worst = std::max(worst, plume_margin_value(pos[k], dv[k], cos_ap));
    }
    return worst;
  };

  ConicSolution sol = robust_solve(build(false));
  out.sc_passes = 1;
  if (refgen_trace_enabled())
    std::fprintf(stderr, "[cp2] pass 0 status=%s obj=%.9e\n", status_name(sol.status),
                 sol.objective);
  if (sol.status != SolveStatus::kOptimal) {
    out.failure_reason = std::string("approach conic program not solved (") + status_name(sol.status) + ")";
    return out;
  }
  std::vector<Vec3> pos = node_positions(tr, sol.primal);
  std::vector<Vec3> dv = node_impulses(tr, sol.primal);
  double prev_obj = sol.objective;

  if (max_violation(pos, dv) > sc.max_violation) {
    bool converged = false;
    const int cap = std::min(sc.max_passes, kMaxScPasses);
    for (int pass = 1; pass <= cap; ++pass) {
      update_anchors(pos, dv);
      sol = robust_solve(build(true));
      ++out.sc_passes;
      if (sol.status != SolveStatus::kOptimal) {
        out.failure_reason = std::string("plume linearization pass not solved (") + status_name(sol.status) + ")";
        return out;
      }
      pos = node_positions(tr, sol.primal);
      dv = node_impulses(tr, sol.primal);
      const double viol = max_violation(pos, dv);
      const double rel_change = std::abs(sol.objective - prev_obj) / std::max(1.0, std::abs(prev_obj));
      if (refgen_trace_enabled())
        std::fprintf(stderr, "[cp2] pass %d status=%s obj=%.9e viol=%.3e dobj=%.3e\n", pass,
                     status_name(sol.status), sol.objective, viol, rel_change);
      prev_obj = sol.objective;
      if (viol <= sc.max_violation && rel_change <= sc.rel_objective) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      out.failure_reason = "plume linearization did not converge";
      return out;
    }
  }
  const int passes = out.sc_passes;
  const int solves = out.conic_solves;
  out = finalize_transfer(tr, x_i, x_f, sol.primal, n, sol.objective);
  out.sc_passes = passes;
  out.conic_solves = solves;
  return out;
}

NpEvaluation np_objective(double tau1, double tau2, const EclipseProfile& profile, double t,
                          const RefGenParams& p, double n, const SolveSettings& settings,
                          const ScSettings& sc) {
  NpEvaluation ev;
  ev.tau1_s = tau1;
  ev.tau2_s = tau2;
  ev.tau_h1_s = hold_time(profile, t, tau1);
  ev.cp1 = solve_cp1(p.x_i1, p.x_f1, tau1, p, n, settings);
  ev.cp1_converged = ev.cp1.converged;
  ev.tau_h2_s = hold_time(profile, t + ev.tau_h1_s + tau1, tau2);
  ev.cp2 = solve_cp2(p.x_f1, p.x_f2, tau2, p, n, settings, sc);
  ev.cp2_converged = ev.cp2.converged;
  ev.j_s = tau1 + ev.tau_h1_s + tau2 + ev.tau_h2_s +
           p.eps_c * ((ev.cp1_converged ? 0 : 1) + (ev.cp2_converged ? 0 : 1));
  return ev;
}

namespace {

/// Feasible candidates rank strictly above non-converged ones; among equals,
/// lower J wins. Comparisons are strict so index order breaks ties.
bool better_eval(const NpEvaluation& a, const NpEvaluation& b) {
  if (a.feasible() != b.feasible()) return a.feasible();
  return a.j_s < b.j_s;
}

double reflect_into(double val, double lo, double hi, double& vel) {
  for (int guard = 0; guard < 64 && (val < lo || val > hi); ++guard) {
    if (val < lo)
      val = 2 * lo - val;
    else
      val = 2 * hi - val;
    vel = -vel;
  }
  return std::clamp(val, lo, hi);
}

ReferenceTrajectory assemble_reference(const RelativeState& x_start, const NpEvaluation& best,
                                       double t_epoch) {
  ReferenceTrajectory ref;
  ref.kind = "nominal";
  ref.t_epoch_s = t_epoch;
  ref.tau_h1_s = best.tau_h1_s;
  ref.tau_1_s = best.tau1_s;
  ref.tau_h2_s = best.tau_h2_s;
  ref.tau_2_s = best.tau2_s;
  const auto push = [&ref](double tt, const RelativeState& s, const Vec3& dv) {
    ref.t.push_back(tt);
    ref.states.push_back(s);
    ref.impulses.push_back(dv);
  };
  if (ref.tau_h1_s > 0) push(t_epoch, x_start, Vec3::Zero());
  const double t_fly = t_epoch + ref.tau_h1_s;
  ref.fly_begin = static_cast<int>(ref.t.size());
  for (std::size_t j = 0; j < best.cp1.t.size(); ++j)
    push(t_fly + best.cp1.t[j], best.cp1.states[j], best.cp1.impulses[j]);
  ref.fly_end = static_cast<int>(ref.t.size()) - 1;
  const double t_app = t_epoch + ref.tau_h1_s + ref.tau_1_s + ref.tau_h2_s;
  if (ref.tau_h2_s > 0) {
    ref.app_begin = static_cast<int>(ref.t.size());
    push(t_app, best.cp2.states[0], best.cp2.impulses[0]);
  } else {
    // Zero-length hold: the corridor-entry node doubles as the approach
    // departure node and carries the approach's first impulse (the fly-around
    // terminal node never carries one of its own).
    ref.app_begin = ref.fly_end;
    ref.impulses[ref.fly_end] = best.cp2.impulses[0];
  }
  for (std::size_t j = 1; j < best.cp2.t.size(); ++j)
    push(t_app + best.cp2.t[j], best.cp2.states[j], best.cp2.impulses[j]);
  ref.app_end = static_cast<int>(ref.t.size()) - 1;
  return ref;
}

}  // namespace

double ReferenceTrajectory::dv_total_mps() const {
  double total = 0.0;
  for (const Vec3& dv : impulses) total += dv.norm();
  return total;
}

RelativeState ReferenceTrajectory::terminal_state() const {
  if (states.empty()) throw std::logic_error("empty reference trajectory");
  return states.back();
}

GenerationResult generate_reference(const RelativeState& x_start, const RefGenParams& p0,
                                    const EclipseProfile& profile, double t, double n,
                                    const PsoSettings& pso) {
  const auto wall0 = std::chrono::steady_clock::now();
  if (pso.particles < 1 || pso.iterations < 0)
    throw std::invalid_argument("swarm needs at least one particle and non-negative iterations");
  RefGenParams p = p0;
  p.x_i1 = x_start;
  p.validate();

  GenerationResult out;
  Rng rng(pso.seed);
  const double lb = p.tau_lb, ub = p.tau_ub, range = ub - lb;
  const int np = pso.particles;
  std::vector<std::array<double, 2>> x(np), vel(np, {0.0, 0.0}), pb_x(np);
  std::vector<NpEvaluation> evals(np);
  for (int i = 0; i < np; ++i) {
    x[i][0] = lb + rng.uniform01() * range;
    x[i][1] = lb + rng.uniform01() * range;
  }
  const auto evaluate_all = [&]() {
    parallel_for_indexed(np, pso.workers, [&](int i) {
      evals[i] = np_objective(x[i][0], x[i][1], profile, t, p, n, pso.search_solver, pso.search_sc);
    });
    out.np_evaluations += np;
  };

  evaluate_all();
  std::vector<NpEvaluation> pb = evals;
  pb_x = x;
  int gi = 0;
  for (int i = 1; i < np; ++i)
    if (better_eval(pb[i], pb[gi])) gi = i;
  NpEvaluation gb = pb[gi];
  std::array<double, 2> gb_x = pb_x[gi];

  for (int iter = 0; iter < pso.iterations; ++iter) {
    for (int i = 0; i < np; ++i) {
      for (int d = 0; d < 2; ++d) {
        const double r1 = rng.uniform01();
        const double r2 = rng.uniform01();
        vel[i][d] = pso.inertia * vel[i][d] + pso.cognitive * r1 * (pb_x[i][d] - x[i][d]) +
                    pso.social * r2 * (gb_x[d] - x[i][d]);
        x[i][d] = reflect_into(x[i][d] + vel[i][d], lb, ub, vel[i][d]);
      }
    }
    evaluate_all();
    for (int i = 0; i < np; ++i) {
      if (better_eval(evals[i], pb[i])) {
        pb[i] = evals[i];
        pb_x[i] = x[i];
      }
    }
    for (int i = 0; i < np; ++i) {
      if (better_eval(pb[i], gb)) {
        gb = pb[i];
        gb_x = pb_x[i];
      }
    }
  }

  NpEvaluation best = np_objective(gb_x[0], gb_x[1], profile, t, p, n, pso.final_solver, pso.final_sc);
  ++out.np_evaluations;
  if (!best.feasible() && gb.feasible()) best = gb;  // keep the sweep solution on a tolerance corner
  out.best = best;
  const auto finish = [&]() {
    out.generation_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  };
  if (!best.feasible()) {
    out.failure_reason = "no feasible transfer durations found";
    finish();
    return out;
  }
  out.ref = assemble_reference(x_start, best, t);
  const ReferenceCheck check = validate_reference(out.ref, p, n);
  if (!check.ok) {
    out.failure_reason = "assembled reference failed its consistency check: " + check.detail;
    finish();
    return out;
  }
  out.ok = true;
  finish();
  return out;
}

GenerationResult generate_abort_reference(const RelativeState& x_start, const RefGenParams& p,
                                          double t, double n, const SolveSettings& settings) {
  const auto wall0 = std::chrono::steady_clock::now();
  p.validate();
  GenerationResult out;
  const RelativeState target = abort_target(p.r_as, n);
  const double s_cap = p.buffered_a_max() * p.dt_cp1;
  constexpr int kScanCount = 24;
  for (int i = 0; i < kScanCount; ++i) {
    const double tau = p.tau_lb + i * (p.tau_ub - p.tau_lb) / (kScanCount - 1);
    const std::vector<double> grid = node_grid(tau, p.dt_cp1);
    const Transcription tr = build_transcription(x_start, target, grid, n);
    const ConicSolution sol = solve(base_program(tr, s_cap), settings);
    if (sol.status != SolveStatus::kOptimal) continue;
    const TransferSolution ts = finalize_transfer(tr, x_start, target, sol.primal, n, sol.objective);
    ReferenceTrajectory ref;
    ref.kind = "abort";
    ref.t_epoch_s = t;
    ref.tau_1_s = tau;
    for (std::size_t j = 0; j < ts.t.size(); ++j) {
      ref.t.push_back(t + ts.t[j]);
      ref.states.push_back(ts.states[j]);
      ref.impulses.push_back(ts.impulses[j]);
    }
    ref.fly_begin = 0;
    ref.fly_end = ref.node_count() - 1;
    ref.app_begin = ref.fly_end;
    ref.app_end = ref.fly_end;
    const ReferenceCheck check = validate_reference(ref, p, n);
    if (!check.ok) continue;
    out.ok = true;
    out.ref = std::move(ref);
    break;
  }
  if (!out.ok) out.failure_reason = "no feasible retreat duration in the scan";
  out.generation_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

RelativeState abort_target(double r_as, double n) {
  if (!(r_as > 0) || !(n > 0)) throw std::invalid_argument("abort_target: r_as and n must be positive");
  RelativeState s;
  s.r = Vec3(0.0, r_as / 2.0, 0.0);
  s.v = Vec3((n / 2.0) * (r_as / 2.0), 0.0, 0.0);
  return s;
}

std::vector<Vec3> fibonacci_axes(int n_axes) {
  if (n_axes < 1) throw std::invalid_argument("fibonacci_axes: need at least one axis");
  if (n_axes == 1) return {Vec3(0.0, 0.0, 1.0)};
  std::vector<Vec3> axes;
  axes.reserve(n_axes);
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n_axes; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n_axes;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    axes.push_back(Vec3(rho * std::cos(phi), rho * std::sin(phi), z).normalized());
  }
  return axes;
}

ReferenceCheck validate_reference(const ReferenceTrajectory& ref, const RefGenParams& p,
                                  double n) {
  ReferenceCheck out;
  out.ok = true;
  const auto fail = [&out](const std::string& why) {
    out.ok = false;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += why;
  };
  const int nn = ref.node_count();
  if (nn < 2 || static_cast<int>(ref.states.size()) != nn ||
      static_cast<int>(ref.impulses.size()) != nn) {
    fail("node arrays inconsistent");
    return out;
  }
  for (int k = 0; k + 1 < nn; ++k)
    if (!(ref.t[k + 1] > ref.t[k])) {
      fail("time grid is not strictly increasing");
      return out;
    }

  const auto check_segment = [&](int begin, int end) {
    for (int k = begin; k < end; ++k) {
      const double dt = ref.t[k + 1] - ref.t[k];
      const Vec6 pred = cw_step(ref.states[k].vec(), ref.impulses[k], dt, n);
      out.max_dynamics_residual_m = std::max(
          out.max_dynamics_residual_m, (pred.head<3>() - ref.states[k + 1].r).norm());
      out.max_dynamics_residual_mps = std::max(
          out.max_dynamics_residual_mps, (pred.tail<3>() - ref.states[k + 1].v).norm());
    }
  };
  check_segment(ref.fly_begin, ref.fly_end);
  if (ref.app_begin < ref.app_end) check_segment(ref.app_begin, ref.app_end);
  if (out.max_dynamics_residual_m > 1e-9 || out.max_dynamics_residual_mps > 1e-9)
    fail("transfer nodes violate the impulsive dynamics");

  const double cap1 = p.buffered_a_max() * p.dt_cp1 + 1e-9;
  const double cap2 = p.buffered_a_max() * p.dt_cp2 + 1e-9;
  for (int k = ref.fly_begin; k < ref.fly_end; ++k)
    out.max_impulse_cap_violation_mps =
        std::max(out.max_impulse_cap_violation_mps, ref.impulses[k].norm() - cap1);
  for (int k = ref.app_begin; k < ref.app_end; ++k)
    out.max_impulse_cap_violation_mps =
        std::max(out.max_impulse_cap_violation_mps, ref.impulses[k].norm() - cap2);
  if (out.max_impulse_cap_violation_mps > 0) fail("impulse exceeds the buffered per-node cap");

  if (ref.kind == "abort") {
    out.min_fly_radius_m = 0.0;
    return out;
  }

  // Keep-out clearance across the fly-around; the first node is the incoming
  // boundary condition (a regenerated reference may legitimately start closer
  // in), so the requirement applies from the first shaped node onward.
  const double rho = p.buffered_rho_kos();
  out.min_fly_radius_m = kInf;
  for (int k = ref.fly_begin + 1; k <= ref.fly_end; ++k)
    out.min_fly_radius_m = std::min(out.min_fly_radius_m, ref.states[k].r.norm());
  if (out.min_fly_radius_m < rho - 1e-6) fail("fly-around node inside the buffered keep-out sphere");

  const double cos_ac = std::cos(p.buffered_alpha_c());
  for (int k = ref.app_begin; k <= ref.app_end; ++k) {
    const Vec3& r = ref.states[k].r;
    out.max_corridor_violation_m =
        std::max(out.max_corridor_violation_m, r.norm() * cos_ac - p.e_hat.dot(r));
  }
  if (out.max_corridor_violation_m > 1e-6) fail("approach node outside the buffered corridor");

  // Hold intervals station-keep: their endpoint states must coincide.
  const auto states_equal = [](const RelativeState& a, const RelativeState& b) {
    return (a.r - b.r).norm() <= 1e-9 && (a.v - b.v).norm() <= 1e-9;
  };
  if (ref.fly_begin > 0 && !states_equal(ref.states[0], ref.states[ref.fly_begin]))
    fail("pre-transfer hold endpoints differ");
  if (ref.app_begin == ref.fly_end + 1 &&
      !states_equal(ref.states[ref.fly_end], ref.states[ref.app_begin]))
    fail("mid-transfer hold endpoints differ");
  if (ref.fly_begin > 0 && ref.impulses[0].norm() > 1e-12) fail("hold node carries an impulse");
  return out;
}

namespace {

json state_to_json(const RelativeState& s) {
  return json::array({s.r[0], s.r[1], s.r[2], s.v[0], s.v[1], s.v[2]});
}

RelativeState state_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6) throw std::runtime_error("malformed state entry");
  RelativeState s;
  for (int i = 0; i < 3; ++i) s.r[i] = j[i].get<double>();
  for (int i = 0; i < 3; ++i) s.v[i] = j[i + 3].get<double>();
  return s;
}

json params_to_json(const RefGenParams& p) {
  json j;
  j["a_max"] = p.a_max;
  j["rho_kos"] = p.rho_kos;
  j["alpha_p"] = p.alpha_p;
  j["alpha_c"] = p.alpha_c;
  j["e_hat"] = json::array({p.e_hat[0], p.e_hat[1], p.e_hat[2]});
  j["tau_lb"] = p.tau_lb;
  j["tau_ub"] = p.tau_ub;
  j["dt_cp1"] = p.dt_cp1;
  j["dt_cp2"] = p.dt_cp2;
  j["eps_c"] = p.eps_c;
  j["thrust_margin"] = p.thrust_margin;
  j["kos_margin"] = p.kos_margin;
  j["plume_margin"] = p.plume_margin;
  j["corridor_margin"] = p.corridor_margin;
  j["r_as"] = p.r_as;
  j["r_rs"] = p.r_rs;
  j["x_i1"] = state_to_json(p.x_i1);
  j["x_f1"] = state_to_json(p.x_f1);
  j["x_f2"] = state_to_json(p.x_f2);
  return j;
}

RefGenParams params_from_json(const json& j) {
  RefGenParams p;
  p.a_max = j.at("a_max").get<double>();
  p.rho_kos = j.at("rho_kos").get<double>();
  p.alpha_p = j.at("alpha_p").get<double>();
  p.alpha_c = j.at("alpha_c").get<double>();
  for (int i = 0; i < 3; ++i) p.e_hat[i] = j.at("e_hat")[i].get<double>();
  p.tau_lb = j.at("tau_lb").get<double>();
  p.tau_ub = j.at("tau_ub").get<double>();
  p.dt_cp1 = j.at("dt_cp1").get<double>();
  p.dt_cp2 = j.at("dt_cp2").get<double>();
  p.eps_c = j.at("eps_c").get<double>();
  p.thrust_margin = j.at("thrust_margin").get<double>();
  p.kos_margin = j.at("kos_margin").get<double>();
  p.plume_margin = j.at("plume_margin").get<double>();
  p.corridor_margin = j.at("corridor_margin").get<double>();
  p.r_as = j.at("r_as").get<double>();
  p.r_rs = j.at("r_rs").get<double>();
  p.x_i1 = state_from_json(j.at("x_i1"));
  p.x_f1 = state_from_json(j.at("x_f1"));
  p.x_f2 = state_from_json(j.at("x_f2"));
  return p;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace

std::string reference_to_json(const ReferenceTrajectory& ref, const RefGenParams& p, double n) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = ref.kind;
  j["mean_motion_rad_s"] = n;
  j["t_epoch_s"] = ref.t_epoch_s;
  j["tau_h1_s"] = ref.tau_h1_s;
  j["tau_1_s"] = ref.tau_1_s;
  j["tau_h2_s"] = ref.tau_h2_s;
  j["tau_2_s"] = ref.tau_2_s;
  j["fly_begin"] = ref.fly_begin;
  j["fly_end"] = ref.fly_end;
  j["app_begin"] = ref.app_begin;
  j["app_end"] = ref.app_end;
  j["t_s"] = ref.t;
  json states = json::array();
  for (const RelativeState& s : ref.states) states.push_back(state_to_json(s));
  j["states"] = std::move(states);
  json impulses = json::array();
  for (const Vec3& dv : ref.impulses) impulses.push_back(json::array({dv[0], dv[1], dv[2]}));
  j["impulses"] = std::move(impulses);
  const json pj = params_to_json(p);
  j["params"] = pj;
  j["params_fingerprint"] = fingerprint(pj.dump());
  return j.dump(2);
}

ReferenceDocument reference_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("reference document is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw std::runtime_error("unsupported reference document schema version");
    ReferenceDocument doc;
    doc.params = params_from_json(j.at("params"));
    if (j.contains("params_fingerprint") &&
        j.at("params_fingerprint").get<std::string>() != fingerprint(j.at("params").dump()))
      throw std::runtime_error("reference document parameter fingerprint mismatch");
    doc.mean_motion_rad_s = j.at("mean_motion_rad_s").get<double>();
    ReferenceTrajectory& ref = doc.ref;
    ref.kind = j.at("kind").get<std::string>();
    ref.t_epoch_s = j.at("t_epoch_s").get<double>();
    ref.tau_h1_s = j.at("tau_h1_s").get<double>();
    ref.tau_1_s = j.at("tau_1_s").get<double>();
    ref.tau_h2_s = j.at("tau_h2_s").get<double>();
    ref.tau_2_s = j.at("tau_2_s").get<double>();
    ref.fly_begin = j.at("fly_begin").get<int>();
    ref.fly_end = j.at("fly_end").get<int>();
    ref.app_begin = j.at("app_begin").get<int>();
    ref.app_end = j.at("app_end").get<int>();
    ref.t = j.at("t_s").get<std::vector<double>>();
    for (const json& sj : j.at("states")) ref.states.push_back(state_from_json(sj));
    for (const json& ij : j.at("impulses")) {
      if (!ij.is_array() || ij.size() != 3) throw std::runtime_error("malformed impulse entry");
      ref.impulses.push_back(Vec3(ij[0].get<double>(), ij[1].get<double>(), ij[2].get<double>()));
    }
    if (ref.states.size() != ref.t.size() || ref.impulses.size() != ref.t.size())
      throw std::runtime_error("reference document arrays have inconsistent lengths");
    return doc;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("reference document is missing fields: ") + e.what());
  }
}

}  // namespace cortex

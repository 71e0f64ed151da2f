#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <Eigen/Sparse>

namespace cortex::oracle {
namespace {

// Right-hand side of the linearized relative-motion equations about a
// circular orbit, written out long-hand (radial / along-track / cross-track).
Vec6 relative_rhs(const Vec6& x, double n) {
  Vec6 dx;
  dx[0] = x[3];
  dx[1] = x[4];
  dx[2] = x[5];
  dx[3] = 3.0 * n * n * x[0] + 2.0 * n * x[4];
  dx[4] = -2.0 * n * x[3];
  dx[5] = -n * n * x[2];
  return dx;
}

// Transition matrix over dt obtained by integrating the six unit initial
// conditions, so it shares nothing with the closed-form implementation.
Mat6 stm_by_integration(double dt, double n) {
  Mat6 phi;
  const int steps = std::max(16, static_cast<int>(std::ceil(std::abs(dt) * 100.0)));
  for (int c = 0; c < 6; ++c) {
    Vec6 e = Vec6::Zero();
    e[c] = 1.0;
    phi.col(c) = rk4_relative(e, dt, n, steps);
  }
  return phi;
}

struct StmCache {
  double n = 0.0;
  std::map<double, Mat6> by_dt;

  const Mat6& get(double dt) {
    auto it = by_dt.find(dt);
    if (it == by_dt.end()) {
      it = by_dt.emplace(dt, stm_by_integration(dt, n)).first;
    }
    return it->second;
  }
};

double plume_margin(const Vec3& r, const Vec3& w, double cos_alpha) {
  return w.dot(r) - cos_alpha * w.norm() * r.norm();
}

}  // namespace

Vec6 rk4_relative(const Vec6& x0, double dt, double n, int steps) {
  if (steps <= 0) throw std::invalid_argument("rk4_relative: steps must be positive");
  const double h = dt / static_cast<double>(steps);
  Vec6 x = x0;
  for (int i = 0; i < steps; ++i) {
    const Vec6 k1 = relative_rhs(x, n);
    const Vec6 k2 = relative_rhs(x + 0.5 * h * k1, n);
    const Vec6 k3 = relative_rhs(x + 0.5 * h * k2, n);
    const Vec6 k4 = relative_rhs(x + h * k3, n);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

std::pair<Vec3, Vec3> two_impulse(const RelativeState& x0,
                                  const RelativeState& xf, double tau,
                                  double n) {
  const Mat6 phi = stm_by_integration(tau, n);
  const Eigen::Matrix3d phi_rr = phi.block<3, 3>(0, 0);
  const Eigen::Matrix3d phi_rv = phi.block<3, 3>(0, 3);
  const Eigen::Matrix3d phi_vr = phi.block<3, 3>(3, 0);
  const Eigen::Matrix3d phi_vv = phi.block<3, 3>(3, 3);

  const Eigen::FullPivLU<Eigen::Matrix3d> lu(phi_rv);
  if (!lu.isInvertible()) {
    throw std::runtime_error("two_impulse: transfer time is singular for targeting");
  }
  const Vec3 v_depart = lu.solve(xf.r - phi_rr * x0.r);
  const Vec3 dv0 = v_depart - x0.v;
  const Vec3 v_arrive = phi_vr * x0.r + phi_vv * v_depart;
  const Vec3 dvf = xf.v - v_arrive;
  return {dv0, dvf};
}

DenseSolution solve_dense(const DenseProblem& prob,
                          const SolveSettings& settings) {
  const std::size_t num_nodes = prob.t_grid.size();
  if (num_nodes < 2) throw std::invalid_argument("solve_dense: need at least two nodes");
  const std::size_t N = num_nodes - 1;  // impulse/interval count
  for (std::size_t k = 0; k + 1 < num_nodes; ++k) {
    if (!(prob.t_grid[k + 1] > prob.t_grid[k])) {
      throw std::invalid_argument("solve_dense: node times must increase");
    }
  }

  StmCache cache;
  cache.n = prob.n;

  const bool soft = !prob.hard_terminal;
  // Variable layout: X_1..X_N (6 each), U_0..U_{N-1} (3 each),
  // s_0..s_{N-1} (1 each), then eps for the soft-terminal form.
  const std::size_t x_off0 = 0;
  const std::size_t u_off0 = 6 * N;
  const std::size_t s_off0 = 9 * N;
  const std::size_t nv = 10 * N + (soft ? 1 : 0);
  const std::size_t eps_idx = 10 * N;

  auto x_off = [&](std::size_t k) { return x_off0 + 6 * (k - 1); };  // k in 1..N
  auto u_off = [&](std::size_t k) { return u_off0 + 3 * k; };        // k in 0..N-1
  auto s_idx = [&](std::size_t k) { return s_off0 + k; };

  ConicProgram pr;
  pr.num_vars = nv;
  pr.cost = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  for (std::size_t k = 0; k < N; ++k) pr.cost[static_cast<Eigen::Index>(s_idx(k))] = 1.0;
  if (soft) pr.cost[static_cast<Eigen::Index>(eps_idx)] = prob.eps_weight;

  // Equality rows: dynamics links plus (optionally) the pinned terminal state.
  const std::size_t eq_rows = 6 * N + (prob.hard_terminal ? 6 : 0);
  std::vector<Eigen::Triplet<double>> trip;
  pr.eq_rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eq_rows));

  for (std::size_t k = 0; k < N; ++k) {
    const double dt = prob.t_grid[k + 1] - prob.t_grid[k];
    const Mat6& phi = cache.get(dt);
    const Eigen::Matrix<double, 6, 3> phiB = phi.block<6, 3>(0, 3);
    const std::size_t row0 = 6 * k;
    // X_{k+1} - phi X_k - phi B U_k = (k == 0 ? phi x_start : 0)
    for (int i = 0; i < 6; ++i) {
      trip.emplace_back(static_cast<int>(row0) + i,
                        static_cast<int>(x_off(k + 1)) + i, 1.0);
      for (int j = 0; j < 3; ++j) {
        const double c = phiB(i, j);
        if (c != 0.0) {
          trip.emplace_back(static_cast<int>(row0) + i,
                            static_cast<int>(u_off(k)) + j, -c);
        }
      }
      if (k >= 1) {
        for (int j = 0; j < 6; ++j) {
          const double c = phi(i, j);
          if (c != 0.0) {
            trip.emplace_back(static_cast<int>(row0) + i,
                              static_cast<int>(x_off(k)) + j, -c);
          }
        }
      }
    }
    if (k == 0) {
      pr.eq_rhs.segment<6>(0) = phi * prob.x_start.vec();
    }
  }
  if (prob.hard_terminal) {
    const std::size_t row0 = 6 * N;
    for (int i = 0; i < 6; ++i) {
      trip.emplace_back(static_cast<int>(row0) + i,
                        static_cast<int>(x_off(N)) + i, 1.0);
    }
    pr.eq_rhs.segment<6>(static_cast<Eigen::Index>(row0)) = prob.x_goal.vec();
  }
  pr.eq.resize(static_cast<Eigen::Index>(eq_rows), static_cast<Eigen::Index>(nv));
  pr.eq.setFromTriplets(trip.begin(), trip.end());

  // Bounds: slack variables (and eps) live in [0, cap]; states and impulses
  // are free.
  pr.lower.assign(nv, -kInf);
  pr.upper.assign(nv, kInf);
  const bool has_cap = prob.impulse_cap > 0.0 && prob.impulse_cap < kInf;
  for (std::size_t k = 0; k < N; ++k) {
    pr.lower[s_idx(k)] = 0.0;
    if (has_cap) pr.upper[s_idx(k)] = prob.impulse_cap;
  }
  if (soft) pr.lower[eps_idx] = 0.0;

  auto make_base_cones = [&]() -> std::vector<SocConstraint> {
    std::vector<SocConstraint> cones;
    for (std::size_t k = 0; k < N; ++k) {
      SocConstraint sc;
      sc.C.resize(3, static_cast<Eigen::Index>(nv));
      std::vector<Eigen::Triplet<double>> ct;
      for (int j = 0; j < 3; ++j) {
        ct.emplace_back(j, static_cast<int>(u_off(k)) + j, 1.0);
      }
      sc.C.setFromTriplets(ct.begin(), ct.end());
      sc.d = Eigen::Vector3d::Zero();
      sc.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
      sc.p[static_cast<Eigen::Index>(s_idx(k))] = 1.0;
      sc.q = 0.0;
      cones.push_back(std::move(sc));
    }
    if (soft) {
      SocConstraint sc;
      sc.C.resize(6, static_cast<Eigen::Index>(nv));
      std::vector<Eigen::Triplet<double>> ct;
      for (int j = 0; j < 6; ++j) {
        ct.emplace_back(j, static_cast<int>(x_off(N)) + j, 1.0);
      }
      sc.C.setFromTriplets(ct.begin(), ct.end());
      sc.d = -prob.x_goal.vec();
      sc.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
      sc.p[static_cast<Eigen::Index>(eps_idx)] = 1.0;
      sc.q = 0.0;
      cones.push_back(std::move(sc));
    }
    if (prob.corridor) {
      const std::size_t last = prob.hard_terminal ? N - 1 : N;
      for (std::size_t k = 1; k <= last; ++k) {
        SocConstraint sc;
        sc.C.resize(3, static_cast<Eigen::Index>(nv));
        std::vector<Eigen::Triplet<double>> ct;
        for (int j = 0; j < 3; ++j) {
          ct.emplace_back(j, static_cast<int>(x_off(k)) + j, prob.cos_corridor);
        }
        sc.C.setFromTriplets(ct.begin(), ct.end());
        sc.d = Eigen::Vector3d::Zero();
        sc.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
        for (int j = 0; j < 3; ++j) {
          sc.p[static_cast<Eigen::Index>(x_off(k)) + j] = prob.axis[j];
        }
        sc.q = 0.0;
        cones.push_back(std::move(sc));
      }
    }
    return cones;
  };

  // Anchored linear cuts for the (nonconvex) exhaust-cone keep-out,
  // refreshed by re-anchoring at the latest iterate.
  struct PlumeAnchor {
    Vec3 r;
    Vec3 w;
  };
  std::map<std::size_t, PlumeAnchor> anchors;

  auto node_position_of = [&](const Eigen::VectorXd& z, std::size_t k) -> Vec3 {
    if (k == 0) return prob.x_start.r;
    return z.segment<3>(static_cast<Eigen::Index>(x_off(k)));
  };

  auto add_plume_rows = [&](std::vector<SocConstraint>* cones) {
    for (const auto& [k, a] : anchors) {
      const double h_m = plume_margin(a.r, a.w, prob.cos_plume);
      const double wn = std::max(a.w.norm(), 1e-12);
      const double rn = std::max(a.r.norm(), 1e-12);
      const Vec3 g_r = a.w - prob.cos_plume * wn * (a.r / rn);
      const Vec3 g_w = a.r - prob.cos_plume * rn * (a.w / wn);
      // h_m + g_r.(r - r_m) + g_w.(w - w_m) <= 0, as a halfspace row.
      SocConstraint sc;
      sc.C.resize(0, static_cast<Eigen::Index>(nv));
      sc.d = Eigen::VectorXd::Zero(0);
      sc.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
      if (k >= 1) {
        for (int j = 0; j < 3; ++j) {
          sc.p[static_cast<Eigen::Index>(x_off(k)) + j] = -g_r[j];
        }
      }
      for (int j = 0; j < 3; ++j) {
        sc.p[static_cast<Eigen::Index>(u_off(k)) + j] = -g_w[j];
      }
      double q = -h_m + g_r.dot(a.r) + g_w.dot(a.w);
      if (k == 0) q -= g_r.dot(prob.x_start.r);
      sc.q = q;
      cones->push_back(std::move(sc));
    }
  };

  auto run_solver = [&](const ConicProgram& program) -> ConicSolution {
    ConicSolution sol = solve(program, settings);
    if (sol.status == SolveStatus::kMaxIterations) {
      SolveSettings loose = settings;
      loose.feas_tol *= 10.0;
      loose.gap_tol *= 10.0;
      sol = solve(program, loose);
    }
    return sol;
  };

  DenseSolution out;
  ConicSolution sol;
  constexpr int kMaxPlumePasses = 30;
  constexpr double kPlumeFloor = 1e-6;
  double prev_obj = kInf;
  for (int pass = 0; pass < kMaxPlumePasses; ++pass) {
    pr.cones = make_base_cones();
    if (prob.plume) add_plume_rows(&pr.cones);
    sol = run_solver(pr);
    if (sol.status != SolveStatus::kOptimal) {
      out.ok = false;
      return out;
    }
    if (!prob.plume) break;

    // Exact margin check at the new iterate.
    double worst = 0.0;
    std::size_t worst_k = 0;
    for (std::size_t k = 0; k < N; ++k) {
      const Vec3 u = sol.primal.segment<3>(static_cast<Eigen::Index>(u_off(k)));
      if (u.norm() < kPlumeFloor) continue;
      const Vec3 r = node_position_of(sol.primal, k);
      const double m = plume_margin(r, u, prob.cos_plume);
      if (m > worst) {
        worst = m;
        worst_k = k;
      }
    }
    const bool settled = std::abs(sol.objective - prev_obj) <=
                         1e-9 + 1e-6 * std::abs(sol.objective);
    if (worst <= 1e-7 && (pass == 0 || settled)) break;
    prev_obj = sol.objective;

    // Re-anchor every active impulse (0.5 damping on existing anchors);
    // guarantee the worst offender is anchored.
    for (std::size_t k = 0; k < N; ++k) {
      const Vec3 u = sol.primal.segment<3>(static_cast<Eigen::Index>(u_off(k)));
      if (u.norm() < kPlumeFloor && k != worst_k) continue;
      const Vec3 r = node_position_of(sol.primal, k);
      if (plume_margin(r, u, prob.cos_plume) <= -1e-9 &&
          anchors.find(k) == anchors.end()) {
        continue;  // comfortably safe and never anchored: leave it alone
      }
      auto it = anchors.find(k);
      if (it == anchors.end()) {
        anchors[k] = PlumeAnchor{r, u.norm() < kPlumeFloor ? Vec3(Vec3::UnitY() * kPlumeFloor) : u};
      } else {
        it->second.r = 0.5 * (it->second.r + r);
        it->second.w = 0.5 * (it->second.w + u);
      }
    }
  }

  out.ok = true;
  out.objective = sol.objective;
  out.impulses.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    out.impulses[k] = sol.primal.segment<3>(static_cast<Eigen::Index>(u_off(k)));
    out.dv_total += out.impulses[k].norm();
  }
  if (soft) out.eps_term = sol.primal[static_cast<Eigen::Index>(eps_idx)];

  // Rebuild the trajectory with the integrated dynamics so reported states
  // do not depend on the solver's equality residuals.
  out.states.resize(num_nodes);
  out.states[0] = prob.x_start;
  for (std::size_t k = 0; k < N; ++k) {
    Vec6 x = out.states[k].vec();
    x.tail<3>() += out.impulses[k];
    const double dt = prob.t_grid[k + 1] - prob.t_grid[k];
    const int steps = std::max(16, static_cast<int>(std::ceil(dt * 100.0)));
    out.states[k + 1] = RelativeState::from_vec(rk4_relative(x, dt, prob.n, steps));
  }
  return out;
}

double l1_projection_distance(const Eigen::MatrixXd& G, const Vec6& c,
                              const SolveSettings& settings) {
  const Eigen::Index nc = G.cols();
  if (G.rows() != 6) throw std::invalid_argument("l1_projection_distance: G must have 6 rows");
  const std::size_t nv = static_cast<std::size_t>(nc) + 12;  // d, u, v

  ConicProgram pr;
  pr.num_vars = nv;
  pr.cost = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
  for (Eigen::Index i = 0; i < 12; ++i) pr.cost[nc + i] = 1.0;

  // G d - u + v = c
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < nc; ++j) {
      if (G(i, j) != 0.0) trip.emplace_back(i, static_cast<int>(j), G(i, j));
    }
    trip.emplace_back(i, static_cast<int>(nc) + i, -1.0);
    trip.emplace_back(i, static_cast<int>(nc) + 6 + i, 1.0);
  }
  pr.eq.resize(6, static_cast<Eigen::Index>(nv));
  pr.eq.setFromTriplets(trip.begin(), trip.end());
  pr.eq_rhs = c;

  pr.lower.assign(nv, 0.0);
  pr.upper.assign(nv, kInf);
  for (Eigen::Index j = 0; j < nc; ++j) pr.upper[static_cast<std::size_t>(j)] = 1.0;

  ConicSolution sol = solve(pr, settings);
  if (sol.status != SolveStatus::kOptimal) {
    SolveSettings loose = settings;
    loose.feas_tol *= 10.0;
    loose.gap_tol *= 10.0;
    sol = solve(pr, loose);
    if (sol.status != SolveStatus::kOptimal) {
      throw std::runtime_error("l1_projection_distance: solver failed");
    }
  }
  return std::max(0.0, sol.objective);
}

double scan_hold_time(const EclipseProfile& profile, double t, double tau) {
  const auto& ts = profile.time_s;
  const auto& eta = profile.eta;
  if (ts.empty() || ts.size() != eta.size()) {
    throw std::invalid_argument("scan_hold_time: malformed profile");
  }
  if (t < ts.front() - 1e-9) throw std::out_of_range("scan_hold_time: before profile start");
  if (tau < 0.0) throw std::invalid_argument("scan_hold_time: negative window");

  // Enclosing sample: largest i with ts[i] <= t (clamped into range).
  std::size_t i = 0;
  while (i + 1 < ts.size() && ts[i + 1] <= t) ++i;

  if (eta[i] == 0) {
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      if (eta[j] == 1) return ts[j] - t;
    }
    throw EclipseHorizonFault("scan_hold_time: no daylight before profile end");
  }

  // Currently lit: find the next shadow onset sample.
  std::size_t onset = ts.size();
  for (std::size_t j = i + 1; j < ts.size(); ++j) {
    if (eta[j] == 0) {
      onset = j;
      break;
    }
  }
  if (onset == ts.size()) {
    if (ts.back() - t >= tau) return 0.0;
    throw EclipseHorizonFault("scan_hold_time: profile ends while still lit");
  }
  if (ts[onset] - t >= tau) return 0.0;
  for (std::size_t m = onset + 1; m < ts.size(); ++m) {
    if (eta[m] == 1) return ts[m] - t;
  }
  throw EclipseHorizonFault("scan_hold_time: shadow extends past profile end");
}

}  // namespace cortex::oracle

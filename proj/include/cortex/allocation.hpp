#pragma once

#include <string>
#include <vector>

#include "cortex/conic.hpp"
#include "cortex/types.hpp"

namespace cortex {

/// One reaction-control thruster in the body frame: mounting point, thrust
/// direction (the force it applies to the vehicle), and rated thrust.
struct Thruster {
  Vec3 position = Vec3::Zero();   // m, body frame
  Vec3 direction = Vec3::UnitX(); // unit vector, body frame
  double f_max = 1.66;            // N
};

/// A reaction-control thruster bank.
struct ThrusterSet {
  std::vector<Thruster> thrusters;

  int size() const { return static_cast<int>(thrusters.size()); }
  Eigen::VectorXd f_max_vector() const;

  /// Throws std::invalid_argument on an empty set, a non-unit direction
  /// (beyond 1e-9), or a non-positive thrust rating.
  void validate() const;

  /// Parses either a bare JSON array of {position, direction, f_max} objects
  /// or an object wrapping that array under "thrusters". Directions are
  /// normalized on load; a near-zero direction or missing field throws
  /// std::runtime_error with the offending index.
  static ThrusterSet from_json_text(const std::string& text);
  std::string to_json_text() const;

  /// Canonical planar 8-thruster bank used by tests and examples: a square
  /// bus of half-width 0.5 m with two thrusters per force direction
  /// (+x, -x, +y, -y), mounted on the opposing face at lateral offsets
  /// +/-0.4 m. Pure-force commands fire pairs together; differential firing
  /// yields +/-z torque. Out-of-plane force and x/y torque are unreachable.
  static ThrusterSet canonical_planar8(double f_max = 1.66);
};

/// Main-engine parameters for finite-burn realization of impulsive commands.
struct EngineSpec {
  double thrust_n = 22.0;  // N
  double isp_s = 220.0;    // s
  double g0 = 9.80665;     // m/s^2

  void validate() const;  // throws std::invalid_argument on non-positive fields
};

/// 6 x n actuation matrix: rows 1-3 hold each thruster's unit direction,
/// rows 4-6 its torque contribution r x t per newton of thrust.
Eigen::Matrix<double, 6, Eigen::Dynamic> build_actuation_matrix(const ThrusterSet& set);

/// Result of one force/torque-to-duty-cycle allocation.
struct AllocationResult {
  Eigen::VectorXd duty;       // n entries in [0, 1]
  Vec6 residual;              // |A diag(F_max) duty - c| per row, recomputed
  double residual_sum = 0.0;  // weighted sum matching the optimized objective
  double solve_time_s = 0.0;
  int conic_iterations = 0;
};

/// Duty-cycle allocation for a commanded force/torque vector c (N, N m):
/// minimizes the weighted L1 tracking error sum_j w_j e_j subject to
/// |sum_i A_ji F_max_i dt_i - c_j| <= e_j and dt in [0,1]^n, then, among
/// optimal solutions, minimizes total duty sum_i dt_i (so opposing thrusters
/// never fire against each other and outputs are deterministic). Residuals
/// are recomputed from the returned duty cycles, so they measure the true
/// tracking error; the program itself is always feasible. row_weights
/// defaults to all-ones (force and torque rows priced equally); throws
/// std::invalid_argument on dimension mismatch or non-positive weights and
/// std::runtime_error if the interior-point solve fails.
AllocationResult allocate(const Eigen::Matrix<double, 6, Eigen::Dynamic>& A,
                          const Eigen::VectorXd& f_max, const Vec6& c,
                          const Vec6& row_weights = Vec6::Ones(),
                          const SolveSettings& settings = {});

/// Convenience overload building the matrix from the set.
AllocationResult allocate(const ThrusterSet& set, const Vec6& c,
                          const Vec6& row_weights = Vec6::Ones(),
                          const SolveSettings& settings = {});

/// Per-thruster on-times dt_i * t_control (s). Throws std::invalid_argument
/// unless t_control > 0.
std::vector<double> pwm_to_ontime(const Eigen::VectorXd& duty, double t_control);

/// Square-wave on/off signal: on while (t mod t_control) < on_time.
bool thruster_on(double on_time, double t_control, double t);

/// Main-engine burn time realizing an impulsive speed change dv on a vehicle
/// of current mass m0 via the rocket equation: t_on = (m0 - m_f) / mdot with
/// m_f = m0 exp(-dv / (Isp g0)) and mdot = F / (Isp g0).
double main_engine_ontime(double dv_mps, double m0_kg, const EngineSpec& eng);

}  // namespace cortex

#pragma once

#include <Eigen/SparseCore>

#include <iosfwd>
#include <limits>
#include <vector>

#include "cortex/types.hpp"

namespace cortex {

/// One second-order-cone constraint  ||C z + d|| <= p'z + q  on the decision
/// vector z. C with zero rows degenerates to the linear inequality
/// p'z + q >= 0.
struct SocConstraint {
  Eigen::SparseMatrix<double> C;  // (rows x num_vars); rows may be 0
  Eigen::VectorXd d;              // size rows
  Eigen::VectorXd p;              // size num_vars
  double q = 0.0;
};

/// Conic program
///   minimize    cost'z
///   subject to  eq z = eq_rhs
///               ||C_i z + d_i|| <= p_i'z + q_i      for each cone i
///               lower <= z <= upper                 (+-inf entries allowed)
struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd cost;
  Eigen::SparseMatrix<double> eq;  // (rows x num_vars); rows may be 0
  Eigen::VectorXd eq_rhs;
  std::vector<SocConstraint> cones;
  Eigen::VectorXd lower;  // empty = all -inf
  Eigen::VectorXd upper;  // empty = all +inf

  void validate() const;  // throws std::invalid_argument on dimension mismatch
};

enum class SolveStatus { kOptimal, kInfeasible, kMaxIterations };

struct ConicSolution {
  SolveStatus status = SolveStatus::kMaxIterations;
  Eigen::VectorXd primal;  // populated iff status == kOptimal
  double objective = std::numeric_limits<double>::quiet_NaN();
  double solve_time_s = 0.0;
  int iterations = 0;
};

struct SolveSettings {
  double feas_tol = 1e-8;   // primal/dual feasibility (scaled by problem norms)
  double gap_tol = 1e-8;    // relative duality gap
  int max_iterations = 100;
};

/// Interior-point solve (homogeneous self-dual embedding with Nesterov-Todd
/// scaling). Deterministic: identical programs produce identical solutions.
/// Never throws on solvable/unsolvable inputs; dimension errors throw
/// std::invalid_argument via validate().
ConicSolution solve(const ConicProgram& prog, const SolveSettings& settings = {});

/// Self-describing text dump for offline debugging.
void dump_program(const ConicProgram& prog, std::ostream& os);

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace cortex

#pragma once

#include "cortex/types.hpp"

namespace cortex {

/// Closed-form state transition matrix of the linearized relative motion about
/// a circular orbit with mean motion n, over time step dt (seconds). State
/// ordering is [x, y, z, vx, vy, vz] in the RTN frame.
Mat6 cw_stm(double dt, double n);

/// One discrete step of the relative dynamics: an impulsive velocity change dv
/// applied at the current node, then a coast of dt under the linear dynamics.
Vec6 cw_step(const Vec6& x, const Vec3& dv, double dt, double n);

/// Continuous-time system matrix A of the linear relative dynamics (xdot = Ax).
Mat6 cw_system_matrix(double n);

/// Maps the servicer's inertial state to its relative state in the client's
/// RTN frame (radial / transverse / normal), including the frame-rotation term
/// in the velocity. Throws std::invalid_argument if the client state is
/// degenerate (near-zero angular momentum).
RelativeState eci_to_rtn(const InertialState& servicer, const InertialState& client);

/// Exact inverse of eci_to_rtn: reconstructs the servicer's inertial state
/// from a relative state and the client's inertial state.
InertialState rtn_to_eci(const RelativeState& rel, const InertialState& client);

}  // namespace cortex

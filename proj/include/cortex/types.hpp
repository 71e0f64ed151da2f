#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace cortex {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Relative state of the servicer expressed in the client's RTN frame:
/// r = [radial, transverse, normal] position (m), v = velocity (m/s).
struct RelativeState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 vec() const {
    Vec6 x;
    x << r, v;
    return x;
  }
  static RelativeState from_vec(const Vec6& x) {
    RelativeState s;
    s.r = x.head<3>();
    s.v = x.tail<3>();
    return s;
  }
};

/// Inertial (ECI) position/velocity with an epoch in seconds past scenario t0.
struct InertialState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double epoch_s = 0.0;
};

/// Circular reference orbit of the client spacecraft; the linearized relative
/// dynamics are parameterized entirely by its mean motion.
struct TargetOrbit {
  double semi_major_axis_m = 0.0;
  double mean_motion_rad_s = 0.0;

  static TargetOrbit from_semi_major_axis(double a_m);
  void validate() const;  // throws std::invalid_argument on inconsistency
};

}  // namespace cortex

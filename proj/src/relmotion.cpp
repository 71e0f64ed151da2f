#include "cortex/relmotion.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

#include "cortex/constants.hpp"

namespace cortex {

TargetOrbit TargetOrbit::from_semi_major_axis(double a_m) {
  if (!(a_m > 0.0)) throw std::invalid_argument("TargetOrbit: semi-major axis must be positive");
  TargetOrbit orbit;
  orbit.semi_major_axis_m = a_m;
  orbit.mean_motion_rad_s = std::sqrt(kMuEarth / (a_m * a_m * a_m));
  return orbit;
}

void TargetOrbit::validate() const {
  if (!(semi_major_axis_m > 0.0) || !(mean_motion_rad_s > 0.0))
    throw std::invalid_argument("TargetOrbit: non-positive parameters");
  const double n_expected = std::sqrt(kMuEarth / std::pow(semi_major_axis_m, 3));
  if (std::abs(mean_motion_rad_s - n_expected) > 1e-12 * n_expected)
    throw std::invalid_argument("TargetOrbit: mean motion inconsistent with semi-major axis");
}

Mat6 cw_stm(double dt, double n) {
  if (!(n > 0.0)) throw std::invalid_argument("cw_stm: mean motion must be positive");
  const double c = std::cos(n * dt);
  const double s = std::sin(n * dt);
  Mat6 phi = Mat6::Zero();
  // position rows
  phi(0, 0) = 4.0 - 3.0 * c;
  phi(0, 3) = s / n;
  phi(0, 4) = 2.0 * (1.0 - c) / n;
  phi(1, 0) = 6.0 * (s - n * dt);
  phi(1, 1) = 1.0;
  phi(1, 3) = 2.0 * (c - 1.0) / n;
  phi(1, 4) = (4.0 * s - 3.0 * n * dt) / n;
  phi(2, 2) = c;
  phi(2, 5) = s / n;
  // velocity rows
  phi(3, 0) = 3.0 * n * s;
  phi(3, 3) = c;
  phi(3, 4) = 2.0 * s;
  phi(4, 0) = 6.0 * n * (c - 1.0);
  phi(4, 3) = -2.0 * s;
  phi(4, 4) = 4.0 * c - 3.0;
  phi(5, 2) = -n * s;
  phi(5, 5) = c;
  return phi;
}

Vec6 cw_step(const Vec6& x, const Vec3& dv, double dt, double n) {
  Vec6 xp = x;
  xp.tail<3>() += dv;
  return cw_stm(dt, n) * xp;
}

Mat6 cw_system_matrix(double n) {
  Mat6 a = Mat6::Zero();
  a(0, 3) = 1.0;
  a(1, 4) = 1.0;
  a(2, 5) = 1.0;
  a(3, 0) = 3.0 * n * n;
  a(3, 4) = 2.0 * n;
  a(4, 3) = -2.0 * n;
  a(5, 2) = -n * n;
  return a;
}

namespace {

// Rotation from ECI to RTN (rows: radial, transverse, normal) plus the
// frame angular rate about the normal axis.
void rtn_basis(const InertialState& client, Mat3& c_eci2rtn, double& omega_z) {
  const Vec3 h = client.r.cross(client.v);
  const double hn = h.norm();
  const double rn = client.r.norm();
  if (hn < 1e-6 || rn < 1e-6)
    throw std::invalid_argument("rtn frame: degenerate client state (zero radius or angular momentum)");
  const Vec3 er = client.r / rn;
  const Vec3 en = h / hn;
  const Vec3 et = en.cross(er);
  c_eci2rtn.row(0) = er.transpose();
  c_eci2rtn.row(1) = et.transpose();
  c_eci2rtn.row(2) = en.transpose();
  omega_z = hn / (rn * rn);
}

Mat3 omega_matrix(double omega_z) {
  Mat3 w = Mat3::Zero();
  w(0, 1) = omega_z;
  w(1, 0) = -omega_z;
  return w;
}

}  // namespace

RelativeState eci_to_rtn(const InertialState& servicer, const InertialState& client) {
  Mat3 c;
  double omega_z = 0.0;
  rtn_basis(client, c, omega_z);
  const Mat3 w = omega_matrix(omega_z);
  RelativeState rel;
  rel.r = c * (servicer.r - client.r);
  rel.v = w * rel.r + c * (servicer.v - client.v);
  return rel;
}

InertialState rtn_to_eci(const RelativeState& rel, const InertialState& client) {
  Mat3 c;
  double omega_z = 0.0;
  rtn_basis(client, c, omega_z);
  const Mat3 w = omega_matrix(omega_z);
  InertialState servicer;
  servicer.r = client.r + c.transpose() * rel.r;
  servicer.v = client.v + c.transpose() * (rel.v - w * rel.r);
  servicer.epoch_s = client.epoch_s;
  return servicer;
}

}  // namespace cortex

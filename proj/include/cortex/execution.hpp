#pragma once

#include <vector>

#include "cortex/constants.hpp"
#include "cortex/environment.hpp"
#include "cortex/rng.hpp"
#include "cortex/types.hpp"

namespace cortex {

/// Stochastic execution-error model for closed-loop simulation: range-dependent
/// state-knowledge noise, thrust magnitude/pointing errors, and segment-level
/// missed-thrust events.
///
/// The position-noise scale follows the range law
///   sigma_r = (delta_r/3) * (0.02 + 0.98 * ||r|| / r_as)
/// so a full-range state (||r|| = r_as) sees delta_r as its 3-sigma error and
/// the noise floor near contact is 2% of that. sigma_v = 0.001 * sigma_r.
struct ErrorModel {
  double delta_r_m = 0.0;        // position-error scale (3-sigma at r_as)
  double sigma_dv_frac = 0.0;    // fractional impulse-magnitude sigma
  double sigma_beta_rad = 0.0;   // thrust elevation-angle sigma
  double sigma_alpha_rad = 0.0;  // thrust azimuth-angle sigma
  double p_misthrust = 0.0;      // per-segment probability all impulses drop
  double r_as_m = 75.0;          // range normalization of the sigma_r law
  double velocity_error_ratio = 0.001;  // sigma_v / sigma_r

  /// Zero-noise model (deterministic baseline).
  static ErrorModel none();
  /// Campaign "low" level: 0.1 m, 10%, 0.5 deg, 0.5 deg, 5%.
  static ErrorModel low();
  /// Campaign "high" level: 1.0 m, 20%, 1 deg, 1 deg, 10%.
  static ErrorModel high();

  double sigma_r(double range_m) const;
  double sigma_v(double range_m) const { return velocity_error_ratio * sigma_r(range_m); }

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Applies magnitude and pointing errors to one impulse: the vector is
/// decomposed as dv = m * [cos(b)sin(a), cos(b)cos(a), sin(b)] with
/// b = asin(v3/m), a = atan2(v1, v2), the triple (m, b, a) is perturbed by
/// (m*sigma_dv, sigma_beta, sigma_alpha) standard-normal draws, and the vector
/// is reassembled. Always consumes exactly three normal draws so the random
/// stream does not depend on the impulse values; a zero impulse passes
/// through unchanged (its angles are undefined).
Vec3 perturb_impulse(const Vec3& dv, const ErrorModel& err, Rng& rng);

/// Outcome of one guidance-segment forward propagation.
struct SegmentResult {
  RelativeState x_end;          // relative state at the final substep time
  InertialState cso_end;        // client truth advanced to the final time
  bool missed_thrust = false;   // segment-level draw dropped every impulse
  double dv_executed_mps = 0.0; // sum of executed (perturbed) impulse norms
  /// Relative state after each substep's noise/impulse/propagation, one entry
  /// per substep (the last one equals x_end).
  std::vector<RelativeState> substep_states;
};

/// Forward-propagates one guidance segment under the error model.
///
/// t_grid holds the substep boundary times (seconds, monotone); impulses[j]
/// fires at t_grid[j], so len(t_grid) == len(impulses) + 1. Per segment one
/// uniform draw decides missed thrust; per substep the order is three normal
/// draws for position noise, three for velocity noise, then the three inside
/// perturb_impulse — fixed so identical seeds replay bit-exactly.
///
/// Each substep: inject state noise at the current range, apply the perturbed
/// impulse, then advance through the truth model (both spacecraft) and
/// re-project into the client's RTN frame. With cfg.linear_relative_truth the
/// relative state advances by the linear dynamics instead and the client by
/// two-body motion. Truth-propagation faults propagate to the caller.
SegmentResult propagate_segment(const RelativeState& x_k, const std::vector<Vec3>& impulses,
                                const std::vector<double>& t_grid, const InertialState& cso,
                                const ErrorModel& err, const TruthModelConfig& cfg, Rng& rng);

}  // namespace cortex
